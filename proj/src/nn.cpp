#include "spikehar/nn.hpp"

#include <cmath>

#include "spikehar/errors.hpp"

namespace spikehar {

Tensor fan_in_uniform(const Shape& shape, int64_t fan_in, std::mt19937_64& rng) {
  if (fan_in < 1) throw ContractError("fan_in_uniform: fan_in must be >= 1");
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Tensor::uniform(shape, -bound, bound, rng);
}

Conv3dLayer::Conv3dLayer(const std::string& name, int64_t cin, int64_t cout, Triple kernel,
                         Triple stride_, Triple pad_, std::mt19937_64& rng)
    : stride(stride_), pad(pad_) {
  int64_t fan_in = cin * kernel[0] * kernel[1] * kernel[2];
  weight = Parameter(name + ".weight",
                     fan_in_uniform({cout, cin, kernel[0], kernel[1], kernel[2]}, fan_in, rng));
  bias = Parameter(name + ".bias", fan_in_uniform({cout}, fan_in, rng));
}

Var Conv3dLayer::forward(Var x) {
  Tape& t = *x.tape;
  return add_channel_bias(conv3d(x, t.leaf(weight), stride, pad), t.leaf(bias));
}

TransposedConv3dLayer::TransposedConv3dLayer(const std::string& name, int64_t cin, int64_t cout,
                                             Triple kernel, Triple stride_, Triple pad_,
                                             std::mt19937_64& rng)
    : stride(stride_), pad(pad_) {
  int64_t fan_in = cin * kernel[0] * kernel[1] * kernel[2];
  weight = Parameter(name + ".weight",
                     fan_in_uniform({cin, cout, kernel[0], kernel[1], kernel[2]}, fan_in, rng));
  bias = Parameter(name + ".bias", fan_in_uniform({cout}, fan_in, rng));
}

Var TransposedConv3dLayer::forward(Var x) {
  Tape& t = *x.tape;
  return add_channel_bias(transposed_conv3d(x, t.leaf(weight), stride, pad), t.leaf(bias));
}

LinearLayer::LinearLayer(const std::string& name, int64_t din, int64_t dout, std::mt19937_64& rng) {
  weight = Parameter(name + ".weight", fan_in_uniform({dout, din}, din, rng));
  bias = Parameter(name + ".bias", fan_in_uniform({dout}, din, rng));
}

Var LinearLayer::forward(Var x) {
  Tape& t = *x.tape;
  return linear(x, t.leaf(weight), t.leaf(bias));
}

BatchNorm3dLayer::BatchNorm3dLayer(const std::string& name_, int64_t channels) : name(name_) {
  gamma = Parameter(name + ".gamma", Tensor::full({channels}, 1.0));
  beta_shift = Parameter(name + ".beta", Tensor::zeros({channels}));
  stats.running_mean = Tensor::zeros({channels});
  stats.running_var = Tensor::full({channels}, 1.0);
}

Var BatchNorm3dLayer::forward(Var x, BnMode mode) {
  Tape& t = *x.tape;
  return batch_norm(x, t.leaf(gamma), t.leaf(beta_shift), stats, mode, eps, momentum);
}

}  // namespace spikehar
