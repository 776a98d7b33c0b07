#pragma once

#include <string>
#include <vector>

#include "spikehar/autodiff.hpp"

namespace spikehar {

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init.
Tensor fan_in_uniform(const Shape& shape, int64_t fan_in, std::mt19937_64& rng);

struct Conv3dLayer {
  Conv3dLayer(const std::string& name, int64_t cin, int64_t cout, Triple kernel, Triple stride,
              Triple pad, std::mt19937_64& rng);
  Var forward(Var x);
  std::vector<Parameter*> params() { return {&weight, &bias}; }

  Parameter weight;  // (cout, cin, k1, k2, k3)
  Parameter bias;    // (cout)
  Triple stride, pad;
};

struct TransposedConv3dLayer {
  TransposedConv3dLayer(const std::string& name, int64_t cin, int64_t cout, Triple kernel,
                        Triple stride, Triple pad, std::mt19937_64& rng);
  Var forward(Var x);
  std::vector<Parameter*> params() { return {&weight, &bias}; }

  Parameter weight;  // (cin, cout, k1, k2, k3)
  Parameter bias;    // (cout)
  Triple stride, pad;
};

struct LinearLayer {
  LinearLayer(const std::string& name, int64_t din, int64_t dout, std::mt19937_64& rng);
  Var forward(Var x);
  std::vector<Parameter*> params() { return {&weight, &bias}; }

  Parameter weight;  // (dout, din)
  Parameter bias;    // (dout)
};

struct BatchNorm3dLayer {
  BatchNorm3dLayer(const std::string& name, int64_t channels);
  Var forward(Var x, BnMode mode);
  std::vector<Parameter*> params() { return {&gamma, &beta_shift}; }

  std::string name;
  Parameter gamma;       // (C), init 1
  Parameter beta_shift;  // (C), init 0
  BatchNormStats stats;
  double eps = 1e-5;
  double momentum = 0.1;
};

}  // namespace spikehar
