#include "spikehar/lif.hpp"

#include <cmath>

#include "spikehar/errors.hpp"

namespace spikehar {

using detail::make_node;

double surrogate_grad(double u_minus_theta, const SurrogateConfig& cfg) {
  double z = 0.5 * M_PI * cfg.alpha * u_minus_theta;
  return (0.5 * cfg.alpha) / (1.0 + z * z);
}

Tensor surrogate_grad(const Tensor& u_minus_theta, const SurrogateConfig& cfg) {
  Tensor out(u_minus_theta.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = surrogate_grad(u_minus_theta[i], cfg);
  return out;
}

Var spike_threshold(Var u_minus_theta, const SurrogateConfig& cfg, SpikeForward fwd) {
  if (cfg.alpha <= 0.0) throw ContractError("spike_threshold: surrogate slope must be > 0");
  Tape& t = *u_minus_theta.tape;
  const Tensor& u = u_minus_theta.value();
  Tensor out(u.shape());
  if (fwd == SpikeForward::Heaviside) {
    for (int64_t i = 0; i < u.size(); ++i) out[i] = u[i] > 0.0 ? 1.0 : 0.0;
  } else {
    for (int64_t i = 0; i < u.size(); ++i) {
      out[i] = std::atan(0.5 * M_PI * cfg.alpha * u[i]) / M_PI + 0.5;
    }
  }
  int uid = u_minus_theta.id;
  SurrogateConfig sur = cfg;
  return make_node(t, std::move(out), {uid}, [uid, sur](int id) {
    return [id, uid, sur](Tape& tp) {
      const Tensor& g = tp.node(id).grad;
      const Tensor& uv = tp.value(uid);
      Tensor& gu = tp.grad(uid);
      for (int64_t i = 0; i < g.size(); ++i) gu[i] += g[i] * surrogate_grad(uv[i], sur);
    };
  });
}

LifLayer::LifLayer(std::string name, double beta0, double theta0, bool theta_frozen_, SurrogateConfig sur)
    : theta_frozen(theta_frozen_), surrogate(sur), name_(std::move(name)) {
  if (beta0 <= 0.0 || beta0 >= 1.0) throw ContractError("lif layer '" + name_ + "': beta0 must be in (0,1)");
  if (theta0 <= 0.0) throw ContractError("lif layer '" + name_ + "': theta0 must be > 0");
  beta_raw = Parameter(name_ + ".beta_raw", Tensor::scalar(logit_scalar(beta0)), true);
  theta_raw = Parameter(name_ + ".theta_raw", Tensor::scalar(softplus_inv_scalar(theta0)), !theta_frozen);
}

double LifLayer::beta() const { return sigmoid_scalar(beta_raw.value[0]); }

double LifLayer::theta() const { return softplus_scalar(theta_raw.value[0]); }

std::vector<Parameter*> LifLayer::params() { return {&beta_raw, &theta_raw}; }

void LifLayer::bind(Tape& t) {
  if (tape_ == &t) return;
  if (tape_ != nullptr) {
    throw ContractError("lif layer '" + name_ + "': state carried across tapes; call reset_state first");
  }
  tape_ = &t;
  beta_v_ = sigmoid(t.leaf(beta_raw));
  theta_v_ = softplus(t.leaf(theta_raw));
}

void LifLayer::reset_state() {
  tape_ = nullptr;
  has_state_ = false;
  u_ = Var{};
  s_ = Var{};
}

Var LifLayer::step(Var input_current) {
  bind(*input_current.tape);
  Var u;
  if (!has_state_) {
    // From rest: beta*0 + I - theta*0 == I, bit for bit.
    u = input_current;
  } else {
    if (input_current.value().shape() != u_.value().shape()) {
      throw DimensionError("lif layer '" + name_ + "': input shape " +
                           shape_str(input_current.value().shape()) + " does not match state shape " +
                           shape_str(u_.value().shape()));
    }
    u = sub(add(mul_scalar(u_, beta_v_), input_current), mul_scalar(s_, theta_v_));
  }
  if (!u.value().all_finite()) {
    throw NumericError("lif layer '" + name_ + "': non-finite membrane potential");
  }
  Var s = spike_threshold(sub_scalar(u, theta_v_), surrogate, forward_mode);
  u_ = u;
  s_ = s;
  has_state_ = true;
  return s;
}

std::vector<Var> lif_sequence(LifLayer& layer, const std::vector<Var>& currents) {
  if (currents.empty()) throw ContractError("lif_sequence: requires T >= 1 timesteps");
  if (layer.has_state()) {
    throw ContractError("lif_sequence: layer '" + layer.name() + "' not in reset state");
  }
  std::vector<Var> spikes;
  spikes.reserve(currents.size());
  for (const Var& current : currents) spikes.push_back(layer.step(current));
  return spikes;
}

}  // namespace spikehar
