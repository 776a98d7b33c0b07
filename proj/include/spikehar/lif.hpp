#pragma once

#include <string>
#include <vector>

#include "spikehar/autodiff.hpp"

namespace spikehar {

struct SurrogateConfig {
  double alpha = 2.0;  // surrogate sharpness, > 0
};

// dS/dU of the arctangent surrogate at u = U - theta:
//   (alpha/2) / (1 + ((pi/2)*alpha*u)^2)
// Strictly positive, even in u, maximum alpha/2 at u = 0.
double surrogate_grad(double u_minus_theta, const SurrogateConfig& cfg);
Tensor surrogate_grad(const Tensor& u_minus_theta, const SurrogateConfig& cfg);

enum class SpikeForward {
  Heaviside,   // exact binary spikes; the surrogate appears only in gradients
  SmoothAtan,  // surrogate antiderivative as forward; for finite-difference checks
};

// Spike generation node. Forward emits 1 where u_minus_theta > 0 (strict),
// else 0; backward multiplies by the arctangent surrogate.
Var spike_threshold(Var u_minus_theta, const SurrogateConfig& cfg,
                    SpikeForward fwd = SpikeForward::Heaviside);

// Leaky integrate-and-fire layer with soft reset:
//   U[t] = beta*U[t-1] + I[t] - theta*S[t-1]
//   S[t] = 1 where U[t] > theta (strict), else 0
// beta = sigmoid(beta_raw) stays in (0,1); theta = softplus(theta_raw) stays
// positive. State (U, S) lives on the current tape so gradients flow through
// the full unroll.
class LifLayer {
 public:
  LifLayer(std::string name, double beta0, double theta0, bool theta_frozen = false,
           SurrogateConfig sur = {});

  Var step(Var input_current);
  void reset_state();

  double beta() const;
  double theta() const;
  const std::string& name() const { return name_; }
  bool has_state() const { return has_state_; }
  Var membrane() const { return u_; }
  Var last_spikes() const { return s_; }

  std::vector<Parameter*> params();

  Parameter beta_raw;
  Parameter theta_raw;
  bool theta_frozen;
  SurrogateConfig surrogate;
  SpikeForward forward_mode = SpikeForward::Heaviside;

 private:
  void bind(Tape& t);

  std::string name_;
  Tape* tape_ = nullptr;
  Var beta_v_, theta_v_;
  Var u_, s_;
  bool has_state_ = false;
};

// T steps from rest; returns the per-step spike tensors. The layer must be in
// the reset state on entry; T = 0 is a contract error.
std::vector<Var> lif_sequence(LifLayer& layer, const std::vector<Var>& currents);

}  // namespace spikehar
