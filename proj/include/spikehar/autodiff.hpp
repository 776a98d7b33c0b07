#pragma once

#include <array>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "spikehar/tensor.hpp"

namespace spikehar {

class Tape;

// Learnable (or frozen) tensor with a gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string name_, Tensor value_, bool trainable_ = true)
      : name(std::move(name_)), value(std::move(value_)), grad(Tensor::zeros(value.shape())), trainable(trainable_) {}

  void zero_grad() { grad.fill(0.0); }
};

// Handle to a node on a Tape. Cheap to copy; owns nothing.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  int64_t size() const { return value().size(); }
};

// Records the forward pass as a list of nodes in creation order (which is a
// topological order by construction) and replays it in reverse to accumulate
// gradients. Leaf nodes bound to a Parameter add their gradient into
// Parameter::grad. One backward pass per tape.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&)>;

  struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily during backward
    bool grad_alloc = false;
    bool requires_grad = false;
    std::vector<int> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  // Leaf with no gradient tracking.
  Var constant(Tensor value);
  // Leaf bound to a parameter; tracked iff the parameter is trainable.
  Var leaf(Parameter& p);

  int add_node(Tensor value, const std::vector<int>& inputs, BackwardFn backward);

  // Reverse-mode accumulation from a scalar loss node. Throws ContractError
  // if the loss is not scalar or backward already ran on this tape.
  void backward(const Var& loss);

  const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  bool requires_grad(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
  // Gradient buffer of a node, allocated (zeros) on first touch.
  Tensor& grad(int id);
  bool has_grad(int id) const { return nodes_[static_cast<size_t>(id)].grad_alloc; }

  size_t num_nodes() const { return nodes_.size(); }
  // Number of nodes whose backward rule fired in the last backward pass.
  int backward_visits() const { return backward_visits_; }
  bool backward_done() const { return backward_done_; }

 private:
  std::vector<Node> nodes_;
  bool backward_done_ = false;
  int backward_visits_ = 0;
};

using Triple = std::array<int64_t, 3>;

namespace detail {

// Creates a node and installs a backward closure that knows the node's id.
// `mk` receives the new node id and returns the backward function.
template <typename MakeBackward>
Var make_node(Tape& t, Tensor value, const std::vector<int>& inputs, MakeBackward&& mk) {
  int id = t.add_node(std::move(value), inputs, nullptr);
  Tape::Node& n = t.node(id);
  if (n.requires_grad) n.backward = mk(id);
  return Var{&t, id};
}

}  // namespace detail

// ---- stable scalar helpers (shared with reparameterizations) -----------

double sigmoid_scalar(double x);
double softplus_scalar(double x);
double logit_scalar(double p);         // inverse sigmoid, p in (0,1)
double softplus_inv_scalar(double y);  // inverse softplus, y > 0

// ---- elementwise / reduction / shape ops ------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double c);

// Broadcast a 1-element Var over x.
Var mul_scalar(Var x, Var s);
Var sub_scalar(Var x, Var s);

Var sigmoid(Var x);
Var relu(Var x);
Var softplus(Var x);

Var sum(Var x);
Var mean(Var x);
Var mean_axis(Var x, size_t axis);

Var reshape(Var x, Shape shape);
Var slice(Var x, size_t axis, int64_t start, int64_t len);
Var concat(const std::vector<Var>& parts, size_t axis);

// ---- dense layers ------------------------------------------------------

// input (B,d), weight (out,d), bias (out) -> (B,out)
Var linear(Var input, Var weight, Var bias);

// input (B,C,D1,D2,D3), kernel (Cout,C,k1,k2,k3) -> (B,Cout,O1,O2,O3)
Var conv3d(Var input, Var kernel, Triple stride, Triple zero_pad);

// input (B,Cin,D1,D2,D3), kernel (Cin,Cout,k1,k2,k3) -> (B,Cout,E1,E2,E3)
// Exact adjoint of conv3d with the same stride/pad.
Var transposed_conv3d(Var input, Var kernel, Triple stride, Triple zero_pad);

// Adds a per-channel bias (C) to (B,C,D1,D2,D3).
Var add_channel_bias(Var x, Var bias);

Var avg_pool3d(Var input, Triple kernel, Triple stride);

struct BatchNormStats {
  Tensor running_mean;
  Tensor running_var;
};

enum class BnMode { Train, Eval };

// Normalizes per channel over batch and spatial axes. Train mode uses batch
// statistics (biased variance) and updates `stats` in place by EMA; eval mode
// uses `stats`. gamma/beta_shift have shape (C).
Var batch_norm(Var x, Var gamma, Var beta_shift, BatchNormStats& stats, BnMode mode,
               double eps = 1e-5, double momentum = 0.1);

// ---- losses ------------------------------------------------------------

Var mse(Var a, Var b);

// counts (B,C); per-sample loss is -w[y]*log(softmax(counts)[y]); returns the
// batch mean.
Var softmax_nll(Var counts, const std::vector<int>& labels, const std::vector<double>& class_weights);

// ---- plain-tensor kernels (shared with backward rules and oracles) ------

Tensor conv3d_raw(const Tensor& x, const Tensor& k, Triple stride, Triple pad);
Tensor conv3d_input_grad_raw(const Tensor& gout, const Tensor& k, Triple stride, Triple pad,
                             const Shape& input_shape);
Tensor conv3d_kernel_grad_raw(const Tensor& x, const Tensor& gout, Triple stride, Triple pad,
                              const Shape& kernel_shape);

// ---- gradient checking ---------------------------------------------------

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
  bool finite = true;
  std::string worst;  // "input i, element j" of the worst deviation
};

// f builds a scalar Var from leaves bound to `inputs`. Compares the tape
// gradient against central differences; inputs listed in `exclude` are
// perturbed in the numeric pass but their gradients are not compared (used
// for surrogate-gradient paths). Relative error uses max(1,|a|,|n|) as the
// denominator.
GradCheckReport grad_check(const std::function<Var(Tape&, std::vector<Var>&)>& f,
                           const std::vector<Tensor>& inputs, double step, double tol,
                           const std::set<size_t>& exclude = {});

}  // namespace spikehar
