#include "spikehar/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "spikehar/errors.hpp"

namespace spikehar {

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value) {
  int id = add_node(std::move(value), {}, nullptr);
  return Var{this, id};
}

Var Tape::leaf(Parameter& p) {
  int id = add_node(p.value, {}, nullptr);
  Node& n = nodes_[static_cast<size_t>(id)];
  n.param = &p;
  n.requires_grad = p.trainable;
  return Var{this, id};
}

int Tape::add_node(Tensor value, const std::vector<int>& inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.inputs = inputs;
  for (int in : inputs) {
    if (nodes_[static_cast<size_t>(in)].requires_grad) {
      n.requires_grad = true;
      break;
    }
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor& Tape::grad(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.grad_alloc) {
    n.grad = Tensor::zeros(n.value.shape());
    n.grad_alloc = true;
  }
  return n.grad;
}

void Tape::backward(const Var& loss) {
  if (loss.tape != this) throw ContractError("backward: loss lives on a different tape");
  if (backward_done_) throw ContractError("backward: tape already consumed");
  const Tensor& lv = value(loss.id);
  if (lv.size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " + shape_str(lv.shape()));
  }
  backward_done_ = true;
  backward_visits_ = 0;
  grad(loss.id)[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad || !n.grad_alloc) continue;
    ++backward_visits_;
    if (n.param != nullptr && n.param->trainable) {
      n.param->grad.add_(n.grad);
    }
    if (n.backward) n.backward(*this);
  }
}

namespace {

Tape& same_tape(Var a, Var b, const char* op) {
  if (!a.valid() || !b.valid()) throw ContractError(std::string(op) + ": invalid Var");
  if (a.tape != b.tape) throw ContractError(std::string(op) + ": operands on different tapes");
  return *a.tape;
}

void check_scalar_operand(Var s, const char* op) {
  if (s.value().size() != 1) {
    throw DimensionError(std::string(op) + ": broadcast operand must be a single scalar, got " +
                         shape_str(s.value().shape()));
  }
}

}  // namespace

using detail::make_node;

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b, "add");
  check_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out.add_(b.value());
  int aid = a.id, bid = b.id;
  return make_node(t, std::move(out), {aid, bid}, [aid, bid](int id) {
    return [id, aid, bid](Tape& tp) {
      const Tensor& g = tp.node(id).grad;
      if (tp.requires_grad(aid)) tp.grad(aid).add_(g);
      if (tp.requires_grad(bid)) tp.grad(bid).add_(g);
    };
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b, "sub");
  check_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  int aid = a.id, bid = b.id;
  return make_node(t, std::move(out), {aid, bid}, [aid, bid](int id) {
    return [id, aid, bid](Tape& tp) {
      const Tensor& g = tp.node(id).grad;
      if (tp.requires_grad(aid)) tp.grad(aid).add_(g);
      if (tp.requires_grad(bid)) {
        Tensor& gb = tp.grad(bid);
        for (int64_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    };
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b, "mul");
  check_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  int aid = a.id, bid = b.id;
  return make_node(t, std::move(out), {aid, bid}, [aid, bid](int id) {
    return [id, aid, bid](Tape& tp) {
      const Tensor& g = tp.node(id).grad;
      const Tensor& av = tp.value(aid);
      const Tensor& bv2 = tp.value(bid);
      if (tp.requires_grad(aid)) {
        Tensor& ga = tp.grad(aid);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
      }
      if (tp.requires_grad(bid)) {
        Tensor& gb = tp.grad(bid);
        for (int64_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    };
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double c) {
  Tape& t = *a.tape;
  Tensor out = a.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= c;
  int aid = a.id;
  return make_node(t, std::move(out), {aid}, [aid, c](int id) {
    return [id, aid, c](Tape& tp) {
      const Tensor& g = tp.node(id).grad;
      Tensor& ga = tp.grad(aid);
      for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
    };
  });
}

Var mul_scalar(Var x, Var s) {
  Tape& t = same_tape(x, s, "mul_scalar");
  check_scalar_operand(s, "mul_scalar");
  double sv = s.value()[0];
  Tensor out = x.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= sv;
  int xid = x.id, sid = s.id;
  return make_node(t, std::move(out), {xid, sid}, [xid, sid](int id) {
    return [id, xid, sid](Tape& tp) {
      const Tensor& g = tp.node(id).grad;
      const Tensor& xv = tp.value(xid);
      double sv2 = tp.value(sid)[0];
      if (tp.requires_grad(xid)) {
        Tensor& gx = tp.grad(xid);
        for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] * sv2;
      }
      if (tp.requires_grad(sid)) {
        double acc = 0.0;
        for (int64_t i = 0; i < g.size(); ++i) acc += g[i] * xv[i];
        tp.grad(sid)[0] += acc;
      }
    };
  });
}

Var sub_scalar(Var x, Var s) {
  Tape& t = same_tape(x, s, "sub_scalar");
  check_scalar_operand(s, "sub_scalar");
  double sv = s.value()[0];
  Tensor out = x.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] -= sv;
  int xid = x.id, sid = s.id;
  return make_node(t, std::move(out), {xid, sid}, [xid, sid](int id) {
    return [id, xid, sid](Tape& tp) {
      const Tensor& g = tp.node(id).grad;
      if (tp.requires_grad(xid)) tp.grad(xid).add_(g);
      if (tp.requires_grad(sid)) {
        double acc = 0.0;
        for (int64_t i = 0; i < g.size(); ++i) acc -= g[i];
        tp.grad(sid)[0] += acc;
      }
    };
  });
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_scalar(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double logit_scalar(double p) {
  if (p <= 0.0 || p >= 1.0) throw ContractError("logit: argument must be in (0,1)");
  return std::log(p / (1.0 - p));
}

double softplus_inv_scalar(double y) {
  if (y <= 0.0) throw ContractError("softplus inverse: argument must be > 0");
  if (y > 30.0) return y;
  return std::log(std::expm1(y));
}

Var sigmoid(Var x) {
  Tape& t = *x.tape;
  Tensor out = x.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(out[i]);
  int xid = x.id;
  return make_node(t, std::move(out), {xid}, [xid](int id) {
    return [id, xid](Tape& tp) {
      const Tensor& g = tp.node(id).grad;
      const Tensor& y = tp.value(id);
      Tensor& gx = tp.grad(xid);
      for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
    };
  });
}

Var relu(Var x) {
  Tape& t = *x.tape;
  Tensor out = x.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  int xid = x.id;
  return make_node(t, std::move(out), {xid}, [xid](int id) {
    return [id, xid](Tape& tp) {
      const Tensor& g = tp.node(id).grad;
      const Tensor& xv = tp.value(xid);
      Tensor& gx = tp.grad(xid);
      for (int64_t i = 0; i < g.size(); ++i) {
        if (xv[i] > 0.0) gx[i] += g[i];
      }
    };
  });
}

Var softplus(Var x) {
  Tape& t = *x.tape;
  Tensor out = x.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] = softplus_scalar(out[i]);
  int xid = x.id;
  return make_node(t, std::move(out), {xid}, [xid](int id) {
    return [id, xid](Tape& tp) {
      const Tensor& g = tp.node(id).grad;
      const Tensor& xv = tp.value(xid);
      Tensor& gx = tp.grad(xid);
      for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] * sigmoid_scalar(xv[i]);
    };
  });
}

Var sum(Var x) {
  Tape& t = *x.tape;
  double acc = 0.0;
  const Tensor& xv = x.value();
  for (int64_t i = 0; i < xv.size(); ++i) acc += xv[i];
  int xid = x.id;
  return make_node(t, Tensor::scalar(acc), {xid}, [xid](int id) {
    return [id, xid](Tape& tp) {
      double g = tp.node(id).grad[0];
      Tensor& gx = tp.grad(xid);
      for (int64_t i = 0; i < gx.size(); ++i) gx[i] += g;
    };
  });
}

Var mean(Var x) {
  int64_t n = x.value().size();
  if (n == 0) throw ContractError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var mean_axis(Var x, size_t axis) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  if (axis >= xv.rank()) throw DimensionError("mean_axis: axis out of range");
  const Shape& s = xv.shape();
  int64_t outer = 1, inner = 1;
  for (size_t i = 0; i < axis; ++i) outer *= s[i];
  for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  int64_t len = s[axis];
  if (len == 0) throw ContractError("mean_axis: empty axis");
  Shape out_shape;
  for (size_t i = 0; i < s.size(); ++i) {
    if (i != axis) out_shape.push_back(s[i]);
  }
  Tensor out(out_shape);
  const double inv = 1.0 / static_cast<double>(len);
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t l = 0; l < len; ++l) {
      const double* src = xv.data() + (o * len + l) * inner;
      double* dst = out.data() + o * inner;
      for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= inv;
  int xid = x.id;
  return make_node(t, std::move(out), {xid}, [xid, outer, len, inner, inv](int id) {
    return [id, xid, outer, len, inner, inv](Tape& tp) {
      const Tensor& g = tp.node(id).grad;
      Tensor& gx = tp.grad(xid);
      for (int64_t o = 0; o < outer; ++o) {
        for (int64_t l = 0; l < len; ++l) {
          double* dst = gx.data() + (o * len + l) * inner;
          const double* src = g.data() + o * inner;
          for (int64_t i = 0; i < inner; ++i) dst[i] += src[i] * inv;
        }
      }
    };
  });
}

Var reshape(Var x, Shape shape) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  if (shape_numel(shape) != xv.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(xv.shape()) + " as " + shape_str(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(xv.data(), xv.data() + xv.size()));
  int xid = x.id;
  return make_node(t, std::move(out), {xid}, [xid](int id) {
    return [id, xid](Tape& tp) {
      const Tensor& g = tp.node(id).grad;
      Tensor& gx = tp.grad(xid);
      for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    };
  });
}

Var slice(Var x, size_t axis, int64_t start, int64_t len) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  if (axis >= xv.rank()) throw DimensionError("slice: axis out of range");
  const Shape& s = xv.shape();
  if (start < 0 || len < 1 || start + len > s[axis]) {
    throw DimensionError("slice: [" + std::to_string(start) + "," + std::to_string(start + len) +
                         ") out of bounds for axis length " + std::to_string(s[axis]));
  }
  int64_t outer = 1, inner = 1;
  for (size_t i = 0; i < axis; ++i) outer *= s[i];
  for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  Shape out_shape = s;
  out_shape[axis] = len;
  Tensor out(out_shape);
  const int64_t full = s[axis];
  for (int64_t o = 0; o < outer; ++o) {
    const double* src = xv.data() + (o * full + start) * inner;
    double* dst = out.data() + o * len * inner;
    std::copy(src, src + len * inner, dst);
  }
  int xid = x.id;
  return make_node(t, std::move(out), {xid}, [xid, outer, inner, full, start, len](int id) {
    return [id, xid, outer, inner, full, start, len](Tape& tp) {
      const Tensor& g = tp.node(id).grad;
      Tensor& gx = tp.grad(xid);
      for (int64_t o = 0; o < outer; ++o) {
        const double* src = g.data() + o * len * inner;
        double* dst = gx.data() + (o * full + start) * inner;
        for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
      }
    };
  });
}

Var concat(const std::vector<Var>& parts, size_t axis) {
  if (parts.empty()) throw ContractError("concat: no parts");
  Tape& t = *parts[0].tape;
  const Shape& s0 = parts[0].value().shape();
  if (axis >= s0.size()) throw DimensionError("concat: axis out of range");
  int64_t total = 0;
  for (const Var& p : parts) {
    if (p.tape != &t) throw ContractError("concat: operands on different tapes");
    const Shape& s = p.value().shape();
    if (s.size() != s0.size()) throw DimensionError("concat: rank mismatch");
    for (size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != s0[i]) {
        throw DimensionError("concat: shape mismatch " + shape_str(s0) + " vs " + shape_str(s));
      }
    }
    total += s[axis];
  }
  int64_t outer = 1, inner = 1;
  for (size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  Shape out_shape = s0;
  out_shape[axis] = total;
  Tensor out(out_shape);
  std::vector<int> ids;
  std::vector<int64_t> lens;
  int64_t off = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    int64_t len = pv.shape()[axis];
    for (int64_t o = 0; o < outer; ++o) {
      const double* src = pv.data() + o * len * inner;
      double* dst = out.data() + (o * total + off) * inner;
      std::copy(src, src + len * inner, dst);
    }
    ids.push_back(p.id);
    lens.push_back(len);
    off += len;
  }
  return make_node(t, std::move(out), ids, [ids, lens, outer, inner, total](int id) {
    return [id, ids, lens, outer, inner, total](Tape& tp) {
      const Tensor& g = tp.node(id).grad;
      int64_t off2 = 0;
      for (size_t pi = 0; pi < ids.size(); ++pi) {
        int64_t len = lens[pi];
        if (tp.requires_grad(ids[pi])) {
          Tensor& gp = tp.grad(ids[pi]);
          for (int64_t o = 0; o < outer; ++o) {
            const double* src = g.data() + (o * total + off2) * inner;
            double* dst = gp.data() + o * len * inner;
            for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
          }
        }
        off2 += len;
      }
    };
  });
}

Var mse(Var a, Var b) {
  Tape& t = same_tape(a, b, "mse");
  check_same_shape(a.value(), b.value(), "mse");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  int64_t n = av.size();
  if (n == 0) throw ContractError("mse: empty tensors");
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double d = av[i] - bv[i];
    acc += d * d;
  }
  int aid = a.id, bid = b.id;
  double inv = 1.0 / static_cast<double>(n);
  return make_node(t, Tensor::scalar(acc * inv), {aid, bid}, [aid, bid, inv](int id) {
    return [id, aid, bid, inv](Tape& tp) {
      double g = tp.node(id).grad[0];
      const Tensor& av2 = tp.value(aid);
      const Tensor& bv2 = tp.value(bid);
      if (tp.requires_grad(aid)) {
        Tensor& ga = tp.grad(aid);
        for (int64_t i = 0; i < av2.size(); ++i) ga[i] += g * 2.0 * (av2[i] - bv2[i]) * inv;
      }
      if (tp.requires_grad(bid)) {
        Tensor& gb = tp.grad(bid);
        for (int64_t i = 0; i < av2.size(); ++i) gb[i] -= g * 2.0 * (av2[i] - bv2[i]) * inv;
      }
    };
  });
}

Var softmax_nll(Var counts, const std::vector<int>& labels, const std::vector<double>& class_weights) {
  Tape& t = *counts.tape;
  const Tensor& cv = counts.value();
  if (cv.rank() != 2) throw DimensionError("softmax_nll: counts must be (B,C), got " + shape_str(cv.shape()));
  int64_t batch = cv.dim(0), classes = cv.dim(1);
  if (static_cast<int64_t>(labels.size()) != batch) {
    throw ContractError("softmax_nll: label count " + std::to_string(labels.size()) +
                        " does not match batch " + std::to_string(batch));
  }
  if (static_cast<int64_t>(class_weights.size()) != classes) {
    throw ContractError("softmax_nll: weight count does not match class count");
  }
  for (int y : labels) {
    if (y < 0 || y >= classes) {
      throw ContractError("softmax_nll: class id " + std::to_string(y) + " out of range [0," +
                          std::to_string(classes) + ")");
    }
  }
  // softmax probabilities, needed again in the backward rule
  Tensor probs(cv.shape());
  double loss = 0.0;
  for (int64_t b = 0; b < batch; ++b) {
    const double* row = cv.data() + b * classes;
    double* prow = probs.data() + b * classes;
    double mx = row[0];
    for (int64_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (int64_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
    double logz = std::log(z) + mx;
    for (int64_t c = 0; c < classes; ++c) prow[c] = std::exp(row[c] - logz);
    loss += class_weights[static_cast<size_t>(labels[static_cast<size_t>(b)])] *
            (logz - row[labels[static_cast<size_t>(b)]]);
  }
  double inv = 1.0 / static_cast<double>(batch);
  int cid = counts.id;
  return make_node(t, Tensor::scalar(loss * inv), {cid},
                   [cid, labels, class_weights, probs, batch, classes, inv](int id) {
                     return [id, cid, labels, class_weights, probs, batch, classes, inv](Tape& tp) {
                       double g = tp.node(id).grad[0];
                       Tensor& gc = tp.grad(cid);
                       for (int64_t b = 0; b < batch; ++b) {
                         int y = labels[static_cast<size_t>(b)];
                         double w = class_weights[static_cast<size_t>(y)];
                         const double* prow = probs.data() + b * classes;
                         double* grow = gc.data() + b * classes;
                         for (int64_t c = 0; c < classes; ++c) {
                           double delta = (c == y) ? 1.0 : 0.0;
                           grow[c] += g * w * (prow[c] - delta) * inv;
                         }
                       }
                     };
                   });
}

}  // namespace spikehar
