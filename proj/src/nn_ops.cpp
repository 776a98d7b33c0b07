#include <algorithm>
#include <cmath>

#include "spikehar/autodiff.hpp"
#include "spikehar/errors.hpp"

namespace spikehar {

using detail::make_node;

namespace {

struct ConvGeom {
  int64_t batch, cin, cout;
  Triple in, k, out, stride, pad;
};

int64_t conv_out_dim(int64_t d, int64_t k, int64_t s, int64_t p) {
  return (d + 2 * p - k) / s + 1;
}

ConvGeom conv_geometry(const Shape& xs, const Shape& ks, Triple stride, Triple pad, const char* op) {
  if (xs.size() != 5 || ks.size() != 5) {
    throw DimensionError(std::string(op) + ": expected rank-5 input and kernel, got " + shape_str(xs) +
                         " and " + shape_str(ks));
  }
  if (xs[1] != ks[1]) {
    throw DimensionError(std::string(op) + ": input channels do not match kernel: input " + shape_str(xs) +
                         ", kernel " + shape_str(ks));
  }
  ConvGeom g;
  g.batch = xs[0];
  g.cin = xs[1];
  g.cout = ks[0];
  g.in = {xs[2], xs[3], xs[4]};
  g.k = {ks[2], ks[3], ks[4]};
  g.stride = stride;
  g.pad = pad;
  for (int i = 0; i < 3; ++i) {
    if (stride[static_cast<size_t>(i)] < 1) throw ContractError(std::string(op) + ": stride must be >= 1");
    if (pad[static_cast<size_t>(i)] < 0) throw ContractError(std::string(op) + ": negative padding");
    int64_t padded = g.in[static_cast<size_t>(i)] + 2 * pad[static_cast<size_t>(i)];
    if (padded < g.k[static_cast<size_t>(i)]) {
      throw DimensionError(std::string(op) + ": padded spatial dim " + std::to_string(padded) +
                           " smaller than kernel dim " + std::to_string(g.k[static_cast<size_t>(i)]));
    }
    g.out[static_cast<size_t>(i)] = conv_out_dim(g.in[static_cast<size_t>(i)], g.k[static_cast<size_t>(i)],
                                                 stride[static_cast<size_t>(i)], pad[static_cast<size_t>(i)]);
  }
  return g;
}

}  // namespace

namespace {

bool is_rowwise(const ConvGeom& g) {
  return g.k[0] == 1 && g.k[1] == 1 && g.stride[0] == 1 && g.stride[1] == 1 && g.stride[2] == 1 &&
         g.pad[0] == 0 && g.pad[1] == 0;
}

}  // namespace

Tensor conv3d_raw(const Tensor& x, const Tensor& k, Triple stride, Triple pad) {
  ConvGeom g = conv_geometry(x.shape(), k.shape(), stride, pad, "conv3d");
  Tensor out({g.batch, g.cout, g.out[0], g.out[1], g.out[2]});

  if (is_rowwise(g)) {
    // 1x1xK kernel, unit stride: independent 1-D convolutions along the last
    // axis; this is the hot path of the encoder/classifier stacks
    const int64_t rows = g.in[0] * g.in[1];
    const int64_t w_in = g.in[2], w_out = g.out[2], p = g.pad[2], klen = g.k[2];
    for (int64_t b = 0; b < g.batch; ++b) {
      for (int64_t co = 0; co < g.cout; ++co) {
        double* obase = out.data() + (b * g.cout + co) * rows * w_out;
        for (int64_t ci = 0; ci < g.cin; ++ci) {
          const double* xbase = x.data() + (b * g.cin + ci) * rows * w_in;
          const double* kp = k.data() + (co * g.cin + ci) * klen;
          for (int64_t row = 0; row < rows; ++row) {
            const double* xr = xbase + row * w_in;
            double* orow = obase + row * w_out;
            for (int64_t d = 0; d < klen; ++d) {
              double kv = kp[d];
              if (kv == 0.0) continue;
              int64_t shift = d - p;
              int64_t lo = std::max<int64_t>(0, -shift);
              int64_t hi = std::min<int64_t>(w_out, w_in - shift);
              for (int64_t o = lo; o < hi; ++o) orow[o] += kv * xr[o + shift];
            }
          }
        }
      }
    }
    return out;
  }

  const int64_t in12 = g.in[1] * g.in[2];
  const int64_t in012 = g.in[0] * in12;
  const int64_t k12 = g.k[1] * g.k[2];
  const int64_t k012 = g.k[0] * k12;
  const int64_t out12 = g.out[1] * g.out[2];
  const int64_t out012 = g.out[0] * out12;

  for (int64_t b = 0; b < g.batch; ++b) {
    for (int64_t co = 0; co < g.cout; ++co) {
      double* op = out.data() + (b * g.cout + co) * out012;
      for (int64_t o1 = 0; o1 < g.out[0]; ++o1) {
        int64_t base1 = o1 * g.stride[0] - g.pad[0];
        for (int64_t o2 = 0; o2 < g.out[1]; ++o2) {
          int64_t base2 = o2 * g.stride[1] - g.pad[1];
          for (int64_t o3 = 0; o3 < g.out[2]; ++o3) {
            int64_t base3 = o3 * g.stride[2] - g.pad[2];
            double acc = 0.0;
            for (int64_t ci = 0; ci < g.cin; ++ci) {
              const double* xp = x.data() + (b * g.cin + ci) * in012;
              const double* kp = k.data() + (co * g.cin + ci) * k012;
              for (int64_t d1 = 0; d1 < g.k[0]; ++d1) {
                int64_t i1 = base1 + d1;
                if (i1 < 0 || i1 >= g.in[0]) continue;
                for (int64_t d2 = 0; d2 < g.k[1]; ++d2) {
                  int64_t i2 = base2 + d2;
                  if (i2 < 0 || i2 >= g.in[1]) continue;
                  const double* xrow = xp + i1 * in12 + i2 * g.in[2];
                  const double* krow = kp + d1 * k12 + d2 * g.k[2];
                  for (int64_t d3 = 0; d3 < g.k[2]; ++d3) {
                    int64_t i3 = base3 + d3;
                    if (i3 < 0 || i3 >= g.in[2]) continue;
                    acc += krow[d3] * xrow[i3];
                  }
                }
              }
            }
            op[o1 * out12 + o2 * g.out[2] + o3] = acc;
          }
        }
      }
    }
  }
  return out;
}

Tensor conv3d_input_grad_raw(const Tensor& gout, const Tensor& k, Triple stride, Triple pad,
                             const Shape& input_shape) {
  ConvGeom g = conv_geometry(input_shape, k.shape(), stride, pad, "conv3d");
  const Shape& gs = gout.shape();
  Shape want{g.batch, g.cout, g.out[0], g.out[1], g.out[2]};
  if (gs != want) {
    throw DimensionError("conv3d adjoint: expected " + shape_str(want) + ", got " + shape_str(gs));
  }
  Tensor gx(input_shape);

  if (is_rowwise(g)) {
    const int64_t rows = g.in[0] * g.in[1];
    const int64_t w_in = g.in[2], w_out = g.out[2], p = g.pad[2], klen = g.k[2];
    for (int64_t b = 0; b < g.batch; ++b) {
      for (int64_t ci = 0; ci < g.cin; ++ci) {
        double* gbase = gx.data() + (b * g.cin + ci) * rows * w_in;
        for (int64_t co = 0; co < g.cout; ++co) {
          const double* ybase = gout.data() + (b * g.cout + co) * rows * w_out;
          const double* kp = k.data() + (co * g.cin + ci) * klen;
          for (int64_t row = 0; row < rows; ++row) {
            const double* yr = ybase + row * w_out;
            double* grow = gbase + row * w_in;
            for (int64_t d = 0; d < klen; ++d) {
              double kv = kp[d];
              if (kv == 0.0) continue;
              int64_t shift = d - p;  // o = i - shift
              int64_t lo = std::max<int64_t>(0, shift);
              int64_t hi = std::min<int64_t>(w_in, w_out + shift);
              for (int64_t i = lo; i < hi; ++i) grow[i] += kv * yr[i - shift];
            }
          }
        }
      }
    }
    return gx;
  }

  const int64_t in12 = g.in[1] * g.in[2];
  const int64_t in012 = g.in[0] * in12;
  const int64_t k12 = g.k[1] * g.k[2];
  const int64_t k012 = g.k[0] * k12;
  const int64_t out12 = g.out[1] * g.out[2];
  const int64_t out012 = g.out[0] * out12;

  for (int64_t b = 0; b < g.batch; ++b) {
    for (int64_t ci = 0; ci < g.cin; ++ci) {
      double* gp = gx.data() + (b * g.cin + ci) * in012;
      for (int64_t i1 = 0; i1 < g.in[0]; ++i1) {
        for (int64_t i2 = 0; i2 < g.in[1]; ++i2) {
          for (int64_t i3 = 0; i3 < g.in[2]; ++i3) {
            double acc = 0.0;
            for (int64_t co = 0; co < g.cout; ++co) {
              const double* yp = gout.data() + (b * g.cout + co) * out012;
              const double* kp = k.data() + (co * g.cin + ci) * k012;
              for (int64_t d1 = 0; d1 < g.k[0]; ++d1) {
                int64_t n1 = i1 + g.pad[0] - d1;
                if (n1 < 0 || n1 % g.stride[0] != 0) continue;
                int64_t o1 = n1 / g.stride[0];
                if (o1 >= g.out[0]) continue;
                for (int64_t d2 = 0; d2 < g.k[1]; ++d2) {
                  int64_t n2 = i2 + g.pad[1] - d2;
                  if (n2 < 0 || n2 % g.stride[1] != 0) continue;
                  int64_t o2 = n2 / g.stride[1];
                  if (o2 >= g.out[1]) continue;
                  for (int64_t d3 = 0; d3 < g.k[2]; ++d3) {
                    int64_t n3 = i3 + g.pad[2] - d3;
                    if (n3 < 0 || n3 % g.stride[2] != 0) continue;
                    int64_t o3 = n3 / g.stride[2];
                    if (o3 >= g.out[2]) continue;
                    acc += kp[d1 * k12 + d2 * g.k[2] + d3] * yp[o1 * out12 + o2 * g.out[2] + o3];
                  }
                }
              }
            }
            gp[i1 * in12 + i2 * g.in[2] + i3] = acc;
          }
        }
      }
    }
  }
  return gx;
}

Tensor conv3d_kernel_grad_raw(const Tensor& x, const Tensor& gout, Triple stride, Triple pad,
                              const Shape& kernel_shape) {
  ConvGeom g = conv_geometry(x.shape(), kernel_shape, stride, pad, "conv3d");
  Tensor gk(kernel_shape);

  if (is_rowwise(g)) {
    const int64_t rows = g.in[0] * g.in[1];
    const int64_t w_in = g.in[2], w_out = g.out[2], p = g.pad[2], klen = g.k[2];
    for (int64_t co = 0; co < g.cout; ++co) {
      for (int64_t ci = 0; ci < g.cin; ++ci) {
        double* kp = gk.data() + (co * g.cin + ci) * klen;
        for (int64_t b = 0; b < g.batch; ++b) {
          const double* ybase = gout.data() + (b * g.cout + co) * rows * w_out;
          const double* xbase = x.data() + (b * g.cin + ci) * rows * w_in;
          for (int64_t row = 0; row < rows; ++row) {
            const double* yr = ybase + row * w_out;
            const double* xr = xbase + row * w_in;
            for (int64_t d = 0; d < klen; ++d) {
              int64_t shift = d - p;
              int64_t lo = std::max<int64_t>(0, -shift);
              int64_t hi = std::min<int64_t>(w_out, w_in - shift);
              double acc = 0.0;
              for (int64_t o = lo; o < hi; ++o) acc += yr[o] * xr[o + shift];
              kp[d] += acc;
            }
          }
        }
      }
    }
    return gk;
  }

  const int64_t in12 = g.in[1] * g.in[2];
  const int64_t in012 = g.in[0] * in12;
  const int64_t k12 = g.k[1] * g.k[2];
  const int64_t k012 = g.k[0] * k12;
  const int64_t out12 = g.out[1] * g.out[2];
  const int64_t out012 = g.out[0] * out12;

  for (int64_t co = 0; co < g.cout; ++co) {
    for (int64_t ci = 0; ci < g.cin; ++ci) {
      double* kp = gk.data() + (co * g.cin + ci) * k012;
      for (int64_t d1 = 0; d1 < g.k[0]; ++d1) {
        for (int64_t d2 = 0; d2 < g.k[1]; ++d2) {
          for (int64_t d3 = 0; d3 < g.k[2]; ++d3) {
            double acc = 0.0;
            for (int64_t b = 0; b < g.batch; ++b) {
              const double* yp = gout.data() + (b * g.cout + co) * out012;
              const double* xp = x.data() + (b * g.cin + ci) * in012;
              for (int64_t o1 = 0; o1 < g.out[0]; ++o1) {
                int64_t i1 = o1 * g.stride[0] - g.pad[0] + d1;
                if (i1 < 0 || i1 >= g.in[0]) continue;
                for (int64_t o2 = 0; o2 < g.out[1]; ++o2) {
                  int64_t i2 = o2 * g.stride[1] - g.pad[1] + d2;
                  if (i2 < 0 || i2 >= g.in[1]) continue;
                  const double* yrow = yp + o1 * out12 + o2 * g.out[2];
                  const double* xrow = xp + i1 * in12 + i2 * g.in[2];
                  for (int64_t o3 = 0; o3 < g.out[2]; ++o3) {
                    int64_t i3 = o3 * g.stride[2] - g.pad[2] + d3;
                    if (i3 < 0 || i3 >= g.in[2]) continue;
                    acc += yrow[o3] * xrow[i3];
                  }
                }
              }
            }
            kp[d1 * k12 + d2 * g.k[2] + d3] = acc;
          }
        }
      }
    }
  }
  return gk;
}

Var conv3d(Var input, Var kernel, Triple stride, Triple zero_pad) {
  Tape& t = *input.tape;
  if (kernel.tape != &t) throw ContractError("conv3d: operands on different tapes");
  Tensor out = conv3d_raw(input.value(), kernel.value(), stride, zero_pad);
  int xid = input.id, kid = kernel.id;
  Shape xshape = input.value().shape();
  Shape kshape = kernel.value().shape();
  return make_node(t, std::move(out), {xid, kid}, [=](int id) {
    return [=](Tape& tp) {
      const Tensor& g = tp.node(id).grad;
      if (tp.requires_grad(xid)) {
        tp.grad(xid).add_(conv3d_input_grad_raw(g, tp.value(kid), stride, zero_pad, xshape));
      }
      if (tp.requires_grad(kid)) {
        tp.grad(kid).add_(conv3d_kernel_grad_raw(tp.value(xid), g, stride, zero_pad, kshape));
      }
    };
  });
}

Var transposed_conv3d(Var input, Var kernel, Triple stride, Triple zero_pad) {
  Tape& t = *input.tape;
  if (kernel.tape != &t) throw ContractError("transposed_conv3d: operands on different tapes");
  const Tensor& y = input.value();
  const Tensor& k = kernel.value();
  if (y.rank() != 5 || k.rank() != 5) {
    throw DimensionError("transposed_conv3d: expected rank-5 input and kernel, got " +
                         shape_str(y.shape()) + " and " + shape_str(k.shape()));
  }
  if (y.dim(1) != k.dim(0)) {
    throw DimensionError("transposed_conv3d: input channels do not match kernel: input " +
                         shape_str(y.shape()) + ", kernel " + shape_str(k.shape()));
  }
  // Output spatial size makes the op the exact adjoint of conv3d(out -> in).
  Shape out_shape{y.dim(0), k.dim(1), 0, 0, 0};
  for (int i = 0; i < 3; ++i) {
    int64_t s = stride[static_cast<size_t>(i)];
    int64_t p = zero_pad[static_cast<size_t>(i)];
    int64_t kd = k.dim(static_cast<size_t>(2 + i));
    if (s < 1) throw ContractError("transposed_conv3d: stride must be >= 1");
    int64_t od = (y.dim(static_cast<size_t>(2 + i)) - 1) * s - 2 * p + kd;
    if (od < 1) {
      throw DimensionError("transposed_conv3d: non-positive output dim " + std::to_string(od));
    }
    out_shape[static_cast<size_t>(2 + i)] = od;
  }
  Tensor out = conv3d_input_grad_raw(y, k, stride, zero_pad, out_shape);
  int yid = input.id, kid = kernel.id;
  Shape kshape = k.shape();
  return make_node(t, std::move(out), {yid, kid}, [=](int id) {
    return [=](Tape& tp) {
      const Tensor& g = tp.node(id).grad;
      if (tp.requires_grad(yid)) {
        tp.grad(yid).add_(conv3d_raw(g, tp.value(kid), stride, zero_pad));
      }
      if (tp.requires_grad(kid)) {
        // d/dk of the adjoint: same pairing as the kernel grad of conv3d with
        // the roles of activation and cotangent swapped.
        tp.grad(kid).add_(conv3d_kernel_grad_raw(g, tp.value(yid), stride, zero_pad, kshape));
      }
    };
  });
}

Var add_channel_bias(Var x, Var bias) {
  Tape& t = *x.tape;
  if (bias.tape != &t) throw ContractError("add_channel_bias: operands on different tapes");
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (xv.rank() < 2 || bv.rank() != 1 || bv.dim(0) != xv.dim(1)) {
    throw DimensionError("add_channel_bias: bias " + shape_str(bv.shape()) +
                         " does not match channel axis of " + shape_str(xv.shape()));
  }
  int64_t batch = xv.dim(0), channels = xv.dim(1);
  int64_t inner = xv.size() / (batch * channels);
  Tensor out = xv;
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t c = 0; c < channels; ++c) {
      double* p = out.data() + (b * channels + c) * inner;
      double bvc = bv[c];
      for (int64_t i = 0; i < inner; ++i) p[i] += bvc;
    }
  }
  int xid = x.id, bid = bias.id;
  return make_node(t, std::move(out), {xid, bid}, [xid, bid, batch, channels, inner](int id) {
    return [id, xid, bid, batch, channels, inner](Tape& tp) {
      const Tensor& g = tp.node(id).grad;
      if (tp.requires_grad(xid)) tp.grad(xid).add_(g);
      if (tp.requires_grad(bid)) {
        Tensor& gb = tp.grad(bid);
        for (int64_t b = 0; b < batch; ++b) {
          for (int64_t c = 0; c < channels; ++c) {
            const double* p = g.data() + (b * channels + c) * inner;
            double acc = 0.0;
            for (int64_t i = 0; i < inner; ++i) acc += p[i];
            gb[c] += acc;
          }
        }
      }
    };
  });
}

Var avg_pool3d(Var input, Triple kernel, Triple stride) {
  Tape& t = *input.tape;
  const Tensor& xv = input.value();
  if (xv.rank() != 5) {
    throw DimensionError("avg_pool3d: expected rank-5 input, got " + shape_str(xv.shape()));
  }
  Triple in{xv.dim(2), xv.dim(3), xv.dim(4)};
  Triple out_dims;
  for (int i = 0; i < 3; ++i) {
    size_t si = static_cast<size_t>(i);
    if (kernel[si] < 1 || stride[si] < 1) throw ContractError("avg_pool3d: kernel and stride must be >= 1");
    if (in[si] < kernel[si]) {
      throw DimensionError("avg_pool3d: kernel dim " + std::to_string(kernel[si]) +
                           " larger than input dim " + std::to_string(in[si]));
    }
    out_dims[si] = conv_out_dim(in[si], kernel[si], stride[si], 0);
  }
  int64_t batch = xv.dim(0), channels = xv.dim(1);
  Tensor out({batch, channels, out_dims[0], out_dims[1], out_dims[2]});
  const int64_t in12 = in[1] * in[2];
  const int64_t out12 = out_dims[1] * out_dims[2];
  const double inv = 1.0 / static_cast<double>(kernel[0] * kernel[1] * kernel[2]);
  for (int64_t bc = 0; bc < batch * channels; ++bc) {
    const double* xp = xv.data() + bc * in[0] * in12;
    double* op = out.data() + bc * out_dims[0] * out12;
    for (int64_t o1 = 0; o1 < out_dims[0]; ++o1) {
      for (int64_t o2 = 0; o2 < out_dims[1]; ++o2) {
        for (int64_t o3 = 0; o3 < out_dims[2]; ++o3) {
          double acc = 0.0;
          for (int64_t d1 = 0; d1 < kernel[0]; ++d1) {
            for (int64_t d2 = 0; d2 < kernel[1]; ++d2) {
              const double* row = xp + (o1 * stride[0] + d1) * in12 + (o2 * stride[1] + d2) * in[2] +
                                  o3 * stride[2];
              for (int64_t d3 = 0; d3 < kernel[2]; ++d3) acc += row[d3];
            }
          }
          op[o1 * out12 + o2 * out_dims[2] + o3] = acc * inv;
        }
      }
    }
  }
  int xid = input.id;
  return make_node(t, std::move(out), {xid}, [=](int id) {
    return [=](Tape& tp) {
      const Tensor& g = tp.node(id).grad;
      Tensor& gx = tp.grad(xid);
      for (int64_t bc = 0; bc < batch * channels; ++bc) {
        double* gp = gx.data() + bc * in[0] * in12;
        const double* op = g.data() + bc * out_dims[0] * out12;
        for (int64_t o1 = 0; o1 < out_dims[0]; ++o1) {
          for (int64_t o2 = 0; o2 < out_dims[1]; ++o2) {
            for (int64_t o3 = 0; o3 < out_dims[2]; ++o3) {
              double gv = op[o1 * out12 + o2 * out_dims[2] + o3] * inv;
              for (int64_t d1 = 0; d1 < kernel[0]; ++d1) {
                for (int64_t d2 = 0; d2 < kernel[1]; ++d2) {
                  double* row = gp + (o1 * stride[0] + d1) * in12 + (o2 * stride[1] + d2) * in[2] +
                                o3 * stride[2];
                  for (int64_t d3 = 0; d3 < kernel[2]; ++d3) row[d3] += gv;
                }
              }
            }
          }
        }
      }
    };
  });
}

Var linear(Var input, Var weight, Var bias) {
  Tape& t = *input.tape;
  if (weight.tape != &t || bias.tape != &t) throw ContractError("linear: operands on different tapes");
  const Tensor& xv = input.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1 || xv.dim(1) != wv.dim(1) ||
      wv.dim(0) != bv.dim(0)) {
    throw DimensionError("linear: incompatible shapes input " + shape_str(xv.shape()) + ", weight " +
                         shape_str(wv.shape()) + ", bias " + shape_str(bv.shape()));
  }
  int64_t batch = xv.dim(0), din = xv.dim(1), dout = wv.dim(0);
  Tensor out({batch, dout});
  for (int64_t b = 0; b < batch; ++b) {
    const double* xrow = xv.data() + b * din;
    double* orow = out.data() + b * dout;
    for (int64_t o = 0; o < dout; ++o) {
      const double* wrow = wv.data() + o * din;
      double acc = bv[o];
      for (int64_t i = 0; i < din; ++i) acc += xrow[i] * wrow[i];
      orow[o] = acc;
    }
  }
  int xid = input.id, wid = weight.id, bid = bias.id;
  return make_node(t, std::move(out), {xid, wid, bid}, [xid, wid, bid, batch, din, dout](int id) {
    return [id, xid, wid, bid, batch, din, dout](Tape& tp) {
      const Tensor& g = tp.node(id).grad;
      const Tensor& xv2 = tp.value(xid);
      const Tensor& wv2 = tp.value(wid);
      if (tp.requires_grad(xid)) {
        Tensor& gx = tp.grad(xid);
        for (int64_t b = 0; b < batch; ++b) {
          const double* grow = g.data() + b * dout;
          double* gxrow = gx.data() + b * din;
          for (int64_t o = 0; o < dout; ++o) {
            const double* wrow = wv2.data() + o * din;
            double gv = grow[o];
            for (int64_t i = 0; i < din; ++i) gxrow[i] += gv * wrow[i];
          }
        }
      }
      if (tp.requires_grad(wid)) {
        Tensor& gw = tp.grad(wid);
        for (int64_t b = 0; b < batch; ++b) {
          const double* grow = g.data() + b * dout;
          const double* xrow = xv2.data() + b * din;
          for (int64_t o = 0; o < dout; ++o) {
            double* gwrow = gw.data() + o * din;
            double gv = grow[o];
            for (int64_t i = 0; i < din; ++i) gwrow[i] += gv * xrow[i];
          }
        }
      }
      if (tp.requires_grad(bid)) {
        Tensor& gb = tp.grad(bid);
        for (int64_t b = 0; b < batch; ++b) {
          const double* grow = g.data() + b * dout;
          for (int64_t o = 0; o < dout; ++o) gb[o] += grow[o];
        }
      }
    };
  });
}

Var batch_norm(Var x, Var gamma, Var beta_shift, BatchNormStats& stats, BnMode mode, double eps,
               double momentum) {
  Tape& t = *x.tape;
  if (gamma.tape != &t || beta_shift.tape != &t) throw ContractError("batch_norm: operands on different tapes");
  const Tensor& xv = x.value();
  if (xv.rank() < 2) throw DimensionError("batch_norm: input must have a channel axis (rank >= 2)");
  int64_t batch = xv.dim(0), channels = xv.dim(1);
  int64_t inner = xv.size() / (batch * channels);
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta_shift.value();
  if (gv.rank() != 1 || gv.dim(0) != channels || !gv.same_shape(bv)) {
    throw DimensionError("batch_norm: gamma/beta " + shape_str(gv.shape()) +
                         " do not match channel count " + std::to_string(channels));
  }
  if (stats.running_mean.size() != channels) {
    stats.running_mean = Tensor::zeros({channels});
    stats.running_var = Tensor::full({channels}, 1.0);
  }

  Tensor mean_c({channels}), var_c({channels});
  if (mode == BnMode::Train) {
    const double count = static_cast<double>(batch * inner);
    for (int64_t c = 0; c < channels; ++c) {
      double m = 0.0;
      for (int64_t b = 0; b < batch; ++b) {
        const double* p = xv.data() + (b * channels + c) * inner;
        for (int64_t i = 0; i < inner; ++i) m += p[i];
      }
      m /= count;
      double v = 0.0;
      for (int64_t b = 0; b < batch; ++b) {
        const double* p = xv.data() + (b * channels + c) * inner;
        for (int64_t i = 0; i < inner; ++i) {
          double d = p[i] - m;
          v += d * d;
        }
      }
      v /= count;
      mean_c[c] = m;
      var_c[c] = v;
      stats.running_mean[c] = (1.0 - momentum) * stats.running_mean[c] + momentum * m;
      stats.running_var[c] = (1.0 - momentum) * stats.running_var[c] + momentum * v;
    }
  } else {
    mean_c = stats.running_mean;
    var_c = stats.running_var;
  }

  Tensor xhat(xv.shape());
  Tensor out(xv.shape());
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t c = 0; c < channels; ++c) {
      const double* p = xv.data() + (b * channels + c) * inner;
      double* hp = xhat.data() + (b * channels + c) * inner;
      double* op = out.data() + (b * channels + c) * inner;
      double inv_std = 1.0 / std::sqrt(var_c[c] + eps);
      double m = mean_c[c];
      double gam = gv[c], bet = bv[c];
      for (int64_t i = 0; i < inner; ++i) {
        double h = (p[i] - m) * inv_std;
        hp[i] = h;
        op[i] = gam * h + bet;
      }
    }
  }

  int xid = x.id, gid = gamma.id, bid = beta_shift.id;
  bool train = mode == BnMode::Train;
  return make_node(t, std::move(out), {xid, gid, bid},
                   [xid, gid, bid, xhat, var_c, eps, batch, channels, inner, train](int id) {
    return [id, xid, gid, bid, xhat, var_c, eps, batch, channels, inner, train](Tape& tp) {
      const Tensor& g = tp.node(id).grad;
      const Tensor& gamv = tp.value(gid);
      const double count = static_cast<double>(batch * inner);
      if (tp.requires_grad(gid)) {
        Tensor& gg = tp.grad(gid);
        for (int64_t b = 0; b < batch; ++b) {
          for (int64_t c = 0; c < channels; ++c) {
            const double* gp = g.data() + (b * channels + c) * inner;
            const double* hp = xhat.data() + (b * channels + c) * inner;
            double acc = 0.0;
            for (int64_t i = 0; i < inner; ++i) acc += gp[i] * hp[i];
            gg[c] += acc;
          }
        }
      }
      if (tp.requires_grad(bid)) {
        Tensor& gb = tp.grad(bid);
        for (int64_t b = 0; b < batch; ++b) {
          for (int64_t c = 0; c < channels; ++c) {
            const double* gp = g.data() + (b * channels + c) * inner;
            double acc = 0.0;
            for (int64_t i = 0; i < inner; ++i) acc += gp[i];
            gb[c] += acc;
          }
        }
      }
      if (tp.requires_grad(xid)) {
        Tensor& gx = tp.grad(xid);
        for (int64_t c = 0; c < channels; ++c) {
          double inv_std = 1.0 / std::sqrt(var_c[c] + eps);
          double gam = gamv[c];
          if (train) {
            // Batch statistics depend on x: subtract the per-channel means of
            // g and g*xhat.
            double sum_g = 0.0, sum_gh = 0.0;
            for (int64_t b = 0; b < batch; ++b) {
              const double* gp = g.data() + (b * channels + c) * inner;
              const double* hp = xhat.data() + (b * channels + c) * inner;
              for (int64_t i = 0; i < inner; ++i) {
                sum_g += gp[i];
                sum_gh += gp[i] * hp[i];
              }
            }
            double mean_g = sum_g / count;
            double mean_gh = sum_gh / count;
            for (int64_t b = 0; b < batch; ++b) {
              const double* gp = g.data() + (b * channels + c) * inner;
              const double* hp = xhat.data() + (b * channels + c) * inner;
              double* gxp = gx.data() + (b * channels + c) * inner;
              for (int64_t i = 0; i < inner; ++i) {
                gxp[i] += gam * inv_std * (gp[i] - mean_g - hp[i] * mean_gh);
              }
            }
          } else {
            for (int64_t b = 0; b < batch; ++b) {
              const double* gp = g.data() + (b * channels + c) * inner;
              double* gxp = gx.data() + (b * channels + c) * inner;
              for (int64_t i = 0; i < inner; ++i) gxp[i] += gam * inv_std * gp[i];
            }
          }
        }
      }
    };
  });
}

GradCheckReport grad_check(const std::function<Var(Tape&, std::vector<Var>&)>& f,
                           const std::vector<Tensor>& inputs, double step, double tol,
                           const std::set<size_t>& exclude) {
  GradCheckReport report;

  std::vector<Parameter> params;
  params.reserve(inputs.size());
  for (size_t i = 0; i < inputs.size(); ++i) {
    params.emplace_back("x" + std::to_string(i), inputs[i], true);
  }
  Tape tape;
  std::vector<Var> vars;
  for (auto& p : params) vars.push_back(tape.leaf(p));
  Var y = f(tape, vars);
  if (y.value().size() != 1) throw ContractError("grad_check: f must be scalar-valued");
  if (!y.value().all_finite()) {
    report.finite = false;
    report.worst = "non-finite function value";
    return report;
  }
  tape.backward(y);

  auto eval_at = [&](const std::vector<Tensor>& xs) {
    Tape t2;
    std::vector<Var> vs;
    for (const Tensor& x : xs) vs.push_back(t2.constant(x));
    return f(t2, vs).value().scalar_value();
  };

  std::vector<Tensor> xs = inputs;
  for (size_t i = 0; i < inputs.size(); ++i) {
    if (exclude.count(i)) continue;
    for (int64_t j = 0; j < inputs[i].size(); ++j) {
      double orig = xs[i][j];
      xs[i][j] = orig + step;
      double fp = eval_at(xs);
      xs[i][j] = orig - step;
      double fm = eval_at(xs);
      xs[i][j] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        report.finite = false;
        report.worst = "non-finite perturbed value at input " + std::to_string(i) + ", element " +
                       std::to_string(j);
        return report;
      }
      double numeric = (fp - fm) / (2.0 * step);
      double analytic = params[i].grad[j];
      double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
      double rel = std::fabs(analytic - numeric) / denom;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst = "input " + std::to_string(i) + ", element " + std::to_string(j);
      }
    }
  }
  report.pass = report.finite && report.max_rel_err <= tol;
  return report;
}

}  // namespace spikehar
