#include "spikehar/classifier.hpp"

#include <algorithm>

#include "spikehar/errors.hpp"

namespace spikehar {

namespace {

int64_t pooled_dim(int64_t in, int64_t k, int64_t s) { return (in - k) / s + 1; }

void check_pool_geometry(const InputGeometry& geom, Triple kernel, Triple stride, const char* who) {
  Triple dims{geom.n, geom.r, geom.w};
  for (size_t i = 0; i < 3; ++i) {
    if (dims[i] < kernel[i]) {
      throw ConfigError(std::string(who) + ": pooling kernel does not fit input geometry");
    }
    if (stride[i] < 1) throw ConfigError(std::string(who) + ": pooling stride must be >= 1");
  }
}

}  // namespace

SnnClassifier::SnnClassifier(const ClassifierConfig& cfg_, const InputGeometry& geom_,
                             std::mt19937_64& rng)
    : cfg(cfg_), geom(geom_) {
  if (cfg.n_classes < 1) throw ConfigError("classifier: n_classes must be >= 1");
  if (cfg.t_cls < 1) throw ConfigError("classifier: t_cls must be >= 1");
  if (cfg.hidden.empty()) throw ConfigError("classifier: need at least one hidden layer");
  check_pool_geometry(geom, cfg.pool_kernel, cfg.pool_stride, "classifier");

  // feature dim after pooling and averaging over the window axis: the window
  // count drops out, so the parameter count is geometry- but not N-dependent
  int64_t pr = pooled_dim(geom.r, cfg.pool_kernel[1], cfg.pool_stride[1]);
  int64_t pw = pooled_dim(geom.w, cfg.pool_kernel[2], cfg.pool_stride[2]);
  feature_dim_ = geom.channels * pr * pw;

  int64_t din = feature_dim_;
  for (size_t i = 0; i < cfg.hidden.size(); ++i) {
    fcs.emplace_back("clf.fc" + std::to_string(i + 1), din, cfg.hidden[i], rng);
    lifs.emplace_back("clf.lif" + std::to_string(i + 1), cfg.beta0, cfg.theta0, false, cfg.surrogate);
    din = cfg.hidden[i];
  }
  fcs.emplace_back("clf.fc_out", din, cfg.n_classes, rng);
  lifs.emplace_back("clf.lif_out", cfg.beta0, 1.0, /*theta_frozen=*/true, cfg.surrogate);
}

void SnnClassifier::reset_state() {
  for (LifLayer& l : lifs) l.reset_state();
}

std::vector<Parameter*> SnnClassifier::params() {
  std::vector<Parameter*> out;
  for (LinearLayer& fc : fcs) {
    for (Parameter* p : fc.params()) out.push_back(p);
  }
  for (LifLayer& l : lifs) {
    for (Parameter* p : l.params()) out.push_back(p);
  }
  return out;
}

Var SnnClassifier::forward_counts(Var encoding, int64_t timesteps, ModelTrace* trace) {
  const Tensor& ev = encoding.value();
  if (ev.rank() != 5 || ev.dim(1) != geom.channels || ev.dim(2) != geom.n || ev.dim(3) != geom.r ||
      ev.dim(4) != geom.w) {
    throw DimensionError("classifier: encoding shape " + shape_str(ev.shape()) +
                         " does not match configured geometry (B," + std::to_string(geom.channels) +
                         "," + std::to_string(geom.n) + "," + std::to_string(geom.r) + "," +
                         std::to_string(geom.w) + "), expected feature dim d=" +
                         std::to_string(feature_dim_));
  }
  const int64_t batch = ev.dim(0);
  const int64_t t_steps = timesteps > 0 ? timesteps : cfg.t_cls;
  reset_state();

  Var pooled = avg_pool3d(encoding, cfg.pool_kernel, cfg.pool_stride);
  if (trace) {
    trace->add_mac(pooled.value().size() * cfg.pool_kernel[0] * cfg.pool_kernel[1] * cfg.pool_kernel[2]);
  }
  Var feats = reshape(mean_axis(pooled, 2), {batch, feature_dim_});

  // the same current is injected at every timestep; compute the first-layer
  // drive once and reuse the node
  Var cur0 = fcs[0].forward(feats);
  if (trace) trace->add_mac(t_steps * batch * feature_dim_ * cfg.hidden[0]);

  Var counts;
  for (int64_t t = 0; t < t_steps; ++t) {
    Var s = lifs[0].step(cur0);
    if (trace) trace->record_spikes(s.value());
    for (size_t i = 1; i < fcs.size(); ++i) {
      if (trace) trace->add_acc(count_nonzero(s.value()) * fcs[i].weight.value.dim(0));
      Var cur = fcs[i].forward(s);
      s = lifs[i].step(cur);
      if (trace) trace->record_spikes(s.value());
    }
    counts = (t == 0) ? s : add(counts, s);
  }
  return counts;
}

int rate_decode(const std::vector<double>& counts) {
  if (counts.empty()) throw ContractError("rate_decode: empty count vector");
  size_t best = 0;
  for (size_t i = 1; i < counts.size(); ++i) {
    if (counts[i] > counts[best]) best = i;
  }
  return static_cast<int>(best);
}

std::vector<int> rate_decode_batch(const Tensor& counts) {
  if (counts.rank() != 2) throw DimensionError("rate_decode_batch: expected (B,C)");
  std::vector<int> out;
  int64_t batch = counts.dim(0), classes = counts.dim(1);
  out.reserve(static_cast<size_t>(batch));
  for (int64_t b = 0; b < batch; ++b) {
    const double* row = counts.data() + b * classes;
    out.push_back(rate_decode(std::vector<double>(row, row + classes)));
  }
  return out;
}

DirectSnnModel::DirectSnnModel(const DirectSnnSpec& spec_, const InputGeometry& geom_,
                               std::mt19937_64& rng)
    : spec(spec_), geom(geom_) {
  if (spec.n_classes < 1) throw ConfigError("direct-snn: n_classes must be >= 1");
  if (spec.t < 1) throw ConfigError("direct-snn: timestep count must be >= 1");

  if (spec.kind == DirectKind::Linear) {
    if (spec.widths.empty()) throw ConfigError("direct-snn: linear variant needs at least one width");
    for (int64_t wdt : spec.widths) {
      if (wdt < 1) throw ConfigError("direct-snn: widths must be >= 1");
    }
    check_pool_geometry(geom, spec.pool_kernel, spec.pool_stride, "direct-snn");
    int64_t pr = pooled_dim(geom.r, spec.pool_kernel[1], spec.pool_stride[1]);
    int64_t pw = pooled_dim(geom.w, spec.pool_kernel[2], spec.pool_stride[2]);
    feature_dim_ = geom.channels * pr * pw;
    int64_t din = feature_dim_;
    for (size_t i = 0; i < spec.widths.size(); ++i) {
      fcs.emplace_back("direct.fc" + std::to_string(i + 1), din, spec.widths[i], rng);
      lifs.emplace_back("direct.lif" + std::to_string(i + 1), spec.beta0, spec.theta0, false,
                        spec.surrogate);
      din = spec.widths[i];
    }
    fcs.emplace_back("direct.fc_out", din, spec.n_classes, rng);
    lifs.emplace_back("direct.lif_out", spec.beta0, 1.0, true, spec.surrogate);
  } else {
    if (spec.conv_depth < 1 || spec.conv_depth > 3) {
      throw ConfigError("direct-snn: conv depth must be 1, 2 or 3, got " +
                        std::to_string(spec.conv_depth));
    }
    const int64_t progression[3] = {64, 128, 256};
    int64_t cin = geom.channels;
    for (int64_t d = 0; d < spec.conv_depth; ++d) {
      int64_t cout = progression[d];
      convs.emplace_back("direct.conv" + std::to_string(d + 1), cin, cout, Triple{1, 1, 3},
                         Triple{1, 1, 1}, Triple{0, 0, 1}, rng);
      lifs.emplace_back("direct.clif" + std::to_string(d + 1), spec.beta0, spec.theta0, false,
                        spec.surrogate);
      cin = cout;
    }
    feature_dim_ = cin * geom.n * geom.r * geom.w;
    fcs.emplace_back("direct.readout", feature_dim_, spec.n_classes, rng);
    lifs.emplace_back("direct.lif_out", spec.beta0, 1.0, true, spec.surrogate);
  }
}

void DirectSnnModel::reset_state() {
  for (LifLayer& l : lifs) l.reset_state();
}

std::vector<Parameter*> DirectSnnModel::params() {
  std::vector<Parameter*> out;
  for (Conv3dLayer& c : convs) {
    for (Parameter* p : c.params()) out.push_back(p);
  }
  for (LinearLayer& fc : fcs) {
    for (Parameter* p : fc.params()) out.push_back(p);
  }
  for (LifLayer& l : lifs) {
    for (Parameter* p : l.params()) out.push_back(p);
  }
  return out;
}

Var DirectSnnModel::forward_counts(Var sample, int64_t timesteps, ModelTrace* trace) {
  const Tensor& xv = sample.value();
  if (xv.rank() != 5 || xv.dim(1) != geom.channels || xv.dim(2) != geom.n || xv.dim(3) != geom.r ||
      xv.dim(4) != geom.w) {
    throw DimensionError("direct-snn: sample shape " + shape_str(xv.shape()) +
                         " does not match configured geometry, expected feature dim d=" +
                         std::to_string(feature_dim_));
  }
  const int64_t batch = xv.dim(0);
  const int64_t t_steps = timesteps > 0 ? timesteps : spec.t;
  reset_state();

  Var counts;
  if (spec.kind == DirectKind::Linear) {
    Var pooled = avg_pool3d(sample, spec.pool_kernel, spec.pool_stride);
    if (trace) {
      trace->add_mac(pooled.value().size() * spec.pool_kernel[0] * spec.pool_kernel[1] *
                     spec.pool_kernel[2]);
    }
    Var feats = reshape(mean_axis(pooled, 2), {batch, feature_dim_});
    Var cur0 = fcs[0].forward(feats);
    if (trace) trace->add_mac(t_steps * batch * feature_dim_ * spec.widths[0]);
    for (int64_t t = 0; t < t_steps; ++t) {
      Var s = lifs[0].step(cur0);
      if (trace) trace->record_spikes(s.value());
      for (size_t i = 1; i < fcs.size(); ++i) {
        if (trace) trace->add_acc(count_nonzero(s.value()) * fcs[i].weight.value.dim(0));
        s = lifs[i].step(fcs[i].forward(s));
        if (trace) trace->record_spikes(s.value());
      }
      counts = (t == 0) ? s : add(counts, s);
    }
  } else {
    Var cur0 = convs[0].forward(sample);
    if (trace) {
      const Tensor& w0 = convs[0].weight.value;
      trace->add_mac(t_steps * cur0.value().size() * w0.dim(1) * w0.dim(2) * w0.dim(3) * w0.dim(4));
    }
    for (int64_t t = 0; t < t_steps; ++t) {
      Var s = lifs[0].step(cur0);
      if (trace) trace->record_spikes(s.value());
      for (size_t i = 1; i < convs.size(); ++i) {
        if (trace) {
          const Tensor& w = convs[i].weight.value;
          trace->add_acc(count_nonzero(s.value()) * w.dim(0) * w.dim(2) * w.dim(3) * w.dim(4));
        }
        s = lifs[i].step(convs[i].forward(s));
        if (trace) trace->record_spikes(s.value());
      }
      Var flat = reshape(s, {batch, feature_dim_});
      if (trace) trace->add_acc(count_nonzero(flat.value()) * spec.n_classes);
      Var out_spikes = lifs.back().step(fcs[0].forward(flat));
      if (trace) trace->record_spikes(out_spikes.value());
      counts = (t == 0) ? out_spikes : add(counts, out_spikes);
    }
  }
  return counts;
}

std::unique_ptr<DirectSnnModel> build_direct_snn(const DirectSnnSpec& spec, const InputGeometry& geom,
                                                 std::mt19937_64& rng) {
  return std::make_unique<DirectSnnModel>(spec, geom, rng);
}

}  // namespace spikehar
