#include "spikehar/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "spikehar/checkpoint.hpp"
#include "spikehar/errors.hpp"

namespace spikehar {

void validate_train_config(const TrainConfig& cfg, int64_t n_classes) {
  if (cfg.batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (cfg.learning_rate <= 0.0) throw ConfigError("train config: learning_rate must be > 0");
  if (cfg.max_epochs < 1) throw ConfigError("train config: max_epochs must be >= 1");
  if (cfg.patience < 0) throw ConfigError("train config: patience must be >= 0");
  if (cfg.gamma < 0.0) throw ConfigError("train config: gamma must be >= 0");
  if (static_cast<int64_t>(cfg.class_weights.size()) != n_classes) {
    throw ConfigError("train config: expected " + std::to_string(n_classes) + " class weights, got " +
                      std::to_string(cfg.class_weights.size()));
  }
  for (double w : cfg.class_weights) {
    if (w <= 0.0 || w > 1.0) throw ConfigError("train config: class weights must lie in (0,1]");
  }
}

Var reconstruction_loss(Var x, Var x_hat) { return mse(x, x_hat); }

Var classification_loss(Var counts, const std::vector<int>& labels, const std::vector<double>& weights) {
  return softmax_nll(counts, labels, weights);
}

Var total_loss(Var l_rec, Var l_class, double gamma) { return add(l_rec, scale(l_class, gamma)); }

Adam::Adam(std::vector<Parameter*> params, double lr, AdamConfig cfg) : lr_(lr), cfg_(cfg) {
  for (Parameter* p : params) {
    slots_.push_back({p, Tensor::zeros(p->value.shape()), Tensor::zeros(p->value.shape())});
  }
}

void Adam::zero_grad() {
  for (Slot& s : slots_) s.p->zero_grad();
}

void Adam::step() {
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Slot& s : slots_) {
    if (!s.p->trainable) continue;
    if (!s.p->grad.all_finite()) {
      throw NumericError("adam: non-finite gradient for parameter '" + s.p->name + "'");
    }
    for (int64_t i = 0; i < s.p->value.size(); ++i) {
      double g = s.p->grad[i];
      s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g;
      s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g * g;
      double mhat = s.m[i] / bc1;
      double vhat = s.v[i] / bc2;
      s.p->value[i] -= lr_ * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

Method parse_method(const std::string& name) {
  if (name == "scae") return Method::Scae;
  if (name == "cae") return Method::Cae;
  if (name == "delta") return Method::Delta;
  if (name == "direct-lin") return Method::DirectLin;
  if (name == "direct-conv") return Method::DirectConv;
  throw ConfigError("unknown method '" + name + "' (expected scae|cae|delta|direct-lin|direct-conv)");
}

std::string method_name(Method m) {
  switch (m) {
    case Method::Scae: return "scae";
    case Method::Cae: return "cae";
    case Method::Delta: return "delta";
    case Method::DirectLin: return "direct-lin";
    case Method::DirectConv: return "direct-conv";
  }
  return "?";
}

std::vector<Parameter*> ModelBundle::params() {
  std::vector<Parameter*> out;
  if (scae) {
    for (Parameter* p : scae->params()) out.push_back(p);
  }
  if (cae) {
    for (Parameter* p : cae->params()) out.push_back(p);
  }
  if (classifier) {
    for (Parameter* p : classifier->params()) out.push_back(p);
  }
  if (direct) {
    for (Parameter* p : direct->params()) out.push_back(p);
  }
  return out;
}

void ModelBundle::reset_state() {
  if (scae) scae->reset_state();
  if (classifier) classifier->reset_state();
  if (direct) direct->reset_state();
}

ModelBundle make_model(Method method, const InputGeometry& geom, const ModelHyper& hyper,
                       uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelBundle m;
  m.method = method;
  m.geom = geom;
  m.hyper = hyper;

  ClassifierConfig ccfg;
  ccfg.t_cls = hyper.t_cls;
  ccfg.n_classes = hyper.n_classes;

  switch (method) {
    case Method::Scae: {
      ScaeConfig scfg;
      scfg.t_enc = hyper.t_enc;
      m.scae = std::make_unique<ScaeModel>(scfg, rng);
      m.classifier = std::make_unique<SnnClassifier>(ccfg, geom, rng);
      break;
    }
    case Method::Cae: {
      CaeConfig ccfg2;
      ccfg2.t_enc = hyper.t_enc;
      ccfg2.tau = hyper.cae_tau;
      m.cae = std::make_unique<CaeModel>(ccfg2, rng);
      m.classifier = std::make_unique<SnnClassifier>(ccfg, geom, rng);
      break;
    }
    case Method::Delta: {
      m.classifier = std::make_unique<SnnClassifier>(ccfg, geom, rng);
      break;
    }
    case Method::DirectLin: {
      DirectSnnSpec spec;
      spec.kind = DirectKind::Linear;
      spec.widths = hyper.direct_widths;
      spec.t = hyper.t_cls;
      spec.n_classes = hyper.n_classes;
      m.direct = build_direct_snn(spec, geom, rng);
      break;
    }
    case Method::DirectConv: {
      DirectSnnSpec spec;
      spec.kind = DirectKind::Conv;
      spec.conv_depth = hyper.direct_conv_depth;
      spec.t = hyper.t_cls;
      spec.n_classes = hyper.n_classes;
      m.direct = build_direct_snn(spec, geom, rng);
      break;
    }
  }
  return m;
}

Batch make_batch(const std::vector<Sample>& set, const std::vector<size_t>& idx) {
  if (idx.empty()) throw ContractError("make_batch: empty index list");
  const Shape& s = set[idx[0]].data.shape();
  Shape batched{static_cast<int64_t>(idx.size())};
  batched.insert(batched.end(), s.begin(), s.end());
  Batch batch;
  batch.data = Tensor(batched);
  int64_t stride = set[idx[0]].data.size();
  for (size_t i = 0; i < idx.size(); ++i) {
    const Sample& sample = set[idx[i]];
    if (sample.data.shape() != s) {
      throw DimensionError("make_batch: inconsistent sample shapes " + shape_str(s) + " vs " +
                           shape_str(sample.data.shape()));
    }
    std::copy(sample.data.data(), sample.data.data() + stride,
              batch.data.data() + static_cast<int64_t>(i) * stride);
    batch.labels.push_back(sample.label);
  }
  return batch;
}

std::vector<Sample> prepare_inputs(Method method, const std::vector<Sample>& set) {
  std::vector<Sample> out = set;
  if (method == Method::Delta) {
    for (Sample& s : out) s.data = delta_encode_sample(s.data).values;
  }
  return out;
}

ForwardOut bundle_forward(ModelBundle& model, Tape& tape, const Batch& batch, BnMode mode,
                          int64_t timesteps, ModelTrace* trace) {
  ForwardOut out;
  Var x = tape.constant(batch.data);
  model.reset_state();
  switch (model.method) {
    case Method::Scae: {
      ScaeModel::Out enc = model.scae->forward(x, mode, trace);
      out.spikes = enc.spikes;
      out.recon = enc.recon;
      out.counts = model.classifier->forward_counts(enc.spikes, timesteps, trace);
      break;
    }
    case Method::Cae: {
      CaeModel::Out enc = model.cae->forward(x, mode, trace);
      out.spikes = enc.spikes;
      out.recon = enc.recon;
      // the ternary encoder output is the CAE's only spike population
      if (trace) trace->record_spikes(enc.spikes.value());
      out.counts = model.classifier->forward_counts(enc.spikes, timesteps, trace);
      break;
    }
    case Method::Delta: {
      out.spikes = x;  // inputs are pre-encoded ternary trains
      if (trace) trace->record_spikes(x.value());
      out.counts = model.classifier->forward_counts(x, timesteps, trace);
      break;
    }
    case Method::DirectLin:
    case Method::DirectConv: {
      out.counts = model.direct->forward_counts(x, timesteps, trace);
      break;
    }
  }
  return out;
}

TrainReport fit(ModelBundle& model, const std::vector<Sample>& train_set,
                const std::vector<Sample>& val_set, const TrainConfig& cfg) {
  if (train_set.empty()) throw ContractError("fit: empty training set");
  if (val_set.empty()) throw ContractError("fit: empty validation set");
  validate_train_config(cfg, model.hyper.n_classes);

  auto wall_start = std::chrono::steady_clock::now();
  std::vector<Sample> train = prepare_inputs(model.method, train_set);
  std::vector<Sample> val = prepare_inputs(model.method, val_set);

  std::vector<Parameter*> params = model.params();
  Adam adam(params, cfg.learning_rate);
  std::mt19937_64 rng(cfg.seed);

  TrainReport report;
  std::vector<Tensor> best_values;
  int64_t stale_epochs = 0;

  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), size_t{0});

  for (int64_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int64_t batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                              order.begin() + static_cast<std::ptrdiff_t>(end));
      Batch batch = make_batch(train, idx);
      Tape tape;
      ForwardOut fwd = bundle_forward(model, tape, batch, BnMode::Train);
      Var l_class = classification_loss(fwd.counts, batch.labels, cfg.class_weights);
      Var loss;
      if (fwd.recon.valid()) {
        Var x = tape.constant(batch.data);
        Var l_rec = reconstruction_loss(x, fwd.recon);
        loss = total_loss(l_rec, l_class, cfg.gamma);
      } else {
        loss = l_class;
      }
      adam.zero_grad();
      tape.backward(loss);
      adam.step();
      loss_sum += loss.value().scalar_value();
      ++batches;
    }

    EpochStat stat;
    stat.train_loss = loss_sum / static_cast<double>(batches);
    stat.val_f1 = evaluate_macro_f1(model, val, cfg.batch_size);
    report.epochs.push_back(stat);
    report.stop_epoch = epoch;

    if (report.best_epoch < 0 || stat.val_f1 > report.best_val_f1) {
      report.best_val_f1 = stat.val_f1;
      report.best_epoch = epoch;
      best_values.clear();
      for (Parameter* p : params) best_values.push_back(p->value);
      stale_epochs = 0;
    } else {
      ++stale_epochs;
      if (stale_epochs > cfg.patience) break;
    }
  }

  // restore the best-F1 checkpoint
  if (!best_values.empty()) {
    for (size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return report;
}

std::vector<int> predict(ModelBundle& model, const std::vector<Sample>& set, int64_t batch_size,
                         int64_t timesteps, ModelTrace* trace) {
  if (set.empty()) throw ContractError("predict: empty dataset");
  std::vector<Sample> prepared = prepare_inputs(model.method, set);
  std::vector<int> out;
  for (size_t start = 0; start < prepared.size(); start += static_cast<size_t>(batch_size)) {
    size_t end = std::min(prepared.size(), start + static_cast<size_t>(batch_size));
    std::vector<size_t> idx;
    for (size_t i = start; i < end; ++i) idx.push_back(i);
    Batch batch = make_batch(prepared, idx);
    Tape tape;
    ForwardOut fwd = bundle_forward(model, tape, batch, BnMode::Eval, timesteps, trace);
    for (int p : rate_decode_batch(fwd.counts.value())) out.push_back(p);
  }
  return out;
}

double evaluate_macro_f1(ModelBundle& model, const std::vector<Sample>& set, int64_t batch_size,
                         int64_t timesteps, ModelTrace* trace) {
  std::vector<int> preds = predict(model, set, batch_size, timesteps, trace);
  std::vector<int> truths;
  truths.reserve(set.size());
  for (const Sample& s : set) truths.push_back(s.label);
  return macro_f1(preds, truths, static_cast<int>(model.hyper.n_classes));
}

namespace {

std::vector<BatchNorm3dLayer*> bundle_norm_layers(ModelBundle& model) {
  std::vector<BatchNorm3dLayer*> out;
  if (model.scae) {
    out.push_back(&model.scae->enc_bn1);
    out.push_back(&model.scae->enc_bn2);
    out.push_back(&model.scae->dec_bn);
  }
  if (model.cae) {
    out.push_back(&model.cae->enc_bn1);
    out.push_back(&model.cae->enc_bn2);
    out.push_back(&model.cae->dec_bn);
  }
  return out;
}

}  // namespace

void save_bundle(const std::string& path, ModelBundle& model) {
  NamedTensors tensors = collect_params(model.params());
  for (BatchNorm3dLayer* bn : bundle_norm_layers(model)) {
    tensors.emplace_back(bn->name + ".running_mean", bn->stats.running_mean);
    tensors.emplace_back(bn->name + ".running_var", bn->stats.running_var);
  }
  tensors.emplace_back("meta.method", Tensor::scalar(static_cast<double>(model.method)));
  tensors.emplace_back("meta.geometry",
                       Tensor({4}, {static_cast<double>(model.geom.channels), static_cast<double>(model.geom.n),
                                    static_cast<double>(model.geom.r), static_cast<double>(model.geom.w)}));
  tensors.emplace_back("meta.t_cls", Tensor::scalar(static_cast<double>(model.hyper.t_cls)));
  tensors.emplace_back("meta.n_classes", Tensor::scalar(static_cast<double>(model.hyper.n_classes)));
  tensors.emplace_back("meta.t_enc", Tensor::scalar(static_cast<double>(model.hyper.t_enc)));
  tensors.emplace_back("meta.cae_tau", Tensor::scalar(model.hyper.cae_tau));
  tensors.emplace_back("meta.direct_conv_depth",
                       Tensor::scalar(static_cast<double>(model.hyper.direct_conv_depth)));
  std::vector<double> widths;
  for (int64_t w : model.hyper.direct_widths) widths.push_back(static_cast<double>(w));
  const auto width_count = static_cast<int64_t>(widths.size());
  tensors.emplace_back("meta.direct_widths", Tensor({width_count}, std::move(widths)));
  save_checkpoint(path, tensors);
}

ModelBundle load_bundle(const std::string& path) {
  NamedTensors tensors = load_checkpoint(path);

  auto find = [&](const std::string& name) -> const Tensor& {
    for (const auto& [n, t] : tensors) {
      if (n == name) return t;
    }
    throw FormatError(path + ": checkpoint is missing entry '" + name + "'");
  };

  auto method = static_cast<Method>(static_cast<int>(checkpoint_scalar(tensors, "meta.method")));
  const Tensor& geom_t = find("meta.geometry");
  if (geom_t.size() != 4) throw FormatError(path + ": malformed meta.geometry");
  InputGeometry geom;
  geom.channels = static_cast<int64_t>(geom_t[0]);
  geom.n = static_cast<int64_t>(geom_t[1]);
  geom.r = static_cast<int64_t>(geom_t[2]);
  geom.w = static_cast<int64_t>(geom_t[3]);

  ModelHyper hyper;
  hyper.t_cls = static_cast<int64_t>(checkpoint_scalar(tensors, "meta.t_cls"));
  hyper.n_classes = static_cast<int64_t>(checkpoint_scalar(tensors, "meta.n_classes"));
  hyper.t_enc = static_cast<int64_t>(checkpoint_scalar(tensors, "meta.t_enc"));
  hyper.cae_tau = checkpoint_scalar(tensors, "meta.cae_tau");
  hyper.direct_conv_depth = static_cast<int64_t>(checkpoint_scalar(tensors, "meta.direct_conv_depth"));
  const Tensor& widths_t = find("meta.direct_widths");
  hyper.direct_widths.clear();
  for (int64_t i = 0; i < widths_t.size(); ++i) {
    hyper.direct_widths.push_back(static_cast<int64_t>(widths_t[i]));
  }

  ModelBundle model = make_model(method, geom, hyper, /*seed=*/0);
  load_into_params(tensors, model.params());
  for (BatchNorm3dLayer* bn : bundle_norm_layers(model)) {
    const Tensor& mean = find(bn->name + ".running_mean");
    const Tensor& var = find(bn->name + ".running_var");
    if (!mean.same_shape(bn->stats.running_mean) || !var.same_shape(bn->stats.running_var)) {
      throw FormatError(path + ": running-statistics shape mismatch for '" + bn->name + "'");
    }
    bn->stats.running_mean = mean;
    bn->stats.running_var = var;
  }
  return model;
}

}  // namespace spikehar
