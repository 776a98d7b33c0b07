#include "spikehar/encoders.hpp"

#include <cmath>

#include "spikehar/errors.hpp"
#include "spikehar/metrics.hpp"

namespace spikehar {

using detail::make_node;

double SpikeTrain::sparsity() const {
  if (values.size() == 0) return 1.0;
  int64_t zeros = 0;
  for (int64_t i = 0; i < values.size(); ++i) {
    if (values[i] == 0.0) ++zeros;
  }
  return static_cast<double>(zeros) / static_cast<double>(values.size());
}

bool SpikeTrain::in_alphabet() const {
  for (int64_t i = 0; i < values.size(); ++i) {
    double v = values[i];
    if (alphabet == SpikeAlphabet::Binary) {
      if (v != 0.0 && v != 1.0) return false;
    } else {
      if (v != -1.0 && v != 0.0 && v != 1.0) return false;
    }
  }
  return true;
}

Var bipolar_threshold(Var x, double tau) {
  if (tau <= 0.0) throw ContractError("bipolar_threshold: tau must be > 0");
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (int64_t i = 0; i < xv.size(); ++i) {
    out[i] = xv[i] > tau ? 1.0 : (xv[i] < -tau ? -1.0 : 0.0);
  }
  int xid = x.id;
  return make_node(t, std::move(out), {xid}, [xid](int id) {
    return [id, xid](Tape& tp) {
      const Tensor& g = tp.node(id).grad;
      const Tensor& xv2 = tp.value(xid);
      Tensor& gx = tp.grad(xid);
      for (int64_t i = 0; i < g.size(); ++i) {
        if (std::fabs(xv2[i]) <= 1.0) gx[i] += g[i];
      }
    };
  });
}

Tensor delta_encode(const Tensor& time_by_bins) {
  if (time_by_bins.rank() != 2) {
    throw DimensionError("delta_encode: expected a (time, bins) matrix, got " +
                         shape_str(time_by_bins.shape()));
  }
  const int64_t steps = time_by_bins.dim(0), bins = time_by_bins.dim(1);
  if (steps < 2) throw ContractError("delta_encode: need at least 2 time samples");
  if (bins < 1) throw ContractError("delta_encode: need at least 1 bin");

  Tensor diffs({steps - 1, bins});
  for (int64_t n = 1; n < steps; ++n) {
    const double* cur = time_by_bins.data() + n * bins;
    const double* prev = time_by_bins.data() + (n - 1) * bins;
    double* row = diffs.data() + (n - 1) * bins;
    for (int64_t m = 0; m < bins; ++m) row[m] = cur[m] - prev[m];
  }

  // alpha = mean over time of the per-time population variance across bins
  double alpha = 0.0;
  for (int64_t n = 0; n < steps - 1; ++n) {
    const double* row = diffs.data() + n * bins;
    double mean = 0.0;
    for (int64_t m = 0; m < bins; ++m) mean += row[m];
    mean /= static_cast<double>(bins);
    double var = 0.0;
    for (int64_t m = 0; m < bins; ++m) {
      double d = row[m] - mean;
      var += d * d;
    }
    alpha += var / static_cast<double>(bins);
  }
  alpha /= static_cast<double>(steps - 1);

  Tensor out({steps, bins});  // row 0 stays zero
  for (int64_t n = 1; n < steps; ++n) {
    const double* row = diffs.data() + (n - 1) * bins;
    double* orow = out.data() + n * bins;
    for (int64_t m = 0; m < bins; ++m) {
      orow[m] = row[m] > alpha ? 1.0 : (row[m] < -alpha ? -1.0 : 0.0);
    }
  }
  return out;
}

SpikeTrain delta_encode_sample(const Tensor& sample) {
  if (sample.rank() != 4) {
    throw DimensionError("delta_encode_sample: expected (2,N,R,W), got " + shape_str(sample.shape()));
  }
  const int64_t channels = sample.dim(0), n = sample.dim(1), r = sample.dim(2), w = sample.dim(3);
  SpikeTrain train;
  train.alphabet = SpikeAlphabet::Ternary;
  train.values = Tensor(sample.shape());
  Tensor mat({w, r});
  for (int64_t c = 0; c < channels; ++c) {
    for (int64_t ni = 0; ni < n; ++ni) {
      const double* block = sample.data() + (c * n + ni) * r * w;
      for (int64_t wi = 0; wi < w; ++wi) {
        for (int64_t ri = 0; ri < r; ++ri) mat[wi * r + ri] = block[ri * w + wi];
      }
      Tensor enc = delta_encode(mat);
      double* out = train.values.data() + (c * n + ni) * r * w;
      for (int64_t wi = 0; wi < w; ++wi) {
        for (int64_t ri = 0; ri < r; ++ri) out[ri * w + wi] = enc[wi * r + ri];
      }
    }
  }
  return train;
}

namespace {

constexpr Triple kKernel{1, 1, 3};
constexpr Triple kStride{1, 1, 1};
constexpr Triple kSamePad{0, 0, 1};

void check_encoder_input(const Tensor& x, int64_t channels, int64_t t_enc, const char* who) {
  if (x.rank() != 5 || x.dim(1) != channels) {
    throw DimensionError(std::string(who) + ": expected (B," + std::to_string(channels) +
                         ",N,R,W), got " + shape_str(x.shape()));
  }
  if (x.dim(2) % t_enc != 0) {
    throw ConfigError(std::string(who) + ": window count " + std::to_string(x.dim(2)) +
                      " is not divisible by " + std::to_string(t_enc) + " timesteps");
  }
}

}  // namespace

ScaeModel::ScaeModel(const ScaeConfig& cfg_, std::mt19937_64& rng)
    : cfg(cfg_),
      enc_conv1("scae.enc.conv1", cfg_.channels, cfg_.hidden_maps, kKernel, kStride, kSamePad, rng),
      enc_conv2("scae.enc.conv2", cfg_.hidden_maps, cfg_.channels, kKernel, kStride, kSamePad, rng),
      enc_bn1("scae.enc.bn1", cfg_.hidden_maps),
      enc_bn2("scae.enc.bn2", cfg_.channels),
      enc_lif1("scae.enc.lif1", cfg_.beta0, cfg_.theta0, false, cfg_.surrogate),
      enc_lif2("scae.enc.lif2", cfg_.beta0, cfg_.theta0, false, cfg_.surrogate),
      dec_tconv1("scae.dec.tconv1", cfg_.channels, cfg_.hidden_maps, kKernel, kStride, kSamePad, rng),
      dec_tconv2("scae.dec.tconv2", cfg_.hidden_maps, cfg_.channels, kKernel, kStride, kSamePad, rng),
      dec_bn("scae.dec.bn", cfg_.hidden_maps),
      dec_lif("scae.dec.lif", cfg_.beta0, cfg_.theta0, false, cfg_.surrogate) {}

void ScaeModel::reset_state() {
  enc_lif1.reset_state();
  enc_lif2.reset_state();
  dec_lif.reset_state();
}

Var ScaeModel::encode(Var x, BnMode mode, ModelTrace* trace) {
  check_encoder_input(x.value(), cfg.channels, cfg.t_enc, "scae_encode");
  enc_lif1.reset_state();
  enc_lif2.reset_state();
  const int64_t n = x.value().dim(2);
  const int64_t chunk_len = n / cfg.t_enc;
  const int64_t kvol = kKernel[0] * kKernel[1] * kKernel[2];
  std::vector<Var> chunks;
  chunks.reserve(static_cast<size_t>(cfg.t_enc));
  for (int64_t t = 0; t < cfg.t_enc; ++t) {
    Var chunk = slice(x, 2, t * chunk_len, chunk_len);
    Var c1 = enc_conv1.forward(chunk);
    if (trace) trace->add_mac(c1.value().size() * cfg.channels * kvol);  // analog drive
    Var b1 = enc_bn1.forward(c1, mode);
    if (trace) trace->add_mac(b1.value().size());
    Var s1 = enc_lif1.step(b1);
    if (trace) trace->record_spikes(s1.value());
    if (trace) trace->add_acc(count_nonzero(s1.value()) * cfg.channels * kvol);  // event-driven
    Var c2 = enc_conv2.forward(s1);
    Var b2 = enc_bn2.forward(c2, mode);
    if (trace) trace->add_mac(b2.value().size());
    Var s2 = enc_lif2.step(b2);
    if (trace) trace->record_spikes(s2.value());
    chunks.push_back(s2);
  }
  return chunks.size() == 1 ? chunks[0] : concat(chunks, 2);
}

Var ScaeModel::decode(Var spikes, BnMode mode, ModelTrace* trace) {
  check_encoder_input(spikes.value(), cfg.channels, cfg.t_enc, "scae_decode");
  dec_lif.reset_state();
  const int64_t n = spikes.value().dim(2);
  const int64_t chunk_len = n / cfg.t_enc;
  const int64_t kvol = kKernel[0] * kKernel[1] * kKernel[2];
  std::vector<Var> chunks;
  chunks.reserve(static_cast<size_t>(cfg.t_enc));
  for (int64_t t = 0; t < cfg.t_enc; ++t) {
    Var chunk = slice(spikes, 2, t * chunk_len, chunk_len);
    Var d1 = dec_tconv1.forward(chunk);
    // the decoder counts as a dense stage in the operation accounting
    if (trace) trace->add_mac(d1.value().size() * cfg.channels * kvol + d1.value().size());
    Var d = dec_lif.step(dec_bn.forward(d1, mode));
    if (trace) trace->record_spikes(d.value());
    Var d2 = dec_tconv2.forward(d);
    if (trace) trace->add_mac(d2.value().size() * cfg.hidden_maps * kvol);
    chunks.push_back(sigmoid(d2));
  }
  return chunks.size() == 1 ? chunks[0] : concat(chunks, 2);
}

ScaeModel::Out ScaeModel::forward(Var x, BnMode mode, ModelTrace* trace) {
  Var spikes = encode(x, mode, trace);
  Var recon = decode(spikes, mode, trace);
  return {spikes, recon};
}

std::vector<Parameter*> ScaeModel::params() {
  std::vector<Parameter*> out;
  for (auto* layer : {&enc_conv1, &enc_conv2}) {
    for (Parameter* p : layer->params()) out.push_back(p);
  }
  for (auto* layer : {&enc_bn1, &enc_bn2, &dec_bn}) {
    for (Parameter* p : layer->params()) out.push_back(p);
  }
  for (auto* layer : {&dec_tconv1, &dec_tconv2}) {
    for (Parameter* p : layer->params()) out.push_back(p);
  }
  for (auto* layer : {&enc_lif1, &enc_lif2, &dec_lif}) {
    for (Parameter* p : layer->params()) out.push_back(p);
  }
  return out;
}

CaeModel::CaeModel(const CaeConfig& cfg_, std::mt19937_64& rng)
    : cfg(cfg_),
      enc_conv1("cae.enc.conv1", cfg_.channels, cfg_.hidden_maps, kKernel, kStride, kSamePad, rng),
      enc_conv2("cae.enc.conv2", cfg_.hidden_maps, cfg_.channels, kKernel, kStride, kSamePad, rng),
      enc_bn1("cae.enc.bn1", cfg_.hidden_maps),
      enc_bn2("cae.enc.bn2", cfg_.channels),
      dec_tconv1("cae.dec.tconv1", cfg_.channels, cfg_.hidden_maps, kKernel, kStride, kSamePad, rng),
      dec_tconv2("cae.dec.tconv2", cfg_.hidden_maps, cfg_.channels, kKernel, kStride, kSamePad, rng),
      dec_bn("cae.dec.bn", cfg_.hidden_maps) {}

Var CaeModel::encode(Var x, BnMode mode, ModelTrace* trace) {
  check_encoder_input(x.value(), cfg.channels, cfg.t_enc, "cae_encode");
  const int64_t n = x.value().dim(2);
  const int64_t chunk_len = n / cfg.t_enc;
  const int64_t kvol = kKernel[0] * kKernel[1] * kKernel[2];
  std::vector<Var> chunks;
  for (int64_t t = 0; t < cfg.t_enc; ++t) {
    Var chunk = slice(x, 2, t * chunk_len, chunk_len);
    Var c1 = enc_conv1.forward(chunk);
    if (trace) trace->add_mac(c1.value().size() * (cfg.channels * kvol + 1));
    Var h = relu(enc_bn1.forward(c1, mode));
    // bipolar spikes come from the pre-activation of the second stage
    Var c2 = enc_conv2.forward(h);
    if (trace) trace->add_mac(c2.value().size() * (cfg.hidden_maps * kvol + 1));
    Var pre = enc_bn2.forward(c2, mode);
    chunks.push_back(bipolar_threshold(pre, cfg.tau));
  }
  return chunks.size() == 1 ? chunks[0] : concat(chunks, 2);
}

Var CaeModel::decode(Var spikes, BnMode mode, ModelTrace* trace) {
  check_encoder_input(spikes.value(), cfg.channels, cfg.t_enc, "cae_decode");
  const int64_t n = spikes.value().dim(2);
  const int64_t chunk_len = n / cfg.t_enc;
  const int64_t kvol = kKernel[0] * kKernel[1] * kKernel[2];
  std::vector<Var> chunks;
  for (int64_t t = 0; t < cfg.t_enc; ++t) {
    Var chunk = slice(spikes, 2, t * chunk_len, chunk_len);
    Var d1 = dec_tconv1.forward(chunk);
    if (trace) trace->add_mac(d1.value().size() * (cfg.channels * kvol + 1));
    Var h = relu(dec_bn.forward(d1, mode));
    Var d2 = dec_tconv2.forward(h);
    if (trace) trace->add_mac(d2.value().size() * cfg.hidden_maps * kvol);
    chunks.push_back(sigmoid(d2));
  }
  return chunks.size() == 1 ? chunks[0] : concat(chunks, 2);
}

CaeModel::Out CaeModel::forward(Var x, BnMode mode, ModelTrace* trace) {
  Var spikes = encode(x, mode, trace);
  Var recon = decode(spikes, mode, trace);
  return {spikes, recon};
}

std::vector<Parameter*> CaeModel::params() {
  std::vector<Parameter*> out;
  for (auto* layer : {&enc_conv1, &enc_conv2}) {
    for (Parameter* p : layer->params()) out.push_back(p);
  }
  for (auto* layer : {&enc_bn1, &enc_bn2, &dec_bn}) {
    for (Parameter* p : layer->params()) out.push_back(p);
  }
  for (auto* layer : {&dec_tconv1, &dec_tconv2}) {
    for (Parameter* p : layer->params()) out.push_back(p);
  }
  return out;
}

namespace {

Tensor batch_of_one(const Tensor& sample) {
  Shape s = sample.shape();
  Shape batched{1};
  batched.insert(batched.end(), s.begin(), s.end());
  return Tensor(batched, std::vector<double>(sample.data(), sample.data() + sample.size()));
}

Tensor squeeze_batch(const Tensor& batched) {
  Shape s(batched.shape().begin() + 1, batched.shape().end());
  return Tensor(s, std::vector<double>(batched.data(), batched.data() + batched.size()));
}

}  // namespace

SpikeTrain scae_encode(ScaeModel& model, const Sample& sample) {
  Tape tape;
  Var x = tape.constant(batch_of_one(sample.data));
  Var spikes = model.encode(x, BnMode::Eval);
  model.reset_state();
  return SpikeTrain{squeeze_batch(spikes.value()), SpikeAlphabet::Binary};
}

Tensor scae_decode(ScaeModel& model, const SpikeTrain& spikes) {
  Tape tape;
  Var s = tape.constant(batch_of_one(spikes.values));
  Var recon = model.decode(s, BnMode::Eval);
  model.reset_state();
  return squeeze_batch(recon.value());
}

SpikeTrain cae_encode(CaeModel& model, const Sample& sample) {
  Tape tape;
  Var x = tape.constant(batch_of_one(sample.data));
  Var spikes = model.encode(x, BnMode::Eval);
  return SpikeTrain{squeeze_batch(spikes.value()), SpikeAlphabet::Ternary};
}

}  // namespace spikehar
