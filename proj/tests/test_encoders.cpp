#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "spikehar/encoders.hpp"
#include "spikehar/errors.hpp"

using namespace spikehar;

TEST_SUITE("encoders") {

TEST_CASE("delta_encode: hand-evaluated example") {
  // bin1=[0,1,1], bin2=[0,0,2] over three time samples
  Tensor x({3, 2}, {0, 0, 1, 0, 1, 2});
  Tensor s = delta_encode(x);
  // row 0 pads with zeros
  CHECK(s[0] == 0.0);
  CHECK(s[1] == 0.0);
  // diffs [1,0] and [0,2]; variances 0.25 and 1.0; alpha = 0.625
  CHECK(s[2] == 1.0);
  CHECK(s[3] == 0.0);
  CHECK(s[4] == 0.0);
  CHECK(s[5] == 1.0);
}

TEST_CASE("delta_encode: constant signal gives all zeros") {
  Tensor x = Tensor::full({6, 3}, 2.0);
  Tensor s = delta_encode(x);
  for (int64_t i = 0; i < s.size(); ++i) CHECK(s[i] == 0.0);
}

TEST_CASE("delta_encode: odd symmetry") {
  std::mt19937_64 rng(211);
  for (int rep = 0; rep < 50; ++rep) {
    int64_t t = 2 + static_cast<int64_t>(rng() % 10);
    int64_t m = 1 + static_cast<int64_t>(rng() % 6);
    Tensor x = Tensor::uniform({t, m}, -1.0, 1.0, rng);
    Tensor neg(x.shape());
    for (int64_t i = 0; i < x.size(); ++i) neg[i] = -x[i];
    Tensor a = delta_encode(x);
    Tensor b = delta_encode(neg);
    for (int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == -b[i]);
  }
}

TEST_CASE("delta_encode matches the brute-force oracle") {
  std::mt19937_64 rng(223);
  for (int rep = 0; rep < 200; ++rep) {
    int64_t t = 2 + static_cast<int64_t>(rng() % 12);
    int64_t m = 1 + static_cast<int64_t>(rng() % 8);
    Tensor x = Tensor::uniform({t, m}, -2.0, 2.0, rng);
    Tensor got = delta_encode(x);
    Tensor ref = oracles::delta_encode_oracle(x);
    for (int64_t i = 0; i < got.size(); ++i) CHECK(got[i] == ref[i]);
  }
}

TEST_CASE("delta_encode contract: a single time sample is an error") {
  CHECK_THROWS_AS(delta_encode(Tensor({1, 4})), ContractError);
  CHECK_THROWS_AS(delta_encode(Tensor({5})), DimensionError);
}

TEST_CASE("delta_encode_sample preserves shape and alphabet") {
  std::mt19937_64 rng(227);
  Tensor sample = Tensor::uniform({2, 3, 4, 8}, 0.0, 1.0, rng);
  SpikeTrain train = delta_encode_sample(sample);
  CHECK(train.values.shape() == sample.shape());
  CHECK(train.alphabet == SpikeAlphabet::Ternary);
  CHECK(train.in_alphabet());
  // first in-window time step is all zeros
  for (int64_t c = 0; c < 2; ++c) {
    for (int64_t n = 0; n < 3; ++n) {
      for (int64_t r = 0; r < 4; ++r) {
        CHECK(train.values[((c * 3 + n) * 4 + r) * 8 + 0] == 0.0);
      }
    }
  }
}

TEST_CASE("bipolar_threshold: dead zone, strict boundary, mixed values") {
  Tape tape;
  Var a = tape.constant(Tensor({3}, {-0.39, 0.0, 0.39}));
  Var sa = bipolar_threshold(a, 0.4);
  for (int64_t i = 0; i < 3; ++i) CHECK(sa.value()[i] == 0.0);

  Var b = tape.constant(Tensor({2}, {0.4, -0.4}));
  Var sb = bipolar_threshold(b, 0.4);
  CHECK(sb.value()[0] == 0.0);
  CHECK(sb.value()[1] == 0.0);

  Var c = tape.constant(Tensor({3}, {-1.0, 0.0, 1.0}));
  Var sc = bipolar_threshold(c, 0.4);
  CHECK(sc.value()[0] == -1.0);
  CHECK(sc.value()[1] == 0.0);
  CHECK(sc.value()[2] == 1.0);
}

TEST_CASE("bipolar_threshold: straight-through gradient window") {
  Parameter p("x", Tensor({4}, {-2.0, -0.5, 0.5, 2.0}));
  Tape tape;
  Var s = bipolar_threshold(tape.leaf(p), 0.4);
  tape.backward(sum(s));
  CHECK(p.grad[0] == 0.0);  // outside [-1,1]
  CHECK(p.grad[1] == 1.0);
  CHECK(p.grad[2] == 1.0);
  CHECK(p.grad[3] == 0.0);
}

TEST_CASE("scae: zero sample encodes to an all-zero train") {
  std::mt19937_64 rng(229);
  ScaeConfig cfg;
  cfg.t_enc = 2;
  ScaeModel model(cfg, rng);
  // zero input with zero bias: conv output zero, bn(0)=0, no spikes
  for (Parameter* p : model.params()) {
    if (p->name.find("bias") != std::string::npos) p->value.fill(0.0);
  }
  Tape tape;
  Var x = tape.constant(Tensor({1, 2, 4, 3, 6}));
  Var spikes = model.encode(x, BnMode::Eval);
  for (int64_t i = 0; i < spikes.value().size(); ++i) CHECK(spikes.value()[i] == 0.0);
}

TEST_CASE("scae: output is strictly binary and shape-preserving") {
  std::mt19937_64 rng(233);
  ScaeConfig cfg;
  ScaeModel model(cfg, rng);
  Sample s;
  s.data = Tensor::uniform({2, 4, 3, 8}, 0.0, 1.0, rng);
  SpikeTrain train = scae_encode(model, s);
  CHECK(train.values.shape() == s.data.shape());
  CHECK(train.in_alphabet());
}

TEST_CASE("scae encoder matches the composed conv+lif scalar oracle") {
  std::mt19937_64 rng(239);
  ScaeConfig cfg;
  cfg.t_enc = 2;
  cfg.hidden_maps = 3;
  ScaeModel model(cfg, rng);
  Tensor x = Tensor::uniform({1, 2, 4, 2, 6}, 0.0, 1.0, rng);

  Tape tape;
  Var spikes = model.encode(tape.constant(x), BnMode::Eval);

  // reference: run each chunk through conv -> bn(eval) -> scalar LIF oracle
  auto bn_eval = [](const Tensor& t, const BatchNorm3dLayer& bn) {
    Tensor out = t;
    int64_t channels = t.dim(1);
    int64_t inner = t.size() / (t.dim(0) * channels);
    for (int64_t b = 0; b < t.dim(0); ++b) {
      for (int64_t c = 0; c < channels; ++c) {
        double inv = 1.0 / std::sqrt(bn.stats.running_var[c] + bn.eps);
        for (int64_t i = 0; i < inner; ++i) {
          int64_t idx = (b * channels + c) * inner + i;
          out[idx] = (t[idx] - bn.stats.running_mean[c]) * inv * bn.gamma.value[c] + bn.beta_shift.value[c];
        }
      }
    }
    return out;
  };
  auto add_bias = [](Tensor t, const Tensor& bias) {
    int64_t channels = t.dim(1);
    int64_t inner = t.size() / (t.dim(0) * channels);
    for (int64_t b = 0; b < t.dim(0); ++b) {
      for (int64_t c = 0; c < channels; ++c) {
        for (int64_t i = 0; i < inner; ++i) t[(b * channels + c) * inner + i] += bias[c];
      }
    }
    return t;
  };

  std::vector<Tensor> chunk_currents1, chunk_inputs;
  for (int64_t t = 0; t < 2; ++t) {
    Tensor chunk({1, 2, 2, 2, 6});
    for (int64_t c = 0; c < 2; ++c) {
      for (int64_t n = 0; n < 2; ++n) {
        for (int64_t i = 0; i < 2 * 6; ++i) {
          chunk[((c * 2) + n) * 12 + i] = x[((c * 4) + t * 2 + n) * 12 + i];
        }
      }
    }
    chunk_inputs.push_back(chunk);
    Tensor c1 = oracles::conv3d_oracle(chunk, model.enc_conv1.weight.value, {1, 1, 1}, {0, 0, 1});
    chunk_currents1.push_back(bn_eval(add_bias(c1, model.enc_conv1.bias.value), model.enc_bn1));
  }
  auto lif1 = oracles::lif_scalar_oracle(chunk_currents1, model.enc_lif1.beta(), model.enc_lif1.theta());
  std::vector<Tensor> chunk_currents2;
  for (int64_t t = 0; t < 2; ++t) {
    Tensor c2 = oracles::conv3d_oracle(lif1.spikes[static_cast<size_t>(t)],
                                       model.enc_conv2.weight.value, {1, 1, 1}, {0, 0, 1});
    chunk_currents2.push_back(bn_eval(add_bias(c2, model.enc_conv2.bias.value), model.enc_bn2));
  }
  auto lif2 = oracles::lif_scalar_oracle(chunk_currents2, model.enc_lif2.beta(), model.enc_lif2.theta());

  // compare the concatenated chunks
  for (int64_t t = 0; t < 2; ++t) {
    const Tensor& ref = lif2.spikes[static_cast<size_t>(t)];
    for (int64_t c = 0; c < 2; ++c) {
      for (int64_t n = 0; n < 2; ++n) {
        for (int64_t i = 0; i < 12; ++i) {
          double got = spikes.value()[((c * 4) + t * 2 + n) * 12 + i];
          CHECK(got == ref[((c * 2) + n) * 12 + i]);
        }
      }
    }
  }
}

TEST_CASE("scae decode: zeroed final layer gives constant 0.5; outputs stay in (0,1)") {
  std::mt19937_64 rng(241);
  ScaeConfig cfg;
  ScaeModel model(cfg, rng);
  model.dec_tconv2.weight.value.fill(0.0);
  model.dec_tconv2.bias.value.fill(0.0);

  SpikeTrain zero{Tensor({2, 4, 2, 4}), SpikeAlphabet::Binary};
  Tensor recon = scae_decode(model, zero);
  for (int64_t i = 0; i < recon.size(); ++i) CHECK(recon[i] == 0.5);

  std::mt19937_64 rng2(251);
  ScaeModel fresh(cfg, rng2);
  SpikeTrain random_spikes{Tensor({2, 4, 2, 4}), SpikeAlphabet::Binary};
  for (int64_t i = 0; i < random_spikes.values.size(); ++i) {
    random_spikes.values[i] = (rng2() % 3 == 0) ? 1.0 : 0.0;
  }
  Tensor r2 = scae_decode(fresh, random_spikes);
  for (int64_t i = 0; i < r2.size(); ++i) {
    CHECK(r2[i] > 0.0);
    CHECK(r2[i] < 1.0);
  }
}

TEST_CASE("scae rejects window counts not divisible by the timestep count") {
  std::mt19937_64 rng(257);
  ScaeConfig cfg;
  cfg.t_enc = 2;
  ScaeModel model(cfg, rng);
  Tape tape;
  CHECK_THROWS_AS(model.encode(tape.constant(Tensor({1, 2, 3, 2, 4})), BnMode::Eval), ConfigError);
}

TEST_CASE("cae: ternary alphabet and shape preservation") {
  std::mt19937_64 rng(263);
  CaeConfig cfg;
  CaeModel model(cfg, rng);
  Sample s;
  s.data = Tensor::uniform({2, 4, 3, 8}, 0.0, 1.0, rng);
  SpikeTrain train = cae_encode(model, s);
  CHECK(train.values.shape() == s.data.shape());
  CHECK(train.alphabet == SpikeAlphabet::Ternary);
  CHECK(train.in_alphabet());
}

TEST_CASE("cae: batch-normalized pre-activations fire both polarities") {
  std::mt19937_64 rng(269);
  CaeConfig cfg;
  CaeModel model(cfg, rng);
  Tape tape;
  Var x = tape.constant(Tensor::uniform({4, 2, 4, 3, 8}, 0.0, 1.0, rng));
  Var spikes = model.encode(x, BnMode::Train);
  bool pos = false, neg = false;
  for (int64_t i = 0; i < spikes.value().size(); ++i) {
    pos |= spikes.value()[i] == 1.0;
    neg |= spikes.value()[i] == -1.0;
  }
  CHECK(pos);
  CHECK(neg);
}

TEST_CASE("sparsity counts the zero fraction") {
  SpikeTrain t{Tensor({4}, {0, 1, 0, -1}), SpikeAlphabet::Ternary};
  CHECK(t.sparsity() == 0.5);
  SpikeTrain all_zero{Tensor({5}), SpikeAlphabet::Binary};
  CHECK(all_zero.sparsity() == 1.0);
  SpikeTrain bad{Tensor({2}, {0.0, 0.5}), SpikeAlphabet::Binary};
  CHECK_FALSE(bad.in_alphabet());
}

}  // TEST_SUITE
