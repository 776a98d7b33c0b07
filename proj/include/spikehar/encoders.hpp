#pragma once

#include <memory>
#include <string>
#include <vector>

#include "spikehar/lif.hpp"
#include "spikehar/nn.hpp"
#include "spikehar/preprocess.hpp"

namespace spikehar {
struct ModelTrace;
}

namespace spikehar {

enum class SpikeAlphabet { Binary, Ternary };

// Time-indexed spike tensor; the currency between encoder and classifier.
struct SpikeTrain {
  Tensor values;
  SpikeAlphabet alphabet = SpikeAlphabet::Binary;

  // Fraction of zeros.
  double sparsity() const;
  bool in_alphabet() const;
};

// Ternary threshold at +-tau (strict), straight-through gradient (identity
// where |x| <= 1, zero outside).
Var bipolar_threshold(Var x, double tau);

// Eq.-style delta filter over a (time, bins) matrix: first differences along
// time, threshold at +-alpha where alpha is the mean over time of the
// per-time population variance across bins. Row 0 of the result is zero.
Tensor delta_encode(const Tensor& time_by_bins);

// Applies delta_encode per channel and window of a (2,N,R,W) sample, along
// the in-window time axis W.
SpikeTrain delta_encode_sample(const Tensor& sample);

// ---- spiking convolutional autoencoder -------------------------------------
//
// Encoder: conv3d(2->64, 1x1x3, same-pad) -> bn -> LIF, then conv3d(64->2) ->
// bn -> LIF; binary spike output, dimension preserving. Decoder mirrors it
// with transposed convolutions; the last stage is a sigmoid. The input is
// processed as t_enc chunks along the window axis with LIF state persisting
// across chunks and reset between samples.

struct ScaeConfig {
  int64_t t_enc = 2;
  int64_t channels = 2;
  int64_t hidden_maps = 64;
  double beta0 = 0.9;
  double theta0 = 1.0;
  SurrogateConfig surrogate;
};

class ScaeModel {
 public:
  ScaeModel(const ScaeConfig& cfg, std::mt19937_64& rng);

  struct Out {
    Var spikes;
    Var recon;
  };

  Var encode(Var x, BnMode mode, ModelTrace* trace = nullptr);  // -> binary spikes, same shape
  Var decode(Var spikes, BnMode mode, ModelTrace* trace = nullptr);  // -> reconstruction in (0,1)
  Out forward(Var x, BnMode mode, ModelTrace* trace = nullptr);
  void reset_state();
  std::vector<Parameter*> params();

  ScaeConfig cfg;
  Conv3dLayer enc_conv1, enc_conv2;
  BatchNorm3dLayer enc_bn1, enc_bn2;
  LifLayer enc_lif1, enc_lif2;
  TransposedConv3dLayer dec_tconv1, dec_tconv2;
  BatchNorm3dLayer dec_bn;
  LifLayer dec_lif;
};

// ---- conventional autoencoder with bipolar thresholding ---------------------
//
// Same geometry as the SCAE with LIF layers replaced by ReLU; the encoder
// output is the bipolar threshold (at tau) of the second batch-normalized
// convolution, so both positive and negative spikes can occur.

struct CaeConfig {
  int64_t t_enc = 2;
  int64_t channels = 2;
  int64_t hidden_maps = 64;
  double tau = 0.4;
};

class CaeModel {
 public:
  CaeModel(const CaeConfig& cfg, std::mt19937_64& rng);

  struct Out {
    Var spikes;
    Var recon;
  };

  Var encode(Var x, BnMode mode, ModelTrace* trace = nullptr);  // ternary {-1,0,1}
  Var decode(Var spikes, BnMode mode, ModelTrace* trace = nullptr);
  Out forward(Var x, BnMode mode, ModelTrace* trace = nullptr);
  std::vector<Parameter*> params();

  CaeConfig cfg;
  Conv3dLayer enc_conv1, enc_conv2;
  BatchNorm3dLayer enc_bn1, enc_bn2;
  TransposedConv3dLayer dec_tconv1, dec_tconv2;
  BatchNorm3dLayer dec_bn;
};

// ---- single-sample convenience wrappers (eval mode, batch of one) ----------

SpikeTrain scae_encode(ScaeModel& model, const Sample& sample);
Tensor scae_decode(ScaeModel& model, const SpikeTrain& spikes);
SpikeTrain cae_encode(CaeModel& model, const Sample& sample);

}  // namespace spikehar
