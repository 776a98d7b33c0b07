#pragma once

#include <memory>
#include <string>
#include <vector>

#include "spikehar/lif.hpp"
#include "spikehar/metrics.hpp"
#include "spikehar/nn.hpp"

namespace spikehar {

struct InputGeometry {
  int64_t channels = 2;
  int64_t n = 232;
  int64_t r = 10;
  int64_t w = 64;
};

struct ClassifierConfig {
  int64_t t_cls = 29;
  int64_t n_classes = 4;
  std::vector<int64_t> hidden{128, 64};
  double beta0 = 0.9;
  double theta0 = 0.8;
  Triple pool_kernel{1, 1, 4};
  Triple pool_stride{1, 2, 2};
  SurrogateConfig surrogate;
};

// Spiking classifier head: avg-pool over (N,R,W), per-window features
// averaged over the window axis, then fully connected LIF layers. The output
// layer keeps a frozen threshold of 1. The pooled feature vector is injected
// as the same input current at every timestep; predictions decode from the
// spike counts.
class SnnClassifier {
 public:
  SnnClassifier(const ClassifierConfig& cfg, const InputGeometry& geom, std::mt19937_64& rng);

  // encoding (B,C,N,R,W) -> differentiable spike counts (B, n_classes);
  // timesteps = 0 uses cfg.t_cls.
  Var forward_counts(Var encoding, int64_t timesteps = 0, ModelTrace* trace = nullptr);
  void reset_state();
  std::vector<Parameter*> params();
  int64_t feature_dim() const { return feature_dim_; }

  ClassifierConfig cfg;
  InputGeometry geom;
  std::vector<LinearLayer> fcs;
  std::vector<LifLayer> lifs;

 private:
  int64_t feature_dim_ = 0;
};

// Argmax with ties broken toward the lowest index.
int rate_decode(const std::vector<double>& counts);
// Per-row rate_decode of a (B,C) counts tensor.
std::vector<int> rate_decode_batch(const Tensor& counts);

// ---- no-encoding baselines --------------------------------------------------

enum class DirectKind { Linear, Conv };

struct DirectSnnSpec {
  DirectKind kind = DirectKind::Linear;
  std::vector<int64_t> widths{64, 128, 256};  // hidden widths (linear kind)
  int64_t conv_depth = 3;                     // 1..3 (conv kind)
  int64_t t = 29;
  int64_t n_classes = 4;
  double beta0 = 0.9;
  double theta0 = 0.8;
  Triple pool_kernel{1, 1, 4};
  Triple pool_stride{1, 2, 2};
  SurrogateConfig surrogate;
};

// Classifies raw samples fed as a continuous input current. The linear kind
// shares the pooled frontend of SnnClassifier; the conv kind stacks 1-3
// conv3d+LIF layers (channel progression 64->128->256) with a linear readout
// and no pooling.
class DirectSnnModel {
 public:
  DirectSnnModel(const DirectSnnSpec& spec, const InputGeometry& geom, std::mt19937_64& rng);

  Var forward_counts(Var sample, int64_t timesteps = 0, ModelTrace* trace = nullptr);
  void reset_state();
  std::vector<Parameter*> params();
  int64_t feature_dim() const { return feature_dim_; }

  DirectSnnSpec spec;
  InputGeometry geom;
  std::vector<Conv3dLayer> convs;
  std::vector<LinearLayer> fcs;
  std::vector<LifLayer> lifs;

 private:
  int64_t feature_dim_ = 0;
};

// Validates the spec (supported depths/widths) and constructs the model.
std::unique_ptr<DirectSnnModel> build_direct_snn(const DirectSnnSpec& spec, const InputGeometry& geom,
                                                 std::mt19937_64& rng);

}  // namespace spikehar
