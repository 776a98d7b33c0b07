#pragma once

#include <memory>
#include <string>
#include <vector>

#include "spikehar/classifier.hpp"
#include "spikehar/encoders.hpp"

namespace spikehar {

struct TrainConfig {
  int64_t batch_size = 8;
  double learning_rate = 1e-4;
  int64_t max_epochs = 50;
  int64_t patience = 15;  // epochs without validation macro-F1 improvement
  double gamma = 1.0;     // classification-loss weight in the total loss
  std::vector<double> class_weights{0.3, 0.3, 0.6, 1.0};
  uint64_t seed = 1;
};

void validate_train_config(const TrainConfig& cfg, int64_t n_classes);

// ---- losses -----------------------------------------------------------------

Var reconstruction_loss(Var x, Var x_hat);
// Negative log-likelihood of the spike-count softmax, weighted per class.
// (The cross-entropy as printed in the source formulation lacks the minus
// sign and would be maximized; the standard NLL is implemented.)
Var classification_loss(Var counts, const std::vector<int>& labels, const std::vector<double>& weights);
Var total_loss(Var l_rec, Var l_class, double gamma);

// ---- optimizer -----------------------------------------------------------------

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, double lr, AdamConfig cfg = {});
  // Bias-corrected update from the accumulated grads; frozen parameters are
  // skipped. Throws NumericError on non-finite gradients.
  void step();
  void zero_grad();
  int64_t steps() const { return t_; }

 private:
  struct Slot {
    Parameter* p;
    Tensor m, v;
  };
  std::vector<Slot> slots_;
  double lr_;
  AdamConfig cfg_;
  int64_t t_ = 0;
};

// ---- model bundle ----------------------------------------------------------------

enum class Method { Scae, Cae, Delta, DirectLin, DirectConv };

Method parse_method(const std::string& name);
std::string method_name(Method m);

struct ModelHyper {
  int64_t t_cls = 29;
  int64_t n_classes = 4;
  int64_t t_enc = 2;
  double cae_tau = 0.4;
  std::vector<int64_t> direct_widths{64, 128, 256};
  int64_t direct_conv_depth = 3;
};

// Encoder (when the method has one) plus classifier head, trained jointly.
struct ModelBundle {
  Method method = Method::Scae;
  InputGeometry geom;
  ModelHyper hyper;
  std::unique_ptr<ScaeModel> scae;
  std::unique_ptr<CaeModel> cae;
  std::unique_ptr<SnnClassifier> classifier;
  std::unique_ptr<DirectSnnModel> direct;

  std::vector<Parameter*> params();
  void reset_state();
};

ModelBundle make_model(Method method, const InputGeometry& geom, const ModelHyper& hyper, uint64_t seed);

struct Batch {
  Tensor data;  // (B, 2, N, R, W)
  std::vector<int> labels;
};

Batch make_batch(const std::vector<Sample>& set, const std::vector<size_t>& idx);

// Delta-encoded copies for Method::Delta; the identity otherwise.
std::vector<Sample> prepare_inputs(Method method, const std::vector<Sample>& set);

struct ForwardOut {
  Var counts;
  Var recon;   // invalid unless the method has a decoder
  Var spikes;  // encoder output; invalid for direct methods
};

// Forward pass over prepared inputs. timesteps = 0 uses the configured T.
ForwardOut bundle_forward(ModelBundle& model, Tape& tape, const Batch& batch, BnMode mode,
                          int64_t timesteps = 0, ModelTrace* trace = nullptr);

// ---- training loop ------------------------------------------------------------------

struct EpochStat {
  double train_loss = 0.0;
  double val_f1 = 0.0;
};

struct TrainReport {
  std::vector<EpochStat> epochs;
  int64_t best_epoch = -1;  // 0-based
  int64_t stop_epoch = -1;
  double best_val_f1 = 0.0;
  double wall_seconds = 0.0;
};

// Shuffled mini-batch training with per-batch state resets, early stopping on
// validation macro-F1, and best-checkpoint restoration.
TrainReport fit(ModelBundle& model, const std::vector<Sample>& train_set,
                const std::vector<Sample>& val_set, const TrainConfig& cfg);

// Predictions over a prepared (or raw) dataset in eval mode.
std::vector<int> predict(ModelBundle& model, const std::vector<Sample>& set, int64_t batch_size,
                         int64_t timesteps = 0, ModelTrace* trace = nullptr);
double evaluate_macro_f1(ModelBundle& model, const std::vector<Sample>& set, int64_t batch_size,
                         int64_t timesteps = 0, ModelTrace* trace = nullptr);

// ---- checkpointing ----------------------------------------------------------
//
// A bundle checkpoint holds all parameters, batch-norm running statistics,
// and enough metadata (method, geometry, hyperparameters) to rebuild the
// model before loading values.

void save_bundle(const std::string& path, ModelBundle& model);
ModelBundle load_bundle(const std::string& path);

}  // namespace spikehar
