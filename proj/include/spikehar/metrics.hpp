#pragma once

#include <functional>
#include <vector>

#include "spikehar/autodiff.hpp"
#include "spikehar/encoders.hpp"

namespace spikehar {

// Spike counts and synaptic-operation counters recorded during forward passes.
// ACC ops are event-driven accumulates triggered by input spikes; MAC ops are
// dense multiply-accumulates of analog layers (convolutions on real input,
// the decoder, pooling, batch norm).
struct ModelTrace {
  long long spikes = 0;
  long long neuron_steps = 0;  // LIF neurons x timesteps
  long long acc_ops = 0;
  long long mac_ops = 0;

  void record_spikes(const Tensor& s);
  void add_acc(long long ops) { acc_ops += ops; }
  void add_mac(long long ops) { mac_ops += ops; }
  bool empty() const { return neuron_steps == 0 && acc_ops == 0 && mac_ops == 0; }
};

long long count_nonzero(const Tensor& t);

// Macro-averaged F1 over classes 0..n_classes-1: per-class F1 = 2PR/(P+R)
// with 0/0 = 0; classes absent from both truths and predictions are excluded
// from the mean.
double macro_f1(const std::vector<int>& predictions, const std::vector<int>& truths, int n_classes);

double sparsity(const SpikeTrain& encoding);

// Percentage of neuron-timesteps that emitted a spike.
double spike_rate_pct(const ModelTrace& trace);

struct SynapticOps {
  long long acc_ops = 0;
  long long mac_ops = 0;
};
SynapticOps count_synaptic_ops(const ModelTrace& trace);

struct ParamCount {
  int64_t trainable = 0;
  int64_t frozen = 0;
};
ParamCount count_params(const std::vector<Parameter*>& params);

// Mean wall-clock milliseconds of fn over `repeats` runs (monotonic clock).
double time_inference_ms(const std::function<void()>& fn, int repeats = 10);

}  // namespace spikehar
