#include "spikehar/metrics.hpp"

#include <chrono>

#include "spikehar/errors.hpp"

namespace spikehar {

void ModelTrace::record_spikes(const Tensor& s) {
  spikes += count_nonzero(s);
  neuron_steps += s.size();
}

long long count_nonzero(const Tensor& t) {
  long long n = 0;
  for (int64_t i = 0; i < t.size(); ++i) {
    if (t[i] != 0.0) ++n;
  }
  return n;
}

double macro_f1(const std::vector<int>& predictions, const std::vector<int>& truths, int n_classes) {
  if (predictions.empty() || predictions.size() != truths.size()) {
    throw ContractError("macro_f1: need equal-length non-empty prediction and truth vectors");
  }
  if (n_classes < 1) throw ContractError("macro_f1: n_classes must be >= 1");
  for (size_t i = 0; i < truths.size(); ++i) {
    if (truths[i] < 0 || truths[i] >= n_classes || predictions[i] < 0 || predictions[i] >= n_classes) {
      throw ContractError("macro_f1: label out of range at position " + std::to_string(i));
    }
  }
  std::vector<long long> tp(static_cast<size_t>(n_classes), 0);
  std::vector<long long> fp(static_cast<size_t>(n_classes), 0);
  std::vector<long long> fn(static_cast<size_t>(n_classes), 0);
  for (size_t i = 0; i < truths.size(); ++i) {
    if (predictions[i] == truths[i]) {
      ++tp[static_cast<size_t>(truths[i])];
    } else {
      ++fp[static_cast<size_t>(predictions[i])];
      ++fn[static_cast<size_t>(truths[i])];
    }
  }
  double total = 0.0;
  int counted = 0;
  for (int c = 0; c < n_classes; ++c) {
    auto ci = static_cast<size_t>(c);
    if (tp[ci] + fp[ci] + fn[ci] == 0) continue;  // absent from both sides
    double denom = static_cast<double>(2 * tp[ci] + fp[ci] + fn[ci]);
    total += denom > 0.0 ? 2.0 * static_cast<double>(tp[ci]) / denom : 0.0;
    ++counted;
  }
  return counted > 0 ? total / static_cast<double>(counted) : 0.0;
}

double sparsity(const SpikeTrain& encoding) { return encoding.sparsity(); }

double spike_rate_pct(const ModelTrace& trace) {
  if (trace.neuron_steps == 0) throw ContractError("spike_rate: empty trace");
  return 100.0 * static_cast<double>(trace.spikes) / static_cast<double>(trace.neuron_steps);
}

SynapticOps count_synaptic_ops(const ModelTrace& trace) {
  return {trace.acc_ops, trace.mac_ops};
}

ParamCount count_params(const std::vector<Parameter*>& params) {
  ParamCount out;
  for (const Parameter* p : params) {
    if (p->trainable) {
      out.trainable += p->value.size();
    } else {
      out.frozen += p->value.size();
    }
  }
  return out;
}

double time_inference_ms(const std::function<void()>& fn, int repeats) {
  if (repeats < 1) throw ContractError("time_inference: repeats must be >= 1");
  double total = 0.0;
  for (int i = 0; i < repeats; ++i) {
    auto start = std::chrono::steady_clock::now();
    fn();
    auto end = std::chrono::steady_clock::now();
    total += std::chrono::duration<double, std::milli>(end - start).count();
  }
  return total / static_cast<double>(repeats);
}

}  // namespace spikehar
