#include "spikehar/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "spikehar/errors.hpp"

namespace spikehar {

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw ContractError("percentile: empty input");
  std::sort(values.begin(), values.end());
  double h = (static_cast<double>(values.size()) - 1.0) * p / 100.0;
  auto lo = static_cast<size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  double frac = h - std::floor(h);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

double iqr(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  double h25 = (static_cast<double>(values.size()) - 1.0) * 0.25;
  double h75 = (static_cast<double>(values.size()) - 1.0) * 0.75;
  auto at = [&](double h) {
    auto lo = static_cast<size_t>(std::floor(h));
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + (h - std::floor(h)) * (values[lo + 1] - values[lo]);
  };
  return at(h75) - at(h25);
}

std::vector<std::pair<int64_t, int64_t>> window_slices(int64_t num_packets, int64_t window,
                                                       int64_t step) {
  if (step < 1) throw ContractError("window_slices: step must be >= 1");
  if (window < 1) throw ContractError("window_slices: window must be >= 1");
  if (num_packets < window) {
    throw ContractError("window_slices: " + std::to_string(num_packets) +
                        " packets are fewer than one window of " + std::to_string(window));
  }
  std::vector<std::pair<int64_t, int64_t>> out;
  for (int64_t start = 0; start + window <= num_packets; start += step) {
    out.emplace_back(start, start + window);
  }
  return out;
}

std::vector<int64_t> iqr_select_bins(const std::complex<double>* window, int64_t w, int64_t l,
                                     int64_t r) {
  if (l < r) {
    throw ContractError("iqr_select_bins: cannot select " + std::to_string(r) + " of " +
                        std::to_string(l) + " bins");
  }
  std::vector<double> measure(static_cast<size_t>(l));
  std::vector<double> re(static_cast<size_t>(w)), im(static_cast<size_t>(w));
  for (int64_t b = 0; b < l; ++b) {
    for (int64_t k = 0; k < w; ++k) {
      const std::complex<double>& v = window[k * l + b];
      re[static_cast<size_t>(k)] = v.real();
      im[static_cast<size_t>(k)] = v.imag();
    }
    measure[static_cast<size_t>(b)] = iqr(re) + iqr(im);
  }
  std::vector<int64_t> order(static_cast<size_t>(l));
  for (int64_t b = 0; b < l; ++b) order[static_cast<size_t>(b)] = b;
  // stable sort by descending measure keeps the lower bin index on ties
  std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    return measure[static_cast<size_t>(a)] > measure[static_cast<size_t>(b)];
  });
  order.resize(static_cast<size_t>(r));
  std::sort(order.begin(), order.end());
  return order;
}

Tensor minmax_normalize(const Tensor& x) {
  if (x.size() == 0) return x;
  double lo = x[0], hi = x[0];
  for (int64_t i = 1; i < x.size(); ++i) {
    lo = std::min(lo, x[i]);
    hi = std::max(hi, x[i]);
  }
  Tensor out(x.shape());
  if (hi == lo) return out;
  double inv = 1.0 / (hi - lo);
  for (int64_t i = 0; i < x.size(); ++i) out[i] = (x[i] - lo) * inv;
  return out;
}

std::vector<int64_t> segment_sequence(int64_t num_windows, int64_t segment_len) {
  std::vector<int64_t> starts;
  if (segment_len < 1 || num_windows < segment_len) return starts;
  int64_t hop = segment_len / 2;
  if (hop < 1) hop = 1;
  for (int64_t start = 0; start + segment_len <= num_windows; start += hop) {
    starts.push_back(start);
  }
  return starts;
}

std::vector<Sample> build_sample(const CirRecording& rec, const PreprocessParams& params,
                                 const std::string& recording_id) {
  std::vector<Sample> samples;
  if (rec.packets < params.window) return samples;

  auto slices = window_slices(rec.packets, params.window, params.step);
  const int64_t w = params.window, r = params.bins, n = params.segment;

  // per-window features, each (2, R, W) flattened
  std::vector<std::vector<double>> features;
  features.reserve(slices.size());
  for (const auto& [start, end] : slices) {
    (void)end;
    const std::complex<double>* win = rec.cir.data() + start * rec.bins;
    std::vector<int64_t> sel = iqr_select_bins(win, w, rec.bins, r);
    std::vector<double> feat(static_cast<size_t>(2 * r * w));
    for (int64_t ri = 0; ri < r; ++ri) {
      int64_t bin = sel[static_cast<size_t>(ri)];
      for (int64_t k = 0; k < w; ++k) {
        const std::complex<double>& v = win[k * rec.bins + bin];
        feat[static_cast<size_t>(0 * r * w + ri * w + k)] = v.real();
        feat[static_cast<size_t>(1 * r * w + ri * w + k)] = v.imag();
      }
    }
    features.push_back(std::move(feat));
  }

  auto starts = segment_sequence(static_cast<int64_t>(features.size()), n);
  int64_t seg_index = 0;
  for (int64_t start : starts) {
    Tensor data({2, n, r, w});
    for (int64_t ni = 0; ni < n; ++ni) {
      const std::vector<double>& feat = features[static_cast<size_t>(start + ni)];
      for (int64_t c = 0; c < 2; ++c) {
        double* dst = data.data() + (c * n + ni) * r * w;
        const double* src = feat.data() + c * r * w;
        std::copy(src, src + r * w, dst);
      }
    }
    Sample s;
    s.data = minmax_normalize(data);
    s.label = rec.label;
    s.subject = rec.subject;
    s.recording_id = recording_id;
    s.segment_index = seg_index++;
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace spikehar
