#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "spikehar/tensor.hpp"

namespace spikehar {

// Complex CIR time series: K packets x L range bins, packet-major.
struct CirRecording {
  std::vector<std::complex<double>> cir;
  int64_t packets = 0;  // K
  int64_t bins = 0;     // L
  int label = 0;
  int subject = 0;
  double t_c = 0.27e-3;  // sampling period, seconds

  std::complex<double>& at(int64_t k, int64_t l) { return cir[static_cast<size_t>(k * bins + l)]; }
  const std::complex<double>& at(int64_t k, int64_t l) const {
    return cir[static_cast<size_t>(k * bins + l)];
  }
};

// W, delta, R, N of the preprocessing pipeline.
struct PreprocessParams {
  int64_t window = 64;    // W
  int64_t step = 32;      // delta
  int64_t bins = 10;      // R
  int64_t segment = 232;  // N
};

// Model-ready tensor of shape (2, N, R, W) with values in [0,1].
struct Sample {
  Tensor data;
  int label = 0;
  int subject = 0;
  std::string recording_id;
  int64_t segment_index = 0;
};

// Percentile with linear interpolation between order statistics; p in [0,100].
double percentile(std::vector<double> values, double p);
// 75th minus 25th percentile.
double iqr(std::vector<double> values);

// Start/end (exclusive) packet indices of sliding windows; throws
// ContractError when num_packets < window.
std::vector<std::pair<int64_t, int64_t>> window_slices(int64_t num_packets, int64_t window,
                                                       int64_t step);

// Indices of the R bins with the largest IQR(real)+IQR(imag) over the window
// rows, ties broken toward the lower bin index; result sorted ascending.
// `window` points at W contiguous packet rows of L bins each.
std::vector<int64_t> iqr_select_bins(const std::complex<double>* window, int64_t w, int64_t l,
                                     int64_t r);

// (x - min) / (max - min) over the whole tensor; all zeros when max == min.
Tensor minmax_normalize(const Tensor& x);

// Segment starts 0, N/2, N, ... while start+N <= num_windows; empty when
// num_windows < segment_len.
std::vector<int64_t> segment_sequence(int64_t num_windows, int64_t segment_len);

// Full pipeline: windows -> per-window bin selection -> real/imag extraction
// -> segmentation -> per-sample min-max normalization. Recordings shorter
// than one window yield an empty list.
std::vector<Sample> build_sample(const CirRecording& rec, const PreprocessParams& params,
                                 const std::string& recording_id = "");

}  // namespace spikehar
