#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "spikehar/preprocess.hpp"

namespace spikehar {

// ---- CIR1 container ------------------------------------------------------
//
// Header: magic "CIR1", version u32, K u32, L u32, T_c f64, label u8,
// subject u8. Body: K*L complex values as interleaved (real f32, imag f32),
// little-endian, packet-major. Values are stored in f32 and promoted to f64
// on read; recordings produced by the generator are pre-rounded to f32 so
// write/read round-trips are bit-exact.

void write_cir(const std::string& path, const CirRecording& rec);
CirRecording read_cir(const std::string& path);

// Rounds every component through f32 (the storage precision).
void quantize_to_storage(CirRecording& rec);

// ---- synthetic CIR generator ----------------------------------------------

// One propagation path: a complex exponential at a fixed range bin whose
// phase is sinusoidally modulated and whose amplitude follows an envelope.
struct PathSpec {
  int64_t bin = 0;
  double amplitude = 1.0;
  double base_phase = 0.0;
  double mod_freq_hz = 0.0;  // phase-modulation frequency
  double mod_depth = 0.0;    // phase-modulation depth, radians
  double pulse_freq_hz = 0.0;  // amplitude pulsing; 0 disables
  double pulse_floor = 1.0;    // envelope floor while pulsing, in [0,1]
  double burst_center = -1.0;  // burst position as a fraction of the recording; <0 disables
  double burst_width = 0.0;    // burst width as a fraction of the recording
};

struct ClassProfile {
  std::string name;
  std::vector<PathSpec> paths;
};

struct SynthConfig {
  std::vector<ClassProfile> profiles;  // one per activity class
  double noise_std = 0.02;             // per-component white noise
  double clutter_amp = 0.25;           // static clutter amplitude, all bins
  int64_t packets = 7456;              // K
  int64_t bins = 110;                  // L
  double t_c = 0.27e-3;                // seconds
  uint64_t seed = 1;
};

// The four activity archetypes (walking, running, sitting, waving), distinct
// in modulation statistics only.
SynthConfig default_synth_config();

// Throws ConfigError on Nyquist violations or invalid amplitudes.
void validate_synth_config(const SynthConfig& cfg);

// Deterministic in (cfg.seed, class_id, subject, index).
CirRecording synth_generate(const SynthConfig& cfg, int class_id, int subject, int64_t index);

// ---- subject-based splits ---------------------------------------------------

struct SplitResult {
  std::vector<size_t> train, val, test;
  std::vector<std::string> warnings;  // per-class coverage warnings
};

// Assigns item i (with subjects[i], labels[i]) to the split owning its
// subject. Subject sets must be disjoint and jointly cover all subjects seen.
SplitResult split_by_subject(const std::vector<int>& subjects, const std::vector<int>& labels,
                             int n_classes, const std::set<int>& train_subjects,
                             const std::set<int>& val_subjects, const std::set<int>& test_subjects);

// ---- corpus manifest --------------------------------------------------------

struct ManifestEntry {
  std::string path;
  int label = 0;
  int subject = 0;
  int64_t packets = 0;
};

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

// ---- preprocessed samples on disk -------------------------------------------
//
// One SPKC file per sample ("data" tensor plus scalar metadata), plus a CSV
// index (path,label,subject,recording,segment).

void write_sample(const std::string& path, const Sample& sample);
Sample read_sample(const std::string& path);

struct SampleIndexEntry {
  std::string path;
  int label = 0;
  int subject = 0;
  std::string recording;
  int64_t segment = 0;
};

void write_sample_index(const std::string& path, const std::vector<SampleIndexEntry>& entries);
std::vector<SampleIndexEntry> read_sample_index(const std::string& path);
std::vector<Sample> load_samples(const std::vector<SampleIndexEntry>& entries);

}  // namespace spikehar
