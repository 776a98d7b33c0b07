#include "spikehar/data_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "spikehar/checkpoint.hpp"
#include "spikehar/errors.hpp"

namespace spikehar {

namespace {

constexpr char kMagic[4] = {'C', 'I', 'R', '1'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& buf, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(buf, bits);
}

void put_f64(std::string& buf, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;
  const std::string& path;

  void need(size_t n, const char* what) {
    if (pos + n > buf.size()) {
      throw FormatError(path + ": truncated " + what + " at byte offset " + std::to_string(pos) +
                        " (need " + std::to_string(n) + " bytes, have " +
                        std::to_string(buf.size() - pos) + ")");
    }
  }
  uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<uint8_t>(buf[pos++]);
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  float f32(const char* what) {
    uint32_t bits = u32(what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64(const char* what) {
    uint64_t bits = u64(what);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& buf) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path + ": cannot open for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw FormatError(path + ": write failed");
}

uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

void write_cir(const std::string& path, const CirRecording& rec) {
  if (rec.packets * rec.bins != static_cast<int64_t>(rec.cir.size())) {
    throw ContractError("write_cir: K*L does not match body size");
  }
  std::string buf;
  buf.reserve(static_cast<size_t>(26 + rec.cir.size() * 8));
  buf.append(kMagic, 4);
  put_u32(buf, kVersion);
  put_u32(buf, static_cast<uint32_t>(rec.packets));
  put_u32(buf, static_cast<uint32_t>(rec.bins));
  put_f64(buf, rec.t_c);
  buf.push_back(static_cast<char>(rec.label));
  buf.push_back(static_cast<char>(rec.subject));
  for (const auto& v : rec.cir) {
    put_f32(buf, static_cast<float>(v.real()));
    put_f32(buf, static_cast<float>(v.imag()));
  }
  write_file(path, buf);
}

CirRecording read_cir(const std::string& path) {
  std::string buf = read_file(path);
  Reader r{buf, 0, path};
  r.need(4, "magic");
  if (std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw FormatError(path + ": bad magic at byte offset 0 (expected \"CIR1\")");
  }
  r.pos = 4;
  uint32_t version = r.u32("version");
  if (version != kVersion) {
    throw FormatError(path + ": unsupported version " + std::to_string(version) +
                      " at byte offset 4");
  }
  CirRecording rec;
  rec.packets = r.u32("packet count");
  rec.bins = r.u32("bin count");
  rec.t_c = r.f64("sampling period");
  rec.label = r.u8("label");
  rec.subject = r.u8("subject");
  uint64_t n = static_cast<uint64_t>(rec.packets) * static_cast<uint64_t>(rec.bins);
  size_t expected = static_cast<size_t>(n) * 8;
  if (buf.size() - r.pos != expected) {
    throw FormatError(path + ": body length mismatch at byte offset " + std::to_string(r.pos) +
                      " (expected " + std::to_string(expected) + " bytes, have " +
                      std::to_string(buf.size() - r.pos) + ")");
  }
  rec.cir.resize(static_cast<size_t>(n));
  for (uint64_t i = 0; i < n; ++i) {
    double re = static_cast<double>(r.f32("sample"));
    double im = static_cast<double>(r.f32("sample"));
    rec.cir[static_cast<size_t>(i)] = {re, im};
  }
  return rec;
}

void quantize_to_storage(CirRecording& rec) {
  for (auto& v : rec.cir) {
    v = {static_cast<double>(static_cast<float>(v.real())),
         static_cast<double>(static_cast<float>(v.imag()))};
  }
}

SynthConfig default_synth_config() {
  // Modulation rates are matched to desk-scale recording lengths (tens of
  // milliseconds at T_c = 0.27 ms), not to real activity timescales; the four
  // archetypes differ in modulation statistics only.
  SynthConfig cfg;
  cfg.profiles.resize(4);

  // walking: sustained deep phase swings on four adjacent bins
  cfg.profiles[0].name = "walking";
  for (int64_t b : {3, 4, 5, 6}) {
    PathSpec p;
    p.bin = b;
    p.amplitude = 1.0;
    p.mod_freq_hz = 60.0;
    p.mod_depth = 5.0;
    cfg.profiles[0].paths.push_back(p);
  }

  // running: same footprint, faster modulation, gait-style amplitude pulsing
  cfg.profiles[1].name = "running";
  for (int64_t b : {3, 4, 5, 6}) {
    PathSpec p;
    p.bin = b;
    p.amplitude = 1.0;
    p.mod_freq_hz = 150.0;
    p.mod_depth = 5.0;
    p.pulse_freq_hz = 45.0;
    p.pulse_floor = 0.25;
    cfg.profiles[1].paths.push_back(p);
  }

  // sitting down: one transient burst, quiet otherwise
  cfg.profiles[2].name = "sitting";
  for (int64_t b : {3, 4, 5, 6}) {
    PathSpec p;
    p.bin = b;
    p.amplitude = 1.0;
    p.mod_freq_hz = 35.0;
    p.mod_depth = 3.5;
    p.burst_center = 0.5;
    p.burst_width = 0.45;
    cfg.profiles[2].paths.push_back(p);
  }

  // waving hands: low-amplitude, high-frequency, only two bins; the low bin
  // indices keep the selected-row layout stable across windows
  cfg.profiles[3].name = "waving";
  for (int64_t b : {0, 1}) {
    PathSpec p;
    p.bin = b;
    p.amplitude = 0.45;
    p.mod_freq_hz = 300.0;
    p.mod_depth = 2.0;
    cfg.profiles[3].paths.push_back(p);
  }

  return cfg;
}

void validate_synth_config(const SynthConfig& cfg) {
  if (cfg.profiles.empty()) throw ConfigError("synth config: no class profiles");
  if (cfg.packets < 1 || cfg.bins < 1) throw ConfigError("synth config: packets and bins must be >= 1");
  if (cfg.t_c <= 0.0) throw ConfigError("synth config: sampling period must be > 0");
  if (cfg.noise_std < 0.0) throw ConfigError("synth config: noise std must be >= 0");
  if (cfg.clutter_amp < 0.0) throw ConfigError("synth config: clutter amplitude must be >= 0");
  double nyquist = 0.5 / cfg.t_c;
  for (size_t c = 0; c < cfg.profiles.size(); ++c) {
    for (const PathSpec& p : cfg.profiles[c].paths) {
      if (p.amplitude < 0.0) {
        throw ConfigError("synth config: negative amplitude in class " + std::to_string(c));
      }
      if (p.bin < 0 || p.bin >= cfg.bins) {
        throw ConfigError("synth config: path bin " + std::to_string(p.bin) +
                          " outside [0," + std::to_string(cfg.bins) + ") in class " + std::to_string(c));
      }
      if (p.mod_freq_hz >= nyquist || p.pulse_freq_hz >= nyquist) {
        throw ConfigError("synth config: modulation frequency " + std::to_string(p.mod_freq_hz) +
                          " Hz violates the Nyquist limit " + std::to_string(nyquist) + " Hz");
      }
    }
  }
}

CirRecording synth_generate(const SynthConfig& cfg, int class_id, int subject, int64_t index) {
  validate_synth_config(cfg);
  if (class_id < 0 || class_id >= static_cast<int>(cfg.profiles.size())) {
    throw ContractError("synth_generate: class id " + std::to_string(class_id) + " out of range");
  }

  uint64_t stream = cfg.seed;
  stream ^= 0x517cc1b727220a95ULL * static_cast<uint64_t>(class_id + 1);
  stream ^= 0x2545f4914f6cdd1dULL * static_cast<uint64_t>(subject + 1);
  stream ^= 0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(index + 1);
  std::mt19937_64 rng(splitmix64(stream));
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  CirRecording rec;
  rec.packets = cfg.packets;
  rec.bins = cfg.bins;
  rec.label = class_id;
  rec.subject = subject;
  rec.t_c = cfg.t_c;
  rec.cir.assign(static_cast<size_t>(cfg.packets * cfg.bins), {0.0, 0.0});

  // static clutter per bin
  std::vector<std::complex<double>> clutter(static_cast<size_t>(cfg.bins));
  for (int64_t b = 0; b < cfg.bins; ++b) {
    double phase = 2.0 * M_PI * uni(rng);
    double amp = cfg.clutter_amp * (0.7 + 0.6 * uni(rng));
    clutter[static_cast<size_t>(b)] = std::polar(amp, phase);
  }

  const ClassProfile& profile = cfg.profiles[static_cast<size_t>(class_id)];
  struct ActivePath {
    PathSpec spec;
    double phase0, mod_phase, freq, amp;
  };
  std::vector<ActivePath> paths;
  for (const PathSpec& p : profile.paths) {
    ActivePath a;
    a.spec = p;
    a.phase0 = p.base_phase + 2.0 * M_PI * uni(rng);
    a.mod_phase = 2.0 * M_PI * uni(rng);
    a.freq = p.mod_freq_hz * (0.92 + 0.16 * uni(rng));  // subject/recording variability
    a.amp = p.amplitude * (0.9 + 0.2 * uni(rng));
    paths.push_back(a);
  }
  double burst_shift = 0.12 * (uni(rng) - 0.5);

  for (int64_t k = 0; k < cfg.packets; ++k) {
    double t = static_cast<double>(k) * cfg.t_c;
    double u = cfg.packets > 1 ? static_cast<double>(k) / static_cast<double>(cfg.packets - 1) : 0.0;
    for (int64_t b = 0; b < cfg.bins; ++b) {
      rec.at(k, b) = clutter[static_cast<size_t>(b)];
    }
    for (const ActivePath& a : paths) {
      double env = 1.0;
      if (a.spec.pulse_freq_hz > 0.0) {
        double s = std::sin(2.0 * M_PI * a.spec.pulse_freq_hz * t + a.mod_phase * 0.5);
        env = a.spec.pulse_floor + (1.0 - a.spec.pulse_floor) * std::max(0.0, s);
      }
      if (a.spec.burst_center >= 0.0) {
        double center = a.spec.burst_center + burst_shift;
        double d = (u - center) / (0.5 * a.spec.burst_width);
        env *= std::abs(d) < 1.0 ? 0.5 * (1.0 + std::cos(M_PI * d)) : 0.0;
      }
      double phase = a.phase0 + a.spec.mod_depth * std::sin(2.0 * M_PI * a.freq * t + a.mod_phase);
      rec.at(k, a.spec.bin) += std::polar(a.amp * env, phase);
    }
    for (int64_t b = 0; b < cfg.bins; ++b) {
      rec.at(k, b) += std::complex<double>(cfg.noise_std * gauss(rng), cfg.noise_std * gauss(rng));
    }
  }

  quantize_to_storage(rec);
  return rec;
}

SplitResult split_by_subject(const std::vector<int>& subjects, const std::vector<int>& labels,
                             int n_classes, const std::set<int>& train_subjects,
                             const std::set<int>& val_subjects, const std::set<int>& test_subjects) {
  if (subjects.size() != labels.size()) {
    throw ContractError("split_by_subject: subjects and labels length mismatch");
  }
  auto overlaps = [](const std::set<int>& a, const std::set<int>& b) {
    for (int s : a) {
      if (b.count(s)) return true;
    }
    return false;
  };
  if (overlaps(train_subjects, val_subjects) || overlaps(train_subjects, test_subjects) ||
      overlaps(val_subjects, test_subjects)) {
    throw ContractError("split_by_subject: subject sets overlap");
  }

  SplitResult out;
  for (size_t i = 0; i < subjects.size(); ++i) {
    int s = subjects[i];
    if (train_subjects.count(s)) {
      out.train.push_back(i);
    } else if (val_subjects.count(s)) {
      out.val.push_back(i);
    } else if (test_subjects.count(s)) {
      out.test.push_back(i);
    } else {
      throw ContractError("split_by_subject: subject " + std::to_string(s) +
                          " is not assigned to any split");
    }
  }

  const char* names[3] = {"train", "val", "test"};
  const std::vector<size_t>* sets[3] = {&out.train, &out.val, &out.test};
  for (int si = 0; si < 3; ++si) {
    std::vector<bool> seen(static_cast<size_t>(n_classes), false);
    for (size_t i : *sets[si]) {
      int y = labels[i];
      if (y >= 0 && y < n_classes) seen[static_cast<size_t>(y)] = true;
    }
    for (int c = 0; c < n_classes; ++c) {
      if (!seen[static_cast<size_t>(c)]) {
        out.warnings.push_back(std::string("class ") + std::to_string(c) +
                               " has no items in the " + names[si] + " split");
      }
    }
  }
  return out;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError(path + ": cannot open for writing");
  out << "path,label,subject,packets\n";
  for (const auto& e : entries) {
    out << e.path << "," << e.label << "," << e.subject << "," << e.packets << "\n";
  }
  if (!out) throw FormatError(path + ": write failed");
}

void write_sample(const std::string& path, const Sample& sample) {
  NamedTensors tensors;
  tensors.emplace_back("data", sample.data);
  tensors.emplace_back("label", Tensor::scalar(static_cast<double>(sample.label)));
  tensors.emplace_back("subject", Tensor::scalar(static_cast<double>(sample.subject)));
  tensors.emplace_back("segment", Tensor::scalar(static_cast<double>(sample.segment_index)));
  save_checkpoint(path, tensors);
}

Sample read_sample(const std::string& path) {
  NamedTensors tensors = load_checkpoint(path);
  Sample s;
  bool have_data = false;
  for (auto& [name, t] : tensors) {
    if (name == "data") {
      s.data = std::move(t);
      have_data = true;
    } else if (name == "label") {
      s.label = static_cast<int>(t.scalar_value());
    } else if (name == "subject") {
      s.subject = static_cast<int>(t.scalar_value());
    } else if (name == "segment") {
      s.segment_index = static_cast<int64_t>(t.scalar_value());
    }
  }
  if (!have_data) throw FormatError(path + ": sample file has no 'data' tensor");
  return s;
}

void write_sample_index(const std::string& path, const std::vector<SampleIndexEntry>& entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError(path + ": cannot open for writing");
  out << "path,label,subject,recording,segment\n";
  for (const auto& e : entries) {
    out << e.path << "," << e.label << "," << e.subject << "," << e.recording << "," << e.segment
        << "\n";
  }
  if (!out) throw FormatError(path + ": write failed");
}

std::vector<SampleIndexEntry> read_sample_index(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path + ": cannot open for reading");
  std::vector<SampleIndexEntry> entries;
  std::string line;
  bool header = true;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::istringstream ss(line);
    SampleIndexEntry e;
    std::string label, subject, segment;
    if (!std::getline(ss, e.path, ',') || !std::getline(ss, label, ',') ||
        !std::getline(ss, subject, ',') || !std::getline(ss, e.recording, ',') ||
        !std::getline(ss, segment)) {
      throw FormatError(path + ": malformed index line " + std::to_string(lineno));
    }
    try {
      e.label = std::stoi(label);
      e.subject = std::stoi(subject);
      e.segment = std::stoll(segment);
    } catch (const std::exception&) {
      throw FormatError(path + ": non-numeric field on index line " + std::to_string(lineno));
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<Sample> load_samples(const std::vector<SampleIndexEntry>& entries) {
  std::vector<Sample> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    Sample s = read_sample(e.path);
    s.label = e.label;
    s.subject = e.subject;
    s.recording_id = e.recording;
    s.segment_index = e.segment;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path + ": cannot open for reading");
  std::vector<ManifestEntry> entries;
  std::string line;
  bool header = true;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::istringstream ss(line);
    ManifestEntry e;
    std::string label, subject, packets;
    if (!std::getline(ss, e.path, ',') || !std::getline(ss, label, ',') ||
        !std::getline(ss, subject, ',') || !std::getline(ss, packets)) {
      throw FormatError(path + ": malformed manifest line " + std::to_string(lineno));
    }
    try {
      e.label = std::stoi(label);
      e.subject = std::stoi(subject);
      e.packets = std::stoll(packets);
    } catch (const std::exception&) {
      throw FormatError(path + ": non-numeric field on manifest line " + std::to_string(lineno));
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace spikehar
