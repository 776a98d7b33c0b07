#include "spikehar/config.hpp"

#include <fstream>
#include <sstream>

#include "spikehar/errors.hpp"

namespace spikehar {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream ss(s);
  while (std::getline(ss, cur, ',')) parts.push_back(trim(cur));
  return parts;
}

}  // namespace

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str(), path);
}

Config Config::from_string(const std::string& text, const std::string& origin) {
  Config cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    size_t eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value, got '" + s + "'");
    }
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    }
    if (cfg.entries_.count(key)) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    cfg.entries_[key] = value;
  }
  return cfg;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

int64_t Config::get_int(const std::string& key, int64_t fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    size_t used = 0;
    int64_t v = std::stoll(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected integer, got '" + it->second + "'");
  }
}

double Config::get_double(const std::string& key, double fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    size_t used = 0;
    double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected number, got '" + it->second + "'");
  }
}

std::vector<double> Config::get_double_list(const std::string& key,
                                            const std::vector<double>& fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::vector<double> out;
  for (const std::string& part : split_csv(it->second)) {
    try {
      out.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': expected number list, got '" + it->second + "'");
    }
  }
  return out;
}

std::vector<int64_t> Config::get_int_list(const std::string& key,
                                          const std::vector<int64_t>& fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::vector<int64_t> out;
  for (const std::string& part : split_csv(it->second)) {
    try {
      out.push_back(std::stoll(part));
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': expected integer list, got '" + it->second + "'");
    }
  }
  return out;
}

void Config::check_known(const std::set<std::string>& known) const {
  std::string bad;
  for (const auto& [key, value] : entries_) {
    if (!known.count(key)) {
      if (!bad.empty()) bad += ", ";
      bad += "'" + key + "'";
    }
  }
  if (!bad.empty()) {
    throw ConfigError(origin_ + ": unknown config keys: " + bad);
  }
}

const std::set<std::string>& synth_config_keys() {
  static const std::set<std::string> keys = {
      "synth.packets",      "synth.bins",          "synth.t_c",
      "synth.noise_std",    "synth.clutter_amp",   "synth.seed",
      "synth.walk_freq_hz", "synth.walk_depth",    "synth.run_freq_hz",
      "synth.run_depth",    "synth.run_pulse_hz",  "synth.run_pulse_floor",
      "synth.sit_freq_hz",  "synth.sit_depth",     "synth.sit_burst_width",
      "synth.wave_freq_hz", "synth.wave_depth",    "synth.wave_amplitude",
  };
  return keys;
}

const std::set<std::string>& preprocess_config_keys() {
  static const std::set<std::string> keys = {
      "preprocess.window",
      "preprocess.step",
      "preprocess.bins",
      "preprocess.segment",
  };
  return keys;
}

const std::set<std::string>& train_config_keys() {
  static const std::set<std::string> keys = {
      "train.batch_size", "train.learning_rate",    "train.max_epochs",
      "train.patience",   "train.gamma",            "train.class_weights",
      "train.seed",       "model.t_cls",            "model.n_classes",
      "model.t_enc",      "model.cae_tau",          "model.direct_widths",
      "model.direct_conv_depth",                    "split.train_subjects",
      "split.val_subjects",                         "split.test_subjects",
  };
  return keys;
}

std::set<std::string> all_config_keys() {
  std::set<std::string> keys = synth_config_keys();
  keys.insert(preprocess_config_keys().begin(), preprocess_config_keys().end());
  keys.insert(train_config_keys().begin(), train_config_keys().end());
  return keys;
}

SynthConfig synth_config_from(const Config& cfg) {
  SynthConfig sc = default_synth_config();
  sc.packets = cfg.get_int("synth.packets", sc.packets);
  sc.bins = cfg.get_int("synth.bins", sc.bins);
  sc.t_c = cfg.get_double("synth.t_c", sc.t_c);
  sc.noise_std = cfg.get_double("synth.noise_std", sc.noise_std);
  sc.clutter_amp = cfg.get_double("synth.clutter_amp", sc.clutter_amp);
  sc.seed = static_cast<uint64_t>(cfg.get_int("synth.seed", static_cast<int64_t>(sc.seed)));

  auto tune = [&](ClassProfile& p, const std::string& prefix) {
    for (PathSpec& path : p.paths) {
      path.mod_freq_hz = cfg.get_double(prefix + "_freq_hz", path.mod_freq_hz);
      path.mod_depth = cfg.get_double(prefix + "_depth", path.mod_depth);
    }
  };
  tune(sc.profiles[0], "synth.walk");
  tune(sc.profiles[1], "synth.run");
  tune(sc.profiles[2], "synth.sit");
  tune(sc.profiles[3], "synth.wave");
  for (PathSpec& path : sc.profiles[1].paths) {
    path.pulse_freq_hz = cfg.get_double("synth.run_pulse_hz", path.pulse_freq_hz);
    path.pulse_floor = cfg.get_double("synth.run_pulse_floor", path.pulse_floor);
  }
  for (PathSpec& path : sc.profiles[2].paths) {
    path.burst_width = cfg.get_double("synth.sit_burst_width", path.burst_width);
  }
  for (PathSpec& path : sc.profiles[3].paths) {
    path.amplitude = cfg.get_double("synth.wave_amplitude", path.amplitude);
  }
  validate_synth_config(sc);
  return sc;
}

PreprocessParams preprocess_params_from(const Config& cfg) {
  PreprocessParams p;
  p.window = cfg.get_int("preprocess.window", p.window);
  p.step = cfg.get_int("preprocess.step", p.step);
  p.bins = cfg.get_int("preprocess.bins", p.bins);
  p.segment = cfg.get_int("preprocess.segment", p.segment);
  if (p.window < 2 || p.step < 1 || p.bins < 1 || p.segment < 1) {
    throw ConfigError("preprocess parameters must be positive (window >= 2)");
  }
  return p;
}

TrainConfig train_config_from(const Config& cfg) {
  TrainConfig tc;
  tc.batch_size = cfg.get_int("train.batch_size", tc.batch_size);
  tc.learning_rate = cfg.get_double("train.learning_rate", tc.learning_rate);
  tc.max_epochs = cfg.get_int("train.max_epochs", tc.max_epochs);
  tc.patience = cfg.get_int("train.patience", tc.patience);
  tc.gamma = cfg.get_double("train.gamma", tc.gamma);
  tc.class_weights = cfg.get_double_list("train.class_weights", tc.class_weights);
  tc.seed = static_cast<uint64_t>(cfg.get_int("train.seed", static_cast<int64_t>(tc.seed)));
  return tc;
}

ModelHyper model_hyper_from(const Config& cfg) {
  ModelHyper h;
  h.t_cls = cfg.get_int("model.t_cls", h.t_cls);
  h.n_classes = cfg.get_int("model.n_classes", h.n_classes);
  h.t_enc = cfg.get_int("model.t_enc", h.t_enc);
  h.cae_tau = cfg.get_double("model.cae_tau", h.cae_tau);
  h.direct_widths = cfg.get_int_list("model.direct_widths", h.direct_widths);
  h.direct_conv_depth = cfg.get_int("model.direct_conv_depth", h.direct_conv_depth);
  return h;
}

SplitSpec split_spec_from(const Config& cfg) {
  SplitSpec s;
  auto to_set = [](const std::vector<int64_t>& v) {
    std::set<int> out;
    for (int64_t x : v) out.insert(static_cast<int>(x));
    return out;
  };
  if (cfg.has("split.train_subjects")) {
    s.train_subjects = to_set(cfg.get_int_list("split.train_subjects", {}));
  }
  if (cfg.has("split.val_subjects")) {
    s.val_subjects = to_set(cfg.get_int_list("split.val_subjects", {}));
  }
  if (cfg.has("split.test_subjects")) {
    s.test_subjects = to_set(cfg.get_int_list("split.test_subjects", {}));
  }
  return s;
}

}  // namespace spikehar
