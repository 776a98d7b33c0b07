#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "spikehar/classifier.hpp"
#include "spikehar/data_io.hpp"
#include "spikehar/training.hpp"

namespace spikehar {

// Flat key=value run configuration with '#' comments. Typed access; consumers
// reject unknown keys exhaustively before running.
class Config {
 public:
  Config() = default;
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  std::string get_string(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::vector<double> get_double_list(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<int64_t> get_int_list(const std::string& key, const std::vector<int64_t>& fallback) const;

  // Throws ConfigError naming every key outside `known`.
  void check_known(const std::set<std::string>& known) const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
  std::string origin_;
};

// Key schemas of the run configuration, grouped by consumer.
const std::set<std::string>& synth_config_keys();
const std::set<std::string>& preprocess_config_keys();
const std::set<std::string>& train_config_keys();
// Union of all groups, for commands that read a shared config file.
std::set<std::string> all_config_keys();

SynthConfig synth_config_from(const Config& cfg);
PreprocessParams preprocess_params_from(const Config& cfg);
TrainConfig train_config_from(const Config& cfg);
ModelHyper model_hyper_from(const Config& cfg);

struct SplitSpec {
  std::set<int> train_subjects{1, 2, 3, 4, 6};
  std::set<int> val_subjects{5};
  std::set<int> test_subjects{7};
};
SplitSpec split_spec_from(const Config& cfg);

}  // namespace spikehar
