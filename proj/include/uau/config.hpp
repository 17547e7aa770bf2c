#pragma once

// Flat `key = value` experiment configuration. Lines starting with '#' and
// blank lines are ignored; unknown or repeated keys are errors. Every key has
// a default (the struct defaults below) and a one-line description.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "uau/evidential_losses.hpp"
#include "uau/model.hpp"
#include "uau/synthetic_data.hpp"
#include "uau/training.hpp"

namespace uau {

struct AblationConfig {
  std::size_t seeds = 5;
  /// Row names out of baseline, cvafe, ebce, abl, det_abl.
  std::vector<std::string> rows{"baseline", "cvafe", "ebce", "abl"};
};

struct ExperimentConfig {
  SyntheticConfig data;
  ModelConfig model;
  TrainConfig train;
  LossConfig loss;
  AblationConfig ablation;

  /// Throws ConfigError on the first violated invariant.
  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string group;
  std::string doc;
};

/// All keys in file order.
const std::vector<ConfigKey>& config_keys();

/// Throws ConfigError for unknown keys or unparsable values.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const ExperimentConfig& cfg, const std::string& key);

ExperimentConfig parse_config(std::istream& is, const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path);

/// Every key with its current value, grouped, parseable by parse_config.
std::string format_config(const ExperimentConfig& cfg);

/// Model layout for a dataset: AU assignment and pyramid from the data, the
/// rest from the model section.
ModelSpec model_spec(const SyntheticConfig& data, const ModelConfig& model);

}  // namespace uau
