#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mip/data.hpp"
#include "mip/intervention.hpp"
#include "mip/losses.hpp"
#include "mip/model.hpp"
#include "mip/training.hpp"

namespace mip {

struct DataConfig {
  /// "synthetic" generates data from `synthetic`; "directory" loads `path`.
  std::string source = "synthetic";
  std::string path;
  Index window = 12;  // T
  SplitFractions fractions = kDefaultFractions;
  /// Overrides meta.json's mask_zeros when set to "true"/"false"; "meta"
  /// keeps the dataset's own flag.
  std::string mask_zeros = "meta";
  /// Replaces the stored adjacency with a rows x cols 4-neighbourhood grid
  /// when both are positive.
  Index grid_rows = 0;
  Index grid_cols = 0;
  SyntheticConfig synthetic;
};

/// Everything needed to reproduce a run. Sections: data, model, loss,
/// train, intervention.
struct RunConfig {
  DataConfig data;
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;
  InterventionConfig intervention;

  void validate() const;
};

/// Strict JSON parsing; unknown keys and wrong types raise ConfigError.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_json(const RunConfig& cfg, int indent = 2);
void save_run_config(const std::filesystem::path& path, const RunConfig& cfg);

/// Applies "section.key=value" (nested keys use further dots, e.g.
/// data.synthetic.seed=3). The value is parsed as JSON when possible and
/// taken as a string otherwise.
void apply_override(RunConfig& cfg, const std::string& assignment);
/// Applies all assignments, then validates once, so that dependent keys
/// (data.source and data.path) can change together.
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& assignments);

/// Loads or generates the dataset described by cfg.data.
Dataset materialize_dataset(const DataConfig& cfg);
WindowedDataset make_windows(const Dataset& data, const DataConfig& cfg);

}  // namespace mip
