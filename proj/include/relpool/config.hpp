// Run configuration: one JSON document (comments allowed) with sections
// dataset, model, replay, training, modes and off_grid. Every field has a
// default; unknown keys are rejected. Hyperparameters that have a published
// tuning grid must lie on it unless their dotted key is listed in off_grid.
// configs/default.jsonc documents every field.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "relpool/datasets.hpp"
#include "relpool/harness.hpp"

namespace relpool {

enum class DatasetSource { kSynthetic, kFewRel };

struct FewRelSource {
  std::string path;
  std::size_t num_tasks = 5;
  IngestOptions ingest;

  bool operator==(const FewRelSource& o) const {
    return path == o.path && num_tasks == o.num_tasks && ingest.max_len == o.ingest.max_len &&
           ingest.test_fraction == o.ingest.test_fraction;
  }
};

struct GridCheck {
  std::string key;
  std::vector<double> allowed;
};

/// Keys with a published grid and the values on it.
const std::vector<GridCheck>& grid_checks();

struct RunConfig {
  DatasetSource source = DatasetSource::kSynthetic;
  StreamConfig synthetic;
  FewRelSource fewrel;
  HarnessConfig harness;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  bool task_incremental = false;
  std::vector<std::string> off_grid{"training.prompt_pool_lr"};

  /// Throws ConfigError.
  void validate() const;

  /// Builds the task stream for `seed`; for FewRel input the seed drives the
  /// task partition and the train/test split.
  TaskStream make_stream(std::uint64_t seed) const;
  /// Harness config with the encoder vocabulary sized to `stream`.
  HarnessConfig harness_for(const TaskStream& stream) const;

  bool operator==(const RunConfig&) const = default;
};

/// Throws ConfigError with the offending key on any problem.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string dump_run_config(const RunConfig& config);

/// Applies "section.key=value" to a config document; value is parsed as JSON
/// and falls back to a plain string. Throws ConfigError.
RunConfig apply_override(const RunConfig& config, std::string_view assignment);

}  // namespace relpool
