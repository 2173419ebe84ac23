#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "driftbench/date.hpp"
#include "driftbench/probe.hpp"
#include "driftbench/snapshot.hpp"
#include "driftbench/templates.hpp"

namespace driftbench {

struct BackendSpec {
  std::string name;
  std::string endpoint;
};

// Declarative run configuration (INI: key = value lines under [sections]).
// Relative paths resolve against the config file's directory.
struct PipelineConfig {
  std::filesystem::path dump;       // entity dump, or
  std::filesystem::path facts;      // a prebuilt fact TSV (skips the dump)
  std::filesystem::path relations;  // templates CSV
  std::size_t max_subjects = kDefaultMaxSubjects;

  Date range_from{2019, 1, 1};
  Date range_to{2022, 6, 30};
  Granularity granularity = Granularity::kQuarter;

  std::vector<View> views = {View::kSingleToken, View::kMultiToken, View::kMlmScore};
  EvaluationOptions evaluation;
  std::vector<BackendSpec> backends;
  std::size_t max_in_flight = 8;
  // Tokenizer for rendering: empty means the first backend's tokenizer.
  std::string tokenizer_backend;

  unsigned ingest_threads = 1;
  std::size_t report_window = 3;

  // Stable digest of every setting (paths by content digest, not by name).
  std::string hash() const;
};

// Throws ConfigError on unknown keys, bad values or missing inputs.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir);

}  // namespace driftbench
