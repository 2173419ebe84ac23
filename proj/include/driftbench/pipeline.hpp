#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "driftbench/config.hpp"

namespace driftbench {

inline constexpr std::string_view kToolVersion = "0.4.0";

// A stage failed; carries the stage name and a command that replays it.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, std::string replay, const std::string& cause)
      : std::runtime_error("stage '" + stage + "' failed: " + cause + "\n  replay: " + replay),
        stage_(std::move(stage)),
        replay_(std::move(replay)) {}
  const std::string& stage() const { return stage_; }
  const std::string& replay() const { return replay_; }

 private:
  std::string stage_;
  std::string replay_;
};

inline const std::vector<std::string> kStageOrder = {"ingest", "snapshot", "split", "render",
                                                     "evaluate", "aggregate", "report"};

struct RunOptions {
  std::filesystem::path out_dir;
  std::filesystem::path config_path;  // only used in replay hints
  bool resume = false;
  std::string stop_after;  // empty: run every stage
  std::optional<std::uint64_t> seed;
  std::function<void(const std::string&)> log;  // progress lines; may be empty
};

struct StageOutcome {
  std::string stage;
  bool executed = false;
  std::string input_digest;
  std::string output_digest;
};

struct RunManifest {
  std::string config_hash;
  std::map<std::string, std::string> input_digests;
  std::vector<BackendDescriptor> backends;
  std::string granularity;
  std::string range_from;
  std::string range_to;
  int max_masks = 0;
  std::size_t top_k = 0;
  std::string decode_policy;
  std::uint64_t seed = 0;
  std::string tool_version;
  std::string started_at;
  std::string finished_at;
  std::vector<StageOutcome> stages;

  nlohmann::json to_json() const;
};

// ingest -> snapshot -> split -> render -> evaluate -> aggregate -> report.
// Every stage persists its outputs under out_dir/<stage>/ and records input and
// output digests in out_dir/stages.json. With resume, a stage whose inputs and
// outputs still match its record is skipped. The manifest is written last,
// atomically, to out_dir/manifest.json; out_dir/stage_log.txt lists what ran.
RunManifest run_pipeline(const PipelineConfig& config, const RunOptions& options);

// Digest over every regular file below dir (relative path + content).
std::string directory_digest(const std::filesystem::path& dir);

}  // namespace driftbench
