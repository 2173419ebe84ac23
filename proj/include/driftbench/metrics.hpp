#pragma once

// Per-query metrics and per-split aggregation.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace driftbench {

// 1-based rank of the best gold answer; nullopt when it fell below the
// returned top list.
using Rank = std::optional<std::size_t>;

int precision_at_k(Rank rank, std::size_t k);
double reciprocal_rank(Rank rank);
Rank best_rank(std::span<const Rank> gold_ranks);

// Mean reciprocal rank; nullopt for empty input.
std::optional<double> mrr(std::span<const Rank> per_query_ranks);

double token_f1(std::span<const std::string> candidate, std::span<const std::string> answer);
double rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference,
               std::size_t n);
double rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference);
std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

// Median; for an even count the lower of the two central values.
double lower_median(std::vector<double> values);

// Aggregated with a median (pppl, pll); everything else is a bounded mean.
bool is_median_metric(std::string_view metric);
bool is_bounded_metric(std::string_view metric);

// Input to aggregation: one query's metric values under one view.
struct MetricSample {
  std::string backend;
  std::string bucket;
  std::string split;
  std::string view;
  std::map<std::string, double> values;
};

struct SplitReport {
  std::string backend;
  std::string bucket;
  std::string split;  // a split label or "overall"
  std::string view;
  std::string metric;
  double value = 0.0;
  std::size_t n = 0;

  friend bool operator==(const SplitReport&, const SplitReport&) = default;
};

inline constexpr std::string_view kOverallSplit = "overall";

// One report per (backend, bucket, split, view, metric) plus "overall" rows
// pooling every split of a bucket. Output order is fixed (sorted by key),
// independent of input order.
std::vector<SplitReport> aggregate(std::span<const MetricSample> samples);

inline constexpr std::string_view kReportCsvHeader = "backend,bucket,split,view,metric,value,n";

std::string reports_to_csv(std::span<const SplitReport> reports);
nlohmann::json reports_to_json(std::span<const SplitReport> reports);
std::vector<SplitReport> reports_from_csv(const std::filesystem::path& path);

}  // namespace driftbench
