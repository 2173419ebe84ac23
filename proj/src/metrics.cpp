#include "driftbench/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <tuple>

#include "driftbench/errors.hpp"
#include "driftbench/io.hpp"

namespace driftbench {

namespace {

using Counts = std::map<std::vector<std::string>, std::size_t>;

Counts ngram_counts(std::span<const std::string> tokens, std::size_t n) {
  Counts c;
  if (tokens.size() < n) return c;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++c[std::vector<std::string>(tokens.begin() + static_cast<long>(i),
                                 tokens.begin() + static_cast<long>(i + n))];
  }
  return c;
}

std::size_t overlap(const Counts& a, const Counts& b) {
  std::size_t n = 0;
  for (const auto& [gram, ca] : a) {
    if (auto it = b.find(gram); it != b.end()) n += std::min(ca, it->second);
  }
  return n;
}

double f_measure(std::size_t hits, std::size_t candidate_total, std::size_t reference_total) {
  if (hits == 0 || candidate_total == 0 || reference_total == 0) return 0.0;
  double p = static_cast<double>(hits) / static_cast<double>(candidate_total);
  double r = static_cast<double>(hits) / static_cast<double>(reference_total);
  return 2.0 * p * r / (p + r);
}

void warn_empty_reference() {
  static std::atomic<bool> warned{false};
  if (!warned.exchange(true)) std::clog << "warning: ROUGE against an empty reference scores 0\n";
}

}  // namespace

int precision_at_k(Rank rank, std::size_t k) { return rank && *rank <= k ? 1 : 0; }

double reciprocal_rank(Rank rank) { return rank ? 1.0 / static_cast<double>(*rank) : 0.0; }

Rank best_rank(std::span<const Rank> gold_ranks) {
  Rank best;
  for (const auto& r : gold_ranks) {
    if (r && (!best || *r < *best)) best = r;
  }
  return best;
}

std::optional<double> mrr(std::span<const Rank> ranks) {
  if (ranks.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto& r : ranks) sum += reciprocal_rank(r);
  return sum / static_cast<double>(ranks.size());
}

double token_f1(std::span<const std::string> candidate, std::span<const std::string> answer) {
  if (candidate.empty() && answer.empty()) return 1.0;
  if (candidate.empty() || answer.empty()) return 0.0;
  auto hits = overlap(ngram_counts(candidate, 1), ngram_counts(answer, 1));
  return f_measure(hits, candidate.size(), answer.size());
}

double rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference,
               std::size_t n) {
  if (n < 1) throw std::invalid_argument("rouge_n needs n >= 1");
  if (reference.empty()) {
    warn_empty_reference();
    return 0.0;
  }
  auto c = ngram_counts(candidate, n), r = ngram_counts(reference, n);
  std::size_t c_total = candidate.size() >= n ? candidate.size() - n + 1 : 0;
  std::size_t r_total = reference.size() >= n ? reference.size() - n + 1 : 0;
  return f_measure(overlap(c, r), c_total, r_total);
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference) {
  if (reference.empty()) {
    warn_empty_reference();
    return 0.0;
  }
  return f_measure(lcs_length(candidate, reference), candidate.size(), reference.size());
}

double lower_median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty sample");
  std::sort(values.begin(), values.end());
  return values[(values.size() - 1) / 2];
}

bool is_median_metric(std::string_view metric) { return metric == "pppl" || metric == "pll"; }

bool is_bounded_metric(std::string_view metric) { return !is_median_metric(metric); }

std::vector<SplitReport> aggregate(std::span<const MetricSample> samples) {
  using Key = std::tuple<std::string, std::string, std::string, std::string, std::string>;
  std::map<Key, std::vector<double>> groups;
  for (const auto& s : samples) {
    for (const auto& [metric, value] : s.values) {
      groups[{s.backend, s.bucket, s.view, s.split, metric}].push_back(value);
      groups[{s.backend, s.bucket, s.view, std::string(kOverallSplit), metric}].push_back(value);
    }
  }
  std::vector<SplitReport> out;
  out.reserve(groups.size());
  for (auto& [key, values] : groups) {
    auto& [backend, bucket, view, split, metric] = key;
    if (values.empty()) continue;
    // Sorted before summing so the mean does not depend on record order.
    std::sort(values.begin(), values.end());
    double value = is_median_metric(metric)
                       ? lower_median(values)
                       : std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    out.push_back({backend, bucket, split, view, metric, value, values.size()});
  }
  return out;
}

std::string reports_to_csv(std::span<const SplitReport> reports) {
  std::string out(kReportCsvHeader);
  out.push_back('\n');
  for (const auto& r : reports) {
    out += r.backend + ',' + r.bucket + ',' + r.split + ',' + r.view + ',' + r.metric + ',' +
           format_double(r.value) + ',' + std::to_string(r.n) + '\n';
  }
  return out;
}

nlohmann::json reports_to_json(std::span<const SplitReport> reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) {
    arr.push_back({{"backend", r.backend}, {"bucket", r.bucket}, {"split", r.split}, {"view", r.view},
                   {"metric", r.metric}, {"value", r.value}, {"n", r.n}});
  }
  return arr;
}

std::vector<SplitReport> reports_from_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  std::vector<SplitReport> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || (n == 1 && line == kReportCsvHeader)) continue;
    auto f = split(line, ',');
    if (f.size() != 7) throw LoadError(path.string() + ": expected 7 columns", n);
    try {
      out.push_back({f[0], f[1], f[2], f[3], f[4], std::stod(f[5]), std::stoul(f[6])});
    } catch (const std::exception&) {
      throw LoadError(path.string() + ": bad number", n);
    }
  }
  return out;
}

}  // namespace driftbench
