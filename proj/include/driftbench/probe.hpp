#pragma once

// The three evaluation views: single-token probing, sequential multi-token
// generation and pseudo-log-likelihood scoring.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "driftbench/bridge.hpp"
#include "driftbench/metrics.hpp"
#include "driftbench/templates.hpp"

namespace driftbench {

struct EvaluationRecord {
  std::string query_id;
  std::string backend;
  View view = View::kSingleToken;
  std::string bucket_id;
  SplitLabel split = SplitLabel::kUnchanged;
  nlohmann::json payload;
  std::map<std::string, double> metrics;
  std::optional<std::string> error;

  MetricSample sample() const;
};

nlohmann::json to_json(const EvaluationRecord& r);
EvaluationRecord evaluation_record_from_json(const nlohmann::json& j);

inline const std::vector<std::size_t> kDefaultPrecisionKs = {1, 10, 100};

struct SingleTokenOptions {
  std::size_t k_max = 100;
  std::vector<std::size_t> ks = kDefaultPrecisionKs;
};

// Throws ContractError if the query has no single-token gold answer or more
// than one mask.
EvaluationRecord probe_single_token(const ClozeQuery& query, BridgeClient& client,
                                    const SingleTokenOptions& options = {});

struct DecodePolicy {
  enum class Kind { kGreedy, kSample };
  Kind kind = Kind::kGreedy;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  std::size_t sample_top_n = 50;
};

struct GenerationCandidate {
  int mask_count = 0;
  std::vector<TokenId> token_ids;
  std::string surface;
  std::vector<double> step_logprobs;
  bool failed = false;
  std::string error;

  // exp(-mean step log-prob); infinite for failed candidates.
  double pseudo_perplexity() const;
};

// For m = 1..max_masks renders the query with m masks and fills them left to
// right, one fill_mask call per mask, splicing each choice into the text
// before the next call.
std::vector<GenerationCandidate> generate_multi_token(const ClozeQuery& query,
                                                      BridgeClient& client, int max_masks,
                                                      const DecodePolicy& policy = {});

enum class CandidateSelection { kAnyMatch, kBestPppl };

struct MatchResult {
  bool correct = false;
  std::map<std::string, double> best_scores;  // token_f1, rouge1, rougeL
  std::optional<std::size_t> matched_candidate;
};

// Correct iff a considered candidate's normalized surface equals a normalized
// answer. Scores are maxima over candidate x answer pairs.
MatchResult match_candidates(const std::vector<GenerationCandidate>& candidates,
                             const std::vector<std::string>& answers,
                             CandidateSelection selection = CandidateSelection::kAnyMatch);

enum class PllScope { kAnswerSpan, kFullSentence };

struct PLLResult {
  std::string answer_label;
  std::string sentence;
  std::vector<TokenId> token_ids;  // scored tokens
  std::vector<double> token_logprobs;
  double pll = 0.0;
  double pppl = 1.0;
  bool failed = false;
  std::string error;
};

// Scores each answer by masking the scored tokens one at a time in the
// sentence rendered with that answer.
std::vector<PLLResult> score_pll(const Template& tmpl, const std::string& subject_label,
                                 const std::vector<std::string>& answers, BridgeClient& client,
                                 PllScope scope = PllScope::kAnswerSpan);

struct EvaluationOptions {
  SingleTokenOptions single;
  int max_masks = 5;
  DecodePolicy decode;
  CandidateSelection selection = CandidateSelection::kAnyMatch;
  PllScope pll_scope = PllScope::kAnswerSpan;
  unsigned threads = 1;
};

EvaluationRecord evaluate_query(const ClozeQuery& query, BridgeClient& client,
                                const EvaluationOptions& options);

// Runs queries concurrently; results keep the input order. Backend failures
// become records with an error and no metrics.
std::vector<EvaluationRecord> evaluate_queries(const std::vector<ClozeQuery>& queries,
                                               BridgeClient& client,
                                               const EvaluationOptions& options);

}  // namespace driftbench
