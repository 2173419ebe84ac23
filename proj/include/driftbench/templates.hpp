#pragma once

// Cloze rendering, answer tokenization and the token-length filters.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "driftbench/ingest.hpp"
#include "driftbench/snapshot.hpp"
#include "driftbench/splits.hpp"
#include "driftbench/tokenizer.hpp"

namespace driftbench {

enum class View { kSingleToken, kMultiToken, kMlmScore };

std::string_view view_name(View v);
View parse_view(std::string_view s);

struct Template {
  std::string property_id;
  std::string template_text;

  static Template from(const RelationConfig& r) { return {r.property_id, r.template_text}; }

  // True when "<object>" opens the sentence.
  bool object_first() const;
};

// Replaces the two placeholders; everything else is copied verbatim.
std::string render_text(const Template& t, std::string_view subject_label,
                        std::string_view object_text);

// mask_count copies of the mask token separated by single spaces.
std::string mask_run(std::string_view mask_token, int mask_count);

struct TokenizedAnswer {
  std::string qid;
  std::string label;
  std::vector<TokenId> token_ids;
};

struct ClozeQuery {
  std::string query_id;
  View view = View::kSingleToken;
  std::string bucket_id;
  QueryKey key;
  std::string subject_label;
  SplitLabel split = SplitLabel::kUnchanged;
  std::string template_text;
  std::string text;
  int mask_count = 1;
  std::vector<TokenizedAnswer> answers;
  std::vector<Answer> answers_before;
};

std::string make_query_id(const QueryKey& key, std::string_view bucket_id, View view);

// Throws RenderError if the subject label is empty or mask_count < 1. The
// returned query carries no answers; see tokenize_answers.
ClozeQuery render_query(const Template& t, const SnapshotQuery& q, int mask_count,
                        std::string_view mask_token, View view = View::kSingleToken);

// Tokenizes each label as it appears in the rendered sentence: with a leading
// space, unless the object opens the sentence.
std::vector<TokenizedAnswer> tokenize_answers(const std::vector<Answer>& answers,
                                              Tokenizer& tok, bool add_prefix_space = true);

struct FilterResult {
  std::vector<ClozeQuery> kept;
  std::size_t input = 0;
  std::size_t discarded() const { return input - kept.size(); }
  double discarded_fraction() const {
    return input == 0 ? 0.0 : static_cast<double>(discarded()) / static_cast<double>(input);
  }
};

// Keeps queries with at least one single-token answer and restricts their gold
// set to those answers.
FilterResult filter_single_token(std::vector<ClozeQuery> queries);

// Drops answers longer than max_tokens, then queries left without answers.
FilterResult filter_max_tokens(std::vector<ClozeQuery> queries, int max_tokens);

// Lowercase, collapse internal whitespace, strip leading/trailing punctuation.
std::string normalize_answer(std::string_view s);
std::vector<std::string> normalized_tokens(std::string_view s);

nlohmann::json to_json(const ClozeQuery& q);
ClozeQuery cloze_query_from_json(const nlohmann::json& j);

}  // namespace driftbench
