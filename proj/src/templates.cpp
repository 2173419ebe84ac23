#include "driftbench/templates.hpp"

#include <algorithm>
#include <cctype>

#include "driftbench/errors.hpp"
#include "driftbench/hashing.hpp"

namespace driftbench {

using nlohmann::json;

std::string_view view_name(View v) {
  switch (v) {
    case View::kSingleToken: return "single_token";
    case View::kMultiToken: return "multi_token";
    case View::kMlmScore: return "mlm_score";
  }
  return "?";
}

View parse_view(std::string_view s) {
  if (s == "single_token" || s == "single") return View::kSingleToken;
  if (s == "multi_token" || s == "multi") return View::kMultiToken;
  if (s == "mlm_score" || s == "pll") return View::kMlmScore;
  throw ConfigError("unknown view '" + std::string(s) + "' (single|multi|pll)");
}

bool Template::object_first() const { return template_text.starts_with(kObjectPlaceholder); }

std::string render_text(const Template& t, std::string_view subject_label,
                        std::string_view object_text) {
  const std::string& s = t.template_text;
  auto sp = s.find(kSubjectPlaceholder);
  auto op = s.find(kObjectPlaceholder);
  if (sp == std::string::npos || op == std::string::npos) {
    throw RenderError("template for " + t.property_id + " lacks a placeholder");
  }
  std::string out;
  out.reserve(s.size() + subject_label.size() + object_text.size());
  auto first = std::min(sp, op), second = std::max(sp, op);
  auto first_len = first == sp ? kSubjectPlaceholder.size() : kObjectPlaceholder.size();
  auto second_len = second == sp ? kSubjectPlaceholder.size() : kObjectPlaceholder.size();
  auto fill = [&](std::size_t at) { return at == sp ? subject_label : object_text; };
  out.append(s, 0, first);
  out.append(fill(first));
  out.append(s, first + first_len, second - first - first_len);
  out.append(fill(second));
  out.append(s, second + second_len, std::string::npos);
  return out;
}

std::string mask_run(std::string_view mask_token, int mask_count) {
  std::string out;
  for (int i = 0; i < mask_count; ++i) {
    if (i) out.push_back(' ');
    out.append(mask_token);
  }
  return out;
}

std::string make_query_id(const QueryKey& key, std::string_view bucket_id, View view) {
  return stable_id({key.subject_qid, key.property_id, bucket_id, view_name(view)});
}

ClozeQuery render_query(const Template& t, const SnapshotQuery& q, int mask_count,
                        std::string_view mask_token, View view) {
  if (q.subject_label.empty()) {
    throw RenderError("empty subject label for " + q.key.subject_qid + "/" + q.key.property_id +
                      " in " + q.bucket_id);
  }
  if (mask_count < 1) throw RenderError("mask_count must be >= 1");
  ClozeQuery c;
  c.query_id = make_query_id(q.key, q.bucket_id, view);
  c.view = view;
  c.bucket_id = q.bucket_id;
  c.key = q.key;
  c.subject_label = q.subject_label;
  c.template_text = t.template_text;
  c.text = render_text(t, q.subject_label, mask_run(mask_token, mask_count));
  c.mask_count = mask_count;
  return c;
}

std::vector<TokenizedAnswer> tokenize_answers(const std::vector<Answer>& answers, Tokenizer& tok,
                                              bool add_prefix_space) {
  std::vector<TokenizedAnswer> out;
  out.reserve(answers.size());
  for (const auto& a : answers) {
    auto ids = tok.encode(a.label, add_prefix_space);
    if (ids.empty()) throw RenderError("answer '" + a.label + "' tokenizes to nothing");
    out.push_back({a.qid, a.label, std::move(ids)});
  }
  return out;
}

FilterResult filter_single_token(std::vector<ClozeQuery> queries) {
  return filter_max_tokens(std::move(queries), 1);
}

FilterResult filter_max_tokens(std::vector<ClozeQuery> queries, int max_tokens) {
  if (max_tokens < 1) throw std::invalid_argument("max_tokens must be >= 1");
  FilterResult r;
  r.input = queries.size();
  for (auto& q : queries) {
    std::erase_if(q.answers, [&](const TokenizedAnswer& a) {
      return a.token_ids.size() > static_cast<std::size_t>(max_tokens);
    });
    if (!q.answers.empty()) r.kept.push_back(std::move(q));
  }
  return r;
}

std::string normalize_answer(std::string_view s) {
  std::string collapsed;
  bool pending_space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      pending_space = !collapsed.empty();
      continue;
    }
    if (pending_space) collapsed.push_back(' ');
    pending_space = false;
    collapsed.push_back(static_cast<char>(std::tolower(c)));
  }
  auto punct_or_space = [](unsigned char c) { return std::ispunct(c) || std::isspace(c); };
  std::size_t b = 0, e = collapsed.size();
  while (b < e && punct_or_space(static_cast<unsigned char>(collapsed[b]))) ++b;
  while (e > b && punct_or_space(static_cast<unsigned char>(collapsed[e - 1]))) --e;
  return collapsed.substr(b, e - b);
}

std::vector<std::string> normalized_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::string n = normalize_answer(s);
  std::size_t i = 0;
  while (i < n.size()) {
    auto j = n.find(' ', i);
    if (j == std::string::npos) j = n.size();
    if (j > i) out.push_back(n.substr(i, j - i));
    i = j + 1;
  }
  return out;
}

json to_json(const ClozeQuery& q) {
  json answers = json::array();
  for (const auto& a : q.answers) {
    answers.push_back({{"qid", a.qid}, {"label", a.label}, {"token_ids", a.token_ids}});
  }
  return {{"query_id", q.query_id},
          {"view", std::string(view_name(q.view))},
          {"bucket", q.bucket_id},
          {"subject_qid", q.key.subject_qid},
          {"subject_label", q.subject_label},
          {"property", q.key.property_id},
          {"split", std::string(split_name(q.split))},
          {"template", q.template_text},
          {"text", q.text},
          {"mask_count", q.mask_count},
          {"answers", std::move(answers)},
          {"answers_before", answers_to_json(q.answers_before)}};
}

ClozeQuery cloze_query_from_json(const json& j) {
  ClozeQuery q;
  q.query_id = j.at("query_id").get<std::string>();
  q.view = parse_view(j.at("view").get<std::string>());
  q.bucket_id = j.at("bucket").get<std::string>();
  q.key = {j.at("subject_qid").get<std::string>(), j.at("property").get<std::string>()};
  q.subject_label = j.at("subject_label").get<std::string>();
  q.split = parse_split(j.at("split").get<std::string>());
  q.template_text = j.at("template").get<std::string>();
  q.text = j.at("text").get<std::string>();
  q.mask_count = j.at("mask_count").get<int>();
  for (const auto& a : j.at("answers")) {
    q.answers.push_back({a.at("qid").get<std::string>(), a.at("label").get<std::string>(),
                         a.at("token_ids").get<std::vector<TokenId>>()});
  }
  q.answers_before = answers_from_json(j.at("answers_before"));
  return q;
}

}  // namespace driftbench
