#include "driftbench/probe.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <thread>

#include "driftbench/errors.hpp"
#include "driftbench/hashing.hpp"

namespace driftbench {

using nlohmann::json;

namespace {

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// Text before the object placeholder, with the subject filled in when it
// comes first.
std::string prefix_before_object(const Template& t, const std::string& subject_label) {
  auto op = t.template_text.find(kObjectPlaceholder);
  std::string prefix = t.template_text.substr(0, op);
  if (auto sp = prefix.find(kSubjectPlaceholder); sp != std::string::npos) {
    prefix.replace(sp, kSubjectPlaceholder.size(), subject_label);
  }
  return prefix;
}

std::string rtrim(std::string s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  return s;
}

bool starts_with_ids(const std::vector<TokenId>& full, const std::vector<TokenId>& prefix) {
  return prefix.size() <= full.size() && std::equal(prefix.begin(), prefix.end(), full.begin());
}

std::uint64_t query_seed(std::uint64_t seed, const std::string& query_id, int m, int step) {
  std::uint64_t h = std::stoull(sha256_hex(query_id).substr(0, 15), nullptr, 16);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                    static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(step)};
  std::mt19937_64 rng(seq);
  return rng();
}

}  // namespace

MetricSample EvaluationRecord::sample() const {
  return {backend, bucket_id, std::string(split_name(split)), std::string(view_name(view)), metrics};
}

json to_json(const EvaluationRecord& r) {
  json metrics = json::object();
  for (const auto& [k, v] : r.metrics) metrics[k] = v;
  json j = {{"query_id", r.query_id},
            {"backend", r.backend},
            {"view", std::string(view_name(r.view))},
            {"bucket", r.bucket_id},
            {"split", std::string(split_name(r.split))},
            {"metrics", std::move(metrics)},
            {"payload", r.payload}};
  if (r.error) j["error"] = *r.error;
  return j;
}

EvaluationRecord evaluation_record_from_json(const json& j) {
  EvaluationRecord r;
  r.query_id = j.at("query_id").get<std::string>();
  r.backend = j.at("backend").get<std::string>();
  r.view = parse_view(j.at("view").get<std::string>());
  r.bucket_id = j.at("bucket").get<std::string>();
  r.split = parse_split(j.at("split").get<std::string>());
  for (const auto& [k, v] : j.at("metrics").items()) r.metrics[k] = v.get<double>();
  r.payload = j.value("payload", json());
  if (j.contains("error")) r.error = j.at("error").get<std::string>();
  return r;
}

// ---------------------------------------------------------------------------
// Single-token probing

EvaluationRecord probe_single_token(const ClozeQuery& query, BridgeClient& client,
                                    const SingleTokenOptions& options) {
  if (query.mask_count != 1) throw ContractError("single-token probe needs exactly one mask: " + query.query_id);
  std::set<TokenId> golds;
  for (const auto& a : query.answers) {
    if (a.token_ids.size() == 1) golds.insert(a.token_ids.front());
  }
  if (golds.empty()) throw ContractError("query " + query.query_id + " has no single-token gold answer");

  FillMaskRequest req{query.text, options.k_max, std::vector<TokenId>(golds.begin(), golds.end())};
  auto masks = client.fill_mask(req, 1);
  const auto& d = masks.front();
  bool truncated = d.top.size() < client.vocab_size();

  std::vector<Rank> ranks;
  json gold_json = json::array();
  for (auto id : golds) {
    double lp = d.queried.at(id);
    Rank rank;
    bool in_top = std::any_of(d.top.begin(), d.top.end(), [&](const auto& e) { return e.first == id; });
    bool within = in_top || (!d.top.empty() && lp >= d.top.back().second) || !truncated;
    if (within && std::isfinite(lp)) {
      auto above = std::count_if(d.top.begin(), d.top.end(), [&](const auto& e) { return e.second > lp; });
      rank = static_cast<std::size_t>(above) + 1;
    }
    ranks.push_back(rank);
    gold_json.push_back({{"token_id", id}, {"logprob", finite_or_null(lp)},
                         {"rank", rank ? json(*rank) : json(nullptr)}});
  }
  Rank best = best_rank(ranks);

  EvaluationRecord r;
  r.query_id = query.query_id;
  r.backend = client.descriptor().name;
  r.view = View::kSingleToken;
  r.bucket_id = query.bucket_id;
  r.split = query.split;
  for (auto k : options.ks) r.metrics["p_at_" + std::to_string(k)] = precision_at_k(best, k);
  r.metrics["accuracy"] = precision_at_k(best, 1);
  r.metrics["mrr"] = reciprocal_rank(best);

  json top = json::array();
  for (std::size_t i = 0; i < std::min<std::size_t>(10, d.top.size()); ++i) {
    top.push_back(json::array({d.top[i].first, finite_or_null(d.top[i].second)}));
  }
  r.payload = {{"top", std::move(top)}, {"gold", std::move(gold_json)},
               {"best_rank", best ? json(*best) : json(nullptr)}, {"truncated", truncated}};
  return r;
}

// ---------------------------------------------------------------------------
// Multi-token generation

double GenerationCandidate::pseudo_perplexity() const {
  if (failed || step_logprobs.empty()) return std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (double lp : step_logprobs) sum += lp;
  return std::exp(-sum / static_cast<double>(step_logprobs.size()));
}

std::vector<GenerationCandidate> generate_multi_token(const ClozeQuery& query, BridgeClient& client,
                                                      int max_masks, const DecodePolicy& policy) {
  if (max_masks < 1) throw std::invalid_argument("max_masks must be >= 1");
  Template tmpl{query.key.property_id, query.template_text};
  const std::string mask = client.mask_token();
  const TokenId mask_id = client.mask_token_id();
  bool greedy = policy.kind == DecodePolicy::Kind::kGreedy;

  std::vector<GenerationCandidate> out;
  for (int m = 1; m <= max_masks; ++m) {
    GenerationCandidate c;
    c.mask_count = m;
    try {
      for (int step = 0; step < m; ++step) {
        int remaining = m - step;
        std::string filled = c.token_ids.empty() ? std::string() : trim(client.detokenize(c.token_ids));
        std::string object = filled.empty() ? mask_run(mask, remaining) : filled + " " + mask_run(mask, remaining);
        FillMaskRequest req{render_text(tmpl, query.subject_label, object),
                            greedy ? std::size_t{2} : policy.sample_top_n, {}};
        auto masks = client.fill_mask(req, static_cast<std::size_t>(remaining));
        const auto& leftmost = masks.front();

        std::vector<std::pair<TokenId, double>> options;
        for (const auto& e : leftmost.top) {
          if (e.first != mask_id && std::isfinite(e.second)) options.push_back(e);
        }
        if (options.empty()) throw ProtocolError("no selectable token for mask");
        std::pair<TokenId, double> pick = options.front();
        if (!greedy) {
          std::vector<double> weights;
          double t = std::max(policy.temperature, 1e-6);
          for (const auto& e : options) weights.push_back(std::exp((e.second - options.front().second) / t));
          std::mt19937_64 rng(query_seed(policy.seed, query.query_id, m, step));
          std::discrete_distribution<std::size_t> dist(weights.begin(), weights.end());
          pick = options[dist(rng)];
        }
        c.token_ids.push_back(pick.first);
        c.step_logprobs.push_back(pick.second);
      }
      c.surface = trim(client.detokenize(c.token_ids));
    } catch (const TransportError& e) {
      c.failed = true;
      c.error = e.what();
    } catch (const ProtocolError& e) {
      c.failed = true;
      c.error = e.what();
    }
    out.push_back(std::move(c));
  }
  return out;
}

MatchResult match_candidates(const std::vector<GenerationCandidate>& candidates,
                             const std::vector<std::string>& answers, CandidateSelection selection) {
  MatchResult result;
  result.best_scores = {{"token_f1", 0.0}, {"rouge1", 0.0}, {"rougeL", 0.0}};

  std::vector<std::size_t> considered;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!candidates[i].failed) considered.push_back(i);
  }
  if (selection == CandidateSelection::kBestPppl && !considered.empty()) {
    auto best = *std::min_element(considered.begin(), considered.end(), [&](auto a, auto b) {
      return candidates[a].pseudo_perplexity() < candidates[b].pseudo_perplexity();
    });
    considered = {best};
  }

  std::vector<std::string> norm_answers;
  std::vector<std::vector<std::string>> answer_tokens;
  for (const auto& a : answers) {
    norm_answers.push_back(normalize_answer(a));
    answer_tokens.push_back(normalized_tokens(a));
  }
  for (auto i : considered) {
    auto surface = normalize_answer(candidates[i].surface);
    auto tokens = normalized_tokens(candidates[i].surface);
    for (std::size_t a = 0; a < answers.size(); ++a) {
      if (!result.correct && surface == norm_answers[a]) {
        result.correct = true;
        result.matched_candidate = i;
      }
      auto& s = result.best_scores;
      s["token_f1"] = std::max(s["token_f1"], token_f1(tokens, answer_tokens[a]));
      s["rouge1"] = std::max(s["rouge1"], rouge_n(tokens, answer_tokens[a], 1));
      s["rougeL"] = std::max(s["rougeL"], rouge_l(tokens, answer_tokens[a]));
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Pseudo-log-likelihood scoring

std::vector<PLLResult> score_pll(const Template& tmpl, const std::string& subject_label,
                                 const std::vector<std::string>& answers, BridgeClient& client,
                                 PllScope scope) {
  std::vector<PLLResult> out;
  for (const auto& label : answers) {
    PLLResult r;
    r.answer_label = label;
    try {
      r.sentence = render_text(tmpl, subject_label, label);
      auto full = client.tokenize(r.sentence, false);
      std::size_t lo = 0, hi = full.size();
      if (scope == PllScope::kAnswerSpan) {
        std::string prefix = prefix_before_object(tmpl, subject_label);
        std::string head = rtrim(prefix);
        auto head_ids = head.empty() ? std::vector<TokenId>{} : client.tokenize(head, false);
        auto through = client.tokenize(prefix + label, false);
        if (!starts_with_ids(full, through) || !starts_with_ids(through, head_ids) ||
            through.size() == head_ids.size()) {
          throw ProtocolError("answer span of '" + label + "' is not stable under tokenization");
        }
        lo = head_ids.size();
        hi = through.size();
      }
      for (std::size_t j = lo; j < hi; ++j) {
        auto masked = full;
        masked[j] = client.mask_token_id();
        FillMaskRequest req{trim(client.detokenize(masked)), 1, {full[j]}};
        auto masks = client.fill_mask(req, 1);
        double lp = masks.front().queried.at(full[j]);
        r.token_ids.push_back(full[j]);
        r.token_logprobs.push_back(lp);
        r.pll += lp;
      }
      if (r.token_logprobs.empty()) throw ProtocolError("nothing to score for '" + label + "'");
      r.pppl = std::exp(-r.pll / static_cast<double>(r.token_logprobs.size()));
    } catch (const TransportError& e) {
      r = PLLResult{label, r.sentence, {}, {}, 0.0, 1.0, true, e.what()};
    } catch (const ProtocolError& e) {
      r = PLLResult{label, r.sentence, {}, {}, 0.0, 1.0, true, e.what()};
    }
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> answer_labels(const ClozeQuery& q) {
  std::vector<std::string> labels;
  for (const auto& a : q.answers) labels.push_back(a.label);
  return labels;
}

EvaluationRecord base_record(const ClozeQuery& q, BridgeClient& client, View view) {
  EvaluationRecord r;
  r.query_id = q.query_id;
  r.backend = client.descriptor().name;
  r.view = view;
  r.bucket_id = q.bucket_id;
  r.split = q.split;
  return r;
}

}  // namespace

EvaluationRecord evaluate_query(const ClozeQuery& query, BridgeClient& client,
                                const EvaluationOptions& options) {
  switch (query.view) {
    case View::kSingleToken: {
      try {
        return probe_single_token(query, client, options.single);
      } catch (const TransportError& e) {
        auto r = base_record(query, client, View::kSingleToken);
        r.error = e.what();
        return r;
      } catch (const ProtocolError& e) {
        auto r = base_record(query, client, View::kSingleToken);
        r.error = e.what();
        return r;
      }
    }
    case View::kMultiToken: {
      auto r = base_record(query, client, View::kMultiToken);
      auto candidates = generate_multi_token(query, client, options.max_masks, options.decode);
      json cands = json::array();
      for (const auto& c : candidates) {
        json steps = json::array();
        for (double lp : c.step_logprobs) steps.push_back(finite_or_null(lp));
        json cj = {{"mask_count", c.mask_count}, {"token_ids", c.token_ids}, {"surface", c.surface},
                   {"step_logprobs", std::move(steps)}};
        if (c.failed) cj["error"] = c.error;
        cands.push_back(std::move(cj));
      }
      bool any_ok = std::any_of(candidates.begin(), candidates.end(), [](const auto& c) { return !c.failed; });
      r.payload = {{"candidates", std::move(cands)}};
      if (!any_ok) {
        r.error = "every candidate failed";
        return r;
      }
      auto match = match_candidates(candidates, answer_labels(query), options.selection);
      r.metrics = match.best_scores;
      r.metrics["accuracy"] = match.correct ? 1.0 : 0.0;
      r.payload["correct"] = match.correct;
      r.payload["matched_candidate"] = match.matched_candidate ? json(*match.matched_candidate) : json(nullptr);
      return r;
    }
    case View::kMlmScore: {
      auto r = base_record(query, client, View::kMlmScore);
      Template tmpl{query.key.property_id, query.template_text};
      auto results = score_pll(tmpl, query.subject_label, answer_labels(query), client, options.pll_scope);
      json arr = json::array();
      const PLLResult* best = nullptr;
      for (const auto& p : results) {
        json pj = {{"label", p.answer_label}, {"sentence", p.sentence}, {"token_ids", p.token_ids},
                   {"token_logprobs", p.token_logprobs}, {"pll", p.pll}, {"pppl", finite_or_null(p.pppl)}};
        if (p.failed) pj["error"] = p.error;
        arr.push_back(std::move(pj));
        if (!p.failed && (!best || p.pppl < best->pppl)) best = &p;
      }
      r.payload = {{"answers", std::move(arr)}};
      if (!best) {
        r.error = "every answer failed to score";
        return r;
      }
      r.metrics["pll"] = best->pll;
      r.metrics["pppl"] = best->pppl;
      return r;
    }
  }
  throw std::logic_error("unknown view");
}

std::vector<EvaluationRecord> evaluate_queries(const std::vector<ClozeQuery>& queries, BridgeClient& client,
                                               const EvaluationOptions& options) {
  std::vector<EvaluationRecord> out(queries.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= queries.size()) return;
      try {
        out[i] = evaluate_query(queries[i], client, options);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = queries.size();
        return;
      }
    }
  };
  unsigned n = std::max(1u, options.threads);
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace driftbench
