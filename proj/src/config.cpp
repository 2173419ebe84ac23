#include "driftbench/config.hpp"

#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "driftbench/errors.hpp"
#include "driftbench/hashing.hpp"
#include "driftbench/io.hpp"

namespace driftbench {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;
using nlohmann::json;

namespace {

const std::map<std::string, std::set<std::string>> kKnownKeys = {
    {"data", {"dump", "facts", "relations", "max_subjects", "ingest_threads"}},
    {"snapshot", {"from", "to", "granularity"}},
    {"evaluation",
     {"views", "max_masks", "top_k", "precision_at", "decode", "temperature", "seed", "sample_top_n",
      "candidate_selection", "pll_scope", "threads", "max_in_flight", "tokenizer_backend"}},
    {"backends", {}},
    {"report", {"window"}},
};

std::string trimmed(const std::string& s) { return trim(s); }

template <typename T>
T number(const std::string& section, const std::string& key, const std::string& raw) {
  try {
    std::size_t used = 0;
    T v;
    if constexpr (std::is_floating_point_v<T>) {
      v = static_cast<T>(std::stod(raw, &used));
    } else {
      long long x = std::stoll(raw, &used);
      if (x < 0) throw std::invalid_argument("negative");
      v = static_cast<T>(x);
    }
    if (used != raw.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("[" + section + "] " + key + ": not a valid number: '" + raw + "'");
  }
}

Date date_value(const std::string& section, const std::string& key, const std::string& raw) {
  auto d = Date::try_parse(raw);
  if (!d) throw ConfigError("[" + section + "] " + key + ": expected YYYY-MM-DD, got '" + raw + "'");
  return *d;
}

fs::path resolve(const fs::path& base, const std::string& raw) {
  fs::path p(raw);
  return p.is_absolute() ? p : (base / p).lexically_normal();
}

std::string file_digest_or_name(const fs::path& p) {
  if (p.empty()) return "";
  return fs::exists(p) ? sha256_file(p) : "missing:" + p.string();
}

}  // namespace

PipelineConfig parse_config(const std::string& text, const fs::path& base_dir) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  PipelineConfig c;
  for (const auto& [section, body] : tree) {
    auto known = kKnownKeys.find(section);
    if (known == kKnownKeys.end()) throw ConfigError("config: unknown section [" + section + "]");
    for (const auto& [key, node] : body) {
      std::string v = trimmed(node.get_value<std::string>());
      if (section == "backends") {
        if (key.empty() || v.empty()) throw ConfigError("[backends] entries need name = endpoint");
        std::string endpoint = v.starts_with("mock:") ? "mock:" + resolve(base_dir, v.substr(5)).string() : v;
        for (const auto& b : c.backends) {
          if (b.name == key) throw ConfigError("[backends] duplicate backend name " + key);
        }
        c.backends.push_back({key, endpoint});
        continue;
      }
      if (!known->second.count(key)) throw ConfigError("config: unknown key [" + section + "] " + key);

      if (section == "data") {
        if (key == "dump") c.dump = resolve(base_dir, v);
        else if (key == "facts") c.facts = resolve(base_dir, v);
        else if (key == "relations") c.relations = resolve(base_dir, v);
        else if (key == "max_subjects") c.max_subjects = number<std::size_t>(section, key, v);
        else if (key == "ingest_threads") c.ingest_threads = number<unsigned>(section, key, v);
      } else if (section == "snapshot") {
        if (key == "from") c.range_from = date_value(section, key, v);
        else if (key == "to") c.range_to = date_value(section, key, v);
        else if (key == "granularity") c.granularity = parse_granularity(v);
      } else if (section == "evaluation") {
        auto& e = c.evaluation;
        if (key == "views") {
          c.views.clear();
          for (auto& part : split(v, ',')) c.views.push_back(parse_view(trimmed(part)));
        } else if (key == "max_masks") {
          e.max_masks = number<int>(section, key, v);
        } else if (key == "top_k") {
          e.single.k_max = number<std::size_t>(section, key, v);
        } else if (key == "precision_at") {
          e.single.ks.clear();
          for (auto& part : split(v, ',')) e.single.ks.push_back(number<std::size_t>(section, key, trimmed(part)));
        } else if (key == "decode") {
          if (v == "greedy") e.decode.kind = DecodePolicy::Kind::kGreedy;
          else if (v == "sample") e.decode.kind = DecodePolicy::Kind::kSample;
          else throw ConfigError("[evaluation] decode must be greedy or sample");
        } else if (key == "temperature") {
          e.decode.temperature = number<double>(section, key, v);
        } else if (key == "seed") {
          e.decode.seed = number<std::uint64_t>(section, key, v);
        } else if (key == "sample_top_n") {
          e.decode.sample_top_n = number<std::size_t>(section, key, v);
        } else if (key == "candidate_selection") {
          if (v == "any") e.selection = CandidateSelection::kAnyMatch;
          else if (v == "best_pppl") e.selection = CandidateSelection::kBestPppl;
          else throw ConfigError("[evaluation] candidate_selection must be any or best_pppl");
        } else if (key == "pll_scope") {
          if (v == "answer_span") e.pll_scope = PllScope::kAnswerSpan;
          else if (v == "full_sentence") e.pll_scope = PllScope::kFullSentence;
          else throw ConfigError("[evaluation] pll_scope must be answer_span or full_sentence");
        } else if (key == "threads") {
          e.threads = number<unsigned>(section, key, v);
        } else if (key == "max_in_flight") {
          c.max_in_flight = number<std::size_t>(section, key, v);
        } else if (key == "tokenizer_backend") {
          c.tokenizer_backend = v;
        }
      } else if (section == "report") {
        if (key == "window") c.report_window = number<std::size_t>(section, key, v);
      }
    }
  }

  if (c.dump.empty() && c.facts.empty()) throw ConfigError("config: [data] needs dump or facts");
  if (c.relations.empty()) throw ConfigError("config: [data] relations is required");
  if (!c.dump.empty() && !fs::exists(c.dump)) throw ConfigError("config: dump not found: " + c.dump.string());
  if (!c.facts.empty() && !fs::exists(c.facts)) throw ConfigError("config: facts not found: " + c.facts.string());
  if (!fs::exists(c.relations)) throw ConfigError("config: relations not found: " + c.relations.string());
  if (c.range_to < c.range_from) throw ConfigError("config: snapshot range is reversed");
  if (c.evaluation.max_masks < 1) throw ConfigError("config: max_masks must be >= 1");
  if (c.evaluation.single.k_max < 1) throw ConfigError("config: top_k must be >= 1");
  if (c.backends.empty()) throw ConfigError("config: [backends] must name at least one backend");
  if (c.report_window == 0 || c.report_window % 2 == 0) throw ConfigError("config: [report] window must be odd");
  if (!c.tokenizer_backend.empty()) {
    bool found = false;
    for (const auto& b : c.backends) found = found || b.name == c.tokenizer_backend;
    if (!found) throw ConfigError("config: tokenizer_backend names no configured backend");
  }
  for (const auto& b : c.backends) {
    if (b.endpoint.starts_with("mock:") && !fs::exists(b.endpoint.substr(5))) {
      throw ConfigError("config: mock fixture not found for backend " + b.name + ": " + b.endpoint.substr(5));
    }
  }
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config not found: " + path.string());
  return parse_config(read_file(path), fs::absolute(path).parent_path());
}

std::string PipelineConfig::hash() const {
  json backends_json = json::array();
  for (const auto& b : backends) {
    backends_json.push_back({{"name", b.name},
                             {"endpoint", b.endpoint.starts_with("mock:")
                                              ? "mock:" + file_digest_or_name(b.endpoint.substr(5))
                                              : b.endpoint}});
  }
  json views_json = json::array();
  for (auto v : views) views_json.push_back(std::string(view_name(v)));
  json j = {{"dump", file_digest_or_name(dump)},
            {"facts", file_digest_or_name(facts)},
            {"relations", file_digest_or_name(relations)},
            {"max_subjects", max_subjects},
            {"from", range_from.iso()},
            {"to", range_to.iso()},
            {"granularity", std::string(granularity_name(granularity))},
            {"views", views_json},
            {"max_masks", evaluation.max_masks},
            {"top_k", evaluation.single.k_max},
            {"precision_at", evaluation.single.ks},
            {"decode", evaluation.decode.kind == DecodePolicy::Kind::kGreedy ? "greedy" : "sample"},
            {"temperature", evaluation.decode.temperature},
            {"seed", evaluation.decode.seed},
            {"sample_top_n", evaluation.decode.sample_top_n},
            {"selection", evaluation.selection == CandidateSelection::kAnyMatch ? "any" : "best_pppl"},
            {"pll_scope", evaluation.pll_scope == PllScope::kAnswerSpan ? "answer_span" : "full_sentence"},
            {"backends", backends_json},
            {"tokenizer_backend", tokenizer_backend},
            {"window", report_window}};
  return sha256_hex(j.dump());
}

}  // namespace driftbench
