#include "driftbench/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <set>

#include "driftbench/bridge.hpp"
#include "driftbench/errors.hpp"
#include "driftbench/hashing.hpp"
#include "driftbench/ingest.hpp"
#include "driftbench/io.hpp"
#include "driftbench/metrics.hpp"
#include "driftbench/report.hpp"
#include "driftbench/snapshot.hpp"
#include "driftbench/splits.hpp"
#include "driftbench/templates.hpp"

namespace driftbench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string decode_name(const DecodePolicy& d) {
  return d.kind == DecodePolicy::Kind::kGreedy ? "greedy" : "sample";
}

struct Context {
  const PipelineConfig& config;
  const RunOptions& options;
  fs::path out;
  std::vector<RelationConfig> relations;
  std::map<std::string, std::shared_ptr<BridgeClient>> clients;  // by backend name
  std::vector<std::string> backend_order;                        // config order
  std::map<std::string, std::string> backend_identity;           // endpoint + fixture digest

  void log(const std::string& line) const {
    if (options.log) options.log(line);
  }
  fs::path dir(const std::string& stage) const { return out / stage; }
  BridgeClient& tokenizer_client() const {
    const auto& name = config.tokenizer_backend.empty() ? backend_order.front() : config.tokenizer_backend;
    return *clients.at(name);
  }
};

void run_ingest(Context& c) {
  auto dir = c.dir("ingest");
  json stats;
  std::vector<FactRecord> facts;
  if (!c.config.facts.empty()) {
    facts = read_facts_tsv(c.config.facts);
    stats["source"] = "facts";
    stats["facts_before_cap"] = facts.size();
    facts = select_top_subjects(std::move(facts), c.relations);
  } else {
    auto r = ingest_dump_file(c.config.dump, c.relations, c.config.ingest_threads);
    facts = std::move(r.facts);
    stats["source"] = "dump";
    stats["lines"] = r.dump.lines;
    stats["entities"] = r.dump.entities;
    stats["malformed"] = r.dump.malformed;
    stats["bytes"] = r.dump.bytes;
    stats["encountered"] = r.tally.encountered;
    stats["emitted"] = r.tally.emitted;
    json excl = json::object();
    for (std::size_t i = 0; i < static_cast<std::size_t>(Exclusion::kCount); ++i) {
      excl[std::string(exclusion_name(static_cast<Exclusion>(i)))] = r.tally.counts[i];
    }
    stats["excluded"] = excl;
    stats["facts_before_cap"] = r.facts_before_cap;
  }
  stats["facts"] = facts.size();
  write_facts_tsv(dir / "facts.tsv", facts);
  write_file_atomic(dir / "ingest_stats.json", stats.dump(2) + "\n");
  c.log("ingest: " + std::to_string(facts.size()) + " facts");
}

void run_snapshot(Context& c) {
  auto facts = read_facts_tsv(c.dir("ingest") / "facts.tsv");
  auto snaps = build_snapshot(facts, c.config.range_from, c.config.range_to, c.config.granularity);
  write_snapshots(c.dir("snapshot"), snaps);
  c.log("snapshot: " + std::to_string(snaps.size()) + " buckets");
}

void run_split(Context& c) {
  auto splits = assign_splits(read_snapshots(c.dir("snapshot")));
  write_splits(c.dir("split"), splits);
  c.log("split: " + std::to_string(splits.size() - 1) + " transitions");
}

void run_render(Context& c) {
  auto splits = read_splits(c.dir("split"));
  std::map<std::string, Template> templates;
  for (const auto& r : c.relations) templates.emplace(r.property_id, Template::from(r));
  auto& tok = c.tokenizer_client();
  const auto mask = tok.mask_token();
  const int max_masks = c.config.evaluation.max_masks;

  std::string stats = "bucket,queries,within_max_tokens,single_token,pct_lost\n";
  for (const auto& bs : splits) {
    std::vector<ClozeQuery> multi, mlm;
    for (const auto& a : bs.assignments) {
      auto t = templates.find(a.key.property_id);
      if (t == templates.end()) continue;
      SnapshotQuery q{a.key, bs.bucket_id, a.subject_label, a.gold()};
      auto answers = tokenize_answers(q.answers, tok, !t->second.object_first());
      auto make = [&](View v) {
        auto cq = render_query(t->second, q, 1, mask, v);
        cq.split = a.label;
        cq.answers = answers;
        cq.answers_before = a.answers_before;
        return cq;
      };
      multi.push_back(make(View::kMultiToken));
      mlm.push_back(make(View::kMlmScore));
    }
    auto within = filter_max_tokens(std::move(multi), max_masks);
    std::vector<ClozeQuery> single_in;
    for (auto q : within.kept) {
      q.view = View::kSingleToken;
      q.query_id = make_query_id(q.key, q.bucket_id, q.view);
      single_in.push_back(std::move(q));
    }
    auto single = filter_single_token(std::move(single_in));
    for (View v : c.config.views) {
      const auto& qs = v == View::kSingleToken ? single.kept : v == View::kMultiToken ? within.kept : mlm;
      std::vector<json> rows;
      for (const auto& q : qs) rows.push_back(to_json(q));
      write_jsonl(c.dir("render") / std::string(view_name(v)) / (bs.bucket_id + ".jsonl"), rows);
    }
    stats += bs.bucket_id + ',' + std::to_string(within.input) + ',' + std::to_string(within.kept.size()) + ',' +
             std::to_string(single.kept.size()) + ',' + format_double(100.0 * single.discarded_fraction()) + '\n';
  }
  write_file_atomic(c.dir("render") / "filter_stats.csv", stats);
  c.log("render: " + std::to_string(splits.size()) + " buckets");
}

fs::path cache_path(const Context& c, const std::string& backend) {
  return c.out / "cache" / (backend + "-" + c.backend_identity.at(backend).substr(0, 16) + ".jsonl");
}

void run_evaluate(Context& c) {
  for (const auto& name : c.backend_order) {
    auto& client = *c.clients.at(name);
    for (View v : c.config.views) {
      auto vdir = c.dir("render") / std::string(view_name(v));
      for (const auto& file : list_files(vdir, ".jsonl")) {
        std::vector<ClozeQuery> queries;
        for (const auto& j : read_jsonl(file)) queries.push_back(cloze_query_from_json(j));
        auto records = evaluate_queries(queries, client, c.config.evaluation);
        std::vector<json> rows;
        for (auto& r : records) {
          r.backend = name;
          rows.push_back(to_json(r));
        }
        write_jsonl(c.dir("evaluate") / name / std::string(view_name(v)) / file.filename(), rows);
      }
    }
    client.cache()->save(cache_path(c, name));
    c.log("evaluate: " + name + " done (" + std::to_string(client.fill_mask_calls()) + " fill_mask calls)");
  }
}

void run_aggregate(Context& c) {
  std::vector<MetricSample> samples;
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(c.dir("evaluate"))) {
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::size_t failed = 0;
  for (const auto& f : files) {
    for (const auto& j : read_jsonl(f)) {
      auto r = evaluation_record_from_json(j);
      if (r.error) {
        ++failed;
        continue;
      }
      samples.push_back(r.sample());
    }
  }
  auto reports = aggregate(samples);
  write_file_atomic(c.dir("aggregate") / "reports.csv", reports_to_csv(reports));
  write_file_atomic(c.dir("aggregate") / "reports.json", reports_to_json(reports).dump(2) + "\n");
  c.log("aggregate: " + std::to_string(reports.size()) + " rows, " + std::to_string(failed) + " failed records");
}

void run_report(Context& c) {
  auto dir = c.dir("report");
  auto reports = reports_from_csv(c.dir("aggregate") / "reports.csv");
  std::set<std::pair<std::string, std::string>> selectors;
  std::set<std::string> splits;
  for (const auto& r : reports) {
    selectors.insert({r.view, r.metric});
    splits.insert(r.split);
  }
  for (const auto& [view, metric] : selectors) {
    for (const auto& split : splits) {
      ReportSelector sel{view, metric, split};
      auto table = emit_model_by_bucket_table(reports, sel);
      if (table.rows.empty()) continue;
      auto stem = view + "_" + metric + "_" + split;
      write_file_atomic(dir / "tables" / (stem + ".csv"), table_to_csv(table));
      if (split == kOverallSplit) write_file_atomic(dir / "charts" / (stem + ".svg"), table_to_svg(table));
      auto w = emit_window_view(reports, sel, c.config.report_window);
      if (!w.rows.empty()) write_file_atomic(dir / "windows" / (stem + ".csv"), window_to_csv(w));
    }
  }
  auto bucket_splits = read_splits(c.dir("split"));
  write_file_atomic(dir / "split_statistics.csv", split_statistics_csv(bucket_splits));
  write_file_atomic(dir / "filter_statistics.csv", read_file(c.dir("render") / "filter_stats.csv"));
  c.log("report: " + std::to_string(selectors.size()) + " metric views");
}

using StageFn = void (*)(Context&);
const std::map<std::string, StageFn> kStages = {
    {"ingest", run_ingest},     {"snapshot", run_snapshot},   {"split", run_split}, {"render", run_render},
    {"evaluate", run_evaluate}, {"aggregate", run_aggregate}, {"report", run_report}};

json load_stage_records(const fs::path& path) {
  if (!fs::exists(path)) return json::object();
  try {
    auto j = json::parse(read_file(path));
    return j.is_object() ? j : json::object();
  } catch (const json::exception&) {
    return json::object();
  }
}

std::string replay_command(const RunOptions& o, const std::string& stage) {
  std::string cmd = "driftbench " + stage;
  if (!o.config_path.empty()) cmd += " --config " + o.config_path.string();
  cmd += " --out-dir " + o.out_dir.string() + " --resume";
  if (o.seed) cmd += " --seed " + std::to_string(*o.seed);
  return cmd;
}

}  // namespace

json RunManifest::to_json() const {
  json backends_j = json::array();
  for (const auto& b : backends) {
    backends_j.push_back({{"name", b.name},
                          {"endpoint", b.endpoint},
                          {"vocab_size", b.vocab_size},
                          {"mask_token_id", b.mask_token_id},
                          {"mask_token", b.mask_token}});
  }
  json stages_j = json::array();
  for (const auto& s : stages) {
    stages_j.push_back({{"stage", s.stage},
                        {"executed", s.executed},
                        {"input_digest", s.input_digest},
                        {"output_digest", s.output_digest}});
  }
  return {{"config_hash", config_hash},
          {"input_digests", input_digests},
          {"backends", backends_j},
          {"granularity", granularity},
          {"range", {{"from", range_from}, {"to", range_to}}},
          {"max_masks", max_masks},
          {"top_k", top_k},
          {"decode_policy", decode_policy},
          {"seed", seed},
          {"tool_version", tool_version},
          {"started_at", started_at},
          {"finished_at", finished_at},
          {"stages", stages_j}};
}

std::string directory_digest(const fs::path& dir) {
  std::vector<std::pair<std::string, fs::path>> files;
  if (fs::exists(dir)) {
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      if (e.is_regular_file()) files.emplace_back(fs::relative(e.path(), dir).generic_string(), e.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::string acc;
  for (const auto& [rel, path] : files) acc += rel + '\0' + sha256_file(path) + '\n';
  return sha256_hex(acc);
}

RunManifest run_pipeline(const PipelineConfig& input_config, const RunOptions& options) {
  PipelineConfig config = input_config;
  if (options.seed) config.evaluation.decode.seed = *options.seed;
  if (config.backends.empty()) throw ConfigError("no backends configured");
  if (!options.stop_after.empty() &&
      std::find(kStageOrder.begin(), kStageOrder.end(), options.stop_after) == kStageOrder.end()) {
    throw ConfigError("unknown stage '" + options.stop_after + "'");
  }

  RunManifest m;
  m.started_at = utc_now();
  m.tool_version = std::string(kToolVersion);
  m.config_hash = config.hash();
  m.granularity = std::string(granularity_name(config.granularity));
  m.range_from = config.range_from.iso();
  m.range_to = config.range_to.iso();
  m.max_masks = config.evaluation.max_masks;
  m.top_k = config.evaluation.single.k_max;
  m.decode_policy = decode_name(config.evaluation.decode);
  m.seed = config.evaluation.decode.seed;
  if (!config.dump.empty()) m.input_digests["dump"] = sha256_file(config.dump);
  if (!config.facts.empty()) m.input_digests["facts"] = sha256_file(config.facts);
  m.input_digests["relations"] = sha256_file(config.relations);

  Context c{config, options, options.out_dir, load_relations(config.relations, config.max_subjects), {}, {}, {}};
  fs::create_directories(c.out);
  ClientOptions copts;
  copts.max_in_flight = config.max_in_flight;
  for (const auto& b : config.backends) {
    std::string identity = b.endpoint;
    if (b.endpoint.starts_with("mock:")) {
      auto digest = sha256_file(b.endpoint.substr(5));
      m.input_digests["backend:" + b.name] = digest;
      identity += '\0' + digest;
    }
    c.backend_identity[b.name] = sha256_hex(identity);
    auto cache = std::make_shared<ResponseCache>();
    if (fs::exists(cache_path(c, b.name))) cache->load(cache_path(c, b.name));
    auto client = std::make_shared<BridgeClient>(b.name, make_backend(b.endpoint), copts, cache);
    auto d = client->descriptor();
    d.endpoint = b.endpoint;
    m.backends.push_back(d);
    c.clients.emplace(b.name, std::move(client));
    c.backend_order.push_back(b.name);
  }
  if (!config.tokenizer_backend.empty() && !c.clients.count(config.tokenizer_backend)) {
    throw ConfigError("tokenizer_backend '" + config.tokenizer_backend + "' is not a configured backend");
  }

  auto records_path = c.out / "stages.json";
  json records = options.resume ? load_stage_records(records_path) : json::object();
  std::string log_text;
  std::string upstream = m.config_hash;
  for (const auto& stage : kStageOrder) {
    StageOutcome o;
    o.stage = stage;
    o.input_digest = sha256_hex(stage + '\0' + upstream);
    auto dir = c.dir(stage);
    bool intact = options.resume && records.contains(stage) &&
                  records[stage].value("input_digest", "") == o.input_digest && fs::exists(dir) &&
                  records[stage].value("output_digest", "") == directory_digest(dir);
    if (intact) {
      o.output_digest = records[stage]["output_digest"].get<std::string>();
      c.log("skip " + stage);
    } else {
      fs::remove_all(dir);
      fs::create_directories(dir);
      try {
        kStages.at(stage)(c);
      } catch (const TransportError&) {
        throw;
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        throw StageError(stage, replay_command(options, stage), e.what());
      }
      o.executed = true;
      o.output_digest = directory_digest(dir);
      records[stage] = {{"input_digest", o.input_digest}, {"output_digest", o.output_digest}};
      write_file_atomic(records_path, records.dump(2) + "\n");
    }
    log_text += (o.executed ? "executed " : "skipped ") + stage + "\n";
    upstream = o.output_digest;
    m.stages.push_back(o);
    if (stage == options.stop_after) break;
  }
  write_file_atomic(c.out / "stage_log.txt", log_text);
  m.finished_at = utc_now();
  write_file_atomic(c.out / "manifest.json", m.to_json().dump(2) + "\n");
  return m;
}

}  // namespace driftbench
