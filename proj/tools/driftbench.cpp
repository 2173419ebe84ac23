#include <CLI11.hpp>

#include <csignal>
#include <iostream>

#include "driftbench/bridge.hpp"
#include "driftbench/config.hpp"
#include "driftbench/errors.hpp"
#include "driftbench/ingest.hpp"
#include "driftbench/io.hpp"
#include "driftbench/pipeline.hpp"
#include "driftbench/probe.hpp"
#include "driftbench/snapshot.hpp"
#include "driftbench/splits.hpp"

namespace fs = std::filesystem;
using namespace driftbench;

namespace {

enum Exit { kOk = 0, kConfig = 2, kStage = 3, kUnreachable = 4 };

struct Globals {
  std::string config;
  std::string out_dir = "out";
  bool resume = false;
  std::optional<std::uint64_t> seed;
};

int run_stages(const Globals& g, const std::string& stop_after, bool resume) {
  if (g.config.empty()) throw ConfigError("--config is required");
  auto config = load_config(g.config);
  RunOptions o;
  o.out_dir = g.out_dir;
  o.config_path = g.config;
  o.resume = resume;
  o.seed = g.seed;
  o.stop_after = stop_after;
  o.log = [](const std::string& line) { std::cerr << line << '\n'; };
  auto m = run_pipeline(config, o);
  std::cout << "manifest: " << (fs::path(g.out_dir) / "manifest.json").string() << " (config " << m.config_hash
            << ")\n";
  return kOk;
}

int standalone_ingest(const std::string& dump, const std::string& relations, const std::string& out,
                      std::size_t max_subjects, unsigned threads) {
  auto rels = load_relations(relations, max_subjects);
  auto r = ingest_dump_file(dump, rels, threads);
  write_facts_tsv(out, r.facts);
  std::cerr << "lines " << r.dump.lines << ", entities " << r.dump.entities << ", malformed " << r.dump.malformed
            << ", facts " << r.facts.size() << " (" << r.facts_before_cap << " before cap)\n";
  for (std::size_t i = 0; i < static_cast<std::size_t>(Exclusion::kCount); ++i) {
    std::cerr << "  excluded " << exclusion_name(static_cast<Exclusion>(i)) << ": " << r.tally.counts[i] << '\n';
  }
  return kOk;
}

int standalone_snapshot(const std::string& facts, const std::string& from, const std::string& to,
                        const std::string& granularity, const std::string& out) {
  auto parse = [](const std::string& flag, const std::string& v) {
    auto d = Date::try_parse(v);
    if (!d) throw ConfigError(flag + ": expected YYYY-MM-DD, got '" + v + "'");
    return *d;
  };
  auto snaps = build_snapshot(read_facts_tsv(facts), parse("--from", from), parse("--to", to),
                              parse_granularity(granularity));
  write_snapshots(out, snaps);
  std::cerr << "snapshot: " << snaps.size() << " buckets\n";
  return kOk;
}

int standalone_split(const std::string& snapshots, const std::string& out) {
  auto splits = assign_splits(read_snapshots(snapshots));
  write_splits(out, splits);
  std::cerr << "split: " << splits.size() - 1 << " transitions\n";
  return kOk;
}

struct EvaluateArgs {
  std::string queries;
  std::string backend;
  std::string name = "backend";
  std::string view = "single";
  std::string out;
  int max_masks = 5;
  std::size_t top_k = 100;
  unsigned threads = 4;
  std::uint64_t seed = 0;
};

// Reads <queries>/<view>/*.jsonl when present, else <queries>/*.jsonl, and
// keeps the queries of the requested view.
int standalone_evaluate(const EvaluateArgs& a) {
  if (a.backend.empty() || a.out.empty()) throw ConfigError("evaluate --queries needs --backend and --out");
  View view = parse_view(a.view);
  fs::path dir = a.queries;
  if (fs::is_directory(dir / std::string(view_name(view)))) dir /= std::string(view_name(view));
  auto files = list_files(dir, ".jsonl");
  if (files.empty()) throw ConfigError("no .jsonl query files in " + dir.string());

  EvaluationOptions o;
  o.max_masks = a.max_masks;
  o.single.k_max = a.top_k;
  o.threads = a.threads;
  o.decode.seed = a.seed;
  auto cache = std::make_shared<ResponseCache>();
  fs::path cache_file = fs::path(a.out) / "cache.jsonl";
  if (fs::exists(cache_file)) cache->load(cache_file);
  BridgeClient client(a.name, make_backend(a.backend), {}, cache);

  std::size_t n = 0;
  for (const auto& file : files) {
    std::vector<ClozeQuery> queries;
    for (const auto& j : read_jsonl(file)) {
      auto q = cloze_query_from_json(j);
      if (q.view == view) queries.push_back(std::move(q));
    }
    std::vector<nlohmann::json> rows;
    for (auto& r : evaluate_queries(queries, client, o)) {
      r.backend = a.name;
      rows.push_back(to_json(r));
    }
    n += rows.size();
    write_jsonl(fs::path(a.out) / file.filename(), rows);
  }
  cache->save(cache_file);
  std::cerr << "evaluate: " << n << " records, " << client.fill_mask_calls() << " fill_mask calls\n";
  return kOk;
}

int serve_mock(const std::string& fixture, const std::string& host, int port) {
  WireServer server(MockBackend::load(fixture));
  std::cerr << "serving " << fixture << " on " << host << ':' << port << '\n';
  server.listen_blocking(host, port);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal knowledge probing benchmark for masked language models"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Pipeline config (INI)");
  app.add_option("--out-dir", g.out_dir, "Run directory")->capture_default_str();
  app.add_flag("--resume", g.resume, "Skip stages whose inputs and outputs are unchanged");
  app.add_option("--seed", g.seed, "Override the decoding seed");

  std::string dump, relations, facts_out;
  std::size_t max_subjects = kDefaultMaxSubjects;
  unsigned threads = 1;
  auto* ingest = app.add_subcommand("ingest", "Extract temporal facts from an entity dump");
  ingest->add_option("--dump", dump, "Entity dump (JSON lines, optionally gzip or bzip2)");
  ingest->add_option("--relations", relations, "Relations CSV (property_id,relation_name,template)");
  ingest->add_option("--out", facts_out, "Fact TSV to write");
  ingest->add_option("--max-subjects", max_subjects, "Subjects kept per relation")->capture_default_str();
  ingest->add_option("--threads", threads, "Parser threads")->capture_default_str();

  std::vector<CLI::App*> stage_cmds{ingest};
  for (const char* name : {"snapshot", "split", "render", "evaluate", "aggregate", "report"}) {
    stage_cmds.push_back(app.add_subcommand(name, std::string("Run the pipeline through the ") + name + " stage"));
  }
  auto* snapshot = stage_cmds[1];
  auto* split_cmd = stage_cmds[2];
  auto* evaluate = stage_cmds[4];

  std::string facts_in, from = "2019-01-01", to = "2022-06-30", granularity = "quarter", snapshot_out;
  snapshot->add_option("--facts", facts_in, "Fact TSV (standalone form)");
  snapshot->add_option("--from", from)->capture_default_str();
  snapshot->add_option("--to", to)->capture_default_str();
  snapshot->add_option("--granularity", granularity, "month, quarter or year")->capture_default_str();
  snapshot->add_option("--out", snapshot_out, "Snapshot directory to write");

  std::string snapshots_in, split_out;
  split_cmd->add_option("--snapshots", snapshots_in, "Snapshot directory (standalone form)");
  split_cmd->add_option("--out", split_out, "Split directory to write");

  EvaluateArgs ev;
  evaluate->add_option("--queries", ev.queries, "Rendered query directory (standalone form)");
  evaluate->add_option("--backend", ev.backend, "http://host:port or mock:<fixture.json>");
  evaluate->add_option("--name", ev.name, "Backend name stored in records")->capture_default_str();
  evaluate->add_option("--view", ev.view, "single, multi or pll")->capture_default_str();
  evaluate->add_option("--M", ev.max_masks, "Longest mask run")->capture_default_str();
  evaluate->add_option("--topk", ev.top_k, "Top-k list length")->capture_default_str();
  evaluate->add_option("--threads", ev.threads)->capture_default_str();
  evaluate->add_option("--out", ev.out, "Record directory to write");
  auto* run = app.add_subcommand("run", "Run the full pipeline");

  std::string fixture, host = "127.0.0.1";
  int port = 8731;
  auto* serve = app.add_subcommand("serve-mock", "Serve a mock fixture over the wire protocol");
  serve->add_option("--fixture", fixture, "Mock fixture JSON")->required();
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (ingest->parsed() && !dump.empty()) {
      if (relations.empty() || facts_out.empty()) throw ConfigError("ingest --dump needs --relations and --out");
      return standalone_ingest(dump, relations, facts_out, max_subjects, threads);
    }
    if (snapshot->parsed() && !facts_in.empty()) {
      if (snapshot_out.empty()) throw ConfigError("snapshot --facts needs --out");
      return standalone_snapshot(facts_in, from, to, granularity, snapshot_out);
    }
    if (split_cmd->parsed() && !snapshots_in.empty()) {
      if (split_out.empty()) throw ConfigError("split --snapshots needs --out");
      return standalone_split(snapshots_in, split_out);
    }
    if (evaluate->parsed() && !ev.queries.empty()) {
      if (g.seed) ev.seed = *g.seed;
      return standalone_evaluate(ev);
    }
    if (serve->parsed()) return serve_mock(fixture, host, port);
    if (run->parsed()) return run_stages(g, "", g.resume);
    for (auto* sub : stage_cmds) {
      // single stage verbs reuse whatever upstream output is still intact
      if (sub->parsed()) return run_stages(g, sub->get_name(), true);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const LoadError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const TransportError& e) {
    std::cerr << "backend unreachable: " << e.what() << '\n';
    return kUnreachable;
  } catch (const StageError& e) {
    std::cerr << e.what() << '\n';
    return kStage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kStage;
  }
  return kOk;
}
