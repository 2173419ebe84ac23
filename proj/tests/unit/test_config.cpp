#include <doctest.h>

#include <fstream>

#include "driftbench/config.hpp"
#include "driftbench/errors.hpp"
#include "driftbench/io.hpp"
#include "support.hpp"

using namespace driftbench;
namespace fs = std::filesystem;

namespace {

std::string fixture_text() { return read_file(fixture("config.ini")); }

std::string replace(std::string s, const std::string& from, const std::string& to) {
  auto p = s.find(from);
  REQUIRE(p != std::string::npos);
  return s.replace(p, from.size(), to);
}

PipelineConfig parse(const std::string& text) { return parse_config(text, fixture("")); }

}  // namespace

TEST_CASE("fixture config parses") {
  auto c = load_config(fixture("config.ini"));
  CHECK(c.dump == fs::absolute(fixture("dump_slice.jsonl")).lexically_normal());
  CHECK(c.relations.filename() == "templates.csv");
  CHECK(c.max_subjects == 1000);
  CHECK(c.ingest_threads == 2);
  CHECK(c.range_from == Date(2020, 10, 1));
  CHECK(c.range_to == Date(2021, 12, 31));
  CHECK(c.granularity == Granularity::kQuarter);
  CHECK(c.views == std::vector<View>{View::kSingleToken, View::kMultiToken, View::kMlmScore});
  CHECK(c.evaluation.max_masks == 5);
  CHECK(c.evaluation.single.k_max == 100);
  CHECK(c.evaluation.single.ks == std::vector<std::size_t>{1, 10, 100});
  CHECK(c.evaluation.decode.kind == DecodePolicy::Kind::kGreedy);
  CHECK(c.evaluation.decode.seed == 7);
  CHECK(c.evaluation.threads == 4);
  CHECK(c.max_in_flight == 8);
  REQUIRE(c.backends.size() == 2);
  CHECK(c.backends[0].name == "2021-Q2");
  CHECK(c.backends[0].endpoint.starts_with("mock:/"));
  CHECK(c.backends[0].endpoint.ends_with("mock_2021-Q2.json"));
  CHECK(c.report_window == 3);
}

TEST_CASE("invalid settings are config errors") {
  auto base = fixture_text();
  CHECK_THROWS_AS(parse(base + "\n[report]\nlegend = yes\n"), ConfigError);
  CHECK_THROWS_AS(parse(base + "\n[extra]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse(replace(base, "granularity = quarter", "granularity = fortnight")), ConfigError);
  CHECK_THROWS_AS(parse(replace(base, "window = 3", "window = 4")), ConfigError);
  CHECK_THROWS_AS(parse(replace(base, "max_masks = 5", "max_masks = 0")), ConfigError);
  CHECK_THROWS_AS(parse(replace(base, "top_k = 100", "top_k = ten")), ConfigError);
  CHECK_THROWS_AS(parse(replace(base, "from = 2020-10-01", "from = 2022-01-01")), ConfigError);
  CHECK_THROWS_AS(parse(replace(base, "from = 2020-10-01", "from = 2020-13-01")), ConfigError);
  CHECK_THROWS_AS(parse(replace(base, "decode = greedy", "decode = beam")), ConfigError);
  CHECK_THROWS_AS(parse(replace(base, "dump = dump_slice.jsonl", "dump = nowhere.jsonl")), ConfigError);
  CHECK_THROWS_AS(parse(replace(base, "mock:mock_2021-Q3.json", "mock:nowhere.json")), ConfigError);
  CHECK_THROWS_AS(parse(replace(base, "2021-Q3 = mock:mock_2021-Q3.json", "2021-Q2 = mock:mock_2021-Q3.json")),
                  ConfigError);
  CHECK_THROWS_AS(load_config(fixture("no_such_config.ini")), ConfigError);
}

TEST_CASE("relative paths resolve against the config directory") {
  TempDir dir;
  fs::create_directories(dir / "conf");
  fs::copy_file(fixture("templates.csv"), dir / "templates.csv");
  fs::copy_file(fixture("mock_probe.json"), dir / "probe.json");
  std::ofstream(dir / "facts.tsv") << "";
  std::ofstream(dir / "conf" / "run.ini") << "[data]\nfacts = ../facts.tsv\nrelations = ../templates.csv\n"
                                             "[backends]\nprobe = mock:../probe.json\n"
                                             "remote = http://127.0.0.1:9/\n";
  auto c = load_config(dir / "conf" / "run.ini");
  CHECK(fs::equivalent(c.facts, dir / "facts.tsv"));
  CHECK(fs::equivalent(c.backends[0].endpoint.substr(5), dir / "probe.json"));
  CHECK(c.backends[1].endpoint == "http://127.0.0.1:9/");
  CHECK(c.dump.empty());
}

TEST_CASE("config hash") {
  auto base = fixture_text();
  auto h = parse(base).hash();
  CHECK(h.size() == 64);
  CHECK(parse(base).hash() == h);
  CHECK(parse("; a comment\n" + base).hash() == h);
  CHECK(parse(replace(base, "seed = 7", "seed = 8")).hash() != h);
  CHECK(parse(replace(base, "window = 3", "window = 5")).hash() != h);
  // thread counts do not change results
  CHECK(parse(replace(base, "threads = 4", "threads = 1")).hash() == h);
}
