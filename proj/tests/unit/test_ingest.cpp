#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <boost/iostreams/copy.hpp>
#include <boost/iostreams/filter/bzip2.hpp>
#include <boost/iostreams/filter/gzip.hpp>
#include <boost/iostreams/filtering_stream.hpp>

#include "driftbench/errors.hpp"
#include "driftbench/ingest.hpp"
#include "driftbench/io.hpp"
#include "support.hpp"

using namespace driftbench;
namespace bio = boost::iostreams;

namespace {

std::vector<RelationConfig> fixture_relations() { return load_relations(fixture("templates.csv")); }

const IngestResult& fixture_ingest() {
  static const IngestResult r = ingest_dump_file(fixture("dump_slice.jsonl"), fixture_relations());
  return r;
}

std::vector<FactRecord> facts_of(const std::vector<FactRecord>& all, const std::string& subject) {
  std::vector<FactRecord> out;
  std::copy_if(all.begin(), all.end(), std::back_inserter(out),
               [&](const FactRecord& f) { return f.subject_qid == subject; });
  return out;
}

template <typename Filter>
void compress(const std::filesystem::path& in, const std::filesystem::path& out) {
  std::ifstream src(in, std::ios::binary);
  std::ofstream dst(out, std::ios::binary);
  bio::filtering_ostream z;
  z.push(Filter());
  z.push(dst);
  bio::copy(src, z);
}

}  // namespace

TEST_CASE("wikidata time precision") {
  CHECK(resolve_wikidata_time({"+2021-08-27T00:00:00Z", 11})->iso() == "2021-08-27");
  CHECK(resolve_wikidata_time({"+2021-08-00T00:00:00Z", 10})->iso() == "2021-08-01");
  CHECK(resolve_wikidata_time({"+2021-00-00T00:00:00Z", 9})->iso() == "2021-01-01");
  CHECK_FALSE(resolve_wikidata_time({"+2010-00-00T00:00:00Z", 8}));
}

TEST_CASE("relation config") {
  auto rels = fixture_relations();
  CHECK(rels.size() == 16);
  auto p39 = std::find_if(rels.begin(), rels.end(), [](const auto& r) { return r.property_id == "P39"; });
  REQUIRE(p39 != rels.end());
  CHECK(p39->template_text == "<subject> holds the position of <object>.");
  CHECK(is_property_id("P54"));
  CHECK_FALSE(is_property_id("Q54"));
  CHECK(is_item_id("Q11571"));
  CHECK_FALSE(is_item_id("Q"));

  TempDir tmp;
  write_file_atomic(tmp / "dup.csv", "P54,a,<subject> x <object>.\nP54,b,<subject> y <object>.\n");
  CHECK_THROWS_AS(load_relations(tmp / "dup.csv"), ConfigError);
  write_file_atomic(tmp / "noobj.csv", "P54,a,<subject> plays.\n");
  CHECK_THROWS_AS(load_relations(tmp / "noobj.csv"), ConfigError);
  write_file_atomic(tmp / "badid.csv", "X54,a,<subject> plays for <object>.\n");
  CHECK_THROWS_AS(load_relations(tmp / "badid.csv"), ConfigError);
}

TEST_CASE("entity line parsing") {
  std::string line =
      R"({"id":"Q1","labels":{"en":{"language":"en","value":"Alpha"}},"sitelinks":{"enwiki":{"title":"Alpha"}},)"
      R"("claims":{"P54":[{"rank":"preferred","mainsnak":{"snaktype":"value","datavalue":{"type":"wikibase-entityid",)"
      R"("value":{"entity-type":"item","id":"Q2"}}},"qualifiers":{"P580":[{"snaktype":"value","datavalue":)"
      R"({"type":"time","value":{"time":"+2020-05-01T00:00:00Z","precision":11}}}]}}]}},)";
  auto e = parse_entity_line(line);
  REQUIRE(e);
  CHECK(e->qid == "Q1");
  CHECK(e->label == "Alpha");
  CHECK(e->has_sitelink);
  REQUIRE(e->statements.size() == 1);
  CHECK(e->statements[0].rank == StatementRank::kPreferred);
  CHECK(e->statements[0].object_qid == "Q2");
  CHECK(e->statements[0].start_times.size() == 1);
  CHECK(e->statements[0].end_times.empty());
  CHECK_FALSE(parse_entity_line("{not json"));
  CHECK_FALSE(parse_entity_line("["));
}

TEST_CASE("fixture dump: counts and exclusion tally") {
  const auto& r = fixture_ingest();
  CHECK(r.dump.lines == 202);
  CHECK(r.dump.entities == 200);
  CHECK(r.dump.malformed == 0);
  // one authored case per exclusion, two where noted
  CHECK(r.tally.get(Exclusion::kDeprecatedRank) == 1);
  CHECK(r.tally.get(Exclusion::kNoObjectEntity) == 1);
  CHECK(r.tally.get(Exclusion::kNoTemporalQualifier) == 2);  // none at all, decade precision only
  CHECK(r.tally.get(Exclusion::kInvalidInterval) == 1);
  CHECK(r.tally.get(Exclusion::kBeforeCutoff) == 1);
  CHECK(r.tally.get(Exclusion::kSubjectNoSitelink) == 1);
  CHECK(r.tally.get(Exclusion::kSubjectNoLabel) == 1);
  CHECK(r.tally.get(Exclusion::kObjectNoSitelink) == 2);  // unlinked object, object absent from dump
  CHECK(r.tally.emitted + r.tally.excluded() == r.tally.encountered);
  CHECK(r.facts.size() == r.tally.emitted);
  CHECK(std::is_sorted(r.facts.begin(), r.facts.end(), fact_less));
}

TEST_CASE("fixture dump: Ronaldo, Italy and Morgan facts") {
  const auto& facts = fixture_ingest().facts;
  auto ronaldo = facts_of(facts, "Q11571");
  REQUIRE(ronaldo.size() == 3);  // the deprecated duplicate is gone
  std::map<std::string, TimeInterval> by_club;
  for (const auto& f : ronaldo) by_club[f.object_qid] = f.interval;
  CHECK(by_club.at("Q1422") == TimeInterval{Date(2018, 7, 10), Date(2021, 8, 27)});
  CHECK(by_club.at("Q18656") == TimeInterval{Date(2021, 8, 31), Date(2022, 11, 22)});
  CHECK(by_club.at("Q8682") == TimeInterval{Date(2009, 7, 1), Date(2018, 7, 10)});  // ends after the cutoff
  CHECK(ronaldo[0].subject_label == "Cristiano Ronaldo");

  auto italy = facts_of(facts, "Q38");
  REQUIRE(italy.size() == 2);
  CHECK(italy[0].property_id == "P6");

  auto morgan = facts_of(facts, "Q5383");
  REQUIRE(morgan.size() == 2);
  auto uswnt = std::find_if(morgan.begin(), morgan.end(), [](const auto& f) { return f.object_qid == "Q1321963"; });
  REQUIRE(uswnt != morgan.end());
  CHECK_FALSE(uswnt->interval.end);
}

TEST_CASE("fixture dump: qualifier edge cases") {
  auto edge = facts_of(fixture_ingest().facts, "Q9900003");
  REQUIRE(edge.size() == 2);
  std::map<std::string, TimeInterval> by_club;
  for (const auto& f : edge) by_club[f.object_qid] = f.interval;
  CHECK(by_club.at("Q18656") == TimeInterval{Date(2019, 1, 1), Date(2020, 1, 1)});     // year precision
  CHECK(by_club.at("Q18609046") == TimeInterval{Date(2019, 2, 1), Date(2019, 12, 31)});  // earliest/latest
}

TEST_CASE("malformed lines are counted and skipped") {
  auto r = ingest_dump_file(fixture("dump_slice_malformed.jsonl"), fixture_relations());
  CHECK(r.dump.malformed == 2);
  CHECK(r.facts == fixture_ingest().facts);
}

TEST_CASE("compressed dumps and thread counts give identical facts") {
  TempDir tmp;
  compress<bio::gzip_compressor>(fixture("dump_slice.jsonl"), tmp / "d.json.gz");
  compress<bio::bzip2_compressor>(fixture("dump_slice.jsonl"), tmp / "d.json.bz2");
  auto rels = fixture_relations();
  CHECK(ingest_dump_file(tmp / "d.json.gz", rels).facts == fixture_ingest().facts);
  CHECK(ingest_dump_file(tmp / "d.json.bz2", rels).facts == fixture_ingest().facts);
  CHECK(ingest_dump_file(fixture("dump_slice.jsonl"), rels, 4).facts == fixture_ingest().facts);
}

TEST_CASE("top subject cap matches a brute-force oracle") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<RelationConfig> rels = {{"P54", "team", "<subject> plays for <object>.", 1 + rng() % 6},
                                        {"P6", "head", "<object> leads <subject>.", 1 + rng() % 6}};
    std::vector<FactRecord> facts;
    int n = static_cast<int>(rng() % 60);
    for (int i = 0; i < n; ++i) {
      FactRecord f;
      f.property_id = rng() % 2 ? "P54" : "P6";
      f.subject_qid = "Q" + std::to_string(1 + rng() % 12);
      f.object_qid = "Q" + std::to_string(100 + rng() % 30);
      f.interval = {Date(2015, 1, 1).plus_days(static_cast<int>(rng() % 2000)), std::nullopt};
      facts.push_back(f);
    }
    if (rng() % 4 == 0) facts.push_back({"Q5", "", "P999", "Q7", "", {Date(2020, 1, 1), std::nullopt}});

    // oracle: per relation, rank subjects by fact count desc then qid, keep the top N
    std::set<std::pair<std::string, std::string>> keep;
    for (const auto& rel : rels) {
      std::map<std::string, int> count;
      for (const auto& f : facts)
        if (f.property_id == rel.property_id) ++count[f.subject_qid];
      std::vector<std::pair<int, std::string>> order;
      for (const auto& [s, c] : count) order.push_back({-c, s});
      std::sort(order.begin(), order.end());
      for (std::size_t i = 0; i < order.size() && i < rel.max_subjects; ++i) keep.insert({rel.property_id, order[i].second});
    }
    std::vector<FactRecord> expected;
    for (const auto& f : facts)
      if (keep.count({f.property_id, f.subject_qid})) expected.push_back(f);
    std::sort(expected.begin(), expected.end(), fact_less);

    auto shuffled = facts;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(select_top_subjects(shuffled, rels) == expected);
  }
}

TEST_CASE("fact TSV round trip") {
  TempDir tmp;
  auto facts = fixture_ingest().facts;
  facts.front().subject_label = "Tab\tin label";
  write_facts_tsv(tmp / "f.tsv", facts);
  auto back = read_facts_tsv(tmp / "f.tsv");
  REQUIRE(back.size() == facts.size());
  CHECK(back.front().subject_label == "Tab in label");
  facts.front().subject_label = "Tab in label";
  CHECK(back == facts);
  auto header = read_file(tmp / "f.tsv").substr(0, read_file(tmp / "f.tsv").find('\n'));
  CHECK(header == "subject_qid\tproperty_id\tobject_qid\tstart\tend\tsubject_label\tobject_label");

  write_file_atomic(tmp / "bad.tsv", header + "\nQ1\tP54\tQ2\t2020-13-01\t\tA\tB\n");
  try {
    read_facts_tsv(tmp / "bad.tsv");
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    CHECK(e.line() == 2);
  }
}
