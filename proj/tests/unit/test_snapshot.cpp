#include <doctest.h>

#include <algorithm>
#include <random>

#include "driftbench/errors.hpp"
#include "driftbench/ingest.hpp"
#include "driftbench/snapshot.hpp"
#include "support.hpp"

using namespace driftbench;

namespace {

FactRecord fact(std::string s, std::string p, std::string o, std::optional<Date> a, std::optional<Date> b,
                std::string sl = "S", std::string ol = "") {
  if (ol.empty()) ol = o;
  return {std::move(s), std::move(sl), std::move(p), std::move(o), std::move(ol), {a, b}};
}

std::vector<FactRecord> ronaldo() {
  return {fact("Q11571", "P54", "Q1422", Date(2018, 7, 10), Date(2021, 8, 27), "Cristiano Ronaldo", "Juventus FC"),
          fact("Q11571", "P54", "Q18656", Date(2021, 8, 31), Date(2022, 11, 22), "Cristiano Ronaldo",
               "Manchester United F.C.")};
}

const SnapshotQuery* find(const BucketSnapshot& b, const std::string& subject) {
  for (const auto& q : b.queries)
    if (q.key.subject_qid == subject) return &q;
  return nullptr;
}

std::vector<std::string> qids(const SnapshotQuery& q) {
  std::vector<std::string> out;
  for (const auto& a : q.answers) out.push_back(a.qid);
  return out;
}

}  // namespace

TEST_CASE("bucket ids and navigation") {
  auto q = TimeBucket::containing(Date(2021, 8, 27), Granularity::kQuarter);
  CHECK(q.bucket_id == "2021-Q3");
  CHECK(q.start == Date(2021, 7, 1));
  CHECK(q.end == Date(2021, 9, 30));
  CHECK(q.next().bucket_id == "2021-Q4");
  CHECK(q.next().next().bucket_id == "2022-Q1");
  CHECK(TimeBucket::parse("2021-Q1").prev().bucket_id == "2020-Q4");
  CHECK(TimeBucket::containing(Date(2020, 2, 29), Granularity::kMonth).end == Date(2020, 2, 29));
  CHECK(TimeBucket::parse("2021-02").end == Date(2021, 2, 28));
  CHECK(TimeBucket::parse("2021").end == Date(2021, 12, 31));
  CHECK(TimeBucket::parse("2021-Q3") == q);
  CHECK(TimeBucket::parse("2021-12").next().bucket_id == "2022-01");
  CHECK(is_bucket_id("2019-Q4"));
  CHECK_FALSE(is_bucket_id("roberta-base"));
  CHECK_FALSE(is_bucket_id("2019-Q5"));
  CHECK(bucket_id_less("2019-Q4", "2020-Q1"));
  CHECK(bucket_id_less("2022-Q2", "baseline"));
  CHECK(parse_granularity("quarter") == Granularity::kQuarter);
  CHECK_THROWS_AS(parse_granularity("fortnight"), ConfigError);
}

TEST_CASE("range covers the buckets holding both endpoints") {
  auto b = buckets_in_range(Date(2019, 1, 1), Date(2022, 6, 30), Granularity::kQuarter);
  CHECK(b.size() == 14);
  CHECK(b.front().bucket_id == "2019-Q1");
  CHECK(b.back().bucket_id == "2022-Q2");
  CHECK(buckets_in_range(Date(2021, 5, 15), Date(2021, 5, 15), Granularity::kMonth).size() == 1);
  CHECK_THROWS_AS(buckets_in_range(Date(2021, 5, 15), Date(2021, 5, 14), Granularity::kMonth), ConfigError);
}

TEST_CASE("bucketize matches a quadratic overlap oracle") {
  std::mt19937 rng(3);
  Date lo(2019, 1, 1), hi(2022, 6, 30);
  for (auto g : {Granularity::kMonth, Granularity::kQuarter, Granularity::kYear}) {
    auto all = buckets_in_range(lo, hi, g);
    for (int trial = 0; trial < 300; ++trial) {
      std::optional<Date> a, b;
      if (rng() % 5) a = Date(2017, 1, 1).plus_days(static_cast<int>(rng() % 2500));
      if (rng() % 5 || !a) b = Date(2017, 1, 1).plus_days(static_cast<int>(rng() % 2500));
      if (a && b && *b < *a) std::swap(a, b);
      TimeInterval iv{a, b};
      std::vector<std::string> expected;
      for (const auto& bucket : all) {
        bool overlap = (!a || *a <= bucket.end) && (!b || *b >= bucket.start);
        if (overlap) expected.push_back(bucket.bucket_id);
      }
      CHECK(bucketize(iv, lo, hi, g) == expected);
    }
  }
}

TEST_CASE("Ronaldo answers per quarter") {
  auto snaps = build_snapshot(ronaldo(), Date(2021, 4, 1), Date(2021, 12, 31), Granularity::kQuarter);
  REQUIRE(snaps.size() == 3);
  CHECK(qids(*find(snaps[0], "Q11571")) == std::vector<std::string>{"Q1422"});
  CHECK(qids(*find(snaps[1], "Q11571")) == std::vector<std::string>{"Q1422", "Q18656"});
  CHECK(qids(*find(snaps[2], "Q11571")) == std::vector<std::string>{"Q18656"});
  CHECK(find(snaps[1], "Q11571")->subject_label == "Cristiano Ronaldo");
  CHECK(find(snaps[1], "Q11571")->answers[1].label == "Manchester United F.C.");
}

TEST_CASE("snapshots keep empty buckets and ignore input order") {
  auto facts = ronaldo();
  facts.push_back(fact("Q38", "P6", "Q1", Date(2018, 6, 1), Date(2021, 2, 13)));
  facts.push_back(fact("Q38", "P6", "Q2", Date(2021, 2, 13), std::nullopt));
  facts.push_back(fact("Q38", "P6", "Q2", Date(2021, 3, 1), Date(2021, 3, 2)));  // duplicate answer
  auto a = build_snapshot(facts, Date(2015, 1, 1), Date(2024, 12, 31), Granularity::kYear);
  std::reverse(facts.begin(), facts.end());
  auto b = build_snapshot(facts, Date(2015, 1, 1), Date(2024, 12, 31), Granularity::kYear);
  REQUIRE(a.size() == 10);
  CHECK(a[0].queries.empty());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].bucket_id == b[i].bucket_id);
    CHECK(a[i].queries == b[i].queries);
  }
  auto italy2021 = find(a[6], "Q38");
  REQUIRE(italy2021);
  CHECK(qids(*italy2021) == std::vector<std::string>{"Q1", "Q2"});
}

TEST_CASE("snapshot files round trip") {
  TempDir tmp;
  auto snaps = build_snapshot(ronaldo(), Date(2021, 1, 1), Date(2022, 12, 31), Granularity::kQuarter);
  write_snapshots(tmp.path(), snaps);
  auto back = read_snapshots(tmp.path());
  REQUIRE(back.size() == snaps.size());
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    CHECK(back[i].bucket_id == snaps[i].bucket_id);
    CHECK(back[i].queries == snaps[i].queries);
  }
}
