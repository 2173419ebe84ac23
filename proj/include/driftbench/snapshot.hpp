#pragma once

// Calendar bucketing of facts and per-bucket query assembly.

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "driftbench/date.hpp"
#include "driftbench/ingest.hpp"

namespace driftbench {

enum class Granularity { kMonth, kQuarter, kYear };

Granularity parse_granularity(std::string_view s);
std::string_view granularity_name(Granularity g);

// Calendar-aligned bucket. Ids are "YYYY", "YYYY-Qn" or "YYYY-MM".
struct TimeBucket {
  std::string bucket_id;
  Date start;
  Date end;  // inclusive

  static TimeBucket containing(const Date& d, Granularity g);
  // Throws std::invalid_argument for ids that are not canonical.
  static TimeBucket parse(std::string_view bucket_id);

  Granularity granularity() const;
  TimeBucket next() const;
  TimeBucket prev() const;

  friend bool operator==(const TimeBucket&, const TimeBucket&) = default;
};

// Granularity-aware ordering of bucket ids ("2019-Q4" < "2020-Q1").
bool bucket_id_less(std::string_view a, std::string_view b);
bool is_bucket_id(std::string_view s);

// Buckets from the one containing range_start to the one containing range_end.
std::vector<TimeBucket> buckets_in_range(const Date& range_start, const Date& range_end,
                                         Granularity g);

// Ids of the buckets in range that the interval overlaps (inclusive edges).
std::vector<std::string> bucketize(const TimeInterval& interval, const Date& range_start,
                                   const Date& range_end, Granularity g);

struct QueryKey {
  std::string subject_qid;
  std::string property_id;

  friend auto operator<=>(const QueryKey&, const QueryKey&) = default;
};

// Key order used by every per-bucket file: property first, then subject.
struct QueryKeyOrder {
  bool operator()(const QueryKey& a, const QueryKey& b) const {
    if (a.property_id != b.property_id) return a.property_id < b.property_id;
    return a.subject_qid < b.subject_qid;
  }
};

struct Answer {
  std::string qid;
  std::string label;

  friend bool operator==(const Answer&, const Answer&) = default;
};

struct SnapshotQuery {
  QueryKey key;
  std::string bucket_id;
  std::string subject_label;
  std::vector<Answer> answers;  // deduplicated, ascending qid

  friend bool operator==(const SnapshotQuery&, const SnapshotQuery&) = default;
};

struct BucketSnapshot {
  std::string bucket_id;
  std::vector<SnapshotQuery> queries;  // QueryKeyOrder
};

// All buckets of the range are present, in chronological order, even if empty.
std::vector<BucketSnapshot> build_snapshot(const std::vector<FactRecord>& facts,
                                           const Date& range_start, const Date& range_end,
                                           Granularity g);

nlohmann::json answers_to_json(const std::vector<Answer>& answers);
std::vector<Answer> answers_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SnapshotQuery& q);
SnapshotQuery snapshot_query_from_json(const nlohmann::json& j);

// One <bucket_id>.jsonl per bucket.
void write_snapshots(const std::filesystem::path& dir, const std::vector<BucketSnapshot>& snaps);
std::vector<BucketSnapshot> read_snapshots(const std::filesystem::path& dir);

}  // namespace driftbench
