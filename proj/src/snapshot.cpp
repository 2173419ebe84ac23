#include "driftbench/snapshot.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <stdexcept>

#include "driftbench/errors.hpp"
#include "driftbench/io.hpp"

namespace driftbench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Date last_day_of_month(int y, unsigned m) {
  using namespace std::chrono;
  year_month_day_last ymdl{year{y}, month_day_last{month{m}}};
  return Date(sys_days{ymdl});
}

bool parse_uint(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

std::string pad(int v, int width) {
  std::string s = std::to_string(v);
  return std::string(std::max(0, width - static_cast<int>(s.size())), '0') + s;
}

}  // namespace

Granularity parse_granularity(std::string_view s) {
  if (s == "month") return Granularity::kMonth;
  if (s == "quarter") return Granularity::kQuarter;
  if (s == "year") return Granularity::kYear;
  throw ConfigError("unknown granularity '" + std::string(s) + "' (month|quarter|year)");
}

std::string_view granularity_name(Granularity g) {
  switch (g) {
    case Granularity::kMonth: return "month";
    case Granularity::kQuarter: return "quarter";
    case Granularity::kYear: return "year";
  }
  return "?";
}

TimeBucket TimeBucket::containing(const Date& d, Granularity g) {
  int y = d.year();
  switch (g) {
    case Granularity::kYear:
      return {pad(y, 4), Date(y, 1, 1), Date(y, 12, 31)};
    case Granularity::kQuarter: {
      unsigned q = (d.month() - 1) / 3 + 1;
      return {pad(y, 4) + "-Q" + std::to_string(q), Date(y, 3 * q - 2, 1),
              last_day_of_month(y, 3 * q)};
    }
    case Granularity::kMonth:
      return {pad(y, 4) + "-" + pad(static_cast<int>(d.month()), 2), Date(y, d.month(), 1),
              last_day_of_month(y, d.month())};
  }
  throw std::logic_error("unreachable granularity");
}

TimeBucket TimeBucket::parse(std::string_view id) {
  int y = 0;
  auto fail = [&]() -> TimeBucket {
    throw std::invalid_argument("not a bucket id: '" + std::string(id) + "'");
  };
  if (id.size() < 4 || !parse_uint(id.substr(0, 4), y)) return fail();
  if (id.size() == 4) return containing(Date(y, 1, 1), Granularity::kYear);
  if (id.size() == 7 && id[4] == '-' && id[5] == 'Q') {
    int q = id[6] - '0';
    if (q < 1 || q > 4) return fail();
    return containing(Date(y, static_cast<unsigned>(3 * q - 2), 1), Granularity::kQuarter);
  }
  if (id.size() == 7 && id[4] == '-') {
    int m = 0;
    if (!parse_uint(id.substr(5, 2), m) || m < 1 || m > 12) return fail();
    return containing(Date(y, static_cast<unsigned>(m), 1), Granularity::kMonth);
  }
  return fail();
}

Granularity TimeBucket::granularity() const {
  if (bucket_id.size() == 4) return Granularity::kYear;
  if (bucket_id[5] == 'Q') return Granularity::kQuarter;
  return Granularity::kMonth;
}

TimeBucket TimeBucket::next() const { return containing(end.plus_days(1), granularity()); }
TimeBucket TimeBucket::prev() const { return containing(start.plus_days(-1), granularity()); }

bool is_bucket_id(std::string_view s) {
  try {
    return TimeBucket::parse(s).bucket_id == s;
  } catch (const std::invalid_argument&) {
    return false;
  }
}

bool bucket_id_less(std::string_view a, std::string_view b) {
  bool ba = is_bucket_id(a), bb = is_bucket_id(b);
  if (ba != bb) return ba;  // bucket ids first
  if (!ba) return a < b;
  auto x = TimeBucket::parse(a), y = TimeBucket::parse(b);
  if (x.start != y.start) return x.start < y.start;
  return x.end < y.end;
}

std::vector<TimeBucket> buckets_in_range(const Date& from, const Date& to, Granularity g) {
  if (to < from) throw ConfigError("range end " + to.iso() + " precedes start " + from.iso());
  std::vector<TimeBucket> out;
  for (auto b = TimeBucket::containing(from, g); b.start <= to; b = b.next()) out.push_back(b);
  return out;
}

std::vector<std::string> bucketize(const TimeInterval& interval, const Date& from, const Date& to,
                                   Granularity g) {
  std::vector<std::string> out;
  for (const auto& b : buckets_in_range(from, to, g)) {
    if (interval.overlaps(b.start, b.end)) out.push_back(b.bucket_id);
  }
  return out;
}

std::vector<BucketSnapshot> build_snapshot(const std::vector<FactRecord>& facts, const Date& from,
                                           const Date& to, Granularity g) {
  auto buckets = buckets_in_range(from, to, g);
  struct Acc {
    std::string subject_label;
    std::map<std::string, std::string> answers;  // qid -> label
  };
  std::vector<std::map<QueryKey, Acc, QueryKeyOrder>> per_bucket(buckets.size());

  for (const auto& f : facts) {
    for (std::size_t i = 0; i < buckets.size(); ++i) {
      if (!f.interval.overlaps(buckets[i].start, buckets[i].end)) continue;
      auto& acc = per_bucket[i][QueryKey{f.subject_qid, f.property_id}];
      // Smallest label wins so the result does not depend on arrival order.
      if (acc.subject_label.empty() || f.subject_label < acc.subject_label) {
        acc.subject_label = f.subject_label;
      }
      auto [it, inserted] = acc.answers.emplace(f.object_qid, f.object_label);
      if (!inserted && f.object_label < it->second) it->second = f.object_label;
    }
  }

  std::vector<BucketSnapshot> out;
  out.reserve(buckets.size());
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    BucketSnapshot snap{buckets[i].bucket_id, {}};
    for (auto& [key, acc] : per_bucket[i]) {
      SnapshotQuery q{key, buckets[i].bucket_id, acc.subject_label, {}};
      for (auto& [qid, label] : acc.answers) q.answers.push_back({qid, label});
      snap.queries.push_back(std::move(q));
    }
    out.push_back(std::move(snap));
  }
  return out;
}

json answers_to_json(const std::vector<Answer>& answers) {
  json arr = json::array();
  for (const auto& a : answers) arr.push_back({{"qid", a.qid}, {"label", a.label}});
  return arr;
}

std::vector<Answer> answers_from_json(const json& j) {
  std::vector<Answer> out;
  for (const auto& a : j) out.push_back({a.at("qid").get<std::string>(), a.at("label").get<std::string>()});
  return out;
}

json to_json(const SnapshotQuery& q) {
  return {{"bucket", q.bucket_id},
          {"subject_qid", q.key.subject_qid},
          {"subject_label", q.subject_label},
          {"property", q.key.property_id},
          {"answers", answers_to_json(q.answers)}};
}

SnapshotQuery snapshot_query_from_json(const json& j) {
  SnapshotQuery q;
  q.bucket_id = j.at("bucket").get<std::string>();
  q.key = {j.at("subject_qid").get<std::string>(), j.at("property").get<std::string>()};
  q.subject_label = j.at("subject_label").get<std::string>();
  q.answers = answers_from_json(j.at("answers"));
  return q;
}

void write_snapshots(const fs::path& dir, const std::vector<BucketSnapshot>& snaps) {
  fs::create_directories(dir);
  for (const auto& s : snaps) {
    std::vector<json> rows;
    rows.reserve(s.queries.size());
    for (const auto& q : s.queries) rows.push_back(to_json(q));
    write_jsonl(dir / (s.bucket_id + ".jsonl"), rows);
  }
}

std::vector<BucketSnapshot> read_snapshots(const fs::path& dir) {
  std::vector<BucketSnapshot> out;
  for (const auto& p : list_files(dir, ".jsonl")) {
    auto id = p.stem().string();
    if (!is_bucket_id(id)) continue;
    BucketSnapshot s{id, {}};
    for (const auto& row : read_jsonl(p)) s.queries.push_back(snapshot_query_from_json(row));
    std::sort(s.queries.begin(), s.queries.end(),
              [](const auto& a, const auto& b) { return QueryKeyOrder{}(a.key, b.key); });
    out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return bucket_id_less(a.bucket_id, b.bucket_id); });
  return out;
}

}  // namespace driftbench
