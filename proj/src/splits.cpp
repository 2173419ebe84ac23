#include "driftbench/splits.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "driftbench/errors.hpp"
#include "driftbench/io.hpp"

namespace driftbench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::set<std::string> qid_set(const std::vector<Answer>& answers) {
  std::set<std::string> s;
  for (const auto& a : answers) s.insert(a.qid);
  return s;
}

}  // namespace

std::string_view split_name(SplitLabel l) {
  switch (l) {
    case SplitLabel::kUnchanged: return "unchanged";
    case SplitLabel::kUpdated: return "updated";
    case SplitLabel::kNew: return "new";
    case SplitLabel::kDeleted: return "deleted";
  }
  return "?";
}

SplitLabel parse_split(std::string_view s) {
  for (auto l : kAllSplitLabels) {
    if (split_name(l) == s) return l;
  }
  throw std::invalid_argument("unknown split label '" + std::string(s) + "'");
}

std::vector<std::string> SplitAssignment::added_qids() const {
  auto before = qid_set(answers_before);
  std::vector<std::string> out;
  for (const auto& a : answers_after) {
    if (!before.count(a.qid)) out.push_back(a.qid);
  }
  return out;
}

std::vector<std::string> SplitAssignment::removed_qids() const {
  auto after = qid_set(answers_after);
  std::vector<std::string> out;
  for (const auto& a : answers_before) {
    if (!after.count(a.qid)) out.push_back(a.qid);
  }
  return out;
}

SplitLabel classify(const std::vector<Answer>& before, const std::vector<Answer>& after) {
  if (before.empty() && after.empty()) {
    throw std::invalid_argument("key absent from both buckets has no split");
  }
  if (before.empty()) return SplitLabel::kNew;
  if (after.empty()) return SplitLabel::kDeleted;
  return qid_set(before) == qid_set(after) ? SplitLabel::kUnchanged : SplitLabel::kUpdated;
}

std::vector<SplitAssignment> diff_buckets(const BucketSnapshot& before, const BucketSnapshot& after) {
  TimeBucket b0, b1;
  try {
    b0 = TimeBucket::parse(before.bucket_id);
    b1 = TimeBucket::parse(after.bucket_id);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (b0.next() != b1) {
    throw ConfigError("buckets " + before.bucket_id + " and " + after.bucket_id +
                      " are not adjacent");
  }

  std::map<QueryKey, SplitAssignment, QueryKeyOrder> merged;
  for (const auto& q : before.queries) {
    auto& a = merged[q.key];
    a.key = q.key;
    a.subject_label = q.subject_label;
    a.answers_before = q.answers;
  }
  for (const auto& q : after.queries) {
    auto& a = merged[q.key];
    a.key = q.key;
    a.subject_label = q.subject_label;
    a.answers_after = q.answers;
  }
  std::vector<SplitAssignment> out;
  out.reserve(merged.size());
  for (auto& [key, a] : merged) {
    a.bucket_before = before.bucket_id;
    a.bucket_after = after.bucket_id;
    a.label = classify(a.answers_before, a.answers_after);
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<BucketSplits> assign_splits(const std::vector<BucketSnapshot>& snapshots) {
  if (snapshots.size() < 2) {
    throw ConfigError("split assignment needs at least two bucket snapshots, got " +
                      std::to_string(snapshots.size()));
  }
  std::vector<BucketSplits> out;
  out.push_back({snapshots[0].bucket_id, {}, {}});
  for (std::size_t i = 1; i < snapshots.size(); ++i) {
    BucketSplits bs{snapshots[i].bucket_id, diff_buckets(snapshots[i - 1], snapshots[i]), {}};
    for (const auto& a : bs.assignments) ++bs.counts.by_label[static_cast<std::size_t>(a.label)];
    out.push_back(std::move(bs));
  }
  return out;
}

json to_json(const SplitAssignment& a) {
  json j = {{"bucket", a.bucket_after},
            {"bucket_before", a.bucket_before},
            {"subject_qid", a.key.subject_qid},
            {"subject_label", a.subject_label},
            {"property", a.key.property_id},
            {"answers", answers_to_json(a.answers_after)},
            {"answers_before", answers_to_json(a.answers_before)},
            {"split", std::string(split_name(a.label))}};
  if (a.label == SplitLabel::kUpdated) {
    j["changes"] = {{"added", a.added_qids()}, {"removed", a.removed_qids()}};
  }
  return j;
}

SplitAssignment split_assignment_from_json(const json& j) {
  SplitAssignment a;
  a.bucket_after = j.at("bucket").get<std::string>();
  a.bucket_before = j.value("bucket_before", "");
  a.key = {j.at("subject_qid").get<std::string>(), j.at("property").get<std::string>()};
  a.subject_label = j.at("subject_label").get<std::string>();
  a.answers_after = answers_from_json(j.at("answers"));
  a.answers_before = answers_from_json(j.at("answers_before"));
  a.label = parse_split(j.at("split").get<std::string>());
  return a;
}

std::string split_counts_csv(std::span<const BucketSplits> splits) {
  std::ostringstream out;
  out << "bucket,unchanged,updated,new,deleted,total\n";
  for (const auto& s : splits) {
    out << s.bucket_id << ',' << s.counts[SplitLabel::kUnchanged] << ','
        << s.counts[SplitLabel::kUpdated] << ',' << s.counts[SplitLabel::kNew] << ','
        << s.counts[SplitLabel::kDeleted] << ',' << s.counts.total() << '\n';
  }
  return out.str();
}

void write_splits(const fs::path& dir, const std::vector<BucketSplits>& splits) {
  fs::create_directories(dir);
  for (std::size_t i = 1; i < splits.size(); ++i) {
    std::vector<json> rows;
    for (const auto& a : splits[i].assignments) rows.push_back(to_json(a));
    write_jsonl(dir / (splits[i].bucket_id + ".jsonl"), rows);
  }
  std::span<const BucketSplits> labelled(splits);
  write_file_atomic(dir / "split_counts.csv", split_counts_csv(labelled.subspan(splits.empty() ? 0 : 1)));
}

std::vector<BucketSplits> read_splits(const fs::path& dir) {
  std::vector<BucketSplits> out;
  for (const auto& p : list_files(dir, ".jsonl")) {
    auto id = p.stem().string();
    if (!is_bucket_id(id)) continue;
    BucketSplits bs{id, {}, {}};
    for (const auto& row : read_jsonl(p)) {
      bs.assignments.push_back(split_assignment_from_json(row));
      ++bs.counts.by_label[static_cast<std::size_t>(bs.assignments.back().label)];
    }
    out.push_back(std::move(bs));
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return bucket_id_less(a.bucket_id, b.bucket_id); });
  return out;
}

}  // namespace driftbench
