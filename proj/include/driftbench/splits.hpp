#pragma once

// Fine-grained split assignment between adjacent bucket snapshots.

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "driftbench/snapshot.hpp"

namespace driftbench {

enum class SplitLabel { kUnchanged, kUpdated, kNew, kDeleted };

inline constexpr std::array<SplitLabel, 4> kAllSplitLabels = {
    SplitLabel::kUnchanged, SplitLabel::kUpdated, SplitLabel::kNew, SplitLabel::kDeleted};

std::string_view split_name(SplitLabel l);
SplitLabel parse_split(std::string_view s);

struct SplitAssignment {
  QueryKey key;
  std::string bucket_before;
  std::string bucket_after;
  SplitLabel label = SplitLabel::kUnchanged;
  std::string subject_label;
  std::vector<Answer> answers_before;
  std::vector<Answer> answers_after;

  // Object-level detail for updated keys.
  std::vector<std::string> added_qids() const;
  std::vector<std::string> removed_qids() const;

  // Answers to evaluate against: answers_before for deleted keys, else answers_after.
  const std::vector<Answer>& gold() const {
    return label == SplitLabel::kDeleted ? answers_before : answers_after;
  }
};

// Pure label rule on two answer lists (compared by qid set).
SplitLabel classify(const std::vector<Answer>& before, const std::vector<Answer>& after);

// Throws ConfigError if the buckets are not adjacent.
std::vector<SplitAssignment> diff_buckets(const BucketSnapshot& before,
                                          const BucketSnapshot& after);

struct SplitCounts {
  std::array<std::size_t, 4> by_label{};
  std::size_t total() const { return by_label[0] + by_label[1] + by_label[2] + by_label[3]; }
  std::size_t operator[](SplitLabel l) const { return by_label[static_cast<std::size_t>(l)]; }
};

struct BucketSplits {
  std::string bucket_id;
  std::vector<SplitAssignment> assignments;  // QueryKeyOrder
  SplitCounts counts;
};

// Bucket i >= 1 receives the diff i-1 -> i; the first bucket receives none.
// Throws ConfigError with fewer than two snapshots.
std::vector<BucketSplits> assign_splits(const std::vector<BucketSnapshot>& snapshots);

nlohmann::json to_json(const SplitAssignment& a);
SplitAssignment split_assignment_from_json(const nlohmann::json& j);

// <bucket_id>.jsonl per bucket plus split_counts.csv.
void write_splits(const std::filesystem::path& dir, const std::vector<BucketSplits>& splits);
std::vector<BucketSplits> read_splits(const std::filesystem::path& dir);
std::string split_counts_csv(std::span<const BucketSplits> splits);

}  // namespace driftbench
