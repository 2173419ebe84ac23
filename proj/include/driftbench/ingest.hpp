#pragma once

// Wikidata entity-dump ingestion: streaming parse, temporal statement
// extraction, top-subject selection and the intermediate fact TSV.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "driftbench/date.hpp"

namespace driftbench {

inline constexpr std::string_view kSubjectPlaceholder = "<subject>";
inline constexpr std::string_view kObjectPlaceholder = "<object>";
inline constexpr std::size_t kDefaultMaxSubjects = 1000;

struct RelationConfig {
  std::string property_id;
  std::string relation_name;
  std::string template_text;
  std::size_t max_subjects = kDefaultMaxSubjects;

  // Throws ConfigError if the property id or template is malformed.
  void validate() const;
};

bool is_property_id(std::string_view s);
bool is_item_id(std::string_view s);

// Reads the templates CSV: property_id,relation_name,template_text (header row
// optional). Every relation gets the same subject cap.
std::vector<RelationConfig> load_relations(const std::filesystem::path& csv,
                                           std::size_t max_subjects = kDefaultMaxSubjects);

enum class StatementRank { kPreferred, kNormal, kDeprecated };

// Wikidata time value with its precision code (9 = year, 10 = month, 11 = day).
struct RawTime {
  std::string time;
  int precision = 11;
};

// Resolves a Wikidata timestamp to a day. Year and month precision snap to the
// first covered day; precision coarser than a year yields nullopt.
std::optional<Date> resolve_wikidata_time(const RawTime& t);

struct RawClaim {
  std::string property_id;
  StatementRank rank = StatementRank::kNormal;
  std::string object_qid;  // empty for somevalue/novalue or non-item values
  std::vector<RawTime> start_times;  // P580 qualifiers
  std::vector<RawTime> end_times;    // P582 qualifiers
};

struct EntityRecord {
  std::string qid;
  std::string label;  // English label, may be empty
  bool has_sitelink = false;  // English Wikipedia
  std::vector<RawClaim> statements;
};

// Parses one dump line (whitespace and a trailing comma tolerated). Returns
// nullopt for malformed lines and for the array brackets.
std::optional<EntityRecord> parse_entity_line(std::string_view line);

struct DumpStats {
  std::uint64_t lines = 0;
  std::uint64_t entities = 0;
  std::uint64_t malformed = 0;
  std::uint64_t bytes = 0;
};

// Streams entity records in input order. Lines are parsed on up to `threads`
// workers in fixed-size batches; the callback always runs on the calling
// thread, in input order.
DumpStats parse_dump_stream(std::istream& in,
                            const std::function<void(EntityRecord&&)>& on_entity,
                            unsigned threads = 1);

// Opens a dump file, transparently decompressing gzip or bzip2 (by magic bytes).
DumpStats parse_dump_file(const std::filesystem::path& path,
                          const std::function<void(EntityRecord&&)>& on_entity,
                          unsigned threads = 1);

struct FactRecord {
  std::string subject_qid;
  std::string subject_label;
  std::string property_id;
  std::string object_qid;
  std::string object_label;
  TimeInterval interval;

  friend bool operator==(const FactRecord&, const FactRecord&) = default;
};

// Merge order shared by every downstream stage.
bool fact_less(const FactRecord& a, const FactRecord& b);

enum class Exclusion : std::size_t {
  kDeprecatedRank,
  kNoObjectEntity,
  kNoTemporalQualifier,
  kInvalidInterval,
  kBeforeCutoff,
  kSubjectNoSitelink,
  kSubjectNoLabel,
  kObjectNoSitelink,
  kCount
};

std::string_view exclusion_name(Exclusion e);

struct ExclusionTally {
  std::array<std::uint64_t, static_cast<std::size_t>(Exclusion::kCount)> counts{};
  std::uint64_t emitted = 0;
  std::uint64_t encountered = 0;  // configured-relation claims seen

  void add(Exclusion e) { ++counts[static_cast<std::size_t>(e)]; }
  std::uint64_t get(Exclusion e) const { return counts[static_cast<std::size_t>(e)]; }
  std::uint64_t excluded() const;
  void merge(const ExclusionTally& other);
};

// Facts must have a bound strictly after this date.
inline const Date kTemporalCutoff{2010, 1, 1};

// Label lookup for object entities; only entities with an English sitelink
// and a non-empty label are admitted.
class EntityIndex {
 public:
  void add(const EntityRecord& e);
  const std::string* label(std::string_view qid) const;
  std::size_t size() const { return labels_.size(); }

 private:
  std::unordered_map<std::string, std::string> labels_;
};

// Subject-side pass: a claim that passed every check that does not need the
// object entity.
struct CandidateFact {
  std::string subject_qid;
  std::string subject_label;
  std::string property_id;
  std::string object_qid;
  TimeInterval interval;
};

std::vector<CandidateFact> extract_candidates(const EntityRecord& entity,
                                              const std::vector<RelationConfig>& relations,
                                              ExclusionTally& tally);

std::vector<FactRecord> resolve_objects(std::vector<CandidateFact> candidates,
                                        const EntityIndex& objects, ExclusionTally& tally);

// Both passes for a single entity whose objects are already indexed.
std::vector<FactRecord> extract_temporal_statements(const EntityRecord& entity,
                                                    const std::vector<RelationConfig>& relations,
                                                    const EntityIndex& objects,
                                                    ExclusionTally& tally);

// Keeps, per relation, the facts of the `max_subjects` subjects with the most
// facts (ties: lexicographic qid). Output is in fact_less order.
std::vector<FactRecord> select_top_subjects(std::vector<FactRecord> facts,
                                            const std::vector<RelationConfig>& relations);

struct IngestResult {
  std::vector<FactRecord> facts;  // fact_less order
  DumpStats dump;
  ExclusionTally tally;
  std::size_t facts_before_cap = 0;
};

// Single pass over the dump followed by object resolution and subject capping.
IngestResult ingest_dump(std::istream& in, const std::vector<RelationConfig>& relations,
                         unsigned threads = 1);
IngestResult ingest_dump_file(const std::filesystem::path& path,
                              const std::vector<RelationConfig>& relations, unsigned threads = 1);

// Fact TSV: header line, then subject_qid, property_id, object_qid, start, end,
// subject_label, object_label. Empty field for an absent bound.
std::string facts_to_tsv(const std::vector<FactRecord>& facts);
void write_facts_tsv(const std::filesystem::path& path, const std::vector<FactRecord>& facts);
std::vector<FactRecord> read_facts_tsv(const std::filesystem::path& path);

}  // namespace driftbench
