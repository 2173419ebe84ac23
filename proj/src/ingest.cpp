#include "driftbench/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <future>
#include <set>
#include <sstream>
#include <unordered_set>

#include <boost/iostreams/filter/bzip2.hpp>
#include <boost/iostreams/filter/gzip.hpp>
#include <boost/iostreams/filtering_stream.hpp>
#include <boost/tokenizer.hpp>
#include <json.hpp>

#include "driftbench/errors.hpp"
#include "driftbench/io.hpp"

namespace driftbench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kStartTime = "P580";
constexpr std::string_view kEndTime = "P582";
constexpr std::size_t kBatchLines = 2048;

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

std::string_view trim_view(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

enum class LineKind { kEntity, kSkip, kMalformed };

// Only properties in `wanted` are kept when it is non-null.
LineKind parse_line(std::string_view raw, const std::unordered_set<std::string>* wanted,
                    EntityRecord& out) {
  auto line = trim_view(raw);
  if (!line.empty() && line.back() == ',') line = trim_view(line.substr(0, line.size() - 1));
  if (line.empty() || line == "[" || line == "]") return LineKind::kSkip;

  json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) return LineKind::kMalformed;
  auto id = j.find("id");
  if (id == j.end() || !id->is_string()) return LineKind::kMalformed;

  try {
    out = EntityRecord{};
    out.qid = id->get<std::string>();
    if (auto labels = j.find("labels"); labels != j.end() && labels->is_object()) {
      if (auto en = labels->find("en"); en != labels->end()) {
        out.label = en->value("value", "");
      }
    }
    if (auto links = j.find("sitelinks"); links != j.end() && links->is_object()) {
      out.has_sitelink = links->contains("enwiki");
    }
    auto claims = j.find("claims");
    if (claims == j.end() || !claims->is_object()) return LineKind::kEntity;
    for (auto& [prop, statements] : claims->items()) {
      if (wanted && !wanted->count(prop)) continue;
      if (!statements.is_array()) continue;
      for (const auto& st : statements) {
        RawClaim c;
        c.property_id = prop;
        auto rank = st.value("rank", "normal");
        c.rank = rank == "preferred"    ? StatementRank::kPreferred
                 : rank == "deprecated" ? StatementRank::kDeprecated
                                        : StatementRank::kNormal;
        if (auto ms = st.find("mainsnak"); ms != st.end() && ms->value("snaktype", "") == "value") {
          const auto& dv = (*ms)["datavalue"];
          if (dv.value("type", "") == "wikibase-entityid") {
            const auto& v = dv["value"];
            if (v.value("entity-type", "item") == "item") {
              if (v.contains("id")) {
                c.object_qid = v["id"].get<std::string>();
              } else if (v.contains("numeric-id")) {
                c.object_qid = "Q" + std::to_string(v["numeric-id"].get<long long>());
              }
            }
          }
        }
        if (auto qs = st.find("qualifiers"); qs != st.end() && qs->is_object()) {
          auto collect = [&](std::string_view pid, std::vector<RawTime>& dst) {
            auto it = qs->find(std::string(pid));
            if (it == qs->end() || !it->is_array()) return;
            for (const auto& q : *it) {
              if (q.value("snaktype", "") != "value") continue;
              const auto& dv = q["datavalue"];
              if (dv.value("type", "") != "time") continue;
              const auto& v = dv["value"];
              dst.push_back({v.value("time", ""), v.value("precision", 11)});
            }
          };
          collect(kStartTime, c.start_times);
          collect(kEndTime, c.end_times);
        }
        out.statements.push_back(std::move(c));
      }
    }
  } catch (const json::exception&) {
    return LineKind::kMalformed;
  }
  return LineKind::kEntity;
}

DumpStats stream_lines(std::istream& in, const std::unordered_set<std::string>* wanted,
                       const std::function<void(EntityRecord&&)>& on_entity, unsigned threads) {
  DumpStats stats;
  threads = std::max(1u, threads);
  std::vector<std::string> batch;
  std::vector<EntityRecord> records;
  std::vector<LineKind> kinds;

  auto flush = [&] {
    records.assign(batch.size(), EntityRecord{});
    kinds.assign(batch.size(), LineKind::kSkip);
    auto work = [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) kinds[i] = parse_line(batch[i], wanted, records[i]);
    };
    if (threads == 1 || batch.size() < 64) {
      work(0, batch.size());
    } else {
      std::vector<std::future<void>> jobs;
      std::size_t chunk = (batch.size() + threads - 1) / threads;
      for (std::size_t lo = 0; lo < batch.size(); lo += chunk) {
        jobs.push_back(std::async(std::launch::async, work, lo, std::min(batch.size(), lo + chunk)));
      }
      for (auto& j : jobs) j.get();
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (kinds[i] == LineKind::kMalformed) {
        ++stats.malformed;
      } else if (kinds[i] == LineKind::kEntity) {
        ++stats.entities;
        on_entity(std::move(records[i]));
      }
    }
    batch.clear();
  };

  std::string line;
  while (true) {
    try {
      if (!std::getline(in, line)) break;
    } catch (const std::exception& e) {
      throw IngestError(std::string("dump stream corrupt: ") + e.what(), stats.bytes);
    }
    ++stats.lines;
    stats.bytes += line.size() + 1;
    batch.push_back(std::move(line));
    if (batch.size() >= kBatchLines) flush();
  }
  if (in.bad()) throw IngestError("dump stream read failure", stats.bytes);
  flush();
  return stats;
}

DumpStats stream_file(const fs::path& path, const std::unordered_set<std::string>* wanted,
                      const std::function<void(EntityRecord&&)>& on_entity, unsigned threads) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IngestError("cannot open dump " + path.string(), 0);
  char magic[3] = {0, 0, 0};
  file.read(magic, 3);
  file.clear();
  file.seekg(0);

  namespace io = boost::iostreams;
  io::filtering_istream in;
  if (static_cast<unsigned char>(magic[0]) == 0x1f && static_cast<unsigned char>(magic[1]) == 0x8b) {
    in.push(io::gzip_decompressor());
  } else if (magic[0] == 'B' && magic[1] == 'Z' && magic[2] == 'h') {
    in.push(io::bzip2_decompressor());
  }
  in.push(file);
  return stream_lines(in, wanted, on_entity, threads);
}

std::unordered_set<std::string> property_set(const std::vector<RelationConfig>& relations) {
  std::unordered_set<std::string> s;
  for (const auto& r : relations) s.insert(r.property_id);
  return s;
}

std::string sanitize_field(std::string s) {
  for (char& c : s) {
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace

bool is_property_id(std::string_view s) {
  return s.size() >= 2 && s[0] == 'P' &&
         std::all_of(s.begin() + 1, s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

bool is_item_id(std::string_view s) {
  return s.size() >= 2 && s[0] == 'Q' &&
         std::all_of(s.begin() + 1, s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

void RelationConfig::validate() const {
  if (!is_property_id(property_id)) {
    throw ConfigError("relation id '" + property_id + "' is not a Wikidata property id");
  }
  if (count_occurrences(template_text, kSubjectPlaceholder) != 1 ||
      count_occurrences(template_text, kObjectPlaceholder) != 1) {
    throw ConfigError("template for " + property_id +
                      " must contain exactly one <subject> and one <object>: '" + template_text +
                      "'");
  }
  if (max_subjects == 0) throw ConfigError("max_subjects must be positive for " + property_id);
}

std::vector<RelationConfig> load_relations(const fs::path& csv, std::size_t max_subjects) {
  std::ifstream in(csv);
  if (!in) throw ConfigError("cannot open relations file " + csv.string());
  std::vector<RelationConfig> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t n = 0;
  using Tok = boost::tokenizer<boost::escaped_list_separator<char>>;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim_view(line).empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    try {
      Tok tok(line, boost::escaped_list_separator<char>('\\', ',', '"'));
      fields.assign(tok.begin(), tok.end());
    } catch (const boost::escaped_list_error& e) {
      throw ConfigError(csv.string() + ":" + std::to_string(n) + ": " + e.what());
    }
    if (fields.size() != 3) {
      throw ConfigError(csv.string() + ":" + std::to_string(n) + ": expected 3 fields, got " +
                        std::to_string(fields.size()));
    }
    if (n == 1 && fields[0] == "property_id") continue;
    RelationConfig r{std::string(trim_view(fields[0])), std::string(trim_view(fields[1])),
                     std::string(trim_view(fields[2])), max_subjects};
    r.validate();
    if (!seen.insert(r.property_id).second) {
      throw ConfigError("duplicate relation " + r.property_id + " in " + csv.string());
    }
    out.push_back(std::move(r));
  }
  if (out.empty()) throw ConfigError("no relations in " + csv.string());
  return out;
}

std::optional<Date> resolve_wikidata_time(const RawTime& t) {
  if (t.precision < 9) return std::nullopt;
  std::string_view s = t.time;
  if (s.empty()) return std::nullopt;
  bool negative = false;
  if (s[0] == '+' || s[0] == '-') {
    negative = s[0] == '-';
    s.remove_prefix(1);
  }
  auto dash1 = s.find('-');
  if (dash1 == std::string_view::npos || s.size() < dash1 + 6) return std::nullopt;
  long long year = 0;
  unsigned month = 0, day = 0;
  auto num = [](std::string_view part, auto& out) {
    auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
    return ec == std::errc() && p == part.data() + part.size();
  };
  if (!num(s.substr(0, dash1), year) || !num(s.substr(dash1 + 1, 2), month) ||
      !num(s.substr(dash1 + 4, 2), day)) {
    return std::nullopt;
  }
  if (negative) year = -year;
  if (year < -9999 || year > 9999) return std::nullopt;
  if (t.precision == 9 || month == 0) month = 1;
  if (t.precision <= 10 || day == 0) day = 1;
  try {
    return Date(static_cast<int>(year), month, day);
  } catch (const std::invalid_argument&) {
    return std::nullopt;
  }
}

std::optional<EntityRecord> parse_entity_line(std::string_view line) {
  EntityRecord e;
  if (parse_line(line, nullptr, e) != LineKind::kEntity) return std::nullopt;
  return e;
}

DumpStats parse_dump_stream(std::istream& in, const std::function<void(EntityRecord&&)>& on_entity,
                            unsigned threads) {
  return stream_lines(in, nullptr, on_entity, threads);
}

DumpStats parse_dump_file(const fs::path& path, const std::function<void(EntityRecord&&)>& on_entity,
                          unsigned threads) {
  return stream_file(path, nullptr, on_entity, threads);
}

bool fact_less(const FactRecord& a, const FactRecord& b) {
  if (a.property_id != b.property_id) return a.property_id < b.property_id;
  if (a.subject_qid != b.subject_qid) return a.subject_qid < b.subject_qid;
  if (a.object_qid != b.object_qid) return a.object_qid < b.object_qid;
  // Absent start (unbounded past) sorts first.
  if (a.interval.start != b.interval.start) return a.interval.start < b.interval.start;
  return a.interval.end < b.interval.end;
}

std::string_view exclusion_name(Exclusion e) {
  switch (e) {
    case Exclusion::kDeprecatedRank: return "deprecated_rank";
    case Exclusion::kNoObjectEntity: return "no_object_entity";
    case Exclusion::kNoTemporalQualifier: return "no_temporal_qualifier";
    case Exclusion::kInvalidInterval: return "invalid_interval";
    case Exclusion::kBeforeCutoff: return "before_cutoff";
    case Exclusion::kSubjectNoSitelink: return "subject_no_sitelink";
    case Exclusion::kSubjectNoLabel: return "subject_no_label";
    case Exclusion::kObjectNoSitelink: return "object_no_sitelink";
    case Exclusion::kCount: break;
  }
  return "?";
}

std::uint64_t ExclusionTally::excluded() const {
  std::uint64_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

void ExclusionTally::merge(const ExclusionTally& o) {
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
  emitted += o.emitted;
  encountered += o.encountered;
}

void EntityIndex::add(const EntityRecord& e) {
  if (e.has_sitelink && !e.label.empty()) labels_[e.qid] = e.label;
}

const std::string* EntityIndex::label(std::string_view qid) const {
  auto it = labels_.find(std::string(qid));
  return it == labels_.end() ? nullptr : &it->second;
}

std::vector<CandidateFact> extract_candidates(const EntityRecord& entity,
                                              const std::vector<RelationConfig>& relations,
                                              ExclusionTally& tally) {
  std::vector<CandidateFact> out;
  for (const auto& claim : entity.statements) {
    bool configured = std::any_of(relations.begin(), relations.end(), [&](const auto& r) {
      return r.property_id == claim.property_id;
    });
    if (!configured) continue;
    ++tally.encountered;

    if (claim.rank == StatementRank::kDeprecated) {
      tally.add(Exclusion::kDeprecatedRank);
      continue;
    }
    if (claim.object_qid.empty()) {
      tally.add(Exclusion::kNoObjectEntity);
      continue;
    }
    // Several qualifiers of one kind: earliest start, latest end.
    TimeInterval iv;
    for (const auto& t : claim.start_times) {
      if (auto d = resolve_wikidata_time(t); d && (!iv.start || *d < *iv.start)) iv.start = d;
    }
    for (const auto& t : claim.end_times) {
      if (auto d = resolve_wikidata_time(t); d && (!iv.end || *d > *iv.end)) iv.end = d;
    }
    if (!iv.start && !iv.end) {
      tally.add(Exclusion::kNoTemporalQualifier);
      continue;
    }
    if (!iv.valid()) {
      tally.add(Exclusion::kInvalidInterval);
      continue;
    }
    bool recent = (iv.start && *iv.start > kTemporalCutoff) || (iv.end && *iv.end > kTemporalCutoff);
    if (!recent) {
      tally.add(Exclusion::kBeforeCutoff);
      continue;
    }
    if (!entity.has_sitelink) {
      tally.add(Exclusion::kSubjectNoSitelink);
      continue;
    }
    if (entity.label.empty()) {
      tally.add(Exclusion::kSubjectNoLabel);
      continue;
    }
    out.push_back({entity.qid, entity.label, claim.property_id, claim.object_qid, iv});
  }
  return out;
}

std::vector<FactRecord> resolve_objects(std::vector<CandidateFact> candidates,
                                        const EntityIndex& objects, ExclusionTally& tally) {
  std::vector<FactRecord> out;
  out.reserve(candidates.size());
  for (auto& c : candidates) {
    const std::string* label = objects.label(c.object_qid);
    if (!label) {
      tally.add(Exclusion::kObjectNoSitelink);
      continue;
    }
    ++tally.emitted;
    out.push_back({std::move(c.subject_qid), std::move(c.subject_label), std::move(c.property_id),
                   std::move(c.object_qid), *label, c.interval});
  }
  return out;
}

std::vector<FactRecord> extract_temporal_statements(const EntityRecord& entity,
                                                    const std::vector<RelationConfig>& relations,
                                                    const EntityIndex& objects,
                                                    ExclusionTally& tally) {
  return resolve_objects(extract_candidates(entity, relations, tally), objects, tally);
}

std::vector<FactRecord> select_top_subjects(std::vector<FactRecord> facts,
                                            const std::vector<RelationConfig>& relations) {
  std::map<std::string, std::map<std::string, std::size_t>> counts;
  for (const auto& f : facts) ++counts[f.property_id][f.subject_qid];

  std::map<std::string, std::set<std::string>> keep;
  for (const auto& r : relations) {
    auto it = counts.find(r.property_id);
    if (it == counts.end()) continue;
    std::vector<std::pair<std::string, std::size_t>> ranked(it->second.begin(), it->second.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    if (ranked.size() > r.max_subjects) ranked.resize(r.max_subjects);
    auto& k = keep[r.property_id];
    for (auto& [qid, _] : ranked) k.insert(qid);
  }

  std::vector<FactRecord> out;
  for (auto& f : facts) {
    auto it = keep.find(f.property_id);
    if (it != keep.end() && it->second.count(f.subject_qid)) out.push_back(std::move(f));
  }
  std::sort(out.begin(), out.end(), fact_less);
  return out;
}

IngestResult ingest_dump(std::istream& in, const std::vector<RelationConfig>& relations,
                         unsigned threads) {
  IngestResult result;
  EntityIndex index;
  std::vector<CandidateFact> candidates;
  auto wanted = property_set(relations);
  result.dump = stream_lines(
      in, &wanted,
      [&](EntityRecord&& e) {
        index.add(e);
        auto c = extract_candidates(e, relations, result.tally);
        std::move(c.begin(), c.end(), std::back_inserter(candidates));
      },
      threads);
  auto facts = resolve_objects(std::move(candidates), index, result.tally);
  result.facts_before_cap = facts.size();
  result.facts = select_top_subjects(std::move(facts), relations);
  return result;
}

IngestResult ingest_dump_file(const fs::path& path, const std::vector<RelationConfig>& relations,
                              unsigned threads) {
  IngestResult result;
  EntityIndex index;
  std::vector<CandidateFact> candidates;
  auto wanted = property_set(relations);
  result.dump = stream_file(
      path, &wanted,
      [&](EntityRecord&& e) {
        index.add(e);
        auto c = extract_candidates(e, relations, result.tally);
        std::move(c.begin(), c.end(), std::back_inserter(candidates));
      },
      threads);
  auto facts = resolve_objects(std::move(candidates), index, result.tally);
  result.facts_before_cap = facts.size();
  result.facts = select_top_subjects(std::move(facts), relations);
  return result;
}

std::string facts_to_tsv(const std::vector<FactRecord>& facts) {
  std::string out = "subject_qid\tproperty_id\tobject_qid\tstart\tend\tsubject_label\tobject_label\n";
  for (const auto& f : facts) {
    out += f.subject_qid + '\t' + f.property_id + '\t' + f.object_qid + '\t' +
           to_field(f.interval.start) + '\t' + to_field(f.interval.end) + '\t' +
           sanitize_field(f.subject_label) + '\t' + sanitize_field(f.object_label) + '\n';
  }
  return out;
}

void write_facts_tsv(const fs::path& path, const std::vector<FactRecord>& facts) {
  write_file_atomic(path, facts_to_tsv(facts));
}

std::vector<FactRecord> read_facts_tsv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open fact file " + path.string());
  std::vector<FactRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (n == 1 && line.rfind("subject_qid\t", 0) == 0)) continue;
    auto f = split(line, '\t');
    if (f.size() != 7) throw LoadError(path.string() + ": expected 7 columns", n);
    FactRecord r{f[0], f[5], f[1], f[2], f[6], {}};
    try {
      if (!f[3].empty()) r.interval.start = Date::parse(f[3]);
      if (!f[4].empty()) r.interval.end = Date::parse(f[4]);
    } catch (const std::invalid_argument& e) {
      throw LoadError(path.string() + ": " + e.what(), n);
    }
    if (!r.interval.valid()) throw LoadError(path.string() + ": invalid interval", n);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace driftbench
