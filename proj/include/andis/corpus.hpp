#pragma once

// Document model, JSON-lines ingestion and assignment bookkeeping for one
// ambiguous author name.

#include "andis/common.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <istream>
#include <optional>
#include <sstream>
#include <unordered_map>

namespace andis {

struct Document {
  DocId doc_id;
  std::string name_ref;
  std::vector<std::string> coauthors;
  std::vector<std::string> title_tokens;
  std::vector<std::string> venue_tokens;
  std::vector<std::string> org_tokens;
  std::vector<std::string> keywords;
  std::optional<int> year;

  bool operator==(const Document&) const = default;
};

// The evolving partition of a name's documents: named groups plus the
// unassigned pool. `next_id` feeds deterministic ids for new groups.
struct Assignment {
  std::map<GroupId, DocSet> groups;
  DocSet unassigned;
  std::uint64_t next_id = 1;

  bool operator==(const Assignment&) const = default;

  std::size_t assigned_count() const {
    std::size_t n = 0;
    for (const auto& [_, g] : groups) n += g.size();
    return n;
  }

  // Group holding `doc`, or nullopt when the doc is unassigned or unknown.
  std::optional<GroupId> group_of(const DocId& doc) const {
    for (const auto& [id, g] : groups)
      if (g.count(doc)) return id;
    return std::nullopt;
  }

  DocSet all_docs() const {
    DocSet all = unassigned;
    for (const auto& [_, g] : groups) all.insert(g.begin(), g.end());
    return all;
  }
};

struct GroundTruth {
  std::map<DocId, std::string> identity;

  const std::string& person(const DocId& d) const {
    auto it = identity.find(d);
    if (it == identity.end()) throw Error("not_found", "document missing from ground truth: " + d);
    return it->second;
  }

  // Reference partition: one cluster per person, ordered by person id.
  std::vector<DocSet> partition() const {
    std::map<std::string, DocSet> by_person;
    for (const auto& [d, p] : identity) by_person[p].insert(d);
    std::vector<DocSet> out;
    for (auto& [_, s] : by_person) out.push_back(std::move(s));
    return out;
  }
};

struct Corpus {
  std::string name_ref;
  std::vector<Document> docs;
  Assignment assignment;
  std::optional<GroundTruth> truth;

  DocSet doc_ids() const {
    DocSet ids;
    for (const auto& d : docs) ids.insert(d.doc_id);
    return ids;
  }
};

// ---------------------------------------------------------------------------
// Normalization

namespace detail {

inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::vector<std::string> split_all(const std::vector<std::string>& parts) {
  std::vector<std::string> out;
  for (const auto& p : parts) {
    auto w = split_words(p);
    out.insert(out.end(), w.begin(), w.end());
  }
  return out;
}

// Phrase-level normalization: lowercase, periods and hyphens dropped, other
// punctuation becomes a space, runs of spaces collapse.
inline std::string normalize_phrase(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : text) {
    if (c == '.' || c == '-') continue;
    if (std::isalnum(c) || c >= 0x80) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    } else {
      pending_space = true;
    }
  }
  return out;
}

}  // namespace detail

inline std::string normalize_name(std::string_view name) { return detail::normalize_phrase(name); }

// Idempotent: word fields are re-split, phrase fields re-normalized, and the
// focal name is dropped from the coauthor list.
inline Document normalize_document(const Document& raw) {
  Document d = raw;
  d.title_tokens = detail::split_all(raw.title_tokens);
  d.venue_tokens = detail::split_all(raw.venue_tokens);
  d.org_tokens = detail::split_all(raw.org_tokens);

  const std::string focal = normalize_name(raw.name_ref);
  d.coauthors.clear();
  for (const auto& c : raw.coauthors) {
    auto n = normalize_name(c);
    if (!n.empty() && n != focal) d.coauthors.push_back(std::move(n));
  }
  d.keywords.clear();
  for (const auto& k : raw.keywords) {
    auto n = detail::normalize_phrase(k);
    if (!n.empty()) d.keywords.push_back(std::move(n));
  }
  return d;
}

// ---------------------------------------------------------------------------
// Ingestion

namespace detail {

inline std::string opt_string(const nlohmann::json& rec, const char* key) {
  auto it = rec.find(key);
  if (it == rec.end() || it->is_null()) return {};
  return it->get<std::string>();
}

inline std::vector<std::string> opt_list(const nlohmann::json& rec, const char* key) {
  auto it = rec.find(key);
  if (it == rec.end() || it->is_null()) return {};
  return it->get<std::vector<std::string>>();
}

struct RawRecord {
  Document doc;
  std::optional<std::string> profile_id;
  std::optional<std::string> person_id;
  std::size_t line = 0;
};

inline RawRecord parse_record(const std::string& text, std::size_t line_no) {
  RawRecord r;
  r.line = line_no;
  try {
    auto rec = nlohmann::json::parse(text);
    if (!rec.is_object()) throw Error("parse_error", "record is not a JSON object");
    auto id = rec.find("doc_id");
    if (id == rec.end() || !id->is_string() || id->get<std::string>().empty())
      throw Error("parse_error", "missing doc_id");
    Document raw;
    raw.doc_id = id->get<std::string>();
    raw.name_ref = opt_string(rec, "name_ref");
    raw.title_tokens = {opt_string(rec, "title")};
    raw.coauthors = opt_list(rec, "coauthors");
    raw.venue_tokens = {opt_string(rec, "venue")};
    raw.org_tokens = {opt_string(rec, "org")};
    raw.keywords = opt_list(rec, "keywords");
    if (auto y = rec.find("year"); y != rec.end() && !y->is_null()) raw.year = y->get<int>();
    r.doc = normalize_document(raw);
    if (auto p = rec.find("profile_id"); p != rec.end() && !p->is_null())
      r.profile_id = p->get<std::string>();
    if (auto p = rec.find("person_id"); p != rec.end() && !p->is_null())
      r.person_id = p->get<std::string>();
  } catch (const Error& e) {
    throw Error("parse_error", "line " + std::to_string(line_no) + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw Error("parse_error", "line " + std::to_string(line_no) + ": " + e.what());
  }
  return r;
}

inline Corpus assemble(std::vector<RawRecord> records) {
  Corpus c;
  std::size_t labeled = 0;
  DocSet seen;
  for (const auto& r : records) {
    if (!seen.insert(r.doc.doc_id).second)
      throw Error("duplicate_doc", "duplicate doc_id '" + r.doc.doc_id + "' at line " +
                                       std::to_string(r.line));
    if (r.person_id) ++labeled;
  }
  if (labeled != 0 && labeled != records.size())
    throw Error("parse_error", "person_id present on " + std::to_string(labeled) + " of " +
                                   std::to_string(records.size()) + " records");
  if (labeled) c.truth = GroundTruth{};
  for (auto& r : records) {
    if (c.name_ref.empty()) c.name_ref = r.doc.name_ref;
    if (r.profile_id)
      c.assignment.groups[*r.profile_id].insert(r.doc.doc_id);
    else
      c.assignment.unassigned.insert(r.doc.doc_id);
    if (r.person_id) c.truth->identity[r.doc.doc_id] = *r.person_id;
    c.docs.push_back(std::move(r.doc));
  }
  return c;
}

inline std::vector<RawRecord> read_records(std::istream& in) {
  std::vector<RawRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); }))
      continue;
    out.push_back(parse_record(line, line_no));
  }
  return out;
}

}  // namespace detail

// Reads a JSON-lines stream as a single document set. doc_ids must be unique
// across the whole stream.
inline Corpus ingest(std::istream& in) { return detail::assemble(detail::read_records(in)); }

inline Corpus ingest_string(const std::string& text) {
  std::istringstream in(text);
  return ingest(in);
}

// Splits a multi-name stream by name_ref; uniqueness is enforced per name.
inline std::map<std::string, Corpus> ingest_by_name(std::istream& in) {
  std::map<std::string, std::vector<detail::RawRecord>> by_name;
  for (auto& r : detail::read_records(in)) by_name[r.doc.name_ref].push_back(std::move(r));
  std::map<std::string, Corpus> out;
  for (auto& [name, recs] : by_name) {
    out[name] = detail::assemble(std::move(recs));
    out[name].name_ref = name;
  }
  return out;
}

// Inverse of ingest for normalized documents; used by the simulator and the
// service journal.
inline nlohmann::json to_record(const Document& d, const std::optional<GroupId>& profile,
                                const std::optional<std::string>& person) {
  nlohmann::json j;
  j["doc_id"] = d.doc_id;
  j["name_ref"] = d.name_ref;
  j["title"] = join(d.title_tokens, " ");
  j["coauthors"] = d.coauthors;
  j["venue"] = join(d.venue_tokens, " ");
  j["org"] = join(d.org_tokens, " ");
  j["keywords"] = d.keywords;
  j["year"] = d.year ? nlohmann::json(*d.year) : nlohmann::json(nullptr);
  j["profile_id"] = profile ? nlohmann::json(*profile) : nlohmann::json(nullptr);
  j["person_id"] = person ? nlohmann::json(*person) : nlohmann::json(nullptr);
  return j;
}

inline std::string to_jsonl(const Corpus& c) {
  std::string out;
  for (const auto& d : c.docs) {
    std::optional<std::string> person;
    if (c.truth) person = c.truth->person(d.doc_id);
    out += to_record(d, c.assignment.group_of(d.doc_id), person).dump();
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Partition audit

// Returns every violation of the partition contract; empty means clean.
inline std::vector<std::string> audit(const Assignment& a, const DocSet& universe) {
  std::vector<std::string> problems;
  std::map<DocId, std::string> owner;
  auto claim = [&](const DocId& d, const std::string& where) {
    if (!universe.count(d)) problems.push_back("unknown document " + d + " in " + where);
    auto [it, fresh] = owner.emplace(d, where);
    if (!fresh) problems.push_back("document " + d + " in both " + it->second + " and " + where);
  };
  for (const auto& [id, g] : a.groups) {
    if (g.empty()) problems.push_back("empty group " + id);
    for (const auto& d : g) claim(d, "group " + id);
  }
  for (const auto& d : a.unassigned) claim(d, "unassigned pool");
  for (const auto& d : universe)
    if (!owner.count(d)) problems.push_back("document " + d + " missing from assignment");
  return problems;
}

inline void check_partition(const Assignment& a, const DocSet& universe) {
  auto problems = audit(a, universe);
  if (!problems.empty()) throw Error("partition_violation", join(problems, "; "));
}

// ---------------------------------------------------------------------------
// Error report

enum class ErrorKind { over_merged, over_partitioned };

inline const char* to_string(ErrorKind k) {
  return k == ErrorKind::over_merged ? "over_merged" : "over_partitioned";
}

struct ErrorFinding {
  GroupId group;
  std::optional<GroupId> other_group;  // set for over_partitioned
  ErrorKind kind;
  std::pair<DocId, DocId> witness;

  bool operator==(const ErrorFinding&) const = default;
};

// One over_merged finding per impure group and one over_partitioned finding
// per unordered pair of groups sharing an identity. Unassigned docs are ignored.
inline std::vector<ErrorFinding> error_report(const Assignment& a, const GroundTruth& truth) {
  std::vector<ErrorFinding> out;
  // person -> first doc seen, per group
  std::vector<std::pair<GroupId, std::map<std::string, DocId>>> reps;
  for (const auto& [id, g] : a.groups) {
    std::map<std::string, DocId> first;
    for (const auto& d : g) first.emplace(truth.person(d), d);
    if (first.size() > 1) {
      auto it = first.begin();
      const DocId& x = it->second;
      const DocId& y = std::next(it)->second;
      out.push_back({id, std::nullopt, ErrorKind::over_merged, std::minmax(x, y)});
    }
    reps.emplace_back(id, std::move(first));
  }
  for (std::size_t i = 0; i < reps.size(); ++i) {
    for (std::size_t j = i + 1; j < reps.size(); ++j) {
      for (const auto& [person, doc] : reps[i].second) {
        auto hit = reps[j].second.find(person);
        if (hit != reps[j].second.end()) {
          out.push_back({reps[i].first, reps[j].first, ErrorKind::over_partitioned,
                         {doc, hit->second}});
          break;
        }
      }
    }
  }
  for (const auto& d : a.unassigned) (void)truth.person(d);
  return out;
}

}  // namespace andis
