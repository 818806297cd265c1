#pragma once

// The five batch annotation operations over an Assignment, their wire format
// and the replayable operation log.

#include "andis/corpus.hpp"

#include <variant>

namespace andis {

enum class Stage : std::uint8_t { Cleaning = 0, Verifying, Adding, Merging, Final };

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::Cleaning: return "cleaning";
    case Stage::Verifying: return "verifying";
    case Stage::Adding: return "adding";
    case Stage::Merging: return "merging";
    case Stage::Final: return "final";
  }
  return "?";
}

inline Stage parse_stage(std::string_view s) {
  for (auto st : {Stage::Cleaning, Stage::Verifying, Stage::Adding, Stage::Merging, Stage::Final})
    if (s == to_string(st)) return st;
  throw Error("bad_request", "unknown stage: " + std::string(s));
}

enum class OpKind : std::uint8_t { merge, separate, create, assign, exclude };

inline const char* to_string(OpKind k) {
  switch (k) {
    case OpKind::merge: return "merge";
    case OpKind::separate: return "separate";
    case OpKind::create: return "create";
    case OpKind::assign: return "assign";
    case OpKind::exclude: return "exclude";
  }
  return "?";
}

struct Merge {
  GroupId g1, g2;
  bool operator==(const Merge&) const = default;
};
struct Separate {
  GroupId g;
  DocSet docs;
  bool operator==(const Separate&) const = default;
};
struct Create {
  DocSet docs;
  bool operator==(const Create&) const = default;
};
struct Assign {
  GroupId g;
  DocSet docs;
  bool operator==(const Assign&) const = default;
};
struct Exclude {
  GroupId g;
  DocSet docs;
  bool operator==(const Exclude&) const = default;
};

using Operation = std::variant<Merge, Separate, Create, Assign, Exclude>;

inline OpKind kind_of(const Operation& op) { return static_cast<OpKind>(op.index()); }

namespace detail {

inline const DocSet& group_or_throw(const Assignment& a, const GroupId& g) {
  auto it = a.groups.find(g);
  if (it == a.groups.end()) throw Error("not_found", "no such group: " + g);
  return it->second;
}

inline void require_nonempty(const DocSet& docs) {
  if (docs.empty()) throw Error("invalid_op", "operation needs a nonempty document subset");
}

inline void require_subset(const DocSet& subset, const DocSet& of, const std::string& what) {
  std::vector<DocId> offenders;
  for (const auto& d : subset)
    if (!of.count(d)) offenders.push_back(d);
  if (!offenders.empty()) throw Error("invalid_op", "documents not in " + what + ": " + join(offenders));
}

// Fresh id "<prefix><n>" with the smallest counter value not already taken.
inline GroupId fresh_id(Assignment& a, const std::string& prefix) {
  for (;;) {
    GroupId id = prefix + std::to_string(a.next_id++);
    if (!a.groups.count(id)) return id;
  }
}

}  // namespace detail

// New group id is the lexicographically smaller input plus "+<counter>".
inline Assignment apply_merge(Assignment a, const GroupId& g1, const GroupId& g2) {
  if (g1 == g2) throw Error("invalid_op", "cannot merge group " + g1 + " with itself");
  DocSet merged = detail::group_or_throw(a, g1);
  const DocSet& other = detail::group_or_throw(a, g2);
  merged.insert(other.begin(), other.end());
  a.groups.erase(g1);
  a.groups.erase(g2);
  const GroupId id = detail::fresh_id(a, std::min(g1, g2) + "+");
  a.groups.emplace(id, std::move(merged));
  return a;
}

inline Assignment apply_separate(Assignment a, const GroupId& g, const DocSet& docs) {
  detail::require_nonempty(docs);
  detail::require_subset(docs, detail::group_or_throw(a, g), "group " + g);
  auto& group = a.groups.at(g);
  if (docs.size() == group.size()) throw Error("invalid_op", "separating the whole group " + g + " is a rename");
  for (const auto& d : docs) group.erase(d);
  const GroupId id = detail::fresh_id(a, "n");
  a.groups.emplace(id, docs);
  return a;
}

inline Assignment apply_create(Assignment a, const DocSet& docs) {
  detail::require_nonempty(docs);
  detail::require_subset(docs, a.unassigned, "the unassigned pool");
  for (const auto& d : docs) a.unassigned.erase(d);
  const GroupId id = detail::fresh_id(a, "n");
  a.groups.emplace(id, docs);
  return a;
}

inline Assignment apply_assign(Assignment a, const GroupId& g, const DocSet& docs) {
  detail::require_nonempty(docs);
  detail::group_or_throw(a, g);
  detail::require_subset(docs, a.unassigned, "the unassigned pool");
  for (const auto& d : docs) a.unassigned.erase(d);
  a.groups.at(g).insert(docs.begin(), docs.end());
  return a;
}

// Emptied groups are deleted.
inline Assignment apply_exclude(Assignment a, const GroupId& g, const DocSet& docs) {
  detail::require_nonempty(docs);
  detail::require_subset(docs, detail::group_or_throw(a, g), "group " + g);
  auto& group = a.groups.at(g);
  for (const auto& d : docs) group.erase(d);
  if (group.empty()) a.groups.erase(g);
  a.unassigned.insert(docs.begin(), docs.end());
  return a;
}

inline Assignment apply_op(const Assignment& a, const Operation& op) {
  return std::visit(
      [&](const auto& o) -> Assignment {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, Merge>) return apply_merge(a, o.g1, o.g2);
        else if constexpr (std::is_same_v<T, Separate>) return apply_separate(a, o.g, o.docs);
        else if constexpr (std::is_same_v<T, Create>) return apply_create(a, o.docs);
        else if constexpr (std::is_same_v<T, Assign>) return apply_assign(a, o.g, o.docs);
        else return apply_exclude(a, o.g, o.docs);
      },
      op);
}

// ---------------------------------------------------------------------------
// Wire format: {"op": "...", "g1", "g2", "g", "docs": [...]}

inline nlohmann::json to_json(const Operation& op) {
  nlohmann::json j;
  j["op"] = to_string(kind_of(op));
  std::visit(
      [&](const auto& o) {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, Merge>) {
          j["g1"] = o.g1;
          j["g2"] = o.g2;
        } else {
          if constexpr (!std::is_same_v<T, Create>) j["g"] = o.g;
          j["docs"] = std::vector<DocId>(o.docs.begin(), o.docs.end());
        }
      },
      op);
  return j;
}

inline Operation operation_from_json(const nlohmann::json& j) {
  try {
    const auto kind = j.at("op").get<std::string>();
    auto docs = [&] {
      auto v = j.at("docs").get<std::vector<DocId>>();
      return DocSet(v.begin(), v.end());
    };
    auto g = [&] { return j.at("g").get<GroupId>(); };
    if (kind == "merge") return Merge{j.at("g1").get<GroupId>(), j.at("g2").get<GroupId>()};
    if (kind == "separate") return Separate{g(), docs()};
    if (kind == "create") return Create{docs()};
    if (kind == "assign") return Assign{g(), docs()};
    if (kind == "exclude") return Exclude{g(), docs()};
    throw Error("bad_request", "unknown operation: " + kind);
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad_request", std::string("malformed operation: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Operation log

struct OpRecord {
  std::uint64_t seq = 0;
  std::string annotator;
  Stage stage = Stage::Cleaning;
  Operation op;
  std::int64_t timestamp = 0;  // milliseconds since epoch, informational
};

class OpLog {
 public:
  const OpRecord& append(std::string annotator, Stage stage, Operation op, std::int64_t timestamp) {
    records_.push_back({next_seq_++, std::move(annotator), stage, std::move(op), timestamp});
    return records_.back();
  }

  const std::vector<OpRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

 private:
  std::vector<OpRecord> records_;
  std::uint64_t next_seq_ = 1;
};

inline Assignment replay(Assignment initial, const OpLog& log) {
  for (const auto& r : log.records()) initial = apply_op(initial, r.op);
  return initial;
}

inline nlohmann::json to_json(const OpRecord& r) {
  return {{"seq", r.seq}, {"annotator", r.annotator}, {"stage", to_string(r.stage)}, {"operation", to_json(r.op)},
          {"timestamp", r.timestamp}};
}

inline nlohmann::json to_json(const Assignment& a) {
  nlohmann::json groups = nlohmann::json::object();
  for (const auto& [id, g] : a.groups) groups[id] = std::vector<DocId>(g.begin(), g.end());
  return {{"groups", groups},
          {"unassigned", std::vector<DocId>(a.unassigned.begin(), a.unassigned.end())},
          {"next_id", a.next_id}};
}

inline Assignment assignment_from_json(const nlohmann::json& j) {
  Assignment a;
  for (const auto& [id, docs] : j.at("groups").items()) {
    auto v = docs.get<std::vector<DocId>>();
    a.groups[id] = DocSet(v.begin(), v.end());
  }
  auto u = j.at("unassigned").get<std::vector<DocId>>();
  a.unassigned = DocSet(u.begin(), u.end());
  a.next_id = j.value("next_id", std::uint64_t{1});
  return a;
}

}  // namespace andis
