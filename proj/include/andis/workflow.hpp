#pragma once

// Four-stage collaborative workflow: per-stage operation permissions,
// annotator submissions, the voting rules and the stage machine.

#include "andis/ops.hpp"

#include <functional>
#include <memory>
#include <numeric>

namespace andis {

inline std::set<OpKind> allowed_ops(Stage s) {
  switch (s) {
    case Stage::Cleaning: return {OpKind::separate, OpKind::exclude};
    case Stage::Verifying: return {OpKind::exclude};
    case Stage::Adding: return {OpKind::assign, OpKind::create};
    case Stage::Merging: return {OpKind::merge};
    case Stage::Final: return {};
  }
  return {};
}

inline void check_permitted(Stage s, const Operation& op) {
  if (!allowed_ops(s).count(kind_of(op)))
    throw Error("forbidden_op", std::string(to_string(kind_of(op))) + " is not allowed during " + to_string(s));
}

using GroupPair = std::pair<GroupId, GroupId>;  // first < second

inline GroupPair ordered_pair(GroupId a, GroupId b) {
  if (b < a) std::swap(a, b);
  return {std::move(a), std::move(b)};
}

// One annotator's work for one stage. Only the fields of that stage are used:
// Cleaning - ops; Verifying - excluded; Adding - assigned, created;
// Merging - merges.
struct Submission {
  std::string annotator;
  Stage stage = Stage::Cleaning;
  std::vector<Operation> ops;
  std::map<GroupId, DocSet> excluded;
  std::map<GroupId, DocSet> assigned;
  std::vector<DocSet> created;
  std::set<GroupPair> merges;

  bool operator==(const Submission&) const = default;
};

// Checks a submission against the stage's frozen snapshot.
inline void validate_submission(const Submission& s, const Assignment& snapshot) {
  auto bad = [&](const std::string& why) { throw Error("invalid_submission", s.annotator + ": " + why); };
  auto group = [&](const GroupId& g) -> const DocSet& {
    auto it = snapshot.groups.find(g);
    if (it == snapshot.groups.end()) throw Error("not_found", s.annotator + ": no such group: " + g);
    return it->second;
  };
  if (s.annotator.empty()) bad("annotator id is empty");
  switch (s.stage) {
    case Stage::Cleaning: {
      Assignment scratch = snapshot;
      for (const auto& op : s.ops) {
        check_permitted(Stage::Cleaning, op);
        scratch = apply_op(scratch, op);
      }
      break;
    }
    case Stage::Verifying:
      for (const auto& [g, docs] : s.excluded)
        for (const auto& d : docs)
          if (!group(g).count(d)) bad("excluded document " + d + " is not in group " + g);
      break;
    case Stage::Adding: {
      std::map<DocId, std::string> used;
      auto claim = [&](const DocId& d, const std::string& where) {
        if (!snapshot.unassigned.count(d)) bad("document " + d + " is not unassigned");
        auto [it, fresh] = used.emplace(d, where);
        if (!fresh) bad("document " + d + " used in both " + it->second + " and " + where);
      };
      for (const auto& [g, docs] : s.assigned) {
        group(g);
        for (const auto& d : docs) claim(d, "assign to " + g);
      }
      for (std::size_t k = 0; k < s.created.size(); ++k) {
        if (s.created[k].empty()) bad("empty created set");
        for (const auto& d : s.created[k]) claim(d, "created set " + std::to_string(k));
      }
      break;
    }
    case Stage::Merging:
      for (const auto& [a, b] : s.merges) {
        if (a == b) bad("merge pair repeats group " + a);
        group(a);
        group(b);
      }
      break;
    case Stage::Final: bad("no submissions after the final stage");
  }
}

// ---------------------------------------------------------------------------
// Voting

// Union of exclusions per group.
inline std::map<GroupId, DocSet> vote_verifying(const std::vector<Submission>& subs) {
  std::map<GroupId, DocSet> out;
  for (const auto& s : subs)
    for (const auto& [g, docs] : s.excluded)
      if (!docs.empty()) out[g].insert(docs.begin(), docs.end());
  return out;
}

// A doc joins group g iff strictly more than K/2 annotators put it there.
inline std::map<GroupId, DocSet> vote_assign(const std::vector<Submission>& subs, int k) {
  std::map<std::pair<GroupId, DocId>, int> votes;
  for (const auto& s : subs)
    for (const auto& [g, docs] : s.assigned)
      for (const auto& d : docs) ++votes[{g, d}];
  std::map<GroupId, DocSet> out;
  for (const auto& [key, n] : votes)
    if (2 * n > k) out[key.first].insert(key.second);
  return out;
}

struct PairEvidence {
  int verified = 0;     // annotator pairs that both co-create the docs
  int conflicting = 0;  // annotator pairs where one co-creates and the other splits
};

using DocPair = std::pair<DocId, DocId>;  // first < second

namespace detail {

// doc -> index of the created set holding it, for one annotator.
inline std::map<DocId, int> created_index(const Submission& s) {
  std::map<DocId, int> idx;
  for (std::size_t k = 0; k < s.created.size(); ++k)
    for (const auto& d : s.created[k]) idx[d] = static_cast<int>(k);
  return idx;
}

}  // namespace detail

// Evidence for every doc pair that at least one annotator co-created.
inline std::map<DocPair, PairEvidence> create_evidence(const std::vector<Submission>& subs) {
  std::vector<std::map<DocId, int>> idx;
  for (const auto& s : subs) idx.push_back(detail::created_index(s));
  std::set<DocPair> pairs;
  for (const auto& s : subs)
    for (const auto& c : s.created)
      for (auto a = c.begin(); a != c.end(); ++a)
        for (auto b = std::next(a); b != c.end(); ++b) pairs.emplace(*a, *b);

  std::map<DocPair, PairEvidence> out;
  for (const auto& p : pairs) {
    // 1: co-created, 0: both created apart, -1: at least one not created.
    std::vector<int> state;
    for (const auto& m : idx) {
      auto x = m.find(p.first), y = m.find(p.second);
      if (x == m.end() || y == m.end())
        state.push_back(-1);
      else
        state.push_back(x->second == y->second ? 1 : 0);
    }
    PairEvidence e;
    for (std::size_t k = 0; k < state.size(); ++k)
      for (std::size_t l = k + 1; l < state.size(); ++l) {
        if (state[k] == 1 && state[l] == 1) ++e.verified;
        if ((state[k] == 1 && state[l] == 0) || (state[k] == 0 && state[l] == 1)) ++e.conflicting;
      }
    out.emplace(p, e);
  }
  return out;
}

inline bool admissible(const PairEvidence& e) { return e.verified >= 1 && e.conflicting == 0; }

// Greedy conflict-free grouping of verified pairs. Pairs are taken by
// descending verified count then lexicographically; two components join only
// if every cross pair is admissible. Singletons are dropped.
inline std::vector<DocSet> vote_create(const std::vector<Submission>& subs) {
  const auto evidence = create_evidence(subs);
  std::vector<std::pair<DocPair, int>> ranked;
  for (const auto& [p, e] : evidence)
    if (admissible(e)) ranked.emplace_back(p, e.verified);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  auto ok = [&](const DocId& a, const DocId& b) {
    auto it = evidence.find(a < b ? DocPair{a, b} : DocPair{b, a});
    return it != evidence.end() && admissible(it->second);
  };
  std::map<DocId, std::shared_ptr<DocSet>> comp;
  auto comp_of = [&](const DocId& d) {
    auto& c = comp[d];
    if (!c) c = std::make_shared<DocSet>(DocSet{d});
    return c;
  };
  for (const auto& [p, _] : ranked) {
    auto ca = comp_of(p.first), cb = comp_of(p.second);
    if (ca == cb) continue;
    bool all = true;
    for (const auto& x : *ca) {
      for (const auto& y : *cb)
        if (!ok(x, y)) {
          all = false;
          break;
        }
      if (!all) break;
    }
    if (!all) continue;
    ca->insert(cb->begin(), cb->end());
    for (const auto& y : *cb) comp[y] = ca;
  }
  std::set<DocSet> groups;
  for (const auto& [_, c] : comp)
    if (c->size() >= 2) groups.insert(*c);
  return {groups.begin(), groups.end()};
}

// Majority-approved pairs, closed transitively. Returns sets of >= 2 groups.
inline std::vector<std::set<GroupId>> vote_merge(const std::vector<Submission>& subs, int k) {
  std::map<GroupPair, int> votes;
  for (const auto& s : subs)
    for (const auto& p : s.merges) ++votes[ordered_pair(p.first, p.second)];
  std::map<GroupId, GroupId> parent;
  std::function<GroupId(const GroupId&)> find = [&](const GroupId& g) -> GroupId {
    auto it = parent.find(g);
    if (it == parent.end() || it->second == g) return g;
    return it->second = find(it->second);
  };
  for (const auto& [p, n] : votes) {
    if (2 * n <= k) continue;
    parent.try_emplace(p.first, p.first);
    parent.try_emplace(p.second, p.second);
    const auto a = find(p.first), b = find(p.second);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::map<GroupId, std::set<GroupId>> comps;
  for (const auto& [g, _] : parent) comps[find(g)].insert(g);
  std::vector<std::set<GroupId>> out;
  for (auto& [_, c] : comps) out.push_back(std::move(c));
  return out;
}

// ---------------------------------------------------------------------------
// Conflict statistics over created sets

struct ConflictStats {
  std::string a, b;  // annotator ids
  std::size_t common = 0;     // N: docs both annotators put into created sets
  std::size_t conflicts = 0;  // C: pairs of common docs co-created by one and split by the other
};

inline std::vector<ConflictStats> conflict_stats(const std::vector<Submission>& subs) {
  std::vector<ConflictStats> out;
  for (std::size_t k = 0; k < subs.size(); ++k)
    for (std::size_t l = k + 1; l < subs.size(); ++l) {
      const auto ik = detail::created_index(subs[k]), il = detail::created_index(subs[l]);
      std::vector<DocId> common;
      for (const auto& [d, _] : ik)
        if (il.count(d)) common.push_back(d);
      ConflictStats st{subs[k].annotator, subs[l].annotator, common.size(), 0};
      for (std::size_t x = 0; x < common.size(); ++x)
        for (std::size_t y = x + 1; y < common.size(); ++y) {
          const bool tk = ik.at(common[x]) == ik.at(common[y]);
          const bool tl = il.at(common[x]) == il.at(common[y]);
          if (tk != tl) ++st.conflicts;
        }
      out.push_back(st);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Deriving submissions from an annotator's private workspace

// The workspace started as a copy of `snapshot` and was edited only with ops
// legal in `stage`.
inline Submission derive_submission(const std::string& annotator, Stage stage, const Assignment& snapshot,
                                    const Assignment& workspace, const std::vector<Operation>& ops) {
  Submission s;
  s.annotator = annotator;
  s.stage = stage;
  switch (stage) {
    case Stage::Cleaning: s.ops = ops; break;
    case Stage::Verifying:
      for (const auto& [g, docs] : snapshot.groups) {
        auto it = workspace.groups.find(g);
        DocSet gone;
        for (const auto& d : docs)
          if (it == workspace.groups.end() || !it->second.count(d)) gone.insert(d);
        if (!gone.empty()) s.excluded[g] = gone;
      }
      break;
    case Stage::Adding:
      for (const auto& [g, docs] : workspace.groups) {
        auto it = snapshot.groups.find(g);
        if (it == snapshot.groups.end()) {
          s.created.push_back(docs);
          continue;
        }
        DocSet added;
        for (const auto& d : docs)
          if (!it->second.count(d)) added.insert(d);
        if (!added.empty()) s.assigned[g] = added;
      }
      break;
    case Stage::Merging:
      // every pair of snapshot groups that ended up together
      for (const auto& [_, docs] : workspace.groups) {
        std::set<GroupId> origin;
        for (const auto& d : docs)
          if (auto g = snapshot.group_of(d)) origin.insert(*g);
        for (auto a = origin.begin(); a != origin.end(); ++a)
          for (auto b = std::next(a); b != origin.end(); ++b) s.merges.emplace(*a, *b);
      }
      break;
    case Stage::Final: throw Error("invalid_stage", "nothing to submit after the final stage");
  }
  return s;
}

// ---------------------------------------------------------------------------
// Stage machine

struct WorkflowState {
  std::string name_ref;
  Stage stage = Stage::Cleaning;
  int k = 3;                            // annotators per collaborative stage
  std::vector<std::string> roster;      // optional; names absent annotators
  Assignment snapshot;                  // frozen at the start of the stage
  std::map<std::string, Submission> submissions;

  bool operator==(const WorkflowState&) const = default;
};

inline Stage next_stage(Stage s) {
  if (s == Stage::Final) throw Error("invalid_stage", "workflow already final");
  return static_cast<Stage>(static_cast<int>(s) + 1);
}

inline void add_submission(WorkflowState& st, Submission s) {
  if (s.stage != st.stage)
    throw Error("wrong_stage", std::string("submission is for ") + to_string(s.stage) + " but workflow is in " +
                                   to_string(st.stage));
  validate_submission(s, st.snapshot);
  if (!st.roster.empty() && std::find(st.roster.begin(), st.roster.end(), s.annotator) == st.roster.end())
    throw Error("unknown_annotator", s.annotator);
  if (st.stage == Stage::Cleaning && !st.submissions.empty() && !st.submissions.count(s.annotator))
    throw Error("invalid_submission", "cleaning already has a submission from " + st.submissions.begin()->first);
  st.submissions[s.annotator] = std::move(s);
}

inline std::size_t required_submissions(const WorkflowState& st) {
  return st.stage == Stage::Cleaning ? 1 : static_cast<std::size_t>(st.k);
}

// Aggregated effect of one stage's submissions on its snapshot.
inline Assignment aggregate_stage(Stage stage, const Assignment& snapshot, const std::vector<Submission>& subs,
                                  int k) {
  Assignment a = snapshot;
  switch (stage) {
    case Stage::Cleaning:
      for (const auto& op : subs.front().ops) a = apply_op(a, op);
      break;
    case Stage::Verifying:
      for (const auto& [g, docs] : vote_verifying(subs)) a = apply_exclude(a, g, docs);
      break;
    case Stage::Adding: {
      // a doc adopted by an assign vote is not also created
      const auto adopted = vote_assign(subs, k);
      DocSet taken;
      for (const auto& [g, docs] : adopted) {
        a = apply_assign(a, g, docs);
        taken.insert(docs.begin(), docs.end());
      }
      for (auto group : vote_create(subs)) {
        for (const auto& d : taken) group.erase(d);
        if (group.size() >= 2) a = apply_create(a, group);
      }
      break;
    }
    case Stage::Merging:
      for (const auto& ids : vote_merge(subs, k)) {
        auto it = ids.begin();
        GroupId acc = *it;
        for (++it; it != ids.end(); ++it) {
          const auto before = a.groups;
          a = apply_merge(a, acc, *it);
          for (const auto& [id, _] : a.groups)
            if (!before.count(id)) acc = id;
        }
      }
      break;
    case Stage::Final: throw Error("invalid_stage", "workflow already final");
  }
  return a;
}

inline WorkflowState advance_stage(const WorkflowState& st) {
  if (st.stage == Stage::Final) throw Error("invalid_stage", "workflow already final");
  const std::size_t need = required_submissions(st);
  if (st.submissions.size() < need) {
    std::string detail = std::string(to_string(st.stage)) + " has " + std::to_string(st.submissions.size()) +
                         " of " + std::to_string(need) + " submissions";
    std::vector<std::string> absent;
    for (const auto& r : st.roster)
      if (!st.submissions.count(r)) absent.push_back(r);
    if (!absent.empty()) detail += "; missing: " + join(absent);
    throw Error("missing_submissions", detail);
  }
  std::vector<Submission> subs;
  for (const auto& [_, s] : st.submissions) subs.push_back(s);
  WorkflowState next = st;
  next.snapshot = aggregate_stage(st.stage, st.snapshot, subs, st.k);
  next.stage = next_stage(st.stage);
  next.submissions.clear();
  return next;
}

// Final partition: groups only, unassigned omitted.
inline nlohmann::json export_json(const std::string& name_ref, const Assignment& a) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& [_, g] : a.groups) groups.push_back(std::vector<DocId>(g.begin(), g.end()));
  return {{"name_ref", name_ref}, {"groups", groups}};
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const Submission& s) {
  nlohmann::json j{{"annotator", s.annotator}, {"stage", to_string(s.stage)}};
  auto group_map = [](const std::map<GroupId, DocSet>& m) {
    nlohmann::json o = nlohmann::json::object();
    for (const auto& [g, docs] : m) o[g] = std::vector<DocId>(docs.begin(), docs.end());
    return o;
  };
  switch (s.stage) {
    case Stage::Cleaning: {
      j["ops"] = nlohmann::json::array();
      for (const auto& op : s.ops) j["ops"].push_back(to_json(op));
      break;
    }
    case Stage::Verifying: j["excluded"] = group_map(s.excluded); break;
    case Stage::Adding: {
      j["assigned"] = group_map(s.assigned);
      j["created"] = nlohmann::json::array();
      for (const auto& c : s.created) j["created"].push_back(std::vector<DocId>(c.begin(), c.end()));
      break;
    }
    case Stage::Merging: {
      j["merges"] = nlohmann::json::array();
      for (const auto& [a, b] : s.merges) j["merges"].push_back({a, b});
      break;
    }
    case Stage::Final: break;
  }
  return j;
}

inline Submission submission_from_json(const nlohmann::json& j) {
  try {
    Submission s;
    s.annotator = j.at("annotator").get<std::string>();
    s.stage = parse_stage(j.at("stage").get<std::string>());
    auto group_map = [&](const char* key) {
      std::map<GroupId, DocSet> m;
      if (!j.contains(key)) return m;
      for (const auto& [g, docs] : j.at(key).items()) {
        auto v = docs.get<std::vector<DocId>>();
        m[g] = DocSet(v.begin(), v.end());
      }
      return m;
    };
    if (j.contains("ops"))
      for (const auto& op : j.at("ops")) s.ops.push_back(operation_from_json(op));
    s.excluded = group_map("excluded");
    s.assigned = group_map("assigned");
    if (j.contains("created"))
      for (const auto& c : j.at("created")) {
        auto v = c.get<std::vector<DocId>>();
        s.created.emplace_back(v.begin(), v.end());
      }
    if (j.contains("merges"))
      for (const auto& p : j.at("merges")) {
        auto v = p.get<std::vector<GroupId>>();
        if (v.size() != 2) throw Error("bad_request", "merge pair must have two group ids");
        s.merges.insert(ordered_pair(v[0], v[1]));
      }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad_request", std::string("malformed submission: ") + e.what());
  }
}

}  // namespace andis
