#pragma once

// Brute-force restatements of the voting rules. Written from the rules
// directly, without the helpers in workflow.hpp.

#include "andis/workflow.hpp"

namespace vote_oracle {

using namespace andis;

inline std::map<GroupId, DocSet> verifying(const Assignment& snapshot, const std::vector<Submission>& subs) {
  std::map<GroupId, DocSet> out;
  for (const auto& [g, docs] : snapshot.groups)
    for (const auto& d : docs) {
      bool any = false;
      for (const auto& s : subs) {
        auto it = s.excluded.find(g);
        if (it != s.excluded.end() && it->second.count(d)) any = true;
      }
      if (any) out[g].insert(d);
    }
  return out;
}

inline std::map<GroupId, DocSet> assign(const Assignment& snapshot, const std::vector<Submission>& subs, int k) {
  std::map<GroupId, DocSet> out;
  for (const auto& [g, _] : snapshot.groups)
    for (const auto& d : snapshot.unassigned) {
      int n = 0;
      for (const auto& s : subs) {
        auto it = s.assigned.find(g);
        if (it != s.assigned.end() && it->second.count(d)) ++n;
      }
      if (n > k / 2.0) out[g].insert(d);
    }
  return out;
}

// 1 co-created, 0 created apart, -1 missing from at least one created set.
inline int relation(const Submission& s, const DocId& x, const DocId& y) {
  int cx = -1, cy = -1;
  for (std::size_t i = 0; i < s.created.size(); ++i) {
    if (s.created[i].count(x)) cx = static_cast<int>(i);
    if (s.created[i].count(y)) cy = static_cast<int>(i);
  }
  if (cx < 0 || cy < 0) return -1;
  return cx == cy ? 1 : 0;
}

struct Evidence {
  int verified = 0, conflicting = 0;
};

inline Evidence evidence(const std::vector<Submission>& subs, const DocId& x, const DocId& y) {
  Evidence e;
  for (std::size_t a = 0; a < subs.size(); ++a)
    for (std::size_t b = 0; b < subs.size(); ++b) {
      if (a >= b) continue;
      const int ra = relation(subs[a], x, y), rb = relation(subs[b], x, y);
      if (ra == 1 && rb == 1) e.verified++;
      if (ra + rb == 1 && ra >= 0 && rb >= 0) e.conflicting++;
    }
  return e;
}

inline bool ok(const std::vector<Submission>& subs, const DocId& x, const DocId& y) {
  auto e = evidence(subs, x, y);
  return e.verified > 0 && e.conflicting == 0;
}

// Greedy over a label vector, rescanning label classes for each candidate.
inline std::vector<DocSet> create(const std::vector<Submission>& subs) {
  DocSet docs;
  for (const auto& s : subs)
    for (const auto& c : s.created) docs.insert(c.begin(), c.end());
  std::vector<DocId> list(docs.begin(), docs.end());
  struct Cand {
    int verified;
    DocId x, y;
  };
  std::vector<Cand> cands;
  for (std::size_t i = 0; i < list.size(); ++i)
    for (std::size_t j = i + 1; j < list.size(); ++j) {
      auto e = evidence(subs, list[i], list[j]);
      if (e.verified > 0 && e.conflicting == 0) cands.push_back({e.verified, list[i], list[j]});
    }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.verified != b.verified) return a.verified > b.verified;
    return std::tie(a.x, a.y) < std::tie(b.x, b.y);
  });
  std::map<DocId, int> label;
  for (std::size_t i = 0; i < list.size(); ++i) label[list[i]] = static_cast<int>(i);
  for (const auto& c : cands) {
    const int lx = label[c.x], ly = label[c.y];
    if (lx == ly) continue;
    bool good = true;
    for (const auto& [u, lu] : label)
      for (const auto& [v, lv] : label)
        if (lu == lx && lv == ly && !ok(subs, u, v)) good = false;
    if (!good) continue;
    for (auto& [_, l] : label)
      if (l == ly) l = lx;
  }
  std::map<int, DocSet> groups;
  for (const auto& [d, l] : label) groups[l].insert(d);
  std::set<DocSet> out;
  for (const auto& [_, g] : groups)
    if (g.size() >= 2) out.insert(g);
  return {out.begin(), out.end()};
}

// Reachability closure over approved pairs.
inline std::vector<std::set<GroupId>> merge(const std::vector<Submission>& subs, int k) {
  std::set<GroupId> ids;
  std::map<std::pair<GroupId, GroupId>, int> count;
  for (const auto& s : subs)
    for (const auto& [a, b] : s.merges) {
      ids.insert(a);
      ids.insert(b);
      count[{std::min(a, b), std::max(a, b)}]++;
    }
  std::vector<GroupId> v(ids.begin(), ids.end());
  const std::size_t n = v.size();
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) reach[i][i] = true;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      auto it = count.find({std::min(v[i], v[j]), std::max(v[i], v[j])});
      if (i != j && it != count.end() && it->second * 2 > k) reach[i][j] = true;
    }
  for (std::size_t m = 0; m < n; ++m)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (reach[i][m] && reach[m][j]) reach[i][j] = true;
  std::set<std::set<GroupId>> comps;
  for (std::size_t i = 0; i < n; ++i) {
    std::set<GroupId> c;
    for (std::size_t j = 0; j < n; ++j)
      if (reach[i][j]) c.insert(v[j]);
    if (c.size() >= 2) comps.insert(c);
  }
  return {comps.begin(), comps.end()};
}

// ---------------------------------------------------------------------------
// Sweeps: every K-tuple of per-annotator options on small domains, plus
// random cases up to 8 docs / 4 groups.

struct SweepResult {
  long cases = 0;
  long mismatches = 0;
  std::string first_failure;

  void record(bool ok, const std::string& what) {
    ++cases;
    if (!ok && mismatches++ == 0) first_failure = what;
  }
  void add(const SweepResult& o) {
    cases += o.cases;
    if (mismatches == 0 && o.mismatches) first_failure = o.first_failure;
    mismatches += o.mismatches;
  }
};

template <class F>
void for_each_tuple(std::size_t options, int k, F&& f) {
  std::vector<std::size_t> pick(k, 0);
  for (;;) {
    f(pick);
    int i = 0;
    while (i < k && ++pick[i] == options) pick[i++] = 0;
    if (i == k) return;
  }
}

inline std::vector<DocId> ids(const std::string& prefix, int n) {
  std::vector<DocId> v;
  for (int i = 0; i < n; ++i) v.push_back(prefix + std::to_string(i));
  return v;
}

inline std::vector<DocSet> subsets(const std::vector<DocId>& items) {
  std::vector<DocSet> out;
  for (unsigned mask = 0; mask < (1u << items.size()); ++mask) {
    DocSet s;
    for (std::size_t i = 0; i < items.size(); ++i)
      if (mask >> i & 1) s.insert(items[i]);
    out.push_back(s);
  }
  return out;
}

// All ways to split `items` into nonempty blocks.
inline void partitions(const std::vector<DocId>& items, std::size_t i, std::vector<DocSet>& cur,
                       std::vector<std::vector<DocSet>>& out) {
  if (i == items.size()) {
    out.push_back(cur);
    return;
  }
  for (auto& b : cur) {
    b.insert(items[i]);
    partitions(items, i + 1, cur, out);
    b.erase(items[i]);
  }
  cur.push_back({items[i]});
  partitions(items, i + 1, cur, out);
  cur.pop_back();
}

// Every possible created-set payload over `docs`.
inline std::vector<std::vector<DocSet>> created_options(const std::vector<DocId>& docs) {
  std::vector<std::vector<DocSet>> out;
  for (const auto& s : subsets(docs)) {
    std::vector<DocSet> cur;
    partitions(std::vector<DocId>(s.begin(), s.end()), 0, cur, out);
  }
  return out;
}

inline GroupId gen_pick(const Assignment& a, std::size_t i) {
  auto it = a.groups.begin();
  std::advance(it, static_cast<long>(i));
  return it->first;
}

inline std::string describe(const std::vector<Submission>& subs) {
  std::string out;
  for (const auto& s : subs) out += to_json(s).dump() + " ";
  return out;
}

inline bool clique_ok(const std::vector<Submission>& subs, const std::vector<DocSet>& groups) {
  for (const auto& g : groups)
    for (auto a = g.begin(); a != g.end(); ++a)
      for (auto b = std::next(a); b != g.end(); ++b)
        if (!ok(subs, *a, *b)) return false;
  return true;
}

inline void check_verifying(const Assignment& snap, const std::vector<Submission>& subs, SweepResult& r) {
  r.record(vote_verifying(subs) == verifying(snap, subs), "verifying " + describe(subs));
}
inline void check_assign(const Assignment& snap, const std::vector<Submission>& subs, int k, SweepResult& r) {
  r.record(vote_assign(subs, k) == assign(snap, subs, k), "assign " + describe(subs));
}
inline void check_create(const std::vector<Submission>& subs, SweepResult& r) {
  auto got = vote_create(subs);
  r.record(got == create(subs) && clique_ok(subs, got), "create " + describe(subs));
}
inline void check_merge(const std::vector<Submission>& subs, int k, SweepResult& r) {
  r.record(vote_merge(subs, k) == merge(subs, k), "merge " + describe(subs));
}

inline Submission blank(int i, Stage st) {
  Submission s;
  s.annotator = "a" + std::to_string(i);
  s.stage = st;
  return s;
}

inline SweepResult exhaustive_verifying() {
  SweepResult r;
  for (int k : {2, 3, 5})
    for (int n = 1; n <= (k == 5 ? 2 : 3); ++n) {
      Assignment snap;
      const auto docs = ids("d", n);
      for (int i = 0; i < n; ++i) snap.groups["g" + std::to_string(i % 2)].insert(docs[i]);
      std::vector<std::map<GroupId, DocSet>> options;
      for (const auto& s : subsets(docs)) {
        std::map<GroupId, DocSet> m;
        for (const auto& d : s) m[*snap.group_of(d)].insert(d);
        options.push_back(m);
      }
      for_each_tuple(options.size(), k, [&](const auto& pick) {
        std::vector<Submission> subs;
        for (int i = 0; i < k; ++i) {
          subs.push_back(blank(i, Stage::Verifying));
          subs.back().excluded = options[pick[i]];
        }
        check_verifying(snap, subs, r);
      });
    }
  return r;
}

inline SweepResult exhaustive_assign() {
  SweepResult r;
  struct Shape {
    int k, unassigned, groups;
  };
  for (auto sh : {Shape{2, 2, 2}, Shape{2, 1, 4}, Shape{3, 2, 2}, Shape{3, 1, 4}, Shape{5, 1, 2}, Shape{5, 1, 3}}) {
    Assignment snap;
    for (int g = 0; g < sh.groups; ++g) snap.groups["g" + std::to_string(g)] = {"x" + std::to_string(g)};
    const auto docs = ids("u", sh.unassigned);
    snap.unassigned = DocSet(docs.begin(), docs.end());
    // per annotator: each unassigned doc goes nowhere or to one group
    std::vector<std::map<GroupId, DocSet>> options;
    for_each_tuple(sh.groups + 1, sh.unassigned, [&](const auto& choice) {
      std::map<GroupId, DocSet> m;
      for (int d = 0; d < sh.unassigned; ++d)
        if (choice[d] > 0) m["g" + std::to_string(choice[d] - 1)].insert(docs[d]);
      options.push_back(m);
    });
    for_each_tuple(options.size(), sh.k, [&](const auto& pick) {
      std::vector<Submission> subs;
      for (int i = 0; i < sh.k; ++i) {
        subs.push_back(blank(i, Stage::Adding));
        subs.back().assigned = options[pick[i]];
      }
      check_assign(snap, subs, sh.k, r);
    });
  }
  return r;
}

inline SweepResult exhaustive_create() {
  SweepResult r;
  for (auto [k, n] : std::vector<std::pair<int, int>>{{2, 3}, {2, 4}, {3, 3}, {3, 4}, {5, 2}}) {
    const auto options = created_options(ids("u", n));
    for_each_tuple(options.size(), k, [&](const auto& pick) {
      std::vector<Submission> subs;
      for (int i = 0; i < k; ++i) {
        subs.push_back(blank(i, Stage::Adding));
        subs.back().created = options[pick[i]];
      }
      check_create(subs, r);
    });
  }
  return r;
}

inline SweepResult exhaustive_merge() {
  SweepResult r;
  for (auto [k, groups] : std::vector<std::pair<int, int>>{{2, 3}, {2, 4}, {3, 3}, {3, 4}, {5, 3}}) {
    std::vector<GroupPair> pairs;
    for (int a = 0; a < groups; ++a)
      for (int b = a + 1; b < groups; ++b) pairs.emplace_back("g" + std::to_string(a), "g" + std::to_string(b));
    const std::size_t options = std::size_t{1} << pairs.size();
    for_each_tuple(options, k, [&](const auto& pick) {
      std::vector<Submission> subs;
      for (int i = 0; i < k; ++i) {
        subs.push_back(blank(i, Stage::Merging));
        for (std::size_t p = 0; p < pairs.size(); ++p)
          if (pick[i] >> p & 1) subs.back().merges.insert(pairs[p]);
      }
      check_merge(subs, k, r);
    });
  }
  return r;
}

// Random cases with up to 8 docs and 4 groups, K in {2, 3, 5}.
inline SweepResult random_sweep(std::uint64_t seed, int cases) {
  std::mt19937_64 rng(seed);
  SweepResult r;
  const int ks[] = {2, 3, 5};
  for (int c = 0; c < cases; ++c) {
    const int k = ks[rng() % 3];
    const int n = 1 + static_cast<int>(rng() % 8);
    const int groups = 1 + static_cast<int>(rng() % 4);
    const auto docs = ids("d", n);
    Assignment snap;
    for (const auto& d : docs) {
      const auto slot = rng() % (groups + 1);
      if (slot == 0)
        snap.unassigned.insert(d);
      else
        snap.groups["g" + std::to_string(slot - 1)].insert(d);
    }
    std::vector<Submission> ver, add, mer;
    for (int i = 0; i < k; ++i) {
      ver.push_back(blank(i, Stage::Verifying));
      for (const auto& [g, gd] : snap.groups)
        for (const auto& d : gd)
          if (rng() % 3 == 0) ver.back().excluded[g].insert(d);
      add.push_back(blank(i, Stage::Adding));
      std::vector<DocSet> created;
      for (const auto& d : snap.unassigned) {
        const auto choice = rng() % (snap.groups.size() + 3);
        if (choice < snap.groups.size()) {
          add.back().assigned[gen_pick(snap, choice)].insert(d);
        } else if (choice == snap.groups.size()) {
          // leave unassigned
        } else {
          const auto slot = rng() % 3;
          if (created.size() <= slot) created.resize(slot + 1);
          created[slot].insert(d);
        }
      }
      for (auto& cset : created)
        if (!cset.empty()) add.back().created.push_back(cset);
      mer.push_back(blank(i, Stage::Merging));
      for (auto a = snap.groups.begin(); a != snap.groups.end(); ++a)
        for (auto b = std::next(a); b != snap.groups.end(); ++b)
          if (rng() % 2) mer.back().merges.emplace(a->first, b->first);
    }
    check_verifying(snap, ver, r);
    check_assign(snap, add, k, r);
    check_create(add, r);
    check_merge(mer, k, r);
  }
  return r;
}

}  // namespace vote_oracle

