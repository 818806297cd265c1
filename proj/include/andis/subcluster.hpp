#pragma once

// Sub-clustering of assigned groups and the unassigned pool: a disjoint
// variant of speaker-listener label propagation on the thresholded refined
// graph, followed by breadth-first splitting of anything over the size cap.

#include "andis/refine.hpp"

#include <deque>
#include <limits>
#include <numeric>
#include <random>

namespace andis {

// Parent id of the unassigned pool in sub-clustering maps and JSON.
inline const GroupId kUnassignedParent = "~";

struct SlpaConfig {
  int iterations = 20;
  std::uint64_t seed = 0;
  std::size_t max_size = 50;
  double edge_threshold = 0.5;
};

struct SubClustering {
  GroupId parent;
  std::vector<DocSet> subgroups;

  bool operator==(const SubClustering&) const = default;
};

// Adjacency over local node ids 0..m-1 of an induced subgraph. Edges are the
// refined probabilities at or above the threshold.
struct LocalGraph {
  std::vector<int> global;  // local -> index into the refined graph
  std::vector<std::vector<std::pair<int, double>>> adj;

  std::size_t size() const { return global.size(); }

  double weighted_degree(int v) const {
    double s = 0.0;
    for (const auto& [_, w] : adj[v]) s += w;
    return s;
  }
};

inline LocalGraph induced_graph(const Matrix& prob, std::vector<int> members, double threshold) {
  std::sort(members.begin(), members.end());
  LocalGraph g;
  g.global = std::move(members);
  const int m = static_cast<int>(g.global.size());
  g.adj.resize(m);
  for (int a = 0; a < m; ++a)
    for (int b = a + 1; b < m; ++b) {
      const double w = prob(g.global[a], g.global[b]);
      if (w >= threshold && w > 0.0) {
        g.adj[a].emplace_back(b, w);
        g.adj[b].emplace_back(a, w);
      }
    }
  return g;
}

// Returns communities as lists of local ids, each sorted, ordered by their
// smallest member.
inline std::vector<std::vector<int>> slpa(const LocalGraph& g, const SlpaConfig& cfg) {
  if (cfg.iterations < 1) throw Error("invalid_argument", "SLPA needs at least one iteration");
  const int m = static_cast<int>(g.size());
  std::vector<std::vector<int>> memory(m);
  for (int v = 0; v < m; ++v) {
    memory[v].reserve(static_cast<std::size_t>(cfg.iterations) + 1);
    memory[v].push_back(v);
  }
  std::mt19937_64 rng(cfg.seed);
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::pair<int, double>> votes;
  for (int t = 0; t < cfg.iterations; ++t) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int listener : order) {
      if (g.adj[listener].empty()) continue;
      votes.clear();
      for (const auto& [speaker, w] : g.adj[listener]) {
        const auto& mem = memory[speaker];
        std::uniform_int_distribution<std::size_t> pick(0, mem.size() - 1);
        const int label = mem[pick(rng)];
        auto it = std::find_if(votes.begin(), votes.end(), [label](const auto& p) { return p.first == label; });
        if (it == votes.end())
          votes.emplace_back(label, w);
        else
          it->second += w;
      }
      auto best = votes.front();
      for (const auto& v : votes)
        if (v.second > best.second || (v.second == best.second && v.first < best.first)) best = v;
      memory[listener].push_back(best.first);
    }
  }

  std::vector<int> final_label(m);
  std::vector<int> counts;
  for (int v = 0; v < m; ++v) {
    std::vector<int> mem = memory[v];
    std::sort(mem.begin(), mem.end());
    int best = mem.front(), best_count = 0;
    for (std::size_t i = 0; i < mem.size();) {
      std::size_t j = i;
      while (j < mem.size() && mem[j] == mem[i]) ++j;
      if (static_cast<int>(j - i) > best_count) {
        best = mem[i];
        best_count = static_cast<int>(j - i);
      }
      i = j;
    }
    final_label[v] = best;
  }
  // Memory majorities occasionally leave a dense block split in two. Sweep in
  // index order moving a node to the neighbor label with strictly more
  // weight than its own until nothing changes.
  std::map<int, double> support;
  for (int sweep = 0; sweep < std::max(cfg.iterations, 1) * 4; ++sweep) {
    bool changed = false;
    for (int v = 0; v < m; ++v) {
      if (g.adj[v].empty()) continue;
      support.clear();
      for (const auto& [nb, w] : g.adj[v]) support[final_label[nb]] += w;
      const double own = support.count(final_label[v]) ? support[final_label[v]] : 0.0;
      int best = final_label[v];
      double best_w = own;
      for (const auto& [label, w] : support)
        if (w > best_w) {
          best = label;
          best_w = w;
        }
      if (best != final_label[v]) {
        final_label[v] = best;
        changed = true;
      }
    }
    if (!changed) break;
  }
  std::map<int, std::vector<int>> by_label;
  for (int v = 0; v < m; ++v) by_label[final_label[v]].push_back(v);
  std::vector<std::vector<int>> out;
  for (auto& [_, members] : by_label) out.push_back(std::move(members));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return out;
}

// Splits `community` (local ids of g) into consecutive BFS-order chunks of at
// most max_size. BFS roots are picked by descending weighted degree within
// the community, neighbors are visited by descending edge weight; ties go to
// the smaller global index.
inline std::vector<std::vector<int>> bfs_split(const LocalGraph& g, const std::vector<int>& community,
                                               std::size_t max_size) {
  if (max_size < 1) throw Error("invalid_argument", "max_size must be >= 1");
  if (community.size() <= max_size) return {community};

  std::map<int, int> in_comm;  // local id -> position
  for (std::size_t k = 0; k < community.size(); ++k) in_comm[community[k]] = static_cast<int>(k);
  const std::size_t m = community.size();
  std::vector<std::vector<std::pair<int, double>>> adj(m);
  std::vector<double> degree(m, 0.0);
  for (std::size_t k = 0; k < m; ++k)
    for (const auto& [nb, w] : g.adj[community[k]]) {
      auto it = in_comm.find(nb);
      if (it == in_comm.end()) continue;
      adj[k].emplace_back(it->second, w);
      degree[k] += w;
    }
  auto gid = [&](int k) { return g.global[community[k]]; };
  for (auto& nbrs : adj)
    std::sort(nbrs.begin(), nbrs.end(), [&](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : gid(a.first) < gid(b.first);
    });
  std::vector<int> roots(m);
  std::iota(roots.begin(), roots.end(), 0);
  std::sort(roots.begin(), roots.end(), [&](int a, int b) {
    return degree[a] != degree[b] ? degree[a] > degree[b] : gid(a) < gid(b);
  });

  std::vector<char> seen(m, 0);
  std::vector<int> order;
  order.reserve(m);
  std::deque<int> queue;
  for (int root : roots) {
    if (seen[root]) continue;
    seen[root] = 1;
    queue.push_back(root);
    while (!queue.empty()) {
      const int v = queue.front();
      queue.pop_front();
      order.push_back(v);
      for (const auto& [nb, _] : adj[v])
        if (!seen[nb]) {
          seen[nb] = 1;
          queue.push_back(nb);
        }
    }
  }
  std::vector<std::vector<int>> chunks;
  for (std::size_t start = 0; start < order.size(); start += max_size) {
    std::vector<int> chunk;
    for (std::size_t k = start; k < std::min(order.size(), start + max_size); ++k)
      chunk.push_back(community[order[k]]);
    chunks.push_back(std::move(chunk));
  }
  return chunks;
}

namespace detail {

inline std::map<DocId, int> doc_index(const RefinedGraph& refined) {
  std::map<DocId, int> idx;
  for (std::size_t i = 0; i < refined.docs.size(); ++i) idx.emplace(refined.docs[i], static_cast<int>(i));
  return idx;
}

inline std::vector<int> indices_of(const DocSet& docs, const std::map<DocId, int>& idx) {
  std::vector<int> out;
  out.reserve(docs.size());
  for (const auto& d : docs) {
    auto it = idx.find(d);
    if (it == idx.end()) throw Error("not_found", "document not in refined graph: " + d);
    out.push_back(it->second);
  }
  return out;
}

}  // namespace detail

// SLPA then size-capped BFS splitting over one parent's documents.
inline SubClustering subcluster(const GroupId& parent, const DocSet& docs, const RefinedGraph& refined,
                                const std::map<DocId, int>& idx, const SlpaConfig& cfg) {
  SubClustering out{parent, {}};
  if (docs.empty()) return out;
  const LocalGraph g = induced_graph(refined.prob, detail::indices_of(docs, idx), cfg.edge_threshold);
  for (const auto& community : slpa(g, cfg))
    for (const auto& chunk : bfs_split(g, community, cfg.max_size)) {
      DocSet s;
      for (int local : chunk) s.insert(refined.docs[g.global[local]]);
      out.subgroups.push_back(std::move(s));
    }
  return out;
}

inline SubClustering subcluster(const GroupId& parent, const DocSet& docs, const RefinedGraph& refined,
                                const SlpaConfig& cfg) {
  return subcluster(parent, docs, refined, detail::doc_index(refined), cfg);
}

inline std::map<GroupId, SubClustering> subcluster_all(const Assignment& a, const RefinedGraph& refined,
                                                       const SlpaConfig& cfg) {
  const auto idx = detail::doc_index(refined);
  std::map<GroupId, SubClustering> out;
  for (const auto& [id, docs] : a.groups) out.emplace(id, subcluster(id, docs, refined, idx, cfg));
  out.emplace(kUnassignedParent, subcluster(kUnassignedParent, a.unassigned, refined, idx, cfg));
  return out;
}

// Whole-graph clustering for disambiguation quality runs: SLPA with no size cap.
inline std::vector<DocSet> cluster_refined(const RefinedGraph& refined, SlpaConfig cfg) {
  cfg.max_size = std::numeric_limits<std::size_t>::max();
  DocSet all(refined.docs.begin(), refined.docs.end());
  return subcluster("all", all, refined, cfg).subgroups;
}

inline nlohmann::json to_json(const SubClustering& s) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : s.subgroups) groups.push_back(std::vector<DocId>(g.begin(), g.end()));
  return {{"parent", s.parent}, {"subgroups", groups}};
}

inline SubClustering subclustering_from_json(const nlohmann::json& j) {
  SubClustering s;
  s.parent = j.at("parent").get<std::string>();
  for (const auto& g : j.at("subgroups")) {
    auto ids = g.get<std::vector<DocId>>();
    s.subgroups.emplace_back(ids.begin(), ids.end());
  }
  return s;
}

}  // namespace andis
