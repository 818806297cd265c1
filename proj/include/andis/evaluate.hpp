#pragma once

// Whole-name disambiguation runs: refine, cluster, score against truth.

#include "andis/metrics.hpp"
#include "andis/subcluster.hpp"

namespace andis {

inline std::vector<double> default_threshold_grid() {
  std::vector<double> g;
  for (int k = 10; k <= 19; ++k) g.push_back(k / 20.0);
  g.push_back(0.97);
  g.push_back(0.99);
  return g;
}

inline PairwiseScore score_refined(const RefinedGraph& r, const std::vector<DocSet>& truth, const SlpaConfig& cfg) {
  return pairwise_prf(cluster_refined(r, cfg), truth, DocSet(r.docs.begin(), r.docs.end()));
}

// Edge threshold with the best micro F1 over the given names; ties keep the
// smaller threshold. Refinement runs once per name.
inline double select_edge_threshold(const RefineStrategy& strategy, const std::vector<TrainingExample>& names,
                                    SlpaConfig cfg, const std::vector<double>& grid = default_threshold_grid()) {
  if (names.empty() || grid.empty()) throw Error("invalid_argument", "threshold selection needs names and a grid");
  std::vector<RefinedGraph> refined;
  for (const auto& n : names) refined.push_back(refine(n.graphs, strategy));
  double best_t = grid.front(), best_f = -1.0;
  for (double t : grid) {
    cfg.edge_threshold = t;
    std::vector<PairwiseScore> scores;
    for (std::size_t i = 0; i < names.size(); ++i) scores.push_back(score_refined(refined[i], names[i].truth, cfg));
    const double f = micro_macro(scores).micro.f1;
    if (f > best_f) {
      best_f = f;
      best_t = t;
    }
  }
  return best_t;
}

inline std::vector<NameRow> evaluate_names(const RefineStrategy& strategy, const std::vector<TrainingExample>& names,
                                           const SlpaConfig& cfg) {
  std::vector<NameRow> rows;
  for (const auto& n : names)
    rows.push_back({n.name, n.graphs.size(), score_refined(refine(n.graphs, strategy), n.truth, cfg)});
  return rows;
}

inline TrainingExample labelled_example(const Corpus& c) {
  if (!c.truth) throw Error("invalid_argument", "name '" + c.name_ref + "' has no ground truth");
  return {c.name_ref, build_graphs(c.docs), c.truth->partition()};
}

}  // namespace andis
