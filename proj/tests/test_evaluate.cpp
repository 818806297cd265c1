#include "andis/evaluate.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace andis;

namespace {

std::shared_ptr<const GnnModel> untrained(std::uint64_t seed) {
  GnnConfig c;
  c.input_dim = c.hidden_dim = c.output_dim = 4;
  c.decoder_hidden = 6;
  c.seed = seed;
  return std::make_shared<GnnModel>(GnnModel::init(c));
}

}  // namespace

TEST(SelectThreshold, MatchesGridScan) {
  std::vector<TrainingExample> names{oracle::planted_example("a", 3, 5, 1), oracle::planted_example("b", 4, 4, 2)};
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const GnnStrategy s{untrained(seed), seed, DecoderMode::full};
    const std::vector<double> grid{0.3, 0.45, 0.5, 0.55, 0.7, 0.9};
    double want = grid.front(), best = -1;
    for (double t : grid) {
      std::uint64_t tp = 0, fp = 0, fn = 0;
      for (const auto& n : names) {
        SlpaConfig cfg;
        cfg.edge_threshold = t;
        auto pred = cluster_refined(gnn_refine(n.graphs, *s.model, seed), cfg);
        auto sc = pairwise_prf(pred, n.truth, DocSet(n.graphs.docs.begin(), n.graphs.docs.end()));
        tp += sc.tp;
        fp += sc.fp;
        fn += sc.fn;
      }
      const double f = score_from_counts(tp, fp, fn).f1;
      if (f > best) {
        best = f;
        want = t;
      }
    }
    EXPECT_EQ(select_edge_threshold(s, names, SlpaConfig{}, grid), want) << seed;
  }
}

TEST(SelectThreshold, RejectsEmptyInput) {
  EXPECT_THROW(select_edge_threshold(BaselineStrategy{}, {}, SlpaConfig{}), Error);
  std::vector<TrainingExample> one{oracle::planted_example("a", 2, 3, 1)};
  EXPECT_THROW(select_edge_threshold(BaselineStrategy{}, one, SlpaConfig{}, {}), Error);
}

TEST(EvaluateNames, RowsPerName) {
  std::vector<TrainingExample> names{oracle::planted_example("a", 3, 5, 1), oracle::planted_example("b", 2, 6, 2)};
  auto rows = evaluate_names(BaselineStrategy{}, names, SlpaConfig{});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].name, "a");
  EXPECT_EQ(rows[0].size, 15u);
  EXPECT_EQ(rows[1].size, 12u);
  for (const auto& r : rows) EXPECT_EQ(r.score.tp + r.score.fn, 30u);  // 3 x C(5,2) and 2 x C(6,2)
}

TEST(GridDefault, SortedAndInRange) {
  auto g = default_threshold_grid();
  EXPECT_EQ(g.front(), 0.5);
  EXPECT_TRUE(std::is_sorted(g.begin(), g.end()));
  EXPECT_LT(g.back(), 1.0);
}
