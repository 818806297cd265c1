#pragma once

// Pairwise precision/recall/F1, micro and macro averaging, and the
// annotation-quality ratios.

#include "andis/workflow.hpp"

namespace andis {

struct PairwiseScore {
  double precision = 1.0, recall = 1.0, f1 = 1.0;
  std::uint64_t tp = 0, fp = 0, fn = 0;
};

inline PairwiseScore score_from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  PairwiseScore s;
  s.tp = tp;
  s.fp = fp;
  s.fn = fn;
  s.precision = tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  s.recall = tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  s.f1 = s.precision + s.recall == 0 ? 0.0 : 2 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

// `pred` may omit documents (left unassigned); they form no predicted pairs.
// `truth` must cover the same universe as `universe`.
inline PairwiseScore pairwise_prf(const std::vector<DocSet>& pred, const std::vector<DocSet>& truth,
                                  const DocSet& universe) {
  std::map<DocId, std::size_t> truth_of;
  for (std::size_t k = 0; k < truth.size(); ++k)
    for (const auto& d : truth[k]) {
      if (!universe.count(d)) throw Error("universe_mismatch", "truth has unknown document " + d);
      if (!truth_of.emplace(d, k).second) throw Error("universe_mismatch", "document twice in truth: " + d);
    }
  if (truth_of.size() != universe.size()) throw Error("universe_mismatch", "truth does not cover every document");

  // contingency counts: pairs inside a predicted cluster split by truth label
  std::uint64_t pred_pairs = 0, truth_pairs = 0, tp = 0;
  DocSet seen;
  for (const auto& c : pred) {
    std::map<std::size_t, std::uint64_t> cell;
    for (const auto& d : c) {
      auto it = truth_of.find(d);
      if (it == truth_of.end()) throw Error("universe_mismatch", "prediction has unknown document " + d);
      if (!seen.insert(d).second) throw Error("universe_mismatch", "document twice in prediction: " + d);
      ++cell[it->second];
    }
    const std::uint64_t n = c.size();
    pred_pairs += n * (n - 1) / 2;
    for (const auto& [_, m] : cell) tp += m * (m - 1) / 2;
  }
  for (const auto& c : truth) {
    const std::uint64_t n = c.size();
    truth_pairs += n * (n - 1) / 2;
  }
  return score_from_counts(tp, pred_pairs - tp, truth_pairs - tp);
}

inline std::vector<DocSet> groups_of(const Assignment& a) {
  std::vector<DocSet> out;
  for (const auto& [_, g] : a.groups) out.push_back(g);
  return out;
}

inline PairwiseScore pairwise_prf(const Assignment& pred, const GroundTruth& truth) {
  DocSet universe;
  for (const auto& [d, _] : truth.identity) universe.insert(d);
  return pairwise_prf(groups_of(pred), truth.partition(), universe);
}

struct Averages {
  PairwiseScore micro, macro;
};

inline Averages micro_macro(const std::vector<PairwiseScore>& per_name) {
  if (per_name.empty()) throw Error("invalid_argument", "averaging needs at least one name");
  std::uint64_t tp = 0, fp = 0, fn = 0;
  PairwiseScore macro;
  macro.precision = macro.recall = macro.f1 = 0.0;
  for (const auto& s : per_name) {
    tp += s.tp;
    fp += s.fp;
    fn += s.fn;
    macro.precision += s.precision;
    macro.recall += s.recall;
    macro.f1 += s.f1;
  }
  const double n = static_cast<double>(per_name.size());
  macro.precision /= n;
  macro.recall /= n;
  macro.f1 /= n;
  macro.tp = tp;
  macro.fp = fp;
  macro.fn = fn;
  return {score_from_counts(tp, fp, fn), macro};
}

inline double excluding_ratio(std::uint64_t excluded, std::uint64_t remaining) {
  if (excluded + remaining == 0) throw Error("invalid_argument", "excluding ratio of an empty set");
  return static_cast<double>(excluded) / static_cast<double>(excluded + remaining);
}

// C / N^2 with the literal N^2 denominator; 0 when N = 0.
inline double conflict_pair_ratio(std::uint64_t common, std::uint64_t conflicts) {
  if (conflicts > common * (common - 1) / 2)
    throw Error("invalid_argument", "more conflict pairs than document pairs");
  if (common == 0) return 0.0;
  return static_cast<double>(conflicts) / (static_cast<double>(common) * static_cast<double>(common));
}

inline double conflict_pair_ratio(const std::vector<ConflictStats>& pairs) {
  if (pairs.empty()) return 0.0;
  double s = 0.0;
  for (const auto& p : pairs) s += conflict_pair_ratio(p.common, p.conflicts);
  return s / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------------------
// Report

struct NameRow {
  std::string name;
  std::size_t size = 0;
  PairwiseScore score;
};

inline nlohmann::json to_json(const PairwiseScore& s) {
  return {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1},
          {"tp", s.tp},               {"fp", s.fp},         {"fn", s.fn}};
}

inline nlohmann::json evaluation_report(const std::string& strategy, const std::vector<NameRow>& rows) {
  nlohmann::json names = nlohmann::json::array();
  std::vector<PairwiseScore> scores;
  for (const auto& r : rows) {
    auto j = to_json(r.score);
    j["name"] = r.name;
    j["size"] = r.size;
    names.push_back(j);
    scores.push_back(r.score);
  }
  nlohmann::json out{{"strategy", strategy}, {"names", names}};
  if (!scores.empty()) {
    const auto avg = micro_macro(scores);
    out["micro"] = to_json(avg.micro);
    out["macro"] = to_json(avg.macro);
  }
  return out;
}

}  // namespace andis
