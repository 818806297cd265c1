#pragma once

// Synthetic names with planted authors, and scripted noisy annotators that
// drive the workflow end to end.

#include "andis/metrics.hpp"

#include <random>

namespace andis {

struct SynthConfig {
  std::string name_ref = "synthetic";
  int min_authors = 20, max_authors = 20;
  int min_docs = 15, max_docs = 35;  // per author
  int authors_per_topic = 5;         // topic-mates share venue/title/keyword vocabularies

  // vocabulary sizes
  int coauthor_pool = 6;       // per author
  int min_coauthors = 2, max_coauthors = 4;  // per document
  int topic_title_words = 30;  // per topic
  int topic_keywords = 20;     // per topic
  int topic_venues = 3;
  int topic_orgs = 4;
  int global_words = 400;

  double p_token_noise = 0.1;       // any token replaced by a random global word
  double p_coauthor_overlap = 0.1;  // coauthor drawn from a topic-mate's pool
  double p_home_org = 0.7;

  // initial assignment noise
  double p_unassigned = 0.1;
  double p_over_partition = 0.2;
  double p_over_merge = 0.2;
  double p_misassign = 0.03;

  std::uint64_t seed = 1;
};

namespace detail {

inline void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error("invalid_config", std::string(what) + " must be in [0,1]");
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline bool coin(std::mt19937_64& rng, double p) { return std::uniform_real_distribution<double>(0, 1)(rng) < p; }

}  // namespace detail

inline void validate(const SynthConfig& c) {
  for (auto [p, what] : {std::pair{c.p_token_noise, "p_token_noise"}, {c.p_coauthor_overlap, "p_coauthor_overlap"},
                         {c.p_unassigned, "p_unassigned"}, {c.p_over_partition, "p_over_partition"},
                         {c.p_over_merge, "p_over_merge"}, {c.p_misassign, "p_misassign"},
                         {c.p_home_org, "p_home_org"}})
    detail::check_probability(p, what);
  if (c.min_authors < 1 || c.max_authors < c.min_authors || c.min_docs < 1 || c.max_docs < c.min_docs ||
      c.authors_per_topic < 1 || c.coauthor_pool < 1 || c.min_coauthors < 0 || c.max_coauthors < c.min_coauthors ||
      c.topic_title_words < 1 || c.topic_keywords < 1 || c.topic_venues < 1 || c.topic_orgs < 1 ||
      c.global_words < 1)
    throw Error("invalid_config", "bad ranges or vocabulary sizes");
}

// Zero noise knobs: initial assignment equals the truth partition.
inline SynthConfig noiseless(SynthConfig c) {
  c.p_unassigned = c.p_over_partition = c.p_over_merge = c.p_misassign = 0.0;
  return c;
}

inline Corpus generate_corpus(const SynthConfig& cfg) {
  validate(cfg);
  std::mt19937_64 rng(cfg.seed);
  using detail::coin;
  using detail::uniform_int;
  auto word = [](const std::string& p, int a, int b) { return p + std::to_string(a) + "x" + std::to_string(b); };
  auto global = [&] { return "w" + std::to_string(uniform_int(rng, 0, cfg.global_words - 1)); };
  auto noisy = [&](std::string t) { return coin(rng, cfg.p_token_noise) ? global() : t; };

  const int authors = uniform_int(rng, cfg.min_authors, cfg.max_authors);
  Corpus c;
  c.name_ref = cfg.name_ref;
  GroundTruth truth;
  std::vector<std::vector<DocId>> owned(authors);
  int serial = 0;
  for (int a = 0; a < authors; ++a) {
    const int topic = a / cfg.authors_per_topic;
    const int home_org = uniform_int(rng, 0, cfg.topic_orgs - 1);
    const int n = uniform_int(rng, cfg.min_docs, cfg.max_docs);
    for (int k = 0; k < n; ++k) {
      Document d;
      char id[32];
      std::snprintf(id, sizeof id, "%s-%05d", cfg.name_ref.c_str(), serial++);
      d.doc_id = id;
      d.name_ref = cfg.name_ref;
      const int nco = uniform_int(rng, cfg.min_coauthors, cfg.max_coauthors);
      for (int i = 0; i < nco; ++i) {
        int owner = a;
        if (coin(rng, cfg.p_coauthor_overlap)) {
          const int lo = topic * cfg.authors_per_topic;
          owner = std::min(authors - 1, lo + uniform_int(rng, 0, cfg.authors_per_topic - 1));
        }
        d.coauthors.push_back(noisy(word("coauthor ", owner, uniform_int(rng, 0, cfg.coauthor_pool - 1))));
      }
      for (int i = 0; i < 6; ++i)
        d.title_tokens.push_back(
            i < 4 ? noisy(word("t", topic, uniform_int(rng, 0, cfg.topic_title_words - 1))) : global());
      const int venue = uniform_int(rng, 0, cfg.topic_venues - 1);
      d.venue_tokens = {noisy(word("journal", topic, venue)), noisy(word("series", topic, venue))};
      const int org = coin(rng, cfg.p_home_org) ? home_org : uniform_int(rng, 0, cfg.topic_orgs - 1);
      d.org_tokens = {noisy(word("univ", topic, org)), "department"};
      for (int i = 0; i < 3; ++i)
        d.keywords.push_back(noisy(word("kw ", topic, uniform_int(rng, 0, cfg.topic_keywords - 1))));
      d.year = 2000 + uniform_int(rng, 0, 20);
      c.docs.push_back(normalize_document(d));
      truth.identity[c.docs.back().doc_id] = "p" + std::to_string(a);
      owned[a].push_back(c.docs.back().doc_id);
    }
  }

  // initial assignment: one group per author, then noise
  std::vector<DocSet> groups;
  Assignment& asg = c.assignment;
  for (int a = 0; a < authors; ++a) {
    DocSet kept;
    for (const auto& d : owned[a]) (coin(rng, cfg.p_unassigned) ? asg.unassigned : kept).insert(d);
    if (kept.size() >= 2 && coin(rng, cfg.p_over_partition)) {
      DocSet other;
      for (auto it = kept.begin(); it != kept.end();)
        if (coin(rng, 0.5) && kept.size() > 1) {
          other.insert(*it);
          it = kept.erase(it);
        } else {
          ++it;
        }
      if (!other.empty()) groups.push_back(other);
    }
    if (!kept.empty()) groups.push_back(kept);
  }
  if (groups.size() >= 2) {
    const std::size_t initial = groups.size();
    std::vector<char> gone(initial, 0);
    for (std::size_t g = 0; g < initial; ++g) {
      if (gone[g] || !coin(rng, cfg.p_over_merge)) continue;
      const std::size_t into = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(initial) - 1));
      if (into == g || gone[into]) continue;
      groups[into].insert(groups[g].begin(), groups[g].end());
      groups[g].clear();
      gone[g] = 1;
    }
    std::vector<DocSet> live;
    for (auto& g : groups)
      if (!g.empty()) live.push_back(std::move(g));
    groups = std::move(live);
    for (std::size_t g = 0; g < groups.size() && groups.size() >= 2; ++g)
      for (auto it = groups[g].begin(); it != groups[g].end();) {
        if (groups[g].size() > 1 && coin(rng, cfg.p_misassign)) {
          std::size_t to = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(groups.size()) - 2));
          if (to >= g) ++to;
          groups[to].insert(*it);
          it = groups[g].erase(it);
        } else {
          ++it;
        }
      }
  }
  // stable ids by smallest member
  std::sort(groups.begin(), groups.end(), [](const DocSet& a, const DocSet& b) { return *a.begin() < *b.begin(); });
  for (std::size_t g = 0; g < groups.size(); ++g) asg.groups["g" + std::to_string(g + 1)] = groups[g];
  c.truth = std::move(truth);
  return c;
}

// ---------------------------------------------------------------------------
// Annotators

struct AnnotatorModel {
  double p_wrong_exclude = 0.02;  // a correctly placed doc is excluded
  double p_miss_exclude = 0.1;    // a misplaced doc is kept; also a correct merge pair is missed
  double p_wrong_assign = 0.1;    // an unassigned doc goes to a wrong group; also a spurious merge pair
  double p_split_create = 0.1;    // a created set is split in two
  std::uint64_t seed = 0;
};

inline AnnotatorModel perfect_annotator(std::uint64_t seed = 0) {
  AnnotatorModel m;
  m.p_wrong_exclude = m.p_miss_exclude = m.p_wrong_assign = m.p_split_create = 0.0;
  m.seed = seed;
  return m;
}

namespace detail {

// Person holding the most docs of `g`; ties go to the smaller person id.
inline std::string majority_person(const DocSet& g, const GroundTruth& truth) {
  std::map<std::string, int> count;
  for (const auto& d : g) ++count[truth.person(d)];
  std::string best;
  int best_n = -1;
  for (const auto& [p, n] : count)
    if (n > best_n) {
      best = p;
      best_n = n;
    }
  return best;
}

// Group per person that unassigned docs should join: the one where the person
// is the majority, largest first, smaller id on ties.
inline std::map<std::string, GroupId> home_groups(const Assignment& a, const GroundTruth& truth) {
  std::map<std::string, std::pair<std::size_t, GroupId>> best;
  for (const auto& [id, g] : a.groups) {
    const auto p = majority_person(g, truth);
    auto it = best.find(p);
    if (it == best.end() || g.size() > it->second.first) best[p] = {g.size(), id};
  }
  std::map<std::string, GroupId> out;
  for (const auto& [p, v] : best) out[p] = v.second;
  return out;
}

}  // namespace detail

// Truth-guided submission corrupted by the model's error rates. `rng` carries
// the annotator's state across stages.
inline Submission simulate_annotator(const GroundTruth& truth, const Assignment& snapshot, Stage stage,
                                     const AnnotatorModel& model, const std::string& annotator,
                                     std::mt19937_64& rng) {
  using detail::coin;
  Submission s;
  s.annotator = annotator;
  s.stage = stage;
  switch (stage) {
    case Stage::Cleaning: {
      // minority persons are separated out as their own groups
      for (const auto& [id, g] : snapshot.groups) {
        const auto major = detail::majority_person(g, truth);
        std::map<std::string, DocSet> minority;
        DocSet wrongly;
        for (const auto& d : g) {
          const auto& p = truth.person(d);
          if (p != major && !coin(rng, model.p_miss_exclude))
            minority[p].insert(d);
          else if (p == major && coin(rng, model.p_wrong_exclude))
            wrongly.insert(d);
        }
        std::size_t removed = wrongly.size();
        for (const auto& [_, docs] : minority) removed += docs.size();
        if (removed >= g.size()) continue;  // would empty the group; leave it
        for (const auto& [_, docs] : minority) s.ops.push_back(Separate{id, docs});
        if (!wrongly.empty()) s.ops.push_back(Exclude{id, wrongly});
      }
      break;
    }
    case Stage::Verifying:
      for (const auto& [id, g] : snapshot.groups) {
        const auto major = detail::majority_person(g, truth);
        DocSet out;
        for (const auto& d : g) {
          const bool misplaced = truth.person(d) != major;
          if (misplaced ? !coin(rng, model.p_miss_exclude) : coin(rng, model.p_wrong_exclude)) out.insert(d);
        }
        if (!out.empty()) s.excluded[id] = out;
      }
      break;
    case Stage::Adding: {
      const auto home = detail::home_groups(snapshot, truth);
      std::vector<GroupId> ids;
      for (const auto& [id, _] : snapshot.groups) ids.push_back(id);
      std::map<std::string, DocSet> orphans;
      for (const auto& d : snapshot.unassigned) {
        const auto& p = truth.person(d);
        auto it = home.find(p);
        std::vector<GroupId> wrong;
        for (const auto& id : ids)
          if (it == home.end() || id != it->second) wrong.push_back(id);
        if (!wrong.empty() && coin(rng, model.p_wrong_assign)) {
          s.assigned[wrong[rng() % wrong.size()]].insert(d);
        } else if (it != home.end()) {
          s.assigned[it->second].insert(d);
        } else {
          orphans[p].insert(d);
        }
      }
      for (auto& [_, docs] : orphans) {
        if (docs.size() >= 2 && coin(rng, model.p_split_create)) {
          DocSet half;
          for (auto it = docs.begin(); it != docs.end();)
            if (half.size() + 1 < docs.size() && coin(rng, 0.5)) {
              half.insert(*it);
              it = docs.erase(it);
            } else {
              ++it;
            }
          if (!half.empty()) s.created.push_back(half);
        }
        s.created.push_back(docs);
      }
      break;
    }
    case Stage::Merging: {
      std::vector<std::pair<GroupId, std::string>> owner;
      for (const auto& [id, g] : snapshot.groups) owner.emplace_back(id, detail::majority_person(g, truth));
      for (std::size_t i = 0; i < owner.size(); ++i)
        for (std::size_t j = i + 1; j < owner.size(); ++j) {
          if (owner[i].second == owner[j].second && !coin(rng, model.p_miss_exclude))
            s.merges.insert(ordered_pair(owner[i].first, owner[j].first));
        }
      for (std::size_t i = 0; i < owner.size() && owner.size() > 1; ++i)
        if (coin(rng, model.p_wrong_assign)) {
          const auto& other = owner[rng() % owner.size()];
          if (other.second != owner[i].second) s.merges.insert(ordered_pair(owner[i].first, other.first));
        }
      break;
    }
    case Stage::Final: throw Error("invalid_stage", "nothing to simulate after the final stage");
  }
  return s;
}

// Applies one annotator's submission on its own, without voting.
inline Assignment apply_alone(const Submission& s, const Assignment& snapshot) {
  Assignment a = snapshot;
  switch (s.stage) {
    case Stage::Cleaning:
      for (const auto& op : s.ops) a = apply_op(a, op);
      break;
    case Stage::Verifying:
      for (const auto& [g, docs] : s.excluded) a = apply_exclude(a, g, docs);
      break;
    case Stage::Adding:
      for (const auto& [g, docs] : s.assigned) a = apply_assign(a, g, docs);
      for (const auto& c : s.created) a = apply_create(a, c);
      break;
    case Stage::Merging: {
      std::vector<Submission> one{s};
      for (const auto& ids : vote_merge(one, 1)) {
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
    }
    case Stage::Final: break;
  }
  return a;
}

// ---------------------------------------------------------------------------
// End-to-end simulation

struct SimulationResult {
  Assignment final_assignment;
  PairwiseScore aggregated;
  std::vector<PairwiseScore> solo;  // each annotator's own chain after cleaning
  std::vector<double> excluding_ratios;  // per group of the Verifying snapshot
  double cpr = 0.0;
  PairwiseScore initial;
};

inline SimulationResult simulate_workflow(const Corpus& corpus, const std::vector<AnnotatorModel>& annotators,
                                          const AnnotatorModel& cleaner) {
  if (!corpus.truth) throw Error("invalid_argument", "simulation needs ground truth");
  if (annotators.empty()) throw Error("invalid_argument", "simulation needs annotators");
  const GroundTruth& truth = *corpus.truth;
  const int k = static_cast<int>(annotators.size());
  std::vector<std::string> names;
  std::vector<std::mt19937_64> rngs;
  for (int i = 0; i < k; ++i) {
    names.push_back("sim" + std::to_string(i + 1));
    rngs.emplace_back(mix_seed(annotators[i].seed, static_cast<std::uint64_t>(i)));
  }
  std::mt19937_64 cleaner_rng(mix_seed(cleaner.seed, 0xc1ea));

  SimulationResult out;
  out.initial = pairwise_prf(corpus.assignment, truth);
  WorkflowState st;
  st.name_ref = corpus.name_ref;
  st.k = k;
  st.snapshot = corpus.assignment;
  add_submission(st, simulate_annotator(truth, st.snapshot, Stage::Cleaning, cleaner, "cleaner", cleaner_rng));
  st = advance_stage(st);

  const Assignment after_cleaning = st.snapshot;
  std::vector<Assignment> solo(k, after_cleaning);
  while (st.stage != Stage::Final) {
    std::vector<Submission> subs;
    for (int i = 0; i < k; ++i) {
      subs.push_back(simulate_annotator(truth, st.snapshot, st.stage, annotators[i], names[i], rngs[i]));
      add_submission(st, subs.back());
      // solo chains use their own snapshot and an independent stream
      std::mt19937_64 solo_rng(mix_seed(annotators[i].seed, 1000 + static_cast<std::uint64_t>(st.stage) * 31 + i));
      solo[i] = apply_alone(simulate_annotator(truth, solo[i], st.stage, annotators[i], names[i], solo_rng), solo[i]);
    }
    if (st.stage == Stage::Verifying) {
      const auto excluded = vote_verifying(subs);
      for (const auto& [id, g] : st.snapshot.groups) {
        auto it = excluded.find(id);
        const std::size_t e = it == excluded.end() ? 0 : it->second.size();
        out.excluding_ratios.push_back(excluding_ratio(e, g.size() - e));
      }
    }
    if (st.stage == Stage::Adding) out.cpr = conflict_pair_ratio(conflict_stats(subs));
    st = advance_stage(st);
  }
  out.final_assignment = st.snapshot;
  out.aggregated = pairwise_prf(st.snapshot, truth);
  for (const auto& a : solo) out.solo.push_back(pairwise_prf(a, truth));
  return out;
}

inline nlohmann::json to_json(const SimulationResult& r) {
  nlohmann::json solo = nlohmann::json::array();
  for (const auto& s : r.solo) solo.push_back(to_json(s));
  double er = 0.0;
  for (double x : r.excluding_ratios) er += x;
  if (!r.excluding_ratios.empty()) er /= static_cast<double>(r.excluding_ratios.size());
  return {{"initial", to_json(r.initial)}, {"aggregated", to_json(r.aggregated)}, {"solo", solo},
          {"mean_excluding_ratio", er},    {"cpr", r.cpr}};
}

}  // namespace andis
