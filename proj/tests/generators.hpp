#pragma once

// Random inputs shared by unit and acceptance tests.

#include "andis/ops.hpp"

#include <random>

namespace gen {

using namespace andis;

inline DocSet universe(int n) {
  DocSet u;
  for (int i = 0; i < n; ++i) u.insert("d" + std::to_string(i));
  return u;
}

// Each doc lands in one of `groups` groups or (with p_unassigned) the pool.
inline Assignment random_assignment(std::mt19937_64& rng, const DocSet& docs, int groups, double p_unassigned) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Assignment a;
  for (const auto& d : docs) {
    if (groups == 0 || u(rng) < p_unassigned)
      a.unassigned.insert(d);
    else
      a.groups["g" + std::to_string(rng() % groups)].insert(d);
  }
  return a;
}

// Random nonempty subset of `from`; each element kept with probability 1/2.
inline DocSet random_subset(std::mt19937_64& rng, const DocSet& from) {
  std::vector<DocId> items(from.begin(), from.end());
  DocSet out;
  for (const auto& d : items)
    if (rng() & 1) out.insert(d);
  if (out.empty()) out.insert(items[rng() % items.size()]);
  return out;
}

template <class Map>
typename Map::const_iterator pick(std::mt19937_64& rng, const Map& m) {
  auto it = m.begin();
  std::advance(it, static_cast<long>(rng() % m.size()));
  return it;
}

// An operation that is valid on `a`, or nullopt when the drawn kind has no
// legal instance.
inline std::optional<Operation> random_valid_op(std::mt19937_64& rng, const Assignment& a) {
  switch (rng() % 5) {
    case 0: {
      if (a.groups.size() < 2) return std::nullopt;
      auto g1 = pick(rng, a.groups)->first, g2 = pick(rng, a.groups)->first;
      if (g1 == g2) return std::nullopt;
      return Merge{g1, g2};
    }
    case 1: {
      if (a.groups.empty()) return std::nullopt;
      const auto& [g, docs] = *pick(rng, a.groups);
      if (docs.size() < 2) return std::nullopt;
      DocSet s = random_subset(rng, docs);
      if (s.size() == docs.size()) s.erase(s.begin());
      return Separate{g, s};
    }
    case 2:
      if (a.unassigned.empty()) return std::nullopt;
      return Create{random_subset(rng, a.unassigned)};
    case 3:
      if (a.unassigned.empty() || a.groups.empty()) return std::nullopt;
      return Assign{pick(rng, a.groups)->first, random_subset(rng, a.unassigned)};
    default: {
      if (a.groups.empty()) return std::nullopt;
      const auto& [g, docs] = *pick(rng, a.groups);
      return Exclude{g, random_subset(rng, docs)};
    }
  }
}

// Canonical form ignoring group ids.
inline std::set<DocSet> shape(const Assignment& a) {
  std::set<DocSet> s;
  for (const auto& [_, g] : a.groups) s.insert(g);
  return s;
}

}  // namespace gen
