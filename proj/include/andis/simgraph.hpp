#pragma once

// Per-attribute similarity graphs over a document set, adaptive pruning and
// row normalization, plus the WSG1 binary container used by the cache.

#include "andis/corpus.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <unordered_map>

namespace andis {

enum class AttributeKind : std::uint8_t { coauthors = 0, title, venue, org, keywords };

inline constexpr std::size_t kAttributeCount = 5;
inline constexpr std::array<AttributeKind, kAttributeCount> kAttributes = {
    AttributeKind::coauthors, AttributeKind::title, AttributeKind::venue, AttributeKind::org,
    AttributeKind::keywords};

inline const char* to_string(AttributeKind a) {
  switch (a) {
    case AttributeKind::coauthors: return "coauthors";
    case AttributeKind::title: return "title";
    case AttributeKind::venue: return "venue";
    case AttributeKind::org: return "org";
    case AttributeKind::keywords: return "keywords";
  }
  return "?";
}

inline AttributeKind parse_attribute(std::string_view s) {
  for (auto a : kAttributes)
    if (s == to_string(a)) return a;
  throw Error("bad_request", "unknown attribute: " + std::string(s));
}

inline const std::vector<std::string>& tokens_of(const Document& d, AttributeKind a) {
  switch (a) {
    case AttributeKind::coauthors: return d.coauthors;
    case AttributeKind::title: return d.title_tokens;
    case AttributeKind::venue: return d.venue_tokens;
    case AttributeKind::org: return d.org_tokens;
    case AttributeKind::keywords: return d.keywords;
  }
  throw Error("internal", "bad attribute");
}

using IdfMap = std::unordered_map<std::string, double>;

// weight(t) = ln(N / df(t)), df counted over distinct tokens per document.
inline IdfMap idf_weights(const std::vector<Document>& docs, AttributeKind attr) {
  if (docs.empty()) throw Error("invalid_argument", "idf over an empty document set");
  std::unordered_map<std::string, std::size_t> df;
  for (const auto& d : docs) {
    std::set<std::string> uniq(tokens_of(d, attr).begin(), tokens_of(d, attr).end());
    for (const auto& t : uniq) ++df[t];
  }
  IdfMap w;
  const double n = static_cast<double>(docs.size());
  for (const auto& [t, c] : df) w[t] = std::log(n / static_cast<double>(c));
  return w;
}

// Sum of IDF weights over shared distinct tokens, accumulated in
// lexicographic token order so every caller sees the same rounding.
inline double attribute_similarity(const Document& a, const Document& b, AttributeKind attr,
                                   const IdfMap& weights) {
  std::set<std::string> ta(tokens_of(a, attr).begin(), tokens_of(a, attr).end());
  std::set<std::string> tb(tokens_of(b, attr).begin(), tokens_of(b, attr).end());
  double s = 0.0;
  auto ia = ta.begin();
  auto ib = tb.begin();
  while (ia != ta.end() && ib != tb.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      auto w = weights.find(*ia);
      if (w != weights.end()) s += w->second;
      ++ia;
      ++ib;
    }
  }
  return s;
}

struct SimilarityGraphSet {
  std::vector<DocId> docs;
  std::array<Matrix, kAttributeCount> matrices;

  std::size_t size() const { return docs.size(); }
  const Matrix& operator[](AttributeKind a) const { return matrices[static_cast<std::size_t>(a)]; }
  Matrix& operator[](AttributeKind a) { return matrices[static_cast<std::size_t>(a)]; }

  bool operator==(const SimilarityGraphSet& o) const {
    if (docs != o.docs) return false;
    for (std::size_t i = 0; i < kAttributeCount; ++i)
      if (matrices[i] != o.matrices[i]) return false;
    return true;
  }
};

// Pluggable per-attribute similarity. Receives the documents and the index
// pair; must be symmetric and nonnegative.
using SimilarityFn = std::function<double(const Document&, const Document&, AttributeKind)>;

struct GraphOptions {
  std::size_t max_docs = 8000;
};

namespace detail {

// Tokens interned to ids that follow lexicographic order, so a merge over
// sorted id lists visits shared tokens in the same order as
// attribute_similarity does.
struct EncodedAttribute {
  std::vector<std::vector<std::uint32_t>> doc_tokens;
  std::vector<double> weight;
};

inline EncodedAttribute encode_attribute(const std::vector<Document>& docs, AttributeKind attr) {
  std::set<std::string> vocab;
  for (const auto& d : docs) vocab.insert(tokens_of(d, attr).begin(), tokens_of(d, attr).end());
  std::unordered_map<std::string, std::uint32_t> id;
  id.reserve(vocab.size());
  for (const auto& t : vocab) id.emplace(t, static_cast<std::uint32_t>(id.size()));

  EncodedAttribute enc;
  enc.doc_tokens.resize(docs.size());
  std::vector<std::uint32_t> df(vocab.size(), 0);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    auto& v = enc.doc_tokens[i];
    for (const auto& t : tokens_of(docs[i], attr)) v.push_back(id.at(t));
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    for (auto t : v) ++df[t];
  }
  const double n = static_cast<double>(docs.size());
  enc.weight.resize(vocab.size());
  for (std::size_t t = 0; t < df.size(); ++t)
    enc.weight[t] = std::log(n / static_cast<double>(df[t]));
  return enc;
}

inline double shared_weight(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b,
                            const std::vector<double>& w) {
  double s = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) {
      ++i;
    } else if (b[j] < a[i]) {
      ++j;
    } else {
      s += w[a[i]];
      ++i;
      ++j;
    }
  }
  return s;
}

inline void check_graph_input(const std::vector<Document>& docs, const GraphOptions& opt) {
  if (docs.size() < 2) throw Error("invalid_argument", "similarity graphs need at least 2 documents");
  if (docs.size() > opt.max_docs)
    throw Error("too_large", std::to_string(docs.size()) + " documents exceeds limit of " +
                                 std::to_string(opt.max_docs));
}

}  // namespace detail

// IDF similarity graphs, one dense symmetric matrix per attribute.
inline SimilarityGraphSet build_graphs(const std::vector<Document>& docs,
                                       const GraphOptions& opt = {}) {
  detail::check_graph_input(docs, opt);
  const auto n = static_cast<Eigen::Index>(docs.size());
  SimilarityGraphSet g;
  for (const auto& d : docs) g.docs.push_back(d.doc_id);
  for (auto attr : kAttributes) {
    auto enc = detail::encode_attribute(docs, attr);
    Matrix m = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        double s = detail::shared_weight(enc.doc_tokens[i], enc.doc_tokens[j], enc.weight);
        m(i, j) = s;
        m(j, i) = s;
      }
    }
    g[attr] = std::move(m);
  }
  return g;
}

inline SimilarityGraphSet build_graphs(const std::vector<Document>& docs, const SimilarityFn& sim,
                                       const GraphOptions& opt = {}) {
  detail::check_graph_input(docs, opt);
  const auto n = static_cast<Eigen::Index>(docs.size());
  SimilarityGraphSet g;
  for (const auto& d : docs) g.docs.push_back(d.doc_id);
  for (auto attr : kAttributes) {
    Matrix m = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) {
        double s = sim(docs[i], docs[j], attr);
        if (!(s >= 0.0)) throw Error("invalid_argument", "similarity must be nonnegative");
        m(i, j) = m(j, i) = s;
      }
    g[attr] = std::move(m);
  }
  return g;
}

// Row-mean thresholding followed by symmetrization. Loops are kept scalar and
// in index order; the result is reproducible to the bit.
inline Matrix prune(const Matrix& raw) {
  if (raw.rows() != raw.cols()) throw Error("invalid_argument", "prune expects a square matrix");
  const Eigen::Index n = raw.rows();
  Matrix kept(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (raw(i, j) < 0.0) throw Error("invalid_argument", "prune input has a negative entry");
      sum += raw(i, j);
    }
    const double threshold = sum / static_cast<double>(n);
    for (Eigen::Index j = 0; j < n; ++j) kept(i, j) = raw(i, j) < threshold ? 0.0 : raw(i, j);
  }
  Matrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) out(i, j) = (kept(i, j) + kept(j, i)) / 2.0;
  return out;
}

inline Matrix row_normalize(const Matrix& a) {
  Matrix out = a;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < a.cols(); ++j) sum += a(i, j);
    if (sum > 0.0)
      for (Eigen::Index j = 0; j < a.cols(); ++j) out(i, j) = a(i, j) / sum;
  }
  return out;
}

// ---------------------------------------------------------------------------
// WSG1: "WSG1" | N u32 | attr count u8 | attr tags u8... | row-major f64 per attr

inline constexpr std::uint8_t kRefinedTag = 0xff;

inline std::string encode_matrices(const std::vector<std::pair<std::uint8_t, const Matrix*>>& mats,
                                   std::uint32_t n) {
  std::string out = "WSG1";
  bin::put_u32(out, n);
  bin::put_u8(out, static_cast<std::uint8_t>(mats.size()));
  for (const auto& [tag, _] : mats) bin::put_u8(out, tag);
  out.reserve(out.size() + mats.size() * std::size_t{n} * n * 8);
  for (const auto& [_, m] : mats)
    for (std::uint32_t i = 0; i < n; ++i)
      for (std::uint32_t j = 0; j < n; ++j) bin::put_f64(out, (*m)(i, j));
  return out;
}

inline std::vector<std::pair<std::uint8_t, Matrix>> decode_matrices(std::string_view data) {
  bin::Reader r(data);
  if (r.bytes(4) != "WSG1") throw Error("format_error", "bad WSG1 magic");
  const std::uint32_t n = r.u32();
  const std::uint8_t count = r.u8();
  std::vector<std::pair<std::uint8_t, Matrix>> out;
  for (std::uint8_t k = 0; k < count; ++k) out.emplace_back(r.u8(), Matrix(n, n));
  for (auto& [_, m] : out)
    for (std::uint32_t i = 0; i < n; ++i)
      for (std::uint32_t j = 0; j < n; ++j) m(i, j) = r.f64();
  if (!r.done()) throw Error("format_error", "trailing bytes after WSG1 payload");
  return out;
}

inline std::string serialize_graphs(const SimilarityGraphSet& g) {
  std::vector<std::pair<std::uint8_t, const Matrix*>> mats;
  for (auto a : kAttributes) mats.emplace_back(static_cast<std::uint8_t>(a), &g[a]);
  return encode_matrices(mats, static_cast<std::uint32_t>(g.size()));
}

// Doc ids are not part of the binary payload; the caller supplies the order.
inline SimilarityGraphSet deserialize_graphs(std::string_view data, std::vector<DocId> docs) {
  auto mats = decode_matrices(data);
  SimilarityGraphSet g;
  g.docs = std::move(docs);
  std::array<bool, kAttributeCount> seen{};
  for (auto& [tag, m] : mats) {
    if (tag >= kAttributeCount) throw Error("format_error", "unknown attribute tag in WSG1");
    if (static_cast<std::size_t>(m.rows()) != g.docs.size())
      throw Error("format_error", "WSG1 size does not match document list");
    g.matrices[tag] = std::move(m);
    seen[tag] = true;
  }
  for (bool s : seen)
    if (!s) throw Error("format_error", "WSG1 missing an attribute matrix");
  return g;
}

}  // namespace andis
