#pragma once

// Graph refinement: collapse the per-attribute similarity graphs into one
// symmetric same-author probability graph, either by summing and
// thresholding or with a two-layer multi-adjacency GNN encoder followed by a
// pairwise MLP decoder. The GNN is trained here with hand-derived gradients.

#include "andis/simgraph.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <variant>

namespace andis {

struct RefinedGraph {
  std::vector<DocId> docs;
  Matrix prob;

  std::size_t size() const { return docs.size(); }
  bool operator==(const RefinedGraph& o) const { return docs == o.docs && prob == o.prob; }
};

// Symmetric, zero diagonal, entries in [0, 1].
inline bool valid_refined(const RefinedGraph& g) {
  const auto n = g.prob.rows();
  if (g.prob.cols() != n || static_cast<std::size_t>(n) != g.docs.size()) return false;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (g.prob(i, i) != 0.0) return false;
    for (Eigen::Index j = 0; j < n; ++j) {
      double p = g.prob(i, j);
      if (!(p >= 0.0 && p <= 1.0) || p != g.prob(j, i)) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Baseline

inline Matrix summed_similarity(const SimilarityGraphSet& g) {
  Matrix s = Matrix::Zero(g.size(), g.size());
  for (auto a : kAttributes) s += g[a];
  return s;
}

// Mean of the nonzero off-diagonal summed-similarity entries (0 if none).
inline double default_baseline_threshold(const SimilarityGraphSet& g) {
  const Matrix s = summed_similarity(g);
  double total = 0.0;
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < s.rows(); ++i)
    for (Eigen::Index j = 0; j < s.cols(); ++j)
      if (i != j && s(i, j) > 0.0) {
        total += s(i, j);
        ++count;
      }
  return count ? total / static_cast<double>(count) : 0.0;
}

inline RefinedGraph baseline_refine(const SimilarityGraphSet& g, double threshold) {
  if (!(threshold >= 0.0)) throw Error("invalid_argument", "baseline threshold must be >= 0");
  const Matrix s = summed_similarity(g);
  RefinedGraph r{g.docs, Matrix::Zero(s.rows(), s.cols())};
  for (Eigen::Index i = 0; i < s.rows(); ++i)
    for (Eigen::Index j = 0; j < s.cols(); ++j)
      if (i != j && s(i, j) >= threshold) r.prob(i, j) = 1.0;
  return r;
}

// ---------------------------------------------------------------------------
// Model

enum class DecoderMode : std::uint8_t { full = 0, features_only = 1 };

inline const char* to_string(DecoderMode m) { return m == DecoderMode::full ? "full" : "features_only"; }

inline DecoderMode parse_decoder_mode(std::string_view s) {
  if (s == "full") return DecoderMode::full;
  if (s == "features_only" || s == "features-only") return DecoderMode::features_only;
  throw Error("bad_request", "unknown decoder mode: " + std::string(s));
}

struct GnnConfig {
  int input_dim = 32;
  int hidden_dim = 32;
  int output_dim = 32;
  int decoder_hidden = 64;
  DecoderMode mode = DecoderMode::full;
  bool per_attribute_weights = false;
  std::uint64_t seed = 0;

  bool operator==(const GnnConfig&) const = default;
};

// Trainable tensors. Also used as the gradient container.
struct GnnParams {
  std::vector<Matrix> layer1;  // 1 shared or one per attribute: input_dim x hidden_dim
  std::vector<Matrix> layer2;  // (attrs * hidden_dim) x output_dim
  Matrix dec_w1;               // decoder_input x decoder_hidden
  Vector dec_b1;
  Vector dec_w2;
  double dec_b2 = 0.0;

  GnnParams zeros_like() const {
    GnnParams z;
    for (const auto& m : layer1) z.layer1.push_back(Matrix::Zero(m.rows(), m.cols()));
    for (const auto& m : layer2) z.layer2.push_back(Matrix::Zero(m.rows(), m.cols()));
    z.dec_w1 = Matrix::Zero(dec_w1.rows(), dec_w1.cols());
    z.dec_b1 = Vector::Zero(dec_b1.size());
    z.dec_w2 = Vector::Zero(dec_w2.size());
    return z;
  }

  // this += scale * other
  void add_scaled(const GnnParams& other, double scale) {
    for (std::size_t k = 0; k < layer1.size(); ++k) layer1[k] += scale * other.layer1[k];
    for (std::size_t k = 0; k < layer2.size(); ++k) layer2[k] += scale * other.layer2[k];
    dec_w1 += scale * other.dec_w1;
    dec_b1 += scale * other.dec_b1;
    dec_w2 += scale * other.dec_w2;
    dec_b2 += scale * other.dec_b2;
  }

  bool all_finite() const {
    for (const auto& m : layer1)
      if (!m.allFinite()) return false;
    for (const auto& m : layer2)
      if (!m.allFinite()) return false;
    return dec_w1.allFinite() && dec_b1.allFinite() && dec_w2.allFinite() && std::isfinite(dec_b2);
  }

  bool operator==(const GnnParams& o) const {
    return layer1 == o.layer1 && layer2 == o.layer2 && dec_w1 == o.dec_w1 && dec_b1 == o.dec_b1 &&
           dec_w2 == o.dec_w2 && dec_b2 == o.dec_b2;
  }
};

struct GnnModel {
  GnnConfig config;
  GnnParams params;
  // Fixed per-attribute divisors applied to edge features before decoding.
  Vector edge_scale = Vector::Ones(kAttributeCount);

  Eigen::Index node_width() const {
    return static_cast<Eigen::Index>(kAttributeCount) * config.output_dim;
  }
  Eigen::Index decoder_input() const {
    return 2 * node_width() +
           (config.mode == DecoderMode::full ? static_cast<Eigen::Index>(kAttributeCount) : 0);
  }

  bool operator==(const GnnModel& o) const {
    return config == o.config && params == o.params && edge_scale == o.edge_scale;
  }

  // Glorot-uniform weights, zero biases, all drawn from config.seed.
  static GnnModel init(const GnnConfig& cfg) {
    if (cfg.input_dim < 1 || cfg.hidden_dim < 1 || cfg.output_dim < 1 || cfg.decoder_hidden < 1)
      throw Error("invalid_argument", "GNN dimensions must be positive");
    GnnModel m;
    m.config = cfg;
    std::mt19937_64 rng(mix_seed(cfg.seed, 0x6d6f64656cULL));
    auto glorot = [&](Eigen::Index rows, Eigen::Index cols) {
      const double lim = std::sqrt(6.0 / static_cast<double>(rows + cols));
      std::uniform_real_distribution<double> u(-lim, lim);
      Matrix w(rows, cols);
      for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = u(rng);
      return w;
    };
    const std::size_t copies = cfg.per_attribute_weights ? kAttributeCount : 1;
    const auto concat = static_cast<Eigen::Index>(kAttributeCount) * cfg.hidden_dim;
    for (std::size_t k = 0; k < copies; ++k) m.params.layer1.push_back(glorot(cfg.input_dim, cfg.hidden_dim));
    for (std::size_t k = 0; k < copies; ++k) m.params.layer2.push_back(glorot(concat, cfg.output_dim));
    m.params.dec_w1 = glorot(m.decoder_input(), cfg.decoder_hidden);
    m.params.dec_b1 = Vector::Zero(cfg.decoder_hidden);
    m.params.dec_w2 = glorot(cfg.decoder_hidden, 1).col(0);
    m.params.dec_b2 = 0.0;
    return m;
  }
};

using AdjacencySet = std::array<Matrix, kAttributeCount>;

// i.i.d. standard normal node features.
inline Matrix init_node_features(std::size_t n, std::size_t d0, std::uint64_t seed) {
  if (n < 1 || d0 < 1) throw Error("invalid_argument", "node feature shape must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix v(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d0));
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j) v(i, j) = normal(rng);
  return v;
}

namespace detail {

inline const Matrix& layer_weight(const std::vector<Matrix>& w, std::size_t attr) {
  return w.size() == 1 ? w[0] : w[attr];
}

inline Matrix relu(const Matrix& z) { return z.cwiseMax(0.0); }

inline Matrix relu_mask(const Matrix& z) {
  return (z.array() > 0.0).cast<double>().matrix();
}

inline double sigmoid(double s) {
  return s >= 0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s));
}

struct EncoderTrace {
  std::array<Matrix, kAttributeCount> av0;  // A_x V0
  Matrix z1, v1, z2, v2;
};

inline void check_adjacency(const AdjacencySet& adj, Eigen::Index n) {
  for (const auto& a : adj)
    if (a.rows() != n || a.cols() != n)
      throw Error("shape_mismatch", "adjacency shape does not match node count");
}

inline EncoderTrace encode(const GnnModel& model, const AdjacencySet& adj, const Matrix& v0) {
  const auto& p = model.params;
  const auto& cfg = model.config;
  const Eigen::Index n = v0.rows();
  if (v0.cols() != cfg.input_dim) throw Error("shape_mismatch", "node features have the wrong width");
  check_adjacency(adj, n);

  EncoderTrace t;
  t.z1.resize(n, static_cast<Eigen::Index>(kAttributeCount) * cfg.hidden_dim);
  for (std::size_t x = 0; x < kAttributeCount; ++x) {
    t.av0[x] = adj[x] * v0;
    t.z1.middleCols(static_cast<Eigen::Index>(x) * cfg.hidden_dim, cfg.hidden_dim) =
        t.av0[x] * layer_weight(p.layer1, x);
  }
  t.v1 = relu(t.z1);

  t.z2.resize(n, static_cast<Eigen::Index>(kAttributeCount) * cfg.output_dim);
  Matrix shared;
  if (p.layer2.size() == 1) shared = t.v1 * p.layer2[0];
  for (std::size_t x = 0; x < kAttributeCount; ++x) {
    auto block = t.z2.middleCols(static_cast<Eigen::Index>(x) * cfg.output_dim, cfg.output_dim);
    if (p.layer2.size() == 1)
      block = adj[x] * shared;
    else
      block = adj[x] * (t.v1 * p.layer2[x]);
  }
  t.v2 = relu(t.z2);
  return t;
}

// dV2 -> encoder parameter gradients.
inline void encode_backward(const GnnModel& model, const AdjacencySet& adj, const EncoderTrace& t,
                            const Matrix& d_v2, GnnParams& grad) {
  const auto& p = model.params;
  const auto& cfg = model.config;
  const Matrix g2 = d_v2.cwiseProduct(relu_mask(t.z2));
  Matrix d_v1 = Matrix::Zero(t.v1.rows(), t.v1.cols());
  for (std::size_t x = 0; x < kAttributeCount; ++x) {
    const Matrix tx =
        adj[x].transpose() * g2.middleCols(static_cast<Eigen::Index>(x) * cfg.output_dim, cfg.output_dim);
    const std::size_t slot = p.layer2.size() == 1 ? 0 : x;
    grad.layer2[slot] += t.v1.transpose() * tx;
    d_v1 += tx * layer_weight(p.layer2, x).transpose();
  }
  const Matrix g1 = d_v1.cwiseProduct(relu_mask(t.z1));
  for (std::size_t x = 0; x < kAttributeCount; ++x) {
    const std::size_t slot = p.layer1.size() == 1 ? 0 : x;
    grad.layer1[slot] +=
        t.av0[x].transpose() * g1.middleCols(static_cast<Eigen::Index>(x) * cfg.hidden_dim, cfg.hidden_dim);
  }
}

// Row i of the scaled edge-feature tensor: N x attrs.
inline Matrix edge_rows(const GnnModel& model, const AdjacencySet& edge_feats, Eigen::Index i) {
  const Eigen::Index n = edge_feats[0].rows();
  Matrix e(n, static_cast<Eigen::Index>(kAttributeCount));
  for (std::size_t x = 0; x < kAttributeCount; ++x)
    e.col(static_cast<Eigen::Index>(x)) = edge_feats[x].row(i).transpose() / model.edge_scale(x);
  return e;
}

struct DecoderParts {
  Matrix ua, ub;  // V * W_a, V * W_b (N x hidden)
};

inline DecoderParts decoder_parts(const GnnModel& model, const Matrix& v) {
  const auto w = model.node_width();
  return {v * model.params.dec_w1.topRows(w), v * model.params.dec_w1.middleRows(w, w)};
}

// Hidden pre-activations for all pairs (i, j), j = 0..N-1.
inline Matrix decoder_pre(const GnnModel& model, const DecoderParts& parts, const AdjacencySet* edge_feats,
                          Eigen::Index i) {
  Matrix pre = parts.ub;
  pre.rowwise() += (parts.ua.row(i) + model.params.dec_b1.transpose());
  if (model.config.mode == DecoderMode::full) {
    pre += edge_rows(model, *edge_feats, i) *
           model.params.dec_w1.bottomRows(static_cast<Eigen::Index>(kAttributeCount));
  }
  return pre;
}

// P(i, j) = decoder output for the ordered triplet (V_i, V_j, E_ij); zero diagonal.
inline Matrix directed_probs(const GnnModel& model, const Matrix& v, const AdjacencySet* edge_feats) {
  const Eigen::Index n = v.rows();
  const auto parts = decoder_parts(model, v);
  Matrix p(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Matrix h = relu(decoder_pre(model, parts, edge_feats, i));
    Vector s = h * model.params.dec_w2;
    for (Eigen::Index j = 0; j < n; ++j) p(i, j) = j == i ? 0.0 : sigmoid(s(j) + model.params.dec_b2);
  }
  return p;
}

// Backprop from dP (directed probabilities) to decoder params and dV.
inline Matrix decode_backward(const GnnModel& model, const Matrix& v, const AdjacencySet* edge_feats,
                              const Matrix& p, const Matrix& d_p, GnnParams& grad) {
  const Eigen::Index n = v.rows();
  const auto w = model.node_width();
  const auto hidden = model.config.decoder_hidden;
  const auto parts = decoder_parts(model, v);
  Matrix d_ua = Matrix::Zero(n, hidden);
  Matrix d_ub = Matrix::Zero(n, hidden);
  Matrix d_we = Matrix::Zero(static_cast<Eigen::Index>(kAttributeCount), hidden);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Matrix pre = decoder_pre(model, parts, edge_feats, i);
    const Matrix h = relu(pre);
    Vector ds(n);
    for (Eigen::Index j = 0; j < n; ++j) ds(j) = j == i ? 0.0 : d_p(i, j) * p(i, j) * (1.0 - p(i, j));
    grad.dec_w2 += h.transpose() * ds;
    grad.dec_b2 += ds.sum();
    const Matrix dh = (ds * model.params.dec_w2.transpose()).cwiseProduct(relu_mask(pre));
    const RowVector col_sum = dh.colwise().sum();
    d_ua.row(i) += col_sum;
    d_ub += dh;
    grad.dec_b1 += col_sum.transpose();
    if (model.config.mode == DecoderMode::full) d_we += edge_rows(model, *edge_feats, i).transpose() * dh;
  }
  grad.dec_w1.topRows(w) += v.transpose() * d_ua;
  grad.dec_w1.middleRows(w, w) += v.transpose() * d_ub;
  if (model.config.mode == DecoderMode::full)
    grad.dec_w1.bottomRows(static_cast<Eigen::Index>(kAttributeCount)) += d_we;
  return d_ua * model.params.dec_w1.topRows(w).transpose() +
         d_ub * model.params.dec_w1.middleRows(w, w).transpose();
}

inline Matrix symmetrize_directed(const Matrix& p) {
  Matrix out = (p + p.transpose()) / 2.0;
  out.diagonal().setZero();
  return out;
}

}  // namespace detail

inline Matrix egnn_forward(const GnnModel& model, const AdjacencySet& adj, const Matrix& v0) {
  return detail::encode(model, adj, v0).v2;
}

// prob_ij = (p(i,j) + p(j,i)) / 2. In features_only mode edge_feats is never read.
inline Matrix decode_edges(const GnnModel& model, const Matrix& node_vecs, const AdjacencySet& edge_feats) {
  if (node_vecs.cols() != model.node_width())
    throw Error("shape_mismatch", "node embeddings have the wrong width");
  const AdjacencySet* feats = nullptr;
  if (model.config.mode == DecoderMode::full) {
    detail::check_adjacency(edge_feats, node_vecs.rows());
    feats = &edge_feats;
  }
  return detail::symmetrize_directed(detail::directed_probs(model, node_vecs, feats));
}

// ---------------------------------------------------------------------------
// Labels and loss

struct EdgeLabels {
  std::vector<std::pair<int, int>> positive;  // i < j
  std::vector<std::pair<int, int>> negative;
};

// Pairs over `docs` (index order) labeled by co-membership in `clusters`.
inline EdgeLabels build_edge_labels(const std::vector<DocId>& docs, const std::vector<DocSet>& clusters) {
  std::map<DocId, std::size_t> cluster_of;
  for (std::size_t c = 0; c < clusters.size(); ++c)
    for (const auto& d : clusters[c])
      if (!cluster_of.emplace(d, c).second)
        throw Error("invalid_argument", "clusters overlap on document " + d);
  if (cluster_of.size() != docs.size())
    throw Error("invalid_argument", "clusters do not partition the document set");
  std::vector<std::size_t> label;
  for (const auto& d : docs) {
    auto it = cluster_of.find(d);
    if (it == cluster_of.end()) throw Error("invalid_argument", "document not covered by clusters: " + d);
    label.push_back(it->second);
  }
  EdgeLabels out;
  const int n = static_cast<int>(docs.size());
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      (label[i] == label[j] ? out.positive : out.negative).emplace_back(i, j);
  return out;
}

inline constexpr double kProbEpsilon = 1e-7;

inline double positive_weight(const EdgeLabels& labels) {
  return labels.positive.empty()
             ? 1.0
             : static_cast<double>(labels.negative.size()) / static_cast<double>(labels.positive.size());
}

// Weighted BCE averaged over pairs; optionally writes d loss / d prob (symmetric).
inline double loss(const Matrix& prob, const EdgeLabels& labels, Matrix* d_prob = nullptr) {
  const double w = positive_weight(labels);
  const double pairs = static_cast<double>(labels.positive.size() + labels.negative.size());
  if (pairs == 0.0) {
    if (d_prob) *d_prob = Matrix::Zero(prob.rows(), prob.cols());
    return 0.0;
  }
  if (d_prob) *d_prob = Matrix::Zero(prob.rows(), prob.cols());
  double total = 0.0;
  auto term = [&](int i, int j, bool positive) {
    const double q = prob(i, j);
    const double qc = std::clamp(q, kProbEpsilon, 1.0 - kProbEpsilon);
    const bool inside = q > kProbEpsilon && q < 1.0 - kProbEpsilon;
    if (positive) {
      total += -w * std::log(qc);
      if (d_prob && inside) (*d_prob)(i, j) = (*d_prob)(j, i) = -w / qc / pairs;
    } else {
      total += -std::log(1.0 - qc);
      if (d_prob && inside) (*d_prob)(i, j) = (*d_prob)(j, i) = 1.0 / (1.0 - qc) / pairs;
    }
  };
  for (auto [i, j] : labels.positive) term(i, j, true);
  for (auto [i, j] : labels.negative) term(i, j, false);
  return total / pairs;
}

// ---------------------------------------------------------------------------
// Training

struct PreparedGraph {
  std::string name;
  std::vector<DocId> docs;
  AdjacencySet pruned;
  AdjacencySet adjacency;  // row-normalized pruned
};

inline PreparedGraph prepare_graph(const SimilarityGraphSet& g, std::string name = {}) {
  PreparedGraph p;
  p.name = std::move(name);
  p.docs = g.docs;
  for (std::size_t x = 0; x < kAttributeCount; ++x) {
    p.pruned[x] = prune(g.matrices[x]);
    p.adjacency[x] = row_normalize(p.pruned[x]);
  }
  return p;
}

inline Matrix gnn_probabilities(const GnnModel& model, const PreparedGraph& g, const Matrix& v0) {
  return decode_edges(model, egnn_forward(model, g.adjacency, v0), g.pruned);
}

// Loss and exact gradient for one graph with fixed input features.
inline double loss_and_gradient(const GnnModel& model, const PreparedGraph& g, const EdgeLabels& labels,
                                const Matrix& v0, GnnParams* grad) {
  const auto trace = detail::encode(model, g.adjacency, v0);
  const AdjacencySet* feats = model.config.mode == DecoderMode::full ? &g.pruned : nullptr;
  const Matrix directed = detail::directed_probs(model, trace.v2, feats);
  const Matrix prob = detail::symmetrize_directed(directed);
  Matrix d_prob;
  const double value = loss(prob, labels, grad ? &d_prob : nullptr);
  if (!grad) return value;
  // prob_ij = (P_ij + P_ji)/2 and d_prob is symmetric, so dP = d_prob / 2.
  const Matrix d_directed = d_prob / 2.0;
  const Matrix d_v2 = detail::decode_backward(model, trace.v2, feats, directed, d_directed, *grad);
  detail::encode_backward(model, g.adjacency, trace, d_v2, *grad);
  return value;
}

struct TrainingExample {
  std::string name;
  SimilarityGraphSet graphs;
  std::vector<DocSet> truth;
};

struct TrainConfig {
  double step_size = 1e-2;
  int epochs = 100;
  DecoderMode mode = DecoderMode::full;
  std::uint64_t seed = 0;
  // Fit model.edge_scale from the training graphs before the first epoch.
  bool fit_edge_scale = true;
  // Draw fresh node features every epoch instead of one fixed draw per name.
  bool resample_features = true;
};

struct TrainReport {
  std::vector<double> train_loss;  // mean over names, per epoch
  std::vector<double> val_loss;
  int best_epoch = -1;
};

inline std::uint64_t feature_seed(std::uint64_t seed, const std::string& name) {
  return mix_seed(seed, fnv1a(name));
}

// Mean positive pruned weight per attribute; 1 where an attribute never fires.
inline Vector fit_edge_scale(const std::vector<PreparedGraph>& graphs) {
  Vector scale = Vector::Ones(kAttributeCount);
  for (std::size_t x = 0; x < kAttributeCount; ++x) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& g : graphs)
      for (Eigen::Index i = 0; i < g.pruned[x].rows(); ++i)
        for (Eigen::Index j = 0; j < g.pruned[x].cols(); ++j)
          if (g.pruned[x](i, j) > 0.0) {
            total += g.pruned[x](i, j);
            ++count;
          }
    if (count) scale(static_cast<Eigen::Index>(x)) = total / static_cast<double>(count);
  }
  return scale;
}

// Plain gradient descent, one full-graph step per name per epoch. Node
// features are redrawn every epoch unless resample_features is off;
// validation always uses one fixed draw per name.
// Returns the parameters with the lowest validation loss (or the last ones
// when no validation names are given).
inline GnnModel train(GnnModel model, const std::vector<TrainingExample>& train_set,
                      const std::vector<TrainingExample>& val_set, const TrainConfig& cfg,
                      TrainReport* report = nullptr) {
  if (train_set.empty()) throw Error("invalid_argument", "training needs at least one name");
  if (!(cfg.step_size >= 0.0) || cfg.epochs < 1) throw Error("invalid_argument", "bad training config");
  if (cfg.mode != model.config.mode) throw Error("invalid_argument", "train mode does not match model mode");

  auto prepare = [](const std::vector<TrainingExample>& set) {
    std::vector<std::pair<PreparedGraph, EdgeLabels>> out;
    for (const auto& ex : set)
      out.emplace_back(prepare_graph(ex.graphs, ex.name), build_edge_labels(ex.graphs.docs, ex.truth));
    return out;
  };
  const auto train_graphs = prepare(train_set);
  const auto val_graphs = prepare(val_set);
  if (cfg.fit_edge_scale) {
    std::vector<PreparedGraph> gs;
    for (const auto& [g, _] : train_graphs) gs.push_back(g);
    model.edge_scale = fit_edge_scale(gs);
  }

  TrainReport local;
  TrainReport& rep = report ? *report : local;
  rep = {};
  GnnModel best = model;
  double best_val = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (const auto& [g, labels] : train_graphs) {
      const std::uint64_t fseed = cfg.resample_features
                                      ? mix_seed(feature_seed(cfg.seed, g.name), epoch + 1)
                                      : feature_seed(cfg.seed, g.name);
      const Matrix v0 = init_node_features(g.docs.size(), model.config.input_dim, fseed);
      GnnParams grad = model.params.zeros_like();
      const double l = loss_and_gradient(model, g, labels, v0, &grad);
      if (!std::isfinite(l) || !grad.all_finite())
        throw Error("divergence", "non-finite loss at epoch " + std::to_string(epoch) + " on name '" +
                                      g.name + "' (step size " + std::to_string(cfg.step_size) + ")");
      epoch_loss += l;
      model.params.add_scaled(grad, -cfg.step_size);
    }
    rep.train_loss.push_back(epoch_loss / static_cast<double>(train_graphs.size()));

    if (!val_graphs.empty()) {
      double v = 0.0;
      for (const auto& [g, labels] : val_graphs) {
        const Matrix v0 =
            init_node_features(g.docs.size(), model.config.input_dim, feature_seed(cfg.seed, g.name));
        v += loss_and_gradient(model, g, labels, v0, nullptr);
      }
      v /= static_cast<double>(val_graphs.size());
      rep.val_loss.push_back(v);
      if (v < best_val) {
        best_val = v;
        best = model;
        rep.best_epoch = epoch;
      }
    }
  }
  if (val_graphs.empty()) {
    rep.best_epoch = cfg.epochs - 1;
    return model;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Strategy dispatch

struct BaselineStrategy {
  std::optional<double> threshold;  // default: mean nonzero summed similarity
};

struct GnnStrategy {
  std::shared_ptr<const GnnModel> model;
  std::uint64_t seed = 0;
  DecoderMode mode = DecoderMode::full;
};

using RefineStrategy = std::variant<BaselineStrategy, GnnStrategy>;

inline RefinedGraph gnn_refine(const SimilarityGraphSet& graphs, const GnnModel& model, std::uint64_t seed) {
  const auto prepared = prepare_graph(graphs);
  const Matrix v0 = init_node_features(graphs.size(), model.config.input_dim, seed);
  return {graphs.docs, gnn_probabilities(model, prepared, v0)};
}

inline RefinedGraph refine(const SimilarityGraphSet& graphs, const RefineStrategy& strategy) {
  if (const auto* b = std::get_if<BaselineStrategy>(&strategy))
    return baseline_refine(graphs, b->threshold.value_or(default_baseline_threshold(graphs)));
  const auto& g = std::get<GnnStrategy>(strategy);
  if (!g.model) throw Error("invalid_argument", "gnn strategy without a model");
  if (g.mode != g.model->config.mode)
    throw Error("invalid_argument", "strategy mode does not match the model's decoder");
  return gnn_refine(graphs, *g.model, g.seed);
}

// ---------------------------------------------------------------------------
// WGN1 checkpoint: "WGN1" | version u32 | config | tensors in declaration
// order, each rows u32, cols u32, row-major f64.

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_tensor(std::string& out, const Matrix& m) {
  bin::put_u32(out, static_cast<std::uint32_t>(m.rows()));
  bin::put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) bin::put_f64(out, m(i, j));
}

inline Matrix get_tensor(bin::Reader& r, Eigen::Index rows, Eigen::Index cols) {
  const auto rr = r.u32();
  const auto cc = r.u32();
  if (rr != rows || cc != cols) throw Error("format_error", "checkpoint tensor has unexpected shape");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = r.f64();
  return m;
}

}  // namespace detail

inline std::string serialize_model(const GnnModel& m) {
  std::string out = "WGN1";
  bin::put_u32(out, kCheckpointVersion);
  const auto& c = m.config;
  bin::put_u32(out, static_cast<std::uint32_t>(c.input_dim));
  bin::put_u32(out, static_cast<std::uint32_t>(c.hidden_dim));
  bin::put_u32(out, static_cast<std::uint32_t>(c.output_dim));
  bin::put_u32(out, static_cast<std::uint32_t>(c.decoder_hidden));
  bin::put_u8(out, static_cast<std::uint8_t>(c.mode));
  bin::put_u8(out, c.per_attribute_weights ? 1 : 0);
  bin::put_u64(out, c.seed);
  for (const auto& w : m.params.layer1) detail::put_tensor(out, w);
  for (const auto& w : m.params.layer2) detail::put_tensor(out, w);
  detail::put_tensor(out, m.edge_scale);
  detail::put_tensor(out, m.params.dec_w1);
  detail::put_tensor(out, m.params.dec_b1);
  detail::put_tensor(out, m.params.dec_w2);
  bin::put_f64(out, m.params.dec_b2);
  return out;
}

inline GnnModel deserialize_model(std::string_view data) {
  bin::Reader r(data);
  if (r.bytes(4) != "WGN1") throw Error("format_error", "bad WGN1 magic");
  if (r.u32() != kCheckpointVersion) throw Error("format_error", "unsupported checkpoint version");
  GnnConfig c;
  c.input_dim = static_cast<int>(r.u32());
  c.hidden_dim = static_cast<int>(r.u32());
  c.output_dim = static_cast<int>(r.u32());
  c.decoder_hidden = static_cast<int>(r.u32());
  const auto mode = r.u8();
  if (mode > 1) throw Error("format_error", "unknown decoder mode in checkpoint");
  c.mode = static_cast<DecoderMode>(mode);
  c.per_attribute_weights = r.u8() != 0;
  c.seed = r.u64();

  GnnModel m;
  m.config = c;
  const std::size_t copies = c.per_attribute_weights ? kAttributeCount : 1;
  const auto concat = static_cast<Eigen::Index>(kAttributeCount) * c.hidden_dim;
  for (std::size_t k = 0; k < copies; ++k) m.params.layer1.push_back(detail::get_tensor(r, c.input_dim, c.hidden_dim));
  for (std::size_t k = 0; k < copies; ++k) m.params.layer2.push_back(detail::get_tensor(r, concat, c.output_dim));
  m.edge_scale = detail::get_tensor(r, kAttributeCount, 1).col(0);
  m.params.dec_w1 = detail::get_tensor(r, m.decoder_input(), c.decoder_hidden);
  m.params.dec_b1 = detail::get_tensor(r, c.decoder_hidden, 1).col(0);
  m.params.dec_w2 = detail::get_tensor(r, c.decoder_hidden, 1).col(0);
  m.params.dec_b2 = r.f64();
  if (!r.done()) throw Error("format_error", "trailing bytes after checkpoint");
  return m;
}

inline std::string strategy_fingerprint(const RefineStrategy& s) {
  if (const auto* b = std::get_if<BaselineStrategy>(&s)) {
    if (!b->threshold) return "baseline-auto";
    std::uint64_t bits;
    std::memcpy(&bits, &*b->threshold, sizeof(bits));
    return "baseline-" + std::to_string(bits);
  }
  const auto& g = std::get<GnnStrategy>(s);
  return "gnn-" + std::to_string(fnv1a(serialize_model(*g.model))) + "-" + std::to_string(g.seed) + "-" +
         to_string(g.mode);
}

}  // namespace andis
