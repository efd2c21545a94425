#pragma once

// Anchor-conditioned entity encoder. One set of weights processes both KGs.
//
// Per layer, for target entity i over incoming edges (j, r, i):
//   m_ji   = h_j + r
//   c_ji   = sigmoid(a . [W_s h_j ; W_r r])
//   beta   = softmax_j(c_ji)
//   h_i'   = LayerNorm(h_i + LeakyReLU(W_ent sum_j beta_ji m_ji))

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "eafm/error.hpp"
#include "eafm/kg.hpp"
#include "eafm/linalg.hpp"
#include "eafm/relgraph.hpp"

namespace eafm {

inline constexpr double kLayerNormEps = 1e-5;

// Propagation graph: incoming edges per node, with relation-node ids that
// index rows of R_global. Several KGs may share one EntityGraph as disjoint
// blocks of rows.
class EntityGraph {
 public:
  struct Edge {
    std::int32_t src = 0;
    std::int32_t rel = 0;
  };

  EntityGraph() = default;

  // `edges[i]` lists incoming (src, rel) of node i.
  explicit EntityGraph(const std::vector<std::vector<Edge>>& incoming) {
    offsets_.assign(incoming.size() + 1, 0);
    for (std::size_t i = 0; i < incoming.size(); ++i) {
      offsets_[i + 1] = offsets_[i] + incoming[i].size();
      edges_.insert(edges_.end(), incoming[i].begin(), incoming[i].end());
    }
  }

  std::size_t num_nodes() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t num_edges() const { return edges_.size(); }
  std::size_t begin(std::size_t i) const { return offsets_[i]; }
  std::size_t end(std::size_t i) const { return offsets_[i + 1]; }
  const Edge& edge(std::size_t e) const { return edges_[e]; }
  std::span<const Edge> incoming(std::size_t i) const {
    return std::span<const Edge>(edges_).subspan(offsets_[i], offsets_[i + 1] - offsets_[i]);
  }

  std::int32_t max_relation() const {
    std::int32_t m = -1;
    for (const auto& e : edges_) m = std::max(m, e.rel);
    return m;
  }

 private:
  std::vector<std::size_t> offsets_;
  std::vector<Edge> edges_;
};

// Appends the augmented in-edges of `g` as a block of rows starting at
// `row_offset`, relations mapped through `layout` for `side`.
inline void append_graph_block(const KnowledgeGraph& g, Side side, std::size_t row_offset,
                               const RelationNodeLayout& layout,
                               std::vector<std::vector<EntityGraph::Edge>>& incoming) {
  for (std::size_t e = 0; e < g.num_entities(); ++e) {
    auto& list = incoming[row_offset + e];
    for (const Neighbor& nb : g.in(static_cast<EntityId>(e))) {
      list.push_back({static_cast<std::int32_t>(row_offset + nb.entity), layout.node(side, nb.rel)});
    }
  }
}

struct AnchorOptions {
  bool fallback = true;
  int fallback_cap = 4;
};

struct AnchorActivation {
  Query query;
  int k = 0;
  int effective_k = 0;
  std::vector<EntityId> first;   // active entities in G1, sorted
  std::vector<EntityId> second;  // active entities in G2, sorted
  bool degenerate = false;       // no anchor found even after fallback

  const std::vector<EntityId>& on(Side s) const { return s == Side::kFirst ? first : second; }
};

// Seed lookups in both directions.
class SeedIndex {
 public:
  SeedIndex() = default;
  SeedIndex(const AlignmentTask& task, const SeedAlignment& seeds)
      : to_second_(task.g1.num_entities(), -1), to_first_(task.g2.num_entities(), -1) {
    seeds.validate(task.g1, task.g2, "seeds");
    for (const auto& [u, v] : seeds.pairs) {
      to_second_[u] = v;
      to_first_[v] = u;
    }
  }

  // Counterpart on the other graph, or -1.
  EntityId counterpart(Side s, EntityId e) const {
    return s == Side::kFirst ? to_second_[e] : to_first_[e];
  }

 private:
  std::vector<EntityId> to_second_;
  std::vector<EntityId> to_first_;
};

inline AnchorActivation activate_anchors(const AlignmentTask& task, const SeedIndex& seeds,
                                         Query query, int k, AnchorOptions opts = {}) {
  const KnowledgeGraph& g = task.graph(query.side);
  g.check_entity(query.entity);
  if (k < 1) throw ContractError("activate_anchors: hop count must be >= 1");
  AnchorActivation act;
  act.query = query;
  act.k = k;
  const int max_k = opts.fallback ? std::max(k, opts.fallback_cap) : k;
  for (int hop = k; hop <= max_k; ++hop) {
    act.effective_k = hop;
    std::vector<EntityId> own, other;
    for (EntityId u : khop_entities(g, query.entity, hop)) {
      const EntityId v = seeds.counterpart(query.side, u);
      if (v >= 0) {
        own.push_back(u);
        other.push_back(v);
      }
    }
    if (!own.empty()) {
      std::sort(other.begin(), other.end());
      if (query.side == Side::kFirst) {
        act.first = std::move(own);
        act.second = std::move(other);
      } else {
        act.second = std::move(own);
        act.first = std::move(other);
      }
      return act;
    }
  }
  act.degenerate = true;
  return act;
}

inline AnchorActivation activate_anchors(const AlignmentTask& task, const SeedAlignment& seeds,
                                         Query query, int k, AnchorOptions opts = {}) {
  return activate_anchors(task, SeedIndex(task, seeds), query, k, opts);
}

// Layer-0 features for one KG block: 1_d on active rows, 0_d elsewhere.
template <class T>
Matrix<T> init_entity_features(std::size_t num_entities, std::span<const EntityId> active,
                               std::size_t d) {
  Matrix<T> h = Matrix<T>::Zero(static_cast<Eigen::Index>(num_entities),
                                static_cast<Eigen::Index>(d));
  for (EntityId e : active) h.row(e).setOnes();
  return h;
}

template <class T>
struct EntGnnLayer {
  Matrix<T> w_ent;  // d x d
  Matrix<T> w_s;    // d x d
  Matrix<T> w_r;    // d x d
  Matrix<T> attn;   // 1 x 2d; [entity half ; relation half]
  Matrix<T> gain;   // 1 x d
  Matrix<T> bias;   // 1 x d
};

template <class T>
struct EntGnnParams {
  std::vector<EntGnnLayer<T>> layers;
  T slope = T(0.2);

  std::size_t dim() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers[0].w_ent.rows()); }

  static EntGnnParams zeros(std::size_t d, std::size_t num_layers) {
    EntGnnParams p;
    const auto n = static_cast<Eigen::Index>(d);
    p.layers.resize(num_layers);
    for (auto& l : p.layers) {
      l.w_ent = Matrix<T>::Zero(n, n);
      l.w_s = Matrix<T>::Zero(n, n);
      l.w_r = Matrix<T>::Zero(n, n);
      l.attn = Matrix<T>::Zero(1, 2 * n);
      l.gain = Matrix<T>::Zero(1, n);
      l.bias = Matrix<T>::Zero(1, n);
    }
    return p;
  }

  static EntGnnParams random(std::size_t d, std::size_t num_layers, Rng& rng) {
    auto p = zeros(d, num_layers);
    const double vec_bound = 1.0 / std::sqrt(static_cast<double>(d));
    const double mat_bound = std::sqrt(6.0 / (2.0 * static_cast<double>(d)));
    for (auto& l : p.layers) {
      fill_uniform(l.w_ent, rng, mat_bound);
      fill_uniform(l.w_s, rng, mat_bound);
      fill_uniform(l.w_r, rng, mat_bound);
      fill_uniform(l.attn, rng, vec_bound);
      l.gain.setOnes();
    }
    return p;
  }
};

template <class T>
struct EntGnnCache {
  std::vector<Matrix<T>> inputs;        // h^(l)
  std::vector<RowVector<T>> ent_proj;   // a_s^T W_s
  std::vector<RowVector<T>> rel_proj;   // a_r^T W_r
  std::vector<std::vector<T>> logits;   // sigmoid value per edge
  std::vector<std::vector<T>> weights;  // beta per edge
  std::vector<Matrix<T>> aggregated;    // sum_j beta m
  std::vector<Matrix<T>> pre_activation;
  std::vector<Matrix<T>> normalized;    // pre-affine LayerNorm output
  std::vector<ColVector<T>> inv_std;
  Matrix<T> output;
};

// Row-wise LayerNorm without the affine part. Returns xhat, fills inv_std.
template <class T>
Matrix<T> layer_norm_rows(const Matrix<T>& q, ColVector<T>& inv_std) {
  const auto n = q.rows();
  const auto d = static_cast<T>(q.cols());
  Matrix<T> xhat(n, q.cols());
  inv_std.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mean = q.row(i).sum() / d;
    const auto centered = (q.row(i).array() - mean).matrix();
    const T var = centered.squaredNorm() / d;
    const T rstd = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    inv_std[i] = rstd;
    xhat.row(i) = centered * rstd;
  }
  return xhat;
}

template <class T>
EntGnnCache<T> entgnn_forward(const EntGnnParams<T>& params, const EntityGraph& graph,
                              Matrix<T> init, const Matrix<T>& relations,
                              const std::string& label = "entity graph") {
  const auto d = static_cast<Eigen::Index>(params.dim());
  const auto n = static_cast<Eigen::Index>(graph.num_nodes());
  if (init.rows() != n || init.cols() != d) {
    throw ContractError("entgnn_forward: init shape does not match graph/params");
  }
  if (relations.cols() != d || graph.max_relation() >= relations.rows()) {
    throw ContractError("entgnn_forward: relation embeddings do not cover the graph's relations");
  }
  EntGnnCache<T> cache;
  Matrix<T> h = std::move(init);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    RowVector<T> ent_proj = layer.attn.leftCols(d) * layer.w_s;
    RowVector<T> rel_proj = layer.attn.rightCols(d) * layer.w_r;
    ColVector<T> ent_score = h * ent_proj.transpose();
    ColVector<T> rel_score = relations * rel_proj.transpose();

    std::vector<T> logits(graph.num_edges());
    std::vector<T> weights(graph.num_edges());
    Matrix<T> agg = Matrix<T>::Zero(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto b = graph.begin(i), e = graph.end(i);
      if (b == e) continue;
      T max_logit = -std::numeric_limits<T>::infinity();
      for (auto k = b; k < e; ++k) {
        const auto& edge = graph.edge(k);
        logits[k] = sigmoid(ent_score[edge.src] + rel_score[edge.rel]);
        max_logit = std::max(max_logit, logits[k]);
      }
      T total = 0;
      for (auto k = b; k < e; ++k) {
        weights[k] = std::exp(logits[k] - max_logit);
        total += weights[k];
      }
      for (auto k = b; k < e; ++k) {
        weights[k] /= total;
        const auto& edge = graph.edge(k);
        agg.row(i) += weights[k] * (h.row(edge.src) + relations.row(edge.rel));
      }
    }
    Matrix<T> y = agg * layer.w_ent.transpose();
    Matrix<T> q = h + y.unaryExpr([s = params.slope](T v) { return leaky_relu(v, s); });
    ColVector<T> inv_std;
    Matrix<T> xhat = layer_norm_rows(q, inv_std);
    Matrix<T> next = (xhat.array().rowwise() * layer.gain.row(0).array()).rowwise() +
                     layer.bias.row(0).array();
    require_finite(next, "entgnn layer " + std::to_string(l) + " (" + label + ")");

    cache.inputs.push_back(std::move(h));
    cache.ent_proj.push_back(std::move(ent_proj));
    cache.rel_proj.push_back(std::move(rel_proj));
    cache.logits.push_back(std::move(logits));
    cache.weights.push_back(std::move(weights));
    cache.aggregated.push_back(std::move(agg));
    cache.pre_activation.push_back(std::move(y));
    cache.normalized.push_back(std::move(xhat));
    cache.inv_std.push_back(std::move(inv_std));
    h = std::move(next);
  }
  cache.output = std::move(h);
  return cache;
}

// Accumulates parameter gradients; returns dL/d(relations).
template <class T>
Matrix<T> entgnn_backward(const EntGnnParams<T>& params, const EntityGraph& graph,
                          const EntGnnCache<T>& cache, const Matrix<T>& relations,
                          Matrix<T> d_out, EntGnnParams<T>& grad) {
  const auto d = static_cast<Eigen::Index>(params.dim());
  const auto n = static_cast<Eigen::Index>(graph.num_nodes());
  Matrix<T> d_rel = Matrix<T>::Zero(relations.rows(), relations.cols());
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const auto& layer = params.layers[l];
    auto& g = grad.layers[l];
    const Matrix<T>& h = cache.inputs[l];
    const Matrix<T>& xhat = cache.normalized[l];
    const ColVector<T>& inv_std = cache.inv_std[l];
    const auto& logits = cache.logits[l];
    const auto& weights = cache.weights[l];

    g.gain.row(0) += d_out.cwiseProduct(xhat).colwise().sum();
    g.bias.row(0) += d_out.colwise().sum();
    Matrix<T> dxhat = d_out.array().rowwise() * layer.gain.row(0).array();
    Matrix<T> dq(n, d);
    const T inv_d = T(1) / static_cast<T>(d);
    for (Eigen::Index i = 0; i < n; ++i) {
      const T mean_dx = dxhat.row(i).sum() * inv_d;
      const T mean_dx_x = dxhat.row(i).dot(xhat.row(i)) * inv_d;
      dq.row(i) = inv_std[i] * (dxhat.row(i).array() - mean_dx - xhat.row(i).array() * mean_dx_x).matrix();
    }

    Matrix<T> dh = dq;
    Matrix<T> dy = dq.cwiseProduct(cache.pre_activation[l].unaryExpr(
        [s = params.slope](T v) { return leaky_relu_grad(v, s); }));
    g.w_ent.noalias() += dy.transpose() * cache.aggregated[l];
    Matrix<T> dagg = dy * layer.w_ent;

    ColVector<T> d_ent_score = ColVector<T>::Zero(n);
    ColVector<T> d_rel_score = ColVector<T>::Zero(relations.rows());
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto b = graph.begin(i), e = graph.end(i);
      if (b == e) continue;
      const auto da = dagg.row(i);
      T weighted = 0;
      std::vector<T> dbeta(e - b);
      for (auto k = b; k < e; ++k) {
        const auto& edge = graph.edge(k);
        dbeta[k - b] = da.dot(h.row(edge.src) + relations.row(edge.rel));
        weighted += weights[k] * dbeta[k - b];
        dh.row(edge.src) += weights[k] * da;
        d_rel.row(edge.rel) += weights[k] * da;
      }
      for (auto k = b; k < e; ++k) {
        const auto& edge = graph.edge(k);
        const T dc = weights[k] * (dbeta[k - b] - weighted);
        const T dz = dc * logits[k] * (T(1) - logits[k]);
        d_ent_score[edge.src] += dz;
        d_rel_score[edge.rel] += dz;
      }
    }
    const RowVector<T>& ent_proj = cache.ent_proj[l];
    const RowVector<T>& rel_proj = cache.rel_proj[l];
    dh.noalias() += d_ent_score * ent_proj;
    d_rel.noalias() += d_rel_score * rel_proj;
    const RowVector<T> d_ent_proj = d_ent_score.transpose() * h;
    const RowVector<T> d_rel_proj = d_rel_score.transpose() * relations;
    g.w_s.noalias() += layer.attn.leftCols(d).transpose() * d_ent_proj;
    g.w_r.noalias() += layer.attn.rightCols(d).transpose() * d_rel_proj;
    g.attn.leftCols(d).noalias() += d_ent_proj * layer.w_s.transpose();
    g.attn.rightCols(d).noalias() += d_rel_proj * layer.w_r.transpose();

    d_out = std::move(dh);
  }
  return d_rel;
}

}  // namespace eafm
