#pragma once

// Query-conditioned relation encoder over the merged relation graph.
//
// Per layer, for target relation i and incoming neighbor j with edge type t:
//   r~_j    = r_j + p_t
//   alpha   = sigmoid(w_alpha . [r~_j ; r_i])
//   r_i'    = LeakyReLU(W_rel r_i + (1/|N(i)|) sum_j alpha W_msg r~_j)
// Prototypes p_t are shared by all layers. The gated messages are averaged
// over the in-degree: relation graphs are close to complete, and a plain sum
// multiplies the feature scale by roughly |N(i)| * |W_msg| per layer, which
// diverges within a few optimizer steps at any practical learning rate.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "eafm/error.hpp"
#include "eafm/linalg.hpp"
#include "eafm/relgraph.hpp"

namespace eafm {

template <class T>
struct RelGnnLayer {
  Matrix<T> w_rel;    // d x d
  Matrix<T> w_msg;    // d x d
  Matrix<T> w_alpha;  // 1 x 2d; first half scores the neighbor, second half the target
};

template <class T>
struct RelGnnParams {
  Matrix<T> prototypes;  // kNumRelEdgeTypes x d
  std::vector<RelGnnLayer<T>> layers;
  T slope = T(0.2);

  std::size_t dim() const { return static_cast<std::size_t>(prototypes.cols()); }

  static RelGnnParams zeros(std::size_t d, std::size_t num_layers) {
    RelGnnParams p;
    const auto n = static_cast<Eigen::Index>(d);
    p.prototypes = Matrix<T>::Zero(kNumRelEdgeTypes, n);
    p.layers.resize(num_layers);
    for (auto& l : p.layers) {
      l.w_rel = Matrix<T>::Zero(n, n);
      l.w_msg = Matrix<T>::Zero(n, n);
      l.w_alpha = Matrix<T>::Zero(1, 2 * n);
    }
    return p;
  }

  // Prototypes and w_alpha ~ U(+-1/sqrt(d)); square matrices Xavier-uniform.
  static RelGnnParams random(std::size_t d, std::size_t num_layers, Rng& rng) {
    auto p = zeros(d, num_layers);
    const double vec_bound = 1.0 / std::sqrt(static_cast<double>(d));
    const double mat_bound = std::sqrt(6.0 / (2.0 * static_cast<double>(d)));
    fill_uniform(p.prototypes, rng, vec_bound);
    for (auto& l : p.layers) {
      fill_uniform(l.w_rel, rng, mat_bound);
      fill_uniform(l.w_msg, rng, mat_bound);
      fill_uniform(l.w_alpha, rng, vec_bound);
    }
    return p;
  }
};

// Layer-0 features: 1_d for active relation nodes, 0_d elsewhere.
template <class T>
Matrix<T> init_relation_features(const MergedRelationGraph& graph,
                                 std::span<const std::int32_t> active, std::size_t d) {
  Matrix<T> x = Matrix<T>::Zero(static_cast<Eigen::Index>(graph.num_nodes()),
                                static_cast<Eigen::Index>(d));
  for (auto r : active) {
    if (r < 0 || static_cast<std::size_t>(r) >= graph.num_nodes()) {
      throw ContractError("init_relation_features: relation node " + std::to_string(r) +
                          " out of range");
    }
    x.row(r).setOnes();
  }
  return x;
}

// Intermediates kept for the backward pass.
template <class T>
struct RelGnnCache {
  std::vector<Matrix<T>> inputs;             // x^(l), l = 0..L-1
  std::vector<Matrix<T>> pre_activation;     // z^(l)
  std::vector<Matrix<T>> node_messages;      // x^(l) W_msg^T
  std::vector<Matrix<T>> proto_messages;     // P W_msg^T
  std::vector<std::vector<T>> attention;     // alpha per edge, edge order of the graph
  Matrix<T> output;                          // R_global
};

// 1/|N(i)| per node; 0 for nodes without incoming edges.
template <class T>
ColVector<T> inverse_in_degree(const MergedRelationGraph& graph) {
  ColVector<T> out = ColVector<T>::Zero(static_cast<Eigen::Index>(graph.num_nodes()));
  for (const auto& e : graph.edges()) out[e.dst] += T(1);
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (out[i] > T(0)) out[i] = T(1) / out[i];
  }
  return out;
}

template <class T>
RelGnnCache<T> relgnn_forward(const RelGnnParams<T>& params, const MergedRelationGraph& graph,
                              Matrix<T> init) {
  const auto d = static_cast<Eigen::Index>(params.dim());
  if (init.rows() != static_cast<Eigen::Index>(graph.num_nodes()) || init.cols() != d) {
    throw ContractError("relgnn_forward: init shape " + std::to_string(init.rows()) + "x" +
                        std::to_string(init.cols()) + " does not match graph/params");
  }
  const auto edges = graph.edges();
  const auto inv_deg = inverse_in_degree<T>(graph);
  RelGnnCache<T> cache;
  Matrix<T> x = std::move(init);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    if (layer.w_rel.rows() != d || layer.w_msg.rows() != d || layer.w_alpha.cols() != 2 * d) {
      throw ContractError("relgnn_forward: layer " + std::to_string(l) + " shape mismatch");
    }
    const auto wa_src = layer.w_alpha.leftCols(d).transpose();
    const auto wa_dst = layer.w_alpha.rightCols(d).transpose();
    Matrix<T> node_msg = x * layer.w_msg.transpose();
    Matrix<T> proto_msg = params.prototypes * layer.w_msg.transpose();
    ColVector<T> src_score = x * wa_src;
    ColVector<T> proto_score = params.prototypes * wa_src;
    ColVector<T> dst_score = x * wa_dst;

    Matrix<T> z = x * layer.w_rel.transpose();
    std::vector<T> alpha(edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const auto& edge = edges[e];
      const auto t = static_cast<Eigen::Index>(edge.type);
      const T a = sigmoid(src_score[edge.src] + proto_score[t] + dst_score[edge.dst]);
      alpha[e] = a;
      z.row(edge.dst) += (a * inv_deg[edge.dst]) * (node_msg.row(edge.src) + proto_msg.row(t));
    }
    require_finite(z, "relgnn layer " + std::to_string(l));

    cache.inputs.push_back(x);
    x = z.unaryExpr([s = params.slope](T v) { return leaky_relu(v, s); });
    cache.pre_activation.push_back(std::move(z));
    cache.node_messages.push_back(std::move(node_msg));
    cache.proto_messages.push_back(std::move(proto_msg));
    cache.attention.push_back(std::move(alpha));
  }
  cache.output = std::move(x);
  return cache;
}

// Accumulates parameter gradients into `grad` given dL/dR_global.
template <class T>
void relgnn_backward(const RelGnnParams<T>& params, const MergedRelationGraph& graph,
                     const RelGnnCache<T>& cache, Matrix<T> d_out, RelGnnParams<T>& grad) {
  const auto d = static_cast<Eigen::Index>(params.dim());
  const auto n = static_cast<Eigen::Index>(graph.num_nodes());
  const auto edges = graph.edges();
  const auto inv_deg = inverse_in_degree<T>(graph);
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const auto& layer = params.layers[l];
    auto& g = grad.layers[l];
    const Matrix<T>& x = cache.inputs[l];
    const Matrix<T>& z = cache.pre_activation[l];
    const Matrix<T>& node_msg = cache.node_messages[l];
    const Matrix<T>& proto_msg = cache.proto_messages[l];
    const auto& alpha = cache.attention[l];

    Matrix<T> dz = d_out.cwiseProduct(
        z.unaryExpr([s = params.slope](T v) { return leaky_relu_grad(v, s); }));

    g.w_rel.noalias() += dz.transpose() * x;
    Matrix<T> dx = dz * layer.w_rel;
    const Matrix<T> dz_msg = dz.array().colwise() * inv_deg.array();

    // Message-path accumulators: per source node and per edge type.
    Matrix<T> by_src = Matrix<T>::Zero(n, d);
    Matrix<T> by_type = Matrix<T>::Zero(kNumRelEdgeTypes, d);
    ColVector<T> d_src_score = ColVector<T>::Zero(n);
    ColVector<T> d_dst_score = ColVector<T>::Zero(n);
    ColVector<T> d_proto_score = ColVector<T>::Zero(kNumRelEdgeTypes);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const auto& edge = edges[e];
      const auto t = static_cast<Eigen::Index>(edge.type);
      const T a = alpha[e];
      const auto dzi = dz_msg.row(edge.dst);
      const T da = dzi.dot(node_msg.row(edge.src) + proto_msg.row(t));
      by_src.row(edge.src) += a * dzi;
      by_type.row(t) += a * dzi;
      const T ds = da * a * (T(1) - a);
      d_src_score[edge.src] += ds;
      d_proto_score[t] += ds;
      d_dst_score[edge.dst] += ds;
    }
    g.w_msg.noalias() += by_src.transpose() * x + by_type.transpose() * params.prototypes;
    dx.noalias() += by_src * layer.w_msg;
    grad.prototypes.noalias() += by_type * layer.w_msg;

    const auto wa_src = layer.w_alpha.leftCols(d);
    const auto wa_dst = layer.w_alpha.rightCols(d);
    g.w_alpha.leftCols(d).noalias() +=
        d_src_score.transpose() * x + d_proto_score.transpose() * params.prototypes;
    g.w_alpha.rightCols(d).noalias() += d_dst_score.transpose() * x;
    dx.noalias() += d_src_score * wa_src + d_dst_score * wa_dst;
    grad.prototypes.noalias() += d_proto_score * wa_src;

    d_out = std::move(dx);
  }
}

}  // namespace eafm
