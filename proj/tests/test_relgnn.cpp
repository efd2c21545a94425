#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace eafm;
using namespace eafm::testing;

namespace {

using Mat = Matrix<double>;

MergedRelationGraph graph_of(std::size_t n, std::vector<RelEdge> edges) {
  return MergedRelationGraph::from_edges(n, std::move(edges));
}

MergedRelationGraph random_graph(Rng& rng, std::size_t n, double p) {
  std::vector<RelEdge> edges;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t t = 0; t < kNumRelEdgeTypes; ++t) {
        if (a != b && rng.uniform(0.0, 1.0) < p) {
          edges.push_back({static_cast<std::int32_t>(a), static_cast<std::int32_t>(b), static_cast<RelEdgeType>(t)});
        }
      }
    }
  }
  return graph_of(n, std::move(edges));
}

Mat random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Mat m(r, c);
  fill_uniform(m, rng, 1.0);
  return m;
}

// Scalar loops straight from the layer definition.
std::vector<std::vector<double>> reference_forward(const RelGnnParams<double>& p, const MergedRelationGraph& g,
                                                   std::vector<std::vector<double>> x) {
  const std::size_t d = p.dim(), n = g.num_nodes();
  std::vector<int> indeg(n, 0);
  for (const auto& e : g.edges()) ++indeg[e.dst];
  for (const auto& layer : p.layers) {
    std::vector<std::vector<double>> z(n, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = 0; b < d; ++b) z[i][a] += layer.w_rel(a, b) * x[i][b];
      }
    }
    for (const auto& e : g.edges()) {
      std::vector<double> rt(d);
      for (std::size_t b = 0; b < d; ++b) rt[b] = x[e.src][b] + p.prototypes(static_cast<int>(e.type), b);
      double s = 0;
      for (std::size_t b = 0; b < d; ++b) s += layer.w_alpha(0, b) * rt[b] + layer.w_alpha(0, d + b) * x[e.dst][b];
      const double alpha = 1.0 / (1.0 + std::exp(-s));
      for (std::size_t a = 0; a < d; ++a) {
        double m = 0;
        for (std::size_t b = 0; b < d; ++b) m += layer.w_msg(a, b) * rt[b];
        z[e.dst][a] += alpha * m / indeg[e.dst];
      }
    }
    for (auto& row : z) {
      for (auto& v : row) v = v > 0 ? v : p.slope * v;
    }
    x = std::move(z);
  }
  return x;
}

std::vector<std::vector<double>> to_rows(const Mat& m) {
  std::vector<std::vector<double>> out(m.rows(), std::vector<double>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  }
  return out;
}

}  // namespace

TEST(RelGnn, IsolatedNodeWithIdentityKeepsOnes) {
  auto p = RelGnnParams<double>::zeros(3, 1);
  p.layers[0].w_rel = Mat::Identity(3, 3);
  const auto g = graph_of(1, {});
  const auto out = relgnn_forward(p, g, Mat(Mat::Ones(1, 3))).output;
  EXPECT_TRUE(out.isApprox(Mat::Ones(1, 3)));
}

TEST(RelGnn, ZeroGateWeightsGiveHalf) {
  Rng rng(1);
  auto p = RelGnnParams<double>::random(4, 2, rng);
  for (auto& l : p.layers) l.w_alpha.setZero();
  const auto g = random_graph(rng, 6, 0.2);
  const auto cache = relgnn_forward(p, g, random_matrix(rng, 6, 4));
  for (const auto& layer : cache.attention) {
    for (double a : layer) EXPECT_DOUBLE_EQ(a, 0.5);
  }
}

// Three nodes, d=2, W_rel = W_msg = I, zero gates, HH prototype (0.5, -1).
// Edges 0->1, 2->1, 1->0 (all HH). Node 1 averages two messages.
TEST(RelGnn, HandComputedThreeNodes) {
  auto p = RelGnnParams<double>::zeros(2, 1);
  p.layers[0].w_rel = Mat::Identity(2, 2);
  p.layers[0].w_msg = Mat::Identity(2, 2);
  p.prototypes.row(0) << 0.5, -1.0;
  const auto g = graph_of(3, {{0, 1, RelEdgeType::kHeadHead}, {2, 1, RelEdgeType::kHeadHead}, {1, 0, RelEdgeType::kHeadHead}});
  Mat x(3, 2);
  x << 1, 1, 0, 0, 2, 0;
  const auto out = relgnn_forward(p, g, x).output;
  // node 0: (1,1) + 0.5 * ((0,0) + p) = (1.25, 0.5)
  EXPECT_NEAR(out(0, 0), 1.25, 1e-12);
  EXPECT_NEAR(out(0, 1), 0.5, 1e-12);
  // node 1: 0.5 * 0.5 * ((1.5,0) + (2.5,-1)) = (1, -0.25) -> LeakyReLU (1, -0.05)
  EXPECT_NEAR(out(1, 0), 1.0, 1e-12);
  EXPECT_NEAR(out(1, 1), -0.05, 1e-12);
  // node 2: no incoming edges
  EXPECT_NEAR(out(2, 0), 2.0, 1e-12);
  EXPECT_NEAR(out(2, 1), 0.0, 1e-12);
}

TEST(RelGnn, MatchesScalarReference) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(8), d = 1 + rng.uniform_index(5);
    auto p = RelGnnParams<double>::random(d, 1 + rng.uniform_index(3), rng);
    const auto g = random_graph(rng, n, 0.15);
    const Mat x = random_matrix(rng, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    const auto got = relgnn_forward(p, g, x).output;
    const auto want = reference_forward(p, g, to_rows(x));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(got(i, j), want[i][j], 1e-12);
    }
  }
}

TEST(RelGnn, ZeroInputAndPrototypesStayZero) {
  Rng rng(2);
  auto p = RelGnnParams<double>::random(5, 3, rng);
  p.prototypes.setZero();
  const auto g = random_graph(rng, 7, 0.3);
  EXPECT_TRUE(relgnn_forward(p, g, Mat(Mat::Zero(7, 5))).output.isZero(0.0));
}

TEST(RelGnn, AttentionInOpenUnitInterval) {
  Rng rng(3);
  const auto p = RelGnnParams<double>::random(4, 3, rng);
  const auto g = random_graph(rng, 8, 0.2);
  const auto cache = relgnn_forward(p, g, random_matrix(rng, 8, 4));
  for (const auto& layer : cache.attention) {
    ASSERT_EQ(layer.size(), g.edges().size());
    for (double a : layer) {
      EXPECT_GT(a, 0.0);
      EXPECT_LT(a, 1.0);
    }
  }
}

// Directed path 0->1->2->3->4: after L layers node i sees only i-L..i.
TEST(RelGnn, ReceptiveFieldIsLayerCount) {
  Rng rng(4);
  const auto p = RelGnnParams<double>::random(3, 2, rng);
  std::vector<RelEdge> edges;
  for (int i = 0; i < 4; ++i) edges.push_back({i, i + 1, RelEdgeType::kTailHead});
  const auto g = graph_of(5, edges);
  const Mat x = random_matrix(rng, 5, 3);
  Mat y = x;
  y.row(0) += Mat::Constant(1, 3, 0.7);
  const auto a = relgnn_forward(p, g, x).output;
  const auto b = relgnn_forward(p, g, y).output;
  EXPECT_TRUE(a.row(3).isApprox(b.row(3)));
  EXPECT_TRUE(a.row(4).isApprox(b.row(4)));
  EXPECT_FALSE(a.row(2).isApprox(b.row(2)));
}

TEST(RelGnn, NodeRelabelingEquivariance) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 3 + rng.uniform_index(6);
    const auto p = RelGnnParams<double>::random(4, 2, rng);
    const auto g = random_graph(rng, n, 0.2);
    const auto perm = random_permutation<std::int32_t>(rng, n);
    std::vector<RelEdge> moved;
    for (const auto& e : g.edges()) moved.push_back({perm[e.src], perm[e.dst], e.type});
    const Mat x = random_matrix(rng, static_cast<Eigen::Index>(n), 4);
    Mat px(x.rows(), x.cols());
    for (std::size_t i = 0; i < n; ++i) px.row(perm[i]) = x.row(i);
    const auto a = relgnn_forward(p, g, x).output;
    const auto b = relgnn_forward(p, graph_of(n, moved), px).output;
    for (std::size_t i = 0; i < n; ++i) EXPECT_TRUE(a.row(i).isApprox(b.row(perm[i]), 1e-12));
  }
}

TEST(RelGnn, InverseInDegree) {
  const auto g = graph_of(3, {{0, 1, RelEdgeType::kHeadHead}, {2, 1, RelEdgeType::kTailTail}, {2, 1, RelEdgeType::kHeadHead}});
  const auto w = inverse_in_degree<double>(g);
  EXPECT_DOUBLE_EQ(w[0], 0.0);
  EXPECT_DOUBLE_EQ(w[1], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(w[2], 0.0);
}

TEST(RelGnn, BackwardMatchesFiniteDifferences) {
  Rng rng(6);
  auto p = RelGnnParams<double>::random(3, 2, rng);
  const auto g = random_graph(rng, 5, 0.25);
  const Mat x = random_matrix(rng, 5, 3);
  const Mat probe = random_matrix(rng, 5, 3);
  auto loss = [&](const RelGnnParams<double>& q) { return relgnn_forward(q, g, x).output.cwiseProduct(probe).sum(); };
  auto grad = RelGnnParams<double>::zeros(3, 2);
  relgnn_backward(p, g, relgnn_forward(p, g, x), probe, grad);
  auto check = [&](Mat& param, const Mat& analytic) {
    for (Eigen::Index i = 0; i < param.size(); ++i) {
      const double keep = param.data()[i];
      param.data()[i] = keep + 1e-6;
      const double up = loss(p);
      param.data()[i] = keep - 1e-6;
      const double down = loss(p);
      param.data()[i] = keep;
      EXPECT_NEAR(analytic.data()[i], (up - down) / 2e-6, 1e-5);
    }
  };
  check(p.prototypes, grad.prototypes);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    check(p.layers[l].w_rel, grad.layers[l].w_rel);
    check(p.layers[l].w_msg, grad.layers[l].w_msg);
    check(p.layers[l].w_alpha, grad.layers[l].w_alpha);
  }
}

TEST(RelGnn, InitFeatures) {
  const auto g = graph_of(4, {});
  const std::vector<std::int32_t> active{1, 3};
  const auto x = init_relation_features<double>(g, active, 2);
  Mat want(4, 2);
  want << 0, 0, 1, 1, 0, 0, 1, 1;
  EXPECT_EQ(x, want);
  const std::vector<std::int32_t> bad{4};
  EXPECT_THROW(init_relation_features<double>(g, bad, 2), ContractError);
}

TEST(RelGnn, RejectsShapeMismatch) {
  const auto p = RelGnnParams<double>::zeros(3, 1);
  EXPECT_THROW(relgnn_forward(p, graph_of(2, {}), Mat(Mat::Zero(3, 3))), ContractError);
  EXPECT_THROW(relgnn_forward(p, graph_of(2, {}), Mat(Mat::Zero(2, 4))), ContractError);
}
