#include <gtest/gtest.h>

#include <sstream>

#include "test_util.hpp"

using namespace eafm;
using namespace eafm::testing;

namespace {

AlignmentTask two_edge_task() {
  // G1: a=0 -r1-> b=1.  G2: x=0 -r2-> y=1.
  AlignmentTask t;
  t.g1 = KnowledgeGraph::build(std::vector<Triple>{{0, 0, 1}}, 2, 1);
  t.g2 = KnowledgeGraph::build(std::vector<Triple>{{0, 0, 1}}, 2, 1);
  return t;
}

void expect_structural_invariants(const MergedRelationGraph& g) {
  const auto s = edge_set(g);
  std::vector<int> inv_count(g.num_nodes(), 0);
  for (const auto& [a, b, t] : s) {
    if (t != 4) EXPECT_NE(a, b) << "self edge of type " << t;
    switch (t) {
      case 0: EXPECT_TRUE(s.count({b, a, 0})); break;
      case 1: EXPECT_TRUE(s.count({b, a, 2})); break;
      case 2: EXPECT_TRUE(s.count({b, a, 1})); break;
      case 3: EXPECT_TRUE(s.count({b, a, 3})); break;
      case 4: ++inv_count[a]; EXPECT_TRUE(s.count({b, a, 4})); break;
    }
  }
  for (std::size_t i = 0; i < g.num_nodes(); ++i) EXPECT_EQ(inv_count[i], 1) << "node " << i;
}

}  // namespace

TEST(UnifyEntities, CountsWithOneSeed) {
  AlignmentTask t;
  t.g1 = KnowledgeGraph::build(std::vector<Triple>{{0, 0, 1}, {1, 0, 2}}, 3, 1);
  t.g2 = t.g1;
  SeedAlignment s;
  s.pairs = {{0, 0}};
  const auto u = unify_entities(t, s);
  EXPECT_EQ(u.size, 5u);
  EXPECT_EQ(u.id(Side::kFirst, 0), u.id(Side::kSecond, 0));
  EXPECT_EQ(unify_entities(t, SeedAlignment{}).size, 6u);
}

TEST(UnifyEntities, CanonicalOrder) {
  AlignmentTask t;
  t.g1 = KnowledgeGraph::build(std::vector<Triple>{{0, 0, 1}, {1, 0, 2}}, 3, 1);
  t.g2 = t.g1;
  SeedAlignment s;
  s.pairs = {{2, 1}};
  const auto u = unify_entities(t, s);
  EXPECT_EQ(u.first, (std::vector<std::int32_t>{0, 1, 2}));
  EXPECT_EQ(u.second, (std::vector<std::int32_t>{3, 2, 4}));
}

TEST(UnifyEntities, MatchesUnionFind) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto task = random_task(rng);
    const auto u = unify_entities(task, task.train);
    const std::size_t n1 = task.g1.num_entities(), n2 = task.g2.num_entities();
    UnionFind uf(n1 + n2);
    for (const auto& [a, b] : task.train.pairs) uf.unite(a, n1 + b);
    EXPECT_EQ(u.size, uf.components());
    EXPECT_EQ(u.size, n1 + n2 - task.train.size());
    // Same unified id iff same union-find component.
    for (std::size_t i = 0; i < n1 + n2; ++i) {
      for (std::size_t j = 0; j < n1 + n2; ++j) {
        const auto ui = i < n1 ? u.first[i] : u.second[i - n1];
        const auto uj = j < n1 ? u.first[j] : u.second[j - n1];
        EXPECT_EQ(ui == uj, uf.find(i) == uf.find(j));
      }
    }
  }
}

TEST(UnifyEntities, RejectsInvalidSeed) {
  const auto t = two_edge_task();
  SeedAlignment s;
  s.pairs = {{0, 7}};
  EXPECT_THROW(unify_entities(t, s), DataError);
}

TEST(RelationGraph, SeedBridgesTwoSingleEdgeGraphs) {
  auto t = two_edge_task();
  SeedAlignment s;
  s.pairs = {{0, 0}};
  const auto g = build_relation_graph(t, unify_entities(t, s));
  // Nodes: r1=0, inv(r1)=1, r2=2, inv(r2)=3.
  ASSERT_EQ(g.num_nodes(), 4u);
  const auto e = edge_set(g);
  EXPECT_TRUE(e.count({0, 2, 0}));
  EXPECT_TRUE(e.count({2, 0, 0}));
  EXPECT_TRUE(e.count({1, 3, 3}));
  EXPECT_TRUE(e.count({3, 1, 3}));
  EXPECT_TRUE(e.count({0, 3, 1}));  // head of r1 is tail of inv(r2)
  EXPECT_TRUE(e.count({3, 0, 2}));
  EXPECT_TRUE(e.count({2, 1, 1}));
  EXPECT_TRUE(e.count({1, 2, 2}));
  EXPECT_EQ(e, relgraph_oracle(t, s));
  expect_structural_invariants(g);
}

TEST(RelationGraph, NoSeedsMeansNoCrossEdges) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    auto task = random_task(rng);
    const auto g = build_relation_graph(task, unify_entities(task, SeedAlignment{}));
    const auto r1 = static_cast<int>(task.g1.num_relations());
    for (const auto& [a, b, t] : edge_set(g)) {
      EXPECT_EQ(a < r1, b < r1) << "cross edge " << a << "->" << b << " type " << t;
    }
  }
}

TEST(RelationGraph, MatchesBruteForceScan) {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const auto task = random_task(rng);
    const auto g = build_relation_graph(task, unify_entities(task, task.train));
    ASSERT_EQ(edge_set(g), relgraph_oracle(task, task.train)) << "trial " << trial;
    expect_structural_invariants(g);
  }
}

TEST(RelationGraph, InverseSwitchOffMatchesScan) {
  Rng rng(18);
  for (int trial = 0; trial < 30; ++trial) {
    const auto task = random_task(rng);
    RelationGraphOptions opts;
    opts.include_inverses = false;
    const auto g = build_relation_graph(task, unify_entities(task, task.train), opts);
    EXPECT_EQ(edge_set(g), relgraph_oracle(task, task.train, false));
  }
}

TEST(RelationGraph, AddingSeedsNeverRemovesEdges) {
  Rng rng(19);
  for (int trial = 0; trial < 30; ++trial) {
    const auto task = random_task(rng);
    SeedAlignment seeds;
    auto prev = edge_set(build_relation_graph(task, unify_entities(task, seeds)));
    for (const auto& p : task.train.pairs) {
      seeds.pairs.push_back(p);
      auto next = edge_set(build_relation_graph(task, unify_entities(task, seeds)));
      EXPECT_TRUE(std::includes(next.begin(), next.end(), prev.begin(), prev.end()));
      prev = std::move(next);
    }
  }
}

TEST(RelationGraph, IncomingListsPartitionEdges) {
  Rng rng(20);
  const auto task = random_task(rng);
  const auto g = build_relation_graph(task, unify_entities(task, task.train));
  std::size_t total = 0;
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    for (const auto& e : g.incoming(static_cast<std::int32_t>(i))) EXPECT_EQ(e.dst, static_cast<std::int32_t>(i));
    total += g.incoming(static_cast<std::int32_t>(i)).size();
  }
  EXPECT_EQ(total, g.edges().size());
  std::size_t by_type = 0;
  for (std::size_t t = 0; t < kNumRelEdgeTypes; ++t) by_type += g.count(static_cast<RelEdgeType>(t));
  EXPECT_EQ(by_type, g.edges().size());
}

TEST(RelationGraph, EdgeListDump) {
  auto t = two_edge_task();
  const auto g = build_relation_graph(t, unify_entities(t, SeedAlignment{}));
  std::ostringstream os;
  g.write_edge_list(os);
  std::istringstream is(os.str());
  std::string line;
  std::size_t lines = 0;
  while (std::getline(is, line)) {
    ++lines;
    std::istringstream fields(line);
    int a = -1, b = -1;
    std::string type;
    fields >> a >> b >> type;
    EXPECT_GE(a, 0);
    EXPECT_GE(b, 0);
    EXPECT_TRUE(type == "HH" || type == "HT" || type == "TH" || type == "TT" || type == "INV") << type;
    EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 2);
  }
  EXPECT_EQ(lines, g.edges().size());
}

// sameAs-bridged variant: the disjoint union plus a sameAs relation per
// seed; its node pair must be wired like any other relation.
TEST(SameAsRelationGraph, BridgesThroughSameAsNode) {
  auto t = two_edge_task();
  SeedAlignment s;
  s.pairs = {{0, 0}};
  const auto g = build_sameas_relation_graph(t, s);
  ASSERT_EQ(g.num_nodes(), 6u);
  const auto e = edge_set(g);
  // sameAs (node 4) is headed at a, like r1 (node 0); its tail x heads r2.
  EXPECT_TRUE(e.count({4, 0, 0}));
  EXPECT_TRUE(e.count({2, 4, 1}));  // head of r2 (x) is tail of sameAs
  EXPECT_FALSE(e.count({0, 2, 0}));  // no direct merge of a and x
  expect_structural_invariants(g);
  const auto without = edge_set(build_relation_graph(t, unify_entities(t, SeedAlignment{})));
  for (const auto& edge : without) EXPECT_TRUE(e.count(edge));
}
