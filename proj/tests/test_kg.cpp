#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace eafm;
using namespace eafm::testing;

namespace {

std::set<Triple> as_set(std::span<const Triple> ts) { return {ts.begin(), ts.end()}; }

}  // namespace

TEST(KnowledgeGraph, SingleTripleGetsInverse) {
  const std::vector<Triple> raw{{0, 0, 1}};
  const auto g = KnowledgeGraph::build(raw, 2, 1);
  EXPECT_EQ(g.num_relations(), 2u);
  EXPECT_EQ(as_set(g.triples()), (std::set<Triple>{{0, 0, 1}, {1, 1, 0}}));
}

TEST(KnowledgeGraph, DuplicatesCollapse) {
  const std::vector<Triple> raw{{0, 0, 1}, {0, 0, 1}};
  const auto g = KnowledgeGraph::build(raw, 2, 1);
  EXPECT_EQ(g.num_original_triples(), 1u);
  EXPECT_EQ(g.triples().size(), 2u);
}

TEST(KnowledgeGraph, RejectsBadInput) {
  EXPECT_THROW(KnowledgeGraph::build(std::vector<Triple>{}, 3, 1), DataError);
  EXPECT_THROW(KnowledgeGraph::build(std::vector<Triple>{{0, 0, 5}}, 3, 1), DataError);
  EXPECT_THROW(KnowledgeGraph::build(std::vector<Triple>{{0, 2, 1}}, 3, 1), DataError);
  EXPECT_THROW(KnowledgeGraph::build(std::vector<Triple>{{-1, 0, 1}}, 3, 1), DataError);
}

TEST(KnowledgeGraph, SelfLoopKeepsDistinctInverse) {
  const auto g = KnowledgeGraph::build(std::vector<Triple>{{0, 0, 0}}, 1, 1);
  EXPECT_EQ(as_set(g.triples()), (std::set<Triple>{{0, 0, 0}, {0, 1, 0}}));
}

// Augmented counts follow mechanically from the published statistics of a
// 15K benchmark KG when no duplicates collapse: 248 -> 496 relations,
// 38,265 -> 76,530 triples.
TEST(KnowledgeGraph, AugmentedCountsScale) {
  Rng rng(3);
  std::set<Triple> raw;
  while (raw.size() < 38265) {
    raw.insert({static_cast<EntityId>(rng.uniform_index(15000)), static_cast<RelationId>(rng.uniform_index(248)),
                static_cast<EntityId>(rng.uniform_index(15000))});
  }
  const std::vector<Triple> v(raw.begin(), raw.end());
  const auto g = KnowledgeGraph::build(v, 15000, 248);
  EXPECT_EQ(g.num_relations(), 496u);
  EXPECT_EQ(g.triples().size(), 76530u);
}

TEST(KnowledgeGraph, InverseIsInvolution) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = build(random_raw_graph(rng, 40, 6));
    const auto all = as_set(g.triples());
    for (const Triple& t : g.triples()) {
      const Triple inv{t.tail, g.inverse(t.rel), t.head};
      EXPECT_TRUE(all.count(inv));
      EXPECT_EQ(g.inverse(g.inverse(t.rel)), t.rel);
      EXPECT_EQ(g.is_inverse(t.rel), t.rel >= static_cast<RelationId>(g.num_original_relations()));
    }
    // Exactly one inverse per original triple.
    EXPECT_EQ(g.triples().size(), 2 * g.num_original_triples());
  }
}

TEST(KnowledgeGraph, IndicesRoundTripToTriples) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto raw = random_raw_graph(rng, 40, 6);
    const auto g = build(raw);
    std::multiset<Triple> from_out, from_in;
    for (std::size_t e = 0; e < g.num_entities(); ++e) {
      for (const auto& nb : g.out(static_cast<EntityId>(e))) from_out.insert({static_cast<EntityId>(e), nb.rel, nb.entity});
      for (const auto& nb : g.in(static_cast<EntityId>(e))) from_in.insert({nb.entity, nb.rel, static_cast<EntityId>(e)});
    }
    const std::multiset<Triple> stored(g.triples().begin(), g.triples().end());
    EXPECT_EQ(from_out, stored);
    EXPECT_EQ(from_in, stored);
    // Full scan over raw input: deduplicated originals plus inverses.
    std::set<Triple> expect;
    for (const auto& t : raw.triples) {
      expect.insert(t);
      expect.insert({t.tail, static_cast<RelationId>(t.rel + raw.num_relations), t.head});
    }
    EXPECT_EQ(as_set(g.triples()), expect);
  }
}

TEST(Khop, PathGraph) {
  const auto g = KnowledgeGraph::build(std::vector<Triple>{{0, 0, 1}, {1, 0, 2}, {2, 0, 3}}, 4, 1);
  EXPECT_EQ(khop_entities(g, 0, 2), (std::vector<EntityId>{0, 1, 2}));
  EXPECT_EQ(khop_entities(g, 3, 1), (std::vector<EntityId>{2, 3}));
}

TEST(Khop, ZeroHopsIsSelf) {
  Rng rng(2);
  const auto g = build(random_raw_graph(rng, 30, 4));
  for (std::size_t e = 0; e < g.num_entities(); ++e) {
    EXPECT_EQ(khop_entities(g, static_cast<EntityId>(e), 0), (std::vector<EntityId>{static_cast<EntityId>(e)}));
  }
}

TEST(Khop, MatchesBfsOracleAndIsMonotone) {
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    auto raw = random_raw_graph(rng, 50, 5, 1.0);
    const auto g = build(raw);
    const auto e = static_cast<EntityId>(rng.uniform_index(g.num_entities()));
    std::vector<EntityId> prev;
    for (int k = 0; k <= 5; ++k) {
      const auto got = khop_entities(g, e, k);
      const auto want = bfs_oracle(raw.num_entities, raw.triples, e, k);
      EXPECT_EQ(std::set<EntityId>(got.begin(), got.end()), want) << "k=" << k;
      EXPECT_TRUE(std::includes(got.begin(), got.end(), prev.begin(), prev.end()));
      prev = got;
    }
  }
}

TEST(Khop, RejectsInvalidEntity) {
  const auto g = KnowledgeGraph::build(std::vector<Triple>{{0, 0, 1}}, 2, 1);
  EXPECT_THROW(khop_entities(g, 2, 1), DataError);
  EXPECT_THROW(khop_entities(g, -1, 1), DataError);
  EXPECT_THROW(khop_entities(g, 0, -1), ContractError);
}

TEST(OneHopRelations, SingleEdge) {
  const auto g = KnowledgeGraph::build(std::vector<Triple>{{0, 0, 1}}, 3, 1);
  // (0,0,1) and its inverse (1,1,0) both touch entities 0 and 1.
  EXPECT_EQ(one_hop_relations(g, 0), (std::vector<RelationId>{0, 1}));
  EXPECT_EQ(one_hop_relations(g, 1), (std::vector<RelationId>{0, 1}));
  EXPECT_TRUE(one_hop_relations(g, 2).empty());
  EXPECT_THROW(one_hop_relations(g, 3), DataError);
}

TEST(OneHopRelations, MatchesTripleScan) {
  Rng rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const auto raw = random_raw_graph(rng, 40, 6);
    const auto g = build(raw);
    for (std::size_t e = 0; e < g.num_entities(); ++e) {
      const auto got = one_hop_relations(g, static_cast<EntityId>(e));
      EXPECT_EQ(std::set<RelationId>(got.begin(), got.end()),
                one_hop_oracle(raw.triples, raw.num_relations, static_cast<EntityId>(e)));
    }
  }
}

TEST(Khop, RelabelingEquivariance) {
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    const auto raw = random_raw_graph(rng, 30, 4);
    const auto g = build(raw);
    const auto p = random_permutation<EntityId>(rng, raw.num_entities);
    RawGraph moved = raw;
    for (auto& t : moved.triples) t = {p[t.head], t.rel, p[t.tail]};
    const auto h = build(moved);
    for (std::size_t e = 0; e < raw.num_entities; ++e) {
      std::set<EntityId> mapped;
      for (EntityId x : khop_entities(g, static_cast<EntityId>(e), 2)) mapped.insert(p[x]);
      const auto got = khop_entities(h, p[e], 2);
      EXPECT_EQ(mapped, std::set<EntityId>(got.begin(), got.end()));
      EXPECT_EQ(one_hop_relations(g, static_cast<EntityId>(e)), one_hop_relations(h, p[e]));
    }
  }
}

TEST(SeedAlignment, ValidationRejectsBadPairs) {
  AlignmentTask t;
  t.g1 = KnowledgeGraph::build(std::vector<Triple>{{0, 0, 1}, {1, 0, 2}}, 3, 1);
  t.g2 = KnowledgeGraph::build(std::vector<Triple>{{0, 0, 1}, {1, 0, 2}}, 3, 1);
  SeedAlignment s;
  s.pairs = {{0, 0}, {0, 1}};
  EXPECT_THROW(s.validate(t.g1, t.g2, "seeds"), DataError);
  s.pairs = {{0, 5}};
  EXPECT_THROW(s.validate(t.g1, t.g2, "seeds"), DataError);
  t.train.pairs = {{0, 0}};
  t.test.pairs = {{0, 1}};
  EXPECT_THROW(t.validate(), DataError);
  t.test.pairs = {{1, 1}};
  EXPECT_NO_THROW(t.validate());
}
