#pragma once

// Merged relation graph over the relations of both KGs.

#include <algorithm>
#include <array>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "eafm/error.hpp"
#include "eafm/kg.hpp"

namespace eafm {

enum class RelEdgeType : std::uint8_t {
  kHeadHead = 0,
  kHeadTail = 1,  // head of src is the tail of dst
  kTailHead = 2,
  kTailTail = 3,
  kInverse = 4,
};

inline constexpr std::size_t kNumRelEdgeTypes = 5;

inline std::string_view edge_type_name(RelEdgeType t) {
  static constexpr std::array<std::string_view, kNumRelEdgeTypes> names{"HH", "HT", "TH", "TT",
                                                                         "INV"};
  return names[static_cast<std::size_t>(t)];
}

struct RelEdge {
  std::int32_t src = 0;
  std::int32_t dst = 0;
  RelEdgeType type = RelEdgeType::kHeadHead;

  friend auto operator<=>(const RelEdge&, const RelEdge&) = default;
};

// Maps (side, entity) to ids of the virtual unified entity space. G1
// entities take ids [0, |E1|) in order; unmatched G2 entities follow in
// order; a seeded G2 entity reuses its G1 partner's id.
struct UnifiedEntitySpace {
  std::vector<std::int32_t> first;
  std::vector<std::int32_t> second;
  std::size_t size = 0;

  std::int32_t id(Side s, EntityId e) const { return s == Side::kFirst ? first[e] : second[e]; }
};

inline UnifiedEntitySpace unify_entities(const AlignmentTask& task, const SeedAlignment& seeds) {
  seeds.validate(task.g1, task.g2, "seeds");
  UnifiedEntitySpace u;
  const auto n1 = task.g1.num_entities();
  const auto n2 = task.g2.num_entities();
  u.first.resize(n1);
  u.second.assign(n2, -1);
  for (std::size_t i = 0; i < n1; ++i) u.first[i] = static_cast<std::int32_t>(i);
  for (const auto& [a, b] : seeds.pairs) u.second[b] = a;
  auto next = static_cast<std::int32_t>(n1);
  for (std::size_t j = 0; j < n2; ++j) {
    if (u.second[j] < 0) u.second[j] = next++;
  }
  u.size = static_cast<std::size_t>(next);
  return u;
}

// Relation-node numbering: G1 relations, then G2 relations, then any extra
// bridge relations an ablation adds.
struct RelationNodeLayout {
  std::size_t first_count = 0;
  std::size_t second_count = 0;
  std::size_t extra_count = 0;

  std::size_t total() const { return first_count + second_count + extra_count; }
  std::int32_t node(Side s, RelationId r) const {
    return s == Side::kFirst ? r : static_cast<std::int32_t>(first_count) + r;
  }
  std::int32_t extra(std::size_t i) const {
    return static_cast<std::int32_t>(first_count + second_count + i);
  }
};

class MergedRelationGraph {
 public:
  MergedRelationGraph() = default;

  // Edges are sorted by (dst, src, type) and deduplicated.
  static MergedRelationGraph from_edges(std::size_t num_nodes, std::vector<RelEdge> edges) {
    for (const RelEdge& e : edges) {
      if (e.src < 0 || e.dst < 0 || static_cast<std::size_t>(e.src) >= num_nodes ||
          static_cast<std::size_t>(e.dst) >= num_nodes) {
        throw ContractError("relation graph edge endpoint out of range");
      }
    }
    std::sort(edges.begin(), edges.end(), [](const RelEdge& a, const RelEdge& b) {
      return std::tie(a.dst, a.src, a.type) < std::tie(b.dst, b.src, b.type);
    });
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    MergedRelationGraph g;
    g.num_nodes_ = num_nodes;
    g.edges_ = std::move(edges);
    g.offsets_.assign(num_nodes + 1, 0);
    for (const RelEdge& e : g.edges_) ++g.offsets_[e.dst + 1];
    for (std::size_t i = 0; i < num_nodes; ++i) g.offsets_[i + 1] += g.offsets_[i];
    return g;
  }

  std::size_t num_nodes() const { return num_nodes_; }
  std::span<const RelEdge> edges() const { return edges_; }
  std::span<const RelEdge> incoming(std::int32_t node) const {
    return std::span<const RelEdge>(edges_).subspan(offsets_[node],
                                                    offsets_[node + 1] - offsets_[node]);
  }

  std::size_t count(RelEdgeType t) const {
    return static_cast<std::size_t>(
        std::count_if(edges_.begin(), edges_.end(), [t](const RelEdge& e) { return e.type == t; }));
  }

  // Debug dump: one `src<TAB>dst<TAB>type` line per edge.
  void write_edge_list(std::ostream& os) const {
    for (const RelEdge& e : edges_) os << e.src << '\t' << e.dst << '\t' << edge_type_name(e.type) << '\n';
  }

 private:
  std::size_t num_nodes_ = 0;
  std::vector<RelEdge> edges_;
  std::vector<std::size_t> offsets_;
};

// Five-type co-occurrence scan. `triples` live in a shared entity space of
// `num_entities` ids, with `rel` already mapped to relation-node ids.
// `inverse_pairs` lists (r, inv(r)) node pairs that receive INV edges.
inline MergedRelationGraph scan_relation_graph(
    std::size_t num_nodes, std::size_t num_entities, std::span<const Triple> triples,
    std::span<const std::pair<std::int32_t, std::int32_t>> inverse_pairs) {
  // Relations headed / tailed at each entity, CSR.
  auto incident = [&](bool heads) {
    std::vector<std::size_t> off(num_entities + 1, 0);
    for (const Triple& t : triples) ++off[(heads ? t.head : t.tail) + 1];
    for (std::size_t i = 0; i < num_entities; ++i) off[i + 1] += off[i];
    std::vector<std::int32_t> rel(triples.size());
    std::vector<std::size_t> cur(off.begin(), off.end() - 1);
    for (const Triple& t : triples) rel[cur[heads ? t.head : t.tail]++] = t.rel;
    std::vector<std::vector<std::int32_t>> lists(num_entities);
    for (std::size_t i = 0; i < num_entities; ++i) {
      lists[i].assign(rel.begin() + static_cast<std::ptrdiff_t>(off[i]),
                      rel.begin() + static_cast<std::ptrdiff_t>(off[i + 1]));
      std::sort(lists[i].begin(), lists[i].end());
      lists[i].erase(std::unique(lists[i].begin(), lists[i].end()), lists[i].end());
    }
    return lists;
  };
  for (const Triple& t : triples) {
    if (t.head < 0 || t.tail < 0 || static_cast<std::size_t>(t.head) >= num_entities ||
        static_cast<std::size_t>(t.tail) >= num_entities || t.rel < 0 ||
        static_cast<std::size_t>(t.rel) >= num_nodes) {
      throw ContractError("scan_relation_graph: triple " + to_string(t) + " out of range");
    }
  }
  const auto heads = incident(true);
  const auto tails = incident(false);

  // Bit k of mask[src * n + dst] marks edge type k (HH, HT, TH, TT).
  std::vector<std::uint8_t> mask(num_nodes * num_nodes, 0);
  auto mark = [&](std::int32_t a, std::int32_t b, RelEdgeType t) {
    if (a != b) mask[static_cast<std::size_t>(a) * num_nodes + b] |= 1u << static_cast<int>(t);
  };
  for (std::size_t e = 0; e < num_entities; ++e) {
    const auto& hs = heads[e];
    const auto& ts = tails[e];
    for (auto a : hs) {
      for (auto b : hs) mark(a, b, RelEdgeType::kHeadHead);
      for (auto b : ts) {
        mark(a, b, RelEdgeType::kHeadTail);
        mark(b, a, RelEdgeType::kTailHead);
      }
    }
    for (auto a : ts) {
      for (auto b : ts) mark(a, b, RelEdgeType::kTailTail);
    }
  }

  std::vector<RelEdge> edges;
  for (std::size_t a = 0; a < num_nodes; ++a) {
    for (std::size_t b = 0; b < num_nodes; ++b) {
      const auto m = mask[a * num_nodes + b];
      if (m == 0) continue;
      for (int k = 0; k < 4; ++k) {
        if (m & (1u << k)) {
          edges.push_back({static_cast<std::int32_t>(a), static_cast<std::int32_t>(b),
                           static_cast<RelEdgeType>(k)});
        }
      }
    }
  }
  for (const auto& [r, inv] : inverse_pairs) {
    edges.push_back({r, inv, RelEdgeType::kInverse});
    edges.push_back({inv, r, RelEdgeType::kInverse});
  }
  return MergedRelationGraph::from_edges(num_nodes, std::move(edges));
}

struct RelationGraphOptions {
  // When false, only original (non-inverse) relations enter the HH/HT/TH/TT scan.
  bool include_inverses = true;
};

namespace detail {

inline void append_side(const KnowledgeGraph& g, Side side, const RelationNodeLayout& layout,
                        const std::vector<std::int32_t>& ids, bool include_inverses,
                        std::vector<Triple>& triples,
                        std::vector<std::pair<std::int32_t, std::int32_t>>& inverse_pairs) {
  for (const Triple& t : g.triples()) {
    if (!include_inverses && g.is_inverse(t.rel)) continue;
    triples.push_back({ids[t.head], layout.node(side, t.rel), ids[t.tail]});
  }
  for (std::size_t r = 0; r < g.num_original_relations(); ++r) {
    const auto rr = static_cast<RelationId>(r);
    inverse_pairs.emplace_back(layout.node(side, rr), layout.node(side, g.inverse(rr)));
  }
}

}  // namespace detail

inline RelationNodeLayout relation_layout(const AlignmentTask& task, std::size_t extra = 0) {
  return {task.g1.num_relations(), task.g2.num_relations(), extra};
}

// The merged relation graph through the seed-unified entity space.
inline MergedRelationGraph build_relation_graph(const AlignmentTask& task,
                                                const UnifiedEntitySpace& unified,
                                                RelationGraphOptions opts = {}) {
  if (unified.first.size() != task.g1.num_entities() ||
      unified.second.size() != task.g2.num_entities()) {
    throw ContractError("build_relation_graph: unified space does not match task");
  }
  const auto layout = relation_layout(task);
  std::vector<Triple> triples;
  std::vector<std::pair<std::int32_t, std::int32_t>> inv;
  detail::append_side(task.g1, Side::kFirst, layout, unified.first, opts.include_inverses, triples,
                      inv);
  detail::append_side(task.g2, Side::kSecond, layout, unified.second, opts.include_inverses,
                      triples, inv);
  return scan_relation_graph(layout.total(), unified.size, triples, inv);
}

// Variant that keeps the entity sets disjoint and adds a `sameAs` relation
// (node extra(0)) with its inverse (extra(1)) over the seed pairs.
inline MergedRelationGraph build_sameas_relation_graph(const AlignmentTask& task,
                                                       const SeedAlignment& seeds,
                                                       RelationGraphOptions opts = {}) {
  seeds.validate(task.g1, task.g2, "seeds");
  const auto layout = relation_layout(task, 2);
  const auto n1 = task.g1.num_entities();
  const auto n2 = task.g2.num_entities();
  std::vector<std::int32_t> ids1(n1), ids2(n2);
  for (std::size_t i = 0; i < n1; ++i) ids1[i] = static_cast<std::int32_t>(i);
  for (std::size_t j = 0; j < n2; ++j) ids2[j] = static_cast<std::int32_t>(n1 + j);
  std::vector<Triple> triples;
  std::vector<std::pair<std::int32_t, std::int32_t>> inv;
  detail::append_side(task.g1, Side::kFirst, layout, ids1, opts.include_inverses, triples, inv);
  detail::append_side(task.g2, Side::kSecond, layout, ids2, opts.include_inverses, triples, inv);
  const auto same = layout.extra(0);
  const auto same_inv = layout.extra(1);
  for (const auto& [u, v] : seeds.pairs) {
    triples.push_back({ids1[u], same, ids2[v]});
    if (opts.include_inverses) triples.push_back({ids2[v], same_inv, ids1[u]});
  }
  inv.emplace_back(same, same_inv);
  return scan_relation_graph(layout.total(), n1 + n2, triples, inv);
}

// Merged graph plus the two `sameAs` nodes, used when both KGs are joined
// into one propagation graph. In the unified space a seed's sameAs triple is
// a self-loop on its shared id, so sameAs co-occurs with every relation
// incident to a seed.
inline MergedRelationGraph build_joined_relation_graph(const AlignmentTask& task,
                                                       const UnifiedEntitySpace& unified,
                                                       const SeedAlignment& seeds,
                                                       RelationGraphOptions opts = {}) {
  const auto layout = relation_layout(task, 2);
  std::vector<Triple> triples;
  std::vector<std::pair<std::int32_t, std::int32_t>> inv;
  detail::append_side(task.g1, Side::kFirst, layout, unified.first, opts.include_inverses, triples,
                      inv);
  detail::append_side(task.g2, Side::kSecond, layout, unified.second, opts.include_inverses,
                      triples, inv);
  const auto same = layout.extra(0);
  const auto same_inv = layout.extra(1);
  for (const auto& [u, v] : seeds.pairs) {
    const auto w = unified.first[u];
    triples.push_back({w, same, w});
    if (opts.include_inverses) triples.push_back({w, same_inv, w});
  }
  inv.emplace_back(same, same_inv);
  return scan_relation_graph(layout.total(), unified.size, triples, inv);
}

}  // namespace eafm
