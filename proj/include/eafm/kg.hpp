#pragma once

// Knowledge graph and alignment task representation.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "eafm/error.hpp"

namespace eafm {

using EntityId = std::int32_t;
using RelationId = std::int32_t;

struct Triple {
  EntityId head = 0;
  RelationId rel = 0;
  EntityId tail = 0;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

inline std::string to_string(const Triple& t) {
  return "(" + std::to_string(t.head) + ", " + std::to_string(t.rel) + ", " +
         std::to_string(t.tail) + ")";
}

// One adjacency entry: the relation and the entity on the other end.
struct Neighbor {
  RelationId rel = 0;
  EntityId entity = 0;

  friend auto operator<=>(const Neighbor&, const Neighbor&) = default;
};

// Immutable, inverse-augmented knowledge graph with CSR adjacency.
//
// Relation ids [0, R) are the original relations and [R, 2R) their inverses,
// so inverse(r) is arithmetic.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  static KnowledgeGraph build(std::span<const Triple> raw, std::size_t num_entities,
                              std::size_t num_relations) {
    if (raw.empty()) throw DataError("build_graph: empty triple set");
    for (const Triple& t : raw) {
      if (t.head < 0 || static_cast<std::size_t>(t.head) >= num_entities || t.tail < 0 ||
          static_cast<std::size_t>(t.tail) >= num_entities || t.rel < 0 ||
          static_cast<std::size_t>(t.rel) >= num_relations) {
        throw DataError("build_graph: triple " + to_string(t) + " out of range (entities=" +
                        std::to_string(num_entities) +
                        ", relations=" + std::to_string(num_relations) + ")");
      }
    }

    KnowledgeGraph g;
    g.num_entities_ = num_entities;
    g.num_original_relations_ = num_relations;

    std::vector<Triple> originals(raw.begin(), raw.end());
    std::sort(originals.begin(), originals.end());
    originals.erase(std::unique(originals.begin(), originals.end()), originals.end());
    g.num_original_triples_ = originals.size();

    const auto offset = static_cast<RelationId>(num_relations);
    g.triples_.reserve(originals.size() * 2);
    g.triples_ = originals;
    for (const Triple& t : originals) g.triples_.push_back({t.tail, t.rel + offset, t.head});

    g.out_ = build_csr(g.triples_, num_entities, /*by_head=*/true, g.out_offsets_);
    g.in_ = build_csr(g.triples_, num_entities, /*by_head=*/false, g.in_offsets_);
    return g;
  }

  std::size_t num_entities() const { return num_entities_; }
  // Relation count after inverse augmentation (always even).
  std::size_t num_relations() const { return 2 * num_original_relations_; }
  std::size_t num_original_relations() const { return num_original_relations_; }
  std::size_t num_original_triples() const { return num_original_triples_; }

  // Original triples first (sorted), then their inverses in the same order.
  std::span<const Triple> triples() const { return triples_; }
  std::span<const Triple> original_triples() const {
    return std::span<const Triple>(triples_).first(num_original_triples_);
  }

  RelationId inverse(RelationId r) const {
    const auto n = static_cast<RelationId>(num_original_relations_);
    return r < n ? r + n : r - n;
  }
  bool is_inverse(RelationId r) const {
    return static_cast<std::size_t>(r) >= num_original_relations_;
  }

  // (rel, tail) for every stored triple with head e.
  std::span<const Neighbor> out(EntityId e) const {
    check_entity(e);
    return {out_.data() + out_offsets_[e], out_.data() + out_offsets_[e + 1]};
  }
  // (rel, head) for every stored triple with tail e.
  std::span<const Neighbor> in(EntityId e) const {
    check_entity(e);
    return {in_.data() + in_offsets_[e], in_.data() + in_offsets_[e + 1]};
  }

  bool valid_entity(EntityId e) const {
    return e >= 0 && static_cast<std::size_t>(e) < num_entities_;
  }
  void check_entity(EntityId e) const {
    if (!valid_entity(e)) {
      throw DataError("entity id " + std::to_string(e) + " out of range [0, " +
                      std::to_string(num_entities_) + ")");
    }
  }

 private:
  static std::vector<Neighbor> build_csr(const std::vector<Triple>& triples, std::size_t n,
                                         bool by_head, std::vector<std::size_t>& offsets) {
    offsets.assign(n + 1, 0);
    for (const Triple& t : triples) ++offsets[(by_head ? t.head : t.tail) + 1];
    for (std::size_t i = 0; i < n; ++i) offsets[i + 1] += offsets[i];
    std::vector<Neighbor> entries(triples.size());
    std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
    for (const Triple& t : triples) {
      const EntityId key = by_head ? t.head : t.tail;
      entries[cursor[key]++] = by_head ? Neighbor{t.rel, t.tail} : Neighbor{t.rel, t.head};
    }
    for (std::size_t i = 0; i < n; ++i) {
      std::sort(entries.begin() + static_cast<std::ptrdiff_t>(offsets[i]),
                entries.begin() + static_cast<std::ptrdiff_t>(offsets[i + 1]));
    }
    return entries;
  }

  std::size_t num_entities_ = 0;
  std::size_t num_original_relations_ = 0;
  std::size_t num_original_triples_ = 0;
  std::vector<Triple> triples_;
  std::vector<Neighbor> out_;
  std::vector<Neighbor> in_;
  std::vector<std::size_t> out_offsets_;
  std::vector<std::size_t> in_offsets_;
};

// Entities within k undirected hops of e, sorted ascending; always contains e.
inline std::vector<EntityId> khop_entities(const KnowledgeGraph& g, EntityId e, int k) {
  g.check_entity(e);
  if (k < 0) throw ContractError("khop_entities: negative hop count");
  std::vector<int> dist(g.num_entities(), -1);
  std::deque<EntityId> frontier{e};
  dist[e] = 0;
  std::vector<EntityId> reached{e};
  while (!frontier.empty()) {
    const EntityId u = frontier.front();
    frontier.pop_front();
    if (dist[u] == k) continue;
    // Augmentation puts every undirected neighbor in the out list.
    for (const Neighbor& nb : g.out(u)) {
      if (dist[nb.entity] < 0) {
        dist[nb.entity] = dist[u] + 1;
        reached.push_back(nb.entity);
        frontier.push_back(nb.entity);
      }
    }
  }
  std::sort(reached.begin(), reached.end());
  return reached;
}

// Relations (including inverses) on every augmented edge touching e, sorted.
// An original edge (e, r, x) or (x, r, e) contributes both r and inv(r).
inline std::vector<RelationId> one_hop_relations(const KnowledgeGraph& g, EntityId e) {
  std::vector<RelationId> rels;
  for (const Neighbor& nb : g.out(e)) rels.push_back(nb.rel);
  for (const Neighbor& nb : g.in(e)) rels.push_back(nb.rel);
  std::sort(rels.begin(), rels.end());
  rels.erase(std::unique(rels.begin(), rels.end()), rels.end());
  return rels;
}

using AlignedPair = std::pair<EntityId, EntityId>;

struct SeedAlignment {
  std::vector<AlignedPair> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }

  // Checks id ranges and one-to-one-ness.
  void validate(const KnowledgeGraph& g1, const KnowledgeGraph& g2,
                const std::string& label = "alignment") const {
    std::unordered_set<EntityId> left, right;
    for (const auto& [u, v] : pairs) {
      if (!g1.valid_entity(u) || !g2.valid_entity(v)) {
        throw DataError(label + ": pair (" + std::to_string(u) + ", " + std::to_string(v) +
                        ") references an invalid entity");
      }
      if (!left.insert(u).second || !right.insert(v).second) {
        throw DataError(label + ": entity appears in more than one pair (" + std::to_string(u) +
                        ", " + std::to_string(v) + ")");
      }
    }
  }
};

// Which graph a query entity belongs to.
enum class Side : std::uint8_t { kFirst = 0, kSecond = 1 };

inline Side opposite(Side s) { return s == Side::kFirst ? Side::kSecond : Side::kFirst; }

struct Query {
  Side side = Side::kFirst;
  EntityId entity = 0;

  friend auto operator<=>(const Query&, const Query&) = default;
};

struct AlignmentTask {
  KnowledgeGraph g1;
  KnowledgeGraph g2;
  SeedAlignment train;
  SeedAlignment valid;
  SeedAlignment test;

  const KnowledgeGraph& graph(Side s) const { return s == Side::kFirst ? g1 : g2; }

  void validate() const {
    train.validate(g1, g2, "train");
    valid.validate(g1, g2, "valid");
    test.validate(g1, g2, "test");
    std::unordered_set<EntityId> left, right;
    for (const SeedAlignment* s : {&train, &valid, &test}) {
      for (const auto& [u, v] : s->pairs) {
        if (!left.insert(u).second || !right.insert(v).second) {
          throw DataError("train/valid/test splits overlap at pair (" + std::to_string(u) + ", " +
                          std::to_string(v) + ")");
        }
      }
    }
  }

  // G1/G2 exchanged, every pair transposed.
  AlignmentTask swapped() const {
    auto flip = [](const SeedAlignment& s) {
      SeedAlignment out;
      for (const auto& [u, v] : s.pairs) out.pairs.emplace_back(v, u);
      return out;
    };
    return AlignmentTask{g2, g1, flip(train), flip(valid), flip(test)};
  }
};

}  // namespace eafm
