#pragma once

// Synthetic KG-pair generator with a known ground-truth alignment.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "eafm/error.hpp"
#include "eafm/kg.hpp"
#include "eafm/rng.hpp"

namespace eafm {

struct SynthSpec {
  std::size_t num_entities = 300;
  std::size_t num_relations = 10;
  double avg_degree = 4.0;
  double drop_first = 0.0;   // per-triple drop rate for G1
  double drop_second = 0.0;  // per-triple drop rate for G2
  bool relation_renaming = false;
  double seed_fraction = 0.3;
  std::uint64_t seed = 1;

  void validate() const {
    if (num_entities < 2) throw ConfigError("synth: need at least 2 entities");
    if (num_relations < 1) throw ConfigError("synth: need at least 1 relation");
    if (!(avg_degree > 0.0)) throw ConfigError("synth: avg_degree must be positive");
    if (!(drop_first >= 0.0 && drop_first <= 1.0) || !(drop_second >= 0.0 && drop_second <= 1.0)) {
      throw ConfigError("synth: drop rates must lie in [0, 1]");
    }
    if (!(seed_fraction > 0.0 && seed_fraction < 1.0)) {
      throw ConfigError("synth: seed_fraction must lie in (0, 1)");
    }
  }
};

struct SyntheticTask {
  AlignmentTask task;
  std::vector<Triple> base_triples;          // before drops, G1 ids
  std::vector<EntityId> entity_map;          // G1 id -> G2 id
  std::vector<RelationId> relation_map;      // G1 relation -> G2 relation
};

// Splits pairs: round(fraction * n) train (at least 1), rest 1:6 valid:test.
inline void split_pairs(std::vector<AlignedPair> pairs, double train_fraction, AlignmentTask& task) {
  const std::size_t n = pairs.size();
  std::size_t n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, n > 0 ? 1 : 0, n);
  const std::size_t rest = n - n_train;
  const auto n_valid = static_cast<std::size_t>(std::llround(static_cast<double>(rest) / 7.0));
  task.train.pairs.assign(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(n_train));
  task.valid.pairs.assign(pairs.begin() + static_cast<std::ptrdiff_t>(n_train),
                          pairs.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
  task.test.pairs.assign(pairs.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid), pairs.end());
}

inline SyntheticTask generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t n = spec.num_entities;
  const std::size_t r = spec.num_relations;
  const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.avg_degree / 2.0));
  const double capacity = static_cast<double>(n) * static_cast<double>(n - 1) * static_cast<double>(r);
  if (static_cast<double>(target) > 0.5 * capacity) {
    throw ConfigError("synth: avg_degree too high for the entity/relation counts");
  }

  // Uniform endpoints (no self-loops), uniform relation, distinct triples.
  std::set<Triple> seen;
  std::vector<Triple> base;
  base.reserve(target);
  while (base.size() < target) {
    const auto h = static_cast<EntityId>(rng.uniform_index(n));
    const auto t = static_cast<EntityId>(rng.uniform_index(n));
    const auto rel = static_cast<RelationId>(rng.uniform_index(r));
    if (h == t) continue;
    const Triple tr{h, rel, t};
    if (seen.insert(tr).second) base.push_back(tr);
  }
  std::vector<std::size_t> degree(n, 0);
  for (const Triple& t : base) {
    ++degree[t.head];
    ++degree[t.tail];
  }
  const auto isolated = static_cast<std::size_t>(std::count(degree.begin(), degree.end(), 0));
  if (2 * isolated > n) {
    throw DataError("synth: " + std::to_string(isolated) + " of " + std::to_string(n) +
                    " entities are isolated; raise avg_degree");
  }

  SyntheticTask out;
  out.base_triples = base;
  out.entity_map.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.entity_map[i] = static_cast<EntityId>(i);
  rng.shuffle(out.entity_map);
  out.relation_map.resize(r);
  for (std::size_t i = 0; i < r; ++i) out.relation_map[i] = static_cast<RelationId>(i);
  if (spec.relation_renaming) rng.shuffle(out.relation_map);

  std::vector<Triple> first, second;
  for (const Triple& t : base) {
    if (rng.uniform() >= spec.drop_first) first.push_back(t);
  }
  for (const Triple& t : base) {
    if (rng.uniform() >= spec.drop_second) {
      second.push_back({out.entity_map[t.head], out.relation_map[t.rel], out.entity_map[t.tail]});
    }
  }
  out.task.g1 = KnowledgeGraph::build(first, n, r);
  out.task.g2 = KnowledgeGraph::build(second, n, r);

  std::vector<AlignedPair> pairs;
  for (std::size_t i = 0; i < n; ++i) pairs.emplace_back(static_cast<EntityId>(i), out.entity_map[i]);
  rng.shuffle(pairs);
  split_pairs(std::move(pairs), spec.seed_fraction, out.task);
  out.task.validate();
  return out;
}

// Two 12-entity KGs over 3 relations with 4 seed pairs; used for gradient
// verification.
inline AlignmentTask canonical_tiny_task() {
  SynthSpec spec;
  spec.num_entities = 12;
  spec.num_relations = 3;
  spec.avg_degree = 3.0;
  spec.drop_first = 0.1;
  spec.drop_second = 0.1;
  spec.relation_renaming = true;
  spec.seed_fraction = 4.0 / 12.0;
  spec.seed = 7;
  return generate_synthetic(spec).task;
}

}  // namespace eafm
