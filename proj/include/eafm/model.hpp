#pragma once

// Full model: relation encoder, entity encoder and matcher, plus the
// per-task structures a query pass needs.

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "eafm/entgnn.hpp"
#include "eafm/error.hpp"
#include "eafm/kg.hpp"
#include "eafm/linalg.hpp"
#include "eafm/matcher.hpp"
#include "eafm/relgnn.hpp"
#include "eafm/relgraph.hpp"

namespace eafm {

enum class Ablation : std::uint8_t {
  kNone,
  kNoRelGraph,     // sameAs-bridged relation graph instead of the merged one
  kNoParallel,     // one query-rooted pass over both KGs joined by sameAs edges
  kNoInteraction,  // dot-product scoring
};

inline std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::kNone: return "none";
    case Ablation::kNoRelGraph: return "no_relgraph";
    case Ablation::kNoParallel: return "no_parallel";
    case Ablation::kNoInteraction: return "no_interaction";
  }
  return "none";
}

inline Ablation parse_ablation(const std::string& s) {
  if (s == "none") return Ablation::kNone;
  if (s == "no_relgraph") return Ablation::kNoRelGraph;
  if (s == "no_parallel") return Ablation::kNoParallel;
  if (s == "no_interaction") return Ablation::kNoInteraction;
  throw ConfigError("unknown ablation '" + s + "'");
}

struct ModelShape {
  std::size_t dim = 32;
  std::size_t rel_layers = 6;
  std::size_t ent_layers = 6;
};

template <class T>
struct ModelParams {
  RelGnnParams<T> rel;
  EntGnnParams<T> ent;
  MatcherParams<T> matcher;
  // Free-form metadata (config snapshot) carried through checkpoints.
  std::map<std::string, std::string> metadata;

  static constexpr int kFormatVersion = 1;

  ModelShape shape() const { return {rel.dim(), rel.layers.size(), ent.layers.size()}; }

  static ModelParams zeros(const ModelShape& s) {
    return {RelGnnParams<T>::zeros(s.dim, s.rel_layers), EntGnnParams<T>::zeros(s.dim, s.ent_layers),
            MatcherParams<T>::zeros(s.dim), {}};
  }

  static ModelParams random(const ModelShape& s, std::uint64_t seed) {
    if (s.dim == 0 || s.rel_layers == 0 || s.ent_layers == 0) {
      throw ConfigError("model dimension and layer counts must be positive");
    }
    Rng rng(seed);
    ModelParams p;
    p.rel = RelGnnParams<T>::random(s.dim, s.rel_layers, rng);
    p.ent = EntGnnParams<T>::random(s.dim, s.ent_layers, rng);
    p.matcher = MatcherParams<T>::random(s.dim, rng);
    return p;
  }

  // Named parameter groups in a fixed declaration order.
  std::vector<std::pair<std::string, Matrix<T>*>> groups() {
    std::vector<std::pair<std::string, Matrix<T>*>> out;
    out.emplace_back("relgnn.prototypes", &rel.prototypes);
    for (std::size_t l = 0; l < rel.layers.size(); ++l) {
      const auto p = "relgnn.layer" + std::to_string(l) + ".";
      out.emplace_back(p + "w_rel", &rel.layers[l].w_rel);
      out.emplace_back(p + "w_msg", &rel.layers[l].w_msg);
      out.emplace_back(p + "w_alpha", &rel.layers[l].w_alpha);
    }
    for (std::size_t l = 0; l < ent.layers.size(); ++l) {
      const auto p = "entgnn.layer" + std::to_string(l) + ".";
      out.emplace_back(p + "w_ent", &ent.layers[l].w_ent);
      out.emplace_back(p + "w_s", &ent.layers[l].w_s);
      out.emplace_back(p + "w_r", &ent.layers[l].w_r);
      out.emplace_back(p + "attn", &ent.layers[l].attn);
      out.emplace_back(p + "ln_gain", &ent.layers[l].gain);
      out.emplace_back(p + "ln_bias", &ent.layers[l].bias);
    }
    out.emplace_back("matcher.w_final", &matcher.w_final);
    return out;
  }

  std::vector<std::pair<std::string, const Matrix<T>*>> groups() const {
    auto mut = const_cast<ModelParams*>(this)->groups();
    std::vector<std::pair<std::string, const Matrix<T>*>> out;
    for (auto& [n, m] : mut) out.emplace_back(n, m);
    return out;
  }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (const auto& g : groups()) n += static_cast<std::size_t>(g.second->size());
    return n;
  }

  void set_zero() {
    for (auto& g : groups()) g.second->setZero();
  }

  ModelParams& operator+=(const ModelParams& other) {
    auto a = groups();
    auto b = other.groups();
    for (std::size_t i = 0; i < a.size(); ++i) *a[i].second += *b[i].second;
    return *this;
  }

  bool all_finite() const {
    for (const auto& g : groups()) {
      if (!g.second->allFinite()) return false;
    }
    return true;
  }

  template <class U>
  ModelParams<U> cast() const {
    ModelParams<U> out = ModelParams<U>::zeros(shape());
    auto src = groups();
    auto dst = out.groups();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i].second = src[i].second->template cast<U>();
    out.metadata = metadata;
    return out;
  }
};

// Order-sensitive FNV-1a over the raw parameter bytes.
template <class T>
std::uint64_t checksum(const ModelParams<T>& p) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& g : p.groups()) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(g.second->data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(g.second->size()) * sizeof(T); ++i) {
      h = (h ^ bytes[i]) * 1099511628211ULL;
    }
  }
  return h;
}

struct EncoderOptions {
  int anchor_hop = 2;
  AnchorOptions anchors;
  Ablation ablation = Ablation::kNone;
  RelationGraphOptions relgraph;
};

// Query-independent structures for one task and anchor set. Both KGs share
// one propagation graph: G1 on rows [0, |E1|), G2 on rows [|E1|, |E1|+|E2|).
class TaskContext {
 public:
  TaskContext(const AlignmentTask& task, const SeedAlignment& anchors, EncoderOptions opts = {})
      : task_(&task), anchors_(anchors), opts_(opts), seeds_(task, anchors) {
    if (opts.anchor_hop < 1) throw ConfigError("anchor hop must be >= 1");
    n1_ = task.g1.num_entities();
    n2_ = task.g2.num_entities();
    const bool joined = opts.ablation == Ablation::kNoParallel;
    const bool bridged = opts.ablation == Ablation::kNoRelGraph;
    layout_ = relation_layout(task, (joined || bridged) ? 2 : 0);
    if (bridged) {
      relgraph_ = build_sameas_relation_graph(task, anchors, opts.relgraph);
    } else {
      const auto unified = unify_entities(task, anchors);
      relgraph_ = joined ? build_joined_relation_graph(task, unified, anchors, opts.relgraph)
                         : build_relation_graph(task, unified, opts.relgraph);
    }

    std::vector<std::vector<EntityGraph::Edge>> incoming(n1_ + n2_);
    append_graph_block(task.g1, Side::kFirst, 0, layout_, incoming);
    append_graph_block(task.g2, Side::kSecond, n1_, layout_, incoming);
    if (joined) {
      const auto same = layout_.extra(0);
      const auto same_inv = layout_.extra(1);
      for (const auto& [u, v] : anchors.pairs) {
        incoming[n1_ + v].push_back({u, same});
        incoming[u].push_back({static_cast<std::int32_t>(n1_ + v), same_inv});
      }
      joined_one_hop_.resize(n1_ + n2_);
      for (std::size_t i = 0; i < n1_ + n2_; ++i) {
        // An in-edge (j, r) of i touches both i and j.
        for (const auto& e : incoming[i]) {
          joined_one_hop_[e.src].push_back(e.rel);
          joined_one_hop_[i].push_back(e.rel);
        }
      }
      for (auto& rels : joined_one_hop_) {
        std::sort(rels.begin(), rels.end());
        rels.erase(std::unique(rels.begin(), rels.end()), rels.end());
      }
    }
    graph_ = EntityGraph(incoming);
  }

  const AlignmentTask& task() const { return *task_; }
  const SeedAlignment& anchors() const { return anchors_; }
  const EncoderOptions& options() const { return opts_; }
  const MergedRelationGraph& relation_graph() const { return relgraph_; }
  const RelationNodeLayout& layout() const { return layout_; }
  const EntityGraph& entity_graph() const { return graph_; }
  const SeedIndex& seed_index() const { return seeds_; }
  std::size_t num_first() const { return n1_; }
  std::size_t num_second() const { return n2_; }

  std::int32_t row(Side s, EntityId e) const {
    return static_cast<std::int32_t>(s == Side::kFirst ? e : n1_ + e);
  }

  ScoreKind score_kind() const {
    return opts_.ablation == Ablation::kNoInteraction ? ScoreKind::kDot : ScoreKind::kInteraction;
  }

  // Relation nodes switched on for the query: its one-hop relations.
  std::vector<std::int32_t> active_relations(Query q) const {
    if (opts_.ablation == Ablation::kNoParallel) return joined_one_hop_[row(q.side, q.entity)];
    std::vector<std::int32_t> out;
    for (RelationId r : one_hop_relations(task_->graph(q.side), q.entity)) {
      out.push_back(layout_.node(q.side, r));
    }
    return out;
  }

 private:
  const AlignmentTask* task_;
  SeedAlignment anchors_;
  EncoderOptions opts_;
  SeedIndex seeds_;
  std::size_t n1_ = 0;
  std::size_t n2_ = 0;
  RelationNodeLayout layout_;
  MergedRelationGraph relgraph_;
  EntityGraph graph_;
  std::vector<std::vector<std::int32_t>> joined_one_hop_;
};

// Everything one query-conditioned forward pass produced.
template <class T>
struct QueryPass {
  Query query;
  bool degenerate = false;
  std::vector<std::int32_t> active_relations;
  std::vector<std::int32_t> active_rows;
  RelGnnCache<T> rel;
  EntGnnCache<T> ent;

  // Final embeddings of both graphs stacked (G1 rows first).
  const Matrix<T>& embeddings() const { return ent.output; }
};

template <class T>
struct EntityEmbeddings {
  Matrix<T> h1;
  Matrix<T> h2;
};

template <class T>
EntityEmbeddings<T> split_embeddings(const TaskContext& ctx, const Matrix<T>& stacked) {
  const auto n1 = static_cast<Eigen::Index>(ctx.num_first());
  const auto n2 = static_cast<Eigen::Index>(ctx.num_second());
  return {stacked.topRows(n1), stacked.bottomRows(n2)};
}

template <class T>
QueryPass<T> forward_query(const ModelParams<T>& model, const TaskContext& ctx, Query q) {
  ctx.task().graph(q.side).check_entity(q.entity);
  const auto d = model.rel.dim();
  if (model.ent.dim() != d || model.matcher.dim() != d) {
    throw ContractError("forward_query: model parts disagree on hidden dimension");
  }
  QueryPass<T> pass;
  pass.query = q;
  pass.active_relations = ctx.active_relations(q);
  pass.rel = relgnn_forward(model.rel, ctx.relation_graph(),
                            init_relation_features<T>(ctx.relation_graph(), pass.active_relations, d));

  const auto n = static_cast<Eigen::Index>(ctx.entity_graph().num_nodes());
  Matrix<T> init = Matrix<T>::Zero(n, static_cast<Eigen::Index>(d));
  if (ctx.options().ablation == Ablation::kNoParallel) {
    pass.active_rows.push_back(ctx.row(q.side, q.entity));
  } else {
    const auto act = activate_anchors(ctx.task(), ctx.seed_index(), q, ctx.options().anchor_hop,
                                      ctx.options().anchors);
    pass.degenerate = act.degenerate;
    for (EntityId e : act.first) pass.active_rows.push_back(ctx.row(Side::kFirst, e));
    for (EntityId e : act.second) pass.active_rows.push_back(ctx.row(Side::kSecond, e));
  }
  for (auto r : pass.active_rows) init.row(r).setOnes();
  pass.ent = entgnn_forward(model.ent, ctx.entity_graph(), std::move(init), pass.rel.output,
                            q.side == Side::kFirst ? "G1-rooted pass" : "G2-rooted pass");
  return pass;
}

template <class T>
void backward_query(const ModelParams<T>& model, const TaskContext& ctx, const QueryPass<T>& pass,
                    Matrix<T> d_embeddings, ModelParams<T>& grad) {
  Matrix<T> d_rel = entgnn_backward(model.ent, ctx.entity_graph(), pass.ent, pass.rel.output,
                                    std::move(d_embeddings), grad.ent);
  relgnn_backward(model.rel, ctx.relation_graph(), pass.rel, std::move(d_rel), grad.rel);
}

// Candidate rows for a query: entities of the opposite graph.
inline std::vector<std::int32_t> candidate_rows(const TaskContext& ctx, Side query_side,
                                                std::span<const EntityId> candidates) {
  std::vector<std::int32_t> rows;
  rows.reserve(candidates.size());
  const Side other = opposite(query_side);
  for (EntityId c : candidates) {
    ctx.task().graph(other).check_entity(c);
    rows.push_back(ctx.row(other, c));
  }
  return rows;
}

template <class T>
ScoredCandidates<T> score_query(const ModelParams<T>& model, const TaskContext& ctx,
                                const QueryPass<T>& pass, std::span<const EntityId> candidates) {
  const auto rows = candidate_rows(ctx, pass.query.side, candidates);
  const auto& h = pass.embeddings();
  ScoredCandidates<T> out{pass.query, {candidates.begin(), candidates.end()}, {}};
  out.scores = score_rows(h.row(ctx.row(pass.query.side, pass.query.entity)), h, rows,
                          model.matcher, ctx.score_kind());
  return out;
}

// One direction's cross-entropy term for a query pass, scaled by `weight`.
// Accumulates gradients into `grad` when non-null.
template <class T>
T query_loss(const ModelParams<T>& model, const TaskContext& ctx, const QueryPass<T>& pass,
             std::span<const EntityId> candidates, EntityId target, T weight,
             ModelParams<T>* grad) {
  const auto it = std::find(candidates.begin(), candidates.end(), target);
  if (it == candidates.end()) {
    throw ContractError("query_loss: true target " + std::to_string(target) +
                        " not in the candidate set");
  }
  const auto rows = candidate_rows(ctx, pass.query.side, candidates);
  const auto& h = pass.embeddings();
  const auto query_row = ctx.row(pass.query.side, pass.query.entity);
  const auto scores = score_rows(h.row(query_row), h, rows, model.matcher, ctx.score_kind());
  const auto target_pos = static_cast<std::size_t>(it - candidates.begin());
  if (!grad) return weight * softmax_cross_entropy<T>(scores, target_pos);

  std::vector<T> d_scores;
  const T loss = softmax_cross_entropy<T>(scores, target_pos, weight, &d_scores);
  Matrix<T> d_h = Matrix<T>::Zero(h.rows(), h.cols());
  score_rows_backward<T>(query_row, h, rows, d_scores, model.matcher, ctx.score_kind(), d_h,
                         grad->matcher);
  backward_query(model, ctx, pass, std::move(d_h), *grad);
  return weight * loss;
}

// Candidate pools for the two loss directions.
struct CandidatePools {
  std::vector<EntityId> first;   // over E1, used by G2-rooted queries
  std::vector<EntityId> second;  // over E2, used by G1-rooted queries
};

inline CandidatePools full_candidate_pools(const AlignmentTask& task) {
  CandidatePools p;
  for (std::size_t i = 0; i < task.g1.num_entities(); ++i) p.first.push_back(static_cast<EntityId>(i));
  for (std::size_t j = 0; j < task.g2.num_entities(); ++j) p.second.push_back(static_cast<EntityId>(j));
  return p;
}

// L = L_{1->2} + L_{2->1} over a batch of aligned pairs, each term averaged
// over the batch. Runs both query passes per pair.
template <class T>
T bidirectional_loss(const ModelParams<T>& model, const TaskContext& ctx,
                     std::span<const AlignedPair> batch, const CandidatePools& pools,
                     ModelParams<T>* grad = nullptr) {
  if (batch.empty()) return T(0);
  const T weight = T(1) / static_cast<T>(batch.size());
  T total = 0;
  for (const auto& [s, t] : batch) {
    const auto fwd = forward_query(model, ctx, Query{Side::kFirst, s});
    total += query_loss(model, ctx, fwd, pools.second, t, weight, grad);
    const auto bwd = forward_query(model, ctx, Query{Side::kSecond, t});
    total += query_loss(model, ctx, bwd, pools.first, s, weight, grad);
  }
  return total;
}

}  // namespace eafm
