#pragma once

// Training, evaluation, frozen transfer, gradient verification and the
// anchor-hop sweep.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "eafm/error.hpp"
#include "eafm/model.hpp"
#include "eafm/optimizer.hpp"
#include "eafm/parallel.hpp"
#include "eafm/rng.hpp"

namespace eafm {

enum class Direction : std::uint8_t { kFirstToSecond, kSecondToFirst, kMean };

inline std::string to_string(Direction d) {
  switch (d) {
    case Direction::kFirstToSecond: return "g1_to_g2";
    case Direction::kSecondToFirst: return "g2_to_g1";
    case Direction::kMean: return "mean";
  }
  return "g1_to_g2";
}

inline Direction parse_direction(const std::string& s) {
  if (s == "g1_to_g2") return Direction::kFirstToSecond;
  if (s == "g2_to_g1") return Direction::kSecondToFirst;
  if (s == "mean") return Direction::kMean;
  throw ConfigError("unknown direction '" + s + "'");
}

enum class CandidateMode : std::uint8_t {
  kEvalPairs,  // opposite-side entities of the evaluated pairs
  kAll,        // every entity of the opposite graph
};

inline std::string to_string(CandidateMode m) { return m == CandidateMode::kAll ? "all" : "test"; }

inline CandidateMode parse_candidate_mode(const std::string& s) {
  if (s == "test") return CandidateMode::kEvalPairs;
  if (s == "all") return CandidateMode::kAll;
  throw ConfigError("unknown candidate mode '" + s + "'");
}

struct TrainConfig {
  std::size_t dim = 32;
  std::size_t rel_layers = 6;
  std::size_t ent_layers = 6;
  int anchor_hop = 2;
  double lr = 5e-4;
  std::size_t batch_size = 64;
  int max_epochs = 200;
  int patience = 10;
  double weight_decay = 0.01;
  std::size_t negatives = 0;  // 0 = full softmax over the opposite graph
  std::uint64_t seed = 0;
  Ablation ablation = Ablation::kNone;
  bool anchor_fallback = true;
  int fallback_cap = 4;
  bool relgraph_include_inverses = true;
  std::size_t valid_cap = 1000;  // validation pairs and candidate pool size
  std::size_t threads = 0;  // 0 = hardware concurrency

  void validate() const {
    if (dim == 0) throw ConfigError("dim must be positive");
    if (rel_layers == 0 || ent_layers == 0) throw ConfigError("layer counts must be positive");
    if (anchor_hop < 1) throw ConfigError("anchor hop must be >= 1");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be >= 0");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (max_epochs < 1) throw ConfigError("epochs must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (patience > max_epochs) throw ConfigError("patience must not exceed epochs");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
    if (fallback_cap < 1) throw ConfigError("fallback cap must be >= 1");
    if (valid_cap == 0) throw ConfigError("validation cap must be positive");
  }

  ModelShape shape() const { return {dim, rel_layers, ent_layers}; }

  EncoderOptions encoder() const {
    EncoderOptions e;
    e.anchor_hop = anchor_hop;
    e.anchors = {anchor_fallback, fallback_cap};
    e.ablation = ablation;
    e.relgraph.include_inverses = relgraph_include_inverses;
    return e;
  }

  std::map<std::string, std::string> to_metadata() const {
    // Shortest text that round-trips.
    auto num = [](double v) {
      char buf[32];
      const auto res = std::to_chars(buf, buf + sizeof buf, v);
      return std::string(buf, res.ptr);
    };
    return {{"dim", std::to_string(dim)},
            {"rel_layers", std::to_string(rel_layers)},
            {"ent_layers", std::to_string(ent_layers)},
            {"anchor_hop", std::to_string(anchor_hop)},
            {"lr", num(lr)},
            {"batch_size", std::to_string(batch_size)},
            {"epochs", std::to_string(max_epochs)},
            {"patience", std::to_string(patience)},
            {"weight_decay", num(weight_decay)},
            {"negatives", std::to_string(negatives)},
            {"seed", std::to_string(seed)},
            {"ablation", to_string(ablation)},
            {"anchor_fallback", anchor_fallback ? "1" : "0"},
            {"fallback_cap", std::to_string(fallback_cap)},
            {"relgraph_include_inverses", relgraph_include_inverses ? "1" : "0"}};
  }

  // Restores the encoder-relevant fields recorded in a checkpoint.
  void apply_metadata(const std::map<std::string, std::string>& m) {
    auto get = [&](const char* k) -> std::optional<std::string> {
      auto it = m.find(k);
      if (it == m.end()) return std::nullopt;
      return it->second;
    };
    if (auto v = get("anchor_hop")) anchor_hop = std::stoi(*v);
    if (auto v = get("ablation")) ablation = parse_ablation(*v);
    if (auto v = get("anchor_fallback")) anchor_fallback = *v == "1";
    if (auto v = get("fallback_cap")) fallback_cap = std::stoi(*v);
    if (auto v = get("relgraph_include_inverses")) relgraph_include_inverses = *v == "1";
  }
};

struct Metrics {
  double mrr = 0.0;
  std::map<int, double> hits;  // cutoff -> fraction
  std::size_t num_queries = 0;
  std::size_t num_degenerate = 0;

  double hits_at(int k) const {
    auto it = hits.find(k);
    return it == hits.end() ? 0.0 : it->second;
  }
};

inline const std::vector<int>& default_cutoffs() {
  static const std::vector<int> cutoffs{1, 5, 10};
  return cutoffs;
}

inline Metrics metrics_from_ranks(const std::vector<std::size_t>& ranks, std::size_t degenerate = 0,
                                  const std::vector<int>& cutoffs = default_cutoffs()) {
  Metrics m;
  m.num_queries = ranks.size();
  m.num_degenerate = degenerate;
  for (int k : cutoffs) m.hits[k] = 0.0;
  if (ranks.empty()) return m;
  for (std::size_t r : ranks) {
    if (r == 0) throw ContractError("ranks are 1-based");
    m.mrr += 1.0 / static_cast<double>(r);
    for (int k : cutoffs) {
      if (r <= static_cast<std::size_t>(k)) m.hits[k] += 1.0;
    }
  }
  const auto n = static_cast<double>(ranks.size());
  m.mrr /= n;
  for (auto& [k, v] : m.hits) v /= n;
  return m;
}

inline Metrics average(const Metrics& a, const Metrics& b) {
  Metrics m;
  m.mrr = 0.5 * (a.mrr + b.mrr);
  for (const auto& [k, v] : a.hits) m.hits[k] = 0.5 * (v + b.hits_at(k));
  m.num_queries = a.num_queries + b.num_queries;
  m.num_degenerate = a.num_degenerate + b.num_degenerate;
  return m;
}

// 1-based rank of candidates[target_pos]; ties go to the smaller entity id.
template <class T>
std::size_t rank_of(const std::vector<T>& scores, std::span<const EntityId> candidates,
                    std::size_t target_pos) {
  const T ts = scores[target_pos];
  const EntityId tid = candidates[target_pos];
  std::size_t rank = 1;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (c == target_pos) continue;
    if (scores[c] > ts || (scores[c] == ts && candidates[c] < tid)) ++rank;
  }
  return rank;
}

struct EvalOptions {
  Direction direction = Direction::kFirstToSecond;
  CandidateMode candidates = CandidateMode::kEvalPairs;
  std::size_t threads = 0;
};

struct EvalReport {
  Metrics reported;
  std::optional<Metrics> first_to_second;
  std::optional<Metrics> second_to_first;
  Direction direction = Direction::kFirstToSecond;
  CandidateMode candidates = CandidateMode::kEvalPairs;
  double seconds = 0.0;
};

// Ranks each pair's counterpart within `pool` (sorted ascending, containing
// every counterpart).
template <class T>
Metrics rank_pairs(const ModelParams<T>& model, const TaskContext& ctx, const SeedAlignment& pairs,
                   Side query_side, std::span<const EntityId> pool, std::size_t threads) {
  std::vector<std::size_t> ranks(pairs.size());
  std::vector<char> degenerate(pairs.size(), 0);
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    const auto& [u, v] = pairs.pairs[i];
    const Query q{query_side, query_side == Side::kFirst ? u : v};
    const EntityId target = query_side == Side::kFirst ? v : u;
    const auto pass = forward_query(model, ctx, q);
    const auto scored = score_query(model, ctx, pass, pool);
    const auto it = std::lower_bound(pool.begin(), pool.end(), target);
    if (it == pool.end() || *it != target) throw ContractError("rank_pairs: counterpart missing from pool");
    ranks[i] = rank_of(scored.scores, pool, static_cast<std::size_t>(it - pool.begin()));
    degenerate[i] = pass.degenerate ? 1 : 0;
  });
  return metrics_from_ranks(
      ranks, static_cast<std::size_t>(std::count(degenerate.begin(), degenerate.end(), 1)));
}

template <class T>
Metrics evaluate_direction(const ModelParams<T>& model, const TaskContext& ctx,
                           const SeedAlignment& pairs, Side query_side, CandidateMode mode,
                           std::size_t threads) {
  const AlignmentTask& task = ctx.task();
  pairs.validate(task.g1, task.g2, "evaluation pairs");
  std::vector<EntityId> pool;
  if (mode == CandidateMode::kAll) {
    for (std::size_t i = 0; i < task.graph(opposite(query_side)).num_entities(); ++i) {
      pool.push_back(static_cast<EntityId>(i));
    }
  } else {
    for (const auto& [u, v] : pairs.pairs) pool.push_back(query_side == Side::kFirst ? v : u);
    std::sort(pool.begin(), pool.end());
  }
  return rank_pairs(model, ctx, pairs, query_side, pool, threads);
}

// Ranks each pair's true counterpart among the candidate pool with frozen
// parameters.
template <class T>
EvalReport evaluate(const ModelParams<T>& model, const TaskContext& ctx, const SeedAlignment& pairs,
                    EvalOptions opts = {}) {
  const auto start = std::chrono::steady_clock::now();
  EvalReport r;
  r.direction = opts.direction;
  r.candidates = opts.candidates;
  if (opts.direction != Direction::kSecondToFirst) {
    r.first_to_second = evaluate_direction(model, ctx, pairs, Side::kFirst, opts.candidates, opts.threads);
  }
  if (opts.direction != Direction::kFirstToSecond) {
    r.second_to_first = evaluate_direction(model, ctx, pairs, Side::kSecond, opts.candidates, opts.threads);
  }
  switch (opts.direction) {
    case Direction::kFirstToSecond: r.reported = *r.first_to_second; break;
    case Direction::kSecondToFirst: r.reported = *r.second_to_first; break;
    case Direction::kMean: r.reported = average(*r.first_to_second, *r.second_to_first); break;
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

// Frozen zero-shot transfer: the unseen task's train split only serves as
// anchors; scoring runs on its test pairs.
template <class T>
EvalReport transfer(const ModelParams<T>& model, const AlignmentTask& unseen, const TrainConfig& cfg,
                    EvalOptions opts = {}) {
  unseen.validate();
  const TaskContext ctx(unseen, unseen.train, cfg.encoder());
  return evaluate(model, ctx, unseen.test, opts);
}

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_mrr = 0.0;
  double seconds = 0.0;
};

template <class T>
struct TrainResult {
  ModelParams<T> params;
  int best_epoch = 0;
  double best_valid_mrr = -1.0;
  std::vector<EpochLog> epochs;
  double seconds = 0.0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

namespace detail {

// Candidates for one query in sampled-negative mode: the true target plus
// `negatives` distinct others, in ascending id order.
inline std::vector<EntityId> sample_candidates(std::size_t pool_size, EntityId target,
                                               std::size_t negatives, Rng& rng) {
  std::vector<EntityId> out{target};
  if (negatives + 1 >= pool_size) {
    out.clear();
    for (std::size_t i = 0; i < pool_size; ++i) out.push_back(static_cast<EntityId>(i));
    return out;
  }
  for (std::size_t idx : rng.sample_without_replacement(pool_size - 1, negatives)) {
    const auto c = static_cast<EntityId>(idx);
    out.push_back(c >= target ? c + 1 : c);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

// Mean bidirectional loss of one batch; gradients summed into `grad` in
// fixed order.
template <class T>
T batch_step(const ModelParams<T>& model, const TaskContext& ctx, std::span<const AlignedPair> batch,
             const CandidatePools& full, std::size_t negatives, std::uint64_t sample_seed,
             std::size_t threads, ModelParams<T>& grad) {
  const std::size_t items = 2 * batch.size();
  const T weight = T(1) / static_cast<T>(batch.size());
  std::vector<ModelParams<T>> grads(items);
  std::vector<T> losses(items, T(0));
  const auto shape = model.shape();
  parallel_for(items, threads, [&](std::size_t i) {
    const auto& [s, t] = batch[i / 2];
    const bool forward_dir = i % 2 == 0;
    const Query q = forward_dir ? Query{Side::kFirst, s} : Query{Side::kSecond, t};
    const EntityId target = forward_dir ? t : s;
    std::vector<EntityId> sampled;
    std::span<const EntityId> pool = forward_dir ? full.second : full.first;
    if (negatives > 0) {
      Rng rng(derive_seed(sample_seed, i));
      sampled = detail::sample_candidates(pool.size(), target, negatives, rng);
      pool = sampled;
    }
    grads[i] = ModelParams<T>::zeros(shape);
    const auto pass = forward_query(model, ctx, q);
    losses[i] = query_loss(model, ctx, pass, pool, target, weight, &grads[i]);
  });
  T total = 0;
  for (std::size_t i = 0; i < items; ++i) {
    total += losses[i];
    grad += grads[i];
  }
  return total;
}

// Validation pool: every G2 entity when there are at most `cap`; otherwise
// the validation counterparts topped up to `cap` with a seeded sample.
inline std::vector<EntityId> validation_pool(const AlignmentTask& task, const SeedAlignment& valid,
                                             std::size_t cap, std::uint64_t seed) {
  const std::size_t n = task.g2.num_entities();
  std::vector<EntityId> pool;
  if (n <= cap) {
    for (std::size_t i = 0; i < n; ++i) pool.push_back(static_cast<EntityId>(i));
    return pool;
  }
  std::vector<char> taken(n, 0);
  for (const auto& [u, v] : valid.pairs) {
    if (!taken[v]) pool.push_back(v);
    taken[v] = 1;
  }
  std::vector<EntityId> rest;
  for (std::size_t i = 0; i < n; ++i) {
    if (!taken[i]) rest.push_back(static_cast<EntityId>(i));
  }
  const std::size_t extra = cap > pool.size() ? std::min(cap - pool.size(), rest.size()) : 0;
  Rng rng(seed);
  for (std::size_t idx : rng.sample_without_replacement(rest.size(), extra)) pool.push_back(rest[idx]);
  std::sort(pool.begin(), pool.end());
  return pool;
}

// Trains from `init` (or a fresh seeded model). Returns the parameters of
// the epoch with the best validation MRR, the latest one on ties; only a
// strict improvement resets the patience counter.
template <class T = float>
TrainResult<T> train(const AlignmentTask& task, const TrainConfig& cfg,
                     std::optional<ModelParams<T>> init = std::nullopt,
                     const EpochCallback& on_epoch = {}) {
  cfg.validate();
  task.validate();
  if (task.train.empty()) throw ContractError("train: task has no training pairs");
  if (task.valid.empty()) throw ContractError("train: task has no validation pairs");
  const auto start = std::chrono::steady_clock::now();

  ModelParams<T> model = init ? std::move(*init) : ModelParams<T>::random(cfg.shape(), derive_seed(cfg.seed, 0));
  if (model.shape().dim != cfg.dim) throw ConfigError("initial model dimension differs from config");
  model.metadata = cfg.to_metadata();

  const TaskContext ctx(task, task.train, cfg.encoder());
  const CandidatePools full = full_candidate_pools(task);
  SeedAlignment valid = task.valid;
  if (valid.size() > cfg.valid_cap) {
    Rng rng(derive_seed(cfg.seed, 1));
    rng.shuffle(valid.pairs);
    valid.pairs.resize(cfg.valid_cap);
  }
  const auto valid_pool = validation_pool(task, valid, cfg.valid_cap, derive_seed(cfg.seed, 2));

  AdamW<T> opt(model, {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  TrainResult<T> result;
  result.params = model;
  int stale = 0;
  std::vector<AlignedPair> order = task.train.pairs;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    Rng rng(derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const auto end = std::min(order.size(), b + cfg.batch_size);
      std::span<const AlignedPair> batch(order.data() + b, end - b);
      ModelParams<T> grad = ModelParams<T>::zeros(model.shape());
      const auto sample_seed = derive_seed(cfg.seed, (static_cast<std::uint64_t>(epoch) << 32) + b);
      const T loss = batch_step(model, ctx, batch, full, cfg.negatives, sample_seed, cfg.threads, grad);
      if (!std::isfinite(static_cast<double>(loss)) || !grad.all_finite()) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batches) + " (loss " + std::to_string(static_cast<double>(loss)) + ")");
      }
      opt.step(model, grad);
      epoch_loss += static_cast<double>(loss);
      ++batches;
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss / static_cast<double>(batches);
    log.valid_mrr = rank_pairs(model, ctx, valid, Side::kFirst, valid_pool, cfg.threads).mrr;
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    result.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
    const bool improved = log.valid_mrr > result.best_valid_mrr;
    if (log.valid_mrr >= result.best_valid_mrr) {
      result.best_valid_mrr = log.valid_mrr;
      result.best_epoch = epoch;
      result.params = model;
    }
    if (improved) {
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

struct GradientCheckReport {
  struct Group {
    std::string name;
    std::size_t size = 0;
    double max_relative_error = 0.0;
  };
  std::vector<Group> groups;
  double max_relative_error = 0.0;
  double loss = 0.0;
  double tolerance = 0.0;
  std::size_t num_parameters = 0;
  double seconds = 0.0;

  bool passed() const { return max_relative_error < tolerance; }
  std::string worst_group() const {
    const Group* w = nullptr;
    for (const auto& g : groups) {
      if (!w || g.max_relative_error > w->max_relative_error) w = &g;
    }
    return w ? w->name : "";
  }
};

inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  if (std::abs(analytic) < 1e-8 && std::abs(numeric) < 1e-8) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

// Central finite differences on every parameter of a double-precision model
// against the analytic gradient of the bidirectional loss over all training
// pairs with full candidate sets.
inline GradientCheckReport gradient_check(const AlignmentTask& task, const TrainConfig& cfg,
                                          double epsilon = 1e-4, double tolerance = 1e-3,
                                          std::size_t max_parameters = 5000) {
  const auto start = std::chrono::steady_clock::now();
  task.validate();
  ModelParams<double> model = ModelParams<double>::random(cfg.shape(), derive_seed(cfg.seed, 0));
  if (model.num_parameters() > max_parameters) {
    throw ConfigError("gradient_check: model has " + std::to_string(model.num_parameters()) +
                      " parameters, limit " + std::to_string(max_parameters));
  }
  const TaskContext ctx(task, task.train, cfg.encoder());
  const CandidatePools pools = full_candidate_pools(task);
  ModelParams<double> grad = ModelParams<double>::zeros(model.shape());

  GradientCheckReport report;
  report.tolerance = tolerance;
  report.num_parameters = model.num_parameters();
  report.loss = bidirectional_loss(model, ctx, task.train.pairs, pools, &grad);

  auto params = model.groups();
  auto grads = grad.groups();
  for (std::size_t gi = 0; gi < params.size(); ++gi) {
    GradientCheckReport::Group g{params[gi].first, static_cast<std::size_t>(params[gi].second->size()), 0.0};
    Matrix<double>& p = *params[gi].second;
    for (Eigen::Index k = 0; k < p.size(); ++k) {
      const double saved = p.data()[k];
      p.data()[k] = saved + epsilon;
      const double up = bidirectional_loss(model, ctx, task.train.pairs, pools);
      p.data()[k] = saved - epsilon;
      const double down = bidirectional_loss(model, ctx, task.train.pairs, pools);
      p.data()[k] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      g.max_relative_error = std::max(g.max_relative_error, relative_error(grads[gi].second->data()[k], numeric));
    }
    report.max_relative_error = std::max(report.max_relative_error, g.max_relative_error);
    report.groups.push_back(std::move(g));
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

struct HopSweepRow {
  int k = 0;
  EvalReport report;
  int best_epoch = 0;
};

// One run per anchor-hop value. With `frozen` given, each run transfers the
// frozen model; otherwise each run trains from scratch at that hop.
template <class T = float>
std::vector<HopSweepRow> hop_sweep(const AlignmentTask& task, const TrainConfig& base,
                                   const std::vector<int>& k_values, EvalOptions eval = {},
                                   const ModelParams<T>* frozen = nullptr,
                                   const EpochCallback& on_epoch = {}) {
  if (k_values.empty()) throw ConfigError("hop_sweep: no hop values given");
  std::vector<HopSweepRow> rows;
  for (int k : k_values) {
    TrainConfig cfg = base;
    cfg.anchor_hop = k;
    HopSweepRow row;
    row.k = k;
    if (frozen) {
      row.report = transfer(*frozen, task, cfg, eval);
    } else {
      auto trained = train<T>(task, cfg, std::nullopt, on_epoch);
      const TaskContext ctx(task, task.train, cfg.encoder());
      row.report = evaluate(trained.params, ctx, task.test, eval);
      row.best_epoch = trained.best_epoch;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// key=value lines; one `prefix`-scoped block per direction evaluated.
inline std::string format_metrics(const EvalReport& r) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  auto block = [&](const std::string& prefix, const Metrics& m) {
    os << prefix << "mrr=" << m.mrr << '\n';
    for (const auto& [k, v] : m.hits) os << prefix << "hits@" << k << '=' << v << '\n';
    os << prefix << "num_queries=" << m.num_queries << '\n';
    os << prefix << "num_degenerate=" << m.num_degenerate << '\n';
  };
  os << "direction=" << to_string(r.direction) << '\n';
  os << "candidates=" << to_string(r.candidates) << '\n';
  block("", r.reported);
  if (r.first_to_second) block("g1_to_g2.", *r.first_to_second);
  if (r.second_to_first) block("g2_to_g1.", *r.second_to_first);
  os << "seconds=" << r.seconds << '\n';
  return os.str();
}

}  // namespace eafm
