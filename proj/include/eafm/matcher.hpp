#pragma once

// Interaction scoring S(s, t) = w_final . [|h_s - h_t| ; h_t] and the
// softmax cross-entropy terms of the bidirectional objective.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "eafm/error.hpp"
#include "eafm/kg.hpp"
#include "eafm/linalg.hpp"

namespace eafm {

enum class ScoreKind : std::uint8_t {
  kInteraction,  // w_final . [|h_s - h_t| ; h_t]
  kDot,          // h_s . h_t (interaction ablation)
};

template <class T>
struct MatcherParams {
  Matrix<T> w_final;  // 1 x 2d, no bias

  std::size_t dim() const { return static_cast<std::size_t>(w_final.cols() / 2); }

  static MatcherParams zeros(std::size_t d) {
    return {Matrix<T>::Zero(1, static_cast<Eigen::Index>(2 * d))};
  }
  static MatcherParams random(std::size_t d, Rng& rng) {
    auto p = zeros(d);
    fill_uniform(p.w_final, rng, 1.0 / std::sqrt(2.0 * static_cast<double>(d)));
    return p;
  }
};

template <class T, class A, class B>
T interaction_score(const Eigen::MatrixBase<A>& hs, const Eigen::MatrixBase<B>& ht,
                    const MatcherParams<T>& params) {
  const auto d = hs.size();
  if (ht.size() != d || params.w_final.cols() != 2 * d) {
    throw ContractError("interaction_score: dimension mismatch");
  }
  const auto w = params.w_final.row(0);
  return w.head(d).dot((hs - ht).cwiseAbs()) + w.tail(d).dot(ht);
}

template <class T, class A, class B>
T pair_score(const Eigen::MatrixBase<A>& hs, const Eigen::MatrixBase<B>& ht,
             const MatcherParams<T>& params, ScoreKind kind) {
  if (kind == ScoreKind::kDot) {
    if (hs.size() != ht.size()) throw ContractError("pair_score: dimension mismatch");
    return hs.dot(ht);
  }
  return interaction_score(hs, ht, params);
}

// Scores of one query row against candidate rows of `table`.
template <class T, class A>
std::vector<T> score_rows(const Eigen::MatrixBase<A>& query, const Matrix<T>& table,
                          std::span<const std::int32_t> rows, const MatcherParams<T>& params,
                          ScoreKind kind) {
  if (rows.empty()) throw ContractError("score_candidates: empty candidate set");
  std::vector<T> scores(rows.size());
  for (std::size_t c = 0; c < rows.size(); ++c) {
    scores[c] = pair_score(query, table.row(rows[c]), params, kind);
  }
  return scores;
}

template <class T>
struct ScoredCandidates {
  Query query;
  std::vector<EntityId> candidates;
  std::vector<T> scores;
};

// Scores one query embedding against candidates drawn from `targets`
// (the opposite graph's embedding matrix).
template <class T, class A>
ScoredCandidates<T> score_candidates(const Eigen::MatrixBase<A>& query_embedding, Query query,
                                     const Matrix<T>& targets,
                                     std::span<const EntityId> candidates,
                                     const MatcherParams<T>& params,
                                     ScoreKind kind = ScoreKind::kInteraction) {
  for (EntityId c : candidates) {
    if (c < 0 || c >= targets.rows()) {
      throw ContractError("score_candidates: candidate " + std::to_string(c) + " out of range");
    }
  }
  ScoredCandidates<T> out{query, {candidates.begin(), candidates.end()}, {}};
  out.scores = score_rows(query_embedding, targets, candidates, params, kind);
  return out;
}

// -log softmax(scores)[target] with max-subtraction. When `d_scores` is
// given it receives weight * (softmax - onehot).
template <class T>
T softmax_cross_entropy(std::span<const T> scores, std::size_t target, T weight = T(1),
                        std::vector<T>* d_scores = nullptr) {
  if (target >= scores.size()) throw ContractError("softmax_cross_entropy: target not in candidates");
  const T max_score = *std::max_element(scores.begin(), scores.end());
  T total = 0;
  for (T s : scores) total += std::exp(s - max_score);
  const T lse = max_score + std::log(total);
  if (d_scores) {
    d_scores->resize(scores.size());
    for (std::size_t c = 0; c < scores.size(); ++c) {
      (*d_scores)[c] = weight * std::exp(scores[c] - lse);
    }
    (*d_scores)[target] -= weight;
  }
  return lse - scores[target];
}

// Backpropagates d_scores of score_rows into query/candidate rows of
// d_table and into the matcher weights.
template <class T>
void score_rows_backward(Eigen::Index query_row, const Matrix<T>& table,
                         std::span<const std::int32_t> rows, std::span<const T> d_scores,
                         const MatcherParams<T>& params, ScoreKind kind, Matrix<T>& d_table,
                         MatcherParams<T>& grad) {
  const auto d = table.cols();
  const auto hs = table.row(query_row);
  if (kind == ScoreKind::kDot) {
    for (std::size_t c = 0; c < rows.size(); ++c) {
      const T g = d_scores[c];
      if (g == T(0)) continue;
      d_table.row(query_row) += g * table.row(rows[c]);
      d_table.row(rows[c]) += g * hs;
    }
    return;
  }
  const auto w_diff = params.w_final.row(0).head(d);
  const auto w_target = params.w_final.row(0).tail(d);
  RowVector<T> d_query = RowVector<T>::Zero(d);
  for (std::size_t c = 0; c < rows.size(); ++c) {
    const T g = d_scores[c];
    if (g == T(0)) continue;
    const auto ht = table.row(rows[c]);
    const RowVector<T> diff = hs - ht;
    const RowVector<T> sign = diff.unaryExpr([](T v) { return T((v > T(0)) - (v < T(0))); });
    grad.w_final.row(0).head(d) += g * diff.cwiseAbs();
    grad.w_final.row(0).tail(d) += g * ht;
    const RowVector<T> d_diff = g * w_diff.cwiseProduct(sign);
    d_query += d_diff;
    d_table.row(rows[c]) += g * w_target - d_diff;
  }
  d_table.row(query_row) += d_query;
}

}  // namespace eafm
