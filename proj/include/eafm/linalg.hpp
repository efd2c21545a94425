#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include <Eigen/Dense>

#include "eafm/error.hpp"
#include "eafm/rng.hpp"

namespace eafm {

// Row-major so that a row is one node's feature vector.
template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

template <class T>
using ColVector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <class T>
inline T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <class T>
inline T leaky_relu(T x, T slope) {
  return x > T(0) ? x : slope * x;
}

template <class T>
inline T leaky_relu_grad(T x, T slope) {
  return x > T(0) ? T(1) : slope;
}

template <class Derived>
inline void require_finite(const Eigen::MatrixBase<Derived>& m, const std::string& where) {
  if (!m.allFinite()) throw NumericError("non-finite values in " + where);
}

template <class T>
inline void fill_uniform(Matrix<T>& m, Rng& rng, double bound) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
}

}  // namespace eafm
