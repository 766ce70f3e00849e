#pragma once

#include <random>

#include "kngd/types.hpp"

namespace testing {

using kngd::Index;
using kngd::Matrix;
using kngd::Vector;

inline Matrix randn(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

inline Vector randv(Index n, std::mt19937_64& rng) { return randn(n, 1, rng).col(0); }

inline Matrix uniform(Index rows, Index cols, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = u(rng);
  return m;
}

template <typename A, typename B>
double rel_err(const A& got, const B& want) {
  const double denom = want.norm();
  return denom > 0 ? (got - want).norm() / denom : (got - want).norm();
}

// n x n symmetric PSD with the given rank.
inline Matrix random_psd(Index n, Index rank, std::mt19937_64& rng) {
  const Matrix g = randn(n, rank, rng);
  return g * g.transpose();
}

}  // namespace testing
