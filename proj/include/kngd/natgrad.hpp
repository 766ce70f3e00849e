#pragma once

// Natural-gradient directions computed in sample space.
//
// With residuals r (N) and Jacobian J (N x P), the damped Gauss-Newton step
// (J^T J + lambda I)^{-1} J^T r equals J^T (J J^T + lambda I)^{-1} r, so only
// the N x N kernel K = J J^T is ever factorized.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

#include "kngd/types.hpp"

namespace kngd {

// Raised when K + lambda I is not numerically positive definite.
class IndefiniteKernelError : public std::runtime_error {
 public:
  IndefiniteKernelError(double smallest_pivot, double lambda);
  double smallest_pivot() const { return pivot_; }

 private:
  double pivot_;
};

class KernelSystem {
 public:
  // K = J J^T, symmetrized, with the Cholesky factor of K + lambda I.
  // With retry set, one failed factorization is retried at 10x damping.
  static KernelSystem build(const Matrix& J, double lambda, bool retry = true);
  // Same, for a kernel that is already formed.
  static KernelSystem from_kernel(Matrix K, double lambda, bool retry = true);

  const Matrix& kernel() const { return kernel_; }
  // Damping actually used in the factorization.
  double lambda() const { return lambda_; }
  bool retried() const { return retried_; }
  Index size() const { return kernel_.rows(); }

  // (K + lambda I)^{-1} rhs
  Vector solve(const Vector& rhs) const;
  const Eigen::LLT<Matrix>& factor() const { return llt_; }

 private:
  Matrix kernel_;
  Eigen::LLT<Matrix> llt_;
  double lambda_ = 0.0;
  bool retried_ = false;
};

// Kernel K = J J^T (lower triangle via a rank update, then mirrored).
Matrix gram_rows(const Matrix& J);

// phi = J^T (J J^T + lambda I)^{-1} r
Vector engdw_direction(const Matrix& J, const Vector& r, double lambda);

// Solves (J J^T + lambda I) x = rhs in some way and returns J^T x.
using DirectionSolver = std::function<Vector(const Matrix& J, const Vector& rhs)>;

DirectionSolver exact_solver(double lambda);

struct OptimizerState {
  Vector phi_prev;        // direction of the previous step, zero at start
  std::int64_t k = 1;     // index of the next step
  double mu = 0.0;
  double lambda = 1e-8;
  // Store the moment before bias correction instead of after it.
  bool store_uncorrected = false;

  static OptimizerState init(Index num_params, double mu, double lambda);
  void validate() const;
};

double bias_correction(double mu, std::int64_t k);

struct SpringStep {
  Vector phi;               // bias-corrected direction handed to the update
  Vector phi_uncorrected;   // delta + mu * phi_prev
  double bias = 1.0;        // 1 / sqrt(1 - mu^(2k))
};

// One momentum step:
//   zeta  = r - mu J phi_prev
//   delta = J^T (K + lambda I)^{-1} zeta
//   phi   = (delta + mu phi_prev) / sqrt(1 - mu^(2k))
// Advances state (phi_prev, k).
SpringStep spring_step(OptimizerState& state, const Matrix& J, const Vector& r);
SpringStep spring_step(OptimizerState& state, const Matrix& J, const Vector& r,
                       const DirectionSolver& solver);

// Step length multiplier min(eta, sqrt(C) / |phi|); C <= 0 disables the cap.
double constrained_step(double eta, const Vector& phi, double norm_constraint);

struct LineSearchResult {
  double eta = 0.0;
  double loss = 0.0;
  bool stalled = false;
  int evaluations = 0;
};

using LossAt = std::function<double(const Vector& theta)>;

// Grid search over eta in {2^0, 2^-1, ..., 2^-max_exponent} for the loss at
// theta - eta * phi. Ties go to the larger eta. If no candidate is finite or
// none improves on eta = 0, returns eta = 0 with `stalled` set.
LineSearchResult line_search(const LossAt& loss_at, const Vector& theta, const Vector& phi,
                             int max_exponent = 30);

struct SgdState {
  Vector buffer;
};

// Heavy ball: buffer = momentum * buffer + grad; theta -= lr * buffer.
void sgd_step(Vector& theta, const Vector& grad, double lr, double momentum, SgdState& state);

struct AdamState {
  Vector m;
  Vector v;
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void adam_step(Vector& theta, const Vector& grad, double lr, AdamState& state);

}  // namespace kngd
