#pragma once

// Randomized Nystrom approximations of symmetric PSD operators.
//
// The production variant needs only Cholesky factorizations of l x l
// matrices and triangular solves:
//
//   Omega ~ N(0,1)^{n x l},  Y = A Omega,  nu = eps * |Y|_F,
//   Y_nu = Y + nu Omega,     C C^T = Omega^T Y_nu,
//   B = Y_nu C^{-T},         L L^T = B^T B + lambda I,
//
// giving A + nu I ~ B B^T and, by Woodbury,
//   (B B^T + lambda I)^{-1} v = (v - B L^{-T} L^{-1} B^T v) / lambda.
//
// The reference variant (QR of Omega, then an SVD of B) is kept for
// comparisons and as an oracle.

#include <cstdint>
#include <functional>
#include <random>

#include "kngd/types.hpp"

namespace kngd {

using RandomEngine = std::mt19937_64;

// Maps an n x l block to A times that block.
using BlockOperator = std::function<Matrix(const Matrix& block)>;

struct NystromApprox {
  Matrix B;           // n x l
  Matrix L;           // l x l lower, chol(B^T B + lambda I)
  double lambda = 0;
  double nu = 0;
  Index l = 0;

  Index n() const { return B.rows(); }
  // B B^T, which approximates A + nu I.
  Matrix dense() const { return B * B.transpose(); }
};

Matrix gaussian_matrix(Index rows, Index cols, RandomEngine& rng);

NystromApprox nystrom_gpu_efficient(const BlockOperator& apply_A, Index n, Index l, double lambda,
                                    RandomEngine& rng);

// Same construction with a caller-supplied test matrix. Throws
// std::runtime_error("sketch degenerate") when Omega^T Y_nu is not PD.
NystromApprox nystrom_gpu_efficient(const BlockOperator& apply_A, const Matrix& omega,
                                    double lambda);

// (B B^T + lambda I)^{-1} v
Vector nystrom_inv_apply(const NystromApprox& approx, const Vector& v);

struct StableNystrom {
  Matrix U;              // n x l orthonormal
  Vector eigenvalues;    // l, descending, clipped at 0
  double nu = 0;

  Matrix dense() const { return U * eigenvalues.asDiagonal() * U.transpose(); }
  // (U diag(eig) U^T + lambda I)^{-1} v
  Vector inv_apply(const Vector& v, double lambda) const;
};

StableNystrom nystrom_stable(const Matrix& A, Index l, RandomEngine& rng);
StableNystrom nystrom_stable(const Matrix& A, const Matrix& omega);
StableNystrom nystrom_stable(const BlockOperator& apply_A, const Matrix& omega);

// Block operator for K = J J^T that never forms K.
BlockOperator kernel_operator(const Matrix& J);

// J^T (nys(J J^T) + lambda I)^{-1} zeta with sketch size l.
Vector randomized_direction(const Matrix& J, const Vector& zeta, double lambda, Index l,
                            RandomEngine& rng);

// Same, through the SVD-based construction.
Vector randomized_direction_stable(const Matrix& J, const Vector& zeta, double lambda, Index l,
                                   RandomEngine& rng);

struct Spectrum {
  Vector eigenvalues;  // descending, >= 0
};

Spectrum kernel_spectrum(const Matrix& K);

// sum_i s_i / (s_i + lambda)
double effective_dimension(const Spectrum& spectrum, double lambda);

// Distance |P_a - P_b|_2 between orthogonal projectors onto the column spaces
// of a and b (columns assumed linearly independent).
double projector_distance(const Matrix& a, const Matrix& b);

}  // namespace kngd
