#include "kngd/nystrom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace kngd {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

Matrix thin_q(const Matrix& a) {
  Eigen::HouseholderQR<Matrix> qr(a);
  return qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
}

struct ShiftedSketch {
  Matrix y_nu;
  Eigen::LLT<Matrix> core;  // chol(Omega^T Y_nu)
  double nu = 0;
};

ShiftedSketch shifted_sketch(const BlockOperator& apply_A, const Matrix& omega) {
  ShiftedSketch s;
  const Matrix y = apply_A(omega);
  if (y.rows() != omega.rows() || y.cols() != omega.cols()) {
    throw std::invalid_argument("nystrom: operator returned a block of the wrong shape");
  }
  s.nu = kEps * y.norm();
  s.y_nu = y + s.nu * omega;
  Matrix core = omega.transpose() * s.y_nu;
  core = 0.5 * (core + core.transpose());
  s.core.compute(core);
  if (s.core.info() != Eigen::Success) throw std::runtime_error("sketch degenerate");
  return s;
}

// B = Y_nu C^{-T}, i.e. B^T = C^{-1} Y_nu^T.
Matrix sketch_factor(const ShiftedSketch& s) {
  const Matrix bt = s.core.matrixL().solve(s.y_nu.transpose());
  return bt.transpose();
}

}  // namespace

Matrix gaussian_matrix(Index rows, Index cols, RandomEngine& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  }
  return m;
}

NystromApprox nystrom_gpu_efficient(const BlockOperator& apply_A, const Matrix& omega,
                                    double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("nystrom: lambda must be positive");
  const ShiftedSketch s = shifted_sketch(apply_A, omega);
  NystromApprox out;
  out.B = sketch_factor(s);
  out.lambda = lambda;
  out.nu = s.nu;
  out.l = omega.cols();
  Matrix r = out.B.transpose() * out.B;
  r.diagonal().array() += lambda;
  Eigen::LLT<Matrix> llt(r);
  if (llt.info() != Eigen::Success) throw std::runtime_error("nystrom: B^T B + lambda I not PD");
  out.L = llt.matrixL();
  return out;
}

NystromApprox nystrom_gpu_efficient(const BlockOperator& apply_A, Index n, Index l, double lambda,
                                    RandomEngine& rng) {
  if (l < 1 || l > n) throw std::invalid_argument("nystrom: sketch size must lie in [1, n]");
  try {
    return nystrom_gpu_efficient(apply_A, gaussian_matrix(n, l, rng), lambda);
  } catch (const std::runtime_error& e) {
    if (std::string(e.what()) != "sketch degenerate") throw;
  }
  return nystrom_gpu_efficient(apply_A, gaussian_matrix(n, l, rng), lambda);
}

Vector nystrom_inv_apply(const NystromApprox& approx, const Vector& v) {
  if (v.size() != approx.n()) throw std::invalid_argument("nystrom_inv_apply: size mismatch");
  Vector z = approx.B.transpose() * v;
  const auto L = approx.L.triangularView<Eigen::Lower>();
  L.solveInPlace(z);
  L.transpose().solveInPlace(z);
  return (v - approx.B * z) / approx.lambda;
}

Vector StableNystrom::inv_apply(const Vector& v, double lambda) const {
  const Vector coords = U.transpose() * v;
  const Vector scaled = coords.array() / (eigenvalues.array() + lambda);
  return U * scaled + (v - U * coords) / lambda;
}

StableNystrom nystrom_stable(const BlockOperator& apply_A, const Matrix& omega) {
  const Matrix q = thin_q(omega);
  const ShiftedSketch s = shifted_sketch(apply_A, q);
  const Matrix b = sketch_factor(s);
  Eigen::BDCSVD<Matrix> svd(b, Eigen::ComputeThinU);
  StableNystrom out;
  out.U = svd.matrixU();
  out.eigenvalues = (svd.singularValues().array().square() - s.nu).max(0.0).matrix();
  out.nu = s.nu;
  return out;
}

StableNystrom nystrom_stable(const Matrix& A, const Matrix& omega) {
  if (A.rows() != A.cols() || A.rows() != omega.rows()) {
    throw std::invalid_argument("nystrom_stable: shape mismatch");
  }
  return nystrom_stable([&A](const Matrix& block) -> Matrix { return A * block; }, omega);
}

StableNystrom nystrom_stable(const Matrix& A, Index l, RandomEngine& rng) {
  if (l < 1 || l > A.rows()) throw std::invalid_argument("nystrom: sketch size must lie in [1, n]");
  return nystrom_stable(A, gaussian_matrix(A.rows(), l, rng));
}

BlockOperator kernel_operator(const Matrix& J) {
  return [&J](const Matrix& block) -> Matrix {
    const Matrix t = J.transpose() * block;
    return J * t;
  };
}

Vector randomized_direction(const Matrix& J, const Vector& zeta, double lambda, Index l,
                            RandomEngine& rng) {
  if (zeta.size() != J.rows()) throw std::invalid_argument("randomized_direction: size mismatch");
  const NystromApprox approx = nystrom_gpu_efficient(kernel_operator(J), J.rows(), l, lambda, rng);
  return J.transpose() * nystrom_inv_apply(approx, zeta);
}

Vector randomized_direction_stable(const Matrix& J, const Vector& zeta, double lambda, Index l,
                                   RandomEngine& rng) {
  if (zeta.size() != J.rows()) throw std::invalid_argument("randomized_direction: size mismatch");
  if (l < 1 || l > J.rows()) throw std::invalid_argument("nystrom: sketch size must lie in [1, n]");
  const StableNystrom approx = nystrom_stable(kernel_operator(J), gaussian_matrix(J.rows(), l, rng));
  return J.transpose() * approx.inv_apply(zeta, lambda);
}

Spectrum kernel_spectrum(const Matrix& K) {
  if (K.rows() != K.cols()) throw std::invalid_argument("kernel_spectrum: matrix must be square");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(K, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw std::runtime_error("kernel_spectrum: eigensolver failed");
  Spectrum s;
  s.eigenvalues = eig.eigenvalues().reverse().cwiseMax(0.0);
  return s;
}

double effective_dimension(const Spectrum& spectrum, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("effective_dimension: lambda must be positive");
  return (spectrum.eigenvalues.array() / (spectrum.eigenvalues.array() + lambda)).sum();
}

double projector_distance(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("projector_distance: row mismatch");
  if (a.cols() != b.cols()) return 1.0;
  const Matrix qa = thin_q(a);
  const Matrix qb = thin_q(b);
  // |(I - P_a) Q_b|_2 = sine of the largest principal angle
  const Matrix resid = qb - qa * (qa.transpose() * qb);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(resid.transpose() * resid, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, eig.eigenvalues().maxCoeff()));
}

}  // namespace kngd
