#include "kngd/natgrad.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace kngd {

namespace {

std::string pivot_message(double pivot, double lambda) {
  std::ostringstream os;
  os << "indefinite kernel: Cholesky of K + lambda I failed (lambda = " << lambda
     << ", smallest pivot = " << pivot << ")";
  return os.str();
}

Matrix shifted(const Matrix& K, double lambda) {
  Matrix A = K;
  A.diagonal().array() += lambda;
  return A;
}

double smallest_pivot(const Matrix& A) {
  Eigen::LDLT<Matrix> ldlt(A);
  return ldlt.vectorD().minCoeff();
}

}  // namespace

IndefiniteKernelError::IndefiniteKernelError(double smallest_pivot, double lambda)
    : std::runtime_error(pivot_message(smallest_pivot, lambda)), pivot_(smallest_pivot) {}

Matrix gram_rows(const Matrix& J) {
  Matrix K = Matrix::Zero(J.rows(), J.rows());
  K.selfadjointView<Eigen::Lower>().rankUpdate(J);
  K.triangularView<Eigen::StrictlyUpper>() = K.transpose();
  return K;
}

KernelSystem KernelSystem::build(const Matrix& J, double lambda, bool retry) {
  return from_kernel(gram_rows(J), lambda, retry);
}

KernelSystem KernelSystem::from_kernel(Matrix K, double lambda, bool retry) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("KernelSystem: damping must be non-negative");
  if (K.rows() != K.cols()) throw std::invalid_argument("KernelSystem: kernel must be square");
  KernelSystem sys;
  sys.kernel_ = 0.5 * (K + K.transpose());
  sys.lambda_ = lambda;
  sys.llt_.compute(shifted(sys.kernel_, lambda));
  if (sys.llt_.info() != Eigen::Success && retry && lambda > 0.0) {
    sys.lambda_ = 10.0 * lambda;
    sys.retried_ = true;
    sys.llt_.compute(shifted(sys.kernel_, sys.lambda_));
  }
  if (sys.llt_.info() != Eigen::Success) {
    throw IndefiniteKernelError(smallest_pivot(shifted(sys.kernel_, sys.lambda_)), sys.lambda_);
  }
  return sys;
}

Vector KernelSystem::solve(const Vector& rhs) const {
  if (rhs.size() != size()) throw std::invalid_argument("KernelSystem::solve: size mismatch");
  return llt_.solve(rhs);
}

Vector engdw_direction(const Matrix& J, const Vector& r, double lambda) {
  if (J.rows() != r.size()) throw std::invalid_argument("engdw_direction: J and r disagree on N");
  if (!(lambda > 0.0)) throw std::invalid_argument("engdw_direction: damping must be positive");
  const KernelSystem sys = KernelSystem::build(J, lambda);
  return J.transpose() * sys.solve(r);
}

DirectionSolver exact_solver(double lambda) {
  return [lambda](const Matrix& J, const Vector& rhs) { return engdw_direction(J, rhs, lambda); };
}

OptimizerState OptimizerState::init(Index num_params, double mu, double lambda) {
  OptimizerState s;
  s.phi_prev = Vector::Zero(num_params);
  s.mu = mu;
  s.lambda = lambda;
  s.validate();
  return s;
}

void OptimizerState::validate() const {
  if (!(mu >= 0.0 && mu < 1.0)) throw std::invalid_argument("SPRING: momentum must lie in [0, 1)");
  if (k < 1) throw std::invalid_argument("SPRING: step index must start at 1");
  if (!(lambda > 0.0)) throw std::invalid_argument("SPRING: damping must be positive");
}

double bias_correction(double mu, std::int64_t k) {
  if (k < 1) throw std::invalid_argument("bias_correction: k must be >= 1");
  if (mu == 0.0) return 1.0;
  return 1.0 / std::sqrt(1.0 - std::pow(mu, 2.0 * static_cast<double>(k)));
}

SpringStep spring_step(OptimizerState& state, const Matrix& J, const Vector& r) {
  return spring_step(state, J, r, exact_solver(state.lambda));
}

SpringStep spring_step(OptimizerState& state, const Matrix& J, const Vector& r,
                       const DirectionSolver& solver) {
  state.validate();
  if (J.rows() != r.size() || J.cols() != state.phi_prev.size()) {
    throw std::invalid_argument("spring_step: shapes of J, r and phi_prev disagree");
  }
  SpringStep out;
  const bool has_momentum = state.mu != 0.0;
  const Vector zeta = has_momentum ? Vector(r - state.mu * (J * state.phi_prev)) : r;
  const Vector delta = solver(J, zeta);
  out.phi_uncorrected = has_momentum ? Vector(delta + state.mu * state.phi_prev) : delta;
  out.bias = bias_correction(state.mu, state.k);
  out.phi = out.bias * out.phi_uncorrected;
  state.phi_prev = state.store_uncorrected ? out.phi_uncorrected : out.phi;
  ++state.k;
  return out;
}

double constrained_step(double eta, const Vector& phi, double norm_constraint) {
  if (norm_constraint <= 0.0) return eta;
  const double n = phi.norm();
  if (n == 0.0) return eta;
  return std::min(eta, std::sqrt(norm_constraint) / n);
}

LineSearchResult line_search(const LossAt& loss_at, const Vector& theta, const Vector& phi,
                             int max_exponent) {
  LineSearchResult best;
  const double base = loss_at(theta);
  best.loss = base;
  best.evaluations = 1;
  double best_loss = std::numeric_limits<double>::infinity();
  double best_eta = 0.0;
  for (int e = 0; e <= max_exponent; ++e) {
    const double eta = std::ldexp(1.0, -e);
    const double loss = loss_at(theta - eta * phi);
    ++best.evaluations;
    // strict comparison keeps the larger eta on ties
    if (std::isfinite(loss) && loss < best_loss) {
      best_loss = loss;
      best_eta = eta;
    }
  }
  if (best_eta == 0.0 || !(best_loss <= base) || !std::isfinite(base)) {
    best.eta = 0.0;
    best.stalled = true;
    return best;
  }
  best.eta = best_eta;
  best.loss = best_loss;
  return best;
}

void sgd_step(Vector& theta, const Vector& grad, double lr, double momentum, SgdState& state) {
  if (state.buffer.size() != theta.size()) state.buffer = Vector::Zero(theta.size());
  state.buffer = momentum * state.buffer + grad;
  theta -= lr * state.buffer;
}

void adam_step(Vector& theta, const Vector& grad, double lr, AdamState& state) {
  if (state.m.size() != theta.size()) {
    state.m = Vector::Zero(theta.size());
    state.v = Vector::Zero(theta.size());
  }
  ++state.t;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  const Vector m_hat = state.m / c1;
  const Vector v_hat = state.v / c2;
  theta.array() -= lr * m_hat.array() / (v_hat.array().sqrt() + state.eps);
}

}  // namespace kngd
