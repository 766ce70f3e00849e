#pragma once

// PDE benchmarks posed as least-squares problems over sampled collocation
// points. Each problem supplies a pointwise interior residual written in terms
// of network jets, Dirichlet/initial data, and a closed-form solution.
//
// Residual vector layout: r = [ r_int / sqrt(N_int) ; r_bnd / sqrt(N_bnd) ].

#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kngd/mlp.hpp"
#include "kngd/types.hpp"

namespace kngd {

struct Box {
  Vector lo;
  Vector hi;

  Index dim() const { return lo.size(); }
  static Box cube(Index d, double lo, double hi);
};

// Where boundary samples are drawn.
enum class BoundaryLayout {
  faces,               // all of the spatial boundary
  initial_and_faces,   // half on the t = 0 slab, half on spatial faces
  initial_only,        // t = 0 slab only
};

enum class BoundaryKind : int { spatial = 0, initial = 1 };

// Value of an interior residual at one point and its partial derivatives with
// respect to the jet entries (u, du/dx_j, d2u/dx_j2). For linear operators the
// partials are the operator's coefficients; otherwise they linearize it.
struct PointResidual {
  double value = 0.0;
  double d_value = 0.0;
  Vector d_grads;
  Vector d_diag2;
};

class PdeProblem {
 public:
  virtual ~PdeProblem() = default;

  const std::string& name() const { return name_; }
  // Number of network inputs, including time when present.
  Index input_dim() const { return domain_.dim(); }
  bool has_time() const { return has_time_; }
  const Box& domain() const { return domain_; }
  BoundaryLayout boundary_layout() const { return layout_; }

  // Interior residual L u - f at x, from the jets of u along each input axis.
  virtual PointResidual interior(double u, std::span<const double> grads,
                                 std::span<const double> diag2,
                                 std::span<const double> x) const = 0;
  virtual double forcing(std::span<const double> x) const = 0;
  // Dirichlet or initial data g(x).
  virtual double boundary_value(std::span<const double> x) const = 0;
  virtual double exact_solution(std::span<const double> x) const = 0;

 protected:
  PdeProblem(std::string name, Box domain, bool has_time, BoundaryLayout layout)
      : name_(std::move(name)), domain_(std::move(domain)), has_time_(has_time), layout_(layout) {}

 private:
  std::string name_;
  Box domain_;
  bool has_time_;
  BoundaryLayout layout_;
};

using ProblemPtr = std::shared_ptr<const PdeProblem>;

enum class PoissonVariant { cosine, harmonic };

// -Laplace u = f on [0,1]^d.
//   cosine:   u* = sum_i cos(pi x_i), f = pi^2 u*
//   harmonic: u* = sum_i x_{2i-1} x_{2i}, f = 0 (d even)
ProblemPtr make_poisson(int d, PoissonVariant variant);

// u_t - 1/4 Laplace_x u = 0 on [0,1] x [0,1]^4, u* = exp(-t) sum_i sin(2 x_i).
ProblemPtr make_heat();

// Log-density form of an Ornstein-Uhlenbeck Fokker-Planck equation on
// [0,1] x [-5,5]^9:
//   q_t - d/2 - 1/2 grad q . x - |grad q|^2 - Laplace q = 0,
// with q* = log N(0, (2 - exp(-t)) I). Only the initial condition is imposed.
ProblemPtr make_log_fokker_planck();

// Variance of the reference Gaussian at time t.
double log_fokker_planck_variance(double t);

// Accepts poisson<d>d_cos, poisson<d>d_harmonic, heat4+1d, logfp9+1d.
ProblemPtr make_problem(const std::string& name);

struct Batch {
  Matrix x_int;                         // N_int x d
  Matrix x_bnd;                         // N_bnd x d
  std::vector<BoundaryKind> bnd_kind;   // per boundary row
  double w_int = 1.0;                   // 1 / sqrt(N_int)
  double w_bnd = 1.0;                   // 1 / sqrt(N_bnd)
};

using Rng = std::mt19937_64;

// Interior points uniform in the open box; boundary points per the problem's
// layout, with spatial faces chosen uniformly among the 2d faces.
Batch sample_batch(const PdeProblem& problem, Rng& rng, Index n_int, Index n_bnd);

// Uniform points in the closed box, used for error evaluation.
Matrix sample_domain(const PdeProblem& problem, Rng& rng, Index n);

struct ResidualSystem {
  Vector r;   // N_int + N_bnd
  Matrix J;   // N x P
  double loss = 0.0;
};

struct ResidualOptions {
  // Measure weights |Omega| and |dOmega| of the continuous loss; 1 drops them.
  double interior_weight = 1.0;
  double boundary_weight = 1.0;
};

ResidualSystem assemble_residual(const PdeProblem& problem, const MlpParams& params,
                                 const Batch& batch, const ResidualOptions& opts = {});

// Residual vector only; skips the tape and the Jacobian.
Vector residuals(const PdeProblem& problem, const MlpParams& params, const Batch& batch,
                 const ResidualOptions& opts = {});

double batch_loss(const PdeProblem& problem, const MlpParams& params, const Batch& batch,
                  const ResidualOptions& opts = {});

struct L2Error {
  double value = 0.0;
  // false when the reference solution vanishes on the evaluation set and the
  // absolute RMS error is reported instead
  bool relative = true;
};

L2Error l2_error(const PdeProblem& problem, const MlpParams& params, const Matrix& eval_points);

}  // namespace kngd
