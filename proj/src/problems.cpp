#include "kngd/problems.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <regex>
#include <stdexcept>

namespace kngd {

Box Box::cube(Index d, double lo, double hi) {
  return {Vector::Constant(d, lo), Vector::Constant(d, hi)};
}

namespace {

constexpr double kPi = std::numbers::pi;

class CosinePoisson final : public PdeProblem {
 public:
  explicit CosinePoisson(int d)
      : PdeProblem("poisson" + std::to_string(d) + "d_cos", Box::cube(d, 0.0, 1.0), false,
                   BoundaryLayout::faces) {}

  PointResidual interior(double, std::span<const double>, std::span<const double> diag2,
                         std::span<const double> x) const override {
    PointResidual r;
    double lap = 0.0;
    for (double h : diag2) lap += h;
    r.value = -lap - forcing(x);
    r.d_grads = Vector::Zero(static_cast<Index>(diag2.size()));
    r.d_diag2 = Vector::Constant(static_cast<Index>(diag2.size()), -1.0);
    return r;
  }
  double forcing(std::span<const double> x) const override {
    return kPi * kPi * exact_solution(x);
  }
  double boundary_value(std::span<const double> x) const override { return exact_solution(x); }
  double exact_solution(std::span<const double> x) const override {
    double s = 0.0;
    for (double xi : x) s += std::cos(kPi * xi);
    return s;
  }
};

class HarmonicPoisson final : public PdeProblem {
 public:
  explicit HarmonicPoisson(int d)
      : PdeProblem("poisson" + std::to_string(d) + "d_harmonic", Box::cube(d, 0.0, 1.0), false,
                   BoundaryLayout::faces) {}

  PointResidual interior(double, std::span<const double>, std::span<const double> diag2,
                         std::span<const double>) const override {
    PointResidual r;
    double lap = 0.0;
    for (double h : diag2) lap += h;
    r.value = -lap;
    r.d_grads = Vector::Zero(static_cast<Index>(diag2.size()));
    r.d_diag2 = Vector::Constant(static_cast<Index>(diag2.size()), -1.0);
    return r;
  }
  double forcing(std::span<const double>) const override { return 0.0; }
  double boundary_value(std::span<const double> x) const override { return exact_solution(x); }
  double exact_solution(std::span<const double> x) const override {
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < x.size(); i += 2) s += x[i] * x[i + 1];
    return s;
  }
};

class Heat final : public PdeProblem {
 public:
  static constexpr double kappa = 0.25;

  Heat() : PdeProblem("heat4+1d", Box::cube(5, 0.0, 1.0), true, BoundaryLayout::initial_and_faces) {}

  PointResidual interior(double, std::span<const double> grads, std::span<const double> diag2,
                         std::span<const double>) const override {
    const Index k = static_cast<Index>(grads.size());
    PointResidual r;
    double lap = 0.0;
    for (Index j = 1; j < k; ++j) lap += diag2[j];
    r.value = grads[0] - kappa * lap;
    r.d_grads = Vector::Zero(k);
    r.d_grads(0) = 1.0;
    r.d_diag2 = Vector::Constant(k, -kappa);
    r.d_diag2(0) = 0.0;
    return r;
  }
  double forcing(std::span<const double>) const override { return 0.0; }
  double boundary_value(std::span<const double> x) const override { return exact_solution(x); }
  double exact_solution(std::span<const double> x) const override {
    double s = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) s += std::sin(2.0 * x[i]);
    return std::exp(-x[0]) * s;
  }
};

class LogFokkerPlanck final : public PdeProblem {
 public:
  static constexpr int spatial = 9;

  LogFokkerPlanck()
      : PdeProblem("logfp9+1d", make_domain(), true, BoundaryLayout::initial_only) {}

  PointResidual interior(double, std::span<const double> grads, std::span<const double> diag2,
                         std::span<const double> x) const override {
    const Index k = static_cast<Index>(grads.size());
    PointResidual r;
    r.d_grads = Vector::Zero(k);
    r.d_diag2 = Vector::Constant(k, -1.0);
    r.d_diag2(0) = 0.0;
    r.d_grads(0) = 1.0;
    double drift = 0.0, sq = 0.0, lap = 0.0;
    for (Index j = 1; j < k; ++j) {
      drift += grads[j] * x[j];
      sq += grads[j] * grads[j];
      lap += diag2[j];
      r.d_grads(j) = -0.5 * x[j] - 2.0 * grads[j];
    }
    r.value = grads[0] - 0.5 * spatial - 0.5 * drift - sq - lap;
    return r;
  }
  double forcing(std::span<const double>) const override { return 0.0; }
  double boundary_value(std::span<const double> x) const override { return exact_solution(x); }
  double exact_solution(std::span<const double> x) const override {
    const double var = log_fokker_planck_variance(x[0]);
    double r2 = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) r2 += x[i] * x[i];
    return -0.5 * spatial * std::log(2.0 * kPi * var) - 0.5 * r2 / var;
  }

 private:
  static Box make_domain() {
    Box b = Box::cube(spatial + 1, -5.0, 5.0);
    b.lo(0) = 0.0;
    b.hi(0) = 1.0;
    return b;
  }
};

// Uniform on the open interval (lo, hi).
double open_uniform(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  double v = dist(rng);
  while (v <= lo || v >= hi) v = dist(rng);
  return v;
}

void fill_uniform(Rng& rng, const Box& box, Eigen::Ref<Matrix> rows, bool open) {
  for (Index i = 0; i < rows.rows(); ++i) {
    for (Index j = 0; j < rows.cols(); ++j) {
      if (open) {
        rows(i, j) = open_uniform(rng, box.lo(j), box.hi(j));
      } else {
        rows(i, j) = std::uniform_real_distribution<double>(box.lo(j), box.hi(j))(rng);
      }
    }
  }
}

void fill_faces(Rng& rng, const Box& box, Index first_axis, Eigen::Ref<Matrix> rows) {
  fill_uniform(rng, box, rows, false);
  const Index faces = 2 * (box.dim() - first_axis);
  std::uniform_int_distribution<Index> pick(0, faces - 1);
  for (Index i = 0; i < rows.rows(); ++i) {
    const Index f = pick(rng);
    const Index axis = first_axis + f / 2;
    rows(i, axis) = (f % 2 == 0) ? box.lo(axis) : box.hi(axis);
  }
}

}  // namespace

ProblemPtr make_poisson(int d, PoissonVariant variant) {
  if (d < 1) throw std::invalid_argument("make_poisson: dimension must be positive");
  if (variant == PoissonVariant::harmonic) {
    if (d % 2 != 0) throw std::invalid_argument("make_poisson: harmonic variant needs even d");
    return std::make_shared<HarmonicPoisson>(d);
  }
  return std::make_shared<CosinePoisson>(d);
}

ProblemPtr make_heat() { return std::make_shared<Heat>(); }

ProblemPtr make_log_fokker_planck() { return std::make_shared<LogFokkerPlanck>(); }

double log_fokker_planck_variance(double t) {
  const double e = std::exp(-t);
  return e + (1.0 - e) * 2.0;
}

ProblemPtr make_problem(const std::string& name) {
  static const std::regex poisson(R"(poisson(\d+)d_(cos|harmonic))");
  std::smatch m;
  if (std::regex_match(name, m, poisson)) {
    const int d = std::stoi(m[1].str());
    return make_poisson(d, m[2].str() == "cos" ? PoissonVariant::cosine : PoissonVariant::harmonic);
  }
  if (name == "heat4+1d") return make_heat();
  if (name == "logfp9+1d") return make_log_fokker_planck();
  throw std::invalid_argument("unknown problem '" + name + "'");
}

Batch sample_batch(const PdeProblem& problem, Rng& rng, Index n_int, Index n_bnd) {
  if (n_int < 1 || n_bnd < 1) {
    throw std::invalid_argument("sample_batch: need at least one interior and one boundary point");
  }
  const Box& box = problem.domain();
  const Index d = box.dim();
  Batch b;
  b.x_int.resize(n_int, d);
  fill_uniform(rng, box, b.x_int, true);

  b.x_bnd.resize(n_bnd, d);
  b.bnd_kind.resize(static_cast<std::size_t>(n_bnd));
  Index n_initial = 0;
  switch (problem.boundary_layout()) {
    case BoundaryLayout::faces: n_initial = 0; break;
    case BoundaryLayout::initial_and_faces: n_initial = n_bnd / 2; break;
    case BoundaryLayout::initial_only: n_initial = n_bnd; break;
  }
  if (n_initial > 0) {
    auto rows = b.x_bnd.topRows(n_initial);
    fill_uniform(rng, box, rows, false);
    rows.col(0).setConstant(box.lo(0));
  }
  if (n_bnd > n_initial) {
    fill_faces(rng, box, problem.has_time() ? 1 : 0, b.x_bnd.bottomRows(n_bnd - n_initial));
  }
  for (Index i = 0; i < n_bnd; ++i) {
    b.bnd_kind[static_cast<std::size_t>(i)] =
        i < n_initial ? BoundaryKind::initial : BoundaryKind::spatial;
  }
  b.w_int = 1.0 / std::sqrt(static_cast<double>(n_int));
  b.w_bnd = 1.0 / std::sqrt(static_cast<double>(n_bnd));
  return b;
}

Matrix sample_domain(const PdeProblem& problem, Rng& rng, Index n) {
  Matrix x(n, problem.input_dim());
  fill_uniform(rng, problem.domain(), x, false);
  return x;
}

namespace {

struct InteriorTerms {
  Vector values;
  JetCoeffs coeffs;
};

InteriorTerms interior_terms(const PdeProblem& problem, const JetBatch& jets, const Matrix& x,
                             double scale, bool want_coeffs) {
  const Index n = jets.size();
  const Index k = jets.grads.cols();
  InteriorTerms out;
  out.values.resize(n);
  if (want_coeffs) out.coeffs = JetCoeffs::zeros(n, k);
  Vector g(k), h(k), xi(x.cols());
  for (Index i = 0; i < n; ++i) {
    g = jets.grads.row(i).transpose();
    h = jets.diag2.row(i).transpose();
    xi = x.row(i).transpose();
    const PointResidual pr = problem.interior(jets.u(i), {g.data(), static_cast<std::size_t>(k)},
                                              {h.data(), static_cast<std::size_t>(k)},
                                              {xi.data(), static_cast<std::size_t>(xi.size())});
    out.values(i) = scale * pr.value;
    if (want_coeffs) {
      out.coeffs.value(i) = scale * pr.d_value;
      out.coeffs.grads.row(i) = scale * pr.d_grads.transpose();
      out.coeffs.diag2.row(i) = scale * pr.d_diag2.transpose();
    }
  }
  return out;
}

Vector boundary_targets(const PdeProblem& problem, const Matrix& x) {
  Vector g(x.rows());
  Vector xi(x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    xi = x.row(i).transpose();
    g(i) = problem.boundary_value({xi.data(), static_cast<std::size_t>(xi.size())});
  }
  return g;
}

void check_batch(const PdeProblem& problem, const Batch& batch) {
  if (batch.x_int.cols() != problem.input_dim() || batch.x_bnd.cols() != problem.input_dim()) {
    throw std::invalid_argument("assemble_residual: batch dimension does not match problem '" +
                                problem.name() + "'");
  }
}

}  // namespace

ResidualSystem assemble_residual(const PdeProblem& problem, const MlpParams& params,
                                 const Batch& batch, const ResidualOptions& opts) {
  check_batch(problem, batch);
  const double s_int = std::sqrt(opts.interior_weight) * batch.w_int;
  const double s_bnd = std::sqrt(opts.boundary_weight) * batch.w_bnd;
  const Index n_int = batch.x_int.rows();
  const Index n_bnd = batch.x_bnd.rows();

  const JetBatch jets = forward_jets(params, batch.x_int, problem.has_time());
  InteriorTerms interior = interior_terms(problem, jets, batch.x_int, s_int, true);

  const JetBatch bjets = forward_value_jets(params, batch.x_bnd);
  JetCoeffs bcoeffs = JetCoeffs::zeros(n_bnd, 0);
  bcoeffs.value.setConstant(s_bnd);

  ResidualSystem sys;
  sys.r.resize(n_int + n_bnd);
  sys.r.head(n_int) = interior.values;
  sys.r.tail(n_bnd) = s_bnd * (bjets.u - boundary_targets(problem, batch.x_bnd));
  sys.J.resize(n_int + n_bnd, params.theta.size());
  sys.J.topRows(n_int) = scalar_pullback(jets, interior.coeffs);
  sys.J.bottomRows(n_bnd) = scalar_pullback(bjets, bcoeffs);
  sys.loss = 0.5 * sys.r.squaredNorm();
  return sys;
}

Vector residuals(const PdeProblem& problem, const MlpParams& params, const Batch& batch,
                 const ResidualOptions& opts) {
  check_batch(problem, batch);
  const double s_int = std::sqrt(opts.interior_weight) * batch.w_int;
  const double s_bnd = std::sqrt(opts.boundary_weight) * batch.w_bnd;
  const Index n_int = batch.x_int.rows();
  const Index n_bnd = batch.x_bnd.rows();
  const JetBatch jets = forward_jets(params, batch.x_int, problem.has_time(), false);
  Vector r(n_int + n_bnd);
  r.head(n_int) = interior_terms(problem, jets, batch.x_int, s_int, false).values;
  r.tail(n_bnd) =
      s_bnd * (forward_values(params, batch.x_bnd) - boundary_targets(problem, batch.x_bnd));
  return r;
}

double batch_loss(const PdeProblem& problem, const MlpParams& params, const Batch& batch,
                  const ResidualOptions& opts) {
  return 0.5 * residuals(problem, params, batch, opts).squaredNorm();
}

L2Error l2_error(const PdeProblem& problem, const MlpParams& params, const Matrix& eval_points) {
  const Vector u = forward_values(params, eval_points);
  Vector ustar(eval_points.rows());
  Vector xi(eval_points.cols());
  for (Index i = 0; i < eval_points.rows(); ++i) {
    xi = eval_points.row(i).transpose();
    ustar(i) = problem.exact_solution({xi.data(), static_cast<std::size_t>(xi.size())});
  }
  const double err = (u - ustar).norm();
  const double ref = ustar.norm();
  if (ref == 0.0) {
    return {err / std::sqrt(static_cast<double>(std::max<Index>(1, eval_points.rows()))), false};
  }
  return {err / ref, true};
}

}  // namespace kngd
