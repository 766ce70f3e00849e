#include <cmath>
#include <numbers>

#include "doctest.h"
#include "helpers.hpp"
#include "kngd/natgrad.hpp"
#include "kngd/problems.hpp"

using namespace kngd;
using testing::rel_err;

namespace {

constexpr double kPi = std::numbers::pi;

double at(const ProblemPtr& p, double (PdeProblem::*f)(std::span<const double>) const, Vector x) {
  return ((*p).*f)({x.data(), static_cast<std::size_t>(x.size())});
}

double interior_value(const PdeProblem& p, double u, const Vector& g, const Vector& h, const Vector& x) {
  return p.interior(u, {g.data(), static_cast<std::size_t>(g.size())},
                    {h.data(), static_cast<std::size_t>(h.size())},
                    {x.data(), static_cast<std::size_t>(x.size())})
      .value;
}

// Laplace equation on the unit square with an affine solution a . x + c, which
// a single affine layer represents exactly.
class AffineStub final : public PdeProblem {
 public:
  AffineStub(Vector a, double c, double forcing_value = 0.0)
      : PdeProblem("affine_stub", Box::cube(a.size(), 0.0, 1.0), false, BoundaryLayout::faces),
        a_(std::move(a)), c_(c), f_(forcing_value) {}

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
  double forcing(std::span<const double>) const override { return f_; }
  double boundary_value(std::span<const double> x) const override { return exact_solution(x); }
  double exact_solution(std::span<const double> x) const override {
    double s = c_;
    for (Index i = 0; i < a_.size(); ++i) s += a_(i) * x[static_cast<std::size_t>(i)];
    return s;
  }

 private:
  Vector a_;
  double c_;
  double f_;
};

MlpParams affine_params(const Vector& a, double c) {
  Vector theta(a.size() + 1);
  theta << a, c;
  return MlpParams(MlpArchitecture{{static_cast<int>(a.size()), 1}}, theta);
}

Matrix fd_jacobian(const PdeProblem& p, const MlpParams& params, const Batch& b, double h) {
  Matrix out(b.x_int.rows() + b.x_bnd.rows(), params.theta.size());
  for (Index k = 0; k < params.theta.size(); ++k) {
    MlpParams plus = params, minus = params;
    plus.theta(k) += h;
    minus.theta(k) -= h;
    out.col(k) = (residuals(p, plus, b) - residuals(p, minus, b)) / (2 * h);
  }
  return out;
}

}  // namespace

TEST_CASE("cosine Poisson data") {
  const ProblemPtr p5 = make_poisson(5, PoissonVariant::cosine);
  CHECK(at(p5, &PdeProblem::exact_solution, Vector::Zero(5)) == doctest::Approx(5.0));
  CHECK(at(p5, &PdeProblem::forcing, Vector::Zero(5)) == doctest::Approx(5 * kPi * kPi).epsilon(1e-15));
  const ProblemPtr p1 = make_poisson(1, PoissonVariant::cosine);
  CHECK(std::abs(at(p1, &PdeProblem::exact_solution, Vector::Constant(1, 0.5))) <= 1e-15);
  CHECK(std::abs(at(p1, &PdeProblem::forcing, Vector::Constant(1, 0.5))) <= 1e-14);
  CHECK(p5->input_dim() == 5);
  CHECK_FALSE(p5->has_time());
}

TEST_CASE("harmonic Poisson data") {
  const ProblemPtr p = make_poisson(100, PoissonVariant::harmonic);
  CHECK(at(p, &PdeProblem::exact_solution, Vector::Ones(100)) == 50.0);
  CHECK(at(p, &PdeProblem::forcing, Vector::Ones(100)) == 0.0);
  CHECK_THROWS_AS(make_poisson(3, PoissonVariant::harmonic), std::invalid_argument);
  CHECK_THROWS_AS(make_poisson(0, PoissonVariant::cosine), std::invalid_argument);
}

TEST_CASE("heat equation data") {
  const ProblemPtr p = make_heat();
  CHECK(p->input_dim() == 5);
  CHECK(p->has_time());
  CHECK(at(p, &PdeProblem::exact_solution, Vector::Zero(5)) == 0.0);
  Vector x = Vector::Constant(5, kPi / 4);
  x(0) = 1.0;
  CHECK(at(p, &PdeProblem::boundary_value, x) == doctest::Approx(4.0 * std::exp(-1.0)).epsilon(1e-15));
}

TEST_CASE("log Fokker-Planck reference variance") {
  CHECK(log_fokker_planck_variance(0.0) == 1.0);
  CHECK(log_fokker_planck_variance(60.0) == doctest::Approx(2.0).epsilon(1e-15));
  const ProblemPtr p = make_log_fokker_planck();
  CHECK(p->input_dim() == 10);
  CHECK(p->domain().lo(0) == 0.0);
  CHECK(p->domain().hi(3) == 5.0);
  // q*(0, 0) = log of the standard normal density at the origin
  CHECK(at(p, &PdeProblem::exact_solution, Vector::Zero(10)) ==
        doctest::Approx(-4.5 * std::log(2 * kPi)).epsilon(1e-15));
}

TEST_CASE("problem names") {
  CHECK(make_problem("poisson5d_cos")->name() == "poisson5d_cos");
  CHECK(make_problem("poisson10d_harmonic")->input_dim() == 10);
  CHECK(make_problem("poisson100d_harmonic")->input_dim() == 100);
  CHECK(make_problem("heat4+1d")->name() == "heat4+1d");
  CHECK(make_problem("logfp9+1d")->name() == "logfp9+1d");
  CHECK_THROWS_AS(make_problem("poisson5d_sin"), std::invalid_argument);
  CHECK_THROWS_AS(make_problem("poisson3d_harmonic"), std::invalid_argument);
}

TEST_CASE("exact solutions annihilate the interior residual") {
  std::mt19937_64 rng(5);
  const int n = 1000;

  SUBCASE("cosine Poisson") {
    const ProblemPtr p = make_poisson(5, PoissonVariant::cosine);
    const Matrix xs = testing::uniform(n, 5, 0, 1, rng);
    double worst = 0;
    for (Index i = 0; i < n; ++i) {
      const Vector x = xs.row(i).transpose();
      const Vector g = (-kPi * (kPi * x.array()).sin()).matrix();
      const Vector h = (-kPi * kPi * (kPi * x.array()).cos()).matrix();
      worst = std::max(worst, std::abs(interior_value(*p, at(p, &PdeProblem::exact_solution, x), g, h, x)));
    }
    CHECK(worst <= 1e-10);
  }
  SUBCASE("harmonic Poisson") {
    const ProblemPtr p = make_poisson(10, PoissonVariant::harmonic);
    const Matrix xs = testing::uniform(n, 10, 0, 1, rng);
    double worst = 0;
    for (Index i = 0; i < n; ++i) {
      const Vector x = xs.row(i).transpose();
      Vector g(10);
      for (int k = 0; k < 10; k += 2) {
        g(k) = x(k + 1);
        g(k + 1) = x(k);
      }
      worst = std::max(worst, std::abs(interior_value(*p, at(p, &PdeProblem::exact_solution, x), g,
                                                      Vector::Zero(10), x)));
    }
    CHECK(worst <= 1e-12);
  }
  SUBCASE("heat") {
    const ProblemPtr p = make_heat();
    const Matrix xs = testing::uniform(n, 5, 0, 1, rng);
    double worst = 0;
    for (Index i = 0; i < n; ++i) {
      const Vector x = xs.row(i).transpose();
      const double e = std::exp(-x(0));
      const double u = at(p, &PdeProblem::exact_solution, x);
      Vector g(5), h(5);
      g(0) = -u;
      h(0) = u;
      for (int k = 1; k < 5; ++k) {
        g(k) = 2 * e * std::cos(2 * x(k));
        h(k) = -4 * e * std::sin(2 * x(k));
      }
      worst = std::max(worst, std::abs(interior_value(*p, u, g, h, x)));
    }
    CHECK(worst <= 1e-10);
  }
  SUBCASE("log Fokker-Planck") {
    const ProblemPtr p = make_log_fokker_planck();
    Matrix xs = testing::uniform(n, 10, -5, 5, rng);
    xs.col(0) = testing::uniform(n, 1, 0, 1, rng);
    double worst = 0;
    for (Index i = 0; i < n; ++i) {
      const Vector x = xs.row(i).transpose();
      const double s = 2 - std::exp(-x(0)), ds = std::exp(-x(0));
      const double r2 = x.tail(9).squaredNorm();
      Vector g(10), h(10);
      g(0) = -4.5 * ds / s + 0.5 * r2 * ds / (s * s);
      h(0) = 0.0;
      g.tail(9) = -x.tail(9) / s;
      h.tail(9).setConstant(-1.0 / s);
      worst = std::max(worst, std::abs(interior_value(*p, at(p, &PdeProblem::exact_solution, x), g, h, x)));
    }
    CHECK(worst <= 1e-8);
  }
}

TEST_CASE("log Fokker-Planck linearization matches the residual's derivatives") {
  const ProblemPtr p = make_log_fokker_planck();
  std::mt19937_64 rng(3);
  const Vector x = testing::uniform(10, 1, -2, 2, rng).col(0);
  const Vector g = testing::randv(10, rng), h = testing::randv(10, rng);
  const PointResidual pr = p->interior(0.3, {g.data(), 10}, {h.data(), 10}, {x.data(), 10});
  const double step = 1e-6;
  for (Index j = 0; j < 10; ++j) {
    Vector gp = g, gm = g, hp = h, hm = h;
    gp(j) += step;
    gm(j) -= step;
    hp(j) += step;
    hm(j) -= step;
    const double dg = (interior_value(*p, 0.3, gp, h, x) - interior_value(*p, 0.3, gm, h, x)) / (2 * step);
    const double dh = (interior_value(*p, 0.3, g, hp, x) - interior_value(*p, 0.3, g, hm, x)) / (2 * step);
    CHECK(pr.d_grads(j) == doctest::Approx(dg).epsilon(1e-7));
    CHECK(pr.d_diag2(j) == doctest::Approx(dh).epsilon(1e-7));
  }
}

TEST_CASE("sampling contracts") {
  SUBCASE("unit interval boundary is {0, 1}") {
    const ProblemPtr p = make_poisson(1, PoissonVariant::cosine);
    Rng rng(1);
    const Batch b = sample_batch(*p, rng, 8, 4);
    for (Index i = 0; i < 4; ++i) CHECK((b.x_bnd(i, 0) == 0.0 || b.x_bnd(i, 0) == 1.0));
  }
  SUBCASE("interior rows lie in the open box, boundary rows on a face") {
    const ProblemPtr p = make_poisson(3, PoissonVariant::cosine);
    Rng rng(2);
    const Batch b = sample_batch(*p, rng, 200, 60);
    CHECK((b.x_int.array() > 0.0).all());
    CHECK((b.x_int.array() < 1.0).all());
    for (Index i = 0; i < b.x_bnd.rows(); ++i) {
      CHECK(((b.x_bnd.row(i).array() == 0.0) || (b.x_bnd.row(i).array() == 1.0)).any());
      CHECK(b.bnd_kind[static_cast<std::size_t>(i)] == BoundaryKind::spatial);
    }
    CHECK(b.w_int == doctest::Approx(1 / std::sqrt(200.0)));
    CHECK(b.w_bnd == doctest::Approx(1 / std::sqrt(60.0)));
  }
  SUBCASE("every face is used") {
    const ProblemPtr p = make_poisson(2, PoissonVariant::cosine);
    Rng rng(3);
    const Batch b = sample_batch(*p, rng, 1, 400);
    int counts[4] = {0, 0, 0, 0};
    for (Index i = 0; i < b.x_bnd.rows(); ++i) {
      for (int axis = 0; axis < 2; ++axis) {
        if (b.x_bnd(i, axis) == 0.0) ++counts[2 * axis];
        if (b.x_bnd(i, axis) == 1.0) ++counts[2 * axis + 1];
      }
    }
    for (int c : counts) CHECK(c > 60);
  }
  SUBCASE("heat splits boundary points between t = 0 and the spatial faces") {
    const ProblemPtr p = make_heat();
    Rng rng(4);
    const Batch b = sample_batch(*p, rng, 10, 20);
    for (Index i = 0; i < 20; ++i) {
      const auto kind = b.bnd_kind[static_cast<std::size_t>(i)];
      CHECK(kind == (i < 10 ? BoundaryKind::initial : BoundaryKind::spatial));
      if (kind == BoundaryKind::initial) {
        CHECK(b.x_bnd(i, 0) == 0.0);
      } else {
        const auto xs = b.x_bnd.row(i).tail(4).array();
        CHECK(((xs == 0.0) || (xs == 1.0)).any());
      }
    }
  }
  SUBCASE("log Fokker-Planck uses only the initial slab") {
    const ProblemPtr p = make_log_fokker_planck();
    Rng rng(5);
    const Batch b = sample_batch(*p, rng, 10, 12);
    CHECK(b.x_bnd.col(0).isZero());
    for (auto kind : b.bnd_kind) CHECK(kind == BoundaryKind::initial);
    CHECK((b.x_int.rightCols(9).array().abs() < 5.0).all());
  }
  SUBCASE("equal seeds give equal batches") {
    const ProblemPtr p = make_heat();
    Rng a(9), b(9);
    const Batch x = sample_batch(*p, a, 16, 8), y = sample_batch(*p, b, 16, 8);
    CHECK(x.x_int == y.x_int);
    CHECK(x.x_bnd == y.x_bnd);
  }
  SUBCASE("empty batches are rejected") {
    Rng rng(0);
    CHECK_THROWS_AS(sample_batch(*make_heat(), rng, 0, 4), std::invalid_argument);
  }
}

TEST_CASE("representable solution gives zero residual") {
  const Vector a = (Vector(2) << 0.7, -1.3).finished();
  AffineStub stub(a, 0.25);
  Rng rng(6);
  const Batch b = sample_batch(stub, rng, 32, 16);
  const ResidualSystem sys = assemble_residual(stub, affine_params(a, 0.25), b);
  CHECK(sys.r.cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(sys.loss <= 1e-30);
}

TEST_CASE("single interior point carries unit scaling") {
  const Vector a = Vector::Zero(2);
  AffineStub stub(a, 0.0, -3.5);
  Rng rng(7);
  const Batch b = sample_batch(stub, rng, 1, 4);
  const ResidualSystem sys = assemble_residual(stub, affine_params(a, 0.0), b);
  CHECK(sys.r(0) == 3.5);
  CHECK(sys.loss == 0.5 * sys.r.squaredNorm());
}

TEST_CASE("Jacobian rows match finite differences of the residuals") {
  struct Case {
    ProblemPtr problem;
    std::uint64_t seed;
  };
  for (const Case& c : {Case{make_poisson(2, PoissonVariant::cosine), 1}, Case{make_heat(), 2},
                        Case{make_log_fokker_planck(), 3}, Case{make_poisson(4, PoissonVariant::harmonic), 4}}) {
    CAPTURE(c.problem->name());
    const int d = static_cast<int>(c.problem->input_dim());
    MlpParams params = init_params(MlpArchitecture{{d, 6, 5, 1}}, c.seed);
    Rng rng(c.seed);
    params.theta += 0.1 * testing::randv(params.theta.size(), rng);
    const Batch b = sample_batch(*c.problem, rng, 6, 4);
    const ResidualSystem sys = assemble_residual(*c.problem, params, b);
    CHECK(rel_err(sys.r, residuals(*c.problem, params, b)) <= 1e-14);
    CHECK(rel_err(sys.J, fd_jacobian(*c.problem, params, b, 1e-6)) <= 1e-4);
    CHECK(sys.loss == doctest::Approx(batch_loss(*c.problem, params, b)).epsilon(1e-14));
  }
}

TEST_CASE("duplicating the interior points leaves the loss unchanged") {
  const ProblemPtr p = make_poisson(2, PoissonVariant::cosine);
  const MlpParams params = init_params(MlpArchitecture{{2, 8, 1}}, 1);
  Rng rng(8);
  Batch b = sample_batch(*p, rng, 10, 6);
  Batch doubled = b;
  doubled.x_int.resize(20, 2);
  doubled.x_int << b.x_int, b.x_int;
  doubled.w_int = 1 / std::sqrt(20.0);
  CHECK(batch_loss(*p, params, doubled) == doctest::Approx(batch_loss(*p, params, b)).epsilon(1e-13));
}

TEST_CASE("loss weights scale the residual blocks") {
  const ProblemPtr p = make_poisson(2, PoissonVariant::cosine);
  const MlpParams params = init_params(MlpArchitecture{{2, 8, 1}}, 1);
  Rng rng(8);
  const Batch b = sample_batch(*p, rng, 10, 6);
  const Vector plain = residuals(*p, params, b);
  const Vector weighted = residuals(*p, params, b, {4.0, 9.0});
  CHECK(rel_err(weighted.head(10), Vector(2.0 * plain.head(10))) <= 1e-15);
  CHECK(rel_err(weighted.tail(6), Vector(3.0 * plain.tail(6))) <= 1e-15);
}

TEST_CASE("Gramian is symmetric positive semidefinite") {
  const ProblemPtr p = make_heat();
  const MlpParams params = init_params(MlpArchitecture{{5, 8, 1}}, 2);
  Rng rng(2);
  const ResidualSystem sys = assemble_residual(*p, params, sample_batch(*p, rng, 20, 10));
  const Matrix G = sys.J.transpose() * sys.J;
  CHECK((G - G.transpose()).norm() <= 1e-12 * G.norm());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(G);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-10 * G.norm());
}

TEST_CASE("relative L2 error") {
  const Vector a = (Vector(2) << 1.0, 2.0).finished();
  AffineStub stub(a, 0.5);
  Rng rng(10);
  const Matrix pts = sample_domain(stub, rng, 500);
  CHECK(l2_error(stub, affine_params(a, 0.5), pts).value <= 1e-15);
  CHECK(l2_error(stub, affine_params(Vector::Zero(2), 0.0), pts).value == doctest::Approx(1.0));
  const L2Error scaled = l2_error(stub, affine_params(1.1 * a, 0.55), pts);
  CHECK(scaled.value == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(scaled.relative);

  AffineStub zero(Vector::Zero(2), 0.0);
  const L2Error abs = l2_error(zero, affine_params(Vector::Zero(2), 2.0), pts);
  CHECK_FALSE(abs.relative);
  CHECK(abs.value == doctest::Approx(2.0));
}

TEST_CASE("batch dimension mismatch is rejected") {
  const ProblemPtr p = make_poisson(2, PoissonVariant::cosine);
  Rng rng(0);
  const Batch b = sample_batch(*make_heat(), rng, 3, 2);
  CHECK_THROWS_AS(assemble_residual(*p, init_params(MlpArchitecture{std::vector<int>(3, 2)}, 0), b),
                  std::invalid_argument);
}
