#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "kngd/mlp.hpp"

using namespace kngd;
using testing::rel_err;

namespace {

MlpArchitecture arch(std::vector<int> widths) { return MlpArchitecture{std::move(widths)}; }

MlpParams random_net(std::vector<int> widths, std::uint64_t seed) {
  // perturb biases so the test is not at a symmetric point
  MlpParams p = init_params(MlpArchitecture{std::move(widths)}, seed);
  std::mt19937_64 rng(seed + 100);
  for (int l = 0; l < p.arch.num_layers(); ++l) p.bias(l) = 0.3 * testing::randv(p.bias(l).size(), rng);
  return p;
}

// Central second difference of the network along each axis, summed.
Vector fd_laplacian(const MlpParams& p, const Matrix& x, double h) {
  const Vector u0 = forward_values(p, x);
  Vector lap = Vector::Zero(x.rows());
  for (Index j = 0; j < x.cols(); ++j) {
    Matrix xp = x, xm = x;
    xp.col(j).array() += h;
    xm.col(j).array() -= h;
    lap += (forward_values(p, xp) - 2.0 * u0 + forward_values(p, xm)) / (h * h);
  }
  return lap;
}

JetCoeffs laplacian_coeffs(Index n, Index d) {
  JetCoeffs c = JetCoeffs::zeros(n, d);
  c.diag2.setOnes();
  return c;
}

// d/dtheta of sum_j diag2(i, j) by central differences, one row per sample.
Matrix fd_laplacian_jacobian(const MlpParams& p, const Matrix& x, double h) {
  Matrix out(x.rows(), p.theta.size());
  for (Index k = 0; k < p.theta.size(); ++k) {
    MlpParams plus = p, minus = p;
    plus.theta(k) += h;
    minus.theta(k) -= h;
    out.col(k) = (forward_jets(plus, x).laplacians() - forward_jets(minus, x).laplacians()) / (2 * h);
  }
  return out;
}

}  // namespace

TEST_CASE("parameter counts") {
  CHECK(arch({1, 1}).num_params() == 2);
  CHECK(arch({5, 64, 64, 48, 48, 1}).num_params() == 10065);
  CHECK(arch({2, 32, 32, 1}).num_params() == 1185);
  CHECK(init_params(arch({2, 32, 32, 1}), 7).theta.size() == 1185);
}

TEST_CASE("invalid architectures are rejected") {
  CHECK_THROWS_AS(arch({2}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(arch({2, 0, 1}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(arch({2, 3, 2}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(init_params(arch({3, 0, 1}), 0), std::invalid_argument);
  CHECK_THROWS_AS(MlpParams(arch({2, 1}), Vector::Zero(4)), std::invalid_argument);
}

TEST_CASE("parameter layout is row-major weights then bias per layer") {
  MlpArchitecture arch{{3, 2, 1}};
  Vector theta(arch.num_params());
  for (Index i = 0; i < theta.size(); ++i) theta(i) = static_cast<double>(i);
  MlpParams p(arch, theta);
  CHECK(p.weight(0)(0, 0) == 0.0);
  CHECK(p.weight(0)(0, 2) == 2.0);
  CHECK(p.weight(0)(1, 0) == 3.0);
  CHECK(p.bias(0)(1) == 7.0);
  CHECK(p.weight(1)(0, 1) == 9.0);
  CHECK(p.bias(1)(0) == 10.0);
  // writing through the views and reading theta back round-trips
  p.weight(1)(0, 0) = -1.0;
  CHECK(p.theta(8) == -1.0);
}

TEST_CASE("initialization is seeded, fan-in scaled, zero bias") {
  MlpArchitecture arch{{4, 16, 1}};
  const MlpParams a = init_params(arch, 3), b = init_params(arch, 3), c = init_params(arch, 4);
  CHECK(a.theta == b.theta);
  CHECK(a.theta != c.theta);
  CHECK(a.weight(0).cwiseAbs().maxCoeff() <= 0.5);
  CHECK(a.weight(1).cwiseAbs().maxCoeff() <= 0.25);
  CHECK(a.bias(0).isZero());
  CHECK(a.bias(1).isZero());
}

TEST_CASE("affine layer jets") {
  MlpParams p(arch({1, 1}), (Vector(2) << 2.0, 0.0).finished());
  const JetBatch j = forward_jets(p, Matrix::Constant(1, 1, 3.0));
  CHECK(j.u(0) == 6.0);
  CHECK(j.grads(0, 0) == 2.0);
  CHECK(j.diag2(0, 0) == 0.0);
}

TEST_CASE("tanh jets at the origin") {
  MlpParams p(arch({1, 1, 1}), (Vector(4) << 1.0, 0.0, 1.0, 0.0).finished());
  const JetBatch j = forward_jets(p, Matrix::Zero(1, 1));
  CHECK(j.u(0) == 0.0);
  CHECK(j.grads(0, 0) == 1.0);
  CHECK(j.diag2(0, 0) == 0.0);

  const double x = 0.4, t = std::tanh(x);
  const JetBatch k = forward_jets(p, Matrix::Constant(1, 1, x));
  CHECK(k.u(0) == doctest::Approx(t).epsilon(1e-15));
  CHECK(k.grads(0, 0) == doctest::Approx(1 - t * t).epsilon(1e-14));
  CHECK(k.diag2(0, 0) == doctest::Approx(-2 * t * (1 - t * t)).epsilon(1e-14));
}

TEST_CASE("identity-activation networks have exact linear jets") {
  MlpArchitecture arch{{3, 4, 2, 1}, Activation::identity};
  const MlpParams p = random_net(arch.widths, 5);
  MlpParams q(arch, p.theta);
  std::mt19937_64 rng(1);
  const Matrix x = testing::randn(6, 3, rng);
  const JetBatch j = forward_jets(q, x);
  const RowMatrix w = q.weight(2) * q.weight(1) * q.weight(0);
  const Vector b = q.weight(2) * (q.weight(1) * q.bias(0) + q.bias(1)) + q.bias(2);
  for (Index i = 0; i < x.rows(); ++i) {
    CHECK(std::abs(j.u(i) - (w * x.row(i).transpose() + b)(0)) <= 1e-12);
    CHECK((j.grads.row(i) - w).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(j.diag2.row(i).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("values agree across the jet, value-jet and plain passes") {
  const MlpParams p = random_net({3, 8, 8, 1}, 2);
  std::mt19937_64 rng(2);
  const Matrix x = testing::randn(7, 3, rng);
  const Vector plain = forward_values(p, x);
  CHECK((forward_jets(p, x).u - plain).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK((forward_value_jets(p, x).u - plain).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("first derivatives match central differences") {
  const MlpParams p = random_net({2, 8, 1}, 11);
  std::mt19937_64 rng(11);
  const Matrix x = testing::randn(10, 2, rng);
  const JetBatch j = forward_jets(p, x);
  const double h = 1e-5;
  for (Index d = 0; d < 2; ++d) {
    Matrix xp = x, xm = x;
    xp.col(d).array() += h;
    xm.col(d).array() -= h;
    const Vector fd = (forward_values(p, xp) - forward_values(p, xm)) / (2 * h);
    CHECK(rel_err(j.grads.col(d), fd) <= 1e-8);
  }
}

TEST_CASE("Laplacian matches central finite differences") {
  for (int d : {1, 2, 5}) {
    CAPTURE(d);
    const MlpParams p = random_net({d, 8, 1}, 20 + d);
    std::mt19937_64 rng(20 + d);
    const Matrix x = testing::randn(12, d, rng);
    const JetBatch j = forward_jets(p, x);
    CHECK(rel_err(j.laplacians(), fd_laplacian(p, x, 1e-4)) <= 1e-6);
  }
}

TEST_CASE("time axis is excluded from the Laplacian") {
  const MlpParams p = random_net({3, 6, 1}, 4);
  std::mt19937_64 rng(4);
  const Matrix x = testing::randn(5, 3, rng);
  const JetBatch spatial = forward_jets(p, x, false);
  const JetBatch timed = forward_jets(p, x, true);
  CHECK(timed.time_axis);
  for (Index i = 0; i < x.rows(); ++i) {
    CHECK(timed.laplacian(i) == doctest::Approx(spatial.diag2(i, 1) + spatial.diag2(i, 2)).epsilon(1e-14));
    CHECK(spatial.laplacian(i) == doctest::Approx(spatial.diag2.row(i).sum()).epsilon(1e-14));
  }
  CHECK_THROWS_AS(forward_jets(random_net({1, 2, 1}, 0), Matrix::Zero(1, 1), true), std::invalid_argument);
}

TEST_CASE("tape replay reproduces the jets exactly") {
  const MlpParams p = random_net({3, 5, 4, 1}, 9);
  std::mt19937_64 rng(9);
  const Matrix x = testing::randn(4, 3, rng);
  const JetBatch j = forward_jets(p, x);
  const JetBatch r = j.replay();
  CHECK(r.u == j.u);
  CHECK(r.grads == j.grads);
  CHECK(r.diag2 == j.diag2);
}

TEST_CASE("value pullback of an affine layer is [x, 1]") {
  MlpParams p(arch({3, 1}), (Vector(4) << 0.5, -1.0, 2.0, 0.1).finished());
  Matrix x(2, 3);
  x << 1.0, 2.0, 3.0, -4.0, 0.5, 0.25;
  const JetBatch j = forward_jets(p, x);
  JetCoeffs c = JetCoeffs::zeros(2, 3);
  c.value.setOnes();
  const Matrix rows = scalar_pullback(j, c);
  for (Index i = 0; i < 2; ++i) {
    for (Index k = 0; k < 3; ++k) CHECK(rows(i, k) == x(i, k));
    CHECK(rows(i, 3) == 1.0);
  }
}

TEST_CASE("zero coefficients give zero rows") {
  const MlpParams p = random_net({2, 6, 1}, 3);
  const Matrix x = Matrix::Constant(3, 2, 0.2);
  const JetBatch j = forward_jets(p, x);
  CHECK(scalar_pullback(j, JetCoeffs::zeros(3, 2)).isZero());
}

TEST_CASE("Laplacian pullback matches finite differences in the parameters") {
  for (int d : {1, 2, 5}) {
    CAPTURE(d);
    const MlpParams p = random_net({d, 8, 1}, 40 + d);
    std::mt19937_64 rng(40 + d);
    const Matrix x = testing::randn(4, d, rng);
    const JetBatch j = forward_jets(p, x);
    const Matrix rows = scalar_pullback(j, laplacian_coeffs(4, d));
    CHECK(rel_err(rows, fd_laplacian_jacobian(p, x, 1e-6)) <= 1e-4);
  }
}

TEST_CASE("general coefficient pullback matches finite differences") {
  const int d = 3;
  const MlpParams p = random_net({d, 6, 5, 1}, 77);
  std::mt19937_64 rng(77);
  const Matrix x = testing::randn(5, d, rng);
  JetCoeffs c{testing::randv(5, rng), testing::randn(5, d, rng), testing::randn(5, d, rng)};
  auto scalar = [&](const MlpParams& q) {
    const JetBatch j = forward_jets(q, x);
    return Vector(c.value.cwiseProduct(j.u) + c.grads.cwiseProduct(j.grads).rowwise().sum() +
                  c.diag2.cwiseProduct(j.diag2).rowwise().sum());
  };
  const Matrix rows = scalar_pullback(forward_jets(p, x), c);
  Matrix fd(5, p.theta.size());
  const double h = 1e-6;
  for (Index k = 0; k < p.theta.size(); ++k) {
    MlpParams plus = p, minus = p;
    plus.theta(k) += h;
    minus.theta(k) -= h;
    fd.col(k) = (scalar(plus) - scalar(minus)) / (2 * h);
  }
  CHECK(rel_err(rows, fd) <= 1e-4);

  const Vector summed = scalar_pullback_sum(forward_jets(p, x), c);
  CHECK(rel_err(summed, Vector(rows.colwise().sum().transpose())) <= 1e-12);
}

TEST_CASE("pullback argument checks") {
  const MlpParams p = random_net({2, 4, 1}, 1);
  const Matrix x = Matrix::Constant(2, 2, 0.1);
  CHECK_THROWS_AS(forward_jets(p, Matrix::Zero(2, 3)), std::invalid_argument);
  const JetBatch untaped = forward_jets(p, x, false, false);
  CHECK_THROWS_AS(scalar_pullback(untaped, JetCoeffs::zeros(2, 2)), std::invalid_argument);
  CHECK_THROWS_AS(untaped.replay(), std::invalid_argument);
  const JetBatch j = forward_jets(p, x);
  CHECK_THROWS_AS(scalar_pullback(j, JetCoeffs::zeros(3, 2)), std::invalid_argument);
  CHECK_THROWS_AS(scalar_pullback(j, JetCoeffs::zeros(2, 1)), std::invalid_argument);
}

TEST_CASE("jets are deterministic") {
  const MlpParams p = random_net({2, 16, 16, 1}, 8);
  std::mt19937_64 rng(8);
  const Matrix x = testing::randn(9, 2, rng);
  const JetBatch a = forward_jets(p, x), b = forward_jets(p, x);
  CHECK(a.u == b.u);
  CHECK(a.diag2 == b.diag2);
  CHECK(scalar_pullback(a, laplacian_coeffs(9, 2)) == scalar_pullback(b, laplacian_coeffs(9, 2)));
}
