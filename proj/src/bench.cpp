#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "kngd/harness.hpp"

namespace kngd {

namespace {

using Clock = std::chrono::steady_clock;

template <typename F>
double time_once(F&& f) {
  const auto t0 = Clock::now();
  f();
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Matrix synthetic_psd(Index n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("synthetic_psd: n must be positive");
  RandomEngine rng(seed);
  Matrix g = gaussian_matrix(n, n, rng);
  // polynomial decay keeps the matrix full rank but far from isotropic
  for (Index j = 0; j < n; ++j) g.col(j) /= static_cast<double>(j + 1);
  Matrix a(n, n);
  a.setZero();
  a.selfadjointView<Eigen::Lower>().rankUpdate(g, 1.0 / static_cast<double>(n));
  a.triangularView<Eigen::StrictlyUpper>() = a.transpose();
  return a;
}

std::vector<BenchRow> bench_nystrom(const Matrix& A, const BenchOptions& opts) {
  const Index n = A.rows();
  if (n < 10 || A.cols() != n) throw std::invalid_argument("bench_nystrom: need a square matrix, n >= 10");
  if (opts.reps < 1 || opts.warmup < 0) throw std::invalid_argument("bench_nystrom: reps >= 1, warmup >= 0");
  if (!(opts.lambda > 0)) throw std::invalid_argument("bench_nystrom: lambda must be positive");

  const BlockOperator apply = [&A](const Matrix& block) -> Matrix { return A * block; };
  RandomEngine rng(opts.seed + 1);
  const Vector v = gaussian_matrix(n, 1, rng).col(0);

  std::vector<BenchRow> rows;
  for (double frac : opts.sketch_fracs) {
    if (!(frac > 0 && frac <= 1)) throw std::invalid_argument("bench_nystrom: fractions must lie in (0, 1]");
    BenchRow row;
    row.sketch_frac = frac;
    row.l = std::max<Index>(1, static_cast<Index>(std::llround(frac * static_cast<double>(n))));

    // correctness gate: both variants must span the same range for a shared Omega
    const Matrix omega = gaussian_matrix(n, row.l, rng);
    const NystromApprox fast = nystrom_gpu_efficient(apply, omega, opts.lambda);
    const StableNystrom stable = nystrom_stable(apply, omega);
    row.projector_distance = projector_distance(fast.B, stable.U);

    double sink = 0;
    auto run_fast = [&] {
      const NystromApprox a = nystrom_gpu_efficient(apply, omega, opts.lambda);
      sink += nystrom_inv_apply(a, v)(0);
    };
    auto run_stable = [&] {
      const StableNystrom s = nystrom_stable(apply, omega);
      sink += s.inv_apply(v, opts.lambda)(0);
    };
    for (int i = 0; i < opts.warmup; ++i) {
      run_fast();
      run_stable();
    }
    double t_fast = 0, t_stable = 0;
    for (int i = 0; i < opts.reps; ++i) {
      t_fast += time_once(run_fast);
      t_stable += time_once(run_stable);
    }
    if (!std::isfinite(sink)) throw std::runtime_error("bench_nystrom: non-finite result");
    row.gpu_efficient_s = t_fast / opts.reps;
    row.stable_s = t_stable / opts.reps;
    row.speedup = row.stable_s / row.gpu_efficient_s;
    row.timed_samples = opts.reps;
    rows.push_back(row);
  }
  return rows;
}

std::vector<BenchRow> bench_nystrom(const BenchOptions& opts) {
  return bench_nystrom(synthetic_psd(opts.n, opts.seed), opts);
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream os;
  os << "sketch_frac,l,gpu_efficient_s,stable_s,speedup,projector_distance,timed_samples\n";
  for (const auto& r : rows) {
    os << fmt(r.sketch_frac) << "," << r.l << "," << fmt(r.gpu_efficient_s) << "," << fmt(r.stable_s)
       << "," << fmt(r.speedup) << "," << fmt(r.projector_distance) << "," << r.timed_samples << "\n";
  }
  return os.str();
}

}  // namespace kngd
