#include "kngd/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "kngd/mlp.hpp"
#include "kngd/natgrad.hpp"
#include "kngd/problems.hpp"

#ifndef KNGD_VERSION
#define KNGD_VERSION "0.0.0"
#endif
#ifndef KNGD_GIT_REV
#define KNGD_GIT_REV "unknown"
#endif

namespace kngd {

namespace {

using Clock = std::chrono::steady_clock;

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Accumulates time only while running.
class Stopwatch {
 public:
  void start() { t0_ = Clock::now(); }
  void stop() { total_ += std::chrono::duration<double>(Clock::now() - t0_).count(); }
  double seconds() const { return total_; }
  double peek() const { return total_ + std::chrono::duration<double>(Clock::now() - t0_).count(); }

 private:
  Clock::time_point t0_ = Clock::now();
  double total_ = 0;
};

bool log_this_step(const RunConfig& cfg, std::int64_t step) {
  if (cfg.metrics_every > 0) return step % cfg.metrics_every == 0;
  return step <= 1000 || step % 10 == 0;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace

std::string to_string(RunStatus s) { return s == RunStatus::completed ? "completed" : "diverged"; }

std::string build_id() { return std::string(KNGD_VERSION) + "+" + KNGD_GIT_REV; }

std::string metrics_csv(const std::vector<MetricsRecord>& records) {
  std::ostringstream os;
  os << kMetricsHeader << "\n";
  for (const auto& r : records) {
    os << r.step << "," << num(r.wall_time_s) << "," << num(r.train_loss) << "," << num(r.l2_error)
       << "," << num(r.eta_used) << "," << num(r.phi_norm) << ","
       << (r.d_eff ? num(*r.d_eff) : std::string()) << "," << r.seed << "," << r.optimizer << "\n";
  }
  return os.str();
}

std::string summary_json(const RunSummary& s, const RunConfig& config) {
  nlohmann::json j;
  j["status"] = to_string(s.status);
  if (!s.message.empty()) j["message"] = s.message;
  j["final_l2_error"] = s.final_l2;
  j["best_l2_error"] = s.best_l2;
  j["l2_relative"] = s.l2_relative;
  j["final_train_loss"] = s.final_loss;
  j["total_steps"] = s.total_steps;
  j["total_seconds"] = s.total_seconds;
  j["stalled_line_searches"] = s.stalled_line_searches;
  j["damping_retries"] = s.damping_retries;
  j["config"] = config.to_map();
  j["build"] = build_id();
  return j.dump(2);
}

RunSummary run_experiment(const RunConfig& cfg, const std::string& out_dir,
                          const StepCallback& on_record) {
  cfg.validate();
  const ProblemPtr problem = make_problem(cfg.problem);
  MlpArchitecture arch{cfg.widths(static_cast<int>(problem->input_dim()))};
  MlpParams params = init_params(arch, cfg.seed_params);
  const ResidualOptions ropts{cfg.interior_weight, cfg.boundary_weight};

  Rng batch_rng(cfg.seed_batches);
  RandomEngine sketch_rng(cfg.seed_sketch);
  Rng eval_rng(cfg.seed_eval);
  const Matrix eval_points = sample_domain(*problem, eval_rng, cfg.eval_points);

  const std::string opt_name = to_string(cfg.optimizer);
  const Index sketch = cfg.sketch_size();

  DirectionSolver solver;
  std::int64_t retries = 0;
  if (!cfg.rand_enabled) {
    solver = [&](const Matrix& J, const Vector& rhs) -> Vector {
      const KernelSystem sys = KernelSystem::build(J, cfg.damping);
      if (sys.retried()) ++retries;
      return J.transpose() * sys.solve(rhs);
    };
  } else if (cfg.rand_variant == SketchVariant::gpu_efficient) {
    solver = [&](const Matrix& J, const Vector& rhs) -> Vector {
      return randomized_direction(J, rhs, cfg.damping, sketch, sketch_rng);
    };
  } else {
    solver = [&](const Matrix& J, const Vector& rhs) -> Vector {
      return randomized_direction_stable(J, rhs, cfg.damping, sketch, sketch_rng);
    };
  }

  OptimizerState spring;
  if (cfg.optimizer == OptimizerKind::spring) {
    spring = OptimizerState::init(params.theta.size(), cfg.momentum, cfg.damping);
    spring.store_uncorrected = cfg.store_uncorrected;
  }
  SgdState sgd;
  AdamState adam;

  RunSummary summary;
  summary.best_l2 = std::numeric_limits<double>::infinity();

  auto record = [&](std::int64_t step, double seconds, double loss, double eta, double phi_norm,
                    std::optional<double> d_eff) {
    const L2Error err = l2_error(*problem, params, eval_points);
    summary.l2_relative = err.relative;
    summary.best_l2 = std::min(summary.best_l2, err.value);
    MetricsRecord rec{step, seconds, loss, err.value, eta, phi_norm, d_eff, cfg.seed_params, opt_name};
    summary.records.push_back(rec);
    if (on_record) on_record(rec);
  };

  auto loss_at = [&](const Batch& batch) {
    return [&, batch_ptr = &batch](const Vector& theta) {
      MlpParams trial(params.arch, theta);
      return batch_loss(*problem, trial, *batch_ptr, ropts);
    };
  };

  Stopwatch watch;
  watch.start();
  {
    const Batch batch0 = sample_batch(*problem, batch_rng, cfg.n_interior, cfg.n_boundary);
    const double loss0 = batch_loss(*problem, params, batch0, ropts);
    watch.stop();
    record(0, watch.seconds(), loss0, 0.0, 0.0, std::nullopt);
    summary.final_loss = loss0;
  }

  std::int64_t step = 0;
  double last_eta = 0, last_phi = 0;
  bool last_logged = true;
  while (true) {
    if (cfg.max_steps >= 0 && step >= cfg.max_steps) break;
    if (cfg.max_seconds > 0 && watch.seconds() >= cfg.max_seconds) break;
    ++step;
    watch.start();

    const Batch batch = sample_batch(*problem, batch_rng, cfg.n_interior, cfg.n_boundary);
    const ResidualSystem sys = assemble_residual(*problem, params, batch, ropts);
    if (!std::isfinite(sys.loss) || !sys.J.allFinite()) {
      watch.stop();
      summary.status = RunStatus::diverged;
      summary.message = "non-finite loss at step " + std::to_string(step);
      break;
    }

    Vector phi;
    switch (cfg.optimizer) {
      case OptimizerKind::engd_w: phi = solver(sys.J, sys.r); break;
      case OptimizerKind::spring: phi = spring_step(spring, sys.J, sys.r, solver).phi; break;
      case OptimizerKind::sgd:
      case OptimizerKind::adam: phi = sys.J.transpose() * sys.r; break;
    }

    double eta = 0;
    double loss_after = std::numeric_limits<double>::quiet_NaN();
    if (cfg.optimizer == OptimizerKind::sgd) {
      sgd_step(params.theta, phi, cfg.lr, cfg.momentum, sgd);
      eta = cfg.lr;
    } else if (cfg.optimizer == OptimizerKind::adam) {
      adam_step(params.theta, phi, cfg.lr, adam);
      eta = cfg.lr;
    } else {
      double base_eta = cfg.lr;
      if (cfg.line_search) {
        const LineSearchResult ls = line_search(loss_at(batch), params.theta, phi);
        if (ls.stalled) ++summary.stalled_line_searches;
        base_eta = ls.eta;
        loss_after = ls.loss;
      }
      eta = constrained_step(base_eta, phi, cfg.norm_constraint);
      if (eta != base_eta || !cfg.line_search) loss_after = std::numeric_limits<double>::quiet_NaN();
      params.theta -= eta * phi;
    }
    if (std::isnan(loss_after)) loss_after = batch_loss(*problem, params, batch, ropts);
    watch.stop();

    last_eta = eta;
    last_phi = phi.norm();
    summary.final_loss = loss_after;
    if (!std::isfinite(loss_after) || !params.theta.allFinite()) {
      summary.status = RunStatus::diverged;
      summary.message = "non-finite loss at step " + std::to_string(step);
      break;
    }

    std::optional<double> d_eff;
    if (cfg.deff_every > 0 && step % cfg.deff_every == 0) {
      try {
        d_eff = effective_dimension(kernel_spectrum(gram_rows(sys.J)), cfg.damping);
      } catch (const std::runtime_error&) {
        d_eff.reset();
      }
    }
    // a target L2 needs the error every step
    last_logged = log_this_step(cfg, step) || d_eff.has_value() || cfg.target_l2 > 0;
    if (last_logged) record(step, watch.seconds(), loss_after, last_eta, last_phi, d_eff);
    if (cfg.target_l2 > 0 && summary.records.back().l2_error <= cfg.target_l2) {
      summary.message = "target L2 reached";
      break;
    }
  }

  summary.total_steps = step;
  summary.total_seconds = watch.seconds();
  summary.damping_retries = retries;
  if (summary.status == RunStatus::completed && !last_logged) {
    record(step, watch.seconds(), summary.final_loss, last_eta, last_phi, std::nullopt);
  }
  summary.final_l2 = summary.status == RunStatus::completed
                         ? summary.records.back().l2_error
                         : std::numeric_limits<double>::quiet_NaN();

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_file(std::filesystem::path(out_dir) / "metrics.csv", metrics_csv(summary.records));
    write_file(std::filesystem::path(out_dir) / "summary.json", summary_json(summary, cfg));
  }
  return summary;
}

}  // namespace kngd
