#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "kngd/harness.hpp"

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

std::vector<double> parse_fracs(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  if (out.empty()) throw std::invalid_argument("--fracs: need at least one fraction");
  return out;
}

int cmd_run(const std::string& config, const std::string& out) {
  const kngd::RunConfig cfg = kngd::RunConfig::from_file(config);
  const kngd::RunSummary s = kngd::run_experiment(cfg, out, [](const kngd::MetricsRecord& r) {
    if (r.step % 50 == 0) {
      std::printf("step %6lld  loss %.4e  l2 %.4e  eta %.3e  t %.2fs\n",
                  static_cast<long long>(r.step), r.train_loss, r.l2_error, r.eta_used, r.wall_time_s);
      std::fflush(stdout);
    }
  });
  std::printf("%s after %lld steps (%.2fs): final l2 %.4e, best l2 %.4e\n",
              kngd::to_string(s.status).c_str(), static_cast<long long>(s.total_steps),
              s.total_seconds, s.final_l2, s.best_l2);
  return s.status == kngd::RunStatus::completed ? 0 : 3;
}

int cmd_tune(const std::string& space_file, const std::string& config, const std::string& out,
             std::uint64_t seed) {
  const kngd::SearchSpace space = kngd::SearchSpace::from_file(space_file);
  const kngd::KeyValues base = kngd::read_ini(config);
  kngd::RunConfig::from_map(base);  // fail early on a bad base config
  std::filesystem::create_directories(out);
  std::mt19937_64 rng(seed);
  const kngd::TrialRunner inner = kngd::default_trial_runner(out);
  const kngd::SearchResult res = kngd::random_search(space, base, rng,
      [&](const kngd::KeyValues& cfg, int trial) {
        kngd::TrialResult t = inner(cfg, trial);
        std::printf("trial %4d  %-9s  final l2 %.4e\n", trial, kngd::to_string(t.status).c_str(),
                    t.final_l2);
        std::fflush(stdout);
        return t;
      });
  write_text(std::filesystem::path(out) / "trials.csv", kngd::trials_csv(res, space));

  nlohmann::json j;
  j["status"] = res.status;
  j["trials"] = res.trials.size();
  j["completed"] = res.ranking.size();
  j["build"] = kngd::build_id();
  if (!res.ranking.empty()) {
    j["best_trial"] = res.ranking.front().trial;
    j["best_final_l2_error"] = res.ranking.front().final_l2;
    j["best_overrides"] = res.ranking.front().overrides;
  }
  write_text(std::filesystem::path(out) / "summary.json", j.dump(2));
  std::printf("search %s: %zu of %zu trials completed\n", res.status.c_str(), res.ranking.size(),
              res.trials.size());
  return 0;
}

int cmd_bench(const kngd::BenchOptions& opts, const std::string& out) {
  const auto rows = kngd::bench_nystrom(opts);
  std::filesystem::create_directories(out);
  write_text(std::filesystem::path(out) / "bench.csv", kngd::bench_csv(rows));
  for (const auto& r : rows) {
    std::printf("frac %.2f  l %5lld  gpu-efficient %.4fs  stable %.4fs  ratio %.2f  dist %.1e\n",
                r.sketch_frac, static_cast<long long>(r.l), r.gpu_efficient_s, r.stable_s,
                r.speedup, r.projector_distance);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel-space natural gradient training for PINNs"};
  app.require_subcommand(1);

  std::string config, out, space;
  auto* run = app.add_subcommand("run", "train one configuration");
  run->add_option("--config", config, "run config (INI)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "output directory")->required();

  std::uint64_t tune_seed = 0;
  auto* tune = app.add_subcommand("tune", "two-stage random search");
  tune->add_option("--space", space, "search space (INI)")->required()->check(CLI::ExistingFile);
  tune->add_option("--config", config, "base run config (INI)")->required()->check(CLI::ExistingFile);
  tune->add_option("--out", out, "output directory")->required();
  tune->add_option("--seed", tune_seed, "sampler seed");

  kngd::BenchOptions bench_opts;
  std::string fracs = "0.2,0.4,0.6,0.8";
  auto* bench = app.add_subcommand("bench-nystrom", "time the Nystrom variants");
  bench->add_option("--n", bench_opts.n, "matrix size")->required()->check(CLI::Range(10, 1 << 20));
  bench->add_option("--fracs", fracs, "comma separated sketch fractions");
  bench->add_option("--out", out, "output directory")->required();
  bench->add_option("--reps", bench_opts.reps, "timed repetitions")->check(CLI::PositiveNumber);
  bench->add_option("--warmup", bench_opts.warmup, "untimed warm-up repetitions")->check(CLI::NonNegativeNumber);
  bench->add_option("--lambda", bench_opts.lambda, "damping for the inverse apply");
  bench->add_option("--seed", bench_opts.seed, "matrix and sketch seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config, out);
    if (*tune) return cmd_tune(space, config, out, tune_seed);
    if (*bench) {
      bench_opts.sketch_fracs = parse_fracs(fracs);
      return cmd_bench(bench_opts, out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
