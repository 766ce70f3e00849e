#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "kngd/config.hpp"
#include "kngd/nystrom.hpp"
#include "kngd/types.hpp"

namespace kngd {

struct MetricsRecord {
  std::int64_t step = 0;
  double wall_time_s = 0;     // optimizer time only; evaluation and diagnostics excluded
  double train_loss = 0;      // current batch, after the update
  double l2_error = 0;
  double eta_used = 0;        // multiplier applied to the direction
  double phi_norm = 0;
  std::optional<double> d_eff;
  std::uint64_t seed = 0;
  std::string optimizer;
};

// Fixed column order of metrics.csv.
inline constexpr const char* kMetricsHeader =
    "step,wall_time_s,train_loss,l2_error,eta_used,phi_norm,d_eff,seed,optimizer";

std::string metrics_csv(const std::vector<MetricsRecord>& records);

enum class RunStatus { completed, diverged };
std::string to_string(RunStatus s);

struct RunSummary {
  RunStatus status = RunStatus::completed;
  std::string message;
  double final_l2 = 0;
  double best_l2 = 0;
  bool l2_relative = true;
  double final_loss = 0;
  std::int64_t total_steps = 0;
  double total_seconds = 0;
  std::int64_t stalled_line_searches = 0;
  std::int64_t damping_retries = 0;
  std::vector<MetricsRecord> records;
};

using StepCallback = std::function<void(const MetricsRecord&)>;

// Trains per the config. When out_dir is non-empty writes metrics.csv and
// summary.json there.
RunSummary run_experiment(const RunConfig& config, const std::string& out_dir = {},
                          const StepCallback& on_record = {});

std::string summary_json(const RunSummary& summary, const RunConfig& config);

std::string build_id();

// ---- random search -------------------------------------------------------

enum class Distribution { log_uniform, uniform, choice };

struct ParamRange {
  std::string key;  // "section.key" of the run config
  Distribution dist = Distribution::uniform;
  double lo = 0;
  double hi = 1;
  std::vector<std::string> values;  // for choice
};

struct SearchSpace {
  std::vector<ParamRange> params;
  int stage1_trials = 50;
  int stage2_trials = 50;

  // [search] stage1_trials, stage2_trials
  // [param.<section>.<key>] dist = log_uniform|uniform|choice, lo, hi, values
  static SearchSpace from_map(const KeyValues& kv);
  static SearchSpace from_file(const std::string& path);
  void validate() const;
  // Ranges re-centred on `best`: +-1 decade for log-uniform, +-10% of the
  // width for uniform, clipped to the original bounds; choices unchanged.
  SearchSpace narrowed(const KeyValues& best) const;
  KeyValues sample(std::mt19937_64& rng) const;
};

struct TrialResult {
  int trial = 0;
  int stage = 1;
  KeyValues overrides;
  RunStatus status = RunStatus::completed;
  double final_l2 = 0;
  double best_l2 = 0;
  std::int64_t steps = 0;
  double seconds = 0;
};

struct SearchResult {
  std::vector<TrialResult> trials;   // in execution order
  std::vector<TrialResult> ranking;  // completed trials, best final L2 first
  std::string status;                // "ok" or "all_diverged"
};

using TrialRunner = std::function<TrialResult(const KeyValues& config, int trial)>;

TrialRunner default_trial_runner(const std::string& out_dir = {});

SearchResult random_search(const SearchSpace& space, const KeyValues& base, std::mt19937_64& rng,
                           const TrialRunner& runner);

std::string trials_csv(const SearchResult& result, const SearchSpace& space);

// ---- Nystrom microbenchmark ---------------------------------------------

struct BenchOptions {
  Index n = 2000;
  std::vector<double> sketch_fracs = {0.2, 0.4, 0.6, 0.8};
  int reps = 5;
  int warmup = 1;
  double lambda = 1e-7;
  std::uint64_t seed = 0;
};

struct BenchRow {
  double sketch_frac = 0;
  Index l = 0;
  double gpu_efficient_s = 0;
  double stable_s = 0;
  double speedup = 0;            // stable / gpu_efficient
  double projector_distance = 0; // same Omega, both variants
  int timed_samples = 0;
};

// Synthetic n x n PSD test matrix with decaying spectrum.
Matrix synthetic_psd(Index n, std::uint64_t seed);

std::vector<BenchRow> bench_nystrom(const BenchOptions& opts);
std::vector<BenchRow> bench_nystrom(const Matrix& A, const BenchOptions& opts);

std::string bench_csv(const std::vector<BenchRow>& rows);

}  // namespace kngd
