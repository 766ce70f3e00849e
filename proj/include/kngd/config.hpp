#pragma once

// Run configuration, read from INI-style files:
//
//   [problem]    name, n_interior, n_boundary, eval_points,
//                interior_weight, boundary_weight
//   [model]      hidden            (comma separated hidden widths)
//   [optimizer]  name, damping, momentum, lr, norm_constraint,
//                store_uncorrected
//   [rand]       enabled, sketch_frac, variant
//   [budget]     max_steps, max_seconds, target_l2
//   [seeds]      params, batches, sketch, eval
//   [diag]       deff_every, metrics_every
//
// Keys are addressed as "section.key" everywhere (overrides, tuner spaces).

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kngd/types.hpp"

namespace kngd {

using KeyValues = std::map<std::string, std::string>;

KeyValues read_ini(const std::string& path);
KeyValues parse_ini(const std::string& text);
std::string format_ini(const KeyValues& kv);

enum class OptimizerKind { engd_w, spring, sgd, adam };
enum class SketchVariant { gpu_efficient, stable_oracle };

OptimizerKind parse_optimizer(const std::string& name);
std::string to_string(OptimizerKind kind);
SketchVariant parse_sketch_variant(const std::string& name);
std::string to_string(SketchVariant v);

struct RunConfig {
  std::string problem = "poisson2d_cos";
  std::vector<int> hidden = {32, 32};
  Index n_interior = 512;
  Index n_boundary = 128;
  Index eval_points = 30000;
  double interior_weight = 1.0;
  double boundary_weight = 1.0;

  OptimizerKind optimizer = OptimizerKind::engd_w;
  double damping = 1e-8;
  double momentum = 0.0;
  bool line_search = true;
  double lr = 0.0;
  // <= 0 disables the cap; SPRING defaults to 1e-3 when the key is absent
  double norm_constraint = 0.0;
  bool store_uncorrected = false;

  bool rand_enabled = false;
  double sketch_frac = 0.10;
  SketchVariant rand_variant = SketchVariant::gpu_efficient;

  // < 0: unlimited (then max_seconds must be set)
  std::int64_t max_steps = -1;
  // <= 0: unlimited
  double max_seconds = 0.0;
  // > 0: stop once the evaluation L2 error reaches this value
  double target_l2 = 0.0;

  std::uint64_t seed_params = 0;
  std::uint64_t seed_batches = 1;
  std::uint64_t seed_sketch = 2;
  std::uint64_t seed_eval = 3;

  std::int64_t deff_every = 0;
  // 0: every step up to 1000, then every 10th
  std::int64_t metrics_every = 0;

  static RunConfig from_map(const KeyValues& kv);
  static RunConfig from_file(const std::string& path);
  KeyValues to_map() const;
  void validate() const;

  std::vector<int> widths(int input_dim) const;
  Index sketch_size() const;
};

}  // namespace kngd
