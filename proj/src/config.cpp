#include "kngd/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace kngd {

namespace {

KeyValues flatten(const boost::property_tree::ptree& tree) {
  KeyValues kv;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      kv[section] = body.data();
      continue;
    }
    for (const auto& [key, value] : body) kv[section + "." + key] = value.data();
  }
  return kv;
}

double to_double(const std::string& key, const std::string& s) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size()) {
    throw std::invalid_argument("config: '" + key + "' expects a number, got '" + s + "'");
  }
  return v;
}

std::int64_t to_int(const std::string& key, const std::string& s) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size()) {
    throw std::invalid_argument("config: '" + key + "' expects an integer, got '" + s + "'");
  }
  return v;
}

bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw std::invalid_argument("config: '" + key + "' expects a boolean, got '" + s + "'");
}

std::vector<int> to_widths(const std::string& key, const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(static_cast<int>(to_int(key, item.substr(b, e - b + 1))));
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

KeyValues parse_ini(const std::string& text) {
  std::istringstream in(text);
  boost::property_tree::ptree tree;
  boost::property_tree::ini_parser::read_ini(in, tree);
  return flatten(tree);
}

KeyValues read_ini(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_ini(ss.str());
}

std::string format_ini(const KeyValues& kv) {
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;
  for (const auto& [key, value] : kv) {
    const auto dot = key.find('.');
    if (dot == std::string::npos) {
      sections[""].emplace_back(key, value);
    } else {
      sections[key.substr(0, dot)].emplace_back(key.substr(dot + 1), value);
    }
  }
  std::ostringstream os;
  for (const auto& [section, entries] : sections) {
    if (!section.empty()) os << "[" << section << "]\n";
    for (const auto& [k, v] : entries) os << k << " = " << v << "\n";
    os << "\n";
  }
  return os.str();
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "engd_w") return OptimizerKind::engd_w;
  if (name == "spring") return OptimizerKind::spring;
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw std::invalid_argument("unknown optimizer '" + name + "'");
}

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::engd_w: return "engd_w";
    case OptimizerKind::spring: return "spring";
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::adam: return "adam";
  }
  return "?";
}

SketchVariant parse_sketch_variant(const std::string& name) {
  if (name == "gpu_efficient") return SketchVariant::gpu_efficient;
  if (name == "stable_oracle") return SketchVariant::stable_oracle;
  throw std::invalid_argument("unknown rand.variant '" + name + "'");
}

std::string to_string(SketchVariant v) {
  return v == SketchVariant::gpu_efficient ? "gpu_efficient" : "stable_oracle";
}

RunConfig RunConfig::from_map(const KeyValues& kv) {
  RunConfig c;
  bool constraint_given = false;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"problem.name", [&](auto&, auto& v) { c.problem = v; }},
      {"problem.n_interior", [&](auto& k, auto& v) { c.n_interior = to_int(k, v); }},
      {"problem.n_boundary", [&](auto& k, auto& v) { c.n_boundary = to_int(k, v); }},
      {"problem.eval_points", [&](auto& k, auto& v) { c.eval_points = to_int(k, v); }},
      {"problem.interior_weight", [&](auto& k, auto& v) { c.interior_weight = to_double(k, v); }},
      {"problem.boundary_weight", [&](auto& k, auto& v) { c.boundary_weight = to_double(k, v); }},
      {"model.hidden", [&](auto& k, auto& v) { c.hidden = to_widths(k, v); }},
      {"optimizer.name", [&](auto&, auto& v) { c.optimizer = parse_optimizer(v); }},
      {"optimizer.damping", [&](auto& k, auto& v) { c.damping = to_double(k, v); }},
      {"optimizer.momentum", [&](auto& k, auto& v) { c.momentum = to_double(k, v); }},
      {"optimizer.lr",
       [&](auto& k, auto& v) {
         if (v == "line_search") {
           c.line_search = true;
         } else {
           c.line_search = false;
           c.lr = to_double(k, v);
         }
       }},
      {"optimizer.norm_constraint",
       [&](auto& k, auto& v) {
         c.norm_constraint = to_double(k, v);
         constraint_given = true;
       }},
      {"optimizer.store_uncorrected", [&](auto& k, auto& v) { c.store_uncorrected = to_bool(k, v); }},
      {"rand.enabled", [&](auto& k, auto& v) { c.rand_enabled = to_bool(k, v); }},
      {"rand.sketch_frac", [&](auto& k, auto& v) { c.sketch_frac = to_double(k, v); }},
      {"rand.variant", [&](auto&, auto& v) { c.rand_variant = parse_sketch_variant(v); }},
      {"budget.max_steps", [&](auto& k, auto& v) { c.max_steps = to_int(k, v); }},
      {"budget.max_seconds", [&](auto& k, auto& v) { c.max_seconds = to_double(k, v); }},
      {"budget.target_l2", [&](auto& k, auto& v) { c.target_l2 = to_double(k, v); }},
      {"seeds.params", [&](auto& k, auto& v) { c.seed_params = static_cast<std::uint64_t>(to_int(k, v)); }},
      {"seeds.batches", [&](auto& k, auto& v) { c.seed_batches = static_cast<std::uint64_t>(to_int(k, v)); }},
      {"seeds.sketch", [&](auto& k, auto& v) { c.seed_sketch = static_cast<std::uint64_t>(to_int(k, v)); }},
      {"seeds.eval", [&](auto& k, auto& v) { c.seed_eval = static_cast<std::uint64_t>(to_int(k, v)); }},
      {"diag.deff_every", [&](auto& k, auto& v) { c.deff_every = to_int(k, v); }},
      {"diag.metrics_every", [&](auto& k, auto& v) { c.metrics_every = to_int(k, v); }},
  };
  for (const auto& [key, value] : kv) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw std::invalid_argument("config: unknown key '" + key + "'");
    it->second(key, value);
  }
  if (!constraint_given && c.optimizer == OptimizerKind::spring) c.norm_constraint = 1e-3;
  c.validate();
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) { return from_map(read_ini(path)); }

KeyValues RunConfig::to_map() const {
  KeyValues kv;
  kv["problem.name"] = problem;
  kv["problem.n_interior"] = std::to_string(n_interior);
  kv["problem.n_boundary"] = std::to_string(n_boundary);
  kv["problem.eval_points"] = std::to_string(eval_points);
  kv["problem.interior_weight"] = fmt(interior_weight);
  kv["problem.boundary_weight"] = fmt(boundary_weight);
  std::string h;
  for (std::size_t i = 0; i < hidden.size(); ++i) h += (i ? "," : "") + std::to_string(hidden[i]);
  kv["model.hidden"] = h;
  kv["optimizer.name"] = to_string(optimizer);
  kv["optimizer.damping"] = fmt(damping);
  kv["optimizer.momentum"] = fmt(momentum);
  kv["optimizer.lr"] = line_search ? "line_search" : fmt(lr);
  kv["optimizer.norm_constraint"] = fmt(norm_constraint);
  kv["optimizer.store_uncorrected"] = store_uncorrected ? "true" : "false";
  kv["rand.enabled"] = rand_enabled ? "true" : "false";
  kv["rand.sketch_frac"] = fmt(sketch_frac);
  kv["rand.variant"] = to_string(rand_variant);
  kv["budget.max_steps"] = std::to_string(max_steps);
  kv["budget.max_seconds"] = fmt(max_seconds);
  kv["budget.target_l2"] = fmt(target_l2);
  kv["seeds.params"] = std::to_string(seed_params);
  kv["seeds.batches"] = std::to_string(seed_batches);
  kv["seeds.sketch"] = std::to_string(seed_sketch);
  kv["seeds.eval"] = std::to_string(seed_eval);
  kv["diag.deff_every"] = std::to_string(deff_every);
  kv["diag.metrics_every"] = std::to_string(metrics_every);
  return kv;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
  if (problem.empty()) fail("problem.name is required");
  if (n_interior < 1 || n_boundary < 1) fail("batch sizes must be positive");
  if (eval_points < 1) fail("problem.eval_points must be positive");
  if (interior_weight <= 0 || boundary_weight <= 0) fail("loss weights must be positive");
  for (int w : hidden) {
    if (w <= 0) fail("hidden widths must be positive");
  }
  if (max_steps < 0 && max_seconds <= 0) fail("set budget.max_steps and/or budget.max_seconds");
  const bool natural = optimizer == OptimizerKind::engd_w || optimizer == OptimizerKind::spring;
  if (natural && !(damping > 0)) fail("optimizer.damping must be positive");
  if (optimizer == OptimizerKind::spring && !(momentum >= 0 && momentum < 1)) {
    fail("optimizer.momentum must lie in [0, 1) for spring");
  }
  if (optimizer == OptimizerKind::sgd && !(momentum >= 0 && momentum < 1)) {
    fail("optimizer.momentum must lie in [0, 1) for sgd");
  }
  if (!natural && line_search) fail("sgd and adam need a numeric optimizer.lr");
  if (!line_search && !(lr > 0)) fail("optimizer.lr must be positive");
  if (rand_enabled && !natural) fail("randomized solves apply to engd_w and spring only");
  if (rand_enabled && !(sketch_frac > 0 && sketch_frac <= 1)) fail("rand.sketch_frac must lie in (0, 1]");
  if (target_l2 < 0) fail("budget.target_l2 must be non-negative");
  if (deff_every < 0 || metrics_every < 0) fail("diagnostic cadences must be non-negative");
}

std::vector<int> RunConfig::widths(int input_dim) const {
  std::vector<int> w{input_dim};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(1);
  return w;
}

Index RunConfig::sketch_size() const {
  const Index n = n_interior + n_boundary;
  const auto l = static_cast<Index>(std::llround(sketch_frac * static_cast<double>(n)));
  return std::clamp<Index>(l, 1, n);
}

}  // namespace kngd
