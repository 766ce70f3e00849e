#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "kngd/harness.hpp"

namespace kngd {

namespace {

constexpr const char* kParamPrefix = "param.";

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_number(const std::string& key, const std::string& s) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size()) {
    throw std::invalid_argument("search space: '" + key + "' expects a number, got '" + s + "'");
  }
  return v;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

Distribution parse_distribution(const std::string& s) {
  if (s == "log_uniform") return Distribution::log_uniform;
  if (s == "uniform") return Distribution::uniform;
  if (s == "choice") return Distribution::choice;
  throw std::invalid_argument("search space: unknown dist '" + s + "'");
}

bool better(const TrialResult& a, const TrialResult& b) { return a.final_l2 < b.final_l2; }

bool rankable(const TrialResult& t) {
  return t.status == RunStatus::completed && std::isfinite(t.final_l2);
}

}  // namespace

SearchSpace SearchSpace::from_map(const KeyValues& kv) {
  SearchSpace space;
  std::map<std::string, std::map<std::string, std::string>> fields;
  const std::string prefix = kParamPrefix;
  for (const auto& [key, value] : kv) {
    if (key == "search.stage1_trials") {
      space.stage1_trials = static_cast<int>(parse_number(key, value));
    } else if (key == "search.stage2_trials") {
      space.stage2_trials = static_cast<int>(parse_number(key, value));
    } else if (key.rfind(prefix, 0) == 0) {
      const auto dot = key.rfind('.');
      if (dot <= prefix.size()) throw std::invalid_argument("search space: malformed key '" + key + "'");
      fields[key.substr(prefix.size(), dot - prefix.size())][key.substr(dot + 1)] = value;
    } else {
      throw std::invalid_argument("search space: unknown key '" + key + "'");
    }
  }
  for (const auto& [name, f] : fields) {
    ParamRange p;
    p.key = name;
    for (const auto& [field, value] : f) {
      if (field == "dist") {
        p.dist = parse_distribution(value);
      } else if (field == "lo") {
        p.lo = parse_number(name + ".lo", value);
      } else if (field == "hi") {
        p.hi = parse_number(name + ".hi", value);
      } else if (field == "values") {
        p.values = split_list(value);
      } else {
        throw std::invalid_argument("search space: unknown field '" + field + "' for " + name);
      }
    }
    if (!f.count("dist")) {
      throw std::invalid_argument("search space: '" + name + "' needs a dist");
    }
    space.params.push_back(std::move(p));
  }
  space.validate();
  return space;
}

SearchSpace SearchSpace::from_file(const std::string& path) { return from_map(read_ini(path)); }

void SearchSpace::validate() const {
  if (stage1_trials < 1 || stage2_trials < 0) {
    throw std::invalid_argument("search space: need stage1_trials >= 1 and stage2_trials >= 0");
  }
  std::set<std::string> seen;
  for (const auto& p : params) {
    if (!seen.insert(p.key).second) throw std::invalid_argument("search space: duplicate " + p.key);
    if (p.dist == Distribution::choice) {
      if (p.values.empty()) throw std::invalid_argument("search space: empty choice for " + p.key);
      continue;
    }
    if (!(p.lo < p.hi)) throw std::invalid_argument("search space: need lo < hi for " + p.key);
    if (p.dist == Distribution::log_uniform && !(p.lo > 0)) {
      throw std::invalid_argument("search space: log-uniform needs lo > 0 for " + p.key);
    }
  }
}

SearchSpace SearchSpace::narrowed(const KeyValues& best) const {
  SearchSpace out = *this;
  for (auto& p : out.params) {
    const auto it = best.find(p.key);
    if (it == best.end() || p.dist == Distribution::choice) continue;
    const double c = parse_number(p.key, it->second);
    if (p.dist == Distribution::log_uniform) {
      p.lo = std::max(p.lo, c / 10.0);
      p.hi = std::min(p.hi, c * 10.0);
    } else {
      const double half = 0.1 * (p.hi - p.lo);
      p.lo = std::max(p.lo, c - half);
      p.hi = std::min(p.hi, c + half);
    }
  }
  return out;
}

KeyValues SearchSpace::sample(std::mt19937_64& rng) const {
  KeyValues out;
  for (const auto& p : params) {
    switch (p.dist) {
      case Distribution::log_uniform: {
        std::uniform_real_distribution<double> u(std::log(p.lo), std::log(p.hi));
        out[p.key] = fmt(std::clamp(std::exp(u(rng)), p.lo, p.hi));
        break;
      }
      case Distribution::uniform: {
        std::uniform_real_distribution<double> u(p.lo, p.hi);
        out[p.key] = fmt(u(rng));
        break;
      }
      case Distribution::choice: {
        std::uniform_int_distribution<std::size_t> u(0, p.values.size() - 1);
        out[p.key] = p.values[u(rng)];
        break;
      }
    }
  }
  return out;
}

TrialRunner default_trial_runner(const std::string& out_dir) {
  return [out_dir](const KeyValues& config, int trial) {
    TrialResult res;
    res.trial = trial;
    std::string dir;
    if (!out_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "trial_%04d", trial);
      dir = (std::filesystem::path(out_dir) / name).string();
    }
    try {
      const RunSummary s = run_experiment(RunConfig::from_map(config), dir);
      res.status = s.status;
      res.final_l2 = s.final_l2;
      res.best_l2 = s.best_l2;
      res.steps = s.total_steps;
      res.seconds = s.total_seconds;
    } catch (const std::exception&) {
      // a sampled configuration the solver cannot handle counts as a failed trial
      res.status = RunStatus::diverged;
      res.final_l2 = res.best_l2 = std::numeric_limits<double>::quiet_NaN();
    }
    return res;
  };
}

SearchResult random_search(const SearchSpace& space, const KeyValues& base, std::mt19937_64& rng,
                           const TrialRunner& runner) {
  space.validate();
  SearchResult result;
  int counter = 0;
  auto run_stage = [&](const SearchSpace& s, int stage, int trials) {
    for (int i = 0; i < trials; ++i) {
      KeyValues overrides = s.sample(rng);
      KeyValues merged = base;
      for (const auto& [k, v] : overrides) merged[k] = v;
      TrialResult t = runner(merged, counter);
      t.trial = counter++;
      t.stage = stage;
      t.overrides = std::move(overrides);
      result.trials.push_back(std::move(t));
    }
  };

  run_stage(space, 1, space.stage1_trials);
  const TrialResult* best = nullptr;
  for (const auto& t : result.trials) {
    if (rankable(t) && (!best || better(t, *best))) best = &t;
  }
  const SearchSpace refined = best ? space.narrowed(best->overrides) : space;
  run_stage(refined, 2, space.stage2_trials);

  for (const auto& t : result.trials) {
    if (rankable(t)) result.ranking.push_back(t);
  }
  std::stable_sort(result.ranking.begin(), result.ranking.end(), better);
  result.status = result.ranking.empty() ? "all_diverged" : "ok";
  return result;
}

std::string trials_csv(const SearchResult& result, const SearchSpace& space) {
  std::ostringstream os;
  os << "rank,trial,stage,status,final_l2,best_l2,steps,seconds";
  for (const auto& p : space.params) os << "," << p.key;
  os << "\n";
  auto row = [&](const TrialResult& t, const std::string& rank) {
    os << rank << "," << t.trial << "," << t.stage << "," << to_string(t.status) << ","
       << fmt(t.final_l2) << "," << fmt(t.best_l2) << "," << t.steps << "," << fmt(t.seconds);
    for (const auto& p : space.params) {
      const auto it = t.overrides.find(p.key);
      os << "," << (it == t.overrides.end() ? "" : it->second);
    }
    os << "\n";
  };
  for (std::size_t i = 0; i < result.ranking.size(); ++i) row(result.ranking[i], std::to_string(i + 1));
  // failed trials rank last
  for (const auto& t : result.trials) {
    if (!rankable(t)) row(t, "");
  }
  return os.str();
}

}  // namespace kngd
