#pragma once

// Hyperparameter search: grid, median pruning, successive halving and
// Hyperband. Budgets are integer training epochs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "dmf/error.hpp"
#include "dmf/rng.hpp"

namespace dmf {

struct SearchParam {
  std::string name;
  std::vector<double> values;
};

struct SearchSpace {
  std::vector<SearchParam> params;

  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& p : params) n *= p.values.size();
    return n;
  }

  void validate() const {
    if (params.empty()) throw ConfigError("search space has no parameters");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].values.empty()) throw ConfigError("parameter '" + params[i].name + "' has an empty grid");
      for (std::size_t j = 0; j < i; ++j) {
        if (params[j].name == params[i].name) throw ConfigError("duplicate parameter '" + params[i].name + "'");
      }
    }
  }
};

struct Configuration {
  std::size_t index = 0;  // position in grid order
  std::vector<std::string> names;
  std::vector<double> values;

  double get(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return values[i];
    }
    throw ConfigError("configuration has no parameter '" + name + "'");
  }

  double get(const std::string& name, double fallback) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return values[i];
    }
    return fallback;
  }
};

// Cartesian product, last parameter varying fastest.
inline std::vector<Configuration> grid_configs(const SearchSpace& space) {
  space.validate();
  const std::size_t total = space.size();
  std::vector<Configuration> out;
  out.reserve(total);
  std::vector<std::string> names;
  for (const auto& p : space.params) names.push_back(p.name);
  for (std::size_t idx = 0; idx < total; ++idx) {
    Configuration c{idx, names, std::vector<double>(space.params.size())};
    std::size_t rem = idx;
    for (std::size_t k = space.params.size(); k-- > 0;) {
      const auto& vals = space.params[k].values;
      c.values[k] = vals[rem % vals.size()];
      rem /= vals.size();
    }
    out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------

enum class TrialState { Running, Pruned, Complete, Failed };

inline std::string to_string(TrialState s) {
  switch (s) {
    case TrialState::Running: return "running";
    case TrialState::Pruned: return "pruned";
    case TrialState::Complete: return "complete";
    case TrialState::Failed: return "failed";
  }
  return "?";
}

struct Report {
  int step;
  double value;
};

struct Trial {
  std::size_t id = 0;
  Configuration config;
  std::vector<Report> reports;
  TrialState state = TrialState::Running;
  long long budget = 0;  // epochs consumed

  bool terminal() const { return state != TrialState::Running; }

  void report(int step, double value) {
    if (terminal()) throw ConfigError("trial " + std::to_string(id) + " is finished and cannot report");
    if (!reports.empty() && step <= reports.back().step) {
      throw ConfigError("trial " + std::to_string(id) + ": report steps must increase");
    }
    reports.push_back({step, value});
  }

  const Report* at(int step) const {
    for (const auto& r : reports) {
      if (r.step == step) return &r;
    }
    return nullptr;
  }

  double last_value() const {
    return reports.empty() ? std::numeric_limits<double>::infinity() : reports.back().value;
  }
};

inline constexpr std::size_t kMedianWarmup = 5;

// True iff at least `warmup` peers reported at `step` and the trial's loss
// there is strictly above their median. Lower loss is kept.
inline bool median_should_prune(const Trial& trial, const std::vector<Trial>& peers, int step,
                                std::size_t warmup = kMedianWarmup) {
  const Report* own = trial.at(step);
  if (!own) throw ConfigError("trial " + std::to_string(trial.id) + " has no report at step " + std::to_string(step));
  std::vector<double> values;
  for (const auto& p : peers) {
    if (p.id == trial.id) continue;
    if (const Report* r = p.at(step)) values.push_back(r->value);
  }
  if (values.size() < warmup || values.empty()) return false;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  const double median = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  return own->value > median;
}

// ---------------------------------------------------------------------------

struct Rung {
  std::size_t population;
  long long budget;  // per configuration
};

inline long long checked_pow(long long base, int exp) {
  long long v = 1;
  for (int i = 0; i < exp; ++i) {
    if (v > std::numeric_limits<long long>::max() / base) throw ConfigError("budget overflow");
    v *= base;
  }
  return v;
}

// Rung i holds ⌊n/η^i⌋ configurations (at least 1) at budget r·η^i. With
// rungs = 0 the schedule runs until one configuration remains.
inline std::vector<Rung> sha_schedule(std::size_t n, int eta, long long r, int rungs = 0) {
  if (eta < 2) throw ConfigError("eta must be >= 2");
  if (n < 1) throw ConfigError("successive halving needs at least one configuration");
  if (r < 1) throw ConfigError("minimum budget must be >= 1");
  std::vector<Rung> out;
  for (int i = 0;; ++i) {
    const long long scale = checked_pow(eta, i);
    const auto pop = std::max<std::size_t>(1, n / static_cast<std::size_t>(scale));
    out.push_back({pop, r * scale});
    if (rungs > 0 ? i + 1 >= rungs : pop == 1) break;
  }
  return out;
}

inline long long schedule_budget(const std::vector<Rung>& rungs) {
  long long total = 0;
  for (const auto& g : rungs) total += static_cast<long long>(g.population) * g.budget;
  return total;
}

struct Bracket {
  int s;
  std::size_t n;  // configurations sampled
  long long r;    // initial per-configuration budget
  std::vector<Rung> rungs;
};

struct HyperbandPlan {
  long long max_budget;
  int eta;
  std::vector<Bracket> brackets;

  long long total_budget() const {
    long long t = 0;
    for (const auto& b : brackets) t += schedule_budget(b.rungs);
    return t;
  }
};

// ⌊log_η R⌋ computed in integers.
inline int integer_log(long long R, int eta) {
  int s = 0;
  for (long long v = eta; v <= R; v *= eta) ++s;
  return s;
}

// s_max = ⌊log_η R⌋; bracket s samples n_s = ⌈(s_max+1)/(s+1)·η^s⌉
// configurations at r_s = ⌊R/η^s⌋ and runs s+1 rungs. With a finite
// space, n_s is capped at its size, and a bracket left with one
// configuration but several rungs is dropped since it cannot halve.
inline HyperbandPlan hyperband_plan(long long R, int eta, std::size_t space_size = 0) {
  if (R < 1) throw ConfigError("max budget must be >= 1");
  if (eta < 2) throw ConfigError("eta must be >= 2");
  const int s_max = integer_log(R, eta);
  HyperbandPlan plan{R, eta, {}};
  for (int s = s_max; s >= 0; --s) {
    const long long p = checked_pow(eta, s);
    // ceil((s_max+1) * η^s / (s+1)) in integers
    auto n = static_cast<std::size_t>(((s_max + 1) * p + s) / (s + 1));
    if (space_size > 0) n = std::min(n, space_size);
    if (n == 1 && s > 0) continue;
    const long long r = std::max<long long>(1, R / p);
    plan.brackets.push_back({s, n, r, sha_schedule(n, eta, r, s + 1)});
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Objectives: a session trains one configuration and reports its loss
// (lower is better) after each advance.

class ObjectiveSession {
 public:
  virtual ~ObjectiveSession() = default;
  // Trains `epochs` more and returns the objective at the new total.
  virtual double advance(int epochs) = 0;
};

using ObjectiveFactory = std::function<std::unique_ptr<ObjectiveSession>(const Configuration&)>;

enum class Strategy { Grid, Median, Sha, Hyperband };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Grid: return "grid";
    case Strategy::Median: return "median";
    case Strategy::Sha: return "sha";
    case Strategy::Hyperband: return "hyperband";
  }
  return "?";
}

inline Strategy strategy_from_string(const std::string& s) {
  for (Strategy v : {Strategy::Grid, Strategy::Median, Strategy::Sha, Strategy::Hyperband}) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown strategy '" + s + "' (expected grid|median|sha|hyperband)");
}

struct StudyLimits {
  long long max_budget = 81;  // R
  int eta = 3;
  std::size_t warmup = kMedianWarmup;
  int report_every = 0;  // median pruning step; 0 means R / η²
  std::uint64_t seed = 0;

  void validate() const {
    if (max_budget < 1) throw ConfigError("max_budget must be >= 1");
    if (eta < 2) throw ConfigError("eta must be >= 2");
    if (report_every < 0) throw ConfigError("report_every must be >= 0");
  }

  int median_step() const {
    if (report_every > 0) return report_every;
    return static_cast<int>(std::max<long long>(1, max_budget / (static_cast<long long>(eta) * eta)));
  }
};

struct StudyResult {
  std::vector<Trial> trials;
  std::size_t best_trial = 0;
  long long total_budget = 0;
  long long planned_budget = 0;  // closed-form schedule sum

  const Trial& best() const { return trials.at(best_trial); }
};

namespace detail {

// Fresh session trained to `budget`; numeric failures yield +inf, other
// errors propagate.
inline double evaluate_fresh(const ObjectiveFactory& factory, Trial& trial, long long budget) {
  trial.budget += budget;
  try {
    auto session = factory(trial.config);
    const double v = session->advance(static_cast<int>(budget));
    if (!std::isfinite(v)) throw NumericError("objective is not finite");
    trial.report(static_cast<int>(budget), v);
    return v;
  } catch (const NumericError&) {
    trial.state = TrialState::Failed;
    return std::numeric_limits<double>::infinity();
  }
}

inline double rank_value(const Trial& t) {
  return t.state == TrialState::Failed ? std::numeric_limits<double>::infinity() : t.last_value();
}

// Runs one successive-halving bracket over `trials[ids]`; survivors are the
// lowest losses, ties to the earlier trial.
inline long long run_sha(const ObjectiveFactory& factory, std::vector<Trial>& trials, std::vector<std::size_t> ids,
                         const std::vector<Rung>& rungs) {
  long long spent = 0;
  for (std::size_t i = 0; i < rungs.size(); ++i) {
    ids.resize(std::min(ids.size(), rungs[i].population));
    for (std::size_t id : ids) {
      if (trials[id].state == TrialState::Failed) {
        trials[id].budget += rungs[i].budget;
      } else {
        detail::evaluate_fresh(factory, trials[id], rungs[i].budget);
      }
      spent += rungs[i].budget;
    }
    std::stable_sort(ids.begin(), ids.end(),
                     [&](std::size_t a, std::size_t b) { return rank_value(trials[a]) < rank_value(trials[b]); });
    const bool last = i + 1 == rungs.size();
    const std::size_t keep = last ? ids.size() : rungs[i + 1].population;
    for (std::size_t j = 0; j < ids.size(); ++j) {
      Trial& t = trials[ids[j]];
      if (t.state == TrialState::Failed) continue;
      if (last) t.state = TrialState::Complete;
      else if (j >= keep) t.state = TrialState::Pruned;
    }
  }
  return spent;
}

}  // namespace detail

inline StudyResult run_study(const ObjectiveFactory& factory, Strategy strategy, const SearchSpace& space,
                             const StudyLimits& limits) {
  limits.validate();
  const std::vector<Configuration> configs = grid_configs(space);
  StudyResult result;
  const long long R = limits.max_budget;

  auto new_trial = [&](const Configuration& c) {
    result.trials.push_back(Trial{result.trials.size(), c, {}, TrialState::Running, 0});
    return result.trials.size() - 1;
  };

  switch (strategy) {
    case Strategy::Grid: {
      for (const auto& c : configs) {
        const std::size_t id = new_trial(c);
        detail::evaluate_fresh(factory, result.trials[id], R);
        if (result.trials[id].state == TrialState::Running) result.trials[id].state = TrialState::Complete;
        result.total_budget += R;
      }
      result.planned_budget = static_cast<long long>(configs.size()) * R;
      break;
    }
    case Strategy::Median: {
      const int step = limits.median_step();
      for (const auto& c : configs) {
        const std::size_t id = new_trial(c);
        Trial& t = result.trials[id];
        try {
          auto session = factory(c);
          int done = 0;
          while (done < R) {
            const int inc = static_cast<int>(std::min<long long>(step, R - done));
            const double v = session->advance(inc);
            done += inc;
            t.budget += inc;
            result.total_budget += inc;
            if (!std::isfinite(v)) throw NumericError("objective is not finite");
            t.report(done, v);
            if (done < R && median_should_prune(t, result.trials, done, limits.warmup)) {
              t.state = TrialState::Pruned;
              break;
            }
          }
          if (t.state == TrialState::Running) t.state = TrialState::Complete;
        } catch (const NumericError&) {
          t.state = TrialState::Failed;
        }
      }
      result.planned_budget = result.total_budget;  // data dependent
      break;
    }
    case Strategy::Sha: {
      // final rung at full budget R; a small R cuts the halving short
      const auto probe = sha_schedule(configs.size(), limits.eta, 1);
      const int k = std::min(static_cast<int>(probe.size()), integer_log(R, limits.eta) + 1);
      const long long r = std::max<long long>(1, R / checked_pow(limits.eta, k - 1));
      const auto rungs = sha_schedule(configs.size(), limits.eta, r, k);
      std::vector<std::size_t> ids;
      for (const auto& c : configs) ids.push_back(new_trial(c));
      result.total_budget = detail::run_sha(factory, result.trials, ids, rungs);
      result.planned_budget = schedule_budget(rungs);
      break;
    }
    case Strategy::Hyperband: {
      const HyperbandPlan plan = hyperband_plan(R, limits.eta, configs.size());
      Rng rng(limits.seed);
      for (const auto& b : plan.brackets) {
        // sample without replacement within the bracket
        auto order = rng.permutation(configs.size());
        std::vector<std::size_t> ids;
        for (std::size_t i = 0; i < b.n; ++i) ids.push_back(new_trial(configs[order[i]]));
        result.total_budget += detail::run_sha(factory, result.trials, ids, b.rungs);
      }
      result.planned_budget = plan.total_budget();
      break;
    }
  }

  // best observed objective; ties to the earlier trial
  double best = std::numeric_limits<double>::infinity();
  bool found = false;
  for (const auto& t : result.trials) {
    for (const auto& r : t.reports) {
      if (!found || r.value < best) {
        best = r.value;
        result.best_trial = t.id;
        found = true;
      }
    }
  }
  if (!found) throw NumericError("every trial failed");
  return result;
}

// One row per trial: trial_id, parameter columns, value, budget, state.
inline void write_study_csv(std::ostream& os, const SearchSpace& space, const StudyResult& result,
                            const std::function<std::string(double)>& fmt) {
  os << "trial_id";
  for (const auto& p : space.params) os << ',' << p.name;
  os << ",value,budget,state\n";
  for (const auto& t : result.trials) {
    os << t.id;
    for (double v : t.config.values) os << ',' << fmt(v);
    os << ',' << (t.reports.empty() ? std::string("nan") : fmt(t.last_value())) << ',' << t.budget << ','
       << to_string(t.state) << '\n';
  }
}

}  // namespace dmf
