#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dmf/dmf.hpp"

using namespace dmf;

namespace {

SearchSpace desk_space() {
  return SearchSpace{{{"r1", {1e-4, 1e-5, 1e-6}}, {"r2", {1e-4, 1e-5, 1e-6}}, {"r3", {1e-2, 1e-3, 1e-4}}}};
}

// Loss grows with the configuration index and shrinks with budget, so
// every rung ranks configurations the same way.
class MonotoneSession : public ObjectiveSession {
 public:
  MonotoneSession(std::size_t index, bool fail) : index_(index), fail_(fail) {}
  double advance(int epochs) override {
    if (fail_) throw NumericError("diverged");
    done_ += epochs;
    return 1.0 + 0.01 * static_cast<double>(index_) + 1.0 / (1.0 + done_);
  }

 private:
  std::size_t index_;
  bool fail_;
  int done_ = 0;
};

ObjectiveFactory monotone(std::size_t failing = static_cast<std::size_t>(-1), std::size_t* sessions = nullptr) {
  return [=](const Configuration& c) -> std::unique_ptr<ObjectiveSession> {
    if (sessions) ++*sessions;
    return std::make_unique<MonotoneSession>(c.index, c.index == failing);
  };
}

// Σ over rungs of ⌊n/η^i⌋·r·η^i, evaluated directly.
long long bracket_budget(long long n, long long r, int eta, int rungs) {
  long long total = 0, p = 1;
  for (int i = 0; i < rungs; ++i, p *= eta) total += std::max(1LL, n / p) * r * p;
  return total;
}

Trial trial_with(std::size_t id, int step, double value) {
  Trial t;
  t.id = id;
  t.report(step, value);
  return t;
}

}  // namespace

TEST(GridConfigs, CartesianProduct) {
  const auto cs = grid_configs(desk_space());
  ASSERT_EQ(cs.size(), 27u);
  EXPECT_EQ(cs[0].values, (std::vector<double>{1e-4, 1e-4, 1e-2}));
  EXPECT_EQ(cs[1].values, (std::vector<double>{1e-4, 1e-4, 1e-3}));
  EXPECT_EQ(cs[3].values, (std::vector<double>{1e-4, 1e-5, 1e-2}));
  EXPECT_EQ(cs[26].values, (std::vector<double>{1e-6, 1e-6, 1e-4}));
  for (std::size_t i = 0; i < cs.size(); ++i) EXPECT_EQ(cs[i].index, i);
  EXPECT_EQ(cs[5].get("r2"), 1e-5);
  EXPECT_THROW(cs[5].get("lambda1"), ConfigError);
  EXPECT_EQ(cs[5].get("lambda1", 7.0), 7.0);
}

TEST(GridConfigs, SingleAndInvalid) {
  EXPECT_EQ(grid_configs(SearchSpace{{{"a", {0.5}}}}).size(), 1u);
  EXPECT_THROW(grid_configs(SearchSpace{{{"a", {}}}}), ConfigError);
  EXPECT_THROW(grid_configs(SearchSpace{}), ConfigError);
  EXPECT_THROW(grid_configs(SearchSpace{{{"a", {1}}, {"a", {2}}}}), ConfigError);
}

TEST(Trial, ReportOrdering) {
  Trial t;
  t.report(3, 1.0);
  EXPECT_THROW(t.report(3, 0.5), ConfigError);
  EXPECT_THROW(t.report(2, 0.5), ConfigError);
  t.report(9, 0.5);
  EXPECT_EQ(t.last_value(), 0.5);
  t.state = TrialState::Pruned;
  EXPECT_THROW(t.report(27, 0.1), ConfigError);
}

TEST(MedianPruning, Examples) {
  const std::vector<Trial> peers{trial_with(0, 5, 1.0), trial_with(1, 5, 2.0), trial_with(2, 5, 3.0)};
  EXPECT_TRUE(median_should_prune(trial_with(9, 5, 2.5), peers, 5, 3));
  EXPECT_FALSE(median_should_prune(trial_with(9, 5, 1.5), peers, 5, 3));
  EXPECT_FALSE(median_should_prune(trial_with(9, 5, 2.0), peers, 5, 3));
  // default warm-up needs five peers
  EXPECT_FALSE(median_should_prune(trial_with(9, 5, 2.5), peers, 5));
  std::vector<Trial> five = peers;
  five.push_back(trial_with(3, 5, 4.0));
  five.push_back(trial_with(4, 5, 5.0));
  EXPECT_TRUE(median_should_prune(trial_with(9, 5, 3.5), five, 5));
  EXPECT_FALSE(median_should_prune(trial_with(9, 5, 2.5), five, 5));
  EXPECT_THROW(median_should_prune(trial_with(9, 4, 2.5), peers, 5, 3), ConfigError);
}

TEST(MedianPruning, IgnoresOtherStepsAndSelf) {
  std::vector<Trial> peers{trial_with(0, 5, 1.0), trial_with(1, 5, 2.0), trial_with(2, 7, 0.0)};
  const Trial me = trial_with(3, 5, 1.8);
  peers.push_back(me);
  // peers at step 5 (excluding itself): {1, 2} → median 1.5
  EXPECT_TRUE(median_should_prune(me, peers, 5, 2));
  EXPECT_FALSE(median_should_prune(me, peers, 5, 3));
}

TEST(ShaSchedule, Populations) {
  auto pops = [](const std::vector<Rung>& rs) {
    std::vector<std::size_t> p;
    for (const auto& r : rs) p.push_back(r.population);
    return p;
  };
  EXPECT_EQ(pops(sha_schedule(27, 3, 1)), (std::vector<std::size_t>{27, 9, 3, 1}));
  EXPECT_EQ(pops(sha_schedule(10, 3, 1)), (std::vector<std::size_t>{10, 3, 1}));
  EXPECT_EQ(pops(sha_schedule(1, 3, 1)), (std::vector<std::size_t>{1}));
  const auto rs = sha_schedule(27, 3, 2);
  EXPECT_EQ(rs[3].budget, 54);
  EXPECT_EQ(schedule_budget(rs), bracket_budget(27, 2, 3, 4));
  EXPECT_THROW(sha_schedule(27, 1, 1), ConfigError);
  EXPECT_THROW(sha_schedule(0, 3, 1), ConfigError);
}

TEST(HyperbandPlan, EightyOne) {
  const HyperbandPlan plan = hyperband_plan(81, 3);
  ASSERT_EQ(plan.brackets.size(), 5u);
  const std::vector<std::size_t> n{81, 34, 15, 8, 5};
  const std::vector<long long> r{1, 3, 9, 27, 81};
  long long total = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    const Bracket& b = plan.brackets[i];
    EXPECT_EQ(b.s, 4 - static_cast<int>(i));
    EXPECT_EQ(b.n, n[i]);
    EXPECT_EQ(b.r, r[i]);
    EXPECT_EQ(b.rungs.size(), static_cast<std::size_t>(b.s + 1));
    EXPECT_EQ(b.rungs.back().budget, 81);
    total += bracket_budget(static_cast<long long>(n[i]), r[i], 3, b.s + 1);
  }
  EXPECT_EQ(plan.brackets.back().rungs.size(), 1u);
  EXPECT_EQ(plan.total_budget(), total);
  EXPECT_EQ(integer_log(81, 3), 4);
  EXPECT_EQ(integer_log(80, 3), 3);
  EXPECT_THROW(hyperband_plan(0, 3), ConfigError);
  EXPECT_THROW(hyperband_plan(81, 1), ConfigError);
}

TEST(HyperbandPlan, DeskBudgetRatio) {
  const HyperbandPlan plan = hyperband_plan(27, 3, 27);
  const long long hand = bracket_budget(27, 1, 3, 4) + bracket_budget(12, 3, 3, 3) + bracket_budget(6, 9, 3, 2) +
                         bracket_budget(4, 27, 3, 1);
  EXPECT_EQ(hand, 423);
  EXPECT_EQ(plan.total_budget(), hand);
  EXPECT_LE(static_cast<double>(plan.total_budget()), 0.6 * 27 * 27);
}

TEST(RunStudy, ExecutedBudgetMatchesSchedule) {
  StudyLimits lim;
  lim.max_budget = 27;
  const StudyResult sha = run_study(monotone(), Strategy::Sha, desk_space(), lim);
  EXPECT_EQ(sha.total_budget, bracket_budget(27, 1, 3, 4));
  EXPECT_EQ(sha.total_budget, sha.planned_budget);
  const StudyResult hb = run_study(monotone(), Strategy::Hyperband, desk_space(), lim);
  EXPECT_EQ(hb.total_budget, 423);
  EXPECT_EQ(hb.total_budget, hb.planned_budget);
  const StudyResult grid = run_study(monotone(), Strategy::Grid, desk_space(), lim);
  EXPECT_EQ(grid.total_budget, 27 * 27);
  EXPECT_LE(static_cast<double>(hb.total_budget), 0.6 * static_cast<double>(grid.total_budget));
  lim.max_budget = 81;
  const StudyResult hb81 = run_study(monotone(), Strategy::Hyperband, desk_space(), lim);
  EXPECT_EQ(hb81.total_budget, hyperband_plan(81, 3, 27).total_budget());
  long long sum = 0;
  for (const auto& t : hb81.trials) sum += t.budget;
  EXPECT_EQ(sum, hb81.total_budget);
}

TEST(RunStudy, ShaPromotesTopThird) {
  StudyLimits lim;
  lim.max_budget = 27;
  const StudyResult r = run_study(monotone(), Strategy::Sha, desk_space(), lim);
  std::map<int, std::vector<std::size_t>> at;
  for (const auto& t : r.trials)
    for (const auto& rep : t.reports) at[rep.step].push_back(t.config.index);
  EXPECT_EQ(at[1].size(), 27u);
  EXPECT_EQ(at[3], (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8}));
  EXPECT_EQ(at[9], (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(at[27], std::vector<std::size_t>{0});
  for (const auto& t : r.trials) {
    if (t.state == TrialState::Pruned) {
      EXPECT_LT(t.budget, 1 + 3 + 9 + 27);
    }
  }
}

TEST(RunStudy, HyperbandFindsGlobalBest) {
  StudyLimits lim;
  for (long long R : {27LL, 81LL}) {
    lim.max_budget = R;
    for (std::uint64_t seed : {0ULL, 1ULL, 2ULL}) {
      lim.seed = seed;
      const StudyResult r = run_study(monotone(), Strategy::Hyperband, desk_space(), lim);
      EXPECT_EQ(r.best().config.index, 0u) << "R " << R << " seed " << seed;
    }
  }
}

TEST(RunStudy, EveryStrategyFindsGlobalBest) {
  StudyLimits lim;
  lim.max_budget = 27;
  for (Strategy s : {Strategy::Grid, Strategy::Median, Strategy::Sha, Strategy::Hyperband}) {
    EXPECT_EQ(run_study(monotone(), s, desk_space(), lim).best().config.index, 0u) << to_string(s);
  }
}

TEST(RunStudy, OneConfigSpace) {
  const SearchSpace one{{{"r3", {1e-2}}}};
  StudyLimits lim;
  for (Strategy s : {Strategy::Grid, Strategy::Median, Strategy::Sha}) {
    const StudyResult r = run_study(monotone(), s, one, lim);
    EXPECT_EQ(r.best().config.values, std::vector<double>{1e-2});
    EXPECT_EQ(r.total_budget, 81) << to_string(s);
  }
  const StudyResult hb = run_study(monotone(), Strategy::Hyperband, one, lim);
  EXPECT_EQ(hb.best().config.values, std::vector<double>{1e-2});
  EXPECT_EQ(hb.total_budget, 81);
  EXPECT_EQ(hb.total_budget, hb.planned_budget);
  const HyperbandPlan plan = hyperband_plan(81, 3, 1);
  ASSERT_EQ(plan.brackets.size(), 1u);
  EXPECT_EQ(plan.brackets[0].s, 0);
}

TEST(RunStudy, MedianPrunesAndNeverResumes) {
  StudyLimits lim;
  lim.max_budget = 27;
  // later configurations are worse, so once warm-up passes they get pruned
  const StudyResult r = run_study(monotone(), Strategy::Median, desk_space(), lim);
  std::size_t pruned = 0;
  for (const auto& t : r.trials) {
    if (t.state == TrialState::Pruned) {
      ++pruned;
      EXPECT_LT(t.budget, 27);
      EXPECT_LT(t.reports.back().step, 27);
    }
  }
  EXPECT_GT(pruned, 0u);
  for (std::size_t i = 0; i < lim.warmup; ++i) EXPECT_EQ(r.trials[i].state, TrialState::Complete);
  EXPECT_LT(r.total_budget, 27 * 27);
  const StudyResult again = run_study(monotone(), Strategy::Median, desk_space(), lim);
  for (std::size_t i = 0; i < r.trials.size(); ++i) EXPECT_EQ(again.trials[i].state, r.trials[i].state);
}

TEST(RunStudy, FailedTrialDoesNotStopStudy) {
  StudyLimits lim;
  lim.max_budget = 27;  // the first Hyperband bracket then samples every configuration
  for (Strategy s : {Strategy::Grid, Strategy::Median, Strategy::Sha, Strategy::Hyperband}) {
    const StudyResult r = run_study(monotone(0), s, desk_space(), lim);
    bool saw_failure = false;
    for (const auto& t : r.trials) {
      if (t.config.index == 0) {
        EXPECT_EQ(t.state, TrialState::Failed);
        saw_failure = true;
      }
    }
    EXPECT_TRUE(saw_failure) << to_string(s);
    EXPECT_EQ(r.best().config.index, 1u) << to_string(s);
  }
  const ObjectiveFactory always_fails = [](const Configuration&) -> std::unique_ptr<ObjectiveSession> {
    return std::make_unique<MonotoneSession>(0, true);
  };
  EXPECT_THROW(run_study(always_fails, Strategy::Grid, desk_space(), lim), NumericError);
}

TEST(RunStudy, FreshSessionPerRung) {
  std::size_t sessions = 0;
  StudyLimits lim;
  lim.max_budget = 27;
  run_study(monotone(static_cast<std::size_t>(-1), &sessions), Strategy::Sha, desk_space(), lim);
  EXPECT_EQ(sessions, 27u + 9u + 3u + 1u);
}

TEST(StudyCsv, OneRowPerTrial) {
  StudyLimits lim;
  lim.max_budget = 9;
  const StudyResult r = run_study(monotone(4), Strategy::Sha, desk_space(), lim);
  std::ostringstream os;
  write_study_csv(os, desk_space(), r, format_double);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "trial_id,r1,r2,r3,value,budget,state");
  std::size_t rows = 0;
  std::map<std::string, std::size_t> states;
  while (std::getline(in, line)) {
    ++rows;
    states[line.substr(line.rfind(',') + 1)]++;
  }
  // R = 9 allows three rungs (1, 3, 9), so three configurations finish
  EXPECT_EQ(rows, 27u);
  EXPECT_EQ(states["failed"], 1u);
  EXPECT_EQ(states["complete"], 3u);
  EXPECT_EQ(states["pruned"], 23u);
}

TEST(Strategy, Names) {
  for (Strategy s : {Strategy::Grid, Strategy::Median, Strategy::Sha, Strategy::Hyperband}) {
    EXPECT_EQ(strategy_from_string(to_string(s)), s);
  }
  EXPECT_THROW(strategy_from_string("random"), ConfigError);
}

TEST(DmfObjective, GridOverFinetuneRate) {
  GenerateOptions o;
  o.n_lf = 20;
  o.n_hf = 10;
  o.n_test = 0;
  const FidelityDataset d = generate_dataset(o);
  ModelConfig base;
  base.low.inner_epochs = 200;
  base.finetune.r1 = 0.0;
  base.finetune.r2 = 0.0;
  const DmfTransObjective objective(d, base, 0);
  const SearchSpace space{{{"r3", {1e-2, 0.0}}, {"lambda1", {1e-4}}}};
  StudyLimits lim;
  lim.max_budget = 9;
  const StudyResult r = run_study(objective.factory(), Strategy::Grid, space, lim);
  ASSERT_EQ(r.trials.size(), 2u);
  // r3 = 0 with zero rates elsewhere leaves the zero head: the objective is
  // the validation RMSE of predicting the training mean
  EXPECT_LT(r.trials[0].last_value(), r.trials[1].last_value());
  EXPECT_EQ(r.best().config.get("r3"), 1e-2);
  const StudyResult again = run_study(objective.factory(), Strategy::Grid, space, lim);
  EXPECT_EQ(again.trials[0].last_value(), r.trials[0].last_value());
  const SearchSpace bad{{{"momentum", {0.9}}}};
  EXPECT_THROW(run_study(objective.factory(), Strategy::Grid, bad, lim), ConfigError);
}
