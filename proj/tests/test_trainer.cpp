#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "checks.hpp"
#include "dmf/dmf.hpp"
#include "oracles.hpp"

using namespace dmf;

namespace {

struct Toy {
  DmfNetwork net;
  Tensor x, y;
};

Toy toy(std::uint64_t seed, DagConfig c = {3, 2, 1, 8}, std::size_t rows = 10) {
  Rng rng(seed);
  Toy t{build_dag(c, seed), checks::random_tensor(rng, {rows, c.in_dim}, -1, 1),
        checks::random_tensor(rng, {rows, c.out_dim}, -1, 1)};
  for (const auto& a : t.net.architecture_parameters()) a->value = checks::random_tensor(rng, {kNumOps}, -0.5, 0.5);
  return t;
}

std::vector<Tensor> snapshot(const DmfNetwork& net) {
  std::vector<Tensor> out;
  for (const auto& p : net.weight_parameters()) out.push_back(p->value);
  for (const auto& p : net.architecture_parameters()) out.push_back(p->value);
  return out;
}

TrainConfig small_config(TrainMode mode, int epochs) {
  TrainConfig c;
  c.inner_epochs = epochs;
  c.mode = mode;
  return c;
}

double window_mean(const std::vector<double>& v, std::size_t begin, std::size_t end) {
  return std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(begin), v.begin() + static_cast<std::ptrdiff_t>(end),
                         0.0) /
         static_cast<double>(end - begin);
}

}  // namespace

TEST(LossTotal, ZeroForPerfectFit) {
  Toy t = toy(1);
  const Tensor y = t.net.predict(t.x);
  EXPECT_EQ(loss_total(t.net, t.x, y, 0.0, 0.0).total, 0.0);
}

TEST(LossTotal, LinearInLambda) {
  Toy t = toy(2);
  const double w2 = param_groups(t.net).weights.squared_norm();
  const double a2 = param_groups(t.net).architecture.squared_norm();
  const double base = loss_total(t.net, t.x, t.y, 1e-3, 1e-3).total;
  EXPECT_NEAR(loss_total(t.net, t.x, t.y, 1e-3 + 0.5, 1e-3).total - base, 0.5 * w2, 1e-12 * w2);
  EXPECT_NEAR(loss_total(t.net, t.x, t.y, 1e-3, 1e-3 + 0.5).total - base, 0.5 * a2, 1e-12 * std::max(1.0, a2));
}

TEST(LossTotal, MatchesThreeTermOracle) {
  for (std::uint64_t s = 0; s < 4; ++s) {
    Toy t = toy(10 + s);
    const LossTerms got = loss_total(t.net, t.x, t.y, 1e-2, 3e-2);
    const double want = oracle::loss(t.net, t.x, t.y, 1e-2, 3e-2);
    EXPECT_NEAR(got.total, want, 1e-12 * std::max(1.0, want));
    EXPECT_NEAR(got.total, got.data + 1e-2 * got.reg_weights + 3e-2 * got.reg_alpha, 1e-12 * got.total);
  }
}

TEST(LossTotal, RowMismatch) {
  Toy t = toy(3);
  EXPECT_THROW(loss_total(t.net, t.x, Tensor(Shape{3, 1}), 0.0, 0.0), DimensionError);
}

TEST(AlternateTrain, FrozenAlphaWhenRateZero) {
  Toy t = toy(4);
  const auto before = snapshot(t.net);
  TrainConfig c = small_config(TrainMode::Alternate, 12);
  c.alpha_every = 2;
  c.r2 = 0.0;
  alternate_train(t.net, t.x, t.y, c);
  const auto alphas = t.net.architecture_parameters();
  for (std::size_t i = 0; i < alphas.size(); ++i) EXPECT_EQ(alphas[i]->value, before[before.size() - alphas.size() + i]);
}

TEST(AlternateTrain, AlphaUpdateCounting) {
  Toy t = toy(5);
  TrainConfig c = small_config(TrainMode::Alternate, 3);
  c.alpha_every = 5;
  c.outer_iters = 2;
  const auto before = snapshot(t.net);
  const TrainTrace tr = alternate_train(t.net, t.x, t.y, c);
  EXPECT_EQ(tr.alpha_updates, (std::vector<int>{0, 0}));
  const auto alphas = t.net.architecture_parameters();
  for (std::size_t i = 0; i < alphas.size(); ++i) EXPECT_EQ(alphas[i]->value, before[before.size() - alphas.size() + i]);
  c.inner_epochs = 12;
  c.outer_iters = 1;
  EXPECT_EQ(alternate_train(t.net, t.x, t.y, c).alpha_updates, std::vector<int>{2});
  EXPECT_EQ(tr.epochs(), 6u);
}

TEST(AlternateTrain, OneStepMatchesManualUpdate) {
  Toy t = toy(6, DagConfig{2, 1, 1, 4}, 5);
  TrainConfig c = small_config(TrainMode::Alternate, 1);
  c.r1 = 0.05;
  c.lambda1 = 1e-3;
  c.lambda2 = 1e-3;
  const auto ws = t.net.weight_parameters();
  const auto before = snapshot(t.net);
  const auto grad = fd_gradient([&] { return loss_total(t.net, t.x, t.y, c.lambda1, c.lambda2).total; }, ws, 1e-6);
  alternate_train(t.net, t.x, t.y, c);
  for (std::size_t p = 0; p < ws.size(); ++p)
    for (std::size_t i = 0; i < ws[p]->value.size(); ++i) {
      EXPECT_NEAR(ws[p]->value[i], before[p][i] - c.r1 * grad[p][i], 1e-9);
    }
  // k = 5 > W = 1: logits untouched
  const auto alphas = t.net.architecture_parameters();
  for (std::size_t i = 0; i < alphas.size(); ++i) EXPECT_EQ(alphas[i]->value, before[ws.size() + i]);
}

TEST(AlternateTrain, AlphaStepUsesUpdatedWeights) {
  Toy t = toy(7, DagConfig{2, 1, 1, 4}, 5);
  TrainConfig c = small_config(TrainMode::Alternate, 1);
  c.alpha_every = 1;
  c.r1 = 0.05;
  c.r2 = 0.1;
  DmfNetwork manual = t.net.clone();
  auto g = param_groups(manual);
  const auto gw = fd_gradient([&] { return loss_total(manual, t.x, t.y, c.lambda1, c.lambda2).total; },
                              g.weights.params, 1e-6);
  for (std::size_t p = 0; p < gw.size(); ++p)
    for (std::size_t i = 0; i < gw[p].size(); ++i) g.weights.params[p]->value[i] -= c.r1 * gw[p][i];
  const auto ga = fd_gradient([&] { return loss_total(manual, t.x, t.y, c.lambda1, c.lambda2).total; },
                              g.architecture.params, 1e-6);
  alternate_train(t.net, t.x, t.y, c);
  const auto got = t.net.architecture_parameters();
  for (std::size_t p = 0; p < ga.size(); ++p)
    for (std::size_t i = 0; i < kNumOps; ++i) {
      EXPECT_NEAR(got[p]->value[i], g.architecture.params[p]->value[i] - c.r2 * ga[p][i], 1e-9);
    }
}

TEST(AlternateTrain, RejectsWrongMode) {
  Toy t = toy(8);
  EXPECT_THROW(alternate_train(t.net, t.x, t.y, small_config(TrainMode::Joint, 1)), ConfigError);
  EXPECT_THROW(joint_train(t.net, t.x, t.y, small_config(TrainMode::Alternate, 1)), ConfigError);
  TrainConfig bad = small_config(TrainMode::Alternate, 1);
  bad.alpha_every = 0;
  EXPECT_THROW(alternate_train(t.net, t.x, t.y, bad), ConfigError);
  bad.alpha_every = 1;
  bad.r1 = -1.0;
  EXPECT_THROW(alternate_train(t.net, t.x, t.y, bad), ConfigError);
}

TEST(JointTrain, ZeroRatesLeaveNetworkUnchanged) {
  Toy t = toy(9);
  const auto before = snapshot(t.net);
  TrainConfig c = small_config(TrainMode::Joint, 5);
  c.r1 = c.r2 = 0.0;
  joint_train(t.net, t.x, t.y, c);
  EXPECT_EQ(snapshot(t.net), before);
}

TEST(JointTrain, MatchesAlternateWhenAlphaFrozen) {
  Toy t = toy(10);
  DmfNetwork a = t.net.clone(), j = t.net.clone();
  TrainConfig c = small_config(TrainMode::Alternate, 20);
  c.r2 = 0.0;
  c.alpha_every = 3;
  const TrainTrace ta = alternate_train(a, t.x, t.y, c);
  c.mode = TrainMode::Joint;
  const TrainTrace tj = joint_train(j, t.x, t.y, c);
  EXPECT_EQ(ta.total, tj.total);
  EXPECT_EQ(ta.data, tj.data);
  EXPECT_EQ(snapshot(a), snapshot(j));
}

TEST(JointTrain, OneStepUsesSameGradient) {
  Toy t = toy(11, DagConfig{2, 1, 1, 4}, 5);
  TrainConfig c = small_config(TrainMode::Joint, 1);
  c.r1 = 0.05;
  c.r2 = 0.1;
  auto g = param_groups(t.net);
  std::vector<ParamPtr> all = g.weights.params;
  all.insert(all.end(), g.architecture.params.begin(), g.architecture.params.end());
  const auto before = snapshot(t.net);
  const auto grad = fd_gradient([&] { return loss_total(t.net, t.x, t.y, c.lambda1, c.lambda2).total; }, all, 1e-6);
  joint_train(t.net, t.x, t.y, c);
  for (std::size_t p = 0; p < all.size(); ++p) {
    const double r = p < g.weights.params.size() ? c.r1 : c.r2;
    for (std::size_t i = 0; i < all[p]->value.size(); ++i) {
      EXPECT_NEAR(all[p]->value[i], before[p][i] - r * grad[p][i], 1e-9);
    }
  }
}

TEST(Trainer, DeterministicTraces) {
  Toy a = toy(12), b = toy(12);
  const TrainConfig c = small_config(TrainMode::Alternate, 30);
  const TrainTrace ta = train(a.net, a.x, a.y, c);
  const TrainTrace tb = train(b.net, b.x, b.y, c);
  EXPECT_EQ(ta.total, tb.total);
  EXPECT_EQ(ta.reg_alpha, tb.reg_alpha);
  EXPECT_EQ(snapshot(a.net), snapshot(b.net));
}

TEST(Trainer, TraceEntriesEqualLossAfterEpoch) {
  Toy t = toy(13);
  const TrainConfig c3 = small_config(TrainMode::Alternate, 7);
  TrainConfig c4 = c3;
  c4.inner_epochs = 8;
  DmfNetwork a = t.net.clone(), b = t.net.clone();
  const TrainTrace ta = alternate_train(a, t.x, t.y, c3);
  const TrainTrace tb = alternate_train(b, t.x, t.y, c4);
  ASSERT_EQ(ta.epochs(), 7u);
  ASSERT_EQ(tb.epochs(), 8u);
  EXPECT_EQ(tb.total[6], loss_total(a, t.x, t.y, c3.lambda1, c3.lambda2).total);
  EXPECT_EQ(ta.total.back(), tb.total[6]);
  for (std::size_t e = 0; e < 7; ++e) EXPECT_EQ(ta.total[e], tb.total[e]);
}

TEST(Trainer, LossDecreasesOnAnalyticBenchmarks) {
  for (Benchmark b : {Benchmark::Borehole, Benchmark::Currin, Benchmark::Park}) {
    const Tensor x = sample_inputs(input_spec(b), 20, 3);
    const Tensor y = evaluate_rows(b, x, Fidelity::Low);
    TrainTrace trace;
    train_surrogate(x, y, TrainConfig{}, 3, 20, &trace);
    const std::size_t n = trace.epochs(), tenth = n / 10;
    ASSERT_EQ(n, 2000u);
    EXPECT_LT(window_mean(trace.total, n - tenth, n), window_mean(trace.total, 0, tenth)) << to_string(b);
  }
}

TEST(TrainConfigJson, ReadsKnownKeys) {
  const auto c = train_config_from_json(nlohmann::json::parse(
      R"({"outer_iters": 2, "inner_epochs": 10, "alpha_every": 3, "r1": 0.5, "r2": 0.25,
          "lambda1": 0, "lambda2": 0.1, "seed": 9, "mode": "joint"})"));
  EXPECT_EQ(c.outer_iters, 2);
  EXPECT_EQ(c.inner_epochs, 10);
  EXPECT_EQ(c.alpha_every, 3);
  EXPECT_EQ(c.r2, 0.25);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.mode, TrainMode::Joint);
  const auto back = train_config_from_json(to_json(c));
  EXPECT_EQ(back.lambda2, c.lambda2);
  EXPECT_EQ(back.mode, c.mode);
}

TEST(TrainConfigJson, RejectsBadDocuments) {
  EXPECT_THROW(train_config_from_json(nlohmann::json::parse(R"({"r1": 0.1, "momentum": 0.9})")), ConfigError);
  EXPECT_THROW(train_config_from_json(nlohmann::json::parse(R"({"mode": "bilevel"})")), ConfigError);
  EXPECT_THROW(train_config_from_json(nlohmann::json::parse(R"({"lambda1": -1})")), ConfigError);
  EXPECT_THROW(train_config_from_json(nlohmann::json::parse(R"({"r1": "fast"})")), ConfigError);
  EXPECT_THROW(train_config_from_json(nlohmann::json::parse("[1, 2]")), ConfigError);
}
