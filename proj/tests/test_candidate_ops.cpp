#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "checks.hpp"
#include "dmf/candidate_ops.hpp"
#include "oracles.hpp"

using namespace dmf;

namespace {

// Σ (fan_in + 1)·fan_out over the layer chain in -> widths... -> out.
std::size_t chain_count(std::size_t in, std::vector<std::size_t> widths, std::size_t out) {
  if (widths.empty() || widths.back() != out) widths.push_back(out);
  std::size_t n = 0, prev = in;
  for (std::size_t w : widths) {
    n += prev * w + w;
    prev = w;
  }
  return n;
}

}  // namespace

TEST(OpKind, FiveMembersInFixedOrder) {
  ASSERT_EQ(kAllOps.size(), 5u);
  EXPECT_EQ(to_string(kAllOps[0]), "deep");
  EXPECT_EQ(to_string(kAllOps[4]), "zero");
  for (OpKind k : kAllOps) EXPECT_EQ(op_kind_from_string(to_string(k)), k);
  EXPECT_THROW(op_kind_from_string("conv"), ParseError);
}

TEST(BuildCandidate, ParameterCounts) {
  EXPECT_EQ(build_candidate(OpKind::Zero, 8, 20, 1).parameter_count(), 0u);
  EXPECT_EQ(build_candidate(OpKind::Linear, 8, 20, 1).parameter_count(), 180u);
  EXPECT_EQ(build_candidate(OpKind::Deep, 2, 20, 1).parameter_count(), 1320u);
  EXPECT_EQ(build_candidate(OpKind::Deep, 2, 20, 1).parameter_count(), chain_count(2, {20, 20, 20, 20}, 20));
  EXPECT_EQ(build_candidate(OpKind::Wide, 3, 1, 1).parameter_count(), chain_count(3, {40, 40}, 1));
  EXPECT_EQ(build_candidate(OpKind::Shallow, 8, 100, 1).parameter_count(), chain_count(8, {20, 20}, 100));
  EXPECT_THROW(build_candidate(OpKind::Deep, 0, 3, 1), ConfigError);
}

TEST(BuildCandidate, LayerStack) {
  const CandidateOp wide = build_candidate(OpKind::Wide, 3, 5, 2);
  ASSERT_EQ(wide.layers().size(), 3u);
  EXPECT_TRUE(wide.layers()[0].relu);
  EXPECT_TRUE(wide.layers()[1].relu);
  EXPECT_FALSE(wide.layers()[2].relu);
  EXPECT_EQ(wide.layers()[1].out_dim(), 40u);
  const CandidateOp lin = build_candidate(OpKind::Linear, 3, 5, 2);
  ASSERT_EQ(lin.layers().size(), 1u);
  EXPECT_FALSE(lin.layers()[0].relu);
}

TEST(BuildCandidate, InitWithinFanInBound) {
  const CandidateOp op = build_candidate(OpKind::Shallow, 6, 4, 9);
  for (const auto& l : op.layers()) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.in_dim()));
    for (double v : l.weight->value.values()) EXPECT_LE(std::abs(v), limit);
  }
}

TEST(BuildCandidate, DeterministicPerSeed) {
  const CandidateOp a = build_candidate(OpKind::Deep, 3, 2, 17);
  const CandidateOp b = build_candidate(OpKind::Deep, 3, 2, 17);
  const CandidateOp c = build_candidate(OpKind::Deep, 3, 2, 18);
  EXPECT_EQ(a.layers()[0].weight->value, b.layers()[0].weight->value);
  EXPECT_NE(a.layers()[0].weight->value, c.layers()[0].weight->value);
}

TEST(CandidateForward, ZeroOpGivesZeros) {
  Rng rng(1);
  const Tensor x = checks::random_tensor(rng, {4, 8}, -5, 5);
  const Tensor out = candidate_forward(build_candidate(OpKind::Zero, 8, 3, 1), x);
  EXPECT_EQ(out, Tensor(Shape{4, 3}));
}

TEST(CandidateForward, LinearIdentity) {
  CandidateOp op = build_candidate(OpKind::Linear, 3, 3, 1);
  auto& l = op.layers()[0];
  l.weight->value = Tensor(Shape{3, 3});
  for (std::size_t i = 0; i < 3; ++i) l.weight->value(i, i) = 1.0;
  l.bias->value = Tensor(Shape{3});
  Rng rng(2);
  const Tensor x = checks::random_tensor(rng, {5, 3}, -1, 1);
  EXPECT_EQ(candidate_forward(op, x), x);
}

TEST(CandidateForward, ShallowMatchesComposition) {
  const CandidateOp op = build_candidate(OpKind::Shallow, 4, 3, 21);
  Rng rng(4);
  const Tensor x = checks::random_tensor(rng, {6, 4}, -2, 2);
  const Tensor got = candidate_forward(op, x);
  const auto want = oracle::op_forward(op, oracle::to_matrix(x));
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(got(i, j), want[i][j], 1e-12);
}

TEST(CandidateForward, ShapeMismatch) {
  EXPECT_THROW(candidate_forward(build_candidate(OpKind::Deep, 4, 3, 1), Tensor(Shape{2, 5})), DimensionError);
}

TEST(MixedEdge, WeightsSumToOne) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    MixedEdge e = build_mixed_edge(2, 2, 1);
    e.alpha()->value = checks::random_tensor(rng, {kNumOps}, -20, 20);
    const auto w = e.mixing_weights();
    double s = 0.0;
    for (double v : w) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(MixedEdge, SaturatedZeroGivesZero) {
  MixedEdge e = build_mixed_edge(3, 4, 8);
  e.alpha()->value = Tensor::vector({0, 0, 0, 0, 50});
  Rng rng(6);
  const Tensor out = mixed_forward(e, checks::random_tensor(rng, {5, 3}, -1, 1));
  for (double v : out.values()) EXPECT_LT(std::abs(v), 1e-15);
}

TEST(MixedEdge, EqualLogitsGiveMean) {
  const MixedEdge e = build_mixed_edge(3, 2, 12);
  Rng rng(7);
  const Tensor x = checks::random_tensor(rng, {4, 3}, -1, 1);
  const Tensor out = mixed_forward(e, x);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0.0;
      for (const auto& op : e.ops()) s += candidate_forward(op, x)(i, j);
      EXPECT_NEAR(out(i, j), s / 5.0, 1e-12);
    }
}

TEST(MixedEdge, MatchesWeightedSumOracle) {
  MixedEdge e = build_mixed_edge(4, 3, 13);
  Rng rng(8);
  e.alpha()->value = checks::random_tensor(rng, {kNumOps}, -2, 2);
  const Tensor x = checks::random_tensor(rng, {5, 4}, -1, 1);
  const Tensor got = mixed_forward(e, x);
  const auto want = oracle::edge_forward(e, oracle::to_matrix(x));
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(got(i, j), want[i][j], 1e-12);
}

TEST(MixedEdge, BoundedByLargestCandidate) {
  MixedEdge e = build_mixed_edge(2, 3, 14);
  Rng rng(9);
  e.alpha()->value = checks::random_tensor(rng, {kNumOps}, -3, 3);
  const Tensor x = checks::random_tensor(rng, {7, 2}, -2, 2);
  const Tensor out = mixed_forward(e, x);
  std::vector<Tensor> outs;
  for (const auto& op : e.ops()) outs.push_back(candidate_forward(op, x));
  for (std::size_t i = 0; i < out.size(); ++i) {
    double m = 0.0;
    for (const auto& o : outs) m = std::max(m, std::abs(o[i]));
    EXPECT_LE(std::abs(out[i]), m + 1e-12);
  }
}

TEST(MixedEdge, AlphaGradientMatchesFiniteDifferences) {
  MixedEdge e = build_mixed_edge(3, 2, 15);
  Rng rng(10);
  e.alpha()->value = checks::random_tensor(rng, {kNumOps}, -1, 1);
  const Tensor x = checks::random_tensor(rng, {4, 3}, -1, 1);
  const Tensor y = checks::random_tensor(rng, {4, 2}, -1, 1);
  e.alpha()->zero_grad();
  {
    Tape t;
    t.backward(t.mse(e.forward(t, t.constant(x)), y));
  }
  const std::vector<ParamPtr> ps{e.alpha()};
  const auto fd = fd_gradient(
      [&] {
        Tape t;
        return t.value(t.mse(e.forward(t, t.constant(x)), y))[0];
      },
      ps, 1e-5);
  for (std::size_t l = 0; l < kNumOps; ++l) EXPECT_LT(oracle::rel_error(e.alpha()->grad[l], fd[0][l]), 1e-5);
}

TEST(MixedEdge, ZeroOpPassesNoGradientToInput) {
  const CandidateOp op = build_candidate(OpKind::Zero, 3, 2, 1);
  auto x = make_param("x", Tensor(Shape{2, 3}, 0.7));
  Tape t;
  t.backward(t.sum_squares(t.add(op.forward(t, t.param(x)), t.constant(Tensor(Shape{2, 2}, 1.0)))));
  for (double g : x->grad.values()) EXPECT_EQ(g, 0.0);
}

TEST(MixedEdge, CloneIsIndependent) {
  const MixedEdge e = build_mixed_edge(2, 2, 16);
  MixedEdge c = e.clone();
  c.alpha()->value[0] = 3.0;
  c.ops()[0].layers()[0].weight->value[0] += 1.0;
  EXPECT_EQ(e.alpha()->value[0], 0.0);
  EXPECT_NE(e.ops()[0].layers()[0].weight->value[0], c.ops()[0].layers()[0].weight->value[0]);
}
