#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "seqnet/construct.hpp"

using namespace seqnet;

namespace {

void expect_close(double got, double want, double tol, const std::string& where) {
  const double scale = std::max(1.0, std::abs(want));
  EXPECT_NEAR(got, want, tol * scale) << where;
}

TwoLayerSurrogate small_surrogate(ActivationProfile act, int d_x, int d_y, int n, int units,
                                  std::uint64_t seed, bool bidirectional = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  TwoLayerSurrogate s;
  s.d_x = d_x;
  s.d_y = d_y;
  s.N = n;
  s.units = units;
  s.bidirectional = bidirectional;
  s.act = std::move(act);
  for (int t = 1; t <= n; ++t) {
    MatrixD w(d_y, units);
    for (auto& v : w.data()) v = dist(rng);
    s.weights.push_back(w);
    std::vector<MatrixD> blocks;
    for (int i = 0; i < units; ++i) {
      MatrixD f(s.window(t), d_x);
      for (auto& v : f.data()) v = dist(rng);
      blocks.push_back(f);
    }
    s.features.push_back(blocks);
  }
  return s;
}

}  // namespace

TEST(ActivationProfileOp, SurchargesFollowTheRules) {
  const WidthSurcharges r = activation_profile(relu_profile());
  EXPECT_EQ(r.beta, 0);
  EXPECT_EQ(r.gamma, 0);
  EXPECT_EQ(r.alpha, 0);
  const WidthSurcharges t = activation_profile(tanh_profile());
  EXPECT_EQ(t.beta, 0);
  EXPECT_EQ(t.gamma, 1);
  EXPECT_EQ(t.alpha, 0);
  const WidthSurcharges s = activation_profile(logistic_sigmoid_profile());
  EXPECT_EQ(s.beta, 1);
  EXPECT_EQ(s.gamma, 1);
  EXPECT_EQ(s.alpha, 1);
}

TEST(LinearSumRnn, FrozenTwoStepSolveAndPreactivation) {
  // Target sum 1*x[1] + 0*x[2]: the exact solve gives cell rows (1, -1), and
  // on x = (5, 7): acc after cell 1 = (5, 12), after cell 2 = (0, 5).
  MatrixD coeff(2, 1);
  coeff(0, 0) = 1.0;
  coeff(1, 0) = 0.0;
  BuildOptions opts;
  opts.apply_final_activation = false;
  const LinearSumRnnBuild b = build_linear_sum_rnn(coeff, relu_profile(), opts);
  EXPECT_DOUBLE_EQ(b.cell_rows(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(b.cell_rows(1, 0), -1.0);

  Seq x(1, 2);
  x.set_token(1, {5.0});
  x.set_token(2, {7.0});
  const Seq y = eval_network(b.net, x);
  EXPECT_DOUBLE_EQ(y.token(2)[1], 5.0);
  EXPECT_DOUBLE_EQ(y.token(2)[0], 7.0);  // register carries x[N]
}

TEST(LinearSumRnn, PreactivationMatchesDotProductOracle) {
  std::mt19937_64 rng(101u);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 5);
    const int d_x = 1 + static_cast<int>(rng() % 3);
    MatrixD coeff(n, d_x);
    for (auto& v : coeff.data()) v = dist(rng);
    BuildOptions opts;
    opts.apply_final_activation = false;
    const LinearSumRnnBuild b = build_linear_sum_rnn(coeff, tanh_profile(), opts);
    const Seq x = oracles::random_seq(rng, d_x, n, -1.0, 1.0);
    const Seq y = eval_network(b.net, x);
    expect_close(y.token(n)[d_x], oracles::full_linear_sum(coeff, x), 1e-9,
                 "trial " + std::to_string(trial));
  }
}

TEST(LinearSumRnn, FinalActivationAppliedTokenwise) {
  MatrixD coeff(3, 2);
  for (auto& v : coeff.data()) v = 0.5;
  const LinearSumRnnBuild b = build_linear_sum_rnn(coeff, tanh_profile());
  EXPECT_EQ(width(b.net), 3);
  EXPECT_EQ(b.net.cells.size(), 4u);  // N accumulator cells + activation stage
  std::mt19937_64 rng(7u);
  const Seq x = oracles::random_seq(rng, 2, 3);
  const Seq y = eval_network(b.net, x);
  expect_close(y.token(3)[2], std::tanh(oracles::full_linear_sum(coeff, x)), 1e-9, "tanh output");
}

TEST(LinearSumRnn, DeskScaleCap) {
  MatrixD coeff(9, 1);
  for (auto& v : coeff.data()) v = 1.0;
  EXPECT_THROW(build_linear_sum_rnn(coeff, relu_profile()), BudgetError);
  BuildOptions opts;
  opts.allow_large = true;
  EXPECT_NO_THROW(build_linear_sum_rnn(coeff, relu_profile(), opts));
}

TEST(LinearSumRnn, DegenerateSingleStep) {
  MatrixD coeff(1, 1);
  coeff(0, 0) = 3.0;
  BuildOptions opts;
  opts.apply_final_activation = false;
  const LinearSumRnnBuild b = build_linear_sum_rnn(coeff, relu_profile(), opts);
  Seq x(1, 1);
  x.set_token(1, {2.0});
  EXPECT_DOUBLE_EQ(eval_network(b.net, x).token(1)[1], 6.0);
}

TEST(LinearSumTrnn, PrefixSumsAtEveryTime) {
  std::mt19937_64 rng(202u);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 5);
    const int d_x = 1 + static_cast<int>(rng() % 3);
    std::vector<MatrixD> family;
    for (int j = 0; j < n; ++j) {
      MatrixD block(n, d_x);
      for (auto& v : block.data()) v = dist(rng);
      family.push_back(block);
    }
    BuildOptions opts;
    opts.apply_final_activation = false;
    const LinearSumTrnnBuild b = build_linear_sum_trnn(family, tanh_profile(), opts);
    const Seq x = oracles::random_seq(rng, d_x, n, -1.0, 1.0);
    const Seq y = eval_network(b.net, x);
    for (int t = 1; t <= n; ++t) {
      expect_close(y.token(t)[d_x], oracles::prefix_linear_sum(family, x, t), 1e-9,
                   "trial " + std::to_string(trial) + " t=" + std::to_string(t));
      for (int c = 0; c < d_x; ++c) EXPECT_DOUBLE_EQ(y.token(t)[c], x.token(t)[c]);
    }
  }
}

TEST(LinearSumTrnn, RunningSumFamily) {
  // A_j[t] = 1 for every j <= t: the accumulator is the running sum.
  const int n = 4;
  std::vector<MatrixD> family(n, MatrixD(n, 1, 1.0));
  BuildOptions opts;
  opts.apply_final_activation = false;
  const LinearSumTrnnBuild b = build_linear_sum_trnn(family, relu_profile(), opts);
  Seq x(1, n);
  x.set_token(1, {1.0});
  x.set_token(2, {2.0});
  x.set_token(3, {3.0});
  x.set_token(4, {4.0});
  const Seq y = eval_network(b.net, x);
  EXPECT_NEAR(y.token(1)[1], 1.0, 1e-12);
  EXPECT_NEAR(y.token(2)[1], 3.0, 1e-12);
  EXPECT_NEAR(y.token(3)[1], 6.0, 1e-12);
  EXPECT_NEAR(y.token(4)[1], 10.0, 1e-12);
}

TEST(MlpInRnn, FinalTimeValueMatchesDirectEvaluation) {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const TwoLayerSurrogate s = small_surrogate(tanh_profile(), 2, 2, 4, 3, seed);
    const MlpRnnBuild b = build_mlp_in_rnn(s);
    EXPECT_EQ(width(b.net), s.d_x + s.d_y + 1);
    std::mt19937_64 rng(seed + 100);
    const Seq x = oracles::random_seq(rng, s.d_x, s.N);
    const Seq y = eval_network(b.net, x);
    const VectorD direct = surrogate_value(s, x, s.N);
    for (int r = 0; r < s.d_y; ++r) {
      expect_close(y.token(s.N)[s.d_x + r], direct[r], 1e-9, "output " + std::to_string(r));
    }
    for (int c = 0; c < s.d_x; ++c) EXPECT_DOUBLE_EQ(y.token(s.N)[c], x.token(s.N)[c]);
    EXPECT_EQ(y.token(s.N)[s.d_x + s.d_y], 0.0);  // buffer exactly cleared
  }
}

TEST(MlpInRnn, RejectsBidirectionalSurrogates) {
  const TwoLayerSurrogate s = small_surrogate(tanh_profile(), 1, 1, 3, 2, 5u, true);
  EXPECT_THROW(build_mlp_in_rnn(s), ValidationError);
}

TEST(MlpInTrnn, EveryTimeValueMatchesDirectEvaluation) {
  for (std::uint64_t seed : {21u, 22u, 23u}) {
    const TwoLayerSurrogate s = small_surrogate(tanh_profile(), 2, 2, 4, 3, seed);
    const MlpTrnnBuild b = build_mlp_in_trnn(s);
    EXPECT_EQ(width(b.net), s.d_x + s.d_y + 1);
    std::mt19937_64 rng(seed + 100);
    const Seq x = oracles::random_seq(rng, s.d_x, s.N);
    const Seq y = eval_network(b.net, x);
    for (int t = 1; t <= s.N; ++t) {
      const VectorD direct = surrogate_value(s, x, t);
      for (int r = 0; r < s.d_y; ++r) {
        expect_close(y.token(t)[s.d_x + r], direct[r], 1e-9,
                     "t=" + std::to_string(t) + " output " + std::to_string(r));
      }
      for (int c = 0; c < s.d_x; ++c) EXPECT_DOUBLE_EQ(y.token(t)[c], x.token(t)[c]);
      EXPECT_EQ(y.token(t)[s.d_x + s.d_y], 0.0);
    }
  }
}

TEST(MlpInTrnn, TimeVaryingMergeWeightsAreHonored) {
  // Weights differ per t; check t=1 and t=N disagree the way the target does.
  const TwoLayerSurrogate s = small_surrogate(relu_profile(), 1, 1, 3, 2, 31u);
  const MlpTrnnBuild b = build_mlp_in_trnn(s);
  std::mt19937_64 rng(131u);
  const Seq x = oracles::random_seq(rng, 1, 3);
  const Seq y = eval_network(b.net, x);
  for (int t = 1; t <= 3; ++t) {
    expect_close(y.token(t)[1], surrogate_value(s, x, t)[0], 1e-9, "t=" + std::to_string(t));
  }
}

TEST(SurrogateValidation, ShapeErrorsAreCaught) {
  TwoLayerSurrogate s = small_surrogate(tanh_profile(), 2, 1, 3, 2, 41u);
  s.features[1][0] = MatrixD(3, 2);  // wrong window for t=2
  EXPECT_THROW(s.validate(), ValidationError);
}
