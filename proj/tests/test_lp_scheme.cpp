// Floor quantization, the token and sequence encoders, code peeling, the
// decoder, the clipped projection, end-to-end pipeline deviation bounds,
// and the relu staircase block that realizes the encoder token-wise.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "oracles.hpp"
#include "seqnet/lp.hpp"
#include "seqnet/network.hpp"

using namespace seqnet;

namespace {

Seq rand_unit_seq(std::mt19937_64& rng, int d, int n) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  Seq s(d, n);
  for (int t = 1; t <= n; ++t) {
    VectorD v(static_cast<std::size_t>(d));
    for (double& e : v) e = dist(rng);
    s.set_token(t, v);
  }
  return s;
}

// All grid vectors of C_M^d, enumerated by packed index.
std::vector<VectorD> grid_vectors(int d, int M) {
  const std::uint64_t per = std::uint64_t{1} << M;
  std::uint64_t total = 1;
  for (int i = 0; i < d; ++i) total *= per;
  std::vector<VectorD> out;
  out.reserve(static_cast<std::size_t>(total));
  for (std::uint64_t idx = 0; idx < total; ++idx) {
    VectorD v(static_cast<std::size_t>(d));
    std::uint64_t rest = idx;
    for (int i = d - 1; i >= 0; --i) {
      v[static_cast<std::size_t>(i)] = std::ldexp(static_cast<double>(rest % per), -M);
      rest /= per;
    }
    out.push_back(std::move(v));
  }
  return out;
}

TEST(QuantGrid, EnumeratesDyadicPointsExactly) {
  const QuantGrid g = quant_grid(2);
  ASSERT_EQ(g.values.size(), 4u);
  EXPECT_DOUBLE_EQ(g.values[0], 0.0);
  EXPECT_DOUBLE_EQ(g.values[1], 0.25);
  EXPECT_DOUBLE_EQ(g.values[2], 0.5);
  EXPECT_DOUBLE_EQ(g.values[3], 0.75);
  for (int n = 1; n <= 6; ++n) {
    const QuantGrid gn = quant_grid(n);
    ASSERT_EQ(gn.values.size(), std::size_t{1} << n);
    const double step = std::ldexp(1.0, -n);
    for (std::size_t k = 1; k < gn.values.size(); ++k) {
      EXPECT_DOUBLE_EQ(gn.values[k] - gn.values[k - 1], step);
    }
  }
  EXPECT_THROW(quant_grid(0), ValidationError);
  EXPECT_THROW(quant_grid(21), BudgetError);
}

TEST(Quantize, FloorsToTheGrid) {
  EXPECT_DOUBLE_EQ(quantize(0.7, 2), 0.5);
  EXPECT_DOUBLE_EQ(quantize(0.0, 3), 0.0);
  EXPECT_DOUBLE_EQ(quantize(0.25, 2), 0.25);
  EXPECT_DOUBLE_EQ(quantize(1.0, 3), 0.875);  // top value lands on the last point
  EXPECT_THROW(quantize(-0.1, 2), DomainError);
  EXPECT_THROW(quantize(1.1, 2), DomainError);
  EXPECT_THROW(quantize(0.5, 0), ValidationError);
  EXPECT_THROW(quantize(0.5, 53), ValidationError);

  // Idempotence and monotonicity on a dense grid.
  double prev = 0.0;
  for (int j = 0; j <= 997; ++j) {
    const double v = static_cast<double>(j) / 997.0;
    const double q = quantize(v, 4);
    EXPECT_DOUBLE_EQ(quantize(q, 4), q);
    EXPECT_GE(q, prev);
    prev = q;
  }
}

TEST(Encode, ConcatenatesQuantizedCoordinates) {
  EXPECT_DOUBLE_EQ(encode({0.3, 0.6}, 2), 0.375);
  EXPECT_DOUBLE_EQ(encode({0.0, 0.0, 0.0}, 3), 0.0);
  EXPECT_THROW(encode({0.5, 1.5}, 2), DomainError);
  EXPECT_THROW(encode({}, 2), ValidationError);
  EXPECT_THROW(encode(VectorD(9, 0.5), 6), BudgetError);  // 54 bits

  // Injective on the full grid.
  for (int d = 1; d <= 3; ++d) {
    for (int M = 1; M <= (d == 3 ? 3 : 4); ++M) {
      const auto pts = grid_vectors(d, M);
      std::set<double> codes;
      for (const VectorD& c : pts) codes.insert(encode(c, M));
      EXPECT_EQ(codes.size(), pts.size()) << "d=" << d << " M=" << M;
    }
  }
}

TEST(Decode, InvertsEncodeOnTheGrid) {
  const VectorD v = decode(0.375, 2, 2);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_DOUBLE_EQ(v[0], 0.25);
  EXPECT_DOUBLE_EQ(v[1], 0.5);
  const VectorD z = decode(0.0, 3, 2);
  EXPECT_DOUBLE_EQ(z[0], 0.0);
  EXPECT_DOUBLE_EQ(z[1], 0.0);

  for (const VectorD& c : grid_vectors(2, 2)) {
    const VectorD back = decode(encode(c, 2), 2, 2);
    ASSERT_EQ(back.size(), c.size());
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_DOUBLE_EQ(back[i], c[i]);
  }
  for (const VectorD& c : grid_vectors(3, 2)) {
    const VectorD back = decode(encode(c, 2), 2, 3);
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_DOUBLE_EQ(back[i], c[i]);
  }

  EXPECT_THROW(decode(0.3, 2, 1), DomainError);   // not a grid concatenation
  EXPECT_THROW(decode(1.0, 2, 1), DomainError);   // above the top code
  EXPECT_THROW(decode(-0.25, 2, 1), DomainError);
  EXPECT_THROW(decode(0.5, 0, 1), ValidationError);
  EXPECT_THROW(decode(0.5, 6, 9), BudgetError);
}

TEST(EncoderCell, RecurrenceMultiplierAndUnrolledForm) {
  EXPECT_DOUBLE_EQ(make_encoder_cell(1, 1).A(0, 0), 0.25);
  EXPECT_DOUBLE_EQ(make_encoder_cell(2, 3).A(0, 0), std::ldexp(1.0, -7));
  EXPECT_DOUBLE_EQ(make_encoder_cell(1, 6).A(0, 0), std::ldexp(1.0, -7));

  // All-zero input, two tokens: codes 1 and 1 + 2^-2.
  Seq zero(1, 2);
  const Seq codes = encode_sequence(zero, 1);
  EXPECT_DOUBLE_EQ(codes.values(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(codes.values(0, 1), 1.25);

  // One token: 1 + Enc(x[1]).
  std::mt19937_64 rng(7101);
  const Seq one = rand_unit_seq(rng, 2, 1);
  const Seq c1 = encode_sequence(one, 2);
  EXPECT_DOUBLE_EQ(c1.values(0, 0), 1.0 + encode(one.token(1), 2));

  // Cross-check the recurrence against its unrolled form.
  const int d_x = 1, M = 3, N = 3;
  for (int trial = 0; trial < 50; ++trial) {
    const Seq x = rand_unit_seq(rng, d_x, N);
    const Seq got = encode_sequence(x, M);
    for (int t = 1; t <= N; ++t) {
      double want = 0.0;
      for (int j = 1; j <= t; ++j) {
        want += (encode(x.token(j), M) + 1.0) * std::ldexp(1.0, -(d_x * M + 1) * (t - j));
      }
      EXPECT_DOUBLE_EQ(got.values(0, static_cast<std::size_t>(t - 1)), want);
    }
  }

  EXPECT_THROW(encode_sequence(Seq(2, 3), 10), BudgetError);  // 63 bits
}

TEST(EncoderCell, CodeSetsForDistinctTokensAreDisjoint) {
  auto all_codes = [](int d_x, int M, int N) {
    // Every achievable code per token index, by enumerating digit strings.
    std::vector<std::set<double>> per_t(static_cast<std::size_t>(N));
    const auto tokens = grid_vectors(d_x, M);
    std::vector<double> digits;
    digits.reserve(tokens.size());
    for (const VectorD& c : tokens) digits.push_back(encode(c, M) + 1.0);
    const double a = std::ldexp(1.0, -(d_x * M + 1));
    std::vector<double> reach{0.0};
    for (int t = 1; t <= N; ++t) {
      std::vector<double> next;
      next.reserve(reach.size() * digits.size());
      for (double r : reach) {
        for (double d : digits) next.push_back(a * r + d);
      }
      per_t[static_cast<std::size_t>(t - 1)].insert(next.begin(), next.end());
      reach = std::move(next);
    }
    return per_t;
  };

  for (const auto& [d_x, M] : std::vector<std::pair<int, int>>{{1, 3}, {2, 2}}) {
    const auto per_t = all_codes(d_x, M, 3);
    double min_gap = 1.0;
    for (std::size_t s = 0; s < per_t.size(); ++s) {
      for (std::size_t t = s + 1; t < per_t.size(); ++t) {
        for (double c : per_t[s]) {
          auto it = per_t[t].lower_bound(c);
          if (it != per_t[t].end()) min_gap = std::min(min_gap, std::abs(*it - c));
          if (it != per_t[t].begin()) min_gap = std::min(min_gap, std::abs(*std::prev(it) - c));
        }
      }
    }
    EXPECT_GT(min_gap, 0.0) << "d_x=" << d_x << " M=" << M;
  }
}

TEST(PeelCode, RecoversTokenIndexAndQuantizedPrefix) {
  const int d_x = 1, M = 3, N = 3;
  std::mt19937_64 rng(7102);
  for (int trial = 0; trial < 1000; ++trial) {
    const Seq x = rand_unit_seq(rng, d_x, N);
    const Seq codes = encode_sequence(x, M);
    for (int t = 1; t <= N; ++t) {
      const CodePeel peel = peel_code(codes.values(0, static_cast<std::size_t>(t - 1)), d_x, M, N);
      ASSERT_EQ(peel.t, t);
      for (int j = 1; j <= N; ++j) {
        const double want = j <= t ? quantize(x.values(0, static_cast<std::size_t>(j - 1)), M) : 0.0;
        EXPECT_DOUBLE_EQ(peel.prefix.values(0, static_cast<std::size_t>(j - 1)), want);
      }
    }
  }

  // Two coordinates: the prefix splits back into quantized tokens.
  const Seq x2 = rand_unit_seq(rng, 2, 2);
  const Seq codes2 = encode_sequence(x2, 2);
  const CodePeel p2 = peel_code(codes2.values(0, 1), 2, 2, 2);
  EXPECT_EQ(p2.t, 2);
  for (int j = 1; j <= 2; ++j) {
    for (int i = 0; i < 2; ++i) {
      EXPECT_DOUBLE_EQ(p2.prefix.values(static_cast<std::size_t>(i), static_cast<std::size_t>(j - 1)),
                       quantize(x2.values(static_cast<std::size_t>(i), static_cast<std::size_t>(j - 1)), 2));
    }
  }

  // Codes away from every achievable value are rejected.
  EXPECT_THROW(peel_code(0.5, 1, 1, 2), DomainError);
  EXPECT_THROW(peel_code(2.5, 1, 1, 2), DomainError);
  EXPECT_THROW(peel_code(1.1, 1, 1, 2), DomainError);
}

TEST(Memorize, IdentityTargetReturnsQuantizedToken) {
  const LpPipeline pipe = make_lp_pipeline(3, 3, 2.0, 1, 1, 3, "identity");
  std::mt19937_64 rng(7103);
  for (int trial = 0; trial < 100; ++trial) {
    const Seq x = rand_unit_seq(rng, 1, 3);
    const Seq codes = encode_sequence(x, 3);
    for (int t = 1; t <= 3; ++t) {
      EXPECT_DOUBLE_EQ(memorize(codes.values(0, static_cast<std::size_t>(t - 1)), pipe),
                       quantize(x.values(0, static_cast<std::size_t>(t - 1)), 3));
    }
  }

  // Zero input: the memorizer sees the zero prefix.
  const LpPipeline sine = make_lp_pipeline(3, 3, 2.0, 1, 1, 2, "sin-sum");
  const Seq codes = encode_sequence(Seq(1, 2), 3);
  EXPECT_DOUBLE_EQ(memorize(codes.values(0, 0), sine), 0.5);  // sin(0) folded to 1/2
  EXPECT_DOUBLE_EQ(memorize(codes.values(0, 1), sine), 0.5);
}

TEST(ProjectClip, PiecewiseCasesAndTaperMidpoint) {
  EXPECT_DOUBLE_EQ(project_clip(0.3, 1.0, 0.5), 0.3);
  EXPECT_DOUBLE_EQ(project_clip(-1.0, 1.0, 0.5), -1.0);
  EXPECT_DOUBLE_EQ(project_clip(1.0, 1.0, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(project_clip(1.5, 1.0, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(project_clip(2.0, 1.0, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(project_clip(-1.5, 1.0, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(project_clip(1.25, 1.0, 0.5), 0.5);    // L + delta/2 maps to L/2
  EXPECT_DOUBLE_EQ(project_clip(-1.25, 1.0, 0.5), -0.5);  // odd symmetry
  EXPECT_THROW(project_clip(0.5, 0.0, 0.5), ValidationError);
  EXPECT_THROW(project_clip(0.5, 1.0, 0.0), ValidationError);
}

TEST(RunPipeline, ZeroAndIdentityTargets) {
  std::mt19937_64 rng(7104);
  const LpPipeline zero = make_lp_pipeline(3, 3, 2.0, 1, 1, 2, "zero");
  const Seq x = rand_unit_seq(rng, 1, 2);
  const LpRunReport rz = run_pipeline(zero, x);
  EXPECT_DOUBLE_EQ(rz.output.values(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(rz.output.values(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(rz.sup_deviation, 0.0);
  EXPECT_EQ(rz.width_ledger, 2);  // relu: max{d_x+1, d_y}

  const LpPipeline ident = make_lp_pipeline(4, 4, 2.0, 1, 1, 2, "identity");
  for (int trial = 0; trial < 50; ++trial) {
    const Seq xi = rand_unit_seq(rng, 1, 2);
    const LpRunReport ri = run_pipeline(ident, xi);
    for (int t = 1; t <= 2; ++t) {
      EXPECT_DOUBLE_EQ(ri.output.values(0, static_cast<std::size_t>(t - 1)),
                       quantize(xi.values(0, static_cast<std::size_t>(t - 1)), 4));
    }
    EXPECT_LE(ri.sup_deviation, std::ldexp(1.0, -4));
  }

  EXPECT_EQ(lp_width_ledger(1, 1, tanh_profile()), 3);
  EXPECT_EQ(lp_width_ledger(1, 1, logistic_sigmoid_profile()), 3);
  EXPECT_EQ(lp_width_ledger(2, 4, relu_profile()), 4);  // wide outputs dominate
}

TEST(RunPipeline, SquareDeviationBoundAndHalving) {
  // Per-precision sup deviation over a 200-point grid of constant sequences;
  // the target is token-wise so constants cover every per-token value.
  std::vector<double> dev;
  for (int M : {3, 4, 5, 6}) {
    const LpPipeline pipe = make_lp_pipeline(M, M, 2.0, 1, 1, 2, "square");
    double worst = 0.0;
    for (int j = 0; j < 200; ++j) {
      const double v = static_cast<double>(j) / 199.0;
      Seq x(1, 2);
      x.values(0, 0) = v;
      x.values(0, 1) = v;
      worst = std::max(worst, run_pipeline(pipe, x).sup_deviation);
    }
    // Lipschitz bound: 2 * 2^-M for input quantization plus 2^-M' decoding.
    EXPECT_LE(worst, std::ldexp(2.0, -M) + std::ldexp(1.0, -M));
    dev.push_back(worst);
  }
  for (std::size_t k = 1; k < dev.size(); ++k) {
    const double ratio = dev[k] / dev[k - 1];
    EXPECT_GE(ratio, 0.4) << "step " << k;
    EXPECT_LE(ratio, 0.6) << "step " << k;
  }
}

TEST(RunPipeline, SinSumTargetIsPastDependent) {
  const LpPipeline pipe = make_lp_pipeline(5, 5, 2.0, 1, 1, 2, "sin-sum");
  std::mt19937_64 rng(7105);
  for (int trial = 0; trial < 50; ++trial) {
    const Seq x = rand_unit_seq(rng, 1, 2);
    // Derivative of the folded sine is at most 1/2 per coordinate.
    EXPECT_LE(run_pipeline(pipe, x).sup_deviation,
              0.5 * 2.0 * std::ldexp(1.0, -5) + std::ldexp(1.0, -5) + 1e-12);
  }

  // Same second token, different first token: the second output differs.
  Seq p(1, 2), q(1, 2);
  p.values(0, 0) = 0.125;
  q.values(0, 0) = 0.875;
  p.values(0, 1) = q.values(0, 1) = 0.5;
  const double yp = run_pipeline(pipe, p).output.values(0, 1);
  const double yq = run_pipeline(pipe, q).output.values(0, 1);
  EXPECT_NE(yp, yq);
}

TEST(QuantizerMlp, StaircaseMatchesEncoderOffTheMargins) {
  // One bit, one coordinate: a single step at 1/2.
  const Network step = build_quantizer_mlp(1, 1, 0.125);
  EXPECT_EQ(width(step), 2);
  EXPECT_EQ(step.cells.size(), 3u);
  auto eval1 = [](const Network& net, const VectorD& x) {
    Seq s(static_cast<int>(x.size()), 1);
    s.set_token(1, x);
    return eval_network(net, s).values(0, 0);
  };
  EXPECT_DOUBLE_EQ(eval1(step, {0.25}), 0.0);
  EXPECT_DOUBLE_EQ(eval1(step, {0.75}), 0.5);
  EXPECT_DOUBLE_EQ(eval1(step, {0.5}), 0.5);  // breakpoints themselves are exact

  // Exact on every grid point with a dyadic margin.
  for (const auto& [d_x, M] : std::vector<std::pair<int, int>>{{1, 3}, {2, 2}}) {
    const double kappa = std::ldexp(1.0, -M - 2);
    const Network net = build_quantizer_mlp(d_x, M, kappa);
    EXPECT_EQ(width(net), d_x + 1);
    EXPECT_EQ(net.cells.size(), static_cast<std::size_t>(d_x * (2 * ((1 << M) - 1) + 1)));
    for (const Cell& c : net.cells) EXPECT_TRUE(std::get<RnnCell>(c).is_plain());
    for (const VectorD& c : grid_vectors(d_x, M)) {
      EXPECT_DOUBLE_EQ(eval1(net, c), encode(c, M));
    }

    // Exact away from the margins; within one step per coordinate inside.
    std::mt19937_64 rng(7106);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    const double bound = d_x == 1 ? std::ldexp(1.0, -M) : std::ldexp(2.0, -M);
    for (int trial = 0; trial < 400; ++trial) {
      VectorD x(static_cast<std::size_t>(d_x));
      bool off_margin = true;
      for (double& v : x) {
        v = dist(rng);
        const double scaled = std::ldexp(v, M);
        const double up = std::ceil(scaled);
        if (up - scaled < std::ldexp(kappa, M) && up > scaled) off_margin = false;
      }
      const double err = std::abs(eval1(net, x) - encode(x, M));
      if (off_margin) {
        EXPECT_LE(err, 1e-12);
      } else {
        EXPECT_LE(err, bound + 1e-12);
      }
    }
  }

  EXPECT_THROW(build_quantizer_mlp(1, 2, 0.0), ValidationError);
  EXPECT_THROW(build_quantizer_mlp(1, 2, 0.125), ValidationError);  // 2^-(M+1) excluded
  EXPECT_THROW(build_quantizer_mlp(1, 2, 0.5), ValidationError);
  EXPECT_THROW(build_quantizer_mlp(1, 2, 0.01, tanh_profile()), ValidationError);
  EXPECT_THROW(build_quantizer_mlp(1, 13, 1e-6), BudgetError);
}

TEST(Pipeline, ContractViolations) {
  EXPECT_THROW(make_lp_pipeline(0, 3, 2.0, 1, 1, 2, "zero"), ValidationError);
  EXPECT_THROW(make_lp_pipeline(3, 3, 0.5, 1, 1, 2, "zero"), ValidationError);
  EXPECT_THROW(make_lp_pipeline(3, 3, 2.0, 1, 1, 2, "cube"), ValidationError);
  EXPECT_THROW(make_lp_pipeline(3, 3, 2.0, 2, 1, 2, "identity"), ValidationError);
  EXPECT_THROW(make_lp_pipeline(3, 3, 2.0, 1, 2, 2, "sin-sum"), ValidationError);
  EXPECT_THROW(make_lp_pipeline(10, 3, 2.0, 2, 1, 3, "zero"), BudgetError);
  EXPECT_THROW(make_lp_pipeline(3, 6, 2.0, 1, 9, 2, "zero"), BudgetError);
  EXPECT_THROW(make_lp_pipeline(3, 3, 2.0, 1, 1, 2, "zero", 0.0), ValidationError);

  const LpPipeline pipe = make_lp_pipeline(3, 3, 2.0, 1, 1, 2, "zero");
  EXPECT_THROW(run_pipeline(pipe, Seq(2, 2)), ValidationError);
  EXPECT_THROW(run_pipeline(pipe, Seq(1, 3)), ValidationError);
  Seq bad(1, 2);
  bad.values(0, 0) = 1.5;
  EXPECT_THROW(run_pipeline(pipe, bad), DomainError);
}

}  // namespace
