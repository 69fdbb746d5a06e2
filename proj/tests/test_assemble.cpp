// End-to-end sequence-to-vector and sequence-to-sequence builds: accuracy
// against the two-layer target, exact width accounting per activation, the
// degenerate cases, and stage-named tolerance failures.

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "seqnet/assemble.hpp"
#include "seqnet/construct.hpp"
#include "seqnet/network.hpp"

using namespace seqnet;

namespace {

Seq box_seq(std::mt19937_64& rng, const DomainBox& K, int n) {
  Seq s(K.dim(), n);
  for (int t = 1; t <= n; ++t) {
    VectorD v(static_cast<std::size_t>(K.dim()));
    for (int i = 0; i < K.dim(); ++i) {
      std::uniform_real_distribution<double> dist(K.lo[static_cast<std::size_t>(i)],
                                                  K.hi[static_cast<std::size_t>(i)]);
      v[static_cast<std::size_t>(i)] = dist(rng);
    }
    s.set_token(t, v);
  }
  return s;
}

std::vector<Seq> probe_seqs(const DomainBox& K, int n, int samples, unsigned seed) {
  std::vector<Seq> out;
  Seq lo(K.dim(), n), hi(K.dim(), n);
  for (int t = 1; t <= n; ++t) {
    lo.set_token(t, K.lo);
    hi.set_token(t, K.hi);
  }
  out.push_back(lo);
  out.push_back(hi);
  std::mt19937_64 rng(seed);
  for (int s = 0; s < samples; ++s) out.push_back(box_seq(rng, K, n));
  return out;
}

double probe_final_token_error(const Network& net, const TwoLayerSurrogate& s,
                               const std::vector<Seq>& probes) {
  double worst = 0.0;
  for (const Seq& x : probes) {
    const VectorD got = eval_network_last(net, x);
    const VectorD want = surrogate_value(s, x, x.length());
    for (std::size_t i = 0; i < want.size(); ++i) {
      worst = std::max(worst, std::abs(got[i] - want[i]));
    }
  }
  return worst;
}

double probe_every_token_error(const Network& net, const TwoLayerSurrogate& s,
                               const std::vector<Seq>& probes) {
  double worst = 0.0;
  for (const Seq& x : probes) {
    const Seq got = eval_network(net, x);
    const Seq want = surrogate_seq(s, x);
    EXPECT_EQ(got.dim(), want.dim());
    for (std::size_t i = 0; i < want.values.rows(); ++i) {
      for (std::size_t t = 0; t < want.values.cols(); ++t) {
        worst = std::max(worst, std::abs(got.values(i, t) - want.values(i, t)));
      }
    }
  }
  return worst;
}

void expect_all_plain(const Network& net) {
  for (const Cell& c : net.cells) {
    ASSERT_TRUE(std::holds_alternative<RnnCell>(c));
    EXPECT_TRUE(std::get<RnnCell>(c).is_plain());
  }
}

TwoLayerSurrogate random_surrogate(std::mt19937_64& rng, int d_x, int d_y, int n, int units,
                                   const ActivationProfile& act, double mag = 1.0) {
  std::uniform_real_distribution<double> dist(-mag, mag);
  TwoLayerSurrogate s;
  s.d_x = d_x;
  s.d_y = d_y;
  s.N = n;
  s.units = units;
  s.act = act;
  for (int t = 1; t <= n; ++t) {
    MatrixD w(d_y, units);
    for (int r = 0; r < d_y; ++r) {
      for (int i = 0; i < units; ++i) w(r, i) = dist(rng);
    }
    s.weights.push_back(std::move(w));
    std::vector<MatrixD> feats;
    for (int i = 0; i < units; ++i) {
      MatrixD f(t, d_x);
      for (int j = 0; j < t; ++j) {
        for (int c = 0; c < d_x; ++c) f(j, c) = dist(rng);
      }
      feats.push_back(std::move(f));
    }
    s.features.push_back(std::move(feats));
  }
  return s;
}

TEST(SeqToVec, ReluExactAtStatedWidth) {
  std::mt19937_64 rng(6701);
  const int d_x = 1, d_y = 1, n = 3;
  const auto s = random_surrogate(rng, d_x, d_y, n, 3, relu_profile());
  const DomainBox K = DomainBox::unit(d_x);

  const SeqToVecBuild b = build_seq_to_vec(s, K, 1e-6);
  EXPECT_EQ(width(b.net), d_x + d_y + 1);  // beta(relu) = 0
  EXPECT_EQ(b.delta_used, 0.0);
  EXPECT_LE(b.achieved_error, 1e-9);
  expect_all_plain(b.net);
  EXPECT_LE(probe_final_token_error(b.net, s, probe_seqs(K, n, 48, 6702)), 1e-9);
}

TEST(SeqToVec, TanhMeetsToleranceAtFixedScale) {
  std::mt19937_64 rng(6703);
  const int d_x = 1, d_y = 1, n = 2;
  const auto s = random_surrogate(rng, d_x, d_y, n, 3, tanh_profile());
  const DomainBox K = DomainBox::unit(d_x);

  AssembleOptions opts;
  opts.fixed_delta = 1e-4;
  const SeqToVecBuild b = build_seq_to_vec(s, K, 1e-3, opts);
  EXPECT_EQ(width(b.net), d_x + d_y + 1);  // beta(tanh) = 0
  EXPECT_EQ(b.delta_used, 1e-4);
  EXPECT_LE(b.achieved_error, 1e-3);
  // Independent probes, modest slack over the certification sample.
  EXPECT_LE(probe_final_token_error(b.net, s, probe_seqs(K, n, 48, 6704)), 3e-3);
}

TEST(SeqToVec, LogisticConstantTargetWithinToleranceWithCarrierRow) {
  const int d_x = 1, d_y = 1, n = 2;
  TwoLayerSurrogate s;
  s.d_x = d_x;
  s.d_y = d_y;
  s.N = n;
  s.units = 1;
  s.act = logistic_sigmoid_profile();
  for (int t = 1; t <= n; ++t) {
    MatrixD w(d_y, 1);
    w(0, 0) = 0.8;
    s.weights.push_back(std::move(w));
    s.features.push_back({MatrixD(t, d_x)});  // zero features: constant target
  }
  const DomainBox K = DomainBox::unit(d_x);

  const SeqToVecBuild b = build_seq_to_vec(s, K, 1e-6);
  EXPECT_EQ(width(b.net), d_x + d_y + 2);  // beta(logistic) = 1
  EXPECT_LE(b.achieved_error, 1e-6);
  const auto probes = probe_seqs(K, n, 24, 6705);
  for (const Seq& x : probes) {
    const VectorD got = eval_network_last(b.net, x);
    // Constant target w * sigma(0); the rewrite stops at the first encoding
    // scale inside tolerance, so the residue is bounded by eps, not zero.
    EXPECT_NEAR(got[0], 0.8 * 0.5, 1e-6);
  }
}

TEST(SeqToSeq, ReluMatchesSurrogateAtStatedWidth) {
  std::mt19937_64 rng(6706);
  const int d_x = 1, d_y = 1, n = 3;
  const auto s = random_surrogate(rng, d_x, d_y, n, 2, relu_profile());
  const DomainBox K = DomainBox::unit(d_x);

  const SeqToSeqBuild b = build_seq_to_seq(s, K, 1e-6);
  EXPECT_EQ(width(b.net), d_x + d_y + 3);  // alpha(relu) = 0, padded up one row
  EXPECT_EQ(b.delta_used, 0.0);
  EXPECT_GT(b.eta_used, 0.0);
  EXPECT_LE(b.achieved_error, 1e-6);
  expect_all_plain(b.net);
  EXPECT_LE(probe_every_token_error(b.net, s, probe_seqs(K, n, 48, 6707)), 1e-6);
}

TEST(SeqToSeq, TanhMeetsToleranceAtStatedWidth) {
  std::mt19937_64 rng(6708);
  const int d_x = 1, d_y = 1, n = 2;
  const auto s = random_surrogate(rng, d_x, d_y, n, 2, tanh_profile());
  const DomainBox K = DomainBox::unit(d_x);

  const SeqToSeqBuild b = build_seq_to_seq(s, K, 1e-3);
  EXPECT_EQ(width(b.net), d_x + d_y + 3);  // alpha(tanh) = 0, no padding needed
  EXPECT_LE(b.achieved_error, 1e-3);
  EXPECT_GT(b.delta_used, 0.0);
  expect_all_plain(b.net);
  EXPECT_LE(probe_every_token_error(b.net, s, probe_seqs(K, n, 48, 6709)), 3e-3);
}

TEST(SeqToSeq, LogisticWidthGainsTheCarrierRow) {
  std::mt19937_64 rng(6710);
  const int d_x = 1, d_y = 1, n = 2;
  const auto s = random_surrogate(rng, d_x, d_y, n, 1, logistic_sigmoid_profile(), 0.5);
  const DomainBox K = DomainBox::unit(d_x);

  const SeqToSeqBuild b = build_seq_to_seq(s, K, 0.5);
  EXPECT_EQ(width(b.net), d_x + d_y + 4);  // alpha(logistic) = 1
  expect_all_plain(b.net);
}

TEST(SeqToSeq, SingleTokenDegeneratesToTokenwiseMap) {
  std::mt19937_64 rng(6711);
  const int d_x = 2, d_y = 1;
  const auto s = random_surrogate(rng, d_x, d_y, 1, 2, relu_profile());
  const DomainBox K = DomainBox::unit(d_x);

  const SeqToSeqBuild b = build_seq_to_seq(s, K, 1e-6);
  EXPECT_EQ(width(b.net), d_x + d_y + 3);
  EXPECT_LE(probe_every_token_error(b.net, s, probe_seqs(K, 1, 48, 6712)), 1e-9);
}

TEST(Assemble, ToleranceFailuresNameTheStage) {
  std::mt19937_64 rng(6713);
  const int d_x = 1, d_y = 1, n = 2;
  const auto s = random_surrogate(rng, d_x, d_y, n, 2, tanh_profile());
  const DomainBox K = DomainBox::unit(d_x);

  // Impossible overall tolerance: the conversion stage gives up first.
  try {
    build_seq_to_seq(s, K, 1e-13);
    FAIL() << "expected a tolerance error from the conversion stage";
  } catch (const ToleranceError& e) {
    EXPECT_NE(std::string(e.what()).find("conversion"), std::string::npos);
  }

  // Conversion can pass at 1e-3 but a deliberately coarse single-rung
  // encoding ladder cannot: the rewrite stage reports.
  AssembleOptions coarse;
  coarse.fixed_delta = 0.5;
  try {
    build_seq_to_seq(s, K, 2e-3, coarse);
    FAIL() << "expected a tolerance error from the rewrite stage";
  } catch (const ToleranceError& e) {
    EXPECT_NE(std::string(e.what()).find("rewrite"), std::string::npos);
  }
}

TEST(Assemble, ContractViolations) {
  std::mt19937_64 rng(6714);
  const auto s = random_surrogate(rng, 1, 1, 2, 2, tanh_profile());
  const DomainBox K = DomainBox::unit(1);

  EXPECT_THROW(build_seq_to_vec(s, K, 0.0), ValidationError);
  EXPECT_THROW(build_seq_to_seq(s, K, -1.0), ValidationError);
  EXPECT_THROW(build_seq_to_vec(s, DomainBox::unit(2), 1e-3), ValidationError);
  EXPECT_THROW(build_seq_to_seq(s, DomainBox::unit(2), 1e-3), ValidationError);

  AssembleOptions bad;
  bad.delta_ladder.clear();
  EXPECT_THROW(build_seq_to_vec(s, K, 1e-3, bad), ValidationError);
  bad.fixed_delta = -1.0;
  EXPECT_THROW(build_seq_to_vec(s, K, 1e-3, bad), ValidationError);
}

}  // namespace
