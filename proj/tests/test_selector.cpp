// Box-selector block: per-box affine read-out with staircase correction.
// ReLU selectors must be exact on the boxes; saturating ones must converge
// as the sharpness knob shrinks.

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "seqnet/selector.hpp"
#include "oracles.hpp"

using namespace seqnet;

namespace {

// Direct value the selector must realize inside box t (1-based).
double direct_value(const MatrixD& slope, const VectorD& offset, int t, const VectorD& v,
                    double box_origin) {
  double g = offset.empty() ? 0.0 : offset[static_cast<std::size_t>(t - 1)];
  for (int i = 0; i < slope.cols(); ++i) {
    g += slope(t - 1, i) * (v[static_cast<std::size_t>(i)] - box_origin);
  }
  return g;
}

// Runs the selector network over a batch of probes (token-wise cells, so one
// long sequence evaluates every probe independently).
MatrixD run_selector(const Network& net, const std::vector<VectorD>& probes) {
  const int d = static_cast<int>(probes[0].size());
  Seq in(d, static_cast<int>(probes.size()));
  for (std::size_t k = 0; k < probes.size(); ++k) {
    in.set_token(static_cast<int>(k) + 1, probes[k]);
  }
  Seq out = eval_network(net, in);
  return out.values;
}

std::vector<VectorD> random_box_probes(std::mt19937& rng, int d, int boxes, int per_box) {
  std::uniform_real_distribution<double> unit(0.0, 0.5);
  std::vector<VectorD> probes;
  for (int t = 1; t <= boxes; ++t) {
    for (int k = 0; k < per_box; ++k) {
      VectorD v(static_cast<std::size_t>(d));
      for (int i = 0; i < d; ++i) v[static_cast<std::size_t>(i)] = t + unit(rng);
      probes.push_back(std::move(v));
    }
  }
  return probes;
}

double selector_sup_error(const Network& net, const MatrixD& slope, const VectorD& offset,
                          const std::vector<VectorD>& probes, int per_box) {
  MatrixD out = run_selector(net, probes);
  const int d = slope.cols();
  double worst = 0.0;
  for (std::size_t k = 0; k < probes.size(); ++k) {
    const int t = static_cast<int>(k) / per_box + 1;
    const double want = direct_value(slope, offset, t, probes[k], static_cast<double>(t));
    worst = std::max(worst, std::abs(out(d, static_cast<int>(k)) - want));
  }
  return worst;
}

}  // namespace

TEST(SelectorMlp, FrozenTwoBoxReluValues) {
  SelectorSpec spec;
  spec.slope = MatrixD{{2.0}, {-1.0}};
  spec.boxes = 2;
  spec.eta = 0.2;
  Network net = build_selector_mlp(spec, relu_profile());

  MatrixD out = run_selector(net, {{1.3}, {2.2}, {1.0}, {2.0}});
  EXPECT_NEAR(out(1, 0), 0.6, 1e-12);   // box 1: 2*(1.3-1)
  EXPECT_NEAR(out(1, 1), -0.2, 1e-12);  // box 2: -1*(2.2-2)
  EXPECT_NEAR(out(1, 2), 0.0, 1e-12);   // lower corners map to zero
  EXPECT_NEAR(out(1, 3), 0.0, 1e-12);
  // Probe coordinates pass through untouched.
  EXPECT_EQ(out(0, 0), 1.3);
  EXPECT_EQ(out(0, 1), 2.2);
}

TEST(SelectorMlp, ReluExactOnBoxGrids) {
  std::mt19937 rng(404);
  std::uniform_real_distribution<double> coef(-3.0, 3.0);
  const int d = 2, boxes = 4, per_box = 50;

  SelectorSpec spec;
  spec.slope = MatrixD(boxes, d);
  spec.offset.assign(boxes, 0.0);
  for (int t = 0; t < boxes; ++t) {
    for (int i = 0; i < d; ++i) spec.slope(t, i) = coef(rng);
    spec.offset[static_cast<std::size_t>(t)] = coef(rng);
  }
  spec.boxes = boxes;

  for (double eta : {0.25, 0.1, 0.01}) {
    spec.eta = eta;
    Network net = build_selector_mlp(spec, relu_profile());
    auto probes = random_box_probes(rng, d, boxes, per_box);
    EXPECT_LE(selector_sup_error(net, spec.slope, spec.offset, probes, per_box), 1e-12)
        << "eta=" << eta;
  }
}

TEST(SelectorMlp, TanhErrorDecreasesWithSharpness) {
  SelectorSpec spec;
  spec.slope = MatrixD{{2.0}, {-1.0}, {0.5}};
  spec.offset = {0.3, -0.7, 1.1};
  spec.boxes = 3;

  std::mt19937 rng(405);
  auto probes = random_box_probes(rng, 1, 3, 67);
  double prev = 0.0;
  int step = 0;
  for (double eta : {1e-1, 1e-2, 1e-3}) {
    spec.eta = eta;
    Network net = build_selector_mlp(spec, tanh_profile());
    double err = selector_sup_error(net, spec.slope, spec.offset, probes, 67);
    if (step > 0) EXPECT_LT(err, prev) << "eta=" << eta;
    prev = err;
    ++step;
  }
  EXPECT_LE(prev, 1e-5);  // measured 1.5e-6 at eta=1e-3; headroom for grid choice
}

TEST(SelectorMlp, LogisticSigmoidConverges) {
  SelectorSpec spec;
  spec.slope = MatrixD{{1.5}, {-0.8}};
  spec.offset = {0.2, 0.9};
  spec.boxes = 2;

  std::mt19937 rng(406);
  auto probes = random_box_probes(rng, 1, 2, 53);
  double coarse = 0.0, fine = 0.0;
  spec.eta = 1e-1;
  coarse = selector_sup_error(build_selector_mlp(spec, logistic_sigmoid_profile()), spec.slope,
                              spec.offset, probes, 53);
  spec.eta = 1e-4;
  fine = selector_sup_error(build_selector_mlp(spec, logistic_sigmoid_profile()), spec.slope,
                            spec.offset, probes, 53);
  EXPECT_LT(fine, coarse);
  EXPECT_LE(fine, 1e-7);  // measured 2.6e-9 at eta=1e-4
}

TEST(SelectorMlp, WidthAndShape) {
  SelectorSpec spec;
  spec.slope = MatrixD{{1.0, 0.0, 2.0}, {0.0, -1.0, 1.0}};
  spec.boxes = 2;
  spec.eta = 0.1;
  Network net = build_selector_mlp(spec, relu_profile());
  EXPECT_EQ(width(net), 5);  // d_x + 2
  EXPECT_EQ(net.proj.rows(), 4);
  // Zero-slope coordinates contribute no clamp units: two nonzero coordinates
  // per box give 4 ReLU units each, the single box border adds a step pair,
  // and the trailing affine cell closes the block.
  EXPECT_EQ(net.cells.size(), 4u + 4u + 2u + 1u);
}

TEST(SelectorPlanApi, SharedUnitsServeMultipleOutputs) {
  BoxGeometry geom;
  geom.count = 3;
  MatrixD s0{{1.0}, {2.0}, {-1.0}};
  MatrixD s1{{0.5}, {-0.5}, {3.0}};
  MatrixD offs(2, 3);
  offs(0, 0) = 0.1;
  offs(1, 2) = -2.0;

  SelectorPlan plan = plan_box_selector({s0, s1}, offs, geom, 0.2, relu_profile());
  // Clamps: 2 units per box (both outputs share them); stairs: 2 per border.
  EXPECT_EQ(plan.units.size(), 3u * 2u + 2u * 2u);
  EXPECT_EQ(plan.outputs, 2);

  std::mt19937 rng(407);
  std::uniform_real_distribution<double> unit(0.0, 0.5);
  for (int t = 1; t <= 3; ++t) {
    for (int k = 0; k < 25; ++k) {
      VectorD v{t + unit(rng)};
      VectorD got = eval_selector_plan(plan, relu_profile(), v);
      EXPECT_NEAR(got[0], s0(t - 1, 0) * (v[0] - t) + offs(0, t - 1), 1e-12);
      EXPECT_NEAR(got[1], s1(t - 1, 0) * (v[0] - t) + offs(1, t - 1), 1e-12);
    }
  }
}

TEST(SelectorPlanApi, CustomGeometryRelu) {
  // Off-grid geometry as used by merge-stage value selectors.
  BoxGeometry geom;
  geom.origin0 = 3.2;
  geom.spacing = 2.0;
  geom.width = 0.7;
  geom.count = 3;
  MatrixD slope{{1.0}, {-2.0}, {0.25}};
  MatrixD offs(1, 3);
  offs(0, 0) = 1.0;
  offs(0, 1) = -1.0;
  offs(0, 2) = 0.5;

  SelectorPlan plan = plan_box_selector({slope}, offs, geom, 0.3, relu_profile());
  std::mt19937 rng(408);
  std::uniform_real_distribution<double> in_box(0.0, 0.7);
  for (int t = 1; t <= 3; ++t) {
    const double o = geom.origin(t);
    for (int k = 0; k < 40; ++k) {
      VectorD v{o + in_box(rng)};
      VectorD got = eval_selector_plan(plan, relu_profile(), v);
      EXPECT_NEAR(got[0], slope(t - 1, 0) * (v[0] - o) + offs(0, t - 1), 1e-12);
    }
  }
}

TEST(SelectorPlanApi, CustomSaturatingActivationSupported) {
  // Composed squashing function with known limits; used by the gated-cell
  // reduction pipeline.
  auto phi = register_custom_activation(
      "half-tanh-composed", [](double z) { return 0.5 * std::tanh(0.5 * std::tanh(z)); }, 0.0, 0.0,
      0.25, -0.5 * std::tanh(0.5), 0.5 * std::tanh(0.5));

  BoxGeometry geom;
  geom.count = 2;
  MatrixD slope{{1.0}, {-1.0}};
  MatrixD offs(1, 2);
  SelectorPlan coarse = plan_box_selector({slope}, offs, geom, 1e-2, phi);
  SelectorPlan fine = plan_box_selector({slope}, offs, geom, 1e-4, phi);

  auto sup_err = [&](const SelectorPlan& plan) {
    std::mt19937 rng(409);
    std::uniform_real_distribution<double> unit(0.0, 0.5);
    double worst = 0.0;
    for (int t = 1; t <= 2; ++t) {
      for (int k = 0; k < 50; ++k) {
        VectorD v{t + unit(rng)};
        double want = slope(t - 1, 0) * (v[0] - t);
        worst = std::max(worst, std::abs(eval_selector_plan(plan, phi, v)[0] - want));
      }
    }
    return worst;
  };
  EXPECT_LT(sup_err(fine), sup_err(coarse));
  EXPECT_LE(sup_err(fine), 1e-5);
}

TEST(SelectorErrors, ContractViolations) {
  SelectorSpec spec;
  spec.slope = MatrixD{{1.0}};
  spec.boxes = 1;

  spec.eta = 0.3;  // gap is 1/2, so eta must stay <= 1/4
  EXPECT_THROW(build_selector_mlp(spec, relu_profile()), ValidationError);

  spec.eta = 0.0;
  EXPECT_THROW(build_selector_mlp(spec, relu_profile()), ValidationError);

  spec.eta = 0.1;
  spec.slope = MatrixD{{1.0}, {2.0}};  // two rows but one box
  EXPECT_THROW(build_selector_mlp(spec, relu_profile()), ValidationError);

  spec.slope = MatrixD{{1.0}};
  spec.offset = {0.0, 0.0};
  EXPECT_THROW(build_selector_mlp(spec, relu_profile()), ValidationError);

  spec.offset.clear();
  auto bare = register_custom_activation(
      "no-limits", [](double z) { return z / (1.0 + std::abs(z)); }, 0.0, 0.0, 1.0);
  EXPECT_THROW(build_selector_mlp(spec, bare), DomainError);

  spec.domain = DomainBox{{0.0}, {0.8}};  // exceeds the normalized half-box
  EXPECT_THROW(build_selector_mlp(spec, relu_profile()), ValidationError);
}
