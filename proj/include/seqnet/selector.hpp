#pragma once

// Box selector: a token-wise feed-forward block that reads probe points lying
// in a train of disjoint boxes and emits, inside box t, a different affine
// function of the probe.  This is the primitive that lets a time-invariant
// cell apply time-varying weights: the boxes index time.
//
// Geometry: every probe coordinate carries the same train of `count` boxes,
// box t spanning [origin(t), origin(t)+width] with origin(t) = origin0 +
// (t-1)*spacing and gap = spacing - width > 0 between consecutive boxes.
//
// Construction: per coordinate and box, a saturating ramp (clamp) realized as
// activation units; a staircase on one designated coordinate then cancels the
// saturated mass accumulated from earlier boxes and injects the per-box
// constants.  With ReLU the ramps and steps fit strictly inside the gaps, so
// the block is exact on the union of boxes.  With a saturating sigma the
// clamp is a stack of m = ceil(1/sqrt(eta)) scaled sigma steps whose ramp is
// extended half a gap beyond both box corners; all residual error terms decay
// near-exponentially in m, so the error vanishes as eta -> 0.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "seqnet/activation.hpp"
#include "seqnet/construct.hpp"
#include "seqnet/errors.hpp"
#include "seqnet/matrix.hpp"
#include "seqnet/network.hpp"

namespace seqnet {

struct BoxGeometry {
  double origin0 = 1.0;  // lower corner of box 1 along every probe coordinate
  double spacing = 1.0;  // origin(t+1) - origin(t)
  double width = 0.5;    // box side length
  int count = 0;         // number of boxes

  double gap() const { return spacing - width; }
  double origin(int t) const { return origin0 + static_cast<double>(t - 1) * spacing; }

  void validate() const {
    if (count < 1) throw ValidationError("box geometry needs at least one box");
    if (!(width > 0.0)) throw ValidationError("box geometry needs positive width");
    if (!(spacing > width)) {
      throw ValidationError("box geometry needs spacing > width so boxes are disjoint");
    }
  }
};

// One activation unit of a selector: contributes out_coefs[r] * sigma(pre)
// to output r, where pre = weight * v[coord] + bias.
struct SelectorUnit {
  int coord = 0;
  double weight = 0.0;
  double bias = 0.0;
  VectorD out_coefs;
};

// A selector as data: units plus a per-output affine constant.  The plan is
// cell-layout agnostic; build_selector_mlp wraps it as a network and the
// time-varying-to-static conversion splices it into recurrent state.
struct SelectorPlan {
  std::vector<SelectorUnit> units;
  VectorD constants;
  int probe_dim = 0;
  int outputs = 0;
  BoxGeometry geom;
};

namespace detail {

// Limits of the activation, normalized so tails can be rescaled to [0,1].
struct SigmaRange {
  double lo = 0.0, hi = 1.0;
};

inline SigmaRange sigma_range_for_selector(const ActivationProfile& act) {
  if (!act.has_saturation()) {
    throw DomainError("selector requires ReLU or a saturating activation with known limits; '" +
                      act.name + "' has none");
  }
  return SigmaRange{act.sat_lo, act.sat_hi};
}

}  // namespace detail

// Plans a selector computing, for probes v inside box t (componentwise),
//   output r = slopes[r].row(t-1) . (v - origin(t)*1) + offsets(r, t-1).
// `slopes[r]` is count x probe_dim; `offsets` is outputs x count.  The
// staircase that cancels saturated mass reads probe coordinate `stair_coord`.
// `eta` is the sharpness knob; it must not exceed half the inter-box gap so
// transition bands stay inside the gaps.
inline SelectorPlan plan_box_selector(const std::vector<MatrixD>& slopes, const MatrixD& offsets,
                                      const BoxGeometry& geom, double eta,
                                      const ActivationProfile& act, int stair_coord = 0) {
  geom.validate();
  const int outputs = static_cast<int>(slopes.size());
  if (outputs == 0) throw ValidationError("selector needs at least one output");
  const int probe_dim = slopes[0].cols();
  for (const auto& s : slopes) {
    if (s.rows() != geom.count || s.cols() != probe_dim) {
      throw ValidationError("selector slope matrix must be count x probe_dim for every output");
    }
  }
  if (offsets.rows() != outputs || offsets.cols() != geom.count) {
    throw ValidationError("selector offsets must be outputs x count");
  }
  if (stair_coord < 0 || stair_coord >= probe_dim) {
    throw ValidationError("selector staircase coordinate out of range");
  }
  if (!(eta > 0.0)) throw ValidationError("selector sharpness must be positive");
  const double gap = geom.gap();
  if (eta > gap / 2.0 + 1e-15) {
    throw ValidationError("selector sharpness " + std::to_string(eta) +
                          " exceeds half the inter-box gap " + std::to_string(gap / 2.0) +
                          "; transition bands would leave the gaps");
  }

  SelectorPlan plan;
  plan.probe_dim = probe_dim;
  plan.outputs = outputs;
  plan.geom = geom;
  plan.constants.assign(static_cast<std::size_t>(outputs), 0.0);

  const bool relu = act.is_relu();
  const detail::SigmaRange range =
      relu ? detail::SigmaRange{0.0, 1.0} : detail::sigma_range_for_selector(act);
  const double span = range.hi - range.lo;

  // Ramp margin beyond each box corner and the resulting saturated mass per
  // unit slope.  ReLU ramps are exact and stop at the corners.
  const double margin = relu ? 0.0 : gap / 2.0;
  const double sat = geom.width + 2.0 * margin;

  auto any_nonzero = [&](int t, int i) {
    for (int r = 0; r < outputs; ++r) {
      if (slopes[static_cast<std::size_t>(r)](t - 1, i) != 0.0) return true;
    }
    return false;
  };

  // Clamp units: per box t and coordinate i carrying a nonzero slope.
  const int m_steps = relu ? 0 : std::max(2, static_cast<int>(std::ceil(1.0 / std::sqrt(eta))));
  for (int t = 1; t <= geom.count; ++t) {
    const double o = geom.origin(t);
    for (int i = 0; i < probe_dim; ++i) {
      if (!any_nonzero(t, i)) continue;
      if (relu) {
        SelectorUnit up;  // slope * relu(v - o)
        up.coord = i;
        up.weight = 1.0;
        up.bias = -o;
        up.out_coefs.assign(static_cast<std::size_t>(outputs), 0.0);
        SelectorUnit down = up;  // -slope * relu(v - o - width) caps the ramp
        down.bias = -(o + geom.width);
        for (int r = 0; r < outputs; ++r) {
          const double c = slopes[static_cast<std::size_t>(r)](t - 1, i);
          up.out_coefs[static_cast<std::size_t>(r)] = c;
          down.out_coefs[static_cast<std::size_t>(r)] = -c;
        }
        plan.units.push_back(std::move(up));
        plan.units.push_back(std::move(down));
      } else {
        const double h = sat / static_cast<double>(m_steps);
        const double s = 1.5 * h;
        for (int k = 1; k <= m_steps; ++k) {
          const double center = (o - margin) + (static_cast<double>(k) - 0.5) * h;
          SelectorUnit u;
          u.coord = i;
          u.weight = 1.0 / s;
          u.bias = -center / s;
          u.out_coefs.assign(static_cast<std::size_t>(outputs), 0.0);
          for (int r = 0; r < outputs; ++r) {
            const double c = slopes[static_cast<std::size_t>(r)](t - 1, i);
            u.out_coefs[static_cast<std::size_t>(r)] = c * h / span;
            plan.constants[static_cast<std::size_t>(r)] -= c * h * range.lo / span;
          }
          plan.units.push_back(std::move(u));
        }
      }
    }
  }

  // Per-box constants the staircase must realize: the requested offset minus
  // the ramp-start shift of the current box and the saturated mass of all
  // earlier boxes.
  std::vector<VectorD> level(static_cast<std::size_t>(geom.count),
                             VectorD(static_cast<std::size_t>(outputs), 0.0));
  for (int r = 0; r < outputs; ++r) {
    double carried = 0.0;
    for (int t = 1; t <= geom.count; ++t) {
      double row_sum = 0.0;
      for (int i = 0; i < probe_dim; ++i) row_sum += slopes[static_cast<std::size_t>(r)](t - 1, i);
      level[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(r)] =
          offsets(r, t - 1) - margin * row_sum - carried;
      carried += sat * row_sum;
    }
  }

  for (int r = 0; r < outputs; ++r) {
    plan.constants[static_cast<std::size_t>(r)] += level[0][static_cast<std::size_t>(r)];
  }
  for (int t = 2; t <= geom.count; ++t) {
    VectorD delta(static_cast<std::size_t>(outputs), 0.0);
    bool nonzero = false;
    for (int r = 0; r < outputs; ++r) {
      delta[static_cast<std::size_t>(r)] = level[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(r)] -
                                           level[static_cast<std::size_t>(t - 2)][static_cast<std::size_t>(r)];
      if (delta[static_cast<std::size_t>(r)] != 0.0) nonzero = true;
    }
    if (!nonzero) continue;
    const double threshold = geom.origin(t) - gap / 2.0;  // midway inside the gap below box t
    if (relu) {
      // step(z) = (relu(z + eta) - relu(z)) / eta: 0 below -eta, 1 above 0.
      SelectorUnit lead;
      lead.coord = stair_coord;
      lead.weight = 1.0;
      lead.bias = -(threshold - eta);
      lead.out_coefs.assign(static_cast<std::size_t>(outputs), 0.0);
      SelectorUnit trail = lead;
      trail.bias = -threshold;
      for (int r = 0; r < outputs; ++r) {
        lead.out_coefs[static_cast<std::size_t>(r)] = delta[static_cast<std::size_t>(r)] / eta;
        trail.out_coefs[static_cast<std::size_t>(r)] = -delta[static_cast<std::size_t>(r)] / eta;
      }
      plan.units.push_back(std::move(lead));
      plan.units.push_back(std::move(trail));
    } else {
      const double s = gap * std::min(1.0 / 48.0, eta / 2.0);
      SelectorUnit u;
      u.coord = stair_coord;
      u.weight = 1.0 / s;
      u.bias = -threshold / s;
      u.out_coefs.assign(static_cast<std::size_t>(outputs), 0.0);
      for (int r = 0; r < outputs; ++r) {
        u.out_coefs[static_cast<std::size_t>(r)] = delta[static_cast<std::size_t>(r)] / span;
        plan.constants[static_cast<std::size_t>(r)] -=
            delta[static_cast<std::size_t>(r)] * range.lo / span;
      }
      plan.units.push_back(std::move(u));
    }
  }
  return plan;
}

// Evaluates a plan directly (no network wrapping); used by tests and by the
// conversion builder's internal accuracy checks.
inline VectorD eval_selector_plan(const SelectorPlan& plan, const ActivationProfile& act,
                                  const VectorD& v) {
  if (static_cast<int>(v.size()) != plan.probe_dim) {
    throw ValidationError("selector probe has wrong dimension");
  }
  VectorD out = plan.constants;
  for (const auto& u : plan.units) {
    const double s = act(u.weight * v[static_cast<std::size_t>(u.coord)] + u.bias);
    for (int r = 0; r < plan.outputs; ++r) {
      out[static_cast<std::size_t>(r)] += u.out_coefs[static_cast<std::size_t>(r)] * s;
    }
  }
  return out;
}

// Specification of the canonical register selector: probes live in the boxes
// K + t*1 with K inside [0,1/2]^{d_x}, and inside box t the block must emit
// slope.row(t-1) . (v - t*1) + offset[t-1].
struct SelectorSpec {
  MatrixD slope;     // boxes x d_x
  VectorD offset;    // per-box constant; empty means all zero
  DomainBox domain;  // sub-box of [0,1/2]^{d_x} the un-shifted probes live in; empty = full
  int boxes = 0;
  double eta = 1e-3;
};

// Wraps the plan as a token-wise network of width d_x + 2 mapping each token
// v to (v; g(v)): one scratch component evaluates units in sequence, one
// accumulator collects their weighted sum, and the probe passes through.
inline Network build_selector_mlp(const SelectorSpec& spec, const ActivationProfile& act) {
  const int d = spec.slope.cols();
  if (d < 1) throw ValidationError("selector needs at least one probe coordinate");
  if (spec.boxes < 1) throw ValidationError("selector needs at least one box");
  if (spec.slope.rows() != spec.boxes) {
    throw ValidationError("selector slope must have one row per box");
  }
  VectorD offset = spec.offset;
  if (offset.empty()) offset.assign(static_cast<std::size_t>(spec.boxes), 0.0);
  if (static_cast<int>(offset.size()) != spec.boxes) {
    throw ValidationError("selector offset must have one entry per box");
  }
  if (spec.domain.dim() != 0) {
    spec.domain.validate();
    if (spec.domain.dim() != d) throw ValidationError("selector domain dimension mismatch");
    for (int i = 0; i < d; ++i) {
      if (spec.domain.lo[static_cast<std::size_t>(i)] < 0.0 ||
          spec.domain.hi[static_cast<std::size_t>(i)] > 0.5) {
        throw ValidationError("selector domain must lie inside [0, 1/2] per coordinate");
      }
    }
  }

  BoxGeometry geom;
  geom.origin0 = 1.0;
  geom.spacing = 1.0;
  geom.width = 0.5;
  geom.count = spec.boxes;
  MatrixD offsets(1, spec.boxes);
  for (int t = 0; t < spec.boxes; ++t) offsets(0, t) = offset[static_cast<std::size_t>(t)];
  const SelectorPlan plan = plan_box_selector({spec.slope}, offsets, geom, spec.eta, act);

  const int width = d + 2;
  const int out_slot = d;
  const int scratch = d + 1;
  Network net;
  net.lift = MatrixD(width, d);
  for (int i = 0; i < d; ++i) net.lift(i, i) = 1.0;

  const std::size_t n_units = plan.units.size();
  for (std::size_t k = 0; k < n_units; ++k) {
    const SelectorUnit& u = plan.units[k];
    RnnCell cell;
    cell.A = MatrixD(width, width);
    cell.B = MatrixD(width, width);
    cell.theta.assign(static_cast<std::size_t>(width), 0.0);
    cell.act = act;
    cell.modified_set = {scratch};
    for (int i = 0; i < d; ++i) cell.B(i, i) = 1.0;
    cell.B(out_slot, out_slot) = 1.0;
    if (k > 0) cell.B(out_slot, scratch) = plan.units[k - 1].out_coefs[0];
    cell.B(scratch, u.coord) = u.weight;
    cell.theta[static_cast<std::size_t>(scratch)] = u.bias;
    net.cells.emplace_back(std::move(cell));
  }

  RnnCell last;  // plain affine: fold in the final unit and the constant
  last.A = MatrixD(width, width);
  last.B = MatrixD(width, width);
  last.theta.assign(static_cast<std::size_t>(width), 0.0);
  last.act = act;
  last.modified_set.clear();
  for (int i = 0; i < d; ++i) last.B(i, i) = 1.0;
  last.B(out_slot, out_slot) = 1.0;
  if (n_units > 0) last.B(out_slot, scratch) = plan.units[n_units - 1].out_coefs[0];
  last.theta[static_cast<std::size_t>(out_slot)] = plan.constants[0];
  net.cells.emplace_back(std::move(last));

  net.proj = MatrixD(d + 1, width);
  for (int i = 0; i <= d; ++i) net.proj(i, i) = 1.0;
  validate_network(net);
  return net;
}

}  // namespace seqnet
