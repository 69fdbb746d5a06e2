#pragma once

// Time-varying-to-static conversion: rewrites a network of time-enhanced
// cells as a network of ordinary (time-invariant) recurrent cells of nearly
// the same width.  The idea: a counter shifts the registers by t so tokens at
// different times live in disjoint boxes, a box selector then applies the
// time-t weights, and an across-time accumulator rebuilds the running sum
// while unshifting the registers.
//
// Level layout per converted time-enhanced cell, linear-sum form
// (slots [registers | s | acc | c], c present only when gamma(sigma) = 1):
//   L1   shift: regs += t*1 (normalizing into [0,1/2]^{d_x} on the first
//        level), counter kept in c, or rebuilt in s under ReLU
//   U_k  selector units: s <- sigma(unit pre), partial sums fold into acc
//   L3   close: acc accumulates across time, regs unshift back
// The two-layer form adds, per source unit, the same levels targeting the
// buffer slot, a token-wise activation cell, and a merge stage whose selector
// reads the shifted buffer value and fans out into the per-output sums.
//
// Accuracy: ReLU selectors are exact, so the conversion is exact up to float
// roundoff.  Saturating activations walk a sharpness ladder until the
// measured error on a seeded sample of input sequences meets eps, else a
// tolerance error reports the best error achieved.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "seqnet/construct.hpp"
#include "seqnet/errors.hpp"
#include "seqnet/network.hpp"
#include "seqnet/selector.hpp"

namespace seqnet {

struct ConvertOptions {
  // Sharpness values tried in order until the requested tolerance is met.
  std::vector<double> eta_ladder = {1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5};
  // When set (not NaN), build at exactly this sharpness instead of walking
  // the ladder; used by convergence sweeps.
  double fixed_eta = std::numeric_limits<double>::quiet_NaN();
  int samples = 96;       // input sequences for the internal error check
  unsigned seed = 20260819;
};

struct ConvertedRnnBuild {
  Network net;
  double achieved_error = 0.0;  // sup over the internal sample set
  double eta_used = 0.0;
  int d_x = 0, N = 0;
};

namespace detail {

// Normalization of K into [0,1/2]^{d_x}: v = (x - lo) / scale.
struct BoxNormalization {
  VectorD lo, scale;
};

inline BoxNormalization conv_normalization(const DomainBox& K) {
  K.validate();
  BoxNormalization norm;
  norm.lo = K.lo;
  norm.scale.resize(K.lo.size());
  for (std::size_t i = 0; i < K.lo.size(); ++i) norm.scale[i] = 2.0 * (K.hi[i] - K.lo[i]);
  return norm;
}

// Slot assignments of the converted state vector.
struct ConvLayout {
  int d_x = 0;
  int width = 0;
  int s = 0;               // sigma scratch
  int acc = 0;             // running value (linear-sum) or buffer (two-layer)
  std::vector<int> sums;   // per-output accumulators (two-layer only)
  int c = -1;              // persistent counter slot; -1 when gamma = 0
};

inline ConvLayout linear_layout(int d_x, int gamma) {
  ConvLayout L;
  L.d_x = d_x;
  L.s = d_x;
  L.acc = d_x + 1;
  L.c = gamma ? d_x + 2 : -1;
  L.width = d_x + 2 + gamma;
  return L;
}

inline ConvLayout mlp_layout(int d_x, int d_y, int gamma) {
  ConvLayout L;
  L.d_x = d_x;
  L.s = d_x;
  L.acc = d_x + 1;
  for (int r = 0; r < d_y; ++r) L.sums.push_back(d_x + 2 + r);
  L.c = gamma ? d_x + 2 + d_y : -1;
  L.width = d_x + d_y + 2 + gamma;
  return L;
}

inline RnnCell conv_blank(const ConvLayout& L, const ActivationProfile& act) {
  RnnCell cell;
  cell.A = MatrixD(L.width, L.width);
  cell.B = MatrixD(L.width, L.width);
  cell.theta.assign(static_cast<std::size_t>(L.width), 0.0);
  cell.act = act;
  return cell;
}

inline void conv_pass(RnnCell& cell, int row) { cell.B(row, row) = 1.0; }

inline void conv_pass_counter(const ConvLayout& L, RnnCell& cell) {
  if (L.c >= 0) conv_pass(cell, L.c);
}

// Gives the cell its own token counter: own-state recurrence, independent of
// whatever the incoming token carries in that slot.  Under ReLU the scratch
// slot serves; the value stays nonnegative so later activation is harmless.
inline int conv_own_counter(const ConvLayout& L, RnnCell& cell) {
  const int slot = (L.c >= 0) ? L.c : L.s;
  cell.A(slot, slot) = 1.0;
  cell.theta[static_cast<std::size_t>(slot)] = 1.0;
  return slot;
}

// L1: shift registers by the token index; the first level of the whole net
// also normalizes them into [0,1/2]^{d_x}.
inline void emit_shift_cell(Network& net, const ConvLayout& L, const ActivationProfile& act,
                            const BoxNormalization& norm, bool boot) {
  RnnCell cell = conv_blank(L, act);
  conv_pass(cell, L.acc);
  for (int r : L.sums) conv_pass(cell, r);
  const bool own = boot || L.c < 0;  // smooth levels after the first read the kept counter
  if (own) {
    const int slot = conv_own_counter(L, cell);
    for (int i = 0; i < L.d_x; ++i) {
      cell.A(i, slot) = 1.0;
      cell.theta[static_cast<std::size_t>(i)] = 1.0;
    }
  } else {
    conv_pass_counter(L, cell);
    for (int i = 0; i < L.d_x; ++i) cell.B(i, L.c) = 1.0;
  }
  for (int i = 0; i < L.d_x; ++i) {
    if (boot) {
      cell.B(i, i) = 1.0 / norm.scale[static_cast<std::size_t>(i)];
      cell.theta[static_cast<std::size_t>(i)] -=
          norm.lo[static_cast<std::size_t>(i)] / norm.scale[static_cast<std::size_t>(i)];
    } else {
      cell.B(i, i) = 1.0;
    }
  }
  net.cells.emplace_back(std::move(cell));
}

// Selector unit cells: sigma into the scratch slot, previous unit's value
// folded into the target rows.  probe_rows maps plan coordinates to state
// slots; target_rows maps plan outputs to accumulating slots.
inline void emit_unit_cells(Network& net, const ConvLayout& L, const ActivationProfile& act,
                            const SelectorPlan& plan, const std::vector<int>& probe_rows,
                            const std::vector<int>& target_rows) {
  for (std::size_t k = 0; k < plan.units.size(); ++k) {
    const SelectorUnit& u = plan.units[k];
    RnnCell cell = conv_blank(L, act);
    cell.modified_set = {L.s};
    cell.B(L.s, probe_rows[static_cast<std::size_t>(u.coord)]) = u.weight;
    cell.theta[static_cast<std::size_t>(L.s)] = u.bias;
    for (int i = 0; i < L.d_x; ++i) conv_pass(cell, i);
    conv_pass(cell, L.acc);
    for (int r : L.sums) conv_pass(cell, r);
    conv_pass_counter(L, cell);
    if (k > 0) {
      for (std::size_t r = 0; r < target_rows.size(); ++r) {
        cell.B(target_rows[r], L.s) = plan.units[k - 1].out_coefs[r];
      }
    }
    net.cells.emplace_back(std::move(cell));
  }
}

// L3: accumulate the token value across time into acc and unshift registers.
inline void emit_linear_close_cell(Network& net, const ConvLayout& L,
                                   const ActivationProfile& act, const SelectorPlan& plan) {
  RnnCell cell = conv_blank(L, act);
  for (int r : L.sums) conv_pass(cell, r);
  for (int i = 0; i < L.d_x; ++i) cell.B(i, i) = 1.0;
  if (L.c >= 0) {
    conv_pass_counter(L, cell);
    for (int i = 0; i < L.d_x; ++i) cell.B(i, L.c) = -1.0;
  } else {
    const int slot = conv_own_counter(L, cell);
    for (int i = 0; i < L.d_x; ++i) {
      cell.A(i, slot) = -1.0;
      cell.theta[static_cast<std::size_t>(i)] = -1.0;
    }
  }
  cell.A(L.acc, L.acc) = 1.0;
  cell.B(L.acc, L.acc) = 1.0;
  if (!plan.units.empty()) cell.B(L.acc, L.s) = plan.units.back().out_coefs[0];
  cell.theta[static_cast<std::size_t>(L.acc)] = plan.constants[0];
  net.cells.emplace_back(std::move(cell));
}

// One full level realizing a time-enhanced linear-sum cell: the target slot
// accumulates sum_{j<=t} (slope[j] . x[j] + incoming[j]).
inline void emit_linear_level(Network& net, const ConvLayout& L, const ActivationProfile& act,
                              const MatrixD& coeff, const BoxNormalization& norm, double eta,
                              int n, bool boot) {
  MatrixD slope(n, L.d_x);
  MatrixD offs(1, n);
  for (int t = 0; t < n; ++t) {
    for (int c = 0; c < L.d_x; ++c) {
      slope(t, c) = coeff(t, c) * norm.scale[static_cast<std::size_t>(c)];
      offs(0, t) += coeff(t, c) * norm.lo[static_cast<std::size_t>(c)];
    }
  }
  BoxGeometry geom;
  geom.origin0 = 1.0;
  geom.spacing = 1.0;
  geom.width = 0.5;
  geom.count = n;
  const double eta_eff = std::min(eta, geom.gap() / 2.0);
  const SelectorPlan plan = plan_box_selector({slope}, offs, geom, eta_eff, act);

  std::vector<int> probe_rows;
  for (int i = 0; i < L.d_x; ++i) probe_rows.push_back(i);
  emit_shift_cell(net, L, act, norm, boot);
  emit_unit_cells(net, L, act, plan, probe_rows, {L.acc});
  emit_linear_close_cell(net, L, act, plan);
}

// Token-wise activation on the buffer slot.
inline void emit_buffer_activation_cell(Network& net, const ConvLayout& L,
                                        const ActivationProfile& act) {
  RnnCell cell = conv_blank(L, act);
  cell.modified_set = {L.acc};
  cell.B(L.acc, L.acc) = 1.0;
  for (int i = 0; i < L.d_x; ++i) conv_pass(cell, i);
  for (int r : L.sums) conv_pass(cell, r);
  conv_pass_counter(L, cell);
  net.cells.emplace_back(std::move(cell));
}

// Merge stage: shift the buffer by t*spacing so its values at different
// times live in disjoint intervals, select w_r[t]*U, flush into the sums.
inline void emit_merge_stage(Network& net, const ConvLayout& L, const ActivationProfile& act,
                             const MatrixD& merge_w, double u_lo, double u_hi, double eta,
                             int n) {
  const double w_box = std::max(u_hi - u_lo, 1e-3);
  BoxGeometry geom;
  geom.spacing = 2.0 * w_box;
  geom.width = w_box;
  geom.origin0 = u_lo + geom.spacing;
  geom.count = n;
  const double eta_eff = std::min(eta, geom.gap() / 2.0);

  const int d_y = static_cast<int>(merge_w.rows());
  std::vector<MatrixD> slopes;
  MatrixD offs(d_y, n);
  for (int r = 0; r < d_y; ++r) {
    MatrixD s(n, 1);
    for (int t = 0; t < n; ++t) {
      s(t, 0) = merge_w(r, t);
      offs(r, t) = merge_w(r, t) * u_lo;
    }
    slopes.push_back(std::move(s));
  }
  const SelectorPlan plan = plan_box_selector(slopes, offs, geom, eta_eff, act);

  {  // M1: buffer shift
    RnnCell cell = conv_blank(L, act);
    for (int i = 0; i < L.d_x; ++i) conv_pass(cell, i);
    for (int r : L.sums) conv_pass(cell, r);
    cell.B(L.acc, L.acc) = 1.0;
    if (L.c >= 0) {
      conv_pass_counter(L, cell);
      cell.B(L.acc, L.c) = geom.spacing;
    } else {
      const int slot = conv_own_counter(L, cell);
      cell.A(L.acc, slot) = geom.spacing;
      cell.theta[static_cast<std::size_t>(L.acc)] = geom.spacing;
    }
    net.cells.emplace_back(std::move(cell));
  }
  emit_unit_cells(net, L, act, plan, {L.acc}, L.sums);
  {  // M3: flush into sums (token-wise), reset the buffer
    RnnCell cell = conv_blank(L, act);
    for (int i = 0; i < L.d_x; ++i) conv_pass(cell, i);
    conv_pass_counter(L, cell);
    for (std::size_t r = 0; r < L.sums.size(); ++r) {
      conv_pass(cell, L.sums[r]);
      if (!plan.units.empty()) cell.B(L.sums[r], L.s) = plan.units.back().out_coefs[r];
      cell.theta[static_cast<std::size_t>(L.sums[r])] = plan.constants[r];
    }
    net.cells.emplace_back(std::move(cell));
  }
}

// Restores original register scale at the end of the chain.
inline void emit_unnormalize_cell(Network& net, const ConvLayout& L, const ActivationProfile& act,
                                  const BoxNormalization& norm) {
  RnnCell cell = conv_blank(L, act);
  for (int i = 0; i < L.d_x; ++i) {
    cell.B(i, i) = norm.scale[static_cast<std::size_t>(i)];
    cell.theta[static_cast<std::size_t>(i)] = norm.lo[static_cast<std::size_t>(i)];
  }
  conv_pass(cell, L.acc);
  for (int r : L.sums) conv_pass(cell, r);
  net.cells.emplace_back(std::move(cell));
}

inline double conv_sup_diff(const Network& a, const Network& b, const std::vector<Seq>& inputs) {
  double worst = 0.0;
  for (const Seq& x : inputs) {
    const Seq ya = eval_network(a, x);
    const Seq yb = eval_network(b, x);
    if (ya.dim() != yb.dim() || ya.length() != yb.length()) {
      throw ValidationError("conversion produced mismatched output shape");
    }
    for (std::size_t i = 0; i < ya.values.rows(); ++i) {
      for (std::size_t t = 0; t < ya.values.cols(); ++t) {
        worst = std::max(worst, std::abs(ya.values(i, t) - yb.values(i, t)));
      }
    }
  }
  return worst;
}

template <typename BuildFn>
inline ConvertedRnnBuild conv_run_ladder(const Network& source, const DomainBox& K, int d_x,
                                         int n, double eps, const ConvertOptions& opts,
                                         BuildFn&& build_at) {
  if (!(eps > 0.0)) throw ValidationError("conversion tolerance must be positive");
  if (K.dim() != d_x) throw ValidationError("domain box dimension does not match the network");
  std::vector<double> rungs;
  if (opts.fixed_eta == opts.fixed_eta) {
    rungs.push_back(opts.fixed_eta);
  } else {
    rungs = opts.eta_ladder;
    if (rungs.empty()) throw ValidationError("conversion needs a nonempty sharpness ladder");
  }
  const std::vector<Seq> inputs = sample_domain_seqs(K, n, opts.samples, opts.seed);

  double best_err = std::numeric_limits<double>::infinity();
  double best_eta = rungs.front();
  for (double eta : rungs) {
    Network net = build_at(eta);
    validate_network(net);
    const double err = conv_sup_diff(net, source, inputs);
    if (err <= eps) {
      ConvertedRnnBuild out;
      out.net = std::move(net);
      out.achieved_error = err;
      out.eta_used = eta;
      out.d_x = d_x;
      out.N = n;
      return out;
    }
    if (err < best_err) {
      best_err = err;
      best_eta = eta;
    }
  }
  throw ToleranceError("conversion achieved error " + std::to_string(best_err) +
                       " at sharpness " + std::to_string(best_eta) +
                       ", above the requested tolerance " + std::to_string(eps));
}

}  // namespace detail

// Converts a linear-sum network of time-enhanced cells into time-invariant
// cells of width d_x + 2 + gamma(sigma).
inline ConvertedRnnBuild build_trnn_to_rnn(const LinearSumTrnnBuild& src, const DomainBox& K,
                                           double eps, const ConvertOptions& opts = {}) {
  const detail::ConvLayout L = detail::linear_layout(src.d_x, src.act.gamma);
  const detail::BoxNormalization norm = detail::conv_normalization(K);

  auto build_at = [&](double eta) {
    Network net;
    net.lift = detail::reg_passthrough(L.width, src.d_x);
    for (int l = 0; l < src.N; ++l) {
      detail::emit_linear_level(net, L, src.act, src.cell_coeff[static_cast<std::size_t>(l)],
                                norm, eta, src.N, l == 0);
    }
    if (src.final_activation) detail::emit_buffer_activation_cell(net, L, src.act);
    detail::emit_unnormalize_cell(net, L, src.act, norm);
    net.proj = MatrixD(src.d_x + 1, L.width);
    for (int i = 0; i < src.d_x; ++i) net.proj(i, i) = 1.0;
    net.proj(src.d_x, L.acc) = 1.0;
    return net;
  };
  return detail::conv_run_ladder(src.net, K, src.d_x, src.N, eps, opts, build_at);
}

// Converts a two-layer network of time-enhanced cells (per-unit coefficient
// levels, buffer activation, time-varying merge) into time-invariant cells of
// width d_x + d_y + 2 + gamma(sigma).
inline ConvertedRnnBuild build_trnn_to_rnn(const MlpTrnnBuild& src, const DomainBox& K,
                                           double eps, const ConvertOptions& opts = {}) {
  const detail::ConvLayout L = detail::mlp_layout(src.d_x, src.d_y, src.act.gamma);
  const detail::BoxNormalization norm = detail::conv_normalization(K);

  // Buffer range per unit: interval bounds of the unit pre-activation over
  // K^N, mapped through the (monotone) activation.
  std::vector<double> u_los, u_his;
  for (int i = 0; i < src.units; ++i) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (int t = 1; t <= src.N; ++t) {
      double plo = 0.0, phi = 0.0;
      for (int j = 1; j <= t; ++j) {
        for (int c = 0; c < src.d_x; ++c) {
          const double a =
              src.surrogate.features[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(i)](
                  j - 1, c);
          const double x0 = a * K.lo[static_cast<std::size_t>(c)];
          const double x1 = a * K.hi[static_cast<std::size_t>(c)];
          plo += std::min(x0, x1);
          phi += std::max(x0, x1);
        }
      }
      lo = std::min(lo, plo);
      hi = std::max(hi, phi);
    }
    u_los.push_back(src.act(lo));
    u_his.push_back(src.act(hi));
  }

  auto build_at = [&](double eta) {
    Network net;
    net.lift = detail::reg_passthrough(L.width, src.d_x);
    bool boot = true;
    for (int i = 0; i < src.units; ++i) {
      for (int l = 0; l < src.N; ++l) {
        detail::emit_linear_level(
            net, L, src.act, src.unit_coeff[static_cast<std::size_t>(i)][static_cast<std::size_t>(l)],
            norm, eta, src.N, boot);
        boot = false;
      }
      detail::emit_buffer_activation_cell(net, L, src.act);
      detail::emit_merge_stage(net, L, src.act, src.merge_w[static_cast<std::size_t>(i)],
                               u_los[static_cast<std::size_t>(i)],
                               u_his[static_cast<std::size_t>(i)], eta, src.N);
    }
    detail::emit_unnormalize_cell(net, L, src.act, norm);
    net.proj = MatrixD(src.d_x + src.d_y + 1, L.width);
    for (int i = 0; i < src.d_x; ++i) net.proj(i, i) = 1.0;
    for (int r = 0; r < src.d_y; ++r) net.proj(src.d_x + r, L.sums[static_cast<std::size_t>(r)]) = 1.0;
    net.proj(src.d_x + src.d_y, L.acc) = 1.0;
    return net;
  };
  return detail::conv_run_ladder(src.net, K, src.d_x, src.N, eps, opts, build_at);
}

}  // namespace seqnet
