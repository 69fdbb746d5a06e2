#pragma once

// Rewrites a network of recurrent cells whose activation touches only part of
// the state (modified cells) into a network of plain cells (activation on
// every row) realizing the same map: exactly for relu, and up to an error
// that vanishes as the encoding scale delta shrinks for smooth activations.
//
// Smooth path: every modified cell becomes two plain cells.  A token-wise
// front cell squeezes the input contribution w = B x + theta through sigma
// near a point z0 with sigma'(z0) != 0, so w is recoverable linearly from
// sigma(z0 + delta w).  The recurrent back cell keeps activated rows exact
// and carries unactivated rows in the squeezed encoding
//   y~ = sigma(z0) + sigma'(z0) delta y.
// When sigma(z0) != 0 the decode needs an affine term, so one extra carrier
// row pins sigma(z0) exactly and decoding stays linear.  Decoding folds into
// the next cell's input map and into the final projection.
//
// Relu path: one plain cell per cell.  Unactivated rows are shifted up by a
// constant S large enough that relu passes them through unchanged on the
// traced domain; the shift folds into biases, initial states, and the
// projection.  The projection fold needs a state row of the last cell that
// is structurally zero (zero recurrence row, input row, and bias), which the
// builders in this library always leave behind.
//
// Stages wrapped by wrap_backward_stage run over the reversed stream; the
// rewrite applies to the wrapped cell and the result is wrapped the same way
// (token-wise front cells of the smooth pair stay forward; their per-token
// output feeds the backward cell at the matching reversed step).

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "seqnet/activation.hpp"
#include "seqnet/cells.hpp"
#include "seqnet/construct.hpp"
#include "seqnet/errors.hpp"
#include "seqnet/matrix.hpp"
#include "seqnet/network.hpp"

namespace seqnet {

struct DemodifyParams {
  double delta = 1e-3;  // smooth encoding scale; error vanishes as delta -> 0
  double shift = 0.0;   // relu shift; <= 0 derives one from the trace
  int horizon = 8;      // trace sequence length (use the length the net runs at)
  int samples = 96;     // trace sample count over the domain box
  unsigned seed = 20260821;
};

struct DemodifiedBuild {
  Network net;
  int beta = 0;             // extra state rows per rewritten cell
  double shift_used = 0.0;  // relu path: the positivity shift applied
  // Smooth path: encoding scale per source cell (0 marks a cell left alone).
  std::vector<double> cell_deltas;
};

namespace detail {

struct DemodifyTrace {
  double w_mag = 0.0;          // max |B x + theta|_inf over the trace
  double unmod_pre_mag = 0.0;  // max |pre| over rows outside the modified set
  double unmod_pre_min = 0.0;  // min pre over rows outside the modified set
  double out_mag = 0.0;        // max |y|_inf
};

inline std::vector<char> modified_flags(const RnnCell& c) {
  std::vector<char> flags(static_cast<std::size_t>(c.state_dim()), 0);
  for (int idx : c.modified_set) flags[static_cast<std::size_t>(idx)] = 1;
  return flags;
}

// A stage the rewrite can handle: a time-invariant cell plus the direction
// it runs in (wrapped backward stages run over the reversed stream).
struct DirectedRnn {
  const RnnCell* cell = nullptr;
  bool backward = false;
};

inline std::vector<DirectedRnn> directed_cells(const Network& src) {
  std::vector<DirectedRnn> cells;
  for (const Cell& c : src.cells) {
    if (std::holds_alternative<RnnCell>(c)) {
      cells.push_back({&std::get<RnnCell>(c), false});
      continue;
    }
    if (std::holds_alternative<BrnnCell>(c)) {
      if (const RnnCell* inner = unwrap_backward_stage(std::get<BrnnCell>(c))) {
        cells.push_back({inner, true});
        continue;
      }
    }
    throw ValidationError("demodify handles networks of time-invariant recurrent cells only");
  }
  return cells;
}

inline std::vector<int> all_rows(int d) {
  std::vector<int> rows(static_cast<std::size_t>(d));
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

// Runs the source network over the samples recording per-cell magnitudes.
// Backward stages trace over the reversed stream, matching their evaluation.
inline std::vector<DemodifyTrace> trace_rnn_network(const Network& net,
                                                    const std::vector<DirectedRnn>& cells,
                                                    const std::vector<Seq>& inputs) {
  std::vector<DemodifyTrace> traces(cells.size());
  for (const Seq& x : inputs) {
    Seq h = apply_tokenwise(net.lift, x);
    for (std::size_t l = 0; l < cells.size(); ++l) {
      const RnnCell& c = *cells[l].cell;
      DemodifyTrace& tr = traces[l];
      const std::vector<char> modded = modified_flags(c);
      const int d = c.state_dim();
      const Seq hin = cells[l].backward ? h.reversed() : std::move(h);
      Seq y(d, hin.length());
      VectorD state = initial_or_zero(c.initial_state, d);
      for (int t = 1; t <= hin.length(); ++t) {
        VectorD pre = matvec(c.A, state);
        const VectorD bx = matvec(c.B, hin.token(t));
        for (int i = 0; i < d; ++i) {
          const double w = bx[i] + (c.theta.empty() ? 0.0 : c.theta[i]);
          pre[i] += w;
          if (!std::isfinite(pre[i])) {
            throw DomainError(
                "demodify trace produced a non-finite value; the network is "
                "unbounded on the given box");
          }
          tr.w_mag = std::max(tr.w_mag, std::abs(w));
          if (!modded[static_cast<std::size_t>(i)]) {
            tr.unmod_pre_mag = std::max(tr.unmod_pre_mag, std::abs(pre[i]));
            tr.unmod_pre_min = std::min(tr.unmod_pre_min, pre[i]);
          }
        }
        apply_modified(c.act, c.modified_set, pre);
        for (int i = 0; i < d; ++i) tr.out_mag = std::max(tr.out_mag, std::abs(pre[i]));
        y.set_token(t, pre);
        state = std::move(pre);
      }
      h = cells[l].backward ? y.reversed() : std::move(y);
    }
  }
  return traces;
}

// Appends a rewritten cell in its stage's direction.
inline void push_directed(Network& out, RnnCell&& nc, bool backward) {
  if (backward) {
    const int dim_in = static_cast<int>(nc.B.cols());
    out.cells.push_back(wrap_backward_stage(std::move(nc), dim_in));
  } else {
    out.cells.emplace_back(std::move(nc));
  }
}

// Relu: same shape, biases shifted so unactivated rows stay nonnegative.
inline Network demodify_relu(const Network& src, const std::vector<DirectedRnn>& cells,
                             const std::vector<DemodifyTrace>& traces, double shift_in,
                             double& shift_used) {
  double mag = 0.0;
  double neg = 0.0;
  for (const DemodifyTrace& tr : traces) {
    mag = std::max(mag, std::max(tr.unmod_pre_mag, tr.out_mag));
    neg = std::min(neg, tr.unmod_pre_min);
  }
  const double S = shift_in > 0.0 ? shift_in : std::max(0.5, 2.0 * mag);
  if (S + neg < 0.0) {
    throw DomainError("relu demodify shift " + std::to_string(S) +
                      " cannot keep unactivated rows nonnegative (traced minimum " +
                      std::to_string(neg) + ")");
  }
  shift_used = S;

  Network out;
  out.lift = src.lift;
  // shift_prev is constant across tokens, so it folds the same way into
  // forward and backward stages.
  VectorD shift_prev(static_cast<std::size_t>(src.lift.rows()), 0.0);
  for (const DirectedRnn& dc : cells) {
    const RnnCell& c = *dc.cell;
    const int d = c.state_dim();
    const std::vector<char> modded = modified_flags(c);
    VectorD shift_self(static_cast<std::size_t>(d), 0.0);
    for (int i = 0; i < d; ++i) {
      if (!modded[static_cast<std::size_t>(i)]) shift_self[static_cast<std::size_t>(i)] = S;
    }

    RnnCell nc;
    nc.A = c.A;
    nc.B = c.B;
    nc.act = c.act;
    nc.modified_set = all_rows(d);
    const VectorD a_fold = matvec(c.A, shift_self);
    const VectorD b_fold = matvec(c.B, shift_prev);
    nc.theta.assign(static_cast<std::size_t>(d), 0.0);
    for (int i = 0; i < d; ++i) {
      nc.theta[i] = (c.theta.empty() ? 0.0 : c.theta[i]) + shift_self[i] - a_fold[i] - b_fold[i];
    }
    VectorD y0 = initial_or_zero(c.initial_state, d);
    bool any = false;
    for (int i = 0; i < d; ++i) {
      y0[i] += shift_self[i];
      any = any || y0[i] != 0.0;
    }
    if (any) nc.initial_state = std::move(y0);
    push_directed(out, std::move(nc), dc.backward);
    shift_prev = std::move(shift_self);
  }

  // The projection sees the last stage's unactivated rows high by S.  Cancel
  // the constant through a structurally zero row, which reads exactly S.
  const RnnCell& last = *cells.back().cell;
  const std::vector<char> modded = modified_flags(last);
  const int d = last.state_dim();
  out.proj = src.proj;
  std::vector<double> row_sums(src.proj.rows(), 0.0);
  bool need = false;
  for (std::size_t r = 0; r < src.proj.rows(); ++r) {
    for (int j = 0; j < d; ++j) {
      if (!modded[static_cast<std::size_t>(j)]) row_sums[r] += src.proj(r, j);
    }
    need = need || row_sums[r] != 0.0;
  }
  if (!need) return out;

  int carrier = -1;
  for (int j = 0; j < d && carrier < 0; ++j) {
    if (modded[static_cast<std::size_t>(j)]) continue;
    bool zero = last.theta.empty() || last.theta[static_cast<std::size_t>(j)] == 0.0;
    for (std::size_t k = 0; k < last.A.cols() && zero; ++k) zero = last.A(j, k) == 0.0;
    for (std::size_t k = 0; k < last.B.cols() && zero; ++k) zero = last.B(j, k) == 0.0;
    if (zero) carrier = j;
  }
  if (carrier < 0) {
    throw DomainError(
        "relu demodify needs a structurally zero unactivated row in the last "
        "cell to cancel the shift in the projection; none found");
  }
  for (std::size_t r = 0; r < out.proj.rows(); ++r) {
    out.proj(r, static_cast<std::size_t>(carrier)) -= row_sums[r];
  }
  return out;
}

// Smooth: modified cells become squeeze/recover pairs, plain cells only fold
// the decode of the previous stage into their input map.
inline Network demodify_smooth(const Network& src, const std::vector<DirectedRnn>& cells,
                               const std::vector<DemodifyTrace>& traces, double delta,
                               std::vector<double>& cell_deltas) {
  const ActivationProfile& act = cells.front().cell->act;
  const double z0 = act.z0;
  const double s0 = act.sigma_at_z0;
  const double sp = act.dsigma_at_z0;
  if (sp == 0.0) {
    throw ValidationError("demodify needs an activation with nonzero slope at its base point");
  }
  const int beta = act.beta;

  Network out;
  out.lift = src.lift;
  MatrixD decode = MatrixD::identity(src.lift.rows());
  for (std::size_t l = 0; l < cells.size(); ++l) {
    const RnnCell& c = *cells[l].cell;
    const int d = c.state_dim();
    if (c.is_plain()) {
      RnnCell nc;
      nc.A = c.A;
      nc.B = c.B * decode;
      nc.theta = c.theta;
      nc.act = act;
      nc.modified_set = all_rows(d);
      nc.initial_state = c.initial_state;
      push_directed(out, std::move(nc), cells[l].backward);
      decode = MatrixD::identity(d);
      cell_deltas.push_back(0.0);
      continue;
    }

    const std::vector<char> modded = modified_flags(c);
    const double rho = std::max(traces[l].w_mag, traces[l].unmod_pre_mag);
    const double dl = delta / std::max(1.0, rho);
    cell_deltas.push_back(dl);
    const int w = d + beta;
    const int u = d;  // carrier row, present iff beta == 1

    // Front cell: token-wise squeeze z = sigma(delta (B x + theta) + z0).
    RnnCell front;
    front.A = MatrixD(w, w);
    const MatrixD bd = c.B * decode;
    front.B = MatrixD(w, bd.cols());
    for (int i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < bd.cols(); ++j) front.B(i, j) = dl * bd(i, j);
    }
    front.theta.assign(static_cast<std::size_t>(w), z0);
    if (!c.theta.empty()) {
      for (int i = 0; i < d; ++i) front.theta[i] += dl * c.theta[i];
    }
    front.act = act;
    front.modified_set = all_rows(w);
    // The squeeze is token-wise (zero recurrence), so it stays forward even
    // for backward stages; the back cell picks its tokens up in reverse.
    out.cells.emplace_back(std::move(front));

    // Decode of this cell's encoding: activated rows read off directly,
    // others as (y~ - sigma(z0)) / (sigma'(z0) delta) via the carrier.
    MatrixD dec(d, w);
    for (int i = 0; i < d; ++i) {
      if (modded[static_cast<std::size_t>(i)]) {
        dec(i, i) = 1.0;
      } else {
        dec(i, i) = 1.0 / (sp * dl);
        if (beta == 1) dec(i, u) = -1.0 / (sp * dl);
      }
    }

    // Back cell: activated rows recover their true pre-activation, the rest
    // re-encode theirs at scale delta.
    RnnCell back;
    const MatrixD ad = c.A * dec;
    back.A = MatrixD(w, w);
    for (int i = 0; i < d; ++i) {
      const double row_scale = modded[static_cast<std::size_t>(i)] ? 1.0 : dl;
      for (int j = 0; j < w; ++j) back.A(i, j) = row_scale * ad(i, j);
    }
    back.B = MatrixD(w, w);
    for (int i = 0; i < d; ++i) {
      back.B(i, i) = modded[static_cast<std::size_t>(i)] ? 1.0 / (sp * dl) : 1.0 / sp;
    }
    if (beta == 1) back.B(u, u) = 1.0 / sp;
    back.theta.assign(static_cast<std::size_t>(w), z0 - s0 / sp);
    for (int i = 0; i < d; ++i) {
      if (modded[static_cast<std::size_t>(i)]) back.theta[i] = -s0 / (sp * dl);
    }
    back.act = act;
    back.modified_set = all_rows(w);
    const VectorD y0 = initial_or_zero(c.initial_state, d);
    VectorD enc0(static_cast<std::size_t>(w), 0.0);
    bool any = false;
    for (int i = 0; i < d; ++i) {
      enc0[i] = modded[static_cast<std::size_t>(i)] ? y0[i] : s0 + sp * dl * y0[i];
      any = any || enc0[i] != 0.0;
    }
    if (beta == 1) {
      enc0[u] = s0;
      any = any || s0 != 0.0;
    }
    if (any) back.initial_state = std::move(enc0);
    push_directed(out, std::move(back), cells[l].backward);

    decode = std::move(dec);
  }
  out.proj = src.proj * decode;
  return out;
}

}  // namespace detail

// Rewrites every modified cell of a network of time-invariant recurrent cells
// (forward or wrapped backward stages) into plain cells, preserving the map
// on K^horizon: exactly for relu, with error vanishing as delta -> 0 for
// smooth activations.  The state grows by beta(sigma) rows per rewritten cell
// (relu and tanh 0, logistic 1).
inline DemodifiedBuild demodify(const Network& src, const DomainBox& K,
                                const DemodifyParams& params = {}) {
  if (params.delta <= 0.0) {
    throw ValidationError("demodify requires delta > 0, got " + std::to_string(params.delta));
  }
  if (params.horizon < 1 || params.samples < 1) {
    throw ValidationError("demodify requires horizon >= 1 and samples >= 1");
  }
  K.validate();
  validate_network(src);
  if (K.dim() != src.input_dim()) {
    throw ValidationError("demodify box dimension " + std::to_string(K.dim()) +
                          " does not match network input dimension " +
                          std::to_string(src.input_dim()));
  }

  const std::vector<detail::DirectedRnn> cells = detail::directed_cells(src);

  DemodifiedBuild out;
  bool all_plain = true;
  for (const detail::DirectedRnn& c : cells) all_plain = all_plain && c.cell->is_plain();
  if (cells.empty() || all_plain) {
    out.net = src;
    return out;
  }

  const std::string& name = cells.front().cell->act.name;
  for (const detail::DirectedRnn& c : cells) {
    if (c.cell->act.name != name) {
      throw ValidationError("demodify requires one activation across all cells, got " + name +
                            " and " + c.cell->act.name);
    }
  }

  const std::vector<Seq> inputs =
      detail::sample_domain_seqs(K, params.horizon, params.samples, params.seed);
  const std::vector<detail::DemodifyTrace> traces =
      detail::trace_rnn_network(src, cells, inputs);

  if (cells.front().cell->act.is_relu()) {
    out.net = detail::demodify_relu(src, cells, traces, params.shift, out.shift_used);
  } else {
    out.net = detail::demodify_smooth(src, cells, traces, params.delta, out.cell_deltas);
    out.beta = cells.front().cell->act.beta;
  }
  validate_network(out.net);
  return out;
}

}  // namespace seqnet
