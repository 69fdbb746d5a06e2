#pragma once

// Architecture variants built on the core toolkit:
//
//  * Gated reductions.  A plain recurrence whose activation is the composed
//    map phi(z) = 0.5 tanh(0.5 tanh(z)) embeds cell-for-cell in an LSTM with
//    its input and output gates pinned at 1/2 and the forget gate saturated
//    low; a plain tanh recurrence embeds in a GRU with the reset gate at 1/2
//    (recurrence matrix doubled to compensate) and the update gate saturated
//    high.  Both are exact except for a per-step leak of order
//    sigmoid(-gate_magnitude).
//  * Bidirectional linear sums.  A full family A_j[t] with past and future
//    dependence splits into a forward stage realizing partial sums
//    f_m = sum_{i<=m} C_i[m] x[i] and a backward stage of accumulator cells
//    adding rows b-bar on the reversed stream.  Both coefficient sets solve
//    exactly over rationals: C pins the realized functional at output times
//    t >= token, the b-bar pileup covers t < token, and the diagonal closes
//    with zero right-hand side.  A rational replay of the two-stage
//    recurrence certifies the split leaves zero residual.
//  * Bidirectional two-layer realizations, their static-width conversion
//    (every emitted level owns its token counter, so direction changes in
//    the cell stack cannot skew counts), the end-to-end bidirectional
//    sequence-to-sequence builder, and the bidirectional variant of the
//    quantize/memorize/decode pipeline.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "seqnet/activation.hpp"
#include "seqnet/assemble.hpp"
#include "seqnet/cells.hpp"
#include "seqnet/construct.hpp"
#include "seqnet/convert.hpp"
#include "seqnet/demodify.hpp"
#include "seqnet/errors.hpp"
#include "seqnet/exact.hpp"
#include "seqnet/lp.hpp"
#include "seqnet/matrix.hpp"
#include "seqnet/network.hpp"

namespace seqnet {

// ---------------------------------------------------------------------------
// The composed activation the LSTM reduction targets: what one LSTM step
// applies end to end when its gates sit at neutral values.  Registered as a
// named custom activation so serialized networks can resolve it by name.

inline ActivationProfile half_tanh_twice_profile() {
  static const ActivationProfile p = register_custom_activation(
      "half-tanh-twice", [](double z) { return 0.5 * std::tanh(0.5 * std::tanh(z)); }, 0.0, 0.0,
      0.25, -0.5 * std::tanh(0.5), 0.5 * std::tanh(0.5));
  return p;
}

// ---------------------------------------------------------------------------
// Gated reductions.

struct ReductionParams {
  // Saturation level of the pinned gates; the per-step leak scales like
  // sigmoid(-gate_magnitude).
  double gate_magnitude = 20.0;
};

namespace detail {

// Shared contract of both reductions: plain, zero-start, time-invariant
// cells in the one activation the embedding reproduces.
inline std::vector<const RnnCell*> reduction_cells(const Network& src, const std::string& op,
                                                   const std::string& act_name) {
  validate_network(src);
  std::vector<const RnnCell*> cells;
  for (const Cell& c : src.cells) {
    if (!std::holds_alternative<RnnCell>(c)) {
      throw ValidationError(op + " expects time-invariant recurrent cells only");
    }
    const RnnCell& cell = std::get<RnnCell>(c);
    if (!cell.is_plain()) {
      throw ValidationError(op + " expects plain cells (activation on every state row)");
    }
    if (cell.act.name != act_name) {
      throw ValidationError(op + " expects activation '" + act_name + "', got '" + cell.act.name +
                            "'");
    }
    for (double v : cell.initial_state) {
      if (v != 0.0) {
        throw ValidationError(op + " expects zero initial states; gated cells start at zero");
      }
    }
    cells.push_back(&cell);
  }
  if (cells.empty()) throw ValidationError(op + " needs at least one cell");
  return cells;
}

}  // namespace detail

// Embeds a plain recurrence in composed form h = phi(A h + B x + theta) into
// an LSTM stack: input and output gates pinned at 1/2, forget gate saturated
// at sigmoid(-gate_magnitude), candidate path carrying (A, B, theta).
inline Network lstm_from_rnn(const Network& src, const ReductionParams& params = {}) {
  if (!(params.gate_magnitude > 0.0)) {
    throw ValidationError("gate magnitude must be positive, got " +
                          std::to_string(params.gate_magnitude));
  }
  const ActivationProfile composed = half_tanh_twice_profile();
  const std::vector<const RnnCell*> cells =
      detail::reduction_cells(src, "lstm_from_rnn", composed.name);

  Network out;
  out.lift = src.lift;
  out.proj = src.proj;
  for (const RnnCell* cp : cells) {
    const RnnCell& c = *cp;
    const std::size_t d = c.B.rows();
    const std::size_t m = c.B.cols();
    LstmCell g;
    g.W_i = MatrixD(d, m);
    g.U_i = MatrixD(d, d);
    g.b_i = VectorD(d, 0.0);
    g.W_f = MatrixD(d, m);
    g.U_f = MatrixD(d, d);
    g.b_f = VectorD(d, -params.gate_magnitude);
    g.W_g = c.B;
    g.U_g = c.A;
    g.b_g = c.theta.empty() ? VectorD(d, 0.0) : c.theta;
    g.W_o = MatrixD(d, m);
    g.U_o = MatrixD(d, d);
    g.b_o = VectorD(d, 0.0);
    out.cells.emplace_back(std::move(g));
  }
  validate_network(out);
  return out;
}

// Embeds a plain tanh recurrence into a GRU stack: reset gate pinned at 1/2
// (the recurrence matrix is doubled to compensate), update gate saturated at
// 1 - sigmoid(-gate_magnitude), candidate path carrying (2A, B, theta).
inline Network gru_from_rnn(const Network& src, const ReductionParams& params = {}) {
  if (!(params.gate_magnitude > 0.0)) {
    throw ValidationError("gate magnitude must be positive, got " +
                          std::to_string(params.gate_magnitude));
  }
  const std::vector<const RnnCell*> cells = detail::reduction_cells(src, "gru_from_rnn", "tanh");

  Network out;
  out.lift = src.lift;
  out.proj = src.proj;
  for (const RnnCell* cp : cells) {
    const RnnCell& c = *cp;
    const std::size_t d = c.B.rows();
    const std::size_t m = c.B.cols();
    GruCell g;
    g.W_r = MatrixD(d, m);
    g.U_r = MatrixD(d, d);
    g.b_r = VectorD(d, 0.0);
    g.W_z = MatrixD(d, m);
    g.U_z = MatrixD(d, d);
    g.b_z = VectorD(d, params.gate_magnitude);
    g.W_h = c.B;
    g.U_h = c.A;
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) g.U_h(i, j) *= 2.0;
    }
    g.b_h = c.theta.empty() ? VectorD(d, 0.0) : c.theta;
    out.cells.emplace_back(std::move(g));
  }
  validate_network(out);
  return out;
}

// Largest cell-state magnitude any LSTM stage reaches over the given inputs;
// the forget-gate leak bound scales by this value:
//   |deviation| <= length * peak * sigmoid(-gate_magnitude) per stage.
inline double lstm_state_peak(const Network& net, const std::vector<Seq>& inputs) {
  validate_network(net);
  double peak = 0.0;
  for (const Seq& x : inputs) {
    Seq h = detail::apply_tokenwise(net.lift, x);
    for (const Cell& cl : net.cells) {
      if (!std::holds_alternative<LstmCell>(cl)) {
        h = eval_cell(cl, h);
        continue;
      }
      const LstmCell& cell = std::get<LstmCell>(cl);
      const int d = cell.state_dim();
      const auto sigm = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
      Seq out(d, h.length());
      VectorD c(static_cast<std::size_t>(d), 0.0), hh(static_cast<std::size_t>(d), 0.0);
      for (int t = 1; t <= h.length(); ++t) {
        const VectorD xt = h.token(t);
        const VectorD iw = matvec(cell.W_i, xt), iu = matvec(cell.U_i, hh);
        const VectorD fw = matvec(cell.W_f, xt), fu = matvec(cell.U_f, hh);
        const VectorD gw = matvec(cell.W_g, xt), gu = matvec(cell.U_g, hh);
        const VectorD ow = matvec(cell.W_o, xt), ou = matvec(cell.U_o, hh);
        for (int k = 0; k < d; ++k) {
          const double i_g = sigm(iw[k] + iu[k] + cell.b_i[k]);
          const double f_g = sigm(fw[k] + fu[k] + cell.b_f[k]);
          const double g_g = std::tanh(gw[k] + gu[k] + cell.b_g[k]);
          const double o_g = sigm(ow[k] + ou[k] + cell.b_o[k]);
          c[k] = f_g * c[k] + i_g * g_g;
          peak = std::max(peak, std::abs(c[k]));
          hh[k] = o_g * std::tanh(c[k]);
        }
        out.set_token(t, hh);
      }
      h = std::move(out);
    }
  }
  return peak;
}

// ---------------------------------------------------------------------------
// Bidirectional coefficient families and their exact two-stage split.

struct BidirectionalFamily {
  int d_x = 0, N = 0;
  // A[j-1](t-1, :) = prescribed weight of token j in the output at time t.
  std::vector<MatrixD> A;
  // Forward split: C[i-1](m-1, :) = forward-stage weight of token i at time
  // m; rows m < i are zero (the forward stage is causal).
  std::vector<MatrixD> C;
  // Backward split: b_bar[l-1](p-1, :) = the row backward cell l adds at
  // position p.
  std::vector<MatrixD> b_bar;
};

namespace detail {

inline std::pair<int, int> family_shape(const std::vector<MatrixD>& A, const std::string& op) {
  const int n = static_cast<int>(A.size());
  if (n < 1) throw ValidationError(op + " needs a nonempty family");
  const int d_x = static_cast<int>(A[0].cols());
  if (d_x < 1) throw ValidationError(op + " needs at least one input coordinate");
  for (const MatrixD& block : A) {
    if (static_cast<int>(block.rows()) != n || static_cast<int>(block.cols()) != d_x) {
      throw ValidationError("family blocks must all be N x d_x");
    }
  }
  return {n, d_x};
}

inline std::vector<MatrixQ> family_to_rational(const std::vector<MatrixD>& A) {
  std::vector<MatrixQ> out;
  out.reserve(A.size());
  for (const MatrixD& block : A) out.push_back(to_rational_matrix(block));
  return out;
}

// Rational twin of solve_token_rows: per-cell rows whose pileup through n
// stacked accumulator cells hits prescribed values at output times t >= j.
inline MatrixQ solve_token_rows_q(const MatrixQ& rhs_rows, int n, int j) {
  MatrixQ system(n - j + 1, n);
  for (int t = j; t <= n; ++t) {
    for (int l = 1; l <= n; ++l) {
      system(t - j, l - 1) = Rational(binom(static_cast<long long>(t) + n - l - j, n - l));
    }
  }
  return solve_exact(system, rhs_rows);
}

// Forward-stage solve.  After the forward stage and n backward accumulator
// cells, token i's forward contribution at output time m is
//   sum_{p >= max(m,i)} binom(n-1 + p-m, n-1) C_i[p],
// so pinning it to A_i[m] for every m >= i is one unit-triangular system per
// token (unknowns C_i[n], ..., C_i[i]).
inline std::vector<MatrixQ> solve_future_rows_q(const std::vector<MatrixQ>& Aq, int n, int d_x) {
  std::vector<MatrixQ> C(static_cast<std::size_t>(n), MatrixQ(n, d_x));
  for (int i = 1; i <= n; ++i) {
    const int k = n + 1 - i;
    MatrixQ system(k, k);
    for (int t = 1; t <= k; ++t) {
      for (int j = 1; j <= t; ++j) {
        system(t - 1, j - 1) = Rational(binom(static_cast<long long>(n) + t - 1 - j, n - 1));
      }
    }
    MatrixQ rhs(k, d_x);
    for (int t = 1; t <= k; ++t) {
      for (int c = 0; c < d_x; ++c) rhs(t - 1, c) = Aq[i - 1](n - t, c);
    }
    const MatrixQ sol = solve_exact(system, rhs);  // row j-1 holds C_i[n+1-j]
    for (int j = 1; j <= k; ++j) {
      for (int c = 0; c < d_x; ++c) C[i - 1](n - j, c) = sol(j - 1, c);
    }
  }
  return C;
}

// Backward-stage solve.  A row seeded at position q in backward cell l
// reaches output time m <= q with multiplicity binom((n-l) + q-m, n-l); the
// remaining deficit below each token is the prescribed value minus the
// forward contribution, with zero deficit on the diagonal by construction.
inline std::vector<MatrixQ> solve_backward_rows_q(const std::vector<MatrixQ>& Aq,
                                                  const std::vector<MatrixQ>& C, int n, int d_x) {
  std::vector<MatrixQ> b_bar(static_cast<std::size_t>(n), MatrixQ(n, d_x));
  for (int j = 1; j <= n; ++j) {
    const int token = n + 1 - j;
    MatrixQ rhs(n - j + 1, d_x);
    for (int t = j; t <= n; ++t) {
      for (int c = 0; c < d_x; ++c) {
        Rational v = Aq[token - 1](n - t, c);
        for (int ip = 1; ip <= t; ++ip) {
          const Integer w = binom(static_cast<long long>(n) + t - 1 - ip, n - 1);
          if (w != 0) v -= Rational(w) * C[token - 1](n - ip, c);
        }
        rhs(t - j, c) = v;
      }
    }
    const MatrixQ sol = solve_token_rows_q(rhs, n, j);  // row l-1 holds b_bar_l[token]
    for (int l = 1; l <= n; ++l) {
      for (int c = 0; c < d_x; ++c) b_bar[l - 1](token - 1, c) = sol(l - 1, c);
    }
  }
  return b_bar;
}

// Replays the two-stage recurrence on coefficient matrices and returns the
// largest deviation from the prescribed family, exactly.
inline Rational bidirectional_residual_q(const std::vector<MatrixQ>& Aq,
                                         const std::vector<MatrixQ>& C,
                                         const std::vector<MatrixQ>& b_bar, int n, int d_x) {
  // G[p-1](q-1, :) = coefficient of x[q] in the running stage's value at p.
  std::vector<MatrixQ> prev(static_cast<std::size_t>(n), MatrixQ(n, d_x));
  for (int p = 1; p <= n; ++p) {
    for (int q = 1; q <= p; ++q) {
      for (int c = 0; c < d_x; ++c) prev[p - 1](q - 1, c) = C[q - 1](p - 1, c);
    }
  }
  for (int l = 1; l <= n; ++l) {
    std::vector<MatrixQ> cur(static_cast<std::size_t>(n), MatrixQ(n, d_x));
    for (int p = n; p >= 1; --p) {
      for (int q = 1; q <= n; ++q) {
        for (int c = 0; c < d_x; ++c) {
          Rational v = prev[p - 1](q - 1, c);
          if (p < n) v += cur[p](q - 1, c);
          cur[p - 1](q - 1, c) = v;
        }
      }
      for (int c = 0; c < d_x; ++c) cur[p - 1](p - 1, c) += b_bar[l - 1](p - 1, c);
    }
    prev = std::move(cur);
  }
  Rational worst(0);
  for (int p = 1; p <= n; ++p) {
    for (int q = 1; q <= n; ++q) {
      for (int c = 0; c < d_x; ++c) {
        Rational diff = prev[p - 1](q - 1, c) - Aq[q - 1](p - 1, c);
        if (diff < 0) diff = -diff;
        if (diff > worst) worst = diff;
      }
    }
  }
  return worst;
}

}  // namespace detail

// The exact residual of the two-stage split for a prescribed family, derived
// and checked entirely over rationals.
inline Rational bidirectional_residual(const std::vector<MatrixD>& A, bool allow_large = false) {
  const auto [n, d_x] = detail::family_shape(A, "bidirectional_residual");
  ensure_desk_scale(n, allow_large, "N");
  const std::vector<MatrixQ> Aq = detail::family_to_rational(A);
  const std::vector<MatrixQ> C = detail::solve_future_rows_q(Aq, n, d_x);
  const std::vector<MatrixQ> b = detail::solve_backward_rows_q(Aq, C, n, d_x);
  return detail::bidirectional_residual_q(Aq, C, b, n, d_x);
}

// Solves the two-stage split for a full family: forward coefficients C and
// backward rows b_bar, both exact, with the zero-residual check built in.
inline BidirectionalFamily make_bidirectional_family(const std::vector<MatrixD>& A,
                                                     bool allow_large = false) {
  const auto [n, d_x] = detail::family_shape(A, "make_bidirectional_family");
  ensure_desk_scale(n, allow_large, "N");
  const std::vector<MatrixQ> Aq = detail::family_to_rational(A);
  const std::vector<MatrixQ> Cq = detail::solve_future_rows_q(Aq, n, d_x);
  const std::vector<MatrixQ> bq = detail::solve_backward_rows_q(Aq, Cq, n, d_x);
  if (detail::bidirectional_residual_q(Aq, Cq, bq, n, d_x) != 0) {
    throw ValidationError("the two-stage split left a nonzero residual; the solves disagree");
  }
  BidirectionalFamily fam;
  fam.d_x = d_x;
  fam.N = n;
  fam.A = A;
  for (const MatrixQ& block : Cq) fam.C.push_back(to_double_matrix(block));
  for (const MatrixQ& block : bq) fam.b_bar.push_back(to_double_matrix(block));
  return fam;
}

// ---------------------------------------------------------------------------
// Full-history linear functionals at every token, bidirectional.
// Output at every t: (x[t]; act(sum_{j=1..N} A[j-1](t-1,:) . x[j])).

struct LinearSumTbrnnBuild {
  Network net;
  BidirectionalFamily family;
  // cell_coeff_fwd[l-1](t-1, :) = accumulator row of forward cell l at time t.
  std::vector<MatrixD> cell_coeff_fwd;
  // cell_coeff_bwd[l-1](s-1, :) = accumulator row of backward cell l at its
  // s-th reversed step (position N+1-s).
  std::vector<MatrixD> cell_coeff_bwd;
  int d_x = 0, N = 0;
  bool final_activation = true;
  ActivationProfile act;
};

inline LinearSumTbrnnBuild build_linear_sum_tbrnn(BidirectionalFamily family,
                                                  const ActivationProfile& act,
                                                  const BuildOptions& opts = {}) {
  const int n = family.N;
  const int d_x = family.d_x;
  if (n < 1 || d_x < 1 || static_cast<int>(family.A.size()) != n ||
      static_cast<int>(family.C.size()) != n || static_cast<int>(family.b_bar.size()) != n) {
    throw ValidationError("build_linear_sum_tbrnn needs a solved bidirectional family");
  }
  ensure_desk_scale(n, opts.allow_large, "N");
  activation_profile(act);

  // Forward stage: the causal builder on the forward split (it reads only
  // rows t >= j of each block, where C is defined).
  BuildOptions fwd_opts;
  fwd_opts.apply_final_activation = false;
  fwd_opts.allow_large = opts.allow_large;
  LinearSumTrnnBuild fwd = build_linear_sum_trnn(family.C, act, fwd_opts);

  Network net = std::move(fwd.net);
  const int d = d_x + 1;
  const int acc = d_x;

  // Backward stage: accumulator cells over the reversed stream, each adding
  // its b_bar row while absorbing the incoming value token-wise.
  std::vector<MatrixD> cell_coeff_bwd;
  for (int l = 1; l <= n; ++l) {
    TrnnCell cell;
    cell.act = act;
    MatrixD coeff(n, d_x);
    for (int s = 1; s <= n; ++s) {
      MatrixD a(d, d);
      a(acc, acc) = 1.0;
      MatrixD b = MatrixD::identity(d);
      for (int c = 0; c < d_x; ++c) {
        const double v = family.b_bar[l - 1](n - s, c);
        b(acc, c) = v;
        coeff(s - 1, c) = v;
      }
      cell.A_of_t.push_back(std::move(a));
      cell.B_of_t.push_back(std::move(b));
      cell.theta_of_t.push_back(VectorD(static_cast<std::size_t>(d), 0.0));
    }
    net.cells.push_back(wrap_backward_stage(std::move(cell), d));
    cell_coeff_bwd.push_back(std::move(coeff));
  }
  if (opts.apply_final_activation) {
    net.cells.push_back(detail::tokenwise_activation_cell(d, acc, act));
  }

  LinearSumTbrnnBuild out;
  out.net = std::move(net);
  out.family = std::move(family);
  out.cell_coeff_fwd = std::move(fwd.cell_coeff);
  out.cell_coeff_bwd = std::move(cell_coeff_bwd);
  out.d_x = d_x;
  out.N = n;
  out.final_activation = opts.apply_final_activation;
  out.act = act;
  return out;
}

inline LinearSumTbrnnBuild build_linear_sum_tbrnn(const std::vector<MatrixD>& family,
                                                  const ActivationProfile& act,
                                                  const BuildOptions& opts = {}) {
  return build_linear_sum_tbrnn(make_bidirectional_family(family, opts.allow_large), act, opts);
}

// ---------------------------------------------------------------------------
// Two-layer perceptron over the whole window at every token, bidirectional.
// Unit-by-unit schedule as in the causal builder: forward cells fill the
// buffer with the forward split, backward cells add the rest, one token-wise
// cell activates, and a time-varying merge fans out into the output sums.

struct MlpTbrnnBuild {
  Network net;
  int d_x = 0, d_y = 0, N = 0, units = 0;
  ActivationProfile act;
  // unit_coeff_fwd[i][l-1](t-1, :) = buffer row of unit i's forward cell l at
  // time t; unit_coeff_bwd[i][l-1](s-1, :) = buffer row of its backward cell
  // l at reversed step s.
  std::vector<std::vector<MatrixD>> unit_coeff_fwd;
  std::vector<std::vector<MatrixD>> unit_coeff_bwd;
  // merge_w[i] is d_y x N: column t-1 holds w_i[t] for every output row.
  std::vector<MatrixD> merge_w;
  TwoLayerSurrogate surrogate;
};

inline MlpTbrnnBuild build_mlp_in_tbrnn(const TwoLayerSurrogate& s, const BuildOptions& opts = {}) {
  s.validate();
  if (!s.bidirectional) {
    throw ValidationError(
        "build_mlp_in_tbrnn requires a bidirectional surrogate (bidirectional=true)");
  }
  ensure_desk_scale(s.N, opts.allow_large, "N");
  activation_profile(s.act);

  const int d = s.d_x + s.d_y + 1;
  const int u_slot = s.d_x + s.d_y;
  const int s_base = s.d_x;
  const int n = s.N;

  MlpTbrnnBuild out;
  out.d_x = s.d_x;
  out.d_y = s.d_y;
  out.N = n;
  out.units = s.units;
  out.act = s.act;

  Network net;
  net.lift = detail::reg_passthrough(d, s.d_x);
  for (int i = 0; i < s.units; ++i) {
    // This unit's full-window family and its exact two-stage split.
    std::vector<MatrixD> fam(static_cast<std::size_t>(n), MatrixD(n, s.d_x));
    for (int j = 1; j <= n; ++j) {
      for (int t = 1; t <= n; ++t) {
        for (int c = 0; c < s.d_x; ++c) fam[j - 1](t - 1, c) = s.features[t - 1][i](j - 1, c);
      }
    }
    const BidirectionalFamily bf = make_bidirectional_family(fam, opts.allow_large);

    // Forward cells: per-token pileup solves on the forward split.
    std::vector<MatrixD> coeff(static_cast<std::size_t>(n), MatrixD(n, s.d_x));
    for (int j = 1; j <= n; ++j) {
      MatrixD rhs(n - j + 1, s.d_x);
      for (int t = j; t <= n; ++t) {
        for (int c = 0; c < s.d_x; ++c) rhs(t - j, c) = bf.C[j - 1](t - 1, c);
      }
      const MatrixD rows = detail::solve_token_rows(rhs, n, j);
      for (int l = 0; l < n; ++l) {
        for (int c = 0; c < s.d_x; ++c) coeff[l](j - 1, c) = rows(l, c);
      }
    }
    for (int l = 0; l < n; ++l) {
      TrnnCell cell;
      cell.act = s.act;
      for (int t = 1; t <= n; ++t) {
        MatrixD a(d, d);
        a(u_slot, u_slot) = 1.0;
        MatrixD b = MatrixD::identity(d);
        for (int c = 0; c < s.d_x; ++c) b(u_slot, c) = coeff[l](t - 1, c);
        cell.A_of_t.push_back(std::move(a));
        cell.B_of_t.push_back(std::move(b));
        cell.theta_of_t.push_back(VectorD(static_cast<std::size_t>(d), 0.0));
      }
      net.cells.push_back(std::move(cell));
    }

    // Backward cells: b_bar rows on the reversed stream.
    std::vector<MatrixD> coeff_bwd;
    for (int l = 1; l <= n; ++l) {
      TrnnCell cell;
      cell.act = s.act;
      MatrixD rows(n, s.d_x);
      for (int st = 1; st <= n; ++st) {
        MatrixD a(d, d);
        a(u_slot, u_slot) = 1.0;
        MatrixD b = MatrixD::identity(d);
        for (int c = 0; c < s.d_x; ++c) {
          const double v = bf.b_bar[l - 1](n - st, c);
          b(u_slot, c) = v;
          rows(st - 1, c) = v;
        }
        cell.A_of_t.push_back(std::move(a));
        cell.B_of_t.push_back(std::move(b));
        cell.theta_of_t.push_back(VectorD(static_cast<std::size_t>(d), 0.0));
      }
      net.cells.push_back(wrap_backward_stage(std::move(cell), d));
      coeff_bwd.push_back(std::move(rows));
    }

    net.cells.push_back(detail::tokenwise_activation_cell(d, u_slot, s.act));

    // Merge with time-varying weights, clear the buffer.
    TrnnCell merge;
    merge.act = s.act;
    MatrixD mw(s.d_y, n);
    for (int t = 1; t <= n; ++t) {
      MatrixD b = MatrixD::identity(d);
      b(u_slot, u_slot) = 0.0;
      for (int r = 0; r < s.d_y; ++r) {
        b(s_base + r, u_slot) = s.weights[t - 1](r, i);
        mw(r, t - 1) = s.weights[t - 1](r, i);
      }
      merge.A_of_t.push_back(MatrixD(d, d));
      merge.B_of_t.push_back(std::move(b));
      merge.theta_of_t.push_back(VectorD(static_cast<std::size_t>(d), 0.0));
    }
    net.cells.push_back(std::move(merge));

    out.unit_coeff_fwd.push_back(std::move(coeff));
    out.unit_coeff_bwd.push_back(std::move(coeff_bwd));
    out.merge_w.push_back(std::move(mw));
  }
  net.proj = MatrixD::identity(d);
  out.net = std::move(net);
  out.surrogate = s;
  return out;
}

// ---------------------------------------------------------------------------
// Static-width conversion of the bidirectional builds.  Same level machinery
// as the causal conversion, except every level owns its token counter: a
// counter carried in the token stream goes stale when the stream crosses a
// direction boundary, an own-state count never does.

namespace detail {

// Shift cell with an owned counter, normalizing on request.
inline void emit_shift_cell_owned(Network& net, const ConvLayout& L, const ActivationProfile& act,
                                  const BoxNormalization& norm, bool normalize) {
  RnnCell cell = conv_blank(L, act);
  conv_pass(cell, L.acc);
  for (int r : L.sums) conv_pass(cell, r);
  const int slot = conv_own_counter(L, cell);
  for (int i = 0; i < L.d_x; ++i) {
    cell.A(i, slot) = 1.0;
    cell.theta[static_cast<std::size_t>(i)] = 1.0;
  }
  for (int i = 0; i < L.d_x; ++i) {
    if (normalize) {
      cell.B(i, i) = 1.0 / norm.scale[static_cast<std::size_t>(i)];
      cell.theta[static_cast<std::size_t>(i)] -=
          norm.lo[static_cast<std::size_t>(i)] / norm.scale[static_cast<std::size_t>(i)];
    } else {
      cell.B(i, i) = 1.0;
    }
  }
  net.cells.emplace_back(std::move(cell));
}

// Close cell with an owned counter: accumulate into acc, unshift registers.
inline void emit_close_cell_owned(Network& net, const ConvLayout& L, const ActivationProfile& act,
                                  const SelectorPlan& plan) {
  RnnCell cell = conv_blank(L, act);
  for (int r : L.sums) conv_pass(cell, r);
  for (int i = 0; i < L.d_x; ++i) cell.B(i, i) = 1.0;
  const int slot = conv_own_counter(L, cell);
  for (int i = 0; i < L.d_x; ++i) {
    cell.A(i, slot) = -1.0;
    cell.theta[static_cast<std::size_t>(i)] = -1.0;
  }
  cell.A(L.acc, L.acc) = 1.0;
  cell.B(L.acc, L.acc) = 1.0;
  if (!plan.units.empty()) cell.B(L.acc, L.s) = plan.units.back().out_coefs[0];
  cell.theta[static_cast<std::size_t>(L.acc)] = plan.constants[0];
  net.cells.emplace_back(std::move(cell));
}

// One level with owned counters; the first level of the chain normalizes.
inline void emit_level_owned(Network& net, const ConvLayout& L, const ActivationProfile& act,
                             const MatrixD& coeff, const BoxNormalization& norm, double eta,
                             int n, bool normalize) {
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
  emit_shift_cell_owned(net, L, act, norm, normalize);
  emit_unit_cells(net, L, act, plan, probe_rows, {L.acc});
  emit_close_cell_owned(net, L, act, plan);
}

// A level running over the reversed stream: emit its cells into a staging
// stack, then wrap each one.  coeff rows are indexed by the reversed step.
inline void emit_backward_level_owned(Network& net, const ConvLayout& L,
                                      const ActivationProfile& act, const MatrixD& coeff,
                                      const BoxNormalization& norm, double eta, int n) {
  Network stage;
  emit_level_owned(stage, L, act, coeff, norm, eta, n, false);
  for (Cell& c : stage.cells) {
    net.cells.push_back(wrap_backward_stage(std::move(std::get<RnnCell>(c)), L.width));
  }
}

// Merge stage with an owned counter in its buffer-shift cell.
inline void emit_merge_stage_owned(Network& net, const ConvLayout& L, const ActivationProfile& act,
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
    MatrixD sl(n, 1);
    for (int t = 0; t < n; ++t) {
      sl(t, 0) = merge_w(r, t);
      offs(r, t) = merge_w(r, t) * u_lo;
    }
    slopes.push_back(std::move(sl));
  }
  const SelectorPlan plan = plan_box_selector(slopes, offs, geom, eta_eff, act);

  {  // M1: buffer shift driven by an owned counter
    RnnCell cell = conv_blank(L, act);
    for (int i = 0; i < L.d_x; ++i) conv_pass(cell, i);
    for (int r : L.sums) conv_pass(cell, r);
    cell.B(L.acc, L.acc) = 1.0;
    const int slot = conv_own_counter(L, cell);
    cell.A(L.acc, slot) = geom.spacing;
    cell.theta[static_cast<std::size_t>(L.acc)] = geom.spacing;
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

}  // namespace detail

// Converts a bidirectional linear-sum build into time-invariant cells (the
// backward levels wrapped to run over the reversed stream) of width
// d_x + 2 + gamma(sigma).
inline ConvertedRnnBuild build_tbrnn_to_brnn(const LinearSumTbrnnBuild& src, const DomainBox& K,
                                             double eps, const ConvertOptions& opts = {}) {
  const detail::ConvLayout L = detail::linear_layout(src.d_x, src.act.gamma);
  const detail::BoxNormalization norm = detail::conv_normalization(K);

  auto build_at = [&](double eta) {
    Network net;
    net.lift = detail::reg_passthrough(L.width, src.d_x);
    bool first = true;
    for (int l = 0; l < src.N; ++l) {
      detail::emit_level_owned(net, L, src.act, src.cell_coeff_fwd[static_cast<std::size_t>(l)],
                               norm, eta, src.N, first);
      first = false;
    }
    for (int l = 0; l < src.N; ++l) {
      detail::emit_backward_level_owned(
          net, L, src.act, src.cell_coeff_bwd[static_cast<std::size_t>(l)], norm, eta, src.N);
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

// Converts a bidirectional two-layer build (per-unit forward and backward
// levels, buffer activation, time-varying merge) into time-invariant cells
// of width d_x + d_y + 2 + gamma(sigma).
inline ConvertedRnnBuild build_tbrnn_to_brnn(const MlpTbrnnBuild& src, const DomainBox& K,
                                             double eps, const ConvertOptions& opts = {}) {
  const detail::ConvLayout L = detail::mlp_layout(src.d_x, src.d_y, src.act.gamma);
  const detail::BoxNormalization norm = detail::conv_normalization(K);

  // Buffer range per unit: interval bounds of the unit pre-activation over
  // the whole window, mapped through the (monotone) activation.
  std::vector<double> u_los, u_his;
  for (int i = 0; i < src.units; ++i) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (int t = 1; t <= src.N; ++t) {
      double plo = 0.0, phi = 0.0;
      for (int j = 1; j <= src.N; ++j) {
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
    bool first = true;
    for (int i = 0; i < src.units; ++i) {
      for (int l = 0; l < src.N; ++l) {
        detail::emit_level_owned(
            net, L, src.act,
            src.unit_coeff_fwd[static_cast<std::size_t>(i)][static_cast<std::size_t>(l)], norm,
            eta, src.N, first);
        first = false;
      }
      for (int l = 0; l < src.N; ++l) {
        detail::emit_backward_level_owned(
            net, L, src.act,
            src.unit_coeff_bwd[static_cast<std::size_t>(i)][static_cast<std::size_t>(l)], norm,
            eta, src.N);
      }
      detail::emit_buffer_activation_cell(net, L, src.act);
      detail::emit_merge_stage_owned(net, L, src.act, src.merge_w[static_cast<std::size_t>(i)],
                                     u_los[static_cast<std::size_t>(i)],
                                     u_his[static_cast<std::size_t>(i)], eta, src.N);
    }
    detail::emit_unnormalize_cell(net, L, src.act, norm);
    net.proj = MatrixD(src.d_x + src.d_y + 1, L.width);
    for (int i = 0; i < src.d_x; ++i) net.proj(i, i) = 1.0;
    for (int r = 0; r < src.d_y; ++r) {
      net.proj(src.d_x + r, L.sums[static_cast<std::size_t>(r)]) = 1.0;
    }
    net.proj(src.d_x + src.d_y, L.acc) = 1.0;
    return net;
  };
  return detail::conv_run_ladder(src.net, K, src.d_x, src.N, eps, opts, build_at);
}

// ---------------------------------------------------------------------------
// End-to-end bidirectional sequence-to-sequence realization at width exactly
// d_x + d_y + 3 + alpha(sigma).

inline SeqToSeqBuild build_brnn_seq_to_seq(const TwoLayerSurrogate& s, const DomainBox& K,
                                           double eps, const AssembleOptions& opts = {}) {
  if (!(eps > 0.0)) {
    throw ValidationError("build_brnn_seq_to_seq requires a positive tolerance");
  }
  K.validate();
  if (K.dim() != s.d_x) {
    throw ValidationError("domain box dimension " + std::to_string(K.dim()) +
                          " does not match the target input dimension " + std::to_string(s.d_x));
  }

  const MlpTbrnnBuild tbrnn = build_mlp_in_tbrnn(s);
  const ConvertedRnnBuild conv = build_tbrnn_to_brnn(tbrnn, K, eps / 2.0, opts.convert);
  Network staged = conv.net;
  detail::keep_output_rows(staged, s.d_x, s.d_y);

  const std::vector<Seq> inputs = detail::sample_domain_seqs(K, s.N, opts.samples, opts.seed);
  const auto measure = [&](const Network& net) {
    return detail::sup_every_token_diff(net, s, inputs);
  };

  SeqToSeqBuild out;
  out.d_x = s.d_x;
  out.d_y = s.d_y;
  out.N = s.N;
  out.eta_used = conv.eta_used;

  if (s.act.is_relu()) {
    DemodifyParams dp;
    dp.horizon = s.N;
    dp.samples = opts.samples;
    dp.seed = opts.seed + 17;
    DemodifiedBuild d = demodify(staged, K, dp);
    out.achieved_error = measure(d.net);
    if (out.achieved_error > eps) {
      throw ToleranceError("bidirectional seq-to-seq rewrite left error " +
                           std::to_string(out.achieved_error) +
                           ", above the requested tolerance " + std::to_string(eps));
    }
    out.net = std::move(d.net);
  } else {
    DemodifiedBuild d =
        detail::rewrite_to_tolerance(staged, K, s.N, eps, opts, "bidirectional seq-to-seq",
                                     measure, &out.achieved_error, &out.delta_used);
    out.net = std::move(d.net);
  }

  const int bound = s.d_x + s.d_y + 3 + s.act.alpha;
  if (width(out.net) > bound) {
    throw ValidationError("bidirectional seq-to-seq width " + std::to_string(width(out.net)) +
                          " exceeds the stated bound " + std::to_string(bound));
  }
  if (width(out.net) < bound) detail::pad_plain_width(out.net, bound);
  return out;
}

// ---------------------------------------------------------------------------
// Bidirectional quantize/memorize/decode pipeline.  The per-token code pair
// (forward prefix, backward prefix) splices into the whole quantized
// sequence, so the memorizer reads the target with full future context.

// Width-one encoder recurrences in both directions, concatenated per token:
// out[t] = (R_fwd[t]; R_bwd[N+1-t]).
inline BrnnCell make_bidirectional_encoder_cell(int d_x, int M) {
  BrnnCell cell;
  cell.forward = make_encoder_cell(d_x, M);
  cell.backward = make_encoder_cell(d_x, M);
  cell.W = MatrixD(2, 1);
  cell.W(0, 0) = 1.0;
  cell.W_bar = MatrixD(2, 1);
  cell.W_bar(1, 0) = 1.0;
  return cell;
}

// Widths the realized bidirectional stages need: the double encoder and the
// decode stage dominate; saturating activations add the persistent counter.
inline int brnn_lp_width_ledger(int d_x, int d_y, const ActivationProfile& act) {
  return std::max(d_x + 1, d_y) + act.gamma;
}

struct BrnnLpPipeline {
  LpPipeline base;
  BrnnCell encoder_cell;  // both directions of the width-one recurrence
  int width_ledger = 0;
};

inline BrnnLpPipeline build_brnn_lp(const LpPipeline& base) {
  BrnnLpPipeline out;
  out.base = base;
  out.encoder_cell = make_bidirectional_encoder_cell(base.d_x, base.M);
  out.width_ledger = brnn_lp_width_ledger(base.d_x, base.d_y, base.act);
  return out;
}

// Re-encode the target's value at the token where the two prefixes meet.
// The forward code covers tokens 1..t, the backward code tokens N..t; they
// must overlap in exactly one token and agree on it.
inline double memorize_bidirectional(double code_f, double code_b, const LpPipeline& pipe) {
  const CodePeel fwd = peel_code(code_f, pipe.d_x, pipe.M, pipe.N);
  const CodePeel bwd = peel_code(code_b, pipe.d_x, pipe.M, pipe.N);
  if (fwd.t + bwd.t != pipe.N + 1) {
    throw DomainError("prefix codes cover " + std::to_string(fwd.t) + " and " +
                      std::to_string(bwd.t) + " tokens; a length-" + std::to_string(pipe.N) +
                      " sequence needs them to overlap in exactly one token");
  }
  Seq full(pipe.d_x, pipe.N);
  for (int p = 1; p <= fwd.t; ++p) full.set_token(p, fwd.prefix.token(p));
  for (int p = fwd.t; p <= pipe.N; ++p) {
    const VectorD v = bwd.prefix.token(pipe.N + 1 - p);
    if (p == fwd.t) {
      const VectorD w = fwd.prefix.token(p);
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] != w[i]) {
          throw DomainError("the overlapping token decoded differently from the two directions");
        }
      }
      continue;
    }
    full.set_token(p, v);
  }
  const Seq y = pipe.f(full);
  if (y.dim() != pipe.d_y || y.length() != pipe.N) {
    throw ValidationError("target evaluator returned a " + std::to_string(y.dim()) + " x " +
                          std::to_string(y.length()) + " sequence, expected " +
                          std::to_string(pipe.d_y) + " x " + std::to_string(pipe.N));
  }
  return encode(y.token(fwd.t), pipe.M_prime);
}

inline LpRunReport run_brnn_pipeline(const BrnnLpPipeline& blp, const Seq& x) {
  const LpPipeline& pipe = blp.base;
  if (x.dim() != pipe.d_x || x.length() != pipe.N) {
    throw ValidationError("pipeline input must be " + std::to_string(pipe.d_x) + " x " +
                          std::to_string(pipe.N) + ", got " + std::to_string(x.dim()) + " x " +
                          std::to_string(x.length()));
  }
  for (int t = 1; t <= pipe.N; ++t) {
    for (std::size_t i = 0; i < x.values.rows(); ++i) {
      const double v = x.values(i, static_cast<std::size_t>(t - 1));
      if (!(v >= 0.0 && v <= 1.0)) {
        throw DomainError("pipeline inputs live in the unit box; token " + std::to_string(t) +
                          " coordinate " + std::to_string(i) + " is " + std::to_string(v));
      }
    }
  }

  Seq per_token(1, pipe.N);
  for (int t = 1; t <= pipe.N; ++t) {
    per_token.values(0, static_cast<std::size_t>(t - 1)) = encode(x.token(t), pipe.M);
  }
  const Seq codes = eval_brnn_cell(blp.encoder_cell, per_token);
  const Seq want = pipe.f(x);
  LpRunReport rep;
  rep.output = Seq(pipe.d_y, pipe.N);
  rep.deviation.resize(static_cast<std::size_t>(pipe.N));
  for (int t = 1; t <= pipe.N; ++t) {
    const double m = memorize_bidirectional(codes.values(0, static_cast<std::size_t>(t - 1)),
                                            codes.values(1, static_cast<std::size_t>(t - 1)), pipe);
    VectorD y = decode(m, pipe.M_prime, pipe.d_y);
    for (double& v : y) v = project_clip(v, pipe.L, pipe.delta_clip);
    rep.output.set_token(t, y);
    double dev = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      dev = std::max(dev, std::abs(y[i] - want.values(i, static_cast<std::size_t>(t - 1))));
    }
    rep.deviation[static_cast<std::size_t>(t - 1)] = dev;
    rep.sup_deviation = std::max(rep.sup_deviation, dev);
  }
  rep.width_ledger = blp.width_ledger;
  return rep;
}

}  // namespace seqnet
