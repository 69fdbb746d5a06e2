#pragma once

// Recurrent cell types and their evaluators.
//
// Conventions used throughout:
//  * A sequence is a d x N matrix; token t (1-based) is column t-1.
//  * A cell maps an input sequence to a state sequence of the same length:
//      y[t] = act_I( A y[t-1] + B x[t] + theta ),   y[0] = initial state.
//    act_I applies the activation only to components in the modified index
//    set I (0-based); components outside I pass through affinely.  A cell
//    with every component in I is "plain"; I empty makes the cell affine.
//  * Time-enhanced cells carry per-step parameter lists indexed by the
//    output time: A_of_t[t-1] etc. produce y[t].
//  * Evaluation never mutates the cell and has no hidden state; the zero
//    initial state is the stored default.

#include <algorithm>
#include <variant>
#include <vector>

#include "seqnet/activation.hpp"
#include "seqnet/errors.hpp"
#include "seqnet/matrix.hpp"

namespace seqnet {

struct Seq {
  MatrixD values;  // d rows, N columns

  Seq() = default;
  Seq(int d, int length) : values(static_cast<std::size_t>(d), static_cast<std::size_t>(length)) {}

  int dim() const { return static_cast<int>(values.rows()); }
  int length() const { return static_cast<int>(values.cols()); }

  VectorD token(int t) const {  // 1-based
    VectorD out(values.rows());
    for (std::size_t i = 0; i < values.rows(); ++i) out[i] = values(i, t - 1);
    return out;
  }
  void set_token(int t, const VectorD& v) {
    for (std::size_t i = 0; i < values.rows(); ++i) values(i, t - 1) = v[i];
  }

  Seq reversed() const {
    Seq out(dim(), length());
    for (int t = 1; t <= length(); ++t) out.set_token(t, token(length() + 1 - t));
    return out;
  }

  friend bool operator==(const Seq& a, const Seq& b) { return a.values == b.values; }
};

struct RnnCell {
  MatrixD A;      // d_s x d_s recurrence
  MatrixD B;      // d_s x d_in input map
  VectorD theta;  // d_s bias
  ActivationProfile act;
  std::vector<int> modified_set;  // sorted 0-based indices receiving the activation
  VectorD initial_state;          // empty means zero

  int state_dim() const { return static_cast<int>(B.rows()); }
  int input_dim() const { return static_cast<int>(B.cols()); }
  bool is_plain() const { return static_cast<int>(modified_set.size()) == state_dim(); }
};

struct TrnnCell {
  std::vector<MatrixD> A_of_t;  // entry t-1 produces y[t]
  std::vector<MatrixD> B_of_t;
  std::vector<VectorD> theta_of_t;
  ActivationProfile act;
  std::vector<int> modified_set;
  VectorD initial_state;

  int steps() const { return static_cast<int>(B_of_t.size()); }
  int state_dim() const { return B_of_t.empty() ? 0 : static_cast<int>(B_of_t[0].rows()); }
  int input_dim() const { return B_of_t.empty() ? 0 : static_cast<int>(B_of_t[0].cols()); }
};

// Gated cells follow the standard recurrences; all twelve (nine) parameter
// blocks are explicit so reductions can install exactly the blocks they use.
struct LstmCell {
  MatrixD W_i, U_i;
  VectorD b_i;
  MatrixD W_f, U_f;
  VectorD b_f;
  MatrixD W_g, U_g;
  VectorD b_g;
  MatrixD W_o, U_o;
  VectorD b_o;

  int state_dim() const { return static_cast<int>(W_i.rows()); }
  int input_dim() const { return static_cast<int>(W_i.cols()); }
};

struct GruCell {
  MatrixD W_r, U_r;
  VectorD b_r;
  MatrixD W_z, U_z;
  VectorD b_z;
  MatrixD W_h, U_h;
  VectorD b_h;

  int state_dim() const { return static_cast<int>(W_h.rows()); }
  int input_dim() const { return static_cast<int>(W_h.cols()); }
};

// A bidirectional stage: the forward cell reads the sequence as-is, the
// backward cell reads it reversed, and the token-wise combiners merge the
// two state sequences (backward re-reversed to forward order first):
//   out[t] = W yfwd[t] + W_bar ybwd[N+1-t].
struct BrnnCell {
  std::variant<RnnCell, TrnnCell> forward;
  std::variant<RnnCell, TrnnCell> backward;
  MatrixD W;      // d_out x d_fwd
  MatrixD W_bar;  // d_out x d_bwd

  int output_dim() const { return static_cast<int>(W.rows()); }
};

using Cell = std::variant<RnnCell, TrnnCell, LstmCell, GruCell, BrnnCell>;

namespace detail {

inline void apply_modified(const ActivationProfile& act, const std::vector<int>& modified_set,
                           VectorD& pre) {
  for (int idx : modified_set) pre[static_cast<std::size_t>(idx)] = act(pre[idx]);
}

inline VectorD initial_or_zero(const VectorD& stored, int d) {
  if (stored.empty()) return VectorD(static_cast<std::size_t>(d), 0.0);
  return stored;
}

}  // namespace detail

inline Seq eval_rnn_cell(const RnnCell& cell, const Seq& x) {
  if (x.dim() != cell.input_dim()) {
    throw ValidationError("rnn cell expects input dim " + std::to_string(cell.input_dim()) +
                          ", got " + std::to_string(x.dim()));
  }
  const int d = cell.state_dim();
  Seq y(d, x.length());
  VectorD state = detail::initial_or_zero(cell.initial_state, d);
  for (int t = 1; t <= x.length(); ++t) {
    VectorD pre = matvec(cell.A, state);
    const VectorD bx = matvec(cell.B, x.token(t));
    for (int i = 0; i < d; ++i) pre[i] += bx[i] + (cell.theta.empty() ? 0.0 : cell.theta[i]);
    detail::apply_modified(cell.act, cell.modified_set, pre);
    y.set_token(t, pre);
    state = std::move(pre);
  }
  return y;
}

inline Seq eval_trnn_cell(const TrnnCell& cell, const Seq& x) {
  if (x.length() != cell.steps()) {
    throw ValidationError("time-enhanced cell built for length " + std::to_string(cell.steps()) +
                          ", got sequence of length " + std::to_string(x.length()));
  }
  if (x.dim() != cell.input_dim()) {
    throw ValidationError("time-enhanced cell expects input dim " +
                          std::to_string(cell.input_dim()) + ", got " + std::to_string(x.dim()));
  }
  const int d = cell.state_dim();
  Seq y(d, x.length());
  VectorD state = detail::initial_or_zero(cell.initial_state, d);
  for (int t = 1; t <= x.length(); ++t) {
    VectorD pre = matvec(cell.A_of_t[t - 1], state);
    const VectorD bx = matvec(cell.B_of_t[t - 1], x.token(t));
    const VectorD& th = cell.theta_of_t[t - 1];
    for (int i = 0; i < d; ++i) pre[i] += bx[i] + (th.empty() ? 0.0 : th[i]);
    detail::apply_modified(cell.act, cell.modified_set, pre);
    y.set_token(t, pre);
    state = std::move(pre);
  }
  return y;
}

inline Seq eval_lstm_cell(const LstmCell& cell, const Seq& x) {
  if (x.dim() != cell.input_dim()) {
    throw ValidationError("lstm cell expects input dim " + std::to_string(cell.input_dim()) +
                          ", got " + std::to_string(x.dim()));
  }
  const int d = cell.state_dim();
  const auto sigm = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  Seq out(d, x.length());
  VectorD c(d, 0.0), h(d, 0.0);
  for (int t = 1; t <= x.length(); ++t) {
    const VectorD xt = x.token(t);
    const VectorD iw = matvec(cell.W_i, xt), iu = matvec(cell.U_i, h);
    const VectorD fw = matvec(cell.W_f, xt), fu = matvec(cell.U_f, h);
    const VectorD gw = matvec(cell.W_g, xt), gu = matvec(cell.U_g, h);
    const VectorD ow = matvec(cell.W_o, xt), ou = matvec(cell.U_o, h);
    for (int k = 0; k < d; ++k) {
      const double i_g = sigm(iw[k] + iu[k] + cell.b_i[k]);
      const double f_g = sigm(fw[k] + fu[k] + cell.b_f[k]);
      const double g_g = std::tanh(gw[k] + gu[k] + cell.b_g[k]);
      const double o_g = sigm(ow[k] + ou[k] + cell.b_o[k]);
      c[k] = f_g * c[k] + i_g * g_g;
      h[k] = o_g * std::tanh(c[k]);
    }
    out.set_token(t, h);
  }
  return out;
}

inline Seq eval_gru_cell(const GruCell& cell, const Seq& x) {
  if (x.dim() != cell.input_dim()) {
    throw ValidationError("gru cell expects input dim " + std::to_string(cell.input_dim()) +
                          ", got " + std::to_string(x.dim()));
  }
  const int d = cell.state_dim();
  const auto sigm = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  Seq out(d, x.length());
  VectorD h(d, 0.0);
  for (int t = 1; t <= x.length(); ++t) {
    const VectorD xt = x.token(t);
    const VectorD rw = matvec(cell.W_r, xt), ru = matvec(cell.U_r, h);
    const VectorD zw = matvec(cell.W_z, xt), zu = matvec(cell.U_z, h);
    VectorD rh(d, 0.0);
    for (int k = 0; k < d; ++k) rh[k] = sigm(rw[k] + ru[k] + cell.b_r[k]) * h[k];
    const VectorD hw = matvec(cell.W_h, xt), hu = matvec(cell.U_h, rh);
    for (int k = 0; k < d; ++k) {
      const double z_g = sigm(zw[k] + zu[k] + cell.b_z[k]);
      const double cand = std::tanh(hw[k] + hu[k] + cell.b_h[k]);
      h[k] = (1.0 - z_g) * h[k] + z_g * cand;
    }
    out.set_token(t, h);
  }
  return out;
}

inline Seq eval_directional(const std::variant<RnnCell, TrnnCell>& cell, const Seq& x) {
  if (std::holds_alternative<RnnCell>(cell)) return eval_rnn_cell(std::get<RnnCell>(cell), x);
  return eval_trnn_cell(std::get<TrnnCell>(cell), x);
}

inline Seq eval_brnn_cell(const BrnnCell& cell, const Seq& x) {
  const Seq yf = eval_directional(cell.forward, x);
  const Seq yb = eval_directional(cell.backward, x.reversed());
  const int n = x.length();
  Seq out(cell.output_dim(), n);
  for (int t = 1; t <= n; ++t) {
    VectorD v = matvec(cell.W, yf.token(t));
    const VectorD vb = matvec(cell.W_bar, yb.token(n + 1 - t));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += vb[i];
    out.set_token(t, v);
  }
  return out;
}

inline Seq eval_cell(const Cell& cell, const Seq& x) {
  return std::visit(
      [&](const auto& c) -> Seq {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, RnnCell>) {
          return eval_rnn_cell(c, x);
        } else if constexpr (std::is_same_v<T, TrnnCell>) {
          return eval_trnn_cell(c, x);
        } else if constexpr (std::is_same_v<T, LstmCell>) {
          return eval_lstm_cell(c, x);
        } else if constexpr (std::is_same_v<T, GruCell>) {
          return eval_gru_cell(c, x);
        } else {
          return eval_brnn_cell(c, x);
        }
      },
      cell);
}

inline int cell_state_dim(const Cell& cell) {
  return std::visit(
      [](const auto& c) -> int {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, BrnnCell>) {
          const int df = std::visit([](const auto& d) { return d.state_dim(); }, c.forward);
          const int db = std::visit([](const auto& d) { return d.state_dim(); }, c.backward);
          return std::max(df, db);
        } else {
          return c.state_dim();
        }
      },
      cell);
}

inline int cell_output_dim(const Cell& cell) {
  return std::visit(
      [](const auto& c) -> int {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, BrnnCell>) {
          return c.output_dim();
        } else {
          return c.state_dim();
        }
      },
      cell);
}

inline int cell_input_dim(const Cell& cell) {
  return std::visit(
      [](const auto& c) -> int {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, BrnnCell>) {
          return std::visit([](const auto& d) { return d.input_dim(); }, c.forward);
        } else {
          return c.input_dim();
        }
      },
      cell);
}

// Wraps a recurrent stage so it runs over the reversed sequence: the wrapper
// evaluates the cell on the reversed stream and taps its states back into
// forward order unchanged (W = 0, W_bar = I).  An inert one-row forward cell
// carries the stage's input dimension; the zero tap discards its value.
inline Cell wrap_backward_stage(std::variant<RnnCell, TrnnCell> cell, int dim_in) {
  const int d_out = std::visit([](const auto& c) { return c.state_dim(); }, cell);
  const ActivationProfile act = std::visit([](const auto& c) { return c.act; }, cell);
  RnnCell idle;
  idle.A = MatrixD(1, 1);
  idle.B = MatrixD(1, static_cast<std::size_t>(dim_in));
  idle.theta = VectorD{0.0};
  idle.act = act;
  idle.modified_set = {0};
  BrnnCell w;
  w.forward = std::move(idle);
  w.backward = std::move(cell);
  w.W = MatrixD(static_cast<std::size_t>(d_out), 1);
  w.W_bar = MatrixD::identity(static_cast<std::size_t>(d_out));
  return Cell{std::move(w)};
}

// The reverse view: the wrapped time-invariant cell of a backward stage in
// the shape wrap_backward_stage emits (zero forward tap, identity backward
// tap), or nullptr when the combiner genuinely mixes both directions.
inline const RnnCell* unwrap_backward_stage(const BrnnCell& c) {
  if (!std::holds_alternative<RnnCell>(c.backward)) return nullptr;
  const RnnCell& cell = std::get<RnnCell>(c.backward);
  const std::size_t d = static_cast<std::size_t>(cell.state_dim());
  if (c.W_bar.rows() != d || c.W_bar.cols() != d || c.W.rows() != d) return nullptr;
  for (std::size_t i = 0; i < c.W.rows(); ++i) {
    for (std::size_t j = 0; j < c.W.cols(); ++j) {
      if (c.W(i, j) != 0.0) return nullptr;
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (c.W_bar(i, j) != (i == j ? 1.0 : 0.0)) return nullptr;
    }
  }
  return &cell;
}

inline RnnCell* unwrap_backward_stage(BrnnCell& c) {
  return const_cast<RnnCell*>(unwrap_backward_stage(static_cast<const BrnnCell&>(c)));
}

}  // namespace seqnet
