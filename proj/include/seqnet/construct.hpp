#pragma once

// Constructive builders: narrow recurrent networks that reproduce, exactly,
// (a) linear functionals of the whole input history and (b) two-layer
// perceptrons read on the input history, using one extra accumulator slot.
//
// The mechanism is the same everywhere.  A stack of affine cells, each
// carrying the input registers token-wise plus one accumulator component with
// unit self-feedback, telescopes into a weighted sum whose weights are
// monotone lattice-path counts (binomial coefficients).  Solving the exact
// path-count system for the per-cell bottom rows makes the final accumulator
// equal any prescribed linear functional.  The activation is applied by one
// trailing token-wise cell; every construction here is exact up to float
// rounding, all coefficient solves run over rationals.
//
// Component layouts (0-based):
//   linear-sum nets:  [ x registers (d_x) | accumulator ]
//   mlp nets:         [ x registers (d_x) | sums S_1..S_dy | buffer U ]

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "seqnet/activation.hpp"
#include "seqnet/errors.hpp"
#include "seqnet/exact.hpp"
#include "seqnet/network.hpp"

namespace seqnet {

struct WidthSurcharges {
  int beta = 0;
  int gamma = 0;
  int alpha = 0;
};

// Surcharge lookup with the non-degeneracy check (slope at the base point).
inline WidthSurcharges activation_profile(const ActivationProfile& act) {
  if (act.is_smooth() && act.dsigma_at_z0 == 0.0) {
    throw ValidationError("activation '" + act.name + "' is degenerate at its base point");
  }
  return {act.beta, act.gamma, act.alpha};
}

// Axis-aligned input domain, one interval per coordinate.
struct DomainBox {
  VectorD lo, hi;

  int dim() const { return static_cast<int>(lo.size()); }
  static DomainBox unit(int d) {
    return DomainBox{VectorD(static_cast<std::size_t>(d), 0.0),
                     VectorD(static_cast<std::size_t>(d), 1.0)};
  }
  void validate() const {
    if (lo.size() != hi.size()) throw ValidationError("domain box lo/hi size mismatch");
    for (std::size_t i = 0; i < lo.size(); ++i) {
      if (!(lo[i] < hi[i])) {
        throw ValidationError("domain box has empty interval at coordinate " + std::to_string(i));
      }
    }
  }
};

// A two-layer target read on sequence prefixes: at output time t,
//   value_r(t) = sum_i weights[t-1](r,i) * act( sum_j features[t-1][i](j-1,:) . x[j] )
// with j ranging over 1..t, or over the whole window 1..N when bidirectional.
struct TwoLayerSurrogate {
  int d_x = 0, d_y = 0, N = 0, units = 0;
  bool bidirectional = false;
  ActivationProfile act;
  std::vector<MatrixD> weights;                 // per t: d_y x units
  std::vector<std::vector<MatrixD>> features;   // per t, per unit: window x d_x

  int window(int t) const { return bidirectional ? N : t; }

  void validate() const {
    if (static_cast<int>(weights.size()) != N || static_cast<int>(features.size()) != N) {
      throw ValidationError("surrogate must carry weights/features for every output time");
    }
    for (int t = 1; t <= N; ++t) {
      if (static_cast<int>(weights[t - 1].rows()) != d_y ||
          static_cast<int>(weights[t - 1].cols()) != units) {
        throw ValidationError("surrogate weights at t=" + std::to_string(t) + " must be d_y x M");
      }
      if (static_cast<int>(features[t - 1].size()) != units) {
        throw ValidationError("surrogate features at t=" + std::to_string(t) +
                              " must list every unit");
      }
      for (const MatrixD& f : features[t - 1]) {
        if (static_cast<int>(f.rows()) != window(t) || static_cast<int>(f.cols()) != d_x) {
          throw ValidationError("surrogate feature block at t=" + std::to_string(t) +
                                " has wrong shape");
        }
      }
    }
  }
};

inline VectorD surrogate_value(const TwoLayerSurrogate& s, const Seq& x, int t) {
  VectorD out(static_cast<std::size_t>(s.d_y), 0.0);
  const int win = s.window(t);
  for (int i = 0; i < s.units; ++i) {
    double pre = 0.0;
    for (int j = 1; j <= win; ++j) {
      const VectorD xj = x.token(j);
      for (int c = 0; c < s.d_x; ++c) pre += s.features[t - 1][i](j - 1, c) * xj[c];
    }
    const double h = s.act(pre);
    for (int r = 0; r < s.d_y; ++r) out[r] += s.weights[t - 1](r, i) * h;
  }
  return out;
}

inline Seq surrogate_seq(const TwoLayerSurrogate& s, const Seq& x) {
  Seq out(s.d_y, x.length());
  for (int t = 1; t <= x.length(); ++t) out.set_token(t, surrogate_value(s, x, t));
  return out;
}

namespace detail {

inline MatrixD reg_passthrough(int d, int d_in) {
  // Identity on the shared components (registers, sums); extra rows zero.
  MatrixD b(d, d_in);
  const int k = std::min(d, d_in);
  for (int i = 0; i < k; ++i) b(i, i) = 1.0;
  return b;
}

// Seeded sample of input sequences over K^n: the all-low and all-high
// corners, six mixed corner patterns, then uniform draws.  Shared by the
// approximation stages that certify their error on samples.
inline std::vector<Seq> sample_domain_seqs(const DomainBox& K, int n, int samples,
                                           unsigned seed) {
  const int d = K.dim();
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Seq> out;
  for (int s = 0; s < samples; ++s) {
    Seq x(d, n);
    for (int t = 1; t <= n; ++t) {
      VectorD v(static_cast<std::size_t>(d));
      for (int i = 0; i < d; ++i) {
        double u;
        if (s == 0) {
          u = 0.0;
        } else if (s == 1) {
          u = 1.0;
        } else if (s < 8) {
          u = ((s >> ((t + i) % 3)) & 1) ? 1.0 : 0.0;
        } else {
          u = unit(rng);
        }
        v[static_cast<std::size_t>(i)] =
            K.lo[static_cast<std::size_t>(i)] +
            u * (K.hi[static_cast<std::size_t>(i)] - K.lo[static_cast<std::size_t>(i)]);
      }
      x.set_token(t, v);
    }
    out.push_back(std::move(x));
  }
  return out;
}

inline RnnCell affine_cell(MatrixD a, MatrixD b, VectorD theta, ActivationProfile act) {
  RnnCell c;
  c.A = std::move(a);
  c.B = std::move(b);
  c.theta = std::move(theta);
  c.act = std::move(act);
  return c;  // empty modified set: fully affine
}

inline RnnCell tokenwise_activation_cell(int d, int component, ActivationProfile act) {
  RnnCell c;
  c.A = MatrixD(d, d);
  c.B = MatrixD::identity(d);
  c.theta = VectorD(static_cast<std::size_t>(d), 0.0);
  c.act = std::move(act);
  c.modified_set = {component};
  return c;
}

// Solve the full-history system: coefficients of x[j] in the final
// accumulator after N stacked accumulator cells are (Lambda_N^T b)_j, so the
// per-cell rows solve Lambda_N^T b = coeff.
inline MatrixD solve_full_history_rows(const MatrixD& coeff, int n) {
  const MatrixQ system = lambda_matrix(n).transposed();
  const MatrixQ rows = solve_exact(system, to_rational_matrix(coeff));
  return to_double_matrix(rows);
}

// Per-token system for time-varying cells: the coefficient of x[j] at output
// time t >= j is sum_l C((t-j) + (N-l), N-l) * b_l[j].  Rows t = j..N pin the
// target; free columns are zeroed by the exact solver.
inline MatrixD solve_token_rows(const MatrixD& rhs_rows, int n, int j) {
  MatrixQ system(n - j + 1, n);
  for (int t = j; t <= n; ++t) {
    for (int l = 1; l <= n; ++l) {
      system(t - j, l - 1) = Rational(binom(static_cast<long long>(t) + n - l - j, n - l));
    }
  }
  return to_double_matrix(solve_exact(system, to_rational_matrix(rhs_rows)));
}

}  // namespace detail

struct BuildOptions {
  bool apply_final_activation = true;
  bool allow_large = false;
};

// ---------------------------------------------------------------------------
// Full-history linear functional in a plain-width recurrence.
// coeff is N x d_x; the network output at the final time N is
// (x[N]; act(sum_t coeff(t,:) . x[t])), with the activation applied by one
// trailing token-wise cell (the accumulator chain itself must stay affine).
// ---------------------------------------------------------------------------
struct LinearSumRnnBuild {
  Network net;
  MatrixD cell_rows;  // row l-1: the bottom row installed in cell l
  int d_x = 0, N = 0;
};

inline LinearSumRnnBuild build_linear_sum_rnn(const MatrixD& coeff, const ActivationProfile& act,
                                              const BuildOptions& opts = {}) {
  const int n = static_cast<int>(coeff.rows());
  const int d_x = static_cast<int>(coeff.cols());
  if (n < 1 || d_x < 1) throw ValidationError("build_linear_sum_rnn needs N >= 1 and d_x >= 1");
  ensure_desk_scale(n, opts.allow_large, "N");
  activation_profile(act);

  const MatrixD rows = detail::solve_full_history_rows(coeff, n);
  const int d = d_x + 1;
  const int acc = d_x;

  Network net;
  net.lift = detail::reg_passthrough(d, d_x);
  for (int l = 0; l < n; ++l) {
    MatrixD a(d, d);
    a(acc, acc) = 1.0;
    MatrixD b = MatrixD::identity(d);
    for (int c = 0; c < d_x; ++c) b(acc, c) = rows(l, c);
    net.cells.push_back(detail::affine_cell(std::move(a), std::move(b),
                                            VectorD(static_cast<std::size_t>(d), 0.0), act));
  }
  if (opts.apply_final_activation) {
    net.cells.push_back(detail::tokenwise_activation_cell(d, acc, act));
  }
  net.proj = MatrixD::identity(d);
  return LinearSumRnnBuild{std::move(net), rows, d_x, n};
}

// ---------------------------------------------------------------------------
// Prefix linear functionals in a time-enhanced recurrence.
// family[j-1] is N x d_x; row t-1 of it is the coefficient of x[j] at output
// time t (only t >= j is read).  Output at every t:
// (x[t]; act(sum_{j<=t} family[j-1](t-1,:) . x[j])).
// ---------------------------------------------------------------------------
struct LinearSumTrnnBuild {
  Network net;
  // cell_coeff[l-1] is N x d_x: the bottom row of cell l at time t.
  std::vector<MatrixD> cell_coeff;
  int d_x = 0, N = 0;
  bool final_activation = true;
  ActivationProfile act;
};

inline LinearSumTrnnBuild build_linear_sum_trnn(const std::vector<MatrixD>& family,
                                                const ActivationProfile& act,
                                                const BuildOptions& opts = {}) {
  const int n = static_cast<int>(family.size());
  if (n < 1) throw ValidationError("build_linear_sum_trnn needs a nonempty family");
  const int d_x = static_cast<int>(family[0].cols());
  for (const MatrixD& block : family) {
    if (static_cast<int>(block.rows()) != n || static_cast<int>(block.cols()) != d_x) {
      throw ValidationError("family blocks must all be N x d_x");
    }
  }
  ensure_desk_scale(n, opts.allow_large, "N");
  activation_profile(act);

  // Solve each token's column of per-cell rows.
  std::vector<MatrixD> cell_coeff(n, MatrixD(n, d_x));
  for (int j = 1; j <= n; ++j) {
    MatrixD rhs(n - j + 1, d_x);
    for (int t = j; t <= n; ++t) {
      for (int c = 0; c < d_x; ++c) rhs(t - j, c) = family[j - 1](t - 1, c);
    }
    const MatrixD rows = detail::solve_token_rows(rhs, n, j);
    for (int l = 0; l < n; ++l) {
      for (int c = 0; c < d_x; ++c) cell_coeff[l](j - 1, c) = rows(l, c);
    }
  }

  const int d = d_x + 1;
  const int acc = d_x;
  Network net;
  net.lift = detail::reg_passthrough(d, d_x);
  for (int l = 0; l < n; ++l) {
    TrnnCell cell;
    cell.act = act;
    for (int t = 1; t <= n; ++t) {
      MatrixD a(d, d);
      a(acc, acc) = 1.0;
      MatrixD b = MatrixD::identity(d);
      for (int c = 0; c < d_x; ++c) b(acc, c) = cell_coeff[l](t - 1, c);
      cell.A_of_t.push_back(std::move(a));
      cell.B_of_t.push_back(std::move(b));
      cell.theta_of_t.push_back(VectorD(static_cast<std::size_t>(d), 0.0));
    }
    net.cells.push_back(std::move(cell));
  }
  if (opts.apply_final_activation) {
    net.cells.push_back(detail::tokenwise_activation_cell(d, acc, act));
  }
  net.proj = MatrixD::identity(d);

  LinearSumTrnnBuild out;
  out.net = std::move(net);
  out.cell_coeff = std::move(cell_coeff);
  out.d_x = d_x;
  out.N = n;
  out.final_activation = opts.apply_final_activation;
  out.act = act;
  return out;
}

// ---------------------------------------------------------------------------
// Two-layer perceptron at the final time, one buffer wide.
// Units are realized one after another: each unit's accumulator chain fills
// the buffer U, one token-wise cell activates it, and one affine cell adds
// w_i * U into every output sum and resets U to exactly zero.
// ---------------------------------------------------------------------------
struct MlpRnnBuild {
  Network net;
  int d_x = 0, d_y = 0, N = 0, units = 0;
};

inline MlpRnnBuild build_mlp_in_rnn(const TwoLayerSurrogate& s, const BuildOptions& opts = {}) {
  s.validate();
  if (s.bidirectional) {
    throw ValidationError("build_mlp_in_rnn requires a causal surrogate (bidirectional=false)");
  }
  ensure_desk_scale(s.N, opts.allow_large, "N");
  activation_profile(s.act);

  const int d = s.d_x + s.d_y + 1;
  const int u_slot = s.d_x + s.d_y;
  const int s_base = s.d_x;

  Network net;
  net.lift = detail::reg_passthrough(d, s.d_x);
  for (int i = 0; i < s.units; ++i) {
    // The unit's full-history rows at the final time.
    const MatrixD rows = detail::solve_full_history_rows(s.features[s.N - 1][i], s.N);
    for (int l = 0; l < s.N; ++l) {
      MatrixD a(d, d);
      a(u_slot, u_slot) = 1.0;
      MatrixD b = MatrixD::identity(d);
      for (int c = 0; c < s.d_x; ++c) b(u_slot, c) = rows(l, c);
      net.cells.push_back(detail::affine_cell(std::move(a), std::move(b),
                                              VectorD(static_cast<std::size_t>(d), 0.0), s.act));
    }
    net.cells.push_back(detail::tokenwise_activation_cell(d, u_slot, s.act));
    // Accumulate into all sums, clear the buffer.
    MatrixD b = MatrixD::identity(d);
    b(u_slot, u_slot) = 0.0;
    for (int r = 0; r < s.d_y; ++r) b(s_base + r, u_slot) = s.weights[s.N - 1](r, i);
    net.cells.push_back(detail::affine_cell(MatrixD(d, d), std::move(b),
                                            VectorD(static_cast<std::size_t>(d), 0.0), s.act));
  }
  net.proj = MatrixD::identity(d);
  return MlpRnnBuild{std::move(net), s.d_x, s.d_y, s.N, s.units};
}

// ---------------------------------------------------------------------------
// Two-layer perceptron at every time, time-enhanced.
// Same unit-by-unit schedule; each unit's accumulator rows now solve the
// per-token systems, and the merge weights vary with t.
// ---------------------------------------------------------------------------
struct MlpTrnnBuild {
  Network net;
  int d_x = 0, d_y = 0, N = 0, units = 0;
  ActivationProfile act;
  // unit_coeff[i][l-1] is N x d_x: buffer rows of unit i's cell l at time t.
  std::vector<std::vector<MatrixD>> unit_coeff;
  // merge_w[i] is d_y x N: column t-1 holds w_i[t] for every output row.
  std::vector<MatrixD> merge_w;
  // The two-layer target this build realizes; downstream conversions use its
  // feature rows to bound buffer ranges.
  TwoLayerSurrogate surrogate;
};

inline MlpTrnnBuild build_mlp_in_trnn(const TwoLayerSurrogate& s, const BuildOptions& opts = {}) {
  s.validate();
  if (s.bidirectional) {
    throw ValidationError("build_mlp_in_trnn requires a causal surrogate (bidirectional=false)");
  }
  ensure_desk_scale(s.N, opts.allow_large, "N");
  activation_profile(s.act);

  const int d = s.d_x + s.d_y + 1;
  const int u_slot = s.d_x + s.d_y;
  const int s_base = s.d_x;
  const int n = s.N;

  MlpTrnnBuild out;
  out.d_x = s.d_x;
  out.d_y = s.d_y;
  out.N = n;
  out.units = s.units;
  out.act = s.act;

  Network net;
  net.lift = detail::reg_passthrough(d, s.d_x);
  for (int i = 0; i < s.units; ++i) {
    // Per-token solves for this unit's prefix family.
    std::vector<MatrixD> coeff(n, MatrixD(n, s.d_x));
    for (int j = 1; j <= n; ++j) {
      MatrixD rhs(n - j + 1, s.d_x);
      for (int t = j; t <= n; ++t) {
        for (int c = 0; c < s.d_x; ++c) rhs(t - j, c) = s.features[t - 1][i](j - 1, c);
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
    out.unit_coeff.push_back(std::move(coeff));
    out.merge_w.push_back(std::move(mw));
  }
  net.proj = MatrixD::identity(d);
  out.net = std::move(net);
  out.surrogate = s;
  return out;
}

// The affine view (everything but the trailing activation stage) of a
// linear-sum build: used to read pre-activations directly.
inline Network affine_prefix(const Network& net) {
  Network out = net;
  if (!out.cells.empty() && std::holds_alternative<RnnCell>(out.cells.back())) {
    const RnnCell& last = std::get<RnnCell>(out.cells.back());
    if (!last.modified_set.empty() && last.modified_set.size() == 1) out.cells.pop_back();
  }
  return out;
}

}  // namespace seqnet
