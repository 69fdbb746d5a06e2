#pragma once

// Floor-quantization pipeline: a per-token encoder packs quantized tokens
// into one real code through a fixed recurrence, a memorizer recovers the
// token index and quantized prefix from the code alone and re-encodes the
// target's value there, and a decoder unpacks the result.  A clipped
// projection bounds outputs, and a relu staircase block realizes the
// encoder map token-wise at width d_x + 1.
//
// All code arithmetic is dyadic; budgets keep every code exactly
// representable in a double, so round trips are exact.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "seqnet/activation.hpp"
#include "seqnet/cells.hpp"
#include "seqnet/errors.hpp"
#include "seqnet/matrix.hpp"
#include "seqnet/network.hpp"

namespace seqnet {

// ---------------------------------------------------------------------------
// Dyadic grids and floor quantization.

struct QuantGrid {
  int n = 1;                   // precision in bits
  std::vector<double> values;  // {0, 2^-n, ..., 1 - 2^-n}
};

inline QuantGrid quant_grid(int n) {
  if (n < 1) {
    throw ValidationError("grid precision must be at least one bit, got " + std::to_string(n));
  }
  if (n > 20) {
    throw BudgetError("enumerating a " + std::to_string(n) + "-bit grid is not desk scale");
  }
  QuantGrid g;
  g.n = n;
  const std::size_t count = std::size_t{1} << n;
  const double step = std::ldexp(1.0, -n);
  g.values.reserve(count);
  for (std::size_t k = 0; k < count; ++k) g.values.push_back(static_cast<double>(k) * step);
  return g;
}

// Largest grid point of C_n at or below v; v = 1 lands on the top point.
inline double quantize(double v, int n) {
  if (n < 1 || n > 52) {
    throw ValidationError("quantization precision must be in [1, 52] bits, got " +
                          std::to_string(n));
  }
  if (!(v >= 0.0 && v <= 1.0)) {
    throw DomainError("quantize expects a value in [0, 1], got " + std::to_string(v));
  }
  double q = std::floor(std::ldexp(v, n));
  const double top = std::ldexp(1.0, n) - 1.0;
  if (q > top) q = top;
  return std::ldexp(q, -n);
}

// ---------------------------------------------------------------------------
// Token encoder: concatenate the quantized coordinates into one code.

inline double encode(const VectorD& x, int M) {
  const int d_x = static_cast<int>(x.size());
  if (d_x < 1) throw ValidationError("encode needs at least one coordinate");
  if (M < 1) throw ValidationError("encode precision must be at least one bit");
  if (d_x * M > 52) {
    throw BudgetError("a " + std::to_string(d_x * M) +
                      "-bit token code exceeds the 52-bit exact budget");
  }
  double code = 0.0;
  for (int i = 0; i < d_x; ++i) {
    code += std::ldexp(quantize(x[static_cast<std::size_t>(i)], M), -i * M);
  }
  return code;
}

// The sequence encoder recurrence, realized as a width-one cell:
//   R[t] = 2^-(d_x M + 1) R[t-1] + Enc_M(x[t]) + 1,  R[0] = 0.
// Values stay at or above one, so the relu gate is transparent.
inline RnnCell make_encoder_cell(int d_x, int M) {
  if (d_x < 1 || M < 1) throw ValidationError("encoder cell needs d_x >= 1 and M >= 1");
  RnnCell c;
  c.A = MatrixD(1, 1);
  c.A(0, 0) = std::ldexp(1.0, -(d_x * M + 1));
  c.B = MatrixD(1, 1);
  c.B(0, 0) = 1.0;
  c.theta = VectorD{1.0};
  c.act = relu_profile();
  c.modified_set = {0};
  return c;
}

inline Seq encode_sequence(const Seq& x, int M) {
  const int d_x = x.dim(), n = x.length();
  if (d_x < 1 || n < 1) throw ValidationError("encode_sequence needs a nonempty sequence");
  if (M < 1) throw ValidationError("encode precision must be at least one bit");
  if ((d_x * M + 1) * n > 52) {
    throw BudgetError("a length-" + std::to_string(n) + " sequence code needs " +
                      std::to_string((d_x * M + 1) * n) +
                      " bits, above the 52-bit exact budget");
  }
  Seq per_token(1, n);
  for (int t = 1; t <= n; ++t) {
    per_token.values(0, static_cast<std::size_t>(t - 1)) = encode(x.token(t), M);
  }
  return eval_rnn_cell(make_encoder_cell(d_x, M), per_token);
}

// ---------------------------------------------------------------------------
// Code peeling: recover the token index and the quantized prefix.

struct CodePeel {
  int t = 0;   // recovered token index
  Seq prefix;  // d_x x N, quantized tokens 1..t, zeros after
};

// Scaled by 2^(d_x M) and the digit base per hypothesis t, a valid code is
// an integer whose base-2^(d_x M + 1) digits all have the top bit set (the
// +1 in the recurrence), which pins the token count.  Among hypotheses
// within the matching tolerance 2^-(d_x M N + 2), the smallest residual
// wins; encoder-produced codes match exactly.
inline CodePeel peel_code(double code, int d_x, int M, int N) {
  if (d_x < 1 || M < 1 || N < 1) throw ValidationError("peel_code needs d_x, M, N >= 1");
  if ((d_x * M + 1) * N > 52) {
    throw BudgetError("a length-" + std::to_string(N) + " sequence code needs " +
                      std::to_string((d_x * M + 1) * N) +
                      " bits, above the 52-bit exact budget");
  }
  const int digit_bits = d_x * M + 1;
  const std::uint64_t base = std::uint64_t{1} << digit_bits;
  const std::uint64_t half = std::uint64_t{1} << (d_x * M);
  const double tol = std::ldexp(1.0, -(d_x * M * N + 2));

  int best_t = 0;
  double best_residual = 0.0;
  std::vector<std::uint64_t> best_digits;
  for (int t = 1; t <= N; ++t) {
    const double scale = std::ldexp(1.0, d_x * M + digit_bits * (t - 1));
    const double scaled = code * scale;
    if (!(scaled > 0.0) || scaled >= std::ldexp(1.0, 62)) continue;
    const double rounded = std::nearbyint(scaled);
    const double residual = std::abs(scaled - rounded) / scale;
    if (residual > tol) continue;

    std::uint64_t work = static_cast<std::uint64_t>(rounded);
    std::vector<std::uint64_t> digits(static_cast<std::size_t>(t));
    bool ok = true;
    for (int j = 1; j <= t; ++j) {  // token 1 sits in the lowest digit
      const std::uint64_t d = work % base;
      work /= base;
      if (d < half || d >= base) {
        ok = false;
        break;
      }
      digits[static_cast<std::size_t>(j - 1)] = d;
    }
    if (!ok || work != 0) continue;
    if (best_t == 0 || residual < best_residual) {
      best_t = t;
      best_residual = residual;
      best_digits = std::move(digits);
    }
  }
  if (best_t == 0) {
    throw DomainError("code " + std::to_string(code) +
                      " does not match any encoder output within tolerance");
  }

  CodePeel out;
  out.t = best_t;
  out.prefix = Seq(d_x, N);
  const std::uint64_t coord_mask = (std::uint64_t{1} << M) - 1;
  for (int j = 1; j <= best_t; ++j) {
    const std::uint64_t packed = best_digits[static_cast<std::size_t>(j - 1)] - half;
    for (int i = 1; i <= d_x; ++i) {  // coordinate 1 in the highest M bits
      const std::uint64_t bits = (packed >> ((d_x - i) * M)) & coord_mask;
      out.prefix.values(static_cast<std::size_t>(i - 1), static_cast<std::size_t>(j - 1)) =
          std::ldexp(static_cast<double>(bits), -M);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Decoder: unpack a concatenated output code into its coordinates.

inline VectorD decode(double code, int M_prime, int d_y) {
  if (M_prime < 1 || d_y < 1) throw ValidationError("decode needs M' >= 1 and d_y >= 1");
  if (d_y * M_prime > 52) {
    throw BudgetError("a " + std::to_string(d_y * M_prime) +
                      "-bit output code exceeds the 52-bit exact budget");
  }
  const double scale = std::ldexp(1.0, d_y * M_prime);
  const double scaled = code * scale;
  const double rounded = std::nearbyint(scaled);
  if (!(scaled >= -1e-6) || std::abs(scaled - rounded) > 1e-6 || rounded < 0.0 ||
      rounded >= scale) {
    throw DomainError("code " + std::to_string(code) + " is not a valid " +
                      std::to_string(d_y * M_prime) + "-bit concatenation");
  }
  const std::uint64_t packed = static_cast<std::uint64_t>(rounded);
  const std::uint64_t mask = (std::uint64_t{1} << M_prime) - 1;
  VectorD out(static_cast<std::size_t>(d_y));
  for (int i = 1; i <= d_y; ++i) {
    const std::uint64_t bits = (packed >> ((d_y - i) * M_prime)) & mask;
    out[static_cast<std::size_t>(i - 1)] = std::ldexp(static_cast<double>(bits), -M_prime);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Clipped projection: identity on [-L, L], linear taper to zero on the
// margin, zero beyond it.

inline double project_clip(double v, double L, double delta_clip) {
  if (!(L > 0.0)) throw ValidationError("clip level must be positive, got " + std::to_string(L));
  if (!(delta_clip > 0.0)) {
    throw ValidationError("clip margin must be positive, got " + std::to_string(delta_clip));
  }
  const double a = std::abs(v);
  if (a <= L) return v;
  if (a >= L + delta_clip) return 0.0;
  const double taper = (L / delta_clip) * (L + delta_clip - a);
  return v > 0.0 ? taper : -taper;
}

// ---------------------------------------------------------------------------
// Pipeline assembly.

// Builtin sequence-to-sequence targets, all with outputs in the unit box:
//   zero      y[t] = 0
//   identity  y[t] = x[t]                       (d_y = d_x)
//   square    y[t] = x[t]^2 componentwise       (d_y = d_x)
//   square-mirror  y[t] = x[N+1-t]^2 componentwise, reads the future  (d_y = d_x)
//   sin-sum   y[t] = (1 + sin(sum of all coordinates up to t)) / 2   (d_y = 1)
inline std::function<Seq(const Seq&)> lp_target_by_name(const std::string& name, int d_x,
                                                        int d_y) {
  if (name == "zero") {
    return [d_y](const Seq& x) { return Seq(d_y, x.length()); };
  }
  if (name == "identity") {
    if (d_y != d_x) {
      throw ValidationError("target identity needs d_y == d_x, got " + std::to_string(d_y) +
                            " and " + std::to_string(d_x));
    }
    return [](const Seq& x) { return x; };
  }
  if (name == "square") {
    if (d_y != d_x) {
      throw ValidationError("target square needs d_y == d_x, got " + std::to_string(d_y) +
                            " and " + std::to_string(d_x));
    }
    return [](const Seq& x) {
      Seq y = x;
      for (std::size_t i = 0; i < y.values.rows(); ++i) {
        for (std::size_t t = 0; t < y.values.cols(); ++t) y.values(i, t) *= y.values(i, t);
      }
      return y;
    };
  }
  if (name == "square-mirror") {
    if (d_y != d_x) {
      throw ValidationError("target square-mirror needs d_y == d_x, got " + std::to_string(d_y) +
                            " and " + std::to_string(d_x));
    }
    return [](const Seq& x) {
      Seq y(x.dim(), x.length());
      for (int t = 1; t <= x.length(); ++t) {
        VectorD v = x.token(x.length() + 1 - t);
        for (double& c : v) c *= c;
        y.set_token(t, v);
      }
      return y;
    };
  }
  if (name == "sin-sum") {
    if (d_y != 1) {
      throw ValidationError("target sin-sum needs d_y == 1, got " + std::to_string(d_y));
    }
    return [](const Seq& x) {
      Seq y(1, x.length());
      double running = 0.0;
      for (int t = 1; t <= x.length(); ++t) {
        for (std::size_t i = 0; i < x.values.rows(); ++i) {
          running += x.values(i, static_cast<std::size_t>(t - 1));
        }
        y.values(0, static_cast<std::size_t>(t - 1)) = 0.5 + 0.5 * std::sin(running);
      }
      return y;
    };
  }
  throw ValidationError("unknown pipeline target " + name +
                        "; builtins are zero, identity, square, square-mirror, sin-sum");
}

struct LpPipeline {
  int M = 3, M_prime = 3;  // input and output precisions
  double p = 2.0;          // norm order, for reports
  int d_x = 1, d_y = 1, N = 2;
  std::string target = "square";
  std::function<Seq(const Seq&)> f;  // past-dependent target evaluator
  double L = 1.0, delta_clip = 0.5;  // clipped projection parameters
  ActivationProfile act = relu_profile();
  RnnCell encoder_cell;  // realized recurrence, multiplier 2^-(d_x M + 1)
};

inline LpPipeline make_lp_pipeline(int M, int M_prime, double p, int d_x, int d_y, int N,
                                   const std::string& target, double L = 1.0,
                                   double delta_clip = 0.5,
                                   ActivationProfile act = relu_profile()) {
  if (M < 1 || M_prime < 1) throw ValidationError("pipeline precisions must be at least one bit");
  if (!(p >= 1.0)) throw ValidationError("norm order must be at least one, got " + std::to_string(p));
  if (d_x < 1 || d_y < 1 || N < 1) throw ValidationError("pipeline dimensions must be positive");
  if ((d_x * M + 1) * N > 52) {
    throw BudgetError("a length-" + std::to_string(N) + " sequence code needs " +
                      std::to_string((d_x * M + 1) * N) +
                      " bits, above the 52-bit exact budget");
  }
  if (d_y * M_prime > 52) {
    throw BudgetError("a " + std::to_string(d_y * M_prime) +
                      "-bit output code exceeds the 52-bit exact budget");
  }
  if (!(L > 0.0) || !(delta_clip > 0.0)) {
    throw ValidationError("clip level and margin must be positive");
  }
  LpPipeline pipe;
  pipe.M = M;
  pipe.M_prime = M_prime;
  pipe.p = p;
  pipe.d_x = d_x;
  pipe.d_y = d_y;
  pipe.N = N;
  pipe.target = target;
  pipe.f = lp_target_by_name(target, d_x, d_y);
  pipe.L = L;
  pipe.delta_clip = delta_clip;
  pipe.act = act;
  pipe.encoder_cell = make_encoder_cell(d_x, M);
  return pipe;
}

// Re-encode the target's value at the token the code identifies.
inline double memorize(double code, const LpPipeline& pipe) {
  const CodePeel peel = peel_code(code, pipe.d_x, pipe.M, pipe.N);
  const Seq y = pipe.f(peel.prefix);
  if (y.dim() != pipe.d_y || y.length() != pipe.N) {
    throw ValidationError("target evaluator returned a " + std::to_string(y.dim()) + " x " +
                          std::to_string(y.length()) + " sequence, expected " +
                          std::to_string(pipe.d_y) + " x " + std::to_string(pipe.N));
  }
  return encode(y.token(peel.t), pipe.M_prime);
}

// Widths the realized stages need: encoder d_x+1+gamma, carry 1+beta,
// memorizer scratch 2+gamma, decoder d_y+gamma.
inline int lp_width_ledger(int d_x, int d_y, const ActivationProfile& act) {
  return std::max({d_x + 1 + act.gamma, 1 + act.beta, 2 + act.gamma, d_y + act.gamma});
}

struct LpRunReport {
  Seq output;                     // d_y x N
  std::vector<double> deviation;  // per token, sup norm against the target
  double sup_deviation = 0.0;
  int width_ledger = 0;
};

inline LpRunReport run_pipeline(const LpPipeline& pipe, const Seq& x) {
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

  const Seq codes = encode_sequence(x, pipe.M);
  const Seq want = pipe.f(x);
  LpRunReport rep;
  rep.output = Seq(pipe.d_y, pipe.N);
  rep.deviation.resize(static_cast<std::size_t>(pipe.N));
  for (int t = 1; t <= pipe.N; ++t) {
    const double m = memorize(codes.values(0, static_cast<std::size_t>(t - 1)), pipe);
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
  rep.width_ledger = lp_width_ledger(pipe.d_x, pipe.d_y, pipe.act);
  return rep;
}

// ---------------------------------------------------------------------------
// Relu staircase block realizing the token encoder at width d_x + 1.
//
// Each coordinate is consumed in place: its register is rewritten to running
// ramps max(0, x_i - c) while an accumulator row collects, per grid
// breakpoint b, the difference of two ramps kappa apart scaled to one grid
// step.  The result equals the encoder exactly outside kappa-neighborhoods
// below the breakpoints and deviates by at most one step per coordinate
// inside them.  Every cell is plain: all rows stay nonnegative.

inline Network build_quantizer_mlp(int d_x, int M, double kappa,
                                   const ActivationProfile& act = relu_profile()) {
  if (d_x < 1) throw ValidationError("quantizer block needs at least one coordinate");
  if (M < 1) throw ValidationError("quantizer precision must be at least one bit");
  if (M > 12) {
    throw BudgetError("a " + std::to_string(M) + "-bit staircase has " +
                      std::to_string((1 << std::min(M, 30)) - 1) +
                      " breakpoints per coordinate; not desk scale");
  }
  if (d_x * M > 52) {
    throw BudgetError("a " + std::to_string(d_x * M) +
                      "-bit token code exceeds the 52-bit exact budget");
  }
  if (!(kappa > 0.0) || !(kappa < std::ldexp(1.0, -M - 1))) {
    throw ValidationError("staircase margin must lie in (0, 2^-(M+1)), got " +
                          std::to_string(kappa));
  }
  if (!act.is_relu()) {
    throw ValidationError("the staircase block is built for relu; got " + act.name);
  }

  const int d = d_x + 1;
  const int acc = d_x;
  Network net;
  net.lift = MatrixD(static_cast<std::size_t>(d), static_cast<std::size_t>(d_x));
  for (int i = 0; i < d_x; ++i) {
    net.lift(static_cast<std::size_t>(i), static_cast<std::size_t>(i)) = 1.0;
  }

  auto layer = [&]() {
    RnnCell c;
    c.A = MatrixD(static_cast<std::size_t>(d), static_cast<std::size_t>(d));
    c.B = MatrixD::identity(static_cast<std::size_t>(d));
    c.theta = VectorD(static_cast<std::size_t>(d));
    c.act = act;
    c.modified_set.resize(static_cast<std::size_t>(d));
    for (int r = 0; r < d; ++r) c.modified_set[static_cast<std::size_t>(r)] = r;
    return c;
  };

  const int breakpoints = (1 << M) - 1;
  const double step = std::ldexp(1.0, -M);
  for (int i = 0; i < d_x; ++i) {
    const double slope = std::ldexp(1.0, -i * M) * step / kappa;
    for (int k = 1; k <= breakpoints; ++k) {
      const double b = static_cast<double>(k) * step;
      if (k == 1) {
        // opener: register i becomes max(0, x_i - (b - kappa))
        RnnCell open = layer();
        open.theta[static_cast<std::size_t>(i)] = -(b - kappa);
        net.cells.emplace_back(std::move(open));
      }
      // adder: accumulate the lower ramp, advance the register past it
      RnnCell add = layer();
      add.B(static_cast<std::size_t>(acc), static_cast<std::size_t>(i)) = slope;
      add.theta[static_cast<std::size_t>(i)] = -kappa;
      net.cells.emplace_back(std::move(add));
      // closer: cancel the upper ramp; shift the register to the next opener
      RnnCell close = layer();
      close.B(static_cast<std::size_t>(acc), static_cast<std::size_t>(i)) = -slope;
      if (k < breakpoints) close.theta[static_cast<std::size_t>(i)] = -(step - kappa);
      net.cells.emplace_back(std::move(close));
    }
  }

  net.proj = MatrixD(1, static_cast<std::size_t>(d));
  net.proj(0, static_cast<std::size_t>(acc)) = 1.0;
  return net;
}

}  // namespace seqnet
