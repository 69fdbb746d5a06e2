#pragma once

// Exact linear algebra over arbitrary-precision rationals.
//
// The deep constructions in this project stand on one family of structured
// integer matrices: binomial-coefficient matrices whose (i,j) entry counts
// monotone lattice paths.  Coefficient solves against them must be exact --
// the matrices are ill-conditioned in floating point well before the sizes
// used here -- so everything in this header works over cpp_rational and
// converts to double only at the very end.

#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>
#include <string>
#include <vector>

#include "seqnet/errors.hpp"
#include "seqnet/matrix.hpp"

namespace seqnet {

using Integer = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;
using MatrixQ = Matrix<Rational>;

// Builders working at an expressly small scale refuse larger inputs unless
// the caller opts in; coefficient magnitudes grow combinatorially with N and
// double conversion quietly loses exactness past desk scale.
inline constexpr int kDeskScaleCap = 8;

inline void ensure_desk_scale(int n, bool allow_large, const std::string& what) {
  if (n > kDeskScaleCap && !allow_large) {
    throw BudgetError(what + "=" + std::to_string(n) + " exceeds the desk-scale cap " +
                      std::to_string(kDeskScaleCap) + "; set allow_large to override");
  }
}

// C(n, k) with the lattice convention: zero whenever k < 0, n < 0, or k > n.
inline Integer binom(long long n, long long k) {
  if (n < 0 || k < 0 || k > n) return Integer(0);
  if (k > n - k) k = n - k;
  Integer result(1);
  for (long long step = 1; step <= k; ++step) {
    result *= Integer(n - k + step);
    result /= Integer(step);  // exact: product of `step` consecutive integers
  }
  return result;
}

// The n x n path-count matrix with entry (i, j) = C(2n - i - j, n - i),
// 1-based.  Row i lists, for each input time j, how many monotone staircase
// paths connect stage/time (j, j) to (n, n) when entered at row i.
inline MatrixQ lambda_matrix(int n) {
  if (n <= 0) throw ValidationError("lambda_matrix requires n >= 1");
  MatrixQ m(n, n);
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= n; ++j) {
      m(i - 1, j - 1) = Rational(binom(2LL * n - i - j, n - i));
    }
  }
  return m;
}

// The last k rows of lambda_matrix(n) (rows i = n-k+1 .. n): the k x n block
// that constrains a per-token coefficient solve when only the final k output
// times are pinned.
inline MatrixQ lambda_rect(int n, int k) {
  if (k < 1 || k > n) throw ValidationError("lambda_rect requires 1 <= k <= n");
  MatrixQ m(k, n);
  for (int r = 0; r < k; ++r) {
    const int i = n - k + 1 + r;
    for (int j = 1; j <= n; ++j) m(r, j - 1) = Rational(binom(2LL * n - i - j, n - i));
  }
  return m;
}

// Bidiagonal row-reducer: (n+1) x (n+1) with ones on the diagonal and -1 on
// the superdiagonal.  Conjugating the (n+1)-size path matrix by it splits off
// a trailing unit block, which is how nonsingularity propagates by induction.
inline MatrixQ elimination_matrix(int n) {
  MatrixQ e(n + 1, n + 1);
  for (int i = 0; i <= n; ++i) {
    e(i, i) = Rational(1);
    if (i + 1 <= n) e(i, i + 1) = Rational(-1);
  }
  return e;
}

// Solves M x = rhs exactly for a k x n system with k <= n and full row rank.
// Pivots are chosen scanning columns left to right (first usable row wins),
// non-pivot columns are fixed to zero, so the returned particular solution is
// deterministic.  Throws NoSolutionError for inconsistent systems and
// SingularityError when a row carries no pivot (row rank deficiency).
inline MatrixQ solve_exact(const MatrixQ& m, const MatrixQ& rhs) {
  const std::size_t k = m.rows();
  const std::size_t n = m.cols();
  if (rhs.rows() != k) {
    throw DimensionError("solve_exact: rhs has " + std::to_string(rhs.rows()) + " rows, expected " +
                         std::to_string(k));
  }
  MatrixQ a = m;
  MatrixQ b = rhs;
  std::vector<std::size_t> pivot_col_of_row(k, SIZE_MAX);
  std::size_t pivot_row = 0;
  for (std::size_t col = 0; col < n && pivot_row < k; ++col) {
    std::size_t r = pivot_row;
    while (r < k && a(r, col) == Rational(0)) ++r;
    if (r == k) continue;  // free column
    if (r != pivot_row) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(pivot_row, j), a(r, j));
      for (std::size_t j = 0; j < b.cols(); ++j) std::swap(b(pivot_row, j), b(r, j));
    }
    const Rational inv = Rational(1) / a(pivot_row, col);
    for (std::size_t j = col; j < n; ++j) a(pivot_row, j) *= inv;
    for (std::size_t j = 0; j < b.cols(); ++j) b(pivot_row, j) *= inv;
    for (std::size_t rr = 0; rr < k; ++rr) {
      if (rr == pivot_row) continue;
      const Rational factor = a(rr, col);
      if (factor == Rational(0)) continue;
      for (std::size_t j = col; j < n; ++j) a(rr, j) -= factor * a(pivot_row, j);
      for (std::size_t j = 0; j < b.cols(); ++j) b(rr, j) -= factor * b(pivot_row, j);
    }
    pivot_col_of_row[pivot_row] = col;
    ++pivot_row;
  }
  for (std::size_t r = pivot_row; r < k; ++r) {
    bool rhs_nonzero = false;
    for (std::size_t j = 0; j < b.cols(); ++j) {
      if (b(r, j) != Rational(0)) {
        rhs_nonzero = true;
        break;
      }
    }
    if (rhs_nonzero) {
      throw NoSolutionError("solve_exact: inconsistent system (zero row " + std::to_string(r) +
                            " with nonzero right-hand side)");
    }
  }
  if (pivot_row < k) {
    throw SingularityError("solve_exact: matrix has row rank " + std::to_string(pivot_row) +
                           " < " + std::to_string(k) + " rows");
  }
  MatrixQ x(n, rhs.cols());
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t col = pivot_col_of_row[r];
    for (std::size_t j = 0; j < rhs.cols(); ++j) x(col, j) = b(r, j);
  }
  return x;
}

// Path-count table: at(n, m) counts monotone lattice paths from (i, j) to
// (n, m), filled by the additive recurrence so tests can pit it against the
// closed form C(m + n - i - j, n - i).
struct AlphaTable {
  int i = 1, j = 1, n_max = 1, m_max = 1;
  Matrix<Integer> values;  // indexed [n][m], zero below the seed

  const Integer& at(int n, int m) const {
    if (n < 0 || m < 0 || n > n_max || m > m_max) {
      throw ValidationError("AlphaTable::at(" + std::to_string(n) + "," + std::to_string(m) +
                            ") outside table bounds");
    }
    return values(n, m);
  }
};

inline AlphaTable alpha_oracle(int i, int j, int n_max, int m_max) {
  if (i < 1 || j < 1 || n_max < i || m_max < j) {
    throw ValidationError("alpha_oracle requires 1 <= i <= n_max and 1 <= j <= m_max");
  }
  AlphaTable t;
  t.i = i;
  t.j = j;
  t.n_max = n_max;
  t.m_max = m_max;
  t.values = Matrix<Integer>(n_max + 1, m_max + 1, Integer(0));
  for (int n = i; n <= n_max; ++n) {
    for (int m = j; m <= m_max; ++m) {
      if (n == i && m == j) {
        t.values(n, m) = 1;
      } else {
        Integer up = (n > i) ? t.values(n - 1, m) : Integer(0);
        Integer left = (m > j) ? t.values(n, m - 1) : Integer(0);
        t.values(n, m) = up + left;
      }
    }
  }
  return t;
}

// Exact conversions between the double and rational worlds.  Doubles are
// dyadic rationals, so to_rational is lossless; to_double rounds once.
inline Rational to_rational(double v) { return Rational(v); }
inline double to_double(const Rational& v) { return v.convert_to<double>(); }

inline MatrixQ to_rational_matrix(const MatrixD& m) {
  MatrixQ out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = to_rational(m(i, j));
  return out;
}

inline MatrixD to_double_matrix(const MatrixQ& m) {
  MatrixD out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = to_double(m(i, j));
  return out;
}

}  // namespace seqnet
