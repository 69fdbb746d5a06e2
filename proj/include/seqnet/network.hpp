#pragma once

// A Network is a token-wise linear lift, a stack of cells, and a token-wise
// linear projection:  out = proj . cell_L . ... . cell_1 . lift.
// The reported width is the largest cell state dimension; lift and proj are
// bookkeeping maps, not state.

#include <string>
#include <vector>

#include "seqnet/cells.hpp"

namespace seqnet {

struct Network {
  MatrixD lift;  // (first cell input dim) x d_x
  std::vector<Cell> cells;
  MatrixD proj;  // d_y x (last cell output dim)

  int input_dim() const { return static_cast<int>(lift.cols()); }
  int output_dim() const { return static_cast<int>(proj.rows()); }
};

inline int width(const Network& net) {
  int w = 0;
  for (const Cell& c : net.cells) w = std::max(w, cell_state_dim(c));
  return w;
}

inline bool is_causal(const Network& net) {
  for (const Cell& c : net.cells) {
    if (std::holds_alternative<BrnnCell>(c)) return false;
  }
  return true;
}

namespace detail {
inline Seq apply_tokenwise(const MatrixD& m, const Seq& x) {
  Seq out(static_cast<int>(m.rows()), x.length());
  for (int t = 1; t <= x.length(); ++t) out.set_token(t, matvec(m, x.token(t)));
  return out;
}
}  // namespace detail

inline void validate_network(const Network& net) {
  int d = static_cast<int>(net.lift.rows());
  for (std::size_t l = 0; l < net.cells.size(); ++l) {
    const int in = cell_input_dim(net.cells[l]);
    if (in != d) {
      throw ValidationError("network stage " + std::to_string(l) + " expects input dim " +
                            std::to_string(in) + " but receives " + std::to_string(d));
    }
    d = cell_output_dim(net.cells[l]);
  }
  if (static_cast<int>(net.proj.cols()) != d) {
    throw ValidationError("network projection expects dim " + std::to_string(net.proj.cols()) +
                          " but final stage outputs " + std::to_string(d));
  }
}

inline Seq eval_network(const Network& net, const Seq& x) {
  if (x.dim() != net.input_dim()) {
    throw ValidationError("network expects input dim " + std::to_string(net.input_dim()) +
                          ", got " + std::to_string(x.dim()));
  }
  Seq h = detail::apply_tokenwise(net.lift, x);
  for (const Cell& c : net.cells) h = eval_cell(c, h);
  return detail::apply_tokenwise(net.proj, h);
}

// Convenience: the final token of the network output (sequence-to-vector use).
inline VectorD eval_network_last(const Network& net, const Seq& x) {
  const Seq y = eval_network(net, x);
  return y.token(y.length());
}

}  // namespace seqnet
