#pragma once

// JSON round-trip for networks and sequences.
//
// Matrices are stored row-major with explicit shape; doubles rely on the
// serializer's shortest-round-trip printing, so save/load is value-exact.
// Activations are stored by name: the three built-ins always resolve, custom
// activations resolve through the process-local registry and loading fails
// with a clear message when the name is unknown.
// All index sets are 0-based in this format.

#include <fstream>
#include <nlohmann/json.hpp>
#include <string>

#include "seqnet/activation.hpp"
#include "seqnet/network.hpp"

namespace seqnet {

using nlohmann::json;

inline json matrix_to_json(const MatrixD& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

inline MatrixD matrix_from_json(const json& j) {
  MatrixD m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  const auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != m.rows() * m.cols()) {
    throw ValidationError("matrix payload has " + std::to_string(data.size()) +
                          " entries, expected " + std::to_string(m.rows() * m.cols()));
  }
  m.data() = data;
  return m;
}

inline json activation_to_json(const ActivationProfile& act) {
  return json{{"kind", to_string(act.kind)},
              {"name", act.name},
              {"z0", act.z0},
              {"sigma_at_z0", act.sigma_at_z0},
              {"dsigma_at_z0", act.dsigma_at_z0}};
}

inline ActivationProfile activation_from_json(const json& j) {
  return activation_by_name(j.at("name").get<std::string>());
}

inline json seq_to_json(const Seq& s) {
  return json{{"d", s.dim()}, {"N", s.length()}, {"data", s.values.data()}};
}

inline Seq seq_from_json(const json& j) {
  Seq s(j.at("d").get<int>(), j.at("N").get<int>());
  const auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != s.values.data().size()) {
    throw ValidationError("sequence payload size mismatch");
  }
  s.values.data() = data;
  return s;
}

namespace detail {

inline json rnn_to_json(const RnnCell& c) {
  return json{{"kind", "rnn"},           {"A", matrix_to_json(c.A)},
              {"B", matrix_to_json(c.B)}, {"theta", c.theta},
              {"act", activation_to_json(c.act)}, {"modified_set", c.modified_set},
              {"initial_state", c.initial_state}};
}

inline RnnCell rnn_from_json(const json& j) {
  RnnCell c;
  c.A = matrix_from_json(j.at("A"));
  c.B = matrix_from_json(j.at("B"));
  c.theta = j.at("theta").get<VectorD>();
  c.act = activation_from_json(j.at("act"));
  c.modified_set = j.at("modified_set").get<std::vector<int>>();
  c.initial_state = j.at("initial_state").get<VectorD>();
  return c;
}

inline json trnn_to_json(const TrnnCell& c) {
  json a = json::array(), b = json::array(), th = json::array();
  for (const auto& m : c.A_of_t) a.push_back(matrix_to_json(m));
  for (const auto& m : c.B_of_t) b.push_back(matrix_to_json(m));
  for (const auto& v : c.theta_of_t) th.push_back(v);
  return json{{"kind", "trnn"},       {"A_of_t", a},
              {"B_of_t", b},          {"theta_of_t", th},
              {"act", activation_to_json(c.act)}, {"modified_set", c.modified_set},
              {"initial_state", c.initial_state}};
}

inline TrnnCell trnn_from_json(const json& j) {
  TrnnCell c;
  for (const auto& m : j.at("A_of_t")) c.A_of_t.push_back(matrix_from_json(m));
  for (const auto& m : j.at("B_of_t")) c.B_of_t.push_back(matrix_from_json(m));
  for (const auto& v : j.at("theta_of_t")) c.theta_of_t.push_back(v.get<VectorD>());
  c.act = activation_from_json(j.at("act"));
  c.modified_set = j.at("modified_set").get<std::vector<int>>();
  c.initial_state = j.at("initial_state").get<VectorD>();
  return c;
}

inline json lstm_to_json(const LstmCell& c) {
  return json{{"kind", "lstm"},
              {"W_i", matrix_to_json(c.W_i)}, {"U_i", matrix_to_json(c.U_i)}, {"b_i", c.b_i},
              {"W_f", matrix_to_json(c.W_f)}, {"U_f", matrix_to_json(c.U_f)}, {"b_f", c.b_f},
              {"W_g", matrix_to_json(c.W_g)}, {"U_g", matrix_to_json(c.U_g)}, {"b_g", c.b_g},
              {"W_o", matrix_to_json(c.W_o)}, {"U_o", matrix_to_json(c.U_o)}, {"b_o", c.b_o}};
}

inline LstmCell lstm_from_json(const json& j) {
  LstmCell c;
  c.W_i = matrix_from_json(j.at("W_i"));
  c.U_i = matrix_from_json(j.at("U_i"));
  c.b_i = j.at("b_i").get<VectorD>();
  c.W_f = matrix_from_json(j.at("W_f"));
  c.U_f = matrix_from_json(j.at("U_f"));
  c.b_f = j.at("b_f").get<VectorD>();
  c.W_g = matrix_from_json(j.at("W_g"));
  c.U_g = matrix_from_json(j.at("U_g"));
  c.b_g = j.at("b_g").get<VectorD>();
  c.W_o = matrix_from_json(j.at("W_o"));
  c.U_o = matrix_from_json(j.at("U_o"));
  c.b_o = j.at("b_o").get<VectorD>();
  return c;
}

inline json gru_to_json(const GruCell& c) {
  return json{{"kind", "gru"},
              {"W_r", matrix_to_json(c.W_r)}, {"U_r", matrix_to_json(c.U_r)}, {"b_r", c.b_r},
              {"W_z", matrix_to_json(c.W_z)}, {"U_z", matrix_to_json(c.U_z)}, {"b_z", c.b_z},
              {"W_h", matrix_to_json(c.W_h)}, {"U_h", matrix_to_json(c.U_h)}, {"b_h", c.b_h}};
}

inline GruCell gru_from_json(const json& j) {
  GruCell c;
  c.W_r = matrix_from_json(j.at("W_r"));
  c.U_r = matrix_from_json(j.at("U_r"));
  c.b_r = j.at("b_r").get<VectorD>();
  c.W_z = matrix_from_json(j.at("W_z"));
  c.U_z = matrix_from_json(j.at("U_z"));
  c.b_z = j.at("b_z").get<VectorD>();
  c.W_h = matrix_from_json(j.at("W_h"));
  c.U_h = matrix_from_json(j.at("U_h"));
  c.b_h = j.at("b_h").get<VectorD>();
  return c;
}

inline json directional_to_json(const std::variant<RnnCell, TrnnCell>& c) {
  if (std::holds_alternative<RnnCell>(c)) return rnn_to_json(std::get<RnnCell>(c));
  return trnn_to_json(std::get<TrnnCell>(c));
}

inline std::variant<RnnCell, TrnnCell> directional_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "rnn") return rnn_from_json(j);
  if (kind == "trnn") return trnn_from_json(j);
  throw ValidationError("directional cell must be rnn or trnn, got '" + kind + "'");
}

inline json brnn_to_json(const BrnnCell& c) {
  return json{{"kind", "brnn"},
              {"forward", directional_to_json(c.forward)},
              {"backward", directional_to_json(c.backward)},
              {"W", matrix_to_json(c.W)},
              {"W_bar", matrix_to_json(c.W_bar)}};
}

inline BrnnCell brnn_from_json(const json& j) {
  BrnnCell c;
  c.forward = directional_from_json(j.at("forward"));
  c.backward = directional_from_json(j.at("backward"));
  c.W = matrix_from_json(j.at("W"));
  c.W_bar = matrix_from_json(j.at("W_bar"));
  return c;
}

}  // namespace detail

inline json cell_to_json(const Cell& cell) {
  return std::visit(
      [](const auto& c) -> json {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, RnnCell>) {
          return detail::rnn_to_json(c);
        } else if constexpr (std::is_same_v<T, TrnnCell>) {
          return detail::trnn_to_json(c);
        } else if constexpr (std::is_same_v<T, LstmCell>) {
          return detail::lstm_to_json(c);
        } else if constexpr (std::is_same_v<T, GruCell>) {
          return detail::gru_to_json(c);
        } else {
          return detail::brnn_to_json(c);
        }
      },
      cell);
}

inline Cell cell_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "rnn") return detail::rnn_from_json(j);
  if (kind == "trnn") return detail::trnn_from_json(j);
  if (kind == "lstm") return detail::lstm_from_json(j);
  if (kind == "gru") return detail::gru_from_json(j);
  if (kind == "brnn") return detail::brnn_from_json(j);
  throw ValidationError("unknown cell kind '" + kind + "'");
}

inline json network_to_json(const Network& net) {
  json cells = json::array();
  for (const Cell& c : net.cells) cells.push_back(cell_to_json(c));
  return json{{"version", 1},
              {"lift", matrix_to_json(net.lift)},
              {"cells", cells},
              {"proj", matrix_to_json(net.proj)}};
}

inline Network network_from_json(const json& j) {
  const int version = j.at("version").get<int>();
  if (version != 1) {
    throw ValidationError("unsupported network format version " + std::to_string(version));
  }
  Network net;
  net.lift = matrix_from_json(j.at("lift"));
  for (const auto& c : j.at("cells")) net.cells.push_back(cell_from_json(c));
  net.proj = matrix_from_json(j.at("proj"));
  return net;
}

inline void save_network(const Network& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open '" + path + "' for writing");
  out << network_to_json(net).dump(1) << '\n';
}

inline Network load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  json j;
  in >> j;
  return network_from_json(j);
}

inline void save_seq(const Seq& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open '" + path + "' for writing");
  out << seq_to_json(s).dump(1) << '\n';
}

inline Seq load_seq(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  json j;
  in >> j;
  return seq_from_json(j);
}

}  // namespace seqnet
