#pragma once

// Activation profiles.  A profile bundles the scalar function with the data
// the constructions need about it: a base point z0, the value and slope
// there, and the three width surcharges (beta, gamma, alpha) that decide how
// many extra state components the deep constructions must carry.
//
// Surcharge rules:
//   beta  = 0 if sigma(z0) == 0 or the activation is ReLU, else 1
//           (an extra component carries the constant sigma(z0) through
//            linearization when it cannot be cancelled for free)
//   gamma = 0 for ReLU, else 1
//           (ReLU can rebuild a time counter in a scratch slot; smooth
//            activations need a dedicated persistent counter)
//   alpha = 0 for ReLU; 0 if sigma(z0) == 0; else 1
//           (the sequence-to-sequence width surcharge in the reported bound)
//
// Custom activations are supported through a process-local registry so a
// serialized network can name them; see register_custom_activation.

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <string>

#include "seqnet/errors.hpp"

namespace seqnet {

enum class ActivationKind { relu, tanh, logistic_sigmoid, custom };

inline std::string to_string(ActivationKind k) {
  switch (k) {
    case ActivationKind::relu: return "relu";
    case ActivationKind::tanh: return "tanh";
    case ActivationKind::logistic_sigmoid: return "logistic-sigmoid";
    case ActivationKind::custom: return "custom";
  }
  return "custom";
}

struct ActivationProfile {
  ActivationKind kind = ActivationKind::relu;
  std::string name;  // registry key for kind == custom, else same as kind string
  double z0 = 0.0;
  double sigma_at_z0 = 0.0;
  double dsigma_at_z0 = 1.0;
  int beta = 0;
  int gamma = 0;
  int alpha = 0;
  // Saturation limits lim_{z -> -inf} and lim_{z -> +inf}; NaN when the
  // function does not saturate (ReLU) or the limits were not provided.
  double sat_lo = 0.0;
  double sat_hi = 0.0;
  std::function<double(double)> fn;

  double operator()(double z) const { return fn(z); }
  bool is_relu() const { return kind == ActivationKind::relu; }
  bool is_smooth() const { return kind != ActivationKind::relu; }
  bool has_saturation() const { return sat_lo == sat_lo && sat_hi == sat_hi && sat_hi > sat_lo; }
};

namespace detail {
inline std::map<std::string, ActivationProfile>& custom_registry() {
  static std::map<std::string, ActivationProfile> reg;
  return reg;
}
}  // namespace detail

inline ActivationProfile relu_profile() {
  ActivationProfile p;
  p.kind = ActivationKind::relu;
  p.name = "relu";
  p.z0 = 1.0;  // a point where the function is locally linear; unused by the exact path
  p.sigma_at_z0 = 1.0;
  p.dsigma_at_z0 = 1.0;
  p.beta = 0;
  p.gamma = 0;
  p.alpha = 0;
  p.sat_lo = std::numeric_limits<double>::quiet_NaN();
  p.sat_hi = std::numeric_limits<double>::quiet_NaN();
  p.fn = [](double z) { return z > 0.0 ? z : 0.0; };
  return p;
}

inline ActivationProfile tanh_profile() {
  ActivationProfile p;
  p.kind = ActivationKind::tanh;
  p.name = "tanh";
  p.z0 = 0.0;
  p.sigma_at_z0 = 0.0;
  p.dsigma_at_z0 = 1.0;
  p.beta = 0;
  p.gamma = 1;
  p.alpha = 0;
  p.sat_lo = -1.0;
  p.sat_hi = 1.0;
  p.fn = [](double z) { return std::tanh(z); };
  return p;
}

inline ActivationProfile logistic_sigmoid_profile() {
  ActivationProfile p;
  p.kind = ActivationKind::logistic_sigmoid;
  p.name = "logistic-sigmoid";
  p.z0 = 0.0;
  p.sigma_at_z0 = 0.5;
  p.dsigma_at_z0 = 0.25;
  p.beta = 1;
  p.gamma = 1;
  p.alpha = 1;
  p.sat_lo = 0.0;
  p.sat_hi = 1.0;
  p.fn = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  return p;
}

// Registers a named custom activation and returns its profile.  Requires a
// nonzero slope at z0; surcharges follow the rules at the top of this file.
inline ActivationProfile register_custom_activation(
    const std::string& name, std::function<double(double)> fn, double z0, double sigma_at_z0,
    double dsigma_at_z0, double sat_lo = std::numeric_limits<double>::quiet_NaN(),
    double sat_hi = std::numeric_limits<double>::quiet_NaN()) {
  if (dsigma_at_z0 == 0.0) {
    throw ValidationError("custom activation '" + name + "' has zero slope at its base point");
  }
  ActivationProfile p;
  p.kind = ActivationKind::custom;
  p.name = name;
  p.z0 = z0;
  p.sigma_at_z0 = sigma_at_z0;
  p.dsigma_at_z0 = dsigma_at_z0;
  p.beta = (sigma_at_z0 == 0.0) ? 0 : 1;
  p.gamma = 1;
  p.alpha = (sigma_at_z0 == 0.0) ? 0 : 1;
  p.sat_lo = sat_lo;
  p.sat_hi = sat_hi;
  p.fn = std::move(fn);
  detail::custom_registry()[name] = p;
  return p;
}

// Resolves a profile by name: the three built-ins or a registered custom.
inline ActivationProfile activation_by_name(const std::string& name) {
  if (name == "relu") return relu_profile();
  if (name == "tanh") return tanh_profile();
  if (name == "logistic-sigmoid") return logistic_sigmoid_profile();
  auto& reg = detail::custom_registry();
  auto it = reg.find(name);
  if (it == reg.end()) {
    throw ValidationError("unknown activation '" + name +
                          "'; register it with register_custom_activation first");
  }
  return it->second;
}

}  // namespace seqnet
