#pragma once

#include <algorithm>
#include <cmath>
#include <utility>

#include "vvl/network.hpp"

namespace vvl {

/// Feasible reactive power interval [kVAr, generator convention] of an inverter producing `p_kw`
/// (signed; V2G consumption is negative). The bounds combine the apparent-power circle, the
/// power-factor cone and the absolute cap according to `caps.mode`.
inline std::pair<double, double> reactive_interval(const CapabilitySpec& caps, double p_kw) {
  const double ap = std::abs(p_kw);
  if (ap > caps.s_kva * (1.0 + 1e-12))
    throw DomainError("|P| = " + std::to_string(ap) + " kW exceeds S = " + std::to_string(caps.s_kva) + " kVA");
  const double circle = std::sqrt(std::max(0.0, caps.s_kva * caps.s_kva - ap * ap));
  switch (caps.mode) {
    case CapabilityMode::CapacityOnly: {
      const double h = std::min(circle, caps.q_max_kvar);
      return {-h, h};
    }
    case CapabilityMode::Accurate: {
      const double envelope = std::max(caps.q_fix_fraction * caps.s_kva, std::tan(caps.alpha_max_rad) * ap);
      const double h = std::min({circle, caps.q_max_kvar, envelope});
      return {-h, h};
    }
    case CapabilityMode::LaggingOnly: {
      const double h = std::min(circle, std::tan(std::acos(caps.pf)) * ap);
      return {-h, 0.0};
    }
    case CapabilityMode::FixedPF: {
      const double q = caps.pf_sign * std::min(circle, std::tan(std::acos(caps.pf)) * ap);
      return {q, q};
    }
  }
  return {0.0, 0.0};
}

/// Final reactive power after applying the inverter's operating limits to a requested value.
inline double clamp_q(const CapabilitySpec& caps, double p_kw, double q_req_kvar) {
  const auto [lo, hi] = reactive_interval(caps, p_kw);
  return std::clamp(q_req_kvar, lo, hi);
}

inline const char* mode_name(CapabilityMode m) {
  switch (m) {
    case CapabilityMode::CapacityOnly: return "capacity_only";
    case CapabilityMode::Accurate: return "accurate";
    case CapabilityMode::LaggingOnly: return "lagging_only";
    case CapabilityMode::FixedPF: return "fixed_pf";
  }
  return "?";
}

inline CapabilityMode parse_mode(const std::string& s) {
  if (s == "capacity_only") return CapabilityMode::CapacityOnly;
  if (s == "accurate") return CapabilityMode::Accurate;
  if (s == "lagging_only") return CapabilityMode::LaggingOnly;
  if (s == "fixed_pf") return CapabilityMode::FixedPF;
  throw SchemaError("unknown capability mode '" + s + "'");
}

/// Operating-limit regime applied on top of each inverter's nameplate data.
struct CapabilityRegime {
  CapabilityMode mode = CapabilityMode::CapacityOnly;
  double pf = 1.0;   // lagging_only: minimum power factor; fixed_pf: held power factor
  int pf_sign = -1;  // fixed_pf only

  CapabilitySpec apply(CapabilitySpec c) const {
    c.mode = mode;
    if (mode == CapabilityMode::LaggingOnly || mode == CapabilityMode::FixedPF) {
      c.pf = pf;
      c.pf_sign = pf_sign;
    }
    return c;
  }
  std::string str() const {
    std::string s = mode_name(mode);
    if (mode == CapabilityMode::LaggingOnly || mode == CapabilityMode::FixedPF) s += "(" + std::to_string(pf) + ")";
    return s;
  }
};

}  // namespace vvl
