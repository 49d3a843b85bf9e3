#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <random>
#include <string>

#include "json.hpp"
#include "vvl/network_io.hpp"
#include "vvl/powerflow.hpp"

namespace fx {

using cplx = std::complex<double>;
using nlohmann::json;

inline std::string data_path(const std::string& name) { return std::string(VVL_DATA_DIR) + "/" + name; }

inline json diag4(double a, double n) {
  json m = json::array();
  for (int i = 0; i < 4; ++i) {
    json row = json::array();
    for (int k = 0; k < 4; ++k) row.push_back(i == k ? (i == 3 ? n : a) : 0.0);
    m.push_back(row);
  }
  return m;
}

inline json line_json(const std::string& id, const std::string& from, const std::string& to, cplx zp, cplx zn,
                      double ampacity = 500.0) {
  return {{"id", id},
          {"from", from},
          {"to", to},
          {"ampacity_a", ampacity},
          {"z_ohm", {{"r", diag4(zp.real(), zn.real())}, {"x", diag4(zp.imag(), zn.imag())}}}};
}

/// Source bus S, one line to bus L, an optional single-phase load and an optional inverter at L.
struct TwoBus {
  cplx z_phase{0.1, 0.1};
  cplx z_neutral{0.0, 0.0};
  double p_kw = 1.0;
  double q_kvar = 0.0;
  std::array<double, 3> zip{0.0, 0.0, 1.0};
  char load_phase = 'a';
  bool inverter = false;
  char inv_phase = 'a';
  double inv_s_kva = 5.0;
  double inv_p_kw = 0.0;
  double ampacity = 500.0;

  json to_json() const {
    json j;
    j["name"] = "two-bus";
    j["source"] = {{"bus", "S"}, {"v_pu", 1.0}, {"z_series_ohm", {0.0, 0.0}}};
    j["buses"] = json::array({{{"id", "S"}}, {{"id", "L"}}});
    j["lines"] = json::array({line_json("l1", "S", "L", z_phase, z_neutral, ampacity)});
    j["loads"] = json::array();
    if (p_kw > 0.0 || q_kvar != 0.0)
      j["loads"].push_back({{"bus", "L"},
                            {"phase", std::string(1, load_phase)},
                            {"p_kw", p_kw},
                            {"q_kvar", q_kvar},
                            {"zip_p", {zip[0], zip[1], zip[2]}}});
    j["inverters"] = json::array();
    if (inverter)
      j["inverters"].push_back({{"id", 1},
                                {"bus", "L"},
                                {"phase", std::string(1, inv_phase)},
                                {"p_kw", inv_p_kw},
                                {"s_kva", inv_s_kva},
                                {"q_max_kvar", inv_s_kva}});
    return j;
  }
  vvl::NetworkModel model() const { return vvl::parse_network(to_json()); }
};

// ---------------------------------------------------------------------------------------------
// Single-loop phasor oracle, written independently of the sweep solver: the loaded phase of a
// 2-bus feeder with no mutual coupling is one series loop (phase + neutral impedance).

struct LoopResult {
  cplx v;  // phase-to-neutral voltage at the load end [V]
  cplx i;  // loop current [A]
  bool converged = false;
};

/// `s_of_v(|V| in pu)` is the net complex power drawn at the far end [VA].
inline LoopResult solve_loop(cplx vs, cplx z_loop, const std::function<cplx(double)>& s_of_v, double v_base = 230.0) {
  cplx v = vs;
  bool ok = false;
  for (int k = 0; k < 5000 && std::isfinite(std::abs(v)); ++k) {
    const cplx i = std::conj(s_of_v(std::abs(v) / v_base) / v);
    const cplx next = vs - z_loop * i;
    ok = std::abs(next - v) < 1e-13 * v_base;
    v = next;
    if (ok) break;
  }
  return {v, std::conj(s_of_v(std::abs(v) / v_base) / v), ok};
}

inline double zip_factor(const std::array<double, 3>& c, double r) { return c[0] * r * r + c[1] * r + c[2]; }

/// Net power drawn at L for a ZIP load plus an inverter injecting (pg, qg) on the same phase.
inline std::function<cplx(double)> zip_minus_gen(double p_kw, double q_kvar, std::array<double, 3> zip, double pg_kw = 0.0,
                                                 double qg_kvar = 0.0) {
  return [=](double vpu) {
    const double f = zip_factor(zip, vpu);
    return cplx{1000.0 * (p_kw * f - pg_kw), 1000.0 * (q_kvar * f - qg_kvar)};
  };
}

/// Loaded-phase voltage magnitude [pu] with the inverter injecting qg; NaN past the nose point.
inline double loop_vmag(const TwoBus& tb, double pg_kw, double qg_kvar, double p_kw, double q_kvar) {
  const auto r = solve_loop(230.0, tb.z_phase + tb.z_neutral, zip_minus_gen(p_kw, q_kvar, tb.zip, pg_kw, qg_kvar));
  return r.converged ? std::abs(r.v) / 230.0 : std::nan("");
}

/// Q that puts the loaded-phase voltage at `target` pu (bisection; |V| rises with injected Q).
/// NaN when no Q in [-100, 100] kVAr reaches the target.
inline double loop_q_for_voltage(const TwoBus& tb, double pg_kw, double p_kw, double q_kvar, double target) {
  double lo = -100.0, hi = 100.0;
  for (int k = 0; k < 80; ++k) {
    const double mid = 0.5 * (lo + hi);
    const double v = loop_vmag(tb, pg_kw, mid, p_kw, q_kvar);
    if (std::isnan(v) || v >= target)
      hi = mid;
    else
      lo = mid;
  }
  const double q = 0.5 * (lo + hi);
  const double v = loop_vmag(tb, pg_kw, q, p_kw, q_kvar);
  return std::abs(v - target) < 1e-9 ? q : std::nan("");
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Small hand-rolled generator for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : g_(seed) {}
  double real(double a, double b) { return a + (b - a) * (static_cast<double>(g_() >> 11) * 0x1.0p-53); }
  int integer(int a, int b) { return a + static_cast<int>(g_() % static_cast<std::uint64_t>(b - a + 1)); }
  bool coin(double p = 0.5) { return real(0.0, 1.0) < p; }

 private:
  std::mt19937_64 g_;
};

}  // namespace fx
