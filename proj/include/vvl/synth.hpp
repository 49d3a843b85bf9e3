#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "vvl/network.hpp"
#include "vvl/rng.hpp"
#include "vvl/scenarios.hpp"

namespace vvl {

/// Synthetic minute-resolution demand and V2G charging, built from base profiles, a diurnal
/// shape and seeded noise.
struct SynthOptions {
  std::uint64_t seed = 42;
  int days = 7;
  double noise = 0.05;      // stationary relative std-dev of the AR(1) demand noise
  double noise_rho = 0.97;  // minute-to-minute correlation
  double ev_kw = 2.3;       // charging power while plugged in and not full
  double zip_swing = 0.10;  // diurnal swing of the constant-impedance share
};

namespace detail {

inline double bump(double h, double centre, double width) {
  double d = std::fmod(std::abs(h - centre), 24.0);
  d = std::min(d, 24.0 - d);
  return std::exp(-0.5 * (d / width) * (d / width));
}

/// Residential demand shape, peak close to 1.
inline double demand_shape(double hour, bool weekend) {
  if (weekend) return 0.30 + 0.30 * bump(hour, 10.0, 2.0) + 0.20 * bump(hour, 14.0, 2.5) + 0.55 * bump(hour, 19.0, 2.2);
  return 0.28 + 0.35 * bump(hour, 7.5, 1.1) + 0.12 * bump(hour, 13.0, 2.0) + 0.65 * bump(hour, 19.0, 1.8);
}

}  // namespace detail

inline TimeSeries synth_timeseries(const NetworkModel& m, const SynthOptions& opt = {}) {
  if (opt.days < 1) throw DomainError("synth: days must be >= 1");
  Draws rng(opt.seed);
  const int steps = opt.days * 1440;
  TimeSeries ts;
  for (std::size_t k = 0; k < m.loads.size(); ++k) ts.load_keys.push_back(m.load_key(k));
  ts.inverter_ids = m.inverter_ids();
  ts.steps.assign(static_cast<std::size_t>(steps), ScenarioPoint{});

  for (std::size_t k = 0; k < m.loads.size(); ++k) {
    const ZipLoad& base = m.loads[k].zip;
    const double shift_h = rng.uniform(-0.25, 0.25);
    const double amp = rng.uniform(0.9, 1.1);
    const double zip_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double qp = base.p_kw > 0.0 ? base.q_kvar / base.p_kw : 0.0;
    const double innov = opt.noise * std::sqrt(1.0 - opt.noise_rho * opt.noise_rho);
    double x = opt.noise * rng.normal();
    for (int t = 0; t < steps; ++t) {
      const int day = t / 1440;
      const double hour = (t % 1440) / 60.0;
      const bool weekend = day % 7 >= 5;
      x = opt.noise_rho * x + innov * rng.normal();
      const double level = std::max(0.05, amp * detail::demand_shape(hour - shift_h, weekend) * (1.0 + x));
      ZipLoad z = base;
      z.p_kw = base.p_kw * level;
      z.q_kvar = z.p_kw * qp;
      const double swing = opt.zip_swing * std::sin(2.0 * std::numbers::pi * hour / 24.0 + zip_phase);
      auto shift = [&](ZipCoefficients c) {
        const double dz = std::clamp(swing, -c.z, c.p);
        return normalized({c.z + dz, c.i, c.p - dz});
      };
      z.p_coeffs = shift(base.p_coeffs);
      z.q_coeffs = shift(base.q_coeffs);
      ts.steps[static_cast<std::size_t>(t)].loads.push_back(z);
    }
  }

  for (const auto& inv : m.inverters) {
    const double pmax = std::min(opt.ev_kw, inv.caps.s_kva);
    std::vector<double> pg(static_cast<std::size_t>(steps), 0.0);
    for (int day = 0; day < opt.days; ++day) {
      if (rng.uniform() < 0.12) continue;  // car not used that day
      const double arrive_h = std::clamp(17.5 + 1.6 * rng.normal(), 12.0, 23.5);
      const double energy_kwh = rng.uniform(4.0, 13.0);
      const int start = day * 1440 + static_cast<int>(arrive_h * 60.0);
      const int dur = static_cast<int>(energy_kwh / pmax * 60.0);
      for (int t = start; t < std::min(steps, start + dur); ++t) pg[static_cast<std::size_t>(t)] = -pmax;
    }
    for (int t = 0; t < steps; ++t) ts.steps[static_cast<std::size_t>(t)].pg_kw[inv.id] = pg[static_cast<std::size_t>(t)];
  }
  return ts;
}

/// Every `stride`-th step, preserving order.
inline TimeSeries subsample(const TimeSeries& ts, std::size_t stride) {
  if (stride == 0) throw DomainError("subsample: stride must be positive");
  TimeSeries out;
  out.load_keys = ts.load_keys;
  out.inverter_ids = ts.inverter_ids;
  out.step_minutes = ts.step_minutes * static_cast<double>(stride);
  for (std::size_t t = 0; t < ts.steps.size(); t += stride) out.steps.push_back(ts.steps[t]);
  return out;
}

/// Steps [first, first + count).
inline TimeSeries window(const TimeSeries& ts, std::size_t first, std::size_t count) {
  if (first + count > ts.steps.size()) throw DomainError("window exceeds the time series");
  TimeSeries out;
  out.load_keys = ts.load_keys;
  out.inverter_ids = ts.inverter_ids;
  out.step_minutes = ts.step_minutes;
  out.steps.assign(ts.steps.begin() + static_cast<std::ptrdiff_t>(first),
                   ts.steps.begin() + static_cast<std::ptrdiff_t>(first + count));
  return out;
}

}  // namespace vvl
