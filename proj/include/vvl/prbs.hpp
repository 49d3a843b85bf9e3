#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <vector>

#include "vvl/linalg.hpp"
#include "vvl/rng.hpp"
#include "vvl/types.hpp"

namespace vvl {

/// Maximal-length sequence of 2^order - 1 chips (+1/-1) from a Fibonacci shift register.
inline std::vector<int> prbs_sequence(int order, std::uint32_t state = 1) {
  // feedback taps of primitive polynomials, 1-based bit positions
  static const std::vector<std::vector<int>> taps = {
      {},          {},          {},          {},          {},          {},          {},
      {7, 6},      {8, 6, 5, 4}, {9, 5},      {10, 7},     {11, 9},     {12, 6, 4, 1}, {13, 4, 3, 1},
      {14, 5, 3, 1}, {15, 14},  {16, 15, 13, 4}};
  if (order < 7 || order > 16) throw DomainError("PRBS order must be within 7..16");
  const std::uint32_t mask = (1u << order) - 1u;
  state &= mask;
  if (state == 0) throw DomainError("PRBS seed state must be non-zero");
  const std::size_t n = mask;
  std::vector<int> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    out[k] = (state & 1u) ? 1 : -1;
    std::uint32_t fb = 0;
    for (int t : taps[static_cast<std::size_t>(order)]) fb ^= (state >> (order - t)) & 1u;
    state = ((state >> 1) | (fb << (order - 1))) & mask;
  }
  return out;
}

/// Desk rig: a stiff sinusoidal source behind R + jwL, seen from a PCC where a current is injected.
struct TheveninCircuit {
  double r_ohm = 0.5;
  double l_h = 1e-3;
  double v_rms = 230.0;
  double f_hz = 50.0;
};

struct PRBSConfig {
  int order = 10;
  double fs_hz = 51150.0;       // one period of 1023 chips spans exactly one 50 Hz cycle
  double amp_a = 5.0;           // injected chip amplitude
  double noise_fraction = 0.0;  // std-dev of additive voltage noise relative to the source RMS
  int periods = 16;
  std::size_t samples = 0;      // record length; 0 means periods * (2^order - 1)
  double f_fit_max_hz = 2000.0; // upper edge of the band used for the R + jwL fit
  std::uint64_t seed = 7;
};

struct PRBSRecord {
  std::vector<double> i;  // injected current [A]
  std::vector<double> v;  // measured PCC voltage [V]
  double fs_hz = 0.0;
  std::size_t period = 0;
};

struct PRBSEstimate {
  cplx z_fundamental{};
  double r_ohm = 0.0;
  double l_h = 0.0;
  std::vector<double> f_hz;  // excited bins used in the fit
  std::vector<cplx> z_bins;  // non-parametric estimate at those bins
};

namespace detail {

// Plain O(N^2) DFT; N is a PRBS period, small enough for a desk demo.
inline std::vector<cplx> dft(const std::vector<cplx>& x, bool inverse = false) {
  const std::size_t n = x.size();
  std::vector<cplx> tw(n);
  const double sgn = inverse ? 1.0 : -1.0;
  for (std::size_t k = 0; k < n; ++k) tw[k] = std::polar(1.0, sgn * 2.0 * std::numbers::pi * static_cast<double>(k) / n);
  std::vector<cplx> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    cplx acc{};
    std::size_t idx = 0;
    for (std::size_t t = 0; t < n; ++t) {
      acc += x[t] * tw[idx];
      idx += k;
      if (idx >= n) idx -= n;
    }
    out[k] = inverse ? acc / static_cast<double>(n) : acc;
  }
  return out;
}

inline double bin_freq(std::size_t k, std::size_t n, double fs) {
  const double kk = k <= n / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(n);
  return kk * fs / static_cast<double>(n);
}

}  // namespace detail

/// Voltage response of the rig to a periodic PRBS current. The current is the band-limited
/// periodic interpolant of the chip sequence, so v = e + R i + L di/dt is evaluated exactly in
/// periodic steady state.
inline PRBSRecord simulate_prbs(const TheveninCircuit& c, const PRBSConfig& cfg) {
  if (c.r_ohm < 0.0 || c.l_h < 0.0) throw DomainError("Thevenin circuit needs R >= 0 and L >= 0");
  if (cfg.fs_hz < 10.0 * c.f_hz) throw DomainError("sample rate must be at least 10x the fundamental");
  const auto chips = prbs_sequence(cfg.order);
  const std::size_t n = chips.size();
  std::vector<cplx> ip(n);
  for (std::size_t t = 0; t < n; ++t) ip[t] = cfg.amp_a * chips[t];
  auto spec = detail::dft(ip);
  for (std::size_t k = 0; k < n; ++k) {
    const double w = 2.0 * std::numbers::pi * detail::bin_freq(k, n, cfg.fs_hz);
    spec[k] *= cplx(c.r_ohm, w * c.l_h);
  }
  const auto vp = detail::dft(spec, true);

  PRBSRecord rec;
  rec.fs_hz = cfg.fs_hz;
  rec.period = n;
  const std::size_t len = cfg.samples ? cfg.samples : n * static_cast<std::size_t>(std::max(cfg.periods, 0));
  rec.i.resize(len);
  rec.v.resize(len);
  const double amp = std::sqrt(2.0) * c.v_rms;
  for (std::size_t t = 0; t < len; ++t) {
    const double time = static_cast<double>(t) / cfg.fs_hz;
    rec.i[t] = ip[t % n].real();
    rec.v[t] = amp * std::sin(2.0 * std::numbers::pi * c.f_hz * time) + vp[t % n].real();
  }
  if (cfg.noise_fraction > 0.0 && len > 0) {
    const double sigma = cfg.noise_fraction * c.v_rms;
    Draws rng(cfg.seed);
    for (auto& x : rec.v) x += sigma * rng.normal();
  }
  return rec;
}

/// Impedance at the fundamental from a PRBS record: the fundamental is removed by a least-squares
/// sine fit, cross- and auto-spectra are averaged over whole periods, and R + jwL is fitted by
/// least squares over the excited bins up to f_fit_max.
inline PRBSEstimate estimate_impedance(const PRBSRecord& rec, double f0_hz, double f_fit_max_hz = 2000.0) {
  const std::size_t n = rec.period;
  if (n == 0 || rec.i.size() != rec.v.size()) throw DomainError("malformed PRBS record");
  const std::size_t periods = rec.v.size() / n;
  if (periods < 1) throw DomainError("PRBS record is shorter than one sequence period");
  const std::size_t len = periods * n;

  // least-squares fit of a cos + b sin + d at f0, then subtract
  double s_cc = 0, s_ss = 0, s_cs = 0, s_c = 0, s_s = 0, y_c = 0, y_s = 0, y_1 = 0;
  for (std::size_t t = 0; t < len; ++t) {
    const double ph = 2.0 * std::numbers::pi * f0_hz * static_cast<double>(t) / rec.fs_hz;
    const double cc = std::cos(ph), sn = std::sin(ph), y = rec.v[t];
    s_cc += cc * cc;
    s_ss += sn * sn;
    s_cs += cc * sn;
    s_c += cc;
    s_s += sn;
    y_c += y * cc;
    y_s += y * sn;
    y_1 += y;
  }
  std::vector<double> a{s_cc, s_cs, s_c, s_cs, s_ss, s_s, s_c, s_s, static_cast<double>(len)};
  std::vector<double> rhs{y_c, y_s, y_1};
  if (!solve_dense(a, rhs)) throw NumericalError("fundamental fit is singular");
  std::vector<double> v(len);
  for (std::size_t t = 0; t < len; ++t) {
    const double ph = 2.0 * std::numbers::pi * f0_hz * static_cast<double>(t) / rec.fs_hz;
    v[t] = rec.v[t] - (rhs[0] * std::cos(ph) + rhs[1] * std::sin(ph) + rhs[2]);
  }

  std::vector<cplx> s_vi(n), s_ii(n);
  for (std::size_t p = 0; p < periods; ++p) {
    std::vector<cplx> xi(n), xv(n);
    for (std::size_t t = 0; t < n; ++t) {
      xi[t] = rec.i[p * n + t];
      xv[t] = v[p * n + t];
    }
    const auto fi = detail::dft(xi);
    const auto fv = detail::dft(xv);
    for (std::size_t k = 0; k < n; ++k) {
      s_vi[k] += fv[k] * std::conj(fi[k]);
      s_ii[k] += std::norm(fi[k]);
    }
  }

  PRBSEstimate est;
  const double df = rec.fs_hz / static_cast<double>(n);
  double sw = 0, sr = 0, sww = 0, swx = 0;
  for (std::size_t k = 1; k <= n / 2; ++k) {
    const double f = static_cast<double>(k) * df;
    if (f > f_fit_max_hz) break;
    if (std::abs(f - f0_hz) < 0.5 * df) continue;  // bin shared with the removed fundamental
    if (std::abs(s_ii[k]) <= 0.0) continue;
    const cplx z = s_vi[k] / s_ii[k];
    const double w = 2.0 * std::numbers::pi * f;
    const double weight = s_ii[k].real();
    est.f_hz.push_back(f);
    est.z_bins.push_back(z);
    sw += weight;
    sr += weight * z.real();
    sww += weight * w * w;
    swx += weight * w * z.imag();
  }
  if (est.f_hz.empty() || sww <= 0.0) throw DomainError("no excited bins below the fit limit");
  est.r_ohm = sr / sw;
  est.l_h = swx / sww;
  est.z_fundamental = {est.r_ohm, 2.0 * std::numbers::pi * f0_hz * est.l_h};
  return est;
}

/// Simulates the rig and estimates its impedance at the source frequency.
inline PRBSEstimate estimate_impedance_prbs(const TheveninCircuit& c, const PRBSConfig& cfg) {
  if (cfg.order < 7) throw DomainError("PRBS order must be at least 7");
  const std::size_t n = (std::size_t{1} << cfg.order) - 1;
  const std::size_t len = cfg.samples ? cfg.samples : n * static_cast<std::size_t>(std::max(cfg.periods, 0));
  if (len < n) throw DomainError("PRBS record is shorter than one sequence period");
  return estimate_impedance(simulate_prbs(c, cfg), c.f_hz, cfg.f_fit_max_hz);
}

}  // namespace vvl
