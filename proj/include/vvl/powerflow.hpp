#pragma once

#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <utility>
#include <vector>

#include "vvl/linalg.hpp"
#include "vvl/network.hpp"

namespace vvl {

/// One weighted operating point: per-load ZIP demand (same order as NetworkModel::loads)
/// and per-inverter active power / baseline reactive power keyed by inverter id.
struct ScenarioPoint {
  double weight = 1.0;
  std::vector<ZipLoad> loads;
  std::map<int, double> pg_kw;
  std::map<int, double> qg_kvar;

  double qg(int id) const {
    auto it = qg_kvar.find(id);
    return it == qg_kvar.end() ? 0.0 : it->second;
  }
  friend bool operator==(const ScenarioPoint&, const ScenarioPoint&) = default;
};

/// Operating point described by the model itself (nominal loads and inverter powers).
inline ScenarioPoint nominal_scenario(const NetworkModel& m) {
  ScenarioPoint s;
  for (const auto& ld : m.loads) s.loads.push_back(ld.zip);
  for (const auto& inv : m.inverters) s.pg_kw[inv.id] = inv.p_kw;
  return s;
}

/// Reactive injections keyed by inverter id [kVAr, generator convention]. A listed
/// inverter uses this value instead of the scenario's baseline Qg.
using QSetpoints = std::map<int, double>;

struct PowerFlowOptions {
  double tol_pu = 1e-9;
  int max_iter = 100;
};

struct PowerFlowSolution {
  std::vector<Vec4> v;       // node voltages to remote ground [V]
  std::vector<Vec4> i_line;  // conductor currents, oriented from -> to [A]
  Vec4 i_source{};           // phase currents delivered by the source into the root bus [A]
  double v_base = 230.0;
  int iterations = 0;
  double mismatch_pu = 0.0;

  double p_source_kw = 0.0, q_source_kvar = 0.0;
  double p_load_kw = 0.0, q_load_kvar = 0.0;
  double p_gen_kw = 0.0, q_gen_kvar = 0.0;
  double p_loss_kw = 0.0;

  /// Phase-to-neutral voltage in pu.
  cplx vpn(std::size_t bus, Phase p) const { return (v[bus][idx(p)] - v[bus][3]) / v_base; }
  double vmag(std::size_t bus, Phase p) const { return std::abs(vpn(bus, p)); }
  std::array<cplx, 3> phase_voltages(std::size_t bus) const {
    return {vpn(bus, Phase::A), vpn(bus, Phase::B), vpn(bus, Phase::C)};
  }
  /// Active power balance residual: source + generation - load - losses [kW].
  double balance_residual_kw() const { return p_source_kw + p_gen_kw - p_load_kw - p_loss_kw; }
};

/// ZIP demand at voltage magnitude `v_pu` [kW, kVAr].
inline std::pair<double, double> zip_demand(const ZipLoad& z, double v_pu) {
  if (!(v_pu > 0.0)) throw DomainError("zip_demand requires a positive voltage");
  const double r = v_pu / z.v0_pu;
  const auto& a = z.p_coeffs;
  const auto& b = z.q_coeffs;
  return {z.p_kw * (a.z * r * r + a.i * r + a.p), z.q_kvar * (b.z * r * r + b.i * r + b.p)};
}

namespace detail {

inline std::array<cplx, 3> source_emf(const NetworkModel& m) {
  const double mag = m.source.v_pu * m.bases.v_base_volts;
  const double a0 = deg2rad(m.source.angle_deg);
  const double shift = deg2rad(120.0);
  return {std::polar(mag, a0), std::polar(mag, a0 - shift), std::polar(mag, a0 + shift)};
}

inline void require_radial(const NetworkModel& m) {
  if (!m.topo.radial || m.topo.order.size() != m.buses.size())
    throw DomainError("power flow requires an indexed radial network (call reindex)");
}

/// One backward/forward pass over the radial graph. `draw(bus, v, out)` writes the phase currents
/// drawn at the bus from each phase conductor [A]; their sum returns through the neutral.
/// Updates `v` in place and returns the largest voltage change [V].
template <class Draw>
double sweep_pass(const NetworkModel& m, Draw& draw, const std::array<cplx, 3>& emf, std::vector<Vec4>& v,
                  std::vector<Vec4>& acc, std::vector<Vec4>& i_line) {
  const std::size_t nb = m.buses.size();
  const std::size_t root = m.topo.root;
  std::array<cplx, 3> d{};
  for (std::size_t b = 0; b < nb; ++b) {
    draw(b, v[b], d);
    acc[b] = {d[0], d[1], d[2], -(d[0] + d[1] + d[2])};
  }
  for (auto r = m.topo.order.rbegin(); r != m.topo.order.rend(); ++r) {
    const std::size_t b = *r;
    if (b == root) continue;
    const auto& ln = m.lines[static_cast<std::size_t>(m.topo.parent_line[b])];
    const std::size_t parent = ln.from == b ? ln.to : ln.from;
    for (int c = 0; c < 4; ++c) acc[parent][c] += acc[b][c];
  }
  double delta = 0.0;
  const cplx zs = m.source.z_series_ohm;
  const Vec4 vr{emf[0] - zs * acc[root][0], emf[1] - zs * acc[root][1], emf[2] - zs * acc[root][2], cplx{}};
  for (int c = 0; c < 4; ++c) delta = std::max(delta, std::abs(vr[c] - v[root][c]));
  v[root] = vr;
  for (std::size_t b : m.topo.order) {
    if (b == root) continue;
    const auto l = static_cast<std::size_t>(m.topo.parent_line[b]);
    const auto& ln = m.lines[l];
    const std::size_t parent = ln.from == b ? ln.to : ln.from;
    const Vec4 drop = mul(ln.z_ohm, acc[b]);
    for (int c = 0; c < 4; ++c) {
      const cplx nv = v[parent][c] - drop[c];
      delta = std::max(delta, std::abs(nv - v[b][c]));
      v[b][c] = nv;
    }
    if (ln.from == parent) {
      i_line[l] = acc[b];
    } else {
      for (int c = 0; c < 4; ++c) i_line[l][c] = -acc[b][c];
    }
  }
  return delta;
}

/// Repeats sweep passes until the voltage update falls below the tolerance.
template <class Draw>
PowerFlowSolution sweep(const NetworkModel& m, Draw&& draw, const PowerFlowOptions& opt,
                        const std::vector<Vec4>* warm) {
  require_radial(m);
  const std::size_t nb = m.buses.size();
  const double vb = m.bases.v_base_volts;
  const auto emf = source_emf(m);

  PowerFlowSolution sol;
  sol.v_base = vb;
  if (warm && warm->size() == nb) {
    sol.v = *warm;
  } else {
    sol.v.assign(nb, Vec4{emf[0], emf[1], emf[2], cplx{}});
  }
  sol.i_line.assign(m.lines.size(), Vec4{});
  std::vector<Vec4> acc(nb);

  for (int it = 1; it <= opt.max_iter; ++it) {
    const double delta = sweep_pass(m, draw, emf, sol.v, acc, sol.i_line) / vb;
    sol.i_source = acc[m.topo.root];
    if (!std::isfinite(delta))
      throw ConvergenceError("power flow diverged (non-finite voltages) at iteration " + std::to_string(it));
    sol.iterations = it;
    sol.mismatch_pu = delta;
    if (delta <= opt.tol_pu) return sol;
    for (std::size_t b = 0; b < nb; ++b) {
      for (Phase p : kPhases) {
        const double mag = std::abs(sol.v[b][idx(p)] - sol.v[b][3]) / vb;
        if (mag < 1e-3 || mag > 10.0)
          throw ConvergenceError("power flow diverged (voltage collapse) at iteration " + std::to_string(it));
      }
    }
  }
  throw ConvergenceError("power flow did not converge in " + std::to_string(opt.max_iter) +
                         " iterations (mismatch " + std::to_string(sol.mismatch_pu) + " pu)");
}

/// Constant-power injections per bus and phase [VA, load convention: positive = drawn].
struct BusDevices {
  std::vector<std::vector<std::pair<int, const ZipLoad*>>> zip;  // (phase, load)
  std::vector<std::array<cplx, 3>> s_fixed;
};

inline BusDevices collect_devices(const NetworkModel& m, const ScenarioPoint& s, const QSetpoints& q_set) {
  if (s.loads.size() != m.loads.size())
    throw DomainError("scenario has " + std::to_string(s.loads.size()) + " loads, network has " +
                      std::to_string(m.loads.size()));
  for (const auto& [id, q] : q_set)
    if (!m.find_inverter(id)) throw DomainError("reactive setpoint for unknown inverter " + std::to_string(id));
  BusDevices d;
  d.zip.assign(m.buses.size(), {});
  d.s_fixed.assign(m.buses.size(), {});
  for (std::size_t k = 0; k < m.loads.size(); ++k)
    d.zip[m.loads[k].bus].push_back({idx(m.loads[k].phase), &s.loads[k]});
  for (const auto& inv : m.inverters) {
    auto p = s.pg_kw.find(inv.id);
    if (p == s.pg_kw.end()) throw DomainError("scenario lacks active power for inverter " + std::to_string(inv.id));
    auto qs = q_set.find(inv.id);
    const double q = qs == q_set.end() ? s.qg(inv.id) : qs->second;
    d.s_fixed[inv.bus][idx(inv.phase)] -= cplx(p->second, q) * 1000.0;
  }
  return d;
}

inline void summarize(const NetworkModel& m, const BusDevices& dev, PowerFlowSolution& sol) {
  const double vb = sol.v_base;
  sol.p_source_kw = sol.q_source_kvar = 0.0;
  for (int c = 0; c < 3; ++c) {
    const cplx s = sol.v[m.topo.root][c] * std::conj(sol.i_source[c]) / 1000.0;
    sol.p_source_kw += s.real();
    sol.q_source_kvar += s.imag();
  }
  sol.p_load_kw = sol.q_load_kvar = sol.p_gen_kw = sol.q_gen_kvar = 0.0;
  for (std::size_t b = 0; b < m.buses.size(); ++b) {
    for (const auto& [ph, zl] : dev.zip[b]) {
      const double vm = std::abs(sol.v[b][ph] - sol.v[b][3]) / vb;
      const auto [p, q] = zip_demand(*zl, vm);
      sol.p_load_kw += p;
      sol.q_load_kvar += q;
    }
    for (int c = 0; c < 3; ++c) {
      sol.p_gen_kw -= dev.s_fixed[b][c].real() / 1000.0;
      sol.q_gen_kvar -= dev.s_fixed[b][c].imag() / 1000.0;
    }
  }
  sol.p_loss_kw = 0.0;
  for (std::size_t l = 0; l < m.lines.size(); ++l) {
    const Vec4 drop = mul(m.lines[l].z_ohm, sol.i_line[l]);
    for (int c = 0; c < 4; ++c) sol.p_loss_kw += (drop[c] * std::conj(sol.i_line[l][c])).real() / 1000.0;
  }
}

}  // namespace detail

/// Unbalanced four-wire power flow with ZIP loads and constant-power inverters.
/// `warm`, when given, seeds the sweep with a previous solution's voltages.
inline PowerFlowSolution solve_power_flow(const NetworkModel& m, const ScenarioPoint& s,
                                          const QSetpoints& q_set = {}, const PowerFlowOptions& opt = {},
                                          const PowerFlowSolution* warm = nullptr) {
  const auto dev = detail::collect_devices(m, s, q_set);
  const double vb = m.bases.v_base_volts;
  auto draw = [&](std::size_t b, const Vec4& v, std::array<cplx, 3>& out) {
    for (int c = 0; c < 3; ++c) out[c] = dev.s_fixed[b][c];
    for (const auto& [ph, zl] : dev.zip[b]) {
      const double vm = std::abs(v[ph] - v[3]) / vb;
      const auto [p, q] = zip_demand(*zl, vm);
      out[ph] += cplx(p, q) * 1000.0;
    }
    for (int c = 0; c < 3; ++c) {
      if (out[c] == cplx{}) continue;
      out[c] = std::conj(out[c] / (v[c] - v[3]));
    }
  };
  auto sol = detail::sweep(m, draw, opt, warm ? &warm->v : nullptr);
  detail::summarize(m, dev, sol);
  return sol;
}

struct Violation {
  enum class Kind { Voltage, Current } kind;
  std::string element;  // bus or line id
  Phase conductor;
  double value;  // pu for voltages, A for currents
  double limit;
};

inline std::vector<Violation> check_limits(const PowerFlowSolution& sol, const NetworkModel& m) {
  std::vector<Violation> out;
  for (std::size_t b = 0; b < m.buses.size(); ++b) {
    const auto& bus = m.buses[b];
    for (Phase p : kPhases) {
      if (!bus.has(p)) continue;
      const double vm = sol.vmag(b, p);
      if (vm < bus.v_min_pu) out.push_back({Violation::Kind::Voltage, bus.id, p, vm, bus.v_min_pu});
      if (vm > bus.v_max_pu) out.push_back({Violation::Kind::Voltage, bus.id, p, vm, bus.v_max_pu});
    }
  }
  for (std::size_t l = 0; l < m.lines.size(); ++l)
    for (int c = 0; c < 4; ++c) {
      const double im = std::abs(sol.i_line[l][c]);
      if (im > m.lines[l].ampacity_a)
        out.push_back({Violation::Kind::Current, m.lines[l].id, static_cast<Phase>(c), im, m.lines[l].ampacity_a});
    }
  return out;
}

struct LossBreakdown {
  std::vector<double> per_line_kw;
  double total_kw = 0.0;
};

/// Series losses over all four conductors, Re(I^H Z I); equals sum R|I|^2 for diagonal R.
inline LossBreakdown line_losses(const PowerFlowSolution& sol, const NetworkModel& m) {
  LossBreakdown out;
  out.per_line_kw.reserve(m.lines.size());
  for (std::size_t l = 0; l < m.lines.size(); ++l) {
    const auto& i = sol.i_line[l];
    const Vec4 drop = mul(m.lines[l].z_ohm, i);
    double p = 0.0;
    for (int c = 0; c < 4; ++c) p += (drop[c] * std::conj(i[c])).real();
    out.per_line_kw.push_back(p / 1000.0);
    out.total_kw += p / 1000.0;
  }
  return out;
}

/// Voltage unbalance factor |V2|/|V1| in percent from three phase-to-neutral phasors.
inline double vuf(const std::array<cplx, 3>& v) {
  const cplx a = std::polar(1.0, deg2rad(120.0));
  const cplx a2 = a * a;
  const cplx v1 = (v[0] + a * v[1] + a2 * v[2]) / 3.0;
  const cplx v2 = (v[0] + a2 * v[1] + a * v[2]) / 3.0;
  const double scale = std::abs(v[0]) + std::abs(v[1]) + std::abs(v[2]);
  if (!(std::abs(v1) > 1e-12 * scale) || scale == 0.0)
    throw DomainError("vuf undefined: zero positive-sequence voltage");
  return 100.0 * std::abs(v2) / std::abs(v1);
}

/// Mean VUF over buses carrying all three phases.
inline double mean_vuf(const PowerFlowSolution& sol, const NetworkModel& m) {
  double acc = 0.0;
  int n = 0;
  for (std::size_t b = 0; b < m.buses.size(); ++b) {
    if (!m.buses[b].three_phase()) continue;
    acc += vuf(sol.phase_voltages(b));
    ++n;
  }
  return n ? acc / n : 0.0;
}

struct TheveninOptions {
  double delta_i_amp = 0.1;
  // Report the grid seen by an inverter, without its own output admittance at the same node.
  bool exclude_local_inverters = true;
};

/// Linear small-signal device set derived from a solved operating point: every load becomes a
/// constant admittance, every inverter a constant current plus its output admittance.
struct LinearizedDevices {
  std::vector<std::array<cplx, 3>> y;        // phase-to-neutral admittance [S]
  std::vector<std::array<cplx, 3>> i_const;  // drawn current independent of voltage [A]
};

inline LinearizedDevices linearize(const NetworkModel& m, const ScenarioPoint& s, const QSetpoints& q_set,
                                   const PowerFlowSolution& op) {
  const auto dev = detail::collect_devices(m, s, q_set);
  const double vb = m.bases.v_base_volts;
  LinearizedDevices lin;
  lin.y.assign(m.buses.size(), {});
  lin.i_const.assign(m.buses.size(), {});
  for (std::size_t b = 0; b < m.buses.size(); ++b) {
    for (const auto& [ph, zl] : dev.zip[b]) {
      const cplx vpn = op.v[b][ph] - op.v[b][3];
      const auto [p, q] = zip_demand(*zl, std::abs(vpn) / vb);
      lin.y[b][ph] += std::conj(cplx(p, q) * 1000.0) / std::norm(vpn);
    }
    for (int c = 0; c < 3; ++c) {
      if (dev.s_fixed[b][c] == cplx{}) continue;
      const cplx vpn = op.v[b][c] - op.v[b][3];
      lin.i_const[b][c] += std::conj(dev.s_fixed[b][c] / vpn);
    }
  }
  for (const auto& inv : m.inverters) {
    if (inv.z_out_ohm == cplx{}) continue;
    const int c = idx(inv.phase);
    const cplx y = 1.0 / inv.z_out_ohm;
    const cplx vpn = op.v[inv.bus][c] - op.v[inv.bus][3];
    // Incremental only: the shunt draws nothing at the operating point.
    lin.y[inv.bus][c] += y;
    lin.i_const[inv.bus][c] -= y * vpn;
  }
  return lin;
}

/// Network with linearized devices. A sweep pass is then an affine map v -> A v + b, so the
/// fixed point follows from one Newton step, (I - A) v = b, with A assembled column by column
/// from passes over unit vectors. Unlike the iterated sweep this converges for stiff shunts.
class LinearizedNetwork {
 public:
  LinearizedNetwork(const NetworkModel& m, LinearizedDevices lin) : m_(&m), lin_(std::move(lin)) {
    detail::require_radial(m);
    const std::size_t n = 4 * m.buses.size();
    const auto b0 = pass(std::vector<cplx>(n), 0, Phase::A, {});
    std::vector<cplx> ia(n * n);
    std::vector<cplx> e(n);
    for (std::size_t k = 0; k < n; ++k) {
      e[k] = 1.0;
      const auto col = pass(e, 0, Phase::A, {});
      e[k] = 0.0;
      for (std::size_t r = 0; r < n; ++r) ia[r * n + k] = (r == k ? 1.0 : 0.0) - (col[r] - b0[r]);
    }
    lu_ = DenseLU<cplx>(std::move(ia));
    if (lu_.singular()) throw NumericalError("linearized network is singular");
  }

  /// Node voltages [V] with `inject` amps pushed into (bus, phase) and returned via the neutral.
  std::vector<Vec4> solve(std::size_t bus, Phase phase, cplx inject) const {
    auto x = pass(std::vector<cplx>(4 * m_->buses.size()), bus, phase, inject);
    lu_.solve(x);
    std::vector<Vec4> v(m_->buses.size());
    for (std::size_t b = 0; b < v.size(); ++b)
      for (int c = 0; c < 4; ++c) v[b][c] = x[4 * b + c];
    return v;
  }

 private:
  std::vector<cplx> pass(const std::vector<cplx>& flat, std::size_t bus, Phase phase, cplx inject) const {
    const std::size_t nb = m_->buses.size();
    std::vector<Vec4> v(nb), acc(nb), il(m_->lines.size());
    for (std::size_t b = 0; b < nb; ++b)
      for (int c = 0; c < 4; ++c) v[b][c] = flat[4 * b + c];
    auto draw = [&](std::size_t b, const Vec4& vb, std::array<cplx, 3>& out) {
      for (int c = 0; c < 3; ++c) out[c] = lin_.y[b][c] * (vb[c] - vb[3]) + lin_.i_const[b][c];
      if (b == bus) out[idx(phase)] -= inject;
    };
    detail::sweep_pass(*m_, draw, detail::source_emf(*m_), v, acc, il);
    std::vector<cplx> out(4 * nb);
    for (std::size_t b = 0; b < nb; ++b)
      for (int c = 0; c < 4; ++c) out[4 * b + c] = v[b][c];
    return out;
  }

  const NetworkModel* m_;
  LinearizedDevices lin_;
  DenseLU<cplx> lu_;
};

/// Driving-point phase-to-neutral impedances [ohm] at several (bus, phase) points, each from two
/// solves of the network linearized at the operating point (s, q_set): Z = dV / dI.
inline std::vector<cplx> thevenin_impedances(const NetworkModel& m, const ScenarioPoint& s, const QSetpoints& q_set,
                                             const std::vector<std::pair<std::size_t, Phase>>& points,
                                             const TheveninOptions& opt = {}, const PowerFlowSolution* op = nullptr) {
  for (const auto& [bus, phase] : points)
    if (bus >= m.buses.size() || phase == Phase::N || !m.buses[bus].has(phase))
      throw DomainError("thevenin_impedance: no such bus/phase");
  PowerFlowSolution own;
  if (!op) {
    own = solve_power_flow(m, s, q_set);
    op = &own;
  }
  const LinearizedNetwork net(m, linearize(m, s, q_set, *op));
  std::vector<cplx> out;
  for (const auto& [bus, phase] : points) {
    const auto base = net.solve(bus, phase, {});
    const auto pert = net.solve(bus, phase, opt.delta_i_amp);
    const cplx dv = (pert[bus][idx(phase)] - pert[bus][3]) - (base[bus][idx(phase)] - base[bus][3]);
    cplx z = dv / opt.delta_i_amp;
    if (opt.exclude_local_inverters) {
      cplx y_local{};
      for (const auto& inv : m.inverters)
        if (inv.bus == bus && inv.phase == phase && inv.z_out_ohm != cplx{}) y_local += 1.0 / inv.z_out_ohm;
      if (y_local != cplx{}) z = 1.0 / (1.0 / z - y_local);
    }
    out.push_back(z);
  }
  return out;
}

inline cplx thevenin_impedance(const NetworkModel& m, const ScenarioPoint& s, const QSetpoints& q_set,
                               std::size_t bus, Phase phase, const TheveninOptions& opt = {},
                               const PowerFlowSolution* op = nullptr) {
  return thevenin_impedances(m, s, q_set, {{bus, phase}}, opt, op).front();
}

/// CSV export: one row per (bus, phase) with |V| and angle, one per (line, conductor) with |I| and loss.
inline void write_solution_csv(std::ostream& os, const PowerFlowSolution& sol, const NetworkModel& m) {
  os << "kind,element,conductor,magnitude,angle_deg,loss_kw\n";
  os << std::setprecision(12);
  for (std::size_t b = 0; b < m.buses.size(); ++b)
    for (Phase p : kPhases) {
      if (!m.buses[b].has(p)) continue;
      const cplx v = sol.vpn(b, p);
      os << "bus," << m.buses[b].id << ',' << phase_char(p) << ',' << std::abs(v) << ',' << rad2deg(std::arg(v))
         << ",\n";
    }
  for (std::size_t l = 0; l < m.lines.size(); ++l) {
    const auto& ln = m.lines[l];
    for (int c = 0; c < 4; ++c) {
      const cplx i = sol.i_line[l][c];
      cplx loss{};
      for (int k = 0; k < 4; ++k) loss += ln.z_ohm[c][k] * sol.i_line[l][k];
      os << "line," << ln.id << ',' << "abcn"[c] << ',' << std::abs(i) << ',' << rad2deg(std::arg(i)) << ','
         << (loss * std::conj(i)).real() / 1000.0 << '\n';
    }
  }
}

}  // namespace vvl
