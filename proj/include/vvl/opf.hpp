#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "vvl/capability.hpp"
#include "vvl/optimize.hpp"
#include "vvl/parallel.hpp"
#include "vvl/powerflow.hpp"
#include "vvl/scenarios.hpp"

namespace vvl {

enum class Objective { UnbalanceMin, LossMin, VoltageDeviation };

inline const char* objective_name(Objective o) {
  switch (o) {
    case Objective::UnbalanceMin: return "unbalance";
    case Objective::LossMin: return "loss";
    case Objective::VoltageDeviation: return "voltage_deviation";
  }
  return "?";
}

inline Objective parse_objective(const std::string& s) {
  if (s == "unbalance") return Objective::UnbalanceMin;
  if (s == "loss") return Objective::LossMin;
  if (s == "voltage_deviation") return Objective::VoltageDeviation;
  throw SchemaError("unknown objective '" + s + "' (expected unbalance, loss or voltage_deviation)");
}

/// Per-scenario objective: mean VUF [%] over three-phase buses, total line loss [kW], or mean
/// | |V| - 1 | [pu] over all energized phase conductors.
inline double objective_value(const PowerFlowSolution& sol, const NetworkModel& m, Objective obj) {
  switch (obj) {
    case Objective::UnbalanceMin: return mean_vuf(sol, m);
    case Objective::LossMin: return std::max(0.0, line_losses(sol, m).total_kw);
    case Objective::VoltageDeviation: {
      double acc = 0.0;
      int n = 0;
      for (std::size_t b = 0; b < m.buses.size(); ++b)
        for (Phase p : kPhases)
          if (m.buses[b].has(p)) {
            acc += std::abs(sol.vmag(b, p) - 1.0);
            ++n;
          }
      return n ? acc / n : 0.0;
    }
  }
  return 0.0;
}

/// Squared limit violations: voltages in pu beyond [v_min, v_max], currents relative to ampacity.
inline double limit_violation(const PowerFlowSolution& sol, const NetworkModel& m) {
  double v = 0.0;
  for (std::size_t b = 0; b < m.buses.size(); ++b)
    for (Phase p : kPhases) {
      if (!m.buses[b].has(p)) continue;
      const double vm = sol.vmag(b, p);
      const double e = std::max({0.0, m.buses[b].v_min_pu - vm, vm - m.buses[b].v_max_pu});
      v += e * e;
    }
  for (std::size_t l = 0; l < m.lines.size(); ++l)
    for (int c = 0; c < 4; ++c) {
      const double e = std::max(0.0, std::abs(sol.i_line[l][c]) / m.lines[l].ampacity_a - 1.0);
      v += e * e;
    }
  return v;
}

inline double pcc_voltage(const PowerFlowSolution& sol, const Inverter& inv) { return sol.vmag(inv.bus, inv.phase); }

// ---------------------------------------------------------------------------------------------
// PCC voltage tracking: finds inverter reactive powers that hold each PCC at a target magnitude.

struct TrackingOptions {
  double tol_pu = 1e-6;
  int max_iter = 25;
  double probe_kvar = 0.1;          // finite-difference step for the sensitivity matrix
  double min_sensitivity = 1e-9;    // pu/kVAr; weaker inverters cannot move their PCC and stay at Q = 0
};

/// Per-scenario tracker. The sensitivity matrix dV/dQ is built once at the baseline operating
/// point and reused as a chord Jacobian, so a call depends only on its target.
class VoltageTracker {
 public:
  VoltageTracker(const NetworkModel& m, const ScenarioPoint& s, const PowerFlowOptions& pf = {},
                 const TrackingOptions& opt = {})
      : m_(&m), s_(&s), pf_(pf), opt_(opt) {
    const std::size_t n = m.inverters.size();
    base_ = solve_power_flow(m, s, base_q(), pf_);
    for (const auto& inv : m.inverters) v_base_.push_back(pcc_voltage(base_, inv));
    std::vector<double> jac(n * n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      QSetpoints q = base_q();
      q[m.inverters[j].id] += opt_.probe_kvar;
      const auto sol = solve_power_flow(m, s, q, pf_, &base_);
      for (std::size_t i = 0; i < n; ++i)
        jac[i * n + j] = (pcc_voltage(sol, m.inverters[i]) - v_base_[i]) / opt_.probe_kvar;
    }
    for (std::size_t i = 0; i < n; ++i)
      if (std::abs(jac[i * n + i]) >= opt_.min_sensitivity) active_.push_back(i);
    const std::size_t k = active_.size();
    jac_.assign(k * k, 0.0);
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) jac_[a * k + b] = jac[active_[a] * n + active_[b]];
  }

  const PowerFlowSolution& base() const { return base_; }
  const std::vector<double>& base_voltages() const { return v_base_; }
  const std::vector<std::size_t>& active() const { return active_; }

  struct Result {
    QSetpoints q;  // total reactive power per inverter [kVAr]
    PowerFlowSolution sol;
    int iterations = 0;
    bool converged = false;
  };

  /// `target[i]` is the PCC voltage for inverter i (model order). Throws ConvergenceError when a
  /// power flow fails; returns converged = false when the chord iteration stalls.
  Result track(const std::vector<double>& target) const {
    const std::size_t k = active_.size();
    Result r;
    r.q = base_q();
    std::vector<double> dq(k);
    for (std::size_t a = 0; a < k; ++a) dq[a] = target[active_[a]] - v_base_[active_[a]];
    if (k == 0) {
      r.sol = base_;
      r.converged = true;
      return r;
    }
    if (!solve_jac(dq)) return r;
    for (std::size_t a = 0; a < k; ++a) r.q[m_->inverters[active_[a]].id] += dq[a];
    const PowerFlowSolution* warm = &base_;
    for (int it = 1; it <= opt_.max_iter; ++it) {
      r.sol = solve_power_flow(*m_, *s_, r.q, pf_, warm);
      warm = &r.sol;
      r.iterations = it;
      double worst = 0.0;
      std::vector<double> res(k);
      for (std::size_t a = 0; a < k; ++a) {
        res[a] = target[active_[a]] - pcc_voltage(r.sol, m_->inverters[active_[a]]);
        worst = std::max(worst, std::abs(res[a]));
      }
      if (worst <= opt_.tol_pu) {
        r.converged = true;
        return r;
      }
      if (!solve_jac(res)) return r;
      for (std::size_t a = 0; a < k; ++a) r.q[m_->inverters[active_[a]].id] += res[a];
    }
    return r;
  }

 private:
  QSetpoints base_q() const {
    QSetpoints q;
    for (const auto& inv : m_->inverters) q[inv.id] = s_->qg(inv.id);
    return q;
  }
  bool solve_jac(std::vector<double>& rhs) const {
    if (solve_dense(jac_, rhs)) return true;
    auto reg = jac_;
    const std::size_t k = active_.size();
    for (std::size_t a = 0; a < k; ++a) reg[a * k + a] += 1e-9;
    return solve_dense(reg, rhs);
  }

  const NetworkModel* m_;
  const ScenarioPoint* s_;
  PowerFlowOptions pf_;
  TrackingOptions opt_;
  PowerFlowSolution base_;
  std::vector<double> v_base_;
  std::vector<std::size_t> active_;
  std::vector<double> jac_;
};

// ---------------------------------------------------------------------------------------------
// Stage I

struct StageOneOptions {
  CoordinateSearchOptions search{0.01, 1e-4, 0.5, 200'000};
  std::vector<double> seeds{0.98, 1.00, 1.02};
  double penalty_weight = 1e4;
  double violation_tol = 1e-6;
  bool require_feasible = true;
  TrackingOptions tracking{};
  PowerFlowOptions pf{};
};

struct SeedOutcome {
  double seed = 0.0;
  double start_value = 0.0;  // penalized objective at the seed
  double final_value = 0.0;
  long evaluations = 0;
};

struct OptimalVoltages {
  std::map<int, double> v_opt;
  Objective objective = Objective::UnbalanceMin;
  double value = 0.0;       // sum_s pi_s f_s at the optimum
  double penalized = 0.0;   // value + penalty term (what the search minimized)
  double violation = 0.0;   // sum_s pi_s * squared limit violation
  bool feasible = true;
  long evaluations = 0;
  std::vector<SeedOutcome> seeds;
  std::vector<QSetpoints> tracking_q;  // per scenario, reactive power realizing v_opt
};

namespace detail {

struct StageOneEval {
  double value = 0.0;
  double violation = 0.0;
  std::vector<QSetpoints> q;
  bool ok = true;
};

inline StageOneEval evaluate_stage_one(const NetworkModel& m, const ScenarioSet& ss,
                                       const std::vector<VoltageTracker>& trackers, const std::vector<double>& x,
                                       Objective obj, bool keep_q) {
  const std::size_t ns = ss.points.size();
  std::vector<double> f(ns, 0.0), viol(ns, 0.0);
  std::vector<char> ok(ns, 1);
  std::vector<QSetpoints> q(keep_q ? ns : 0);
  parallel_for(ns, [&](std::size_t s) {
    try {
      auto r = trackers[s].track(x);
      if (!r.converged) {
        ok[s] = 0;
        return;
      }
      f[s] = objective_value(r.sol, m, obj);
      viol[s] = limit_violation(r.sol, m);
      if (keep_q) q[s] = std::move(r.q);
    } catch (const NumericalError&) {
      ok[s] = 0;
    }
  });
  StageOneEval e;
  e.q = std::move(q);
  for (std::size_t s = 0; s < ns; ++s) {
    if (!ok[s]) e.ok = false;
    e.value += ss.points[s].weight * f[s];
    e.violation += ss.points[s].weight * viol[s];
  }
  return e;
}

}  // namespace detail

/// Multi-scenario optimal PCC voltages: every inverter holds its PCC at a scenario-independent
/// magnitude (reactive power unlimited), limits enter as a quadratic penalty, and a bounded
/// coordinate search is multi-started from the configured seeds.
inline OptimalVoltages stage1_optimal_voltages(const NetworkModel& m, const ScenarioSet& ss, Objective obj,
                                               const StageOneOptions& opt = {}) {
  if (m.inverters.empty()) throw DomainError("stage I needs at least one inverter");
  if (ss.points.empty()) throw DomainError("stage I needs at least one scenario");
  const std::size_t n = m.inverters.size();

  std::vector<VoltageTracker> trackers;
  trackers.reserve(ss.points.size());
  for (const auto& s : ss.points) trackers.emplace_back(m, s, opt.pf, opt.tracking);

  std::vector<double> lo(n), hi(n);
  for (std::size_t i = 0; i < n; ++i) {
    lo[i] = m.buses[m.inverters[i].bus].v_min_pu;
    hi[i] = m.buses[m.inverters[i].bus].v_max_pu;
  }
  auto penalized = [&](const std::vector<double>& x) {
    const auto e = detail::evaluate_stage_one(m, ss, trackers, x, obj, false);
    if (!e.ok) return std::numeric_limits<double>::infinity();
    return e.value + opt.penalty_weight * e.violation;
  };

  OptimalVoltages out;
  out.objective = obj;
  SearchResult best;
  bool have = false;
  for (double seed : opt.seeds) {
    SeedOutcome so;
    so.seed = seed;
    auto r = coordinate_search(penalized, std::vector<double>(n, seed), lo, hi, opt.search);
    so.final_value = r.f;
    so.evaluations = r.evaluations;
    std::vector<double> x0(n, seed);
    for (std::size_t i = 0; i < n; ++i) x0[i] = std::clamp(x0[i], lo[i], hi[i]);
    so.start_value = penalized(x0);
    out.evaluations += r.evaluations + 1;
    out.seeds.push_back(so);
    if (!have || r.f < best.f) {
      best = std::move(r);
      have = true;
    }
  }
  if (!std::isfinite(best.f))
    throw ConvergenceError("stage I: every candidate failed (power flow or voltage tracking diverged)");

  const auto e = detail::evaluate_stage_one(m, ss, trackers, best.x, obj, true);
  for (std::size_t i = 0; i < n; ++i) out.v_opt[m.inverters[i].id] = best.x[i];
  out.value = e.value;
  out.violation = e.violation;
  out.penalized = best.f;
  out.feasible = e.violation <= opt.violation_tol;
  out.tracking_q = e.q;
  if (!out.feasible && opt.require_feasible)
    throw NumericalError("stage I: no feasible point (weighted squared violation " + std::to_string(e.violation) +
                         ")");
  return out;
}

// ---------------------------------------------------------------------------------------------
// Stage II

struct StageTwoOptions {
  CoordinateSearchOptions search{0.25, 1e-4, 0.5, 200'000};  // kVAr
  PowerFlowOptions pf{};
};

struct StageTwoScenario {
  std::map<int, double> dq;  // reactive adjustment relative to the baseline [kVAr]
  double deviation = 0.0;    // sum_i (|V_i| - V_i^opt)^2
  bool limits_ok = true;     // voltage/current limits at the returned point
  long evaluations = 0;
};

struct StageTwoResult {
  std::vector<StageTwoScenario> scenarios;
};

/// Per-scenario reactive adjustment minimizing the squared PCC deviation from the optimal
/// voltages, searched inside each inverter's capability box. `seed_q` (total Q per inverter) is
/// tried as a second start after projection onto the box.
inline StageTwoScenario stage2_optimal_dq(const NetworkModel& m, const ScenarioPoint& s, const OptimalVoltages& vopt,
                                          const CapabilityRegime& regime, const StageTwoOptions& opt = {},
                                          const QSetpoints* seed_q = nullptr) {
  const std::size_t n = m.inverters.size();
  std::vector<double> lo(n), hi(n), target(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& inv = m.inverters[i];
    auto it = vopt.v_opt.find(inv.id);
    if (it == vopt.v_opt.end()) throw DomainError("stage II: no optimal voltage for inverter " + std::to_string(inv.id));
    target[i] = it->second;
    const double p = s.pg_kw.at(inv.id);
    const auto [ql, qh] = reactive_interval(regime.apply(inv.caps), p);
    const double q0 = s.qg(inv.id);
    lo[i] = ql - q0;
    hi[i] = qh - q0;
  }
  const PowerFlowSolution base = solve_power_flow(m, s, {}, opt.pf);
  auto to_q = [&](const std::vector<double>& dq) {
    QSetpoints q;
    for (std::size_t i = 0; i < n; ++i) q[m.inverters[i].id] = s.qg(m.inverters[i].id) + dq[i];
    return q;
  };
  auto dev = [&](const PowerFlowSolution& sol) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = pcc_voltage(sol, m.inverters[i]) - target[i];
      acc += e * e;
    }
    return acc;
  };
  auto f = [&](const std::vector<double>& dq) {
    try {
      return dev(solve_power_flow(m, s, to_q(dq), opt.pf, &base));
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  std::vector<std::vector<double>> starts{std::vector<double>(n, 0.0)};
  if (seed_q) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto it = seed_q->find(m.inverters[i].id);
      const double q = it == seed_q->end() ? 0.0 : it->second - s.qg(m.inverters[i].id);
      x[i] = std::clamp(q, lo[i], hi[i]);
    }
    starts.push_back(std::move(x));
  }
  for (auto& x : starts)
    for (std::size_t i = 0; i < n; ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);

  StageTwoScenario out;
  SearchResult best;
  bool have = false;
  for (const auto& x0 : starts) {
    auto r = coordinate_search(f, x0, lo, hi, opt.search);
    out.evaluations += r.evaluations;
    if (!have || r.f < best.f) {
      best = std::move(r);
      have = true;
    }
  }
  if (!std::isfinite(best.f)) throw ConvergenceError("stage II: power flow failed at every candidate");
  for (std::size_t i = 0; i < n; ++i) out.dq[m.inverters[i].id] = best.x[i];
  out.deviation = best.f;
  const auto sol = solve_power_flow(m, s, to_q(best.x), opt.pf, &base);
  out.limits_ok = check_limits(sol, m).empty();
  return out;
}

inline StageTwoResult stage2_all(const NetworkModel& m, const ScenarioSet& ss, const OptimalVoltages& vopt,
                                 const CapabilityRegime& regime, const StageTwoOptions& opt = {}) {
  StageTwoResult r;
  r.scenarios.resize(ss.points.size());
  parallel_for(ss.points.size(), [&](std::size_t s) {
    const QSetpoints* seed = s < vopt.tracking_q.size() ? &vopt.tracking_q[s] : nullptr;
    r.scenarios[s] = stage2_optimal_dq(m, ss.points[s], vopt, regime, opt, seed);
  });
  return r;
}

// ---------------------------------------------------------------------------------------------
// Stage III

/// PCC voltage of every inverter in every scenario with no reactive adjustment.
/// Result[i][s] follows model inverter order and scenario order.
inline std::map<int, std::vector<double>> stage3_base_voltages(const NetworkModel& m, const ScenarioSet& ss,
                                                               const PowerFlowOptions& pf = {}) {
  if (ss.points.empty()) throw DomainError("stage III needs at least one scenario");
  const std::size_t ns = ss.points.size();
  std::vector<std::vector<double>> v(ns);
  parallel_for(ns, [&](std::size_t s) {
    const auto sol = solve_power_flow(m, ss.points[s], {}, pf);
    for (const auto& inv : m.inverters) v[s].push_back(pcc_voltage(sol, inv));
  });
  std::map<int, std::vector<double>> out;
  for (std::size_t i = 0; i < m.inverters.size(); ++i) {
    auto& col = out[m.inverters[i].id];
    for (std::size_t s = 0; s < ns; ++s) col.push_back(v[s][i]);
  }
  return out;
}

}  // namespace vvl
