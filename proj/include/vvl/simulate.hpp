#pragma once

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vvl/resilience.hpp"

namespace vvl {

enum class PolicyKind { NoControl, FixedPF, StaticVVC, ResilientVVC };

/// How inverters set their reactive power during the online week.
struct ControlPolicy {
  PolicyKind kind = PolicyKind::NoControl;
  std::string name = "no_control";
  CapabilityRegime regime{};  // FixedPF carries its power factor here
  std::shared_ptr<const VVCSet> curves;
  std::shared_ptr<const VVCBank> bank;
  double classify_tol = 0.05;

  static ControlPolicy none() { return {}; }
  static ControlPolicy fixed_pf(double pf, int sign) {
    if (!(pf > 0.0 && pf <= 1.0)) throw DomainError("fixed power factor must be in (0, 1]");
    ControlPolicy p;
    p.kind = PolicyKind::FixedPF;
    p.regime = {CapabilityMode::FixedPF, pf, sign};
    char buf[48];
    std::snprintf(buf, sizeof buf, "fixed_pf_%.2f_%s", pf, pf >= 1.0 ? "unity" : sign < 0 ? "lag" : "lead");
    p.name = buf;
    return p;
  }
  static ControlPolicy static_vvc(VVCSet set, CapabilityRegime regime = {}) {
    ControlPolicy p;
    p.kind = PolicyKind::StaticVVC;
    p.regime = regime;
    p.name = std::string("vvc_") + objective_name(set.objective);
    p.curves = std::make_shared<const VVCSet>(std::move(set));
    return p;
  }
  static ControlPolicy resilient(VVCBank bank, CapabilityRegime regime = {}, double tol = 0.05) {
    ControlPolicy p;
    p.kind = PolicyKind::ResilientVVC;
    p.regime = regime;
    p.classify_tol = tol;
    p.name = std::string("resilient_") + objective_name(bank.objective);
    p.bank = std::make_shared<const VVCBank>(std::move(bank));
    return p;
  }
};

/// Which configuration is in force over [first, last) steps.
struct AvailabilityInterval {
  std::size_t first = 0, last = 0;
  ContingencyId contingency{};
};

struct AvailabilitySchedule {
  std::vector<AvailabilityInterval> intervals;

  static AvailabilitySchedule always_intact(std::size_t steps) { return {{{0, steps, ContingencyId::intact()}}}; }

  /// Day d (0-based) loses inverter ids[d mod n]; `steps_per_day` steps per day.
  static AvailabilitySchedule rotating_outage(std::size_t steps, const std::vector<int>& ids,
                                              std::size_t steps_per_day = 1440) {
    if (ids.empty() || steps_per_day == 0) throw DomainError("rotating outage needs inverters and a positive day length");
    AvailabilitySchedule s;
    for (std::size_t d = 0; d * steps_per_day < steps; ++d)
      s.intervals.push_back({d * steps_per_day, std::min(steps, (d + 1) * steps_per_day),
                             ContingencyId::inverter_out(ids[d % ids.size()])});
    return s;
  }

  std::size_t horizon() const { return intervals.empty() ? 0 : intervals.back().last; }

  void validate(std::size_t steps) const {
    std::size_t at = 0;
    for (const auto& iv : intervals) {
      if (iv.first != at || iv.last <= iv.first) throw DomainError("availability intervals must partition the horizon");
      at = iv.last;
    }
    if (at != steps) throw DomainError("availability schedule covers " + std::to_string(at) + " steps, series has " +
                                       std::to_string(steps));
  }

  const ContingencyId& at(std::size_t t) const {
    for (const auto& iv : intervals)
      if (t >= iv.first && t < iv.last) return iv.contingency;
    throw DomainError("step " + std::to_string(t) + " outside the availability schedule");
  }
};

struct StepOptions {
  bool iterate = false;  // repeat measure/act within the step
  int max_rounds = 10;
  double damping = 0.5;
  double settle_tol_kvar = 1e-6;
  PowerFlowOptions pf{};
};

struct StepResult {
  PowerFlowSolution sol;
  QSetpoints q;                   // final reactive power per available inverter [kVAr]
  std::map<int, double> v_meas;   // PCC voltage seen before acting [pu]
  ContingencyId row{};            // configuration whose curves were used
  bool unknown = false;           // resilient policy could not match a row
  double distance = 0.0;          // classifier distance of the chosen row
  int rounds = 1;
};

namespace detail {

inline const VVCSet* curves_for(const ControlPolicy& p, const NetworkModel& m, const PowerFlowSolution& sol,
                                const ScenarioPoint& s, const QSetpoints& q, StepResult& out) {
  if (p.kind == PolicyKind::StaticVVC) {
    if (!p.curves) throw DomainError("static VVC policy without curves");
    return p.curves.get();
  }
  if (!p.bank) throw DomainError("resilient policy without a bank");
  const Fingerprint meas = fingerprints(m, s, q, {}, &sol);
  const auto cls = classify_configuration(meas, *p.bank, p.classify_tol);
  out.distance = cls.distance;
  out.unknown = !cls.known();
  out.row = cls.known() ? *cls.row : ContingencyId::intact();
  return &p.bank->row(out.row).set;
}

}  // namespace detail

/// One control interval: measure the PCC voltages under the previous reactive powers, let each
/// available inverter apply its rule (Q = Q_base + m (V - c) for curves), clamp to its limits and
/// re-solve. With `iterate`, measure/act repeats inside the step with damped updates.
inline StepResult step(const NetworkModel& m, const ScenarioPoint& s, const ControlPolicy& policy,
                       const QSetpoints& q_prev, const StepOptions& opt = {}) {
  StepResult out;
  QSetpoints q;
  for (const auto& inv : m.inverters) {
    auto it = q_prev.find(inv.id);
    q[inv.id] = it == q_prev.end() ? 0.0 : it->second;
  }
  PowerFlowSolution sol = solve_power_flow(m, s, q, opt.pf);
  for (const auto& inv : m.inverters) out.v_meas[inv.id] = pcc_voltage(sol, inv);
  if (policy.kind == PolicyKind::NoControl) {
    out.sol = std::move(sol);
    out.q = std::move(q);
    return out;
  }

  const int rounds = opt.iterate ? std::max(1, opt.max_rounds) : 1;
  for (int r = 0; r < rounds; ++r) {
    const VVCSet* set = nullptr;
    if (policy.kind == PolicyKind::StaticVVC || policy.kind == PolicyKind::ResilientVVC)
      set = detail::curves_for(policy, m, sol, s, q, out);
    QSetpoints next;
    double change = 0.0;
    for (const auto& inv : m.inverters) {
      const double p = s.pg_kw.count(inv.id) ? s.pg_kw.at(inv.id) : inv.p_kw;
      double req = q[inv.id];
      if (set) {
        const VVC* c = set->find(inv.id);
        if (c && c->c_defined) req = s.qg(inv.id) + evaluate_vvc(*c, pcc_voltage(sol, inv));
      }
      double qf = clamp_q(policy.regime.apply(inv.caps), p, req);
      if (r > 0) qf = clamp_q(policy.regime.apply(inv.caps), p, q[inv.id] + opt.damping * (qf - q[inv.id]));
      change = std::max(change, std::abs(qf - q[inv.id]));
      next[inv.id] = qf;
    }
    q = std::move(next);
    sol = solve_power_flow(m, s, q, opt.pf);
    out.rounds = r + 1;
    if (change <= opt.settle_tol_kvar) break;
  }
  out.sol = std::move(sol);
  out.q = std::move(q);
  return out;
}

struct RunOptions {
  StepOptions step{};
  bool keep_trace = true;
  bool skip_divergent = false;
};

struct SimulationReport {
  std::string policy;
  std::string network;
  std::size_t steps = 0;
  double step_hours = 1.0 / 60.0;
  double loss_kwh = 0.0;
  double avg_vuf_pct = 0.0;
  int voltage_violations = 0;  // (step, bus, phase) samples outside limits
  int current_violations = 0;  // (step, line, conductor) samples above ampacity
  double max_balance_residual_kw = 0.0;
  int unknown_rows = 0;        // resilient policy fell back to the intact row
  int misidentified_rows = 0;  // resilient policy picked a row other than the one in force
  int skipped_steps = 0;
  std::vector<int> inverter_ids;
  std::vector<std::string> bus_ids;
  // trace, one entry per step
  std::vector<std::vector<double>> v_pu;  // [bus * 3 + phase]
  std::vector<std::vector<double>> p_kw;  // per inverter_ids entry, NaN while failed
  std::vector<std::vector<double>> q_kvar;
  std::vector<double> loss_kw;
  std::vector<double> vuf_pct;
  std::vector<std::string> row;
};

/// Sequential closed-loop run over the series; the configuration for each step comes from the
/// schedule and reactive powers carry over between steps.
inline SimulationReport run_timeseries(const NetworkModel& m, const TimeSeries& ts, const ControlPolicy& policy,
                                       const AvailabilitySchedule& sched, const RunOptions& opt = {}) {
  sched.validate(ts.steps.size());
  SimulationReport rep;
  rep.policy = policy.name;
  rep.network = m.name;
  rep.step_hours = ts.step_minutes / 60.0;
  rep.inverter_ids = m.inverter_ids();
  for (const auto& b : m.buses) rep.bus_ids.push_back(b.id);

  std::map<ContingencyId, NetworkModel> models;
  QSetpoints q_prev;
  double vuf_acc = 0.0;
  for (std::size_t t = 0; t < ts.steps.size(); ++t) {
    const ContingencyId& cid = sched.at(t);
    auto it = models.find(cid);
    if (it == models.end()) it = models.emplace(cid, apply_contingency(m, cid)).first;
    const NetworkModel& mc = it->second;

    StepResult r;
    try {
      r = step(mc, ts.steps[t], policy, q_prev, opt.step);
    } catch (const NumericalError& e) {
      if (!opt.skip_divergent) throw NumericalError("step " + std::to_string(t) + ": " + e.what());
      ++rep.skipped_steps;
      continue;
    }
    q_prev = r.q;

    const double vuf_t = mean_vuf(r.sol, mc);
    rep.loss_kwh += r.sol.p_loss_kw * rep.step_hours;
    vuf_acc += vuf_t;
    ++rep.steps;
    rep.max_balance_residual_kw = std::max(rep.max_balance_residual_kw, std::abs(r.sol.balance_residual_kw()));
    for (const auto& v : check_limits(r.sol, mc)) {
      if (v.kind == Violation::Kind::Voltage) ++rep.voltage_violations;
      else ++rep.current_violations;
    }
    if (policy.kind == PolicyKind::ResilientVVC) {
      if (r.unknown) ++rep.unknown_rows;
      else if (!(r.row == cid)) ++rep.misidentified_rows;
    }
    if (opt.keep_trace) {
      std::vector<double> v(3 * mc.buses.size(), std::numeric_limits<double>::quiet_NaN());
      for (std::size_t b = 0; b < mc.buses.size(); ++b)
        for (Phase p : kPhases)
          if (mc.buses[b].has(p)) v[3 * b + static_cast<std::size_t>(idx(p))] = r.sol.vmag(b, p);
      rep.v_pu.push_back(std::move(v));
      std::vector<double> pk, qk;
      for (int id : rep.inverter_ids) {
        const bool up = r.q.count(id) > 0;
        const auto& sp = ts.steps[t];
        pk.push_back(up ? (sp.pg_kw.count(id) ? sp.pg_kw.at(id) : 0.0) : std::numeric_limits<double>::quiet_NaN());
        qk.push_back(up ? r.q.at(id) : std::numeric_limits<double>::quiet_NaN());
      }
      rep.p_kw.push_back(std::move(pk));
      rep.q_kvar.push_back(std::move(qk));
      rep.loss_kw.push_back(r.sol.p_loss_kw);
      rep.vuf_pct.push_back(vuf_t);
      rep.row.push_back(policy.kind == PolicyKind::ResilientVVC ? (r.unknown ? "unknown" : r.row.str()) : cid.str());
    }
  }
  rep.avg_vuf_pct = rep.steps ? vuf_acc / static_cast<double>(rep.steps) : 0.0;
  return rep;
}

/// Differences b - a. The *_improvement fields flip the sign so that positive means b is better.
struct DeltaReport {
  std::string a, b;
  double loss_a_kwh = 0.0, loss_b_kwh = 0.0;
  double vuf_a_pct = 0.0, vuf_b_pct = 0.0;
  double loss_change_kwh = 0.0, loss_change_pct = 0.0;
  double vuf_change = 0.0, vuf_change_pct = 0.0;
  double loss_improvement_pct = 0.0, vuf_improvement_pct = 0.0;
};

inline DeltaReport compare_reports(const SimulationReport& a, const SimulationReport& b) {
  if (a.steps != b.steps || a.step_hours != b.step_hours) throw DomainError("reports cover different horizons");
  auto pct = [](double from, double to) { return from != 0.0 ? 100.0 * (to - from) / from : 0.0; };
  DeltaReport d;
  d.a = a.policy;
  d.b = b.policy;
  d.loss_a_kwh = a.loss_kwh;
  d.loss_b_kwh = b.loss_kwh;
  d.vuf_a_pct = a.avg_vuf_pct;
  d.vuf_b_pct = b.avg_vuf_pct;
  d.loss_change_kwh = b.loss_kwh - a.loss_kwh;
  d.loss_change_pct = pct(a.loss_kwh, b.loss_kwh);
  d.vuf_change = b.avg_vuf_pct - a.avg_vuf_pct;
  d.vuf_change_pct = pct(a.avg_vuf_pct, b.avg_vuf_pct);
  d.loss_improvement_pct = -d.loss_change_pct;
  d.vuf_improvement_pct = -d.vuf_change_pct;
  return d;
}

// ---------------------------------------------------------------------------------------------
// Output

inline nlohmann::json report_summary_json(const SimulationReport& r) {
  return {{"policy", r.policy},
          {"network", r.network},
          {"steps", r.steps},
          {"step_hours", r.step_hours},
          {"total_loss_kwh", r.loss_kwh},
          {"average_vuf_pct", r.avg_vuf_pct},
          {"voltage_violations", r.voltage_violations},
          {"current_violations", r.current_violations},
          {"max_balance_residual_kw", r.max_balance_residual_kw},
          {"unknown_rows", r.unknown_rows},
          {"misidentified_rows", r.misidentified_rows},
          {"skipped_steps", r.skipped_steps}};
}

inline nlohmann::json delta_json(const DeltaReport& d) {
  return {{"a", d.a},
          {"b", d.b},
          {"loss_a_kwh", d.loss_a_kwh},
          {"loss_b_kwh", d.loss_b_kwh},
          {"vuf_a_pct", d.vuf_a_pct},
          {"vuf_b_pct", d.vuf_b_pct},
          {"loss_change_kwh", d.loss_change_kwh},
          {"loss_change_pct", d.loss_change_pct},
          {"vuf_change", d.vuf_change},
          {"vuf_change_pct", d.vuf_change_pct},
          {"loss_improvement_pct", d.loss_improvement_pct},
          {"vuf_improvement_pct", d.vuf_improvement_pct}};
}

/// Per-step CSV: loss, VUF and row, then every bus-phase voltage and every inverter's P and Q.
inline void write_report_csv(std::ostream& os, const SimulationReport& r) {
  os << "step,loss_kw,vuf_pct,row";
  for (const auto& b : r.bus_ids)
    for (char p : {'a', 'b', 'c'}) os << ",v." << b << '.' << p;
  for (int id : r.inverter_ids) os << ",p.inv" << id << ",q.inv" << id;
  os << '\n' << std::setprecision(10);
  for (std::size_t t = 0; t < r.loss_kw.size(); ++t) {
    os << t << ',' << r.loss_kw[t] << ',' << r.vuf_pct[t] << ',' << r.row[t];
    for (double v : r.v_pu[t]) {
      os << ',';
      if (std::isfinite(v)) os << v;
    }
    for (std::size_t k = 0; k < r.inverter_ids.size(); ++k) {
      os << ',';
      if (std::isfinite(r.p_kw[t][k])) os << r.p_kw[t][k];
      os << ',';
      if (std::isfinite(r.q_kvar[t][k])) os << r.q_kvar[t][k];
    }
    os << '\n';
  }
}

}  // namespace vvl
