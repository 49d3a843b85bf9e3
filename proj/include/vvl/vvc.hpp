#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vvl/capability.hpp"
#include "vvl/opf.hpp"

namespace vvl {

/// Volt-Var curve in deviation form: dQ = m (V - c).
struct VVC {
  int inverter = 0;
  double m = 0.0;  // kVAr/pu
  double c = 0.0;  // pu
  bool c_defined = false;
  double r_squared = 0.0;
  double rel_error = 0.0;  // |c - V_opt| / V_opt
  double v_opt = 0.0;
  int n_points = 0;
  int outliers_removed = 0;
};

struct FitOptions {
  double r2_floor = 0.70;
  double studentized_cutoff = 2.5;
};

struct QualityThresholds {
  double max_rel_error = 0.01;
  double min_r_squared = 0.70;
};

struct QualityReport {
  int inverter = 0;
  double rel_error = 0.0;
  double r_squared = 0.0;
  bool slope_negative = false;
  bool rel_error_ok = false;
  bool r_squared_ok = false;
  bool pass() const { return slope_negative && rel_error_ok && r_squared_ok; }
};

struct LinearFit {
  double a = 0.0, b = 0.0;  // y = a x + b
  double r_squared = 0.0;
  double ss_res = 0.0;
  std::vector<double> leverage;
  std::vector<double> residual;
};

/// Ordinary least squares y = a x + b. R^2 is reported as 0 when y has no variance.
inline LinearFit ols(const std::vector<std::pair<double, double>>& pts) {
  const double n = static_cast<double>(pts.size());
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : pts) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [x, y] : pts) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  if (!(sxx > 0.0)) throw DomainError("VVC fit is degenerate: all voltages identical");
  LinearFit f;
  f.a = sxy / sxx;
  f.b = my - f.a * mx;
  for (const auto& [x, y] : pts) {
    const double r = y - (f.a * x + f.b);
    f.residual.push_back(r);
    f.ss_res += r * r;
    f.leverage.push_back(1.0 / n + (x - mx) * (x - mx) / sxx);
  }
  f.r_squared = syy > 0.0 ? std::max(0.0, 1.0 - f.ss_res / syy) : 0.0;
  return f;
}

inline double residual_variance(const LinearFit& f, std::size_t n) {
  return n > 2 ? f.ss_res / static_cast<double>(n - 2) : 0.0;
}

/// Fits dQ against base voltage. When R^2 falls below the floor, points whose internally
/// studentized residual exceeds the cutoff are dropped and the line refitted once; the refit is
/// kept only if it does not raise the residual variance.
inline VVC stage4_fit_vvc(const std::vector<std::pair<double, double>>& points, double v_opt, const FitOptions& opt = {},
                          int inverter = 0) {
  if (points.size() < 3) throw DomainError("VVC fit needs at least 3 points");
  LinearFit fit = ols(points);
  VVC v;
  v.inverter = inverter;
  v.n_points = static_cast<int>(points.size());

  if (fit.r_squared < opt.r2_floor && points.size() > 3) {
    const double s2 = residual_variance(fit, points.size());
    std::vector<std::pair<double, double>> kept;
    for (std::size_t k = 0; k < points.size(); ++k) {
      const double denom = std::sqrt(s2 * std::max(0.0, 1.0 - fit.leverage[k]));
      const bool outlier = denom > 0.0 && std::abs(fit.residual[k]) / denom > opt.studentized_cutoff;
      if (!outlier) kept.push_back(points[k]);
    }
    const std::size_t removed = points.size() - kept.size();
    if (removed > 0 && kept.size() >= 3) {
      try {
        LinearFit refit = ols(kept);
        if (residual_variance(refit, kept.size()) <= s2) {
          fit = std::move(refit);
          v.n_points = static_cast<int>(kept.size());
          v.outliers_removed = static_cast<int>(removed);
        }
      } catch (const DomainError&) {
      }
    }
  }

  v.m = fit.a;
  v.r_squared = fit.r_squared;
  v.v_opt = v_opt;
  v.c_defined = std::abs(fit.a) >= 1e-9;
  v.c = v.c_defined ? -fit.b / fit.a : 0.0;
  v.rel_error = v.c_defined && v_opt != 0.0 ? std::abs(v.c - v_opt) / v_opt : std::numeric_limits<double>::infinity();
  return v;
}

/// Reactive adjustment requested by the curve at a measured PCC voltage [kVAr].
inline double evaluate_vvc(const VVC& v, double v_meas) {
  if (!v.c_defined) throw DomainError("VVC of inverter " + std::to_string(v.inverter) + " has no intercept");
  return v.m * (v_meas - v.c);
}

inline QualityReport vvc_quality(const VVC& v, double v_opt, const QualityThresholds& t = {}) {
  QualityReport q;
  q.inverter = v.inverter;
  q.rel_error = v.c_defined && v_opt != 0.0 ? std::abs(v.c - v_opt) / v_opt : std::numeric_limits<double>::infinity();
  q.r_squared = v.r_squared;
  q.slope_negative = v.m < 0.0;
  q.rel_error_ok = q.rel_error <= t.max_rel_error;
  q.r_squared_ok = v.r_squared >= t.min_r_squared;
  return q;
}

// ---------------------------------------------------------------------------------------------
// Extraction pipeline (Stages I-IV) for one network configuration

struct ExtractionOptions {
  Objective objective = Objective::UnbalanceMin;
  CapabilityRegime regime{};
  StageOneOptions stage1{};
  StageTwoOptions stage2{};
  FitOptions fit{};
  QualityThresholds quality{};
};

struct VVCSet {
  ContingencyId contingency{};
  Objective objective = Objective::UnbalanceMin;
  CapabilityRegime regime{};
  std::vector<VVC> curves;
  std::vector<QualityReport> quality;
  OptimalVoltages vopt;
  std::map<int, std::vector<std::pair<double, double>>> points;  // (V_base, dQ) per inverter

  const VVC* find(int inverter) const {
    for (const auto& c : curves)
      if (c.inverter == inverter) return &c;
    return nullptr;
  }
  double mean_intercept() const {
    double acc = 0.0;
    int n = 0;
    for (const auto& c : curves)
      if (c.c_defined) {
        acc += c.c;
        ++n;
      }
    return n ? acc / n : 0.0;
  }
};

/// Runs Stages I-IV on `m` (already carrying any contingency) and fits one curve per inverter.
inline VVCSet extract_vvc_set(const NetworkModel& m, const ScenarioSet& ss, const ExtractionOptions& opt,
                              ContingencyId cid = {}) {
  VVCSet set;
  set.contingency = cid;
  set.objective = opt.objective;
  set.regime = opt.regime;
  set.vopt = stage1_optimal_voltages(m, ss, opt.objective, opt.stage1);
  const auto dq = stage2_all(m, ss, set.vopt, opt.regime, opt.stage2);
  const auto vbase = stage3_base_voltages(m, ss, opt.stage2.pf);
  for (const auto& inv : m.inverters) {
    auto& pts = set.points[inv.id];
    const auto& vb = vbase.at(inv.id);
    for (std::size_t s = 0; s < ss.points.size(); ++s) pts.emplace_back(vb[s], dq.scenarios[s].dq.at(inv.id));
    const double vo = set.vopt.v_opt.at(inv.id);
    set.curves.push_back(stage4_fit_vvc(pts, vo, opt.fit, inv.id));
    set.quality.push_back(vvc_quality(set.curves.back(), vo, opt.quality));
  }
  return set;
}

// ---------------------------------------------------------------------------------------------
// JSON

inline nlohmann::json vvc_to_json(const VVC& v) {
  return {{"inv", v.inverter},       {"m", v.m},
          {"c", v.c},                {"c_defined", v.c_defined},
          {"r2", v.r_squared},       {"rel_error", v.c_defined ? v.rel_error : -1.0},
          {"v_opt", v.v_opt},        {"n_points", v.n_points},
          {"outliers_removed", v.outliers_removed}};
}

inline VVC vvc_from_json(const nlohmann::json& j) {
  try {
    VVC v;
    v.inverter = j.at("inv").get<int>();
    v.m = j.at("m").get<double>();
    v.c = j.at("c").get<double>();
    v.c_defined = j.value("c_defined", true);
    v.r_squared = j.value("r2", 0.0);
    v.rel_error = j.value("rel_error", 0.0);
    v.v_opt = j.value("v_opt", 0.0);
    v.n_points = j.value("n_points", 0);
    v.outliers_removed = j.value("outliers_removed", 0);
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("VVC: ") + e.what());
  }
}

inline nlohmann::json regime_to_json(const CapabilityRegime& r) {
  return {{"mode", mode_name(r.mode)}, {"pf", r.pf}, {"pf_sign", r.pf_sign}};
}

inline CapabilityRegime regime_from_json(const nlohmann::json& j) {
  CapabilityRegime r;
  r.mode = parse_mode(j.value("mode", std::string("capacity_only")));
  r.pf = j.value("pf", 1.0);
  r.pf_sign = j.value("pf_sign", -1);
  return r;
}

inline nlohmann::json vvc_set_to_json(const VVCSet& s) {
  nlohmann::json j;
  j["contingency"] = s.contingency.str();
  j["objective"] = objective_name(s.objective);
  j["capability"] = regime_to_json(s.regime);
  j["objective_value"] = s.vopt.value;
  j["feasible"] = s.vopt.feasible;
  j["curves"] = nlohmann::json::array();
  for (const auto& c : s.curves) j["curves"].push_back(vvc_to_json(c));
  j["quality"] = nlohmann::json::array();
  for (const auto& q : s.quality)
    j["quality"].push_back({{"inv", q.inverter},
                            {"rel_error", std::isfinite(q.rel_error) ? q.rel_error : -1.0},
                            {"r2", q.r_squared},
                            {"slope_negative", q.slope_negative},
                            {"rel_error_ok", q.rel_error_ok},
                            {"r2_ok", q.r_squared_ok},
                            {"pass", q.pass()}});
  nlohmann::json pts = nlohmann::json::object();
  for (const auto& [id, p] : s.points) {
    auto& arr = pts[std::to_string(id)] = nlohmann::json::array();
    for (const auto& [v, q] : p) arr.push_back({v, q});
  }
  j["points"] = pts;
  nlohmann::json vo = nlohmann::json::object();
  for (const auto& [id, v] : s.vopt.v_opt) vo[std::to_string(id)] = v;
  j["v_opt"] = vo;
  return j;
}

inline VVCSet vvc_set_from_json(const nlohmann::json& j) {
  VVCSet s;
  try {
    s.contingency = ContingencyId::parse(j.value("contingency", std::string("intact")));
    s.objective = parse_objective(j.value("objective", std::string("unbalance")));
    if (j.contains("capability")) s.regime = regime_from_json(j.at("capability"));
    s.vopt.objective = s.objective;
    s.vopt.value = j.value("objective_value", 0.0);
    s.vopt.feasible = j.value("feasible", true);
    for (const auto& c : j.at("curves")) s.curves.push_back(vvc_from_json(c));
    if (j.contains("v_opt"))
      for (const auto& [k, v] : j.at("v_opt").items()) s.vopt.v_opt[std::stoi(k)] = v.get<double>();
    if (j.contains("points"))
      for (const auto& [k, arr] : j.at("points").items())
        for (const auto& p : arr) s.points[std::stoi(k)].emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("VVC set: ") + e.what());
  }
  QualityThresholds t;
  for (const auto& c : s.curves) s.quality.push_back(vvc_quality(c, c.v_opt, t));
  return s;
}

}  // namespace vvl
