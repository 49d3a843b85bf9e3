#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vvl/network_io.hpp"
#include "vvl/plots.hpp"
#include "vvl/prbs.hpp"
#include "vvl/simulate.hpp"
#include "vvl/synth.hpp"

namespace vvl {

inline constexpr const char* kToolVersion = "1.0.0";

namespace fs = std::filesystem;

struct PolicySpec {
  std::string name;
  std::string type;  // no_control | fixed_pf | static_vvc | resilient
  double pf = 1.0;
  int sign = -1;
  Objective objective = Objective::UnbalanceMin;
  std::string schedule;  // empty: the pipeline default
};

/// Batch configuration, read from JSON. Relative paths resolve against the config file's folder.
struct PipelineConfig {
  fs::path base_dir = ".";
  fs::path network;
  fs::path timeseries;  // CSV; empty means the synthetic week
  SynthOptions synth{};
  fs::path output_dir = "out";
  std::vector<Objective> objectives{Objective::UnbalanceMin, Objective::LossMin};
  CapabilityRegime regime{};
  std::size_t scenario_stride = 7;
  std::size_t scenario_target = 35;
  bool require_feasible = false;
  double classify_tol = 0.05;
  StepOptions step{};
  bool skip_divergent = false;
  std::string schedule = "intact";  // intact | rotating_outage
  std::vector<int> outage_inverters;  // empty: every inverter in id order
  std::vector<PolicySpec> policies;
  std::vector<std::pair<std::string, std::string>> comparisons;
  std::string hash;

  fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : base_dir / p; }
  fs::path out(const std::string& file) const { return resolve(output_dir) / file; }
};

inline PolicySpec policy_from_json(const nlohmann::json& j) {
  PolicySpec p;
  p.type = j.at("type").get<std::string>();
  if (p.type == "fixed_pf") {
    p.pf = j.at("pf").get<double>();
    const auto s = j.value("sign", std::string("lag"));
    if (s != "lag" && s != "lead") throw SchemaError("policy sign must be 'lag' or 'lead'");
    p.sign = s == "lag" ? -1 : 1;
  } else if (p.type == "static_vvc" || p.type == "resilient") {
    p.objective = parse_objective(j.value("objective", std::string("unbalance")));
  } else if (p.type != "no_control") {
    throw SchemaError("unknown policy type '" + p.type + "'");
  }
  p.schedule = j.value("schedule", std::string());
  p.name = j.value("name", std::string());
  return p;
}

inline PipelineConfig parse_config(const nlohmann::json& j, const fs::path& base_dir = ".") {
  PipelineConfig c;
  c.base_dir = base_dir;
  try {
    c.network = j.at("network").get<std::string>();
    c.timeseries = j.value("timeseries", std::string());
    if (j.contains("synth")) {
      const auto& s = j.at("synth");
      c.synth.seed = s.value("seed", c.synth.seed);
      c.synth.days = s.value("days", c.synth.days);
    }
    c.output_dir = j.value("output_dir", std::string("out"));
    if (j.contains("objectives")) {
      c.objectives.clear();
      for (const auto& o : j.at("objectives")) c.objectives.push_back(parse_objective(o.get<std::string>()));
    }
    if (j.contains("capability")) c.regime = regime_from_json(j.at("capability"));
    c.scenario_stride = j.value("scenario_stride", c.scenario_stride);
    c.scenario_target = j.value("scenario_target", c.scenario_target);
    c.require_feasible = j.value("require_feasible", c.require_feasible);
    c.classify_tol = j.value("classify_tol", c.classify_tol);
    if (j.contains("step")) {
      const auto& s = j.at("step");
      c.step.iterate = s.value("iterate", c.step.iterate);
      c.step.max_rounds = s.value("max_rounds", c.step.max_rounds);
      c.step.damping = s.value("damping", c.step.damping);
    }
    c.skip_divergent = j.value("skip_divergent", c.skip_divergent);
    c.schedule = j.value("schedule", c.schedule);
    if (j.contains("outage_inverters")) c.outage_inverters = j.at("outage_inverters").get<std::vector<int>>();
    if (j.contains("policies"))
      for (const auto& p : j.at("policies")) c.policies.push_back(policy_from_json(p));
    if (j.contains("comparisons"))
      for (const auto& p : j.at("comparisons")) c.comparisons.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("config: ") + e.what());
  }
  if (c.scenario_target < 1) throw SchemaError("config: scenario_target must be >= 1");
  if (c.scenario_stride < 1) throw SchemaError("config: scenario_stride must be >= 1");
  if (c.schedule != "intact" && c.schedule != "rotating_outage") throw SchemaError("config: unknown schedule '" + c.schedule + "'");
  for (auto& p : c.policies) {
    if (p.name.empty()) {
      if (p.type == "fixed_pf") p.name = ControlPolicy::fixed_pf(p.pf, p.sign).name;
      else if (p.type == "static_vvc") p.name = std::string("vvc_") + objective_name(p.objective);
      else if (p.type == "resilient") p.name = std::string("resilient_") + objective_name(p.objective);
      else p.name = "no_control";
    }
    if (!p.schedule.empty() && p.schedule != "intact" && p.schedule != "rotating_outage")
      throw SchemaError("config: unknown schedule '" + p.schedule + "' in policy " + p.name);
  }
  c.hash = hex64(fnv1a(j.dump()));
  return c;
}

inline PipelineConfig load_config(const fs::path& path) {
  const std::string text = read_text_file(path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

// ---------------------------------------------------------------------------------------------
// Artifacts

inline nlohmann::json provenance(const PipelineConfig& c, const std::string& kind) {
  return {{"tool", "vvl"}, {"version", kToolVersion}, {"config_hash", c.hash}, {"kind", kind}};
}

inline void write_json(const fs::path& p, const nlohmann::json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw ParseError("cannot write '" + p.string() + "'");
  out << j.dump(1) << '\n';
}

inline void write_text(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw ParseError("cannot write '" + p.string() + "'");
  out << s;
}

inline nlohmann::json read_json(const fs::path& p) {
  const std::string text = read_text_file(p.string());
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(p.string() + ": " + e.what());
  }
}

inline TimeSeries load_series(const PipelineConfig& c, const NetworkModel& m) {
  if (c.timeseries.empty()) return synth_timeseries(m, c.synth);
  return read_timeseries_csv(c.resolve(c.timeseries).string(), m);
}

// ---------------------------------------------------------------------------------------------
// Commands

/// Builds per-minute scenarios from the series (every stride-th step) and reduces them.
inline fs::path cmd_reduce(const PipelineConfig& c, std::ostream& log) {
  const NetworkModel m = load_network(c.resolve(c.network).string());
  const TimeSeries ts = load_series(c, m);
  const ScenarioSet full = build_scenarios(subsample(ts, c.scenario_stride));
  const ScenarioSet red = reduce_scenarios(full, std::min(c.scenario_target, full.points.size()));
  double wsum = 0.0;
  for (const auto& p : red.points) wsum += p.weight;
  nlohmann::json j = scenario_set_to_json(red);
  j["provenance"] = provenance(c, "scenarios");
  j["summary"] = {{"series_steps", ts.steps.size()},
                {"stride", c.scenario_stride},
                {"candidates", full.points.size()},
                {"kept", red.points.size()},
                {"weight_sum", wsum},
                {"scenario_hash", scenario_set_hash(red)}};
  const fs::path out = c.out("scenarios.json");
  write_json(out, j);
  log << "reduce: " << full.points.size() << " -> " << red.points.size() << " scenarios, weight sum "
      << std::setprecision(15) << wsum << "\n  wrote " << out.string() << '\n';
  return out;
}

inline ScenarioSet load_scenarios(const PipelineConfig& c) {
  const fs::path p = c.out("scenarios.json");
  if (!fs::exists(p)) throw ParseError("scenario artifact '" + p.string() + "' not found; run 'reduce' first");
  try {
    return scenario_set_from_json(read_json(p));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(p.string() + ": " + e.what());
  }
}

inline nlohmann::json quality_json(const VVCSet& s) {
  nlohmann::json rows = nlohmann::json::array();
  int r2_ok = 0;
  bool slopes = true;
  double worst = 0.0;
  for (std::size_t k = 0; k < s.curves.size(); ++k) {
    const auto& v = s.curves[k];
    const auto& q = s.quality[k];
    r2_ok += q.r_squared_ok;
    slopes = slopes && q.slope_negative;
    worst = std::max(worst, std::isfinite(q.rel_error) ? q.rel_error : 1.0);
    rows.push_back({{"inv", v.inverter},
                    {"m", v.m},
                    {"c", v.c},
                    {"v_opt", v.v_opt},
                    {"r2", v.r_squared},
                    {"rel_error", std::isfinite(v.rel_error) ? v.rel_error : -1.0},
                    {"outliers_removed", v.outliers_removed},
                    {"pass", q.pass()}});
  }
  const double frac = s.curves.empty() ? 0.0 : static_cast<double>(r2_ok) / static_cast<double>(s.curves.size());
  return {{"contingency", s.contingency.str()},
          {"objective", objective_name(s.objective)},
          {"curves", rows},
          {"all_slopes_negative", slopes},
          {"max_rel_error", worst},
          {"r2_pass_fraction", frac},
          {"mean_intercept", s.mean_intercept()}};
}

/// Stages I-IV per configured objective; with `resilient` the full contingency bank.
inline std::vector<fs::path> cmd_extract(const PipelineConfig& c, bool resilient, bool plots, std::ostream& log) {
  const NetworkModel m = load_network(c.resolve(c.network).string());
  const ScenarioSet ss = load_scenarios(c);
  std::vector<fs::path> written;
  for (Objective obj : c.objectives) {
    const std::string on = objective_name(obj);
    BankOptions bo;
    bo.extraction.objective = obj;
    bo.extraction.regime = c.regime;
    bo.extraction.stage1.require_feasible = c.require_feasible;
    bo.classify_tol = c.classify_tol;
    VVCSet intact;
    if (resilient) {
      const VVCBank bank = build_vvc_bank(m, ss, bo);
      nlohmann::json j = bank_to_json(bank);
      j["provenance"] = provenance(c, "vvc_bank");
      j["min_row_separation"] = min_row_separation(bank);
      written.push_back(c.out("bank_" + on + ".json"));
      write_json(written.back(), j);
      for (const auto& w : bank.warnings) log << "  warning: " << w << '\n';
      intact = bank.row(ContingencyId::intact()).set;
      nlohmann::json q = nlohmann::json::array();
      for (const auto& r : bank.rows) q.push_back(quality_json(r.set));
      nlohmann::json qj{{"provenance", provenance(c, "quality")}, {"rows", q}};
      written.push_back(c.out("quality_bank_" + on + ".json"));
      write_json(written.back(), qj);
    } else {
      intact = extract_vvc_set(m, ss, bo.extraction);
      nlohmann::json j = vvc_set_to_json(intact);
      j["provenance"] = provenance(c, "vvc_set");
      written.push_back(c.out("vvc_" + on + ".json"));
      write_json(written.back(), j);
      nlohmann::json qj = quality_json(intact);
      qj["provenance"] = provenance(c, "quality");
      written.push_back(c.out("quality_" + on + ".json"));
      write_json(written.back(), qj);
    }
    log << "extract " << on << (resilient ? " (bank)" : "") << ": mean intercept " << std::setprecision(6)
        << intact.mean_intercept() << '\n';
    for (const auto& q : intact.quality)
      if (!q.pass())
        log << "  quality gate failed for inverter " << q.inverter << ": r2 " << q.r_squared << ", rel_error "
            << q.rel_error << (q.slope_negative ? "" : ", slope not negative") << '\n';
    if (plots)
      for (const auto& v : intact.curves) {
        written.push_back(c.out("plots/vvc_" + on + "_inv" + std::to_string(v.inverter) + ".svg"));
        write_text(written.back(), vvc_scatter_svg(intact, v.inverter));
      }
  }
  for (const auto& p : written) log << "  wrote " << p.string() << '\n';
  return written;
}

inline AvailabilitySchedule make_schedule(const std::string& kind, const PipelineConfig& c, const NetworkModel& m,
                                          std::size_t steps, double step_minutes) {
  if (kind == "intact") return AvailabilitySchedule::always_intact(steps);
  const auto ids = c.outage_inverters.empty() ? m.inverter_ids() : c.outage_inverters;
  const auto per_day = static_cast<std::size_t>(std::llround(1440.0 / step_minutes));
  return AvailabilitySchedule::rotating_outage(steps, ids, per_day);
}

/// Curves for a static policy: the extracted set if present, else the intact row of the bank.
inline VVCSet load_curves(const PipelineConfig& c, Objective obj) {
  const std::string on = objective_name(obj);
  const fs::path set = c.out("vvc_" + on + ".json"), bank = c.out("bank_" + on + ".json");
  if (fs::exists(set)) return vvc_set_from_json(read_json(set));
  if (fs::exists(bank)) return bank_from_json(read_json(bank)).row(ContingencyId::intact()).set;
  throw ParseError("no VVC artifact for objective '" + on + "'; run 'extract' first");
}

inline VVCBank load_bank(const PipelineConfig& c, Objective obj) {
  const fs::path bank = c.out(std::string("bank_") + objective_name(obj) + ".json");
  if (!fs::exists(bank)) throw ParseError("bank artifact '" + bank.string() + "' not found; run 'extract --resilient'");
  return bank_from_json(read_json(bank));
}

inline ControlPolicy build_policy(const PolicySpec& p, const PipelineConfig& c) {
  ControlPolicy out;
  if (p.type == "fixed_pf") out = ControlPolicy::fixed_pf(p.pf, p.sign);
  else if (p.type == "static_vvc") out = ControlPolicy::static_vvc(load_curves(c, p.objective), c.regime);
  else if (p.type == "resilient") out = ControlPolicy::resilient(load_bank(c, p.objective), c.regime, c.classify_tol);
  out.name = p.name;
  return out;
}

inline SimulationReport report_summary_from_json(const nlohmann::json& j) {
  SimulationReport r;
  try {
    r.policy = j.at("policy").get<std::string>();
    r.network = j.value("network", std::string());
    r.steps = j.at("steps").get<std::size_t>();
    r.step_hours = j.at("step_hours").get<double>();
    r.loss_kwh = j.at("total_loss_kwh").get<double>();
    r.avg_vuf_pct = j.at("average_vuf_pct").get<double>();
    r.voltage_violations = j.value("voltage_violations", 0);
    r.current_violations = j.value("current_violations", 0);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("report summary: ") + e.what());
  }
  return r;
}

/// Runs every configured policy over the series (independent runs in parallel) and writes one
/// CSV trace and JSON summary per policy plus the comparison table.
inline std::vector<SimulationReport> cmd_simulate(const PipelineConfig& c, bool plots, std::ostream& log) {
  if (c.policies.empty()) throw SchemaError("config: no policies to simulate");
  const NetworkModel m = load_network(c.resolve(c.network).string());
  const TimeSeries ts = load_series(c, m);
  std::vector<ControlPolicy> pols;
  for (const auto& p : c.policies) pols.push_back(build_policy(p, c));
  std::vector<SimulationReport> reps(pols.size());
  RunOptions ro;
  ro.step = c.step;
  ro.skip_divergent = c.skip_divergent;
  parallel_for(pols.size(), [&](std::size_t k) {
    const auto sched = make_schedule(c.policies[k].schedule.empty() ? c.schedule : c.policies[k].schedule, c, m,
                                     ts.steps.size(), ts.step_minutes);
    try {
      reps[k] = run_timeseries(m, ts, pols[k], sched, ro);
    } catch (const Error&) {
      detail::rethrow_tagged("policy " + pols[k].name);
    }
  });

  nlohmann::json table = nlohmann::json::array();
  std::ostringstream csv;
  csv << "policy,total_loss_kwh,average_vuf_pct,voltage_violations,current_violations,unknown_rows,misidentified_rows\n"
      << std::setprecision(10);
  for (std::size_t k = 0; k < reps.size(); ++k) {
    const auto& r = reps[k];
    std::ostringstream trace;
    write_report_csv(trace, r);
    write_text(c.out("report_" + r.policy + ".csv"), trace.str());
    nlohmann::json s = report_summary_json(r);
    s["schedule"] = c.policies[k].schedule.empty() ? c.schedule : c.policies[k].schedule;
    s["provenance"] = provenance(c, "simulation_report");
    write_json(c.out("report_" + r.policy + ".json"), s);
    table.push_back(report_summary_json(r));
    csv << r.policy << ',' << r.loss_kwh << ',' << r.avg_vuf_pct << ',' << r.voltage_violations << ','
        << r.current_violations << ',' << r.unknown_rows << ',' << r.misidentified_rows << '\n';
    if (plots) write_text(c.out("plots/voltages_" + r.policy + ".svg"), voltage_trace_svg(r));
  }
  nlohmann::json deltas = nlohmann::json::array();
  for (const auto& [a, b] : c.comparisons) {
    const SimulationReport *ra = nullptr, *rb = nullptr;
    for (const auto& r : reps) {
      if (r.policy == a) ra = &r;
      if (r.policy == b) rb = &r;
    }
    if (!ra || !rb) throw SchemaError("comparison names an unknown policy: " + a + " / " + b);
    deltas.push_back(delta_json(compare_reports(*ra, *rb)));
  }
  write_json(c.out("summary.json"),
             {{"provenance", provenance(c, "simulation_summary")}, {"policies", table}, {"comparisons", deltas}});
  write_text(c.out("summary.csv"), csv.str());

  log << std::left << std::setw(28) << "policy" << std::right << std::setw(14) << "loss [kWh]" << std::setw(12)
      << "VUF [%]" << '\n';
  for (const auto& r : reps)
    log << std::left << std::setw(28) << r.policy << std::right << std::fixed << std::setprecision(3) << std::setw(14)
        << r.loss_kwh << std::setprecision(4) << std::setw(12) << r.avg_vuf_pct << '\n';
  log.unsetf(std::ios::fixed);
  for (const auto& d : deltas)
    log << "  " << d["a"].get<std::string>() << " -> " << d["b"].get<std::string>() << ": loss "
        << d["loss_change_pct"].get<double>() << "%, VUF " << d["vuf_change_pct"].get<double>() << "%\n";
  log << "  wrote " << c.out("summary.json").string() << '\n';
  return reps;
}

/// Fingerprint JSON is either {"fingerprint": {...}} or the id -> [re, im] map itself.
inline nlohmann::json cmd_identify(const fs::path& bank_path, const fs::path& measured_path, double tol) {
  const VVCBank bank = bank_from_json(read_json(bank_path));
  const nlohmann::json mj = read_json(measured_path);
  const Fingerprint meas = fingerprint_from_json(mj.contains("fingerprint") ? mj.at("fingerprint") : mj);
  const auto cls = classify_configuration(meas, bank, tol);
  return {{"row", cls.known() ? cls.row->str() : std::string("unknown")},
          {"nearest", cls.nearest.str()},
          {"distance", cls.distance},
          {"tolerance", tol}};
}

inline nlohmann::json cmd_compare(const fs::path& a, const fs::path& b) {
  return delta_json(compare_reports(report_summary_from_json(read_json(a)), report_summary_from_json(read_json(b))));
}

/// Exit-code contract: 0 success, 1 numerical failure, 2 usage/config/IO.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericalError*>(&e)) return 1;
  return 2;
}

}  // namespace vvl
