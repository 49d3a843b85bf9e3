#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "vvl/network.hpp"
#include "vvl/powerflow.hpp"

namespace vvl {

/// Minute-resolution operating points. `steps[t].loads` follows `load_keys` (bus.phase), which
/// matches the order of NetworkModel::loads when produced by read_timeseries_csv.
struct TimeSeries {
  std::vector<std::string> load_keys;
  std::vector<int> inverter_ids;
  std::vector<ScenarioPoint> steps;
  double step_minutes = 1.0;

  std::size_t size() const { return steps.size(); }
};

struct ReductionStep {
  std::size_t deleted = 0;   // original index
  std::size_t receiver = 0;  // original index of the survivor that took the weight
  double cost = 0.0;         // weight * distance to nearest survivor
  double moved_weight = 0.0;
};

struct ScenarioSet {
  std::vector<std::string> load_keys;
  std::vector<int> inverter_ids;
  std::vector<ScenarioPoint> points;
  std::vector<double> scale;         // per-feature divisor used by scenario_distance
  std::vector<std::size_t> origin;   // original time-step index of each retained point
  std::vector<ReductionStep> trace;
  std::string source;

  std::size_t size() const { return points.size(); }
  double total_weight() const {
    double s = 0.0;
    for (const auto& p : points) s += p.weight;
    return s;
  }
};

inline constexpr int kFeaturesPerLoad = 8;

/// Flattened scenario vector: per load (Pd0, Qd0, alphaP, betaP, gammaP, alphaQ, betaQ, gammaQ)
/// followed by Pg of each inverter in `inverter_ids` order.
inline std::vector<double> scenario_features(const ScenarioPoint& s, const std::vector<int>& inverter_ids) {
  std::vector<double> f;
  f.reserve(s.loads.size() * kFeaturesPerLoad + inverter_ids.size());
  for (const auto& z : s.loads) {
    f.insert(f.end(), {z.p_kw, z.q_kvar, z.p_coeffs.z, z.p_coeffs.i, z.p_coeffs.p, z.q_coeffs.z, z.q_coeffs.i,
                       z.q_coeffs.p});
  }
  for (int id : inverter_ids) {
    auto it = s.pg_kw.find(id);
    if (it == s.pg_kw.end()) throw DomainError("scenario lacks Pg for inverter " + std::to_string(id));
    f.push_back(it->second);
  }
  return f;
}

/// Sample standard deviation per feature; zero-variance features get scale 1.
inline std::vector<double> feature_scale(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  const std::size_t d = rows.front().size();
  std::vector<double> mean(d, 0.0), var(d, 0.0), out(d, 1.0);
  for (const auto& r : rows)
    for (std::size_t k = 0; k < d; ++k) mean[k] += r[k];
  for (auto& m : mean) m /= static_cast<double>(rows.size());
  for (const auto& r : rows)
    for (std::size_t k = 0; k < d; ++k) var[k] += (r[k] - mean[k]) * (r[k] - mean[k]);
  if (rows.size() < 2) return out;
  for (std::size_t k = 0; k < d; ++k) {
    const double sd = std::sqrt(var[k] / static_cast<double>(rows.size() - 1));
    out[k] = sd > 1e-12 ? sd : 1.0;
  }
  return out;
}

inline double feature_distance(std::span<const double> a, std::span<const double> b, std::span<const double> scale) {
  if (a.size() != b.size() || (!scale.empty() && scale.size() != a.size()))
    throw DomainError("scenario_distance: dimension mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = (a[k] - b[k]) / (scale.empty() ? 1.0 : scale[k]);
    s += d * d;
  }
  return std::sqrt(s);
}

/// Euclidean distance between two scenarios over the normalized feature vector.
inline double scenario_distance(const ScenarioPoint& a, const ScenarioPoint& b, const std::vector<int>& inverter_ids,
                                std::span<const double> scale) {
  if (a.loads.size() != b.loads.size()) throw DomainError("scenario_distance: dimension mismatch");
  const auto fa = scenario_features(a, inverter_ids);
  const auto fb = scenario_features(b, inverter_ids);
  return feature_distance(fa, fb, scale);
}

/// One equally weighted scenario per time step.
inline ScenarioSet build_scenarios(const TimeSeries& ts) {
  if (ts.steps.empty()) throw DomainError("build_scenarios: empty time series");
  ScenarioSet ss;
  ss.load_keys = ts.load_keys;
  ss.inverter_ids = ts.inverter_ids;
  const double w = 1.0 / static_cast<double>(ts.steps.size());
  std::vector<std::vector<double>> rows;
  rows.reserve(ts.steps.size());
  for (std::size_t t = 0; t < ts.steps.size(); ++t) {
    const auto& st = ts.steps[t];
    if (st.loads.size() != ts.load_keys.size())
      throw DomainError("time step " + std::to_string(t) + " has " + std::to_string(st.loads.size()) +
                        " loads, expected " + std::to_string(ts.load_keys.size()));
    for (int id : ts.inverter_ids)
      if (!st.pg_kw.count(id))
        throw DomainError("time step " + std::to_string(t) + " lacks Pg for inverter " + std::to_string(id));
    ScenarioPoint p = st;
    p.weight = w;
    ss.points.push_back(std::move(p));
    ss.origin.push_back(t);
    rows.push_back(scenario_features(st, ts.inverter_ids));
  }
  ss.scale = feature_scale(rows);
  ss.source = "time series, " + std::to_string(ts.steps.size()) + " steps";
  return ss;
}

/// Greedy backward reduction: repeatedly deletes the scenario with the smallest
/// weight * distance-to-nearest-survivor (ties to the lowest index) and hands its weight to that
/// nearest survivor, until `target` scenarios remain.
inline ScenarioSet reduce_scenarios(const ScenarioSet& ss, std::size_t target) {
  const std::size_t n = ss.points.size();
  if (target < 1 || target > n)
    throw DomainError("reduce_scenarios: target " + std::to_string(target) + " outside [1, " + std::to_string(n) + "]");
  if (target == n) return ss;

  std::vector<std::vector<double>> feat;
  feat.reserve(n);
  for (const auto& p : ss.points) feat.push_back(scenario_features(p, ss.inverter_ids));

  // Full matrix for moderate sizes; larger sets recompute rows on demand.
  const bool cache = n <= 4096;
  std::vector<double> dist;
  if (cache) {
    dist.assign(n * n, 0.0);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) dist[a * n + b] = dist[b * n + a] = feature_distance(feat[a], feat[b], ss.scale);
  }
  auto d = [&](std::size_t a, std::size_t b) {
    return cache ? dist[a * n + b] : feature_distance(feat[a], feat[b], ss.scale);
  };

  std::vector<double> w(n);
  for (std::size_t s = 0; s < n; ++s) w[s] = ss.points[s].weight;
  std::vector<char> alive(n, 1);
  std::vector<std::size_t> nn(n, 0);
  std::vector<double> nd(n, std::numeric_limits<double>::infinity());
  auto refresh = [&](std::size_t s) {
    nd[s] = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      if (t == s || !alive[t]) continue;
      const double v = d(s, t);
      if (v < nd[s]) {
        nd[s] = v;
        nn[s] = t;
      }
    }
  };
  for (std::size_t s = 0; s < n; ++s) refresh(s);

  ScenarioSet out;
  out.load_keys = ss.load_keys;
  out.inverter_ids = ss.inverter_ids;
  out.scale = ss.scale;
  out.source = ss.source;
  out.trace = ss.trace;

  std::size_t remaining = n;
  while (remaining > target) {
    std::size_t best = n;
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < n; ++s) {
      if (!alive[s]) continue;
      const double c = w[s] * nd[s];
      if (c < best_cost) {
        best_cost = c;
        best = s;
      }
    }
    const std::size_t recv = nn[best];
    alive[best] = 0;
    --remaining;
    out.trace.push_back({ss.origin.empty() ? best : ss.origin[best], ss.origin.empty() ? recv : ss.origin[recv],
                         best_cost, w[best]});
    w[recv] += w[best];
    w[best] = 0.0;
    for (std::size_t s = 0; s < n; ++s)
      if (alive[s] && nn[s] == best) refresh(s);
  }

  for (std::size_t s = 0; s < n; ++s) {
    if (!alive[s]) continue;
    ScenarioPoint p = ss.points[s];
    p.weight = w[s];
    out.points.push_back(std::move(p));
    out.origin.push_back(ss.origin.empty() ? s : ss.origin[s]);
  }
  return out;
}

/// Probability-weighted mean operating point (used to linearize impedance fingerprints).
inline ScenarioPoint scenario_centroid(const ScenarioSet& ss) {
  if (ss.points.empty()) throw DomainError("scenario_centroid: empty set");
  ScenarioPoint c = ss.points.front();
  const double tw = ss.total_weight();
  for (auto& z : c.loads) z = ZipLoad{0, 0, {0, 0, 0}, {0, 0, 0}, z.v0_pu};
  for (auto& [id, p] : c.pg_kw) p = 0.0;
  for (auto& [id, q] : c.qg_kvar) q = 0.0;
  for (const auto& p : ss.points) {
    const double w = p.weight / tw;
    for (std::size_t k = 0; k < c.loads.size(); ++k) {
      auto& a = c.loads[k];
      const auto& b = p.loads[k];
      a.p_kw += w * b.p_kw;
      a.q_kvar += w * b.q_kvar;
      a.p_coeffs = {a.p_coeffs.z + w * b.p_coeffs.z, a.p_coeffs.i + w * b.p_coeffs.i, a.p_coeffs.p + w * b.p_coeffs.p};
      a.q_coeffs = {a.q_coeffs.z + w * b.q_coeffs.z, a.q_coeffs.i + w * b.q_coeffs.i, a.q_coeffs.p + w * b.q_coeffs.p};
    }
    for (auto& [id, v] : c.pg_kw) v += w * p.pg_kw.at(id);
    for (auto& [id, v] : c.qg_kvar) v += w * p.qg(id);
  }
  c.weight = 1.0;
  return c;
}

// ---------------------------------------------------------------------------------------------
// Time-series CSV and scenario-set JSON

inline constexpr const char* kLoadFields[kFeaturesPerLoad] = {"Pd0",    "Qd0",    "alphaP", "betaP",
                                                              "gammaP", "alphaQ", "betaQ",  "gammaQ"};

inline void write_timeseries_csv(std::ostream& os, const TimeSeries& ts) {
  os << "minute";
  for (const auto& k : ts.load_keys)
    for (const char* f : kLoadFields) os << ',' << k << '.' << f;
  for (int id : ts.inverter_ids) os << ",inv" << id << ".Pg";
  os << '\n' << std::setprecision(10);
  for (std::size_t t = 0; t < ts.steps.size(); ++t) {
    const auto& s = ts.steps[t];
    os << static_cast<double>(t) * ts.step_minutes;
    for (const auto& z : s.loads)
      os << ',' << z.p_kw << ',' << z.q_kvar << ',' << z.p_coeffs.z << ',' << z.p_coeffs.i << ',' << z.p_coeffs.p
         << ',' << z.q_coeffs.z << ',' << z.q_coeffs.i << ',' << z.q_coeffs.p;
    for (int id : ts.inverter_ids) os << ',' << s.pg_kw.at(id);
    os << '\n';
  }
}

/// Reads a time-series CSV and aligns it with the model: every model load (keyed bus.phase) must
/// have all eight load columns and every inverter an `inv<id>.Pg` column.
inline TimeSeries read_timeseries_csv(std::istream& in, const NetworkModel& m) {
  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
  };
  std::string line;
  if (!std::getline(in, line)) throw ParseError("time series: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t c = 0; c < header.size(); ++c) col[header[c]] = c;

  TimeSeries ts;
  std::vector<std::array<std::size_t, kFeaturesPerLoad>> load_cols;
  for (std::size_t k = 0; k < m.loads.size(); ++k) {
    const std::string key = m.load_key(k);
    ts.load_keys.push_back(key);
    std::array<std::size_t, kFeaturesPerLoad> cols{};
    for (int f = 0; f < kFeaturesPerLoad; ++f) {
      auto it = col.find(key + "." + kLoadFields[f]);
      if (it == col.end()) throw SchemaError("time series: missing column '" + key + "." + kLoadFields[f] + "'");
      cols[f] = it->second;
    }
    load_cols.push_back(cols);
  }
  std::vector<std::size_t> inv_cols;
  for (const auto& inv : m.inverters) {
    const std::string name = "inv" + std::to_string(inv.id) + ".Pg";
    auto it = col.find(name);
    if (it == col.end()) throw SchemaError("time series: missing column '" + name + "'");
    ts.inverter_ids.push_back(inv.id);
    inv_cols.push_back(it->second);
  }

  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size())
      throw ParseError("time series row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                       " fields, got " + std::to_string(cells.size()));
    auto num = [&](std::size_t c) {
      try {
        std::size_t used = 0;
        const double v = std::stod(cells[c], &used);
        if (used != cells[c].size()) throw std::invalid_argument("trailing");
        return v;
      } catch (const std::exception&) {
        throw ParseError("time series row " + std::to_string(row) + ": bad number in column '" + header[c] + "'");
      }
    };
    ScenarioPoint s;
    for (const auto& cols : load_cols) {
      ZipLoad z;
      z.p_kw = num(cols[0]);
      z.q_kvar = num(cols[1]);
      z.p_coeffs = normalized({num(cols[2]), num(cols[3]), num(cols[4])});
      z.q_coeffs = normalized({num(cols[5]), num(cols[6]), num(cols[7])});
      s.loads.push_back(z);
    }
    for (std::size_t k = 0; k < inv_cols.size(); ++k) s.pg_kw[ts.inverter_ids[k]] = num(inv_cols[k]);
    ts.steps.push_back(std::move(s));
  }
  return ts;
}

inline TimeSeries read_timeseries_csv(const std::string& path, const NetworkModel& m) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return read_timeseries_csv(in, m);
}

inline nlohmann::json scenario_point_to_json(const ScenarioPoint& p) {
  nlohmann::json loads = nlohmann::json::array();
  for (const auto& z : p.loads)
    loads.push_back({z.p_kw, z.q_kvar, z.p_coeffs.z, z.p_coeffs.i, z.p_coeffs.p, z.q_coeffs.z, z.q_coeffs.i,
                     z.q_coeffs.p, z.v0_pu});
  nlohmann::json pg = nlohmann::json::object(), qg = nlohmann::json::object();
  for (const auto& [id, v] : p.pg_kw) pg[std::to_string(id)] = v;
  for (const auto& [id, v] : p.qg_kvar) qg[std::to_string(id)] = v;
  return {{"weight", p.weight}, {"loads", loads}, {"pg_kw", pg}, {"qg_kvar", qg}};
}

inline ScenarioPoint scenario_point_from_json(const nlohmann::json& j) {
  ScenarioPoint p;
  try {
    p.weight = j.at("weight").get<double>();
    for (const auto& row : j.at("loads")) {
      const auto v = row.get<std::vector<double>>();
      if (v.size() < 8) throw SchemaError("scenario load row needs 8 values");
      p.loads.push_back({v[0], v[1], {v[2], v[3], v[4]}, {v[5], v[6], v[7]}, v.size() > 8 ? v[8] : 1.0});
    }
    for (const auto& [k, v] : j.at("pg_kw").items()) p.pg_kw[std::stoi(k)] = v.get<double>();
    if (j.contains("qg_kvar"))
      for (const auto& [k, v] : j.at("qg_kvar").items()) p.qg_kvar[std::stoi(k)] = v.get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("scenario point: ") + e.what());
  }
  return p;
}

inline nlohmann::json scenario_set_to_json(const ScenarioSet& ss) {
  nlohmann::json j;
  j["source"] = ss.source;
  j["load_keys"] = ss.load_keys;
  j["inverter_ids"] = ss.inverter_ids;
  j["scale"] = ss.scale;
  j["origin"] = ss.origin;
  j["weight_sum"] = ss.total_weight();
  j["scenarios"] = nlohmann::json::array();
  for (const auto& p : ss.points) j["scenarios"].push_back(scenario_point_to_json(p));
  j["trace"] = nlohmann::json::array();
  for (const auto& t : ss.trace)
    j["trace"].push_back({{"deleted", t.deleted}, {"receiver", t.receiver}, {"cost", t.cost}, {"weight", t.moved_weight}});
  return j;
}

inline ScenarioSet scenario_set_from_json(const nlohmann::json& j) {
  ScenarioSet ss;
  try {
    ss.source = j.value("source", "");
    ss.load_keys = j.at("load_keys").get<std::vector<std::string>>();
    ss.inverter_ids = j.at("inverter_ids").get<std::vector<int>>();
    ss.scale = j.at("scale").get<std::vector<double>>();
    ss.origin = j.at("origin").get<std::vector<std::size_t>>();
    for (const auto& p : j.at("scenarios")) ss.points.push_back(scenario_point_from_json(p));
    if (j.contains("trace"))
      for (const auto& t : j.at("trace"))
        ss.trace.push_back({t.at("deleted").get<std::size_t>(), t.at("receiver").get<std::size_t>(),
                            t.at("cost").get<double>(), t.at("weight").get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("scenario set: ") + e.what());
  }
  if (ss.points.empty()) throw SchemaError("scenario set: no scenarios");
  return ss;
}

}  // namespace vvl
