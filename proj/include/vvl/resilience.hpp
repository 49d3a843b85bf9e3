#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vvl/parallel.hpp"
#include "vvl/vvc.hpp"

namespace vvl {

using Fingerprint = std::map<int, cplx>;  // inverter id -> driving-point impedance at its PCC [ohm]

/// Driving-point impedance at every inverter PCC of `m`, linearized at (s, q_set).
inline Fingerprint fingerprints(const NetworkModel& m, const ScenarioPoint& s, const QSetpoints& q_set = {},
                                const TheveninOptions& opt = {}, const PowerFlowSolution* op = nullptr) {
  std::vector<std::pair<std::size_t, Phase>> pts;
  for (const auto& inv : m.inverters) pts.emplace_back(inv.bus, inv.phase);
  const auto z = thevenin_impedances(m, s, q_set, pts, opt, op);
  Fingerprint f;
  for (std::size_t k = 0; k < m.inverters.size(); ++k) f[m.inverters[k].id] = z[k];
  return f;
}

struct BankRow {
  ContingencyId contingency{};
  VVCSet set;
  Fingerprint fingerprint;
};

struct VVCBank {
  Objective objective = Objective::UnbalanceMin;
  CapabilityRegime regime{};
  std::string scenario_hash;
  std::vector<BankRow> rows;  // intact first, then outages by inverter id
  std::vector<std::string> warnings;

  const BankRow* find(const ContingencyId& c) const {
    for (const auto& r : rows)
      if (r.contingency == c) return &r;
    return nullptr;
  }
  const BankRow& row(const ContingencyId& c) const {
    if (const auto* r = find(c)) return *r;
    throw DomainError("bank has no row " + c.str());
  }
};

struct BankOptions {
  ExtractionOptions extraction{};
  TheveninOptions thevenin{};
  double classify_tol = 0.05;
};

/// 64-bit FNV-1a, used for artifact provenance.
inline std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string scenario_set_hash(const ScenarioSet& ss) { return hex64(fnv1a(scenario_set_to_json(ss).dump())); }

/// Max over measured PCCs of |z_meas - z_row| / |z_row|. A measured PCC the row does not know
/// (its inverter failed in that configuration) makes the row incompatible: +inf.
inline double fingerprint_distance(const Fingerprint& meas, const Fingerprint& row) {
  double d = 0.0;
  for (const auto& [id, z] : meas) {
    auto it = row.find(id);
    if (it == row.end()) return std::numeric_limits<double>::infinity();
    const double ref = std::abs(it->second);
    if (!(ref > 0.0)) return std::numeric_limits<double>::infinity();
    d = std::max(d, std::abs(z - it->second) / ref);
  }
  return d;
}

/// Smallest distance between any two rows, each read as a measurement against the other.
inline double min_row_separation(const VVCBank& bank) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < bank.rows.size(); ++a)
    for (std::size_t b = 0; b < bank.rows.size(); ++b)
      if (a != b) best = std::min(best, fingerprint_distance(bank.rows[a].fingerprint, bank.rows[b].fingerprint));
  return best;
}

namespace detail {

[[noreturn]] inline void rethrow_tagged(const std::string& tag) {
  try {
    throw;
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(tag + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(tag + ": " + e.what());
  } catch (const DomainError& e) {
    throw DomainError(tag + ": " + e.what());
  } catch (const Error& e) {
    throw Error(tag + ": " + e.what());
  }
}

}  // namespace detail

/// Intact row plus one row per single-inverter outage; each row runs Stages I-IV on the reduced
/// network and records fingerprints at the scenario-set centroid.
inline VVCBank build_vvc_bank(const NetworkModel& m, const ScenarioSet& ss, const BankOptions& opt = {}) {
  if (m.inverters.empty()) throw DomainError("bank needs at least one inverter");
  std::vector<ContingencyId> ids{ContingencyId::intact()};
  for (int id : m.inverter_ids()) ids.push_back(ContingencyId::inverter_out(id));
  std::sort(ids.begin(), ids.end());

  const ScenarioPoint centroid = scenario_centroid(ss);
  VVCBank bank;
  bank.objective = opt.extraction.objective;
  bank.regime = opt.extraction.regime;
  bank.scenario_hash = scenario_set_hash(ss);
  bank.rows.resize(ids.size());
  parallel_for(ids.size(), [&](std::size_t r) {
    try {
      const NetworkModel mr = apply_contingency(m, ids[r]);
      auto& row = bank.rows[r];
      row.contingency = ids[r];
      row.set = extract_vvc_set(mr, ss, opt.extraction, ids[r]);
      row.fingerprint = fingerprints(mr, centroid, {}, opt.thevenin);
    } catch (const Error&) {
      detail::rethrow_tagged("row " + ids[r].str());
    }
  });

  const double sep = min_row_separation(bank);
  if (sep < 2.0 * opt.classify_tol) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "ambiguous fingerprints: minimum row separation %.4f is below twice the tolerance %.4f",
                  sep, opt.classify_tol);
    bank.warnings.emplace_back(buf);
  }
  return bank;
}

struct Classification {
  std::optional<ContingencyId> row;  // empty: Unknown
  ContingencyId nearest{};
  double distance = std::numeric_limits<double>::infinity();
  bool known() const { return row.has_value(); }
};

/// Row whose fingerprint is closest to the measurement; Unknown when even that one is beyond tol.
/// Ties go to the earlier row (intact first).
inline Classification classify_configuration(const Fingerprint& z_meas, const VVCBank& bank, double tol = 0.05) {
  if (z_meas.empty()) throw DomainError("classify_configuration: empty measurement");
  if (bank.rows.empty()) throw DomainError("classify_configuration: empty bank");
  Classification c;
  for (const auto& r : bank.rows) {
    const double d = fingerprint_distance(z_meas, r.fingerprint);
    if (d < c.distance) {
      c.distance = d;
      c.nearest = r.contingency;
    }
  }
  if (c.distance <= tol) c.row = c.nearest;
  return c;
}

inline const VVC& select_vvc(const VVCBank& bank, const ContingencyId& cid, int inverter) {
  const auto& r = bank.row(cid);
  if (const VVC* v = r.set.find(inverter)) return *v;
  throw DomainError("row " + cid.str() + " has no curve for inverter " + std::to_string(inverter));
}

// ---------------------------------------------------------------------------------------------
// JSON

inline double round_sig(double x, int digits = 12) {
  if (!std::isfinite(x) || x == 0.0) return x;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return std::strtod(buf, nullptr);
}

inline nlohmann::json fingerprint_to_json(const Fingerprint& f) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [id, z] : f) j[std::to_string(id)] = {round_sig(z.real()), round_sig(z.imag())};
  return j;
}

inline Fingerprint fingerprint_from_json(const nlohmann::json& j) {
  Fingerprint f;
  try {
    for (const auto& [k, v] : j.items()) f[std::stoi(k)] = {v.at(0).get<double>(), v.at(1).get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("fingerprint: ") + e.what());
  } catch (const std::logic_error&) {
    throw SchemaError("fingerprint: inverter keys must be integers");
  }
  return f;
}

inline nlohmann::json bank_to_json(const VVCBank& b) {
  nlohmann::json j;
  j["objective"] = objective_name(b.objective);
  j["capability"] = regime_to_json(b.regime);
  j["scenario_hash"] = b.scenario_hash;
  j["warnings"] = b.warnings;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : b.rows) {
    nlohmann::json row = vvc_set_to_json(r.set);
    row["contingency"] = r.contingency.str();
    row["fingerprint"] = fingerprint_to_json(r.fingerprint);
    j["rows"].push_back(std::move(row));
  }
  return j;
}

inline VVCBank bank_from_json(const nlohmann::json& j) {
  VVCBank b;
  try {
    b.objective = parse_objective(j.at("objective").get<std::string>());
    if (j.contains("capability")) b.regime = regime_from_json(j.at("capability"));
    b.scenario_hash = j.value("scenario_hash", std::string());
    if (j.contains("warnings")) b.warnings = j.at("warnings").get<std::vector<std::string>>();
    for (const auto& row : j.at("rows")) {
      BankRow r;
      r.set = vvc_set_from_json(row);
      r.contingency = r.set.contingency;
      r.fingerprint = fingerprint_from_json(row.at("fingerprint"));
      b.rows.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bank: ") + e.what());
  }
  if (!b.find(ContingencyId::intact())) throw SchemaError("bank: no intact row");
  return b;
}

}  // namespace vvl
