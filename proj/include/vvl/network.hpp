#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <unordered_map>
#include <vector>

#include "vvl/types.hpp"

namespace vvl {

/// Constant-impedance / constant-current / constant-power split of a load component.
struct ZipCoefficients {
  double z = 0.0;  // alpha
  double i = 0.0;  // beta
  double p = 1.0;  // gamma

  double sum() const { return z + i + p; }
  friend bool operator==(const ZipCoefficients&, const ZipCoefficients&) = default;
};

struct ZipLoad {
  double p_kw = 0.0;
  double q_kvar = 0.0;
  ZipCoefficients p_coeffs;
  ZipCoefficients q_coeffs;
  double v0_pu = 1.0;

  friend bool operator==(const ZipLoad&, const ZipLoad&) = default;
};

/// Rescales the coefficients so they sum to one. A zero sum falls back to constant power.
inline ZipCoefficients normalized(ZipCoefficients c) {
  const double s = c.sum();
  if (!(std::abs(s) > 0.0)) return ZipCoefficients{};
  return {c.z / s, c.i / s, c.p / s};
}

enum class CapabilityMode { CapacityOnly, Accurate, LaggingOnly, FixedPF };

/// Reactive capability of one inverter. `pf` is the minimum lagging power factor in
/// LaggingOnly mode and the held power factor in FixedPF mode; `pf_sign` is +1 for
/// injection (leading, capacitive) and -1 for absorption (lagging, inductive).
struct CapabilitySpec {
  double s_kva = 1.0;
  double alpha_max_rad = 0.0;
  double q_max_kvar = 0.0;
  double q_fix_fraction = 0.0;
  CapabilityMode mode = CapabilityMode::CapacityOnly;
  double pf = 1.0;
  int pf_sign = -1;

  friend bool operator==(const CapabilitySpec&, const CapabilitySpec&) = default;
};

struct Bases {
  double v_base_volts = 230.0;  // phase-to-neutral
  double s_base_kva = 100.0;    // three-phase

  double z_base_ohm() const { return 3.0 * v_base_volts * v_base_volts / (s_base_kva * 1000.0); }
  double i_base_amp() const { return s_base_kva * 1000.0 / (3.0 * v_base_volts); }
  cplx ohm_to_pu(cplx z) const { return z / z_base_ohm(); }
  cplx pu_to_ohm(cplx z) const { return z * z_base_ohm(); }
};

struct Bus {
  std::string id;
  std::array<bool, 4> phases{true, true, true, true};
  double v_min_pu = 0.9;
  double v_max_pu = 1.1;

  bool has(Phase p) const { return phases[idx(p)]; }
  bool three_phase() const { return phases[0] && phases[1] && phases[2]; }
};

struct Line {
  std::string id;
  std::size_t from = 0;
  std::size_t to = 0;
  double length_km = 0.0;
  Mat4 z_ohm{};  // already scaled by length
  double ampacity_a = 1.0;
};

struct Source {
  std::size_t bus = 0;
  double v_pu = 1.0;
  double angle_deg = 0.0;
  cplx z_series_ohm{};  // per phase, transformer referred to the LV side
};

struct Load {
  std::size_t bus = 0;
  Phase phase = Phase::A;
  ZipLoad zip;
};

/// Inverter with generator-convention active power (negative when consuming, e.g. V2G charging).
struct Inverter {
  int id = 0;
  std::size_t bus = 0;
  Phase phase = Phase::A;
  CapabilitySpec caps;
  double p_kw = 0.0;
  cplx z_out_ohm{};  // small-signal output impedance seen from the PCC; zero means none
};

/// Radial ordering of the network: `order` lists buses root first, each bus after its parent.
struct Topology {
  std::size_t root = 0;
  std::vector<std::size_t> order;
  std::vector<int> parent_line;                     // -1 for the root and unreached buses
  std::vector<std::vector<std::size_t>> lines_at;   // Line_b
  std::vector<std::vector<std::size_t>> inverters_at;  // IICD_b (indices into inverters)
  std::vector<std::vector<std::size_t>> loads_at;
  bool radial = false;
};

struct NetworkModel {
  std::string name;
  Bases bases;
  Source source;
  std::vector<Bus> buses;
  std::vector<Line> lines;
  std::vector<Load> loads;
  std::vector<Inverter> inverters;
  std::vector<int> failed_inverters;  // ids removed by apply_contingency
  Topology topo;

  std::optional<std::size_t> find_bus(std::string_view id) const {
    for (std::size_t b = 0; b < buses.size(); ++b)
      if (buses[b].id == id) return b;
    return std::nullopt;
  }
  std::optional<std::size_t> find_inverter(int id) const {
    for (std::size_t k = 0; k < inverters.size(); ++k)
      if (inverters[k].id == id) return k;
    return std::nullopt;
  }
  std::vector<int> inverter_ids() const {
    std::vector<int> ids;
    for (const auto& inv : inverters) ids.push_back(inv.id);
    return ids;
  }
  std::string load_key(std::size_t k) const {
    return buses[loads[k].bus].id + "." + phase_char(loads[k].phase);
  }

  /// Recomputes adjacency and the radial ordering. Call after editing buses, lines or devices.
  void reindex();
};

inline void NetworkModel::reindex() {
  const std::size_t nb = buses.size();
  topo = Topology{};
  topo.root = source.bus;
  topo.parent_line.assign(nb, -1);
  topo.lines_at.assign(nb, {});
  topo.inverters_at.assign(nb, {});
  topo.loads_at.assign(nb, {});
  for (std::size_t l = 0; l < lines.size(); ++l) {
    if (lines[l].from < nb) topo.lines_at[lines[l].from].push_back(l);
    if (lines[l].to < nb) topo.lines_at[lines[l].to].push_back(l);
  }
  for (std::size_t k = 0; k < inverters.size(); ++k)
    if (inverters[k].bus < nb) topo.inverters_at[inverters[k].bus].push_back(k);
  for (std::size_t k = 0; k < loads.size(); ++k)
    if (loads[k].bus < nb) topo.loads_at[loads[k].bus].push_back(k);
  if (nb == 0 || source.bus >= nb) return;

  // Lines are oriented away from the source during the walk; a revisit means a loop.
  std::vector<bool> seen(nb, false);
  std::queue<std::size_t> q;
  q.push(source.bus);
  seen[source.bus] = true;
  bool loop = false;
  while (!q.empty()) {
    const std::size_t b = q.front();
    q.pop();
    topo.order.push_back(b);
    for (std::size_t l : topo.lines_at[b]) {
      if (static_cast<int>(l) == topo.parent_line[b]) continue;
      const std::size_t other = lines[l].from == b ? lines[l].to : lines[l].from;
      if (seen[other]) {
        loop = true;
        continue;
      }
      seen[other] = true;
      topo.parent_line[other] = static_cast<int>(l);
      q.push(other);
    }
  }
  topo.radial = !loop && topo.order.size() == nb && lines.size() + 1 == nb;
}

/// Key of one row of a contingency-indexed bank: the intact network or a single inverter outage.
struct ContingencyId {
  std::optional<int> failed;

  static ContingencyId intact() { return {}; }
  static ContingencyId inverter_out(int id) { return {id}; }
  bool is_intact() const { return !failed.has_value(); }

  std::string str() const { return failed ? "inverter_out:" + std::to_string(*failed) : "intact"; }
  static ContingencyId parse(const std::string& s) {
    if (s == "intact") return intact();
    const std::string prefix = "inverter_out:";
    if (s.rfind(prefix, 0) == 0) {
      try {
        return inverter_out(std::stoi(s.substr(prefix.size())));
      } catch (const std::exception&) {
      }
    }
    throw SchemaError("bad contingency id '" + s + "'");
  }

  friend bool operator==(const ContingencyId&, const ContingencyId&) = default;
  friend auto operator<=>(const ContingencyId& a, const ContingencyId& b) {
    // intact sorts first, then by inverter id
    if (a.failed.has_value() != b.failed.has_value())
      return a.failed.has_value() ? std::strong_ordering::greater : std::strong_ordering::less;
    if (!a.failed) return std::strong_ordering::equal;
    return *a.failed <=> *b.failed;
  }
};

struct Finding {
  std::string code;     // e.g. "asymmetric_impedance", "not_radial"
  std::string subject;  // offending element id
  std::string message;
};

struct ValidationReport {
  std::vector<Finding> findings;
  bool ok() const { return findings.empty(); }
  bool has(std::string_view code) const {
    return std::any_of(findings.begin(), findings.end(), [&](const Finding& f) { return f.code == code; });
  }
};

inline ValidationReport validate_network(const NetworkModel& m) {
  ValidationReport r;
  auto add = [&](std::string code, std::string subject, std::string msg) {
    r.findings.push_back({std::move(code), std::move(subject), std::move(msg)});
  };
  const std::size_t nb = m.buses.size();
  if (nb == 0) add("empty", m.name, "network has no buses");
  if (m.source.bus >= nb) add("dangling_reference", "source", "source bus out of range");

  for (const auto& b : m.buses) {
    if (!(b.v_min_pu > 0.0 && b.v_min_pu < b.v_max_pu))
      add("voltage_limits", b.id, "require 0 < v_min < v_max");
    if (!b.has(Phase::N)) add("missing_neutral", b.id, "four-wire bus without neutral");
  }

  for (const auto& l : m.lines) {
    if (l.from >= nb || l.to >= nb) {
      add("dangling_reference", l.id, "line endpoint out of range");
      continue;
    }
    if (l.from == l.to) add("self_loop", l.id, "line connects a bus to itself");
    bool sym = true, neg = false;
    for (int i = 0; i < 4; ++i) {
      if (l.z_ohm[i][i].real() < 0.0) neg = true;
      for (int j = i + 1; j < 4; ++j)
        if (std::abs(l.z_ohm[i][j] - l.z_ohm[j][i]) > 1e-12 * (1.0 + std::abs(l.z_ohm[i][j]))) sym = false;
    }
    if (!sym) add("asymmetric_impedance", l.id, "impedance matrix is not symmetric");
    if (neg) add("negative_resistance", l.id, "negative diagonal resistance");
    if (!(l.ampacity_a > 0.0)) add("ampacity", l.id, "ampacity must be positive");
  }

  if (nb > 0 && m.source.bus < nb) {
    NetworkModel copy = m;
    copy.reindex();
    if (copy.topo.order.size() != nb) {
      for (std::size_t b = 0; b < nb; ++b)
        if (std::find(copy.topo.order.begin(), copy.topo.order.end(), b) == copy.topo.order.end())
          add("disconnected", m.buses[b].id, "bus not reachable from the source");
    }
    if (m.lines.size() + 1 != nb || !copy.topo.radial)
      add("not_radial", m.name, "energized graph must be a tree (|lines| = |buses| - 1)");
  }

  for (std::size_t k = 0; k < m.loads.size(); ++k) {
    const auto& ld = m.loads[k];
    const std::string subj = "load#" + std::to_string(k);
    if (ld.bus >= nb) {
      add("dangling_reference", subj, "load bus out of range");
      continue;
    }
    if (ld.phase == Phase::N || !m.buses[ld.bus].has(ld.phase))
      add("phase_not_at_bus", subj, "load phase not present at bus");
    if (ld.zip.p_kw < 0.0) add("negative_load", subj, "Pd0 must be nonnegative");
    if (std::abs(ld.zip.p_coeffs.sum() - 1.0) > 1e-9 || std::abs(ld.zip.q_coeffs.sum() - 1.0) > 1e-9)
      add("zip_not_normalized", subj, "ZIP coefficients must sum to one");
  }

  std::map<int, int> seen_ids;
  for (const auto& inv : m.inverters) {
    const std::string subj = "inverter " + std::to_string(inv.id);
    if (++seen_ids[inv.id] == 2) add("duplicate_id", subj, "inverter id used twice");
    if (inv.bus >= nb) {
      add("dangling_reference", subj, "inverter bus out of range");
      continue;
    }
    if (inv.phase == Phase::N || !m.buses[inv.bus].has(inv.phase))
      add("phase_not_at_bus", subj, "inverter phase not present at bus");
    const auto& c = inv.caps;
    if (!(c.s_kva > 0.0)) add("capability", subj, "S must be positive");
    if (!(c.alpha_max_rad >= 0.0 && c.alpha_max_rad < std::numbers::pi / 2))
      add("capability", subj, "power-factor angle must be in [0, pi/2)");
    if (!(c.q_max_kvar >= 0.0)) add("capability", subj, "Q cap must be nonnegative");
    if (!(c.q_fix_fraction >= 0.0 && c.q_fix_fraction <= 1.0))
      add("capability", subj, "fixed reactive fraction must be in [0, 1]");
    if (!(c.pf > 0.0 && c.pf <= 1.0)) add("capability", subj, "power factor must be in (0, 1]");
    if (std::abs(inv.p_kw) > c.s_kva) add("capability", subj, "|P| exceeds S");
  }
  return r;
}

/// Removes the failed inverter from the network (its P and Q are zero from then on).
inline NetworkModel apply_contingency(const NetworkModel& m, const ContingencyId& c) {
  if (c.is_intact()) return m;
  if (std::find(m.failed_inverters.begin(), m.failed_inverters.end(), *c.failed) != m.failed_inverters.end())
    return m;
  auto k = m.find_inverter(*c.failed);
  if (!k) throw DomainError("contingency references unknown inverter " + std::to_string(*c.failed));
  NetworkModel out = m;
  out.inverters.erase(out.inverters.begin() + static_cast<std::ptrdiff_t>(*k));
  out.failed_inverters.push_back(*c.failed);
  out.reindex();
  return out;
}

}  // namespace vvl
