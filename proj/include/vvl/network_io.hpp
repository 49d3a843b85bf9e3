#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "vvl/network.hpp"

namespace vvl {

using json = nlohmann::json;

namespace detail {

template <class T>
T field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw SchemaError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw SchemaError(where + ": field '" + key + "' has the wrong type (" + e.what() + ")");
  }
}

template <class T>
T field_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  return field<T>(j, key, where);
}

inline cplx complex_field(const json& j, const char* key, const std::string& where, cplx fallback = {}) {
  if (!j.contains(key)) return fallback;
  const auto v = field<std::vector<double>>(j, key, where);
  if (v.size() != 2) throw SchemaError(where + ": '" + key + "' must be [re, im]");
  return {v[0], v[1]};
}

inline Mat4 matrix_field(const json& j, const std::string& where) {
  auto read = [&](const char* key) {
    const auto rows = field<std::vector<std::vector<double>>>(j, key, where);
    if (rows.size() != 4) throw SchemaError(where + ": '" + key + "' must be 4x4");
    for (const auto& r : rows)
      if (r.size() != 4) throw SchemaError(where + ": '" + key + "' must be 4x4");
    return rows;
  };
  const auto r = read("r");
  const auto x = read("x");
  Mat4 m{};
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k) m[i][k] = {r[i][k], x[i][k]};
  return m;
}

inline ZipCoefficients zip_field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) return {};
  const auto v = field<std::vector<double>>(j, key, where);
  if (v.size() != 3) throw SchemaError(where + ": '" + key + "' must be [alpha, beta, gamma]");
  return normalized({v[0], v[1], v[2]});
}

inline std::size_t bus_ref(const NetworkModel& m, const json& j, const char* key, const std::string& where) {
  const auto id = field<std::string>(j, key, where);
  auto b = m.find_bus(id);
  if (!b) throw ReferenceError(where + ": unknown bus '" + id + "'");
  return *b;
}

inline Phase phase_field(const json& j, const std::string& where) {
  const auto s = field<std::string>(j, "phase", where);
  if (s.size() != 1) throw SchemaError(where + ": phase must be one of a, b, c");
  return parse_phase(s[0]);
}

}  // namespace detail

/// Builds a model from the documented JSON schema, normalizes ZIP coefficients, and validates it.
inline NetworkModel parse_network(const json& j) {
  using namespace detail;
  if (!j.is_object()) throw SchemaError("network: top level must be an object");
  NetworkModel m;
  m.name = field_or<std::string>(j, "name", "network", "network");

  if (j.contains("bases")) {
    const auto& b = j.at("bases");
    m.bases.v_base_volts = field_or<double>(b, "v_base_volts", 230.0, "bases");
    m.bases.s_base_kva = field_or<double>(b, "s_base_kva", 100.0, "bases");
  }

  for (const auto& jb : field<json>(j, "buses", "network")) {
    Bus bus;
    bus.id = field<std::string>(jb, "id", "bus");
    const std::string where = "bus " + bus.id;
    const auto ph = field_or<std::string>(jb, "phases", "abcn", where);
    bus.phases = {false, false, false, false};
    for (char c : ph) bus.phases[idx(parse_phase(c))] = true;
    bus.v_min_pu = field_or<double>(jb, "v_min_pu", 0.9, where);
    bus.v_max_pu = field_or<double>(jb, "v_max_pu", 1.1, where);
    if (m.find_bus(bus.id)) throw SchemaError(where + ": duplicate bus id");
    m.buses.push_back(bus);
  }

  const auto& js = field<json>(j, "source", "network");
  m.source.bus = bus_ref(m, js, "bus", "source");
  m.source.v_pu = field_or<double>(js, "v_pu", 1.0, "source");
  m.source.angle_deg = field_or<double>(js, "angle_deg", 0.0, "source");
  m.source.z_series_ohm = complex_field(js, "z_series_ohm", "source");

  for (const auto& jl : field<json>(j, "lines", "network")) {
    Line ln;
    ln.id = field<std::string>(jl, "id", "line");
    const std::string where = "line " + ln.id;
    ln.from = bus_ref(m, jl, "from", where);
    ln.to = bus_ref(m, jl, "to", where);
    ln.ampacity_a = field<double>(jl, "ampacity_a", where);
    ln.length_km = field_or<double>(jl, "length_km", 0.0, where);
    if (jl.contains("z_ohm")) {
      ln.z_ohm = matrix_field(jl.at("z_ohm"), where + " z_ohm");
    } else if (jl.contains("z_ohm_per_km")) {
      if (!jl.contains("length_km")) throw SchemaError(where + ": z_ohm_per_km requires length_km");
      ln.z_ohm = scaled(matrix_field(jl.at("z_ohm_per_km"), where + " z_ohm_per_km"), ln.length_km);
    } else {
      throw SchemaError(where + ": missing field 'z_ohm' or 'z_ohm_per_km'");
    }
    m.lines.push_back(ln);
  }

  if (j.contains("loads")) {
    for (const auto& jl : j.at("loads")) {
      Load ld;
      const std::string where = "load #" + std::to_string(m.loads.size());
      ld.bus = bus_ref(m, jl, "bus", where);
      ld.phase = phase_field(jl, where);
      ld.zip.p_kw = field<double>(jl, "p_kw", where);
      ld.zip.q_kvar = field_or<double>(jl, "q_kvar", 0.0, where);
      ld.zip.p_coeffs = zip_field(jl, "zip_p", where);
      ld.zip.q_coeffs = jl.contains("zip_q") ? zip_field(jl, "zip_q", where) : ld.zip.p_coeffs;
      ld.zip.v0_pu = field_or<double>(jl, "v0_pu", 1.0, where);
      m.loads.push_back(ld);
    }
  }

  if (j.contains("inverters")) {
    for (const auto& ji : j.at("inverters")) {
      Inverter inv;
      inv.id = field<int>(ji, "id", "inverter");
      const std::string where = "inverter " + std::to_string(inv.id);
      inv.bus = bus_ref(m, ji, "bus", where);
      inv.phase = phase_field(ji, where);
      inv.p_kw = field_or<double>(ji, "p_kw", 0.0, where);
      auto& c = inv.caps;
      c.s_kva = field<double>(ji, "s_kva", where);
      if (ji.contains("alpha_max_deg")) {
        c.alpha_max_rad = deg2rad(field<double>(ji, "alpha_max_deg", where));
      } else {
        const double pf = field_or<double>(ji, "pf_max", 1.0, where);
        if (!(pf > 0.0 && pf <= 1.0)) throw SchemaError(where + ": pf_max must be in (0, 1]");
        c.alpha_max_rad = std::acos(pf);
      }
      c.q_max_kvar = field_or<double>(ji, "q_max_kvar", c.s_kva, where);
      c.q_fix_fraction = field_or<double>(ji, "q_fix_fraction", 0.0, where);
      inv.z_out_ohm = complex_field(ji, "z_out_ohm", where);
      m.inverters.push_back(inv);
    }
  }

  m.reindex();
  const auto report = validate_network(m);
  if (!report.ok()) {
    std::string msg = "network '" + m.name + "' is invalid:";
    for (const auto& f : report.findings) msg += "\n  [" + f.code + "] " + f.subject + ": " + f.message;
    throw SchemaError(msg);
  }
  return m;
}

inline NetworkModel parse_network_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("network JSON: ") + e.what());
  }
  return parse_network(j);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline NetworkModel load_network(const std::string& path) { return parse_network_text(read_text_file(path)); }

/// Inverse of parse_network on the documented fields. Line impedances are written length-scaled.
inline json network_to_json(const NetworkModel& m) {
  json j;
  j["name"] = m.name;
  j["bases"] = {{"v_base_volts", m.bases.v_base_volts}, {"s_base_kva", m.bases.s_base_kva}};
  j["source"] = {{"bus", m.buses.at(m.source.bus).id},
                 {"v_pu", m.source.v_pu},
                 {"angle_deg", m.source.angle_deg},
                 {"z_series_ohm", {m.source.z_series_ohm.real(), m.source.z_series_ohm.imag()}}};
  j["buses"] = json::array();
  for (const auto& b : m.buses) {
    std::string ph;
    for (int c = 0; c < 4; ++c)
      if (b.phases[c]) ph += "abcn"[c];
    j["buses"].push_back({{"id", b.id}, {"phases", ph}, {"v_min_pu", b.v_min_pu}, {"v_max_pu", b.v_max_pu}});
  }
  j["lines"] = json::array();
  for (const auto& l : m.lines) {
    json r = json::array(), x = json::array();
    for (int i = 0; i < 4; ++i) {
      json rr = json::array(), xr = json::array();
      for (int k = 0; k < 4; ++k) {
        rr.push_back(l.z_ohm[i][k].real());
        xr.push_back(l.z_ohm[i][k].imag());
      }
      r.push_back(rr);
      x.push_back(xr);
    }
    j["lines"].push_back({{"id", l.id},
                          {"from", m.buses.at(l.from).id},
                          {"to", m.buses.at(l.to).id},
                          {"length_km", l.length_km},
                          {"ampacity_a", l.ampacity_a},
                          {"z_ohm", {{"r", r}, {"x", x}}}});
  }
  j["loads"] = json::array();
  for (const auto& ld : m.loads) {
    const auto& z = ld.zip;
    j["loads"].push_back({{"bus", m.buses.at(ld.bus).id},
                          {"phase", std::string(1, phase_char(ld.phase))},
                          {"p_kw", z.p_kw},
                          {"q_kvar", z.q_kvar},
                          {"zip_p", {z.p_coeffs.z, z.p_coeffs.i, z.p_coeffs.p}},
                          {"zip_q", {z.q_coeffs.z, z.q_coeffs.i, z.q_coeffs.p}},
                          {"v0_pu", z.v0_pu}});
  }
  j["inverters"] = json::array();
  for (const auto& inv : m.inverters) {
    j["inverters"].push_back({{"id", inv.id},
                              {"bus", m.buses.at(inv.bus).id},
                              {"phase", std::string(1, phase_char(inv.phase))},
                              {"p_kw", inv.p_kw},
                              {"s_kva", inv.caps.s_kva},
                              {"alpha_max_deg", rad2deg(inv.caps.alpha_max_rad)},
                              {"q_max_kvar", inv.caps.q_max_kvar},
                              {"q_fix_fraction", inv.caps.q_fix_fraction},
                              {"z_out_ohm", {inv.z_out_ohm.real(), inv.z_out_ohm.imag()}}});
  }
  return j;
}

}  // namespace vvl
