#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "vvl/simulate.hpp"

namespace vvl {

// Minimal SVG line/scatter charts. Informational only.

struct Series {
  std::string label;
  std::vector<double> x, y;
  bool points = false;  // markers instead of a polyline
};

namespace detail {

inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

inline std::string svg_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                             const std::vector<Series>& series, int width = 720, int height = 420) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (std::size_t k = 0; k < std::min(s.x.size(), s.y.size()); ++k) {
      if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
      x0 = std::min(x0, s.x[k]);
      x1 = std::max(x1, s.x[k]);
      y0 = std::min(y0, s.y[k]);
      y1 = std::max(y1, s.y[k]);
    }
  if (!(x1 >= x0)) x0 = 0, x1 = 1;
  if (!(y1 >= y0)) y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;

  const int l = 70, r = 150, t = 40, b = 50;
  const double pw = width - l - r, ph = height - t - b;
  auto px = [&](double x) { return l + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return t + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << detail::escape_xml(title)
    << "</text>\n";
  o << "<rect x=\"" << l << "\" y=\"" << t << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
    o << "<text x=\"" << px(xv) << "\" y=\"" << t + ph + 16 << "\" text-anchor=\"middle\">" << detail::svg_num(xv)
      << "</text>\n";
    o << "<text x=\"" << l - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << detail::svg_num(yv)
      << "</text>\n";
    o << "<line x1=\"" << l << "\" x2=\"" << l + pw << "\" y1=\"" << py(yv) << "\" y2=\"" << py(yv)
      << "\" stroke=\"#eee\"/>\n";
  }
  o << "<text x=\"" << l + pw / 2 << "\" y=\"" << height - 12 << "\" text-anchor=\"middle\">"
    << detail::escape_xml(xlabel) << "</text>\n";
  o << "<text transform=\"translate(16," << t + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << detail::escape_xml(ylabel) << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* col = palette[si % 10];
    if (s.points) {
      for (std::size_t k = 0; k < std::min(s.x.size(), s.y.size()); ++k)
        if (std::isfinite(s.x[k]) && std::isfinite(s.y[k]))
          o << "<circle cx=\"" << px(s.x[k]) << "\" cy=\"" << py(s.y[k]) << "\" r=\"3\" fill=\"" << col << "\"/>\n";
    } else {
      o << "<polyline fill=\"none\" stroke-width=\"1\" stroke=\"" << col << "\" points=\"";
      for (std::size_t k = 0; k < std::min(s.x.size(), s.y.size()); ++k)
        if (std::isfinite(s.x[k]) && std::isfinite(s.y[k])) o << px(s.x[k]) << ',' << py(s.y[k]) << ' ';
      o << "\"/>\n";
    }
    o << "<rect x=\"" << l + pw + 12 << "\" y=\"" << t + 16 * si << "\" width=\"10\" height=\"10\" fill=\"" << col
      << "\"/>\n";
    o << "<text x=\"" << l + pw + 26 << "\" y=\"" << t + 16 * si + 9 << "\">" << detail::escape_xml(s.label)
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

/// Stage-IV scatter of (V_base, dQ) for one inverter with the fitted line.
inline std::string vvc_scatter_svg(const VVCSet& set, int inverter) {
  const VVC* c = set.find(inverter);
  auto it = set.points.find(inverter);
  if (!c || it == set.points.end()) throw DomainError("no curve data for inverter " + std::to_string(inverter));
  Series pts{"scenarios", {}, {}, true};
  for (const auto& [v, q] : it->second) {
    pts.x.push_back(v);
    pts.y.push_back(q);
  }
  std::vector<Series> all{pts};
  if (!pts.x.empty()) {
    const auto [lo, hi] = std::minmax_element(pts.x.begin(), pts.x.end());
    Series fit{"fit", {*lo, *hi}, {c->m * (*lo - c->c), c->m * (*hi - c->c)}, false};
    all.push_back(fit);
  }
  char title[160];
  std::snprintf(title, sizeof title, "inverter %d (%s): m = %.1f kVAr/pu, c = %.4f pu, R2 = %.2f", inverter,
                objective_name(set.objective), c->m, c->c, c->r_squared);
  return svg_chart(title, "base voltage [pu]", "reactive adjustment [kVAr]", all);
}

/// PCC-phase voltage trace of selected buses over the run.
inline std::string voltage_trace_svg(const SimulationReport& r, const std::vector<std::string>& buses = {},
                                     std::size_t stride = 10) {
  std::vector<Series> all;
  for (std::size_t b = 0; b < r.bus_ids.size(); ++b) {
    if (!buses.empty() && std::find(buses.begin(), buses.end(), r.bus_ids[b]) == buses.end()) continue;
    for (int p = 0; p < 3; ++p) {
      Series s{r.bus_ids[b] + "." + "abc"[p], {}, {}, false};
      for (std::size_t t = 0; t < r.v_pu.size(); t += std::max<std::size_t>(stride, 1)) {
        s.x.push_back(static_cast<double>(t) * r.step_hours);
        s.y.push_back(r.v_pu[t][3 * b + static_cast<std::size_t>(p)]);
      }
      all.push_back(std::move(s));
    }
  }
  return svg_chart("bus voltages, " + r.policy, "time [h]", "voltage [pu]", all, 960, 440);
}

}  // namespace vvl
