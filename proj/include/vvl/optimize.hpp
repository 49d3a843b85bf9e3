#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "vvl/linalg.hpp"
#include "vvl/types.hpp"

namespace vvl {

struct CoordinateSearchOptions {
  double initial_step = 0.01;
  double min_step = 1e-4;  // stop once the step falls below this
  double shrink = 0.5;
  long max_evaluations = 1'000'000;
};

struct SearchResult {
  std::vector<double> x;
  double f = std::numeric_limits<double>::infinity();
  long evaluations = 0;
  int shrinks = 0;
};

/// Bounded compass search: poll +/- step along each coordinate, accept the first strict
/// improvement, and shrink the step after a sweep without progress. Non-finite objective
/// values count as +inf, so a failed evaluation simply rejects the candidate.
template <class F>
SearchResult coordinate_search(F&& f, std::vector<double> x0, std::span<const double> lo, std::span<const double> hi,
                               const CoordinateSearchOptions& opt = {}) {
  const std::size_t n = x0.size();
  if (lo.size() != n || hi.size() != n) throw DomainError("coordinate_search: bound size mismatch");
  auto eval = [&](const std::vector<double>& x, long& count) {
    ++count;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };
  SearchResult r;
  for (std::size_t i = 0; i < n; ++i) x0[i] = std::clamp(x0[i], lo[i], hi[i]);
  r.x = std::move(x0);
  r.f = eval(r.x, r.evaluations);
  double step = opt.initial_step;
  std::vector<double> y;
  while (step >= opt.min_step && r.evaluations < opt.max_evaluations) {
    bool improved = false;
    for (std::size_t i = 0; i < n; ++i) {
      for (double dir : {+1.0, -1.0}) {
        y = r.x;
        y[i] = std::clamp(r.x[i] + dir * step, lo[i], hi[i]);
        if (y[i] == r.x[i]) continue;
        const double fy = eval(y, r.evaluations);
        if (fy < r.f) {
          r.x = y;
          r.f = fy;
          improved = true;
          break;
        }
      }
    }
    if (!improved) {
      step *= opt.shrink;
      ++r.shrinks;
    }
  }
  return r;
}

}  // namespace vvl
