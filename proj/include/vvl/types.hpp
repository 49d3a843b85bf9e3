#pragma once

#include <array>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace vvl {

using cplx = std::complex<double>;

/// Conductor index within a four-wire line: phases a, b, c and the neutral.
enum class Phase : int { A = 0, B = 1, C = 2, N = 3 };

inline constexpr std::array<Phase, 3> kPhases{Phase::A, Phase::B, Phase::C};

inline constexpr int idx(Phase p) { return static_cast<int>(p); }

inline char phase_char(Phase p) { return "abcn"[idx(p)]; }

inline Phase parse_phase(char c);

using Vec4 = std::array<cplx, 4>;
using Mat4 = std::array<std::array<cplx, 4>, 4>;

inline Vec4 mul(const Mat4& m, const Vec4& v) {
  Vec4 out{};
  for (int r = 0; r < 4; ++r) {
    cplx acc{};
    for (int c = 0; c < 4; ++c) acc += m[r][c] * v[c];
    out[r] = acc;
  }
  return out;
}

inline Mat4 scaled(const Mat4& m, double k) {
  Mat4 out = m;
  for (auto& row : out)
    for (auto& x : row) x *= k;
  return out;
}

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

// Error hierarchy. The CLI maps NumericalError to exit code 1 and the rest to 2.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : Error {
  using Error::Error;
};
struct SchemaError : Error {
  using Error::Error;
};
struct ReferenceError : Error {
  using Error::Error;
};
struct DomainError : Error {
  using Error::Error;
};
struct NumericalError : Error {
  using Error::Error;
};
struct ConvergenceError : NumericalError {
  using NumericalError::NumericalError;
};

inline Phase parse_phase(char c) {
  switch (c) {
    case 'a': case 'A': return Phase::A;
    case 'b': case 'B': return Phase::B;
    case 'c': case 'C': return Phase::C;
    case 'n': case 'N': return Phase::N;
  }
  throw SchemaError(std::string("unknown phase '") + c + "'");
}

}  // namespace vvl
