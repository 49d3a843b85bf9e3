#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <utility>
#include <vector>

namespace vvl {

/// Dense LU factorization with partial pivoting, row-major storage. Works for double and
/// std::complex<double>.
template <class T>
class DenseLU {
 public:
  DenseLU() = default;
  explicit DenseLU(std::vector<T> a) : a_(std::move(a)) {
    n_ = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(a_.size()))));
    piv_.resize(n_);
    for (std::size_t k = 0; k < n_; ++k) {
      std::size_t p = k;
      for (std::size_t r = k + 1; r < n_; ++r)
        if (std::abs(a_[r * n_ + k]) > std::abs(a_[p * n_ + k])) p = r;
      piv_[k] = p;
      if (!(std::abs(a_[p * n_ + k]) > 1e-300)) {
        singular_ = true;
        return;
      }
      if (p != k)
        for (std::size_t c = 0; c < n_; ++c) std::swap(a_[k * n_ + c], a_[p * n_ + c]);
      const T d = a_[k * n_ + k];
      for (std::size_t r = k + 1; r < n_; ++r) {
        T& f = a_[r * n_ + k];
        if (f == T{}) continue;
        f /= d;
        for (std::size_t c = k + 1; c < n_; ++c) a_[r * n_ + c] -= f * a_[k * n_ + c];
      }
    }
  }

  bool singular() const { return singular_; }
  std::size_t size() const { return n_; }

  /// Solves A x = b in place.
  void solve(std::vector<T>& b) const {
    for (std::size_t k = 0; k < n_; ++k) {
      if (piv_[k] != k) std::swap(b[k], b[piv_[k]]);
      for (std::size_t r = k + 1; r < n_; ++r) b[r] -= a_[r * n_ + k] * b[k];
    }
    for (std::size_t k = n_; k-- > 0;) {
      T s = b[k];
      for (std::size_t c = k + 1; c < n_; ++c) s -= a_[k * n_ + c] * b[c];
      b[k] = s / a_[k * n_ + k];
    }
  }

 private:
  std::vector<T> a_;
  std::vector<std::size_t> piv_;
  std::size_t n_ = 0;
  bool singular_ = false;
};

/// Solves A x = b in place; returns false when A is numerically singular.
template <class T>
bool solve_dense(std::vector<T> a, std::vector<T>& b) {
  DenseLU<T> lu(std::move(a));
  if (lu.singular() || lu.size() != b.size()) return false;
  lu.solve(b);
  return true;
}

}  // namespace vvl
