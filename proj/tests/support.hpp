#pragma once

// Shared helpers for the unit tests: seeded generators for random instances
// and small reference computations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "rrda/matrix.hpp"

namespace rrda::test {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal(double sigma = 1.0) { return std::normal_distribution<double>(0.0, sigma)(rng_); }
  std::size_t index(std::size_t lo, std::size_t hi) {  // inclusive
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }

  Matrix matrix(std::size_t rows, std::size_t cols, double lo = -1.0, double hi = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.values()) v = uniform(lo, hi);
    return m;
  }

  std::vector<double> vec(std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = uniform(lo, hi);
    return v;
  }

  /// Random probability vector; some entries may be exactly zero.
  std::vector<double> probs(std::size_t n, bool allow_zero = true) {
    std::vector<double> p(n);
    double s = 0.0;
    for (double& x : p) {
      x = (allow_zero && uniform(0.0, 1.0) < 0.2) ? 0.0 : uniform(0.01, 1.0);
      s += x;
    }
    if (s == 0.0) {
      p[0] = 1.0;
      return p;
    }
    for (double& x : p) x /= s;
    return p;
  }

  std::vector<std::size_t> labels(std::size_t n, std::size_t classes) {
    std::vector<std::size_t> out(n);
    for (auto& l : out) l = index(0, classes - 1);
    return out;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// Plain softmax straight from the definition (no max shift) for small logits.
inline std::vector<double> naive_softmax(std::span<const double> l) {
  std::vector<double> p(l.size());
  double s = 0.0;
  for (std::size_t i = 0; i < l.size(); ++i) s += std::exp(l[i]);
  for (std::size_t i = 0; i < l.size(); ++i) p[i] = std::exp(l[i]) / s;
  return p;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

}  // namespace rrda::test
