#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>

#include "uotdc/gaussian.hpp"
#include "uotdc/udc.hpp"

namespace uotdc::testing {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  double normal() { return std::normal_distribution<double>()(gen_); }

  Vector vector(Eigen::Index n, double scale = 1.0) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * normal();
    return v;
  }

  Matrix matrix(Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * normal();
    }
    return m;
  }

  /// Random SPD matrix with eigenvalues in [lo, hi].
  Matrix spd(Eigen::Index n, double lo = 0.3, double hi = 2.0) {
    Eigen::HouseholderQR<Matrix> qr(matrix(n, n));
    const Matrix q = qr.householderQ();
    Vector ev(n);
    for (Eigen::Index i = 0; i < n; ++i) ev[i] = uniform(lo, hi);
    return symmetrize(q * ev.asDiagonal() * q.transpose());
  }

  GaussianMeasure measure(Eigen::Index n, double mass_lo = 0.5, double mass_hi = 2.0) {
    return GaussianMeasure(uniform(mass_lo, mass_hi), vector(n), spd(n));
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

inline double central_difference(const std::function<double(double)>& f, double h) {
  return (f(h) - f(-h)) / (2.0 * h);
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

/// Minimizer of a unimodal function on [lo, hi] by golden-section search.
inline double golden_section(const std::function<double(double)>& f, double lo, double hi, int iters = 200) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double c = b - r * (b - a);
  double d = a + r * (b - a);
  double fc = f(c);
  double fd = f(d);
  for (int i = 0; i < iters; ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

/// Controllable random system of the given shape (entries of A near the identity).
inline LinearSystem random_system(Rng& rng, Eigen::Index d, Eigen::Index p, int horizon) {
  LinearSystem s;
  s.A = Matrix::Identity(d, d) + rng.matrix(d, d, 0.2);
  s.B = rng.matrix(d, p, 0.7);
  s.horizon = horizon;
  return s;
}

}  // namespace uotdc::testing
