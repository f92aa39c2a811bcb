#pragma once

#include "uotdc/linalg.hpp"

namespace uotdc {

/// A mass-scaled Gaussian measure c * N(m, Sigma).
///
/// The covariance is symmetrized on construction and must be PSD. Reference
/// measures of the transport and control problems additionally need a
/// positive-definite covariance; see `require_reference`.
class GaussianMeasure {
 public:
  GaussianMeasure() = default;
  GaussianMeasure(double mass, Vector mean, const Matrix& cov, const Tolerances& tol = {});

  double mass() const { return mass_; }
  const Vector& mean() const { return mean_; }
  const Matrix& cov() const { return cov_; }
  Eigen::Index dim() const { return mean_.size(); }

  /// Same mean and covariance with a different total mass.
  GaussianMeasure with_mass(double mass) const;

  /// Throws SingularReference unless the covariance is positive definite (min eigenvalue > 1e-12).
  void require_reference(const char* what = "reference") const;

 private:
  double mass_ = 1.0;
  Vector mean_;
  Matrix cov_;
};

/// x -> linear * x + offset.
struct AffineMap {
  Matrix linear;
  Vector offset;

  Vector apply(const Vector& x) const { return linear * x + offset; }
};

/// Squared Wasserstein-2 distance between N(m1, s1) and N(m2, s2) (per unit mass).
double gelbrich_w2sq(const Vector& m1, const Matrix& s1, const Vector& m2, const Matrix& s2,
                     const Tolerances& tol = {});

/// Trace((s1^{1/2} s2 s1^{1/2})^{1/2}).
double fidelity_trace(const Matrix& s1, const Matrix& s2, const Tolerances& tol = {});

/// Monge map pushing N(m1, s1) onto N(m2, s2).
AffineMap optimal_affine_map(const Vector& m1, const Matrix& s1, const Vector& m2, const Matrix& s2,
                             const Tolerances& tol = {});

/// KL divergence between probability Gaussians N(a.mean, a.cov) and N(b.mean, b.cov).
double kl_probability(const Vector& ma, const Matrix& sa, const Vector& mb, const Matrix& sb);

/// Unbalanced KL: c_a [log(c_a / c_b) + KL_prob] + c_b - c_a.
double kl_gaussian(const GaussianMeasure& a, const GaussianMeasure& b);

/// Gaussian density (probability normalized) at x.
double gaussian_pdf(const Vector& x, const Vector& mean, const Matrix& cov);

}  // namespace uotdc
