#include "uotdc/gaussian.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "uotdc/error.hpp"

namespace uotdc {

namespace {

void require_same_dim(const Vector& m1, const Matrix& s1, const Vector& m2, const Matrix& s2) {
  const auto d = m1.size();
  if (m2.size() != d || s1.rows() != d || s1.cols() != d || s2.rows() != d || s2.cols() != d) {
    throw Error(ErrorCode::DimensionMismatch, "mean/covariance dimensions disagree");
  }
}

}  // namespace

GaussianMeasure::GaussianMeasure(double mass, Vector mean, const Matrix& cov, const Tolerances& tol)
    : mass_(mass), mean_(std::move(mean)) {
  if (!(mass > 0.0) || !std::isfinite(mass)) {
    throw Error(ErrorCode::NonPositiveMass, "mass must be positive, got " + std::to_string(mass));
  }
  if (cov.rows() != mean_.size() || cov.cols() != mean_.size()) {
    throw Error(ErrorCode::DimensionMismatch, "covariance shape does not match mean");
  }
  if (!mean_.allFinite() || !cov.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "non-finite mean or covariance");
  }
  require_symmetric(cov, tol.sym_tol, "covariance");
  cov_ = symmetrize(cov);
  if (cov_.size() && min_eigenvalue(cov_) < -tol.eig_clip * std::max(1.0, cov_.cwiseAbs().maxCoeff())) {
    throw Error(ErrorCode::NotPSD, "covariance is not positive semidefinite");
  }
}

GaussianMeasure GaussianMeasure::with_mass(double mass) const {
  GaussianMeasure g = *this;
  if (!(mass > 0.0)) throw Error(ErrorCode::NonPositiveMass, "mass must be positive");
  g.mass_ = mass;
  return g;
}

void GaussianMeasure::require_reference(const char* what) const {
  if (dim() == 0) throw Error(ErrorCode::DimensionMismatch, std::string(what) + " has dimension 0");
  if (min_eigenvalue(cov_) <= 1e-12) {
    throw Error(ErrorCode::SingularReference, std::string(what) + " covariance is not positive definite");
  }
}

double fidelity_trace(const Matrix& s1, const Matrix& s2, const Tolerances& tol) {
  const Matrix r1 = sqrtm_psd(s1, tol);
  const Matrix inner = symmetrize(r1 * s2 * r1);
  Eigen::SelfAdjointEigenSolver<Matrix> es(inner, Eigen::EigenvaluesOnly);
  const Vector& ev = es.eigenvalues();
  const double floor = tol.eig_clip * std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < -floor) throw Error(ErrorCode::NotPSD, "s1^{1/2} s2 s1^{1/2} is not PSD");
  double sum = 0.0;
  for (double x : ev) sum += x > floor ? std::sqrt(x) : 0.0;
  return sum;
}

double gelbrich_w2sq(const Vector& m1, const Matrix& s1, const Vector& m2, const Matrix& s2,
                     const Tolerances& tol) {
  require_same_dim(m1, s1, m2, s2);
  const double cov_term = s1.trace() + s2.trace() - 2.0 * fidelity_trace(s1, s2, tol);
  // Roundoff can push the covariance term slightly below zero for identical inputs.
  return (m2 - m1).squaredNorm() + std::max(0.0, cov_term);
}

AffineMap optimal_affine_map(const Vector& m1, const Matrix& s1, const Vector& m2, const Matrix& s2,
                             const Tolerances& tol) {
  require_same_dim(m1, s1, m2, s2);
  sqrtm_psd(s2, tol);  // NotPSD check on the target
  if (min_eigenvalue(s1) < 1e-12) {
    throw Error(ErrorCode::SingularCovariance, "source covariance is singular");
  }
  const Matrix r1 = sqrtm_psd(s1, tol);
  const Matrix r1_inv = inv_sqrtm_spd(s1, tol);
  const Matrix middle = sqrtm_psd(symmetrize(r1 * s2 * r1), tol);
  AffineMap map;
  map.linear = symmetrize(r1_inv * middle * r1_inv);
  map.offset = m2 - map.linear * m1;
  return map;
}

double kl_probability(const Vector& ma, const Matrix& sa, const Vector& mb, const Matrix& sb) {
  require_same_dim(ma, sa, mb, sb);
  if (min_eigenvalue(sb) <= 1e-12) {
    throw Error(ErrorCode::SingularReference, "reference covariance is not positive definite");
  }
  const Eigen::LLT<Matrix> llt(symmetrize(sb));
  const Vector diff = ma - mb;
  const double maha = diff.dot(llt.solve(diff));
  const double tr = llt.solve(sa).trace();
  const auto d = static_cast<double>(ma.size());
  return 0.5 * (tr + maha - d + logdet_spd(sb) - logdet_spd(sa));
}

double kl_gaussian(const GaussianMeasure& a, const GaussianMeasure& b) {
  require_same_dim(a.mean(), a.cov(), b.mean(), b.cov());
  if (a.mass() == b.mass() && a.mean() == b.mean() && a.cov() == b.cov()) {
    b.require_reference();
    return 0.0;
  }
  const double ca = a.mass();
  const double cb = b.mass();
  return ca * (std::log(ca / cb) + kl_probability(a.mean(), a.cov(), b.mean(), b.cov())) + cb - ca;
}

double gaussian_pdf(const Vector& x, const Vector& mean, const Matrix& cov) {
  const Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::SingularCovariance, "density of a singular Gaussian");
  }
  const Vector diff = x - mean;
  const double maha = diff.dot(llt.solve(diff));
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const auto d = static_cast<double>(x.size());
  return std::exp(-0.5 * (maha + logdet + d * std::log(2.0 * std::numbers::pi)));
}

}  // namespace uotdc
