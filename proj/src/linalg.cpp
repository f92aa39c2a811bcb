#include "uotdc/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "uotdc/error.hpp"

namespace uotdc {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NotPSD: return "NotPSD";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::SingularReference: return "SingularReference";
    case ErrorCode::NonPositiveMass: return "NonPositiveMass";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::InfeasibleDynamics: return "InfeasibleDynamics";
    case ErrorCode::SingularStateCov: return "SingularStateCov";
    case ErrorCode::NegativeSchurComplement: return "NegativeSchurComplement";
    case ErrorCode::DomainTooNarrow: return "DomainTooNarrow";
    case ErrorCode::SupportViolation: return "SupportViolation";
  }
  return "Unknown";
}

void Tolerances::validate() const {
  if (!(eig_clip >= 0.0) || !(sym_tol > 0.0) || !(psd_tol > 0.0) || !(grad_tol > 0.0) ||
      !(opt_tol > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "tolerances must be positive (eig_clip >= 0)");
  }
}

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

double asymmetry(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() / scale;
}

void require_symmetric(const Matrix& m, double sym_tol, const char* what) {
  if (m.rows() != m.cols()) {
    throw Error(ErrorCode::DimensionMismatch, std::string(what) + " is not square");
  }
  if (asymmetry(m) > sym_tol) {
    throw Error(ErrorCode::NotSymmetric,
                std::string(what) + " asymmetry " + std::to_string(asymmetry(m)) + " exceeds tolerance");
  }
}

namespace {

Eigen::SelfAdjointEigenSolver<Matrix> eig_checked(const Matrix& m, const Tolerances& tol) {
  require_symmetric(m, tol.sym_tol);
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m));
  if (es.info() != Eigen::Success) {
    throw Error(ErrorCode::NotPSD, "eigendecomposition failed");
  }
  return es;
}

double clip_floor(const Vector& evals, const Tolerances& tol) {
  const double scale = evals.size() ? std::max(1.0, evals.cwiseAbs().maxCoeff()) : 1.0;
  return tol.eig_clip * scale;
}

}  // namespace

Matrix sqrtm_psd(const Matrix& m, const Tolerances& tol) {
  const auto es = eig_checked(m, tol);
  const Vector& ev = es.eigenvalues();
  const double floor = clip_floor(ev, tol);
  if (ev.size() && ev.minCoeff() < -floor) {
    throw Error(ErrorCode::NotPSD, "eigenvalue " + std::to_string(ev.minCoeff()) + " is negative");
  }
  const Vector root = ev.unaryExpr([floor](double x) { return x <= floor ? 0.0 : std::sqrt(x); });
  return symmetrize(es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose());
}

Matrix inv_sqrtm_spd(const Matrix& m, const Tolerances& tol) {
  const auto es = eig_checked(m, tol);
  const Vector& ev = es.eigenvalues();
  if (ev.size() && ev.minCoeff() <= clip_floor(ev, tol)) {
    throw Error(ErrorCode::SingularCovariance, "matrix is not positive definite");
  }
  const Vector r = ev.array().rsqrt();
  return symmetrize(es.eigenvectors() * r.asDiagonal() * es.eigenvectors().transpose());
}

Matrix inverse_spd(const Matrix& m, const Tolerances& tol) {
  const auto es = eig_checked(m, tol);
  const Vector& ev = es.eigenvalues();
  if (ev.size() && ev.minCoeff() <= clip_floor(ev, tol)) {
    throw Error(ErrorCode::SingularCovariance, "matrix is not positive definite");
  }
  const Vector r = ev.cwiseInverse();
  return symmetrize(es.eigenvectors() * r.asDiagonal() * es.eigenvectors().transpose());
}

double logdet_spd(const Matrix& m) {
  Eigen::LLT<Matrix> llt(symmetrize(m));
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::NotPSD, "log-determinant of a non positive-definite matrix");
  }
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

double min_eigenvalue(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

bool is_positive_definite(const Matrix& m) {
  Eigen::LLT<Matrix> llt(m);
  return llt.info() == Eigen::Success;
}

}  // namespace uotdc
