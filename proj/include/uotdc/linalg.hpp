#pragma once

#include <Eigen/Dense>

namespace uotdc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Numerical thresholds shared by all solvers.
struct Tolerances {
  double eig_clip = 1e-12;  // eigenvalues below this (relative to the largest) count as zero
  double sym_tol = 1e-10;   // max |M - M^T| relative to max |M|
  double psd_tol = 1e-9;    // PSD checks on Schur complements and LMIs
  double grad_tol = 1e-10;  // Newton decrement threshold of the barrier solver
  double opt_tol = 1e-7;    // gradient-norm threshold of the covariance descent

  void validate() const;
};

Matrix symmetrize(const Matrix& m);

/// Throws NotSymmetric when the asymmetry of `m` exceeds `sym_tol`.
void require_symmetric(const Matrix& m, double sym_tol, const char* what = "matrix");

double asymmetry(const Matrix& m);

/// Principal square root of a symmetric PSD matrix via eigendecomposition.
/// Eigenvalues in [-eig_clip * scale, eig_clip * scale] are clipped to zero.
Matrix sqrtm_psd(const Matrix& m, const Tolerances& tol = {});

/// Inverse principal square root; requires a positive-definite input.
Matrix inv_sqrtm_spd(const Matrix& m, const Tolerances& tol = {});

/// Inverse of an SPD matrix through its eigendecomposition.
Matrix inverse_spd(const Matrix& m, const Tolerances& tol = {});

double logdet_spd(const Matrix& m);

double min_eigenvalue(const Matrix& m);

/// True when the Cholesky factorization of `m` succeeds.
bool is_positive_definite(const Matrix& m);

}  // namespace uotdc
