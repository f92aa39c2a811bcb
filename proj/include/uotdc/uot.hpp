#pragma once

#include <cmath>
#include <optional>
#include <utility>

#include "uotdc/gaussian.hpp"
#include "uotdc/mass.hpp"

namespace uotdc {

/// Unbalanced transport between two Gaussian references with KL weight gamma.
///
/// The reference inverses and log-determinants are computed once here and
/// reused by every objective evaluation.
class UotProblem {
 public:
  UotProblem(GaussianMeasure alpha, GaussianMeasure beta, double gamma, const Tolerances& tol = {});

  const GaussianMeasure& alpha() const { return alpha_; }
  const GaussianMeasure& beta() const { return beta_; }
  double gamma() const { return gamma_; }
  Eigen::Index dim() const { return alpha_.dim(); }
  const Tolerances& tolerances() const { return tol_; }

  const Matrix& alpha_inv() const { return alpha_inv_; }
  const Matrix& beta_inv() const { return beta_inv_; }
  const MassParams& mass_params() const { return mass_; }

 private:
  GaussianMeasure alpha_;
  GaussianMeasure beta_;
  double gamma_;
  Tolerances tol_;
  Matrix alpha_inv_;
  Matrix beta_inv_;
  MassParams mass_;
};

struct SolverReport {
  int iterations = 0;
  double final_gradient_norm = 0.0;
  bool converged = false;
  double wall_time = 0.0;  // seconds
};

/// Mean part of the reduced objective: transport gap plus gamma/2-weighted Mahalanobis terms.
double eval_M(const Vector& m1, const Vector& m2, const UotProblem& problem);

/// Covariance part: -2 Tr sqrt(S1^{1/2} S2 S1^{1/2}) plus trace and log-det fidelity terms.
/// Throws NotPSD outside the positive-definite cone.
double eval_C(const Matrix& s1, const Matrix& s2, const UotProblem& problem);

struct CovarianceGradient {
  Matrix d_s1;
  Matrix d_s2;
  double norm() const { return std::sqrt(d_s1.squaredNorm() + d_s2.squaredNorm()); }
};

CovarianceGradient grad_C(const Matrix& s1, const Matrix& s2, const UotProblem& problem);

double eval_psi(double c, const UotProblem& problem);

/// Unique minimizer of M; solves the 2d x 2d stationarity system.
std::pair<Vector, Vector> solve_means(const UotProblem& problem);

struct CovarianceOptions {
  int max_iterations = 10000;
  /// Starting point; defaults to (Sigma_alpha, Sigma_beta).
  std::optional<std::pair<Matrix, Matrix>> initial;
};

struct CovarianceResult {
  Matrix s1;
  Matrix s2;
  double value = 0.0;
  SolverReport report;
};

/// Minimizes C over pairs of SPD matrices by gradient descent with
/// Barzilai-Borwein steps, Armijo backtracking and eigenvalue clipping.
CovarianceResult solve_covariances(const UotProblem& problem, const CovarianceOptions& options = {});

/// Closed-form optimal mass for subproblem value p*.
double mass_star(double p_star, const UotProblem& problem);

struct UotSolution {
  double mass = 0.0;
  GaussianMeasure marginal1;
  GaussianMeasure marginal2;
  AffineMap map;
  double subproblem_value = 0.0;
  double objective = 0.0;
  SolverReport report;
};

UotSolution solve_uot(const UotProblem& problem, const CovarianceOptions& options = {});

/// Full objective c W2^2 + gamma KL(pi1 | alpha) + gamma KL(pi2 | beta) for Gaussian marginals
/// of common mass coupled optimally; evaluated independently of the reduced form.
double uot_objective(const GaussianMeasure& pi1, const GaussianMeasure& pi2, const UotProblem& problem);

}  // namespace uotdc
