#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "uotdc/gaussian.hpp"
#include "uotdc/logdet_program.hpp"
#include "uotdc/mass.hpp"
#include "uotdc/uot.hpp"

namespace uotdc {

/// x_{k+1} = A x_k + B u_k for states k = 1..horizon.
struct LinearSystem {
  Matrix A;
  Matrix B;
  int horizon = 2;

  Eigen::Index state_dim() const { return A.rows(); }
  Eigen::Index input_dim() const { return B.cols(); }
  int steps() const { return horizon - 1; }
  void validate() const;
};

class UdcProblem {
 public:
  UdcProblem(LinearSystem system, GaussianMeasure alpha, GaussianMeasure beta, double gamma,
             MassTerm mass_term = MassTerm::Psi, const Tolerances& tol = {});

  const LinearSystem& system() const { return system_; }
  const GaussianMeasure& alpha() const { return alpha_; }
  const GaussianMeasure& beta() const { return beta_; }
  double gamma() const { return gamma_; }
  MassTerm mass_term() const { return mass_term_; }
  const Tolerances& tolerances() const { return tol_; }
  const Matrix& alpha_inv() const { return alpha_inv_; }
  const Matrix& beta_inv() const { return beta_inv_; }
  const MassParams& mass_params() const { return mass_; }

 private:
  LinearSystem system_;
  GaussianMeasure alpha_;
  GaussianMeasure beta_;
  double gamma_;
  MassTerm mass_term_;
  Tolerances tol_;
  Matrix alpha_inv_;
  Matrix beta_inv_;
  MassParams mass_;
};

/// u_k = K_k (x_k - m_k) + v_k + w_k,  w_k ~ N(0, noise_cov_k),  k = 1..T-1.
struct AffinePolicy {
  std::vector<Matrix> gains;
  std::vector<Vector> feedforward;
  std::vector<Matrix> noise_covs;
  std::vector<Vector> means;  // centering means m_1..m_T

  int steps() const { return static_cast<int>(gains.size()); }
};

struct MomentTrajectory {
  std::vector<Vector> means;
  std::vector<Matrix> covs;
};

/// First and second moments of (x_k, u_k) under the normalized process.
struct JointMoments {
  Vector state_mean;
  Matrix state_cov;
  Vector control_mean;
  Matrix control_cov;
  Matrix cross_cov;  // Cov(u_k, x_k), p x d
};

/// Decision variables of the covariance program: S_k = K_k Sigma_k, Y_k = K_k Sigma_k K_k^T + Sigma^u_k.
struct SdpVariables {
  std::vector<Matrix> covs;  // Sigma_1..Sigma_T
  std::vector<Matrix> S;     // p x d
  std::vector<Matrix> Y;     // p x p
};

struct UdcSolution {
  double mass = 0.0;
  double alternate_mass = 0.0;  // minimizer under the other mass-term reading
  AffinePolicy policy;
  MomentTrajectory trajectory;
  double mean_value = 0.0;
  double covariance_value = 0.0;
  double subproblem_value = 0.0;
  double objective = 0.0;
  double trajectory_residual = 0.0;  // max |propagated Sigma_k - program Sigma_k|
  SolverReport report;
};

/// Builds the Gaussian initial measure and affine policy matching given joint moments.
std::pair<GaussianMeasure, AffinePolicy> policy_from_joint_moments(std::span<const JointMoments> moments,
                                                                   double mass, const LinearSystem& system,
                                                                   const Tolerances& tol = {});

struct MeanTrajectory {
  std::vector<Vector> means;        // m_1..m_T
  std::vector<Vector> feedforward;  // v_1..v_{T-1}
  double value = 0.0;               // sum |v_k|^2 + gamma M(m_1, m_T)
  double residual = 0.0;            // normal-equation residual norm
};

MeanTrajectory solve_mean_trajectory(const UdcProblem& problem);

/// The covariance program over x = (Sigma_1, {S_k, Y_k}) with Sigma_{k+1} substituted forward:
///   min sum_k Tr Y_k + gamma/2 [Tr(Sa^{-1} Sigma_1) + Tr(Sb^{-1} Sigma_T) - log det Sigma_1 - log det Sigma_T]
///   s.t. [[Y_k, S_k], [S_k^T, Sigma_k]] >= 0.
class CovarianceProgram {
 public:
  explicit CovarianceProgram(const UdcProblem& problem);

  const LogDetProgram& program() const { return program_; }
  int num_vars() const { return program_.num_vars(); }

  Vector pack(const Matrix& sigma1, std::span<const Matrix> S, std::span<const Matrix> Y) const;
  SdpVariables unpack(const Vector& x) const;

  /// Objective without barrier (+inf outside the domain) and its gradient.
  double objective(const Vector& x) const { return program_.objective(x); }
  Vector gradient(const Vector& x) const { return program_.gradient(x); }

  /// Strictly feasible start: Sigma_1 = Sigma_alpha, K = 0, Sigma^u = scale * I.
  Vector default_start() const;
  /// Start from an arbitrary Sigma_1 and feedback policy (gains, noise covariances).
  Vector start_from_policy(const Matrix& sigma1, std::span<const Matrix> gains,
                           std::span<const Matrix> noise_covs) const;

 private:
  const UdcProblem* problem_;
  LogDetProgram program_;
  Eigen::Index d_;
  Eigen::Index p_;
  int n_sigma1_;
  int block_;
};

struct CovarianceProgramOptions {
  BarrierOptions barrier;
  std::optional<Vector> initial;  // packed start point
};

struct CovarianceProgramResult {
  SdpVariables vars;
  double value = 0.0;
  double lmi_min_eigenvalue = 0.0;
  SolverReport report;
};

CovarianceProgramResult solve_covariance_program(const UdcProblem& problem,
                                                 const CovarianceProgramOptions& options = {});

/// K_k = S_k Sigma_k^{-1}, Sigma^u_k = Y_k - S_k Sigma_k^{-1} S_k^T.
std::pair<std::vector<Matrix>, std::vector<Matrix>> recover_policy(std::span<const Matrix> covs,
                                                                   std::span<const Matrix> S,
                                                                   std::span<const Matrix> Y,
                                                                   const Tolerances& tol = {});

double udc_mass_star(double q_star, const UdcProblem& problem);
double udc_mass_star(double q_star, const UdcProblem& problem, MassTerm term);

UdcSolution solve_udc(const UdcProblem& problem, const CovarianceProgramOptions& options = {});

MomentTrajectory propagate(const LinearSystem& system, const Vector& m1, const Matrix& sigma1,
                           const AffinePolicy& policy);

/// Per-unit-mass expected control effort sum_k |v_k|^2 + Tr(K_k Sigma_k K_k^T) + Tr Sigma^u_k.
double expected_control_cost(const MomentTrajectory& trajectory, const AffinePolicy& policy);

/// Per-step expected control effort.
std::vector<double> expected_step_costs(const MomentTrajectory& trajectory, const AffinePolicy& policy);

/// c * control + gamma KL(c N(m_1, S_1) | alpha) + gamma KL(c N(m_T, S_T) | beta), evaluated directly.
double udc_objective(double mass, const MomentTrajectory& trajectory, const AffinePolicy& policy,
                     const UdcProblem& problem);

}  // namespace uotdc
