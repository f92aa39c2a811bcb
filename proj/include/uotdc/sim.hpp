#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uotdc/udc.hpp"

namespace uotdc {

struct SimConfig {
  std::int64_t sample_count = 100000;
  std::uint64_t seed = 0;
  bool record_controls = false;

  void validate() const;
};

/// Sample statistics of N rollouts of the normalized process.
struct EmpiricalMoments {
  std::int64_t samples = 0;
  std::vector<Vector> means;  // k = 1..T
  std::vector<Matrix> covs;   // unbiased sample covariances
  std::vector<double> step_costs;     // mean |u_k|^2
  std::vector<double> step_cost_se;   // standard errors of step_costs
  double control_cost = 0.0;          // mean sum_k |u_k|^2
  double control_cost_se = 0.0;
  std::vector<Vector> control_means;  // filled when record_controls is set
  std::vector<Matrix> control_covs;
};

/// Rolls out x_{k+1} = A x_k + B u_k with u_k = K_k (x_k - m_k) + v_k + w_k from x_1 ~ initial / mass.
///
/// Trajectory j draws from its own generator seeded by (seed, j); trajectories are grouped in
/// fixed-size blocks whose partial sums are combined in block order, so the result does not
/// depend on the number of threads.
EmpiricalMoments simulate(const LinearSystem& system, const GaussianMeasure& initial, const AffinePolicy& policy,
                          const SimConfig& config);

/// Single-threaded reference of `simulate`; identical output.
EmpiricalMoments simulate_serial(const LinearSystem& system, const GaussianMeasure& initial,
                                 const AffinePolicy& policy, const SimConfig& config);

struct MomentCheck {
  bool passed = true;
  int checks = 0;
  int failures = 0;
  double worst_z = 0.0;  // largest |error| / standard error
  std::string worst;     // description of the worst check
};

/// Compares sample moments and control costs to their analytic values at `z_limit` standard errors.
MomentCheck check_moments(const EmpiricalMoments& empirical, const MomentTrajectory& analytic,
                          const AffinePolicy& policy, double z_limit = 4.0);

/// c * (empirical control cost) + gamma * KL of the fitted Gaussian endpoints against the references.
double empirical_objective(const EmpiricalMoments& moments, const UdcSolution& solution, const UdcProblem& problem);

/// Conservative standard error of `empirical_objective` (delta method on the endpoint KLs, summed linearly).
double empirical_objective_se(const EmpiricalMoments& moments, const UdcSolution& solution,
                              const UdcProblem& problem);

/// Matrix F with F F^T = cov via the eigen-factorization, eigenvalues clipped at zero.
Matrix covariance_factor(const Matrix& cov);

}  // namespace uotdc
