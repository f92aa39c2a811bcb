#pragma once

#include <optional>
#include <vector>

#include "uotdc/gaussian.hpp"
#include "uotdc/kernels.hpp"
#include "uotdc/uot.hpp"

namespace uotdc {

/// Cell-centred discretization of a measure on a uniform tensor grid.
struct GridMeasure {
  Matrix points;   // one row per cell centre
  Vector weights;  // cell masses
  double spacing = 0.0;

  Eigen::Index size() const { return weights.size(); }
  Eigen::Index dim() const { return points.cols(); }
  double mass() const { return weights.sum(); }
  Vector mean() const;
  Matrix cov() const;
  void validate() const;
};

/// Uniform grid of n cells per axis over [lo, hi]^d (d = 1 or 2), weights = mass * density * h^d.
GridMeasure discretize(const GaussianMeasure& g, double lo, double hi, int n);

/// Empty measure on the same grid as discretize(., lo, hi, n) would produce.
GridMeasure uniform_grid(int dim, double lo, double hi, int n);

/// Unbalanced KL sum p log(p / q) - sum p + sum q with 0 log 0 = 0.
double discrete_kl(const GridMeasure& p, const GridMeasure& q);

struct DiscretePlan {
  Matrix weights;  // source cells x target cells; empty unless requested
};

struct DiscreteUotOptions {
  double tolerance = 1e-9;  // sup-norm change of the log-scalings per iteration
  int max_iterations = 50000;
  bool keep_plan = false;
  bool parallel = true;
  std::optional<std::pair<Vector, Vector>> warm_start;  // dual potentials (f, g)
};

struct DiscreteUotResult {
  DiscretePlan plan;
  GridMeasure marginal1;
  GridMeasure marginal2;
  double objective = 0.0;  // transport + gamma (KL1 + KL2); the entropy term is excluded
  double transport = 0.0;
  double kl1 = 0.0;
  double kl2 = 0.0;
  double entropy = 0.0;  // eps * KL(P | a x b), reported separately
  int iterations = 0;
  bool converged = false;
  Vector f;
  Vector g;
};

/// Entropic unbalanced transport between two grid measures by translation-invariant
/// log-domain Sinkhorn iterations (row/column updates with exponent gamma / (gamma + eps),
/// each followed by the optimal dual translation).
DiscreteUotResult solve_discrete_uot(const GridMeasure& a, const GridMeasure& b, double gamma, double epsilon,
                                     const DiscreteUotOptions& options = {});

struct OracleOptions {
  double lo = -8.0;
  double hi = 8.0;
  int n = 400;
  std::vector<double> epsilons{0.05, 0.02, 0.01};
  DiscreteUotOptions sinkhorn;
};

struct MomentSummary {
  double mass = 0.0;
  Vector mean;
  Matrix cov;
};

struct OracleRun {
  double epsilon = 0.0;
  DiscreteUotResult result;
};

struct OracleComparison {
  UotSolution closed_form;
  std::vector<OracleRun> runs;
  double extrapolated_objective = 0.0;
  double absolute_gap = 0.0;  // |extrapolated - closed form|
  double relative_gap = 0.0;  // absolute_gap / |closed form|
  MomentSummary extrapolated_marginal1;
  MomentSummary extrapolated_marginal2;
  double mass_gap = 0.0;      // relative errors of the extrapolated plan moments
  double mean_gap = 0.0;      // scaled by max(|m*|, sqrt(largest eigenvalue of Sigma*))
  double variance_gap = 0.0;  // relative Frobenius error of the covariances
  bool converged = true;
};

/// Solves the problem in closed form and on a grid for each epsilon (largest first, warm-started),
/// then extrapolates objective and plan moments linearly to epsilon = 0.
OracleComparison oracle_compare(const UotProblem& problem, const OracleOptions& options);

/// Least-squares intercept of y = y0 + slope * x.
double linear_extrapolate(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace uotdc
