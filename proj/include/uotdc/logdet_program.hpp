#pragma once

#include <vector>

#include "uotdc/linalg.hpp"

namespace uotdc {

/// A symmetric matrix-valued affine function A(x) = constant + sum_i x_i D_i,
/// stored sparsely over the variables it actually depends on.
struct AffineMatrix {
  Matrix constant;
  std::vector<int> vars;
  std::vector<Matrix> coefficients;

  Eigen::Index size() const { return constant.rows(); }
  Matrix evaluate(const Vector& x) const;
};

/// minimize  c^T x - sum_j w_j log det A_j(x)   subject to   B_k(x) > 0
///
/// Log-det objective terms carry fixed weights. Constraint blocks enter through
/// the barrier -mu log det B_k(x), and mu is driven to zero along the central path
/// with damped Newton steps. All Hessians are analytic:
/// d^2/dx_a dx_b [-log det A] = Tr(A^{-1} D_a A^{-1} D_b).
class LogDetProgram {
 public:
  explicit LogDetProgram(int num_vars) : linear_(Vector::Zero(num_vars)) {}

  int num_vars() const { return static_cast<int>(linear_.size()); }
  Vector& linear() { return linear_; }
  const Vector& linear() const { return linear_; }

  void add_objective_term(double weight, AffineMatrix term);
  void add_constraint(AffineMatrix block);

  const std::vector<AffineMatrix>& constraints() const { return constraints_; }

  /// True when every log-det argument and constraint block is positive definite at x.
  bool feasible(const Vector& x) const;

  /// Objective without the barrier; +inf outside the domain.
  double objective(const Vector& x) const;
  Vector gradient(const Vector& x) const;

  /// Barrier-augmented value, gradient and Hessian for a given mu.
  double barrier_value(const Vector& x, double mu) const;
  void barrier_derivatives(const Vector& x, double mu, Vector& grad, Matrix& hess) const;

  /// Total size of the constraint blocks; the suboptimality at barrier weight mu is at most mu times this.
  double barrier_degree() const;

 private:
  struct WeightedTerm {
    double weight;
    AffineMatrix term;
  };
  Vector linear_;
  std::vector<WeightedTerm> objective_terms_;
  std::vector<AffineMatrix> constraints_;
};

struct BarrierOptions {
  double mu_initial = 1.0;
  double mu_factor = 0.1;
  double mu_final = 1e-11;
  double newton_tol = 1e-10;  // stop centering when lambda^2 / 2 falls below this
  int max_newton_steps = 2000;
};

struct BarrierResult {
  Vector x;
  double objective = 0.0;
  int newton_steps = 0;
  double final_decrement = 0.0;
  bool converged = false;
};

/// Path-following barrier method from a strictly feasible starting point.
BarrierResult minimize_barrier(const LogDetProgram& program, const Vector& x0, const BarrierOptions& options = {});

}  // namespace uotdc
