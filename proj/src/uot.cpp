#include "uotdc/uot.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "uotdc/error.hpp"

namespace uotdc {

UotProblem::UotProblem(GaussianMeasure alpha, GaussianMeasure beta, double gamma, const Tolerances& tol)
    : alpha_(std::move(alpha)), beta_(std::move(beta)), gamma_(gamma), tol_(tol) {
  tol_.validate();
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw Error(ErrorCode::InvalidArgument, "gamma must be positive and finite");
  }
  if (alpha_.dim() != beta_.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "references have different dimensions");
  }
  alpha_.require_reference("alpha");
  beta_.require_reference("beta");
  alpha_inv_ = inverse_spd(alpha_.cov(), tol_);
  beta_inv_ = inverse_spd(beta_.cov(), tol_);
  mass_ = MassParams::from_references(alpha_, beta_, gamma_);
}

double eval_M(const Vector& m1, const Vector& m2, const UotProblem& problem) {
  const auto d = problem.dim();
  if (m1.size() != d || m2.size() != d) throw Error(ErrorCode::DimensionMismatch, "eval_M");
  const Vector e1 = m1 - problem.alpha().mean();
  const Vector e2 = m2 - problem.beta().mean();
  return (m2 - m1).squaredNorm() + 0.5 * problem.gamma() * e1.dot(problem.alpha_inv() * e1) +
         0.5 * problem.gamma() * e2.dot(problem.beta_inv() * e2);
}

namespace {

double fidelity_terms(const Matrix& s, const Matrix& ref_inv, double gamma) {
  return 0.5 * gamma * (ref_inv * s).trace() - 0.5 * gamma * logdet_spd(s) + s.trace();
}

// Objective value, or +inf when an iterate leaves the positive-definite cone.
double c_value_or_inf(const Matrix& s1, const Matrix& s2, const UotProblem& p) {
  if (!is_positive_definite(s1) || !is_positive_definite(s2)) {
    return std::numeric_limits<double>::infinity();
  }
  return -2.0 * fidelity_trace(s1, s2, p.tolerances()) + fidelity_terms(s2, p.beta_inv(), p.gamma()) +
         fidelity_terms(s1, p.alpha_inv(), p.gamma());
}

void require_pd_pair(const Matrix& s1, const Matrix& s2, Eigen::Index d) {
  if (s1.rows() != d || s1.cols() != d || s2.rows() != d || s2.cols() != d) {
    throw Error(ErrorCode::DimensionMismatch, "covariance shapes");
  }
  if (!is_positive_definite(s1) || !is_positive_definite(s2)) {
    throw Error(ErrorCode::NotPSD, "covariances must be positive definite");
  }
}

Matrix clip_spd(const Matrix& m, double floor) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m));
  if (es.eigenvalues().minCoeff() >= floor) return symmetrize(m);
  const Vector ev = es.eigenvalues().cwiseMax(floor);
  return symmetrize(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
}

}  // namespace

double eval_C(const Matrix& s1, const Matrix& s2, const UotProblem& problem) {
  require_pd_pair(s1, s2, problem.dim());
  return c_value_or_inf(s1, s2, problem);
}

CovarianceGradient grad_C(const Matrix& s1, const Matrix& s2, const UotProblem& problem) {
  require_pd_pair(s1, s2, problem.dim());
  const auto& tol = problem.tolerances();
  const double g = problem.gamma();
  const auto d = problem.dim();
  const Matrix eye = Matrix::Identity(d, d);
  const Matrix r1 = sqrtm_psd(s1, tol);
  const Matrix r2 = sqrtm_psd(s2, tol);
  // d/dS1 [-2 Tr (S2^{1/2} S1 S2^{1/2})^{1/2}] = -S2^{1/2} (S2^{1/2} S1 S2^{1/2})^{-1/2} S2^{1/2}
  const Matrix w1 = r2 * inv_sqrtm_spd(symmetrize(r2 * s1 * r2), tol) * r2;
  const Matrix w2 = r1 * inv_sqrtm_spd(symmetrize(r1 * s2 * r1), tol) * r1;
  CovarianceGradient grad;
  grad.d_s1 = symmetrize(-w1 + 0.5 * g * problem.alpha_inv() - 0.5 * g * inverse_spd(s1, tol) + eye);
  grad.d_s2 = symmetrize(-w2 + 0.5 * g * problem.beta_inv() - 0.5 * g * inverse_spd(s2, tol) + eye);
  return grad;
}

double eval_psi(double c, const UotProblem& problem) { return psi(c, problem.mass_params()); }

std::pair<Vector, Vector> solve_means(const UotProblem& problem) {
  const auto d = problem.dim();
  const double g = problem.gamma();
  const Matrix eye = Matrix::Identity(d, d);
  Matrix h(2 * d, 2 * d);
  h << 2.0 * eye + g * problem.alpha_inv(), -2.0 * eye, -2.0 * eye, 2.0 * eye + g * problem.beta_inv();
  Vector rhs(2 * d);
  rhs << g * problem.alpha_inv() * problem.alpha().mean(), g * problem.beta_inv() * problem.beta().mean();
  const Eigen::LLT<Matrix> llt(h);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::SingularSystem, "mean stationarity system");
  const Vector z = llt.solve(rhs);
  return {z.head(d), z.tail(d)};
}

CovarianceResult solve_covariances(const UotProblem& problem, const CovarianceOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const auto& tol = problem.tolerances();
  constexpr double kClip = 1e-10;
  constexpr double kArmijo = 1e-4;

  Matrix s1 = options.initial ? symmetrize(options.initial->first) : problem.alpha().cov();
  Matrix s2 = options.initial ? symmetrize(options.initial->second) : problem.beta().cov();
  require_pd_pair(s1, s2, problem.dim());

  double f = c_value_or_inf(s1, s2, problem);
  CovarianceGradient grad = grad_C(s1, s2, problem);
  double step = 1.0 / std::max(1.0, grad.norm());

  CovarianceResult out;
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    const double gnorm = grad.norm();
    if (gnorm <= tol.opt_tol) {
      out.report.converged = true;
      break;
    }
    Matrix n1, n2;
    double fn = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int halving = 0; halving < 80; ++halving) {
      n1 = clip_spd(s1 - step * grad.d_s1, kClip);
      n2 = clip_spd(s2 - step * grad.d_s2, kClip);
      fn = c_value_or_inf(n1, n2, problem);
      const double decrease = (grad.d_s1.cwiseProduct(s1 - n1).sum() + grad.d_s2.cwiseProduct(s2 - n2).sum());
      // Slack absorbs roundoff once the decrease falls below the objective's precision.
      const double slack = 64.0 * std::numeric_limits<double>::epsilon() * std::abs(f);
      if (fn <= f - kArmijo * decrease + slack) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    CovarianceGradient next = grad_C(n1, n2, problem);
    const double ss = (n1 - s1).squaredNorm() + (n2 - s2).squaredNorm();
    const double sy = (n1 - s1).cwiseProduct(next.d_s1 - grad.d_s1).sum() +
                      (n2 - s2).cwiseProduct(next.d_s2 - grad.d_s2).sum();
    const double yy = (next.d_s1 - grad.d_s1).squaredNorm() + (next.d_s2 - grad.d_s2).squaredNorm();
    if (sy > 0.0) {
      // Alternate the two Barzilai-Borwein step lengths.
      step = (it % 2 == 0) ? ss / sy : sy / yy;
    } else {
      step *= 2.0;
    }
    step = std::clamp(step, 1e-14, 1e14);
    s1 = std::move(n1);
    s2 = std::move(n2);
    f = fn;
    grad = std::move(next);
  }

  out.s1 = s1;
  out.s2 = s2;
  out.value = c_value_or_inf(s1, s2, problem);
  out.report.iterations = it;
  out.report.final_gradient_norm = grad.norm();
  out.report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!out.report.converged) {
    spdlog::warn("covariance descent stopped after {} iterations, gradient norm {:.3e}", it,
                 out.report.final_gradient_norm);
  } else {
    spdlog::debug("covariance descent converged in {} iterations", it);
  }
  return out;
}

double mass_star(double p_star, const UotProblem& problem) {
  return optimal_mass(p_star, problem.mass_params(), MassTerm::Psi);
}

UotSolution solve_uot(const UotProblem& problem, const CovarianceOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const auto [m1, m2] = solve_means(problem);
  CovarianceResult cov = solve_covariances(problem, options);

  UotSolution sol;
  sol.subproblem_value = eval_M(m1, m2, problem) + eval_C(cov.s1, cov.s2, problem);
  sol.mass = mass_star(sol.subproblem_value, problem);
  sol.marginal1 = GaussianMeasure(sol.mass, m1, cov.s1, problem.tolerances());
  sol.marginal2 = GaussianMeasure(sol.mass, m2, cov.s2, problem.tolerances());
  sol.map = optimal_affine_map(m1, cov.s1, m2, cov.s2, problem.tolerances());
  sol.objective = sol.mass * sol.subproblem_value + eval_psi(sol.mass, problem);
  sol.report = cov.report;
  sol.report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return sol;
}

double uot_objective(const GaussianMeasure& pi1, const GaussianMeasure& pi2, const UotProblem& problem) {
  if (std::abs(pi1.mass() - pi2.mass()) > 1e-12 * pi1.mass()) {
    throw Error(ErrorCode::InvalidArgument, "transported marginals must share their mass");
  }
  const double transport =
      pi1.mass() * gelbrich_w2sq(pi1.mean(), pi1.cov(), pi2.mean(), pi2.cov(), problem.tolerances());
  return transport + problem.gamma() * (kl_gaussian(pi1, problem.alpha()) + kl_gaussian(pi2, problem.beta()));
}

}  // namespace uotdc
