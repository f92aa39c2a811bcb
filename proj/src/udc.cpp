#include "uotdc/udc.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "uotdc/error.hpp"

namespace uotdc {

void LinearSystem::validate() const {
  if (A.rows() == 0 || A.rows() != A.cols()) throw Error(ErrorCode::DimensionMismatch, "A must be square");
  if (B.rows() != A.rows() || B.cols() == 0) throw Error(ErrorCode::DimensionMismatch, "B must have as many rows as A");
  if (horizon < 2) throw Error(ErrorCode::InvalidArgument, "horizon must be at least 2");
  if (!A.allFinite() || !B.allFinite()) throw Error(ErrorCode::InvalidArgument, "non-finite dynamics");
}

UdcProblem::UdcProblem(LinearSystem system, GaussianMeasure alpha, GaussianMeasure beta, double gamma,
                       MassTerm mass_term, const Tolerances& tol)
    : system_(std::move(system)),
      alpha_(std::move(alpha)),
      beta_(std::move(beta)),
      gamma_(gamma),
      mass_term_(mass_term),
      tol_(tol) {
  tol_.validate();
  system_.validate();
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw Error(ErrorCode::InvalidArgument, "gamma must be positive");
  if (alpha_.dim() != system_.state_dim() || beta_.dim() != system_.state_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "reference dimension differs from the state dimension");
  }
  alpha_.require_reference("alpha");
  beta_.require_reference("beta");
  alpha_inv_ = inverse_spd(alpha_.cov(), tol_);
  beta_inv_ = inverse_spd(beta_.cov(), tol_);
  mass_ = MassParams::from_references(alpha_, beta_, gamma_);
}

std::pair<GaussianMeasure, AffinePolicy> policy_from_joint_moments(std::span<const JointMoments> moments,
                                                                   double mass, const LinearSystem& system,
                                                                   const Tolerances& tol) {
  system.validate();
  if (static_cast<int>(moments.size()) != system.steps()) {
    throw Error(ErrorCode::DimensionMismatch, "need one joint moment record per control step");
  }
  const auto d = system.state_dim();
  const auto p = system.input_dim();
  AffinePolicy policy;
  for (const auto& jm : moments) {
    if (jm.state_mean.size() != d || jm.state_cov.rows() != d || jm.control_mean.size() != p ||
        jm.control_cov.rows() != p || jm.cross_cov.rows() != p || jm.cross_cov.cols() != d) {
      throw Error(ErrorCode::DimensionMismatch, "joint moment shapes");
    }
    if (min_eigenvalue(jm.state_cov) <= 1e-12) {
      throw Error(ErrorCode::SingularStateCov, "state covariance is singular");
    }
    const Matrix k = jm.cross_cov * inverse_spd(jm.state_cov, tol);
    Matrix schur = symmetrize(jm.control_cov - k * jm.cross_cov.transpose());
    const double floor = tol.psd_tol * std::max(1.0, jm.control_cov.cwiseAbs().maxCoeff());
    if (p > 0 && min_eigenvalue(schur) < -floor) {
      throw Error(ErrorCode::NegativeSchurComplement, "control covariance minus explained part is not PSD");
    }
    policy.gains.push_back(k);
    policy.feedforward.push_back(jm.control_mean);
    policy.noise_covs.push_back(std::move(schur));
    policy.means.push_back(jm.state_mean);
  }
  const auto& last = moments.back();
  policy.means.push_back(system.A * last.state_mean + system.B * last.control_mean);
  GaussianMeasure initial(mass, moments.front().state_mean, moments.front().state_cov, tol);
  return {std::move(initial), std::move(policy)};
}

MeanTrajectory solve_mean_trajectory(const UdcProblem& problem) {
  const auto& sys = problem.system();
  const auto d = sys.state_dim();
  const auto p = sys.input_dim();
  const int steps = sys.steps();
  const Eigen::Index n = d + steps * p;
  const double g = problem.gamma();

  // m_T = G z with z = (m_1, v_1, ..., v_{T-1}).
  Matrix G(d, n);
  Matrix power = Matrix::Identity(d, d);
  for (int k = steps - 1; k >= 0; --k) {
    G.block(0, d + k * p, d, p) = power * sys.B;
    power = power * sys.A;
  }
  G.leftCols(d) = power;

  Matrix H = Matrix::Zero(n, n);
  H.bottomRightCorner(n - d, n - d) = 2.0 * Matrix::Identity(n - d, n - d);
  H.topLeftCorner(d, d) += g * problem.alpha_inv();
  H += g * G.transpose() * problem.beta_inv() * G;
  Vector rhs = g * G.transpose() * (problem.beta_inv() * problem.beta().mean());
  rhs.head(d) += g * problem.alpha_inv() * problem.alpha().mean();

  const Eigen::LLT<Matrix> llt(symmetrize(H));
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::SingularSystem, "mean normal equations");
  const Vector z = llt.solve(rhs);

  MeanTrajectory out;
  out.residual = (H * z - rhs).norm();
  out.means.push_back(z.head(d));
  for (int k = 0; k < steps; ++k) {
    out.feedforward.push_back(z.segment(d + k * p, p));
    out.means.push_back(sys.A * out.means.back() + sys.B * out.feedforward.back());
  }
  const Vector e1 = out.means.front() - problem.alpha().mean();
  const Vector eT = out.means.back() - problem.beta().mean();
  out.value = z.tail(n - d).squaredNorm() +
              0.5 * g * (e1.dot(problem.alpha_inv() * e1) + eT.dot(problem.beta_inv() * eT));
  return out;
}

namespace {

// Symmetric basis: E_ii, or E_ij + E_ji for i < j, enumerated column by column over the upper triangle.
std::vector<std::pair<Eigen::Index, Eigen::Index>> sym_pairs(Eigen::Index n) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i <= j; ++i) out.emplace_back(i, j);
  }
  return out;
}

Matrix sym_basis(Eigen::Index n, std::pair<Eigen::Index, Eigen::Index> ij) {
  Matrix e = Matrix::Zero(n, n);
  e(ij.first, ij.second) = 1.0;
  e(ij.second, ij.first) = 1.0;
  return e;
}

Matrix embed(Eigen::Index q, Eigen::Index row, Eigen::Index col, const Matrix& block) {
  Matrix out = Matrix::Zero(q, q);
  out.block(row, col, block.rows(), block.cols()) = block;
  return out;
}

}  // namespace

CovarianceProgram::CovarianceProgram(const UdcProblem& problem)
    : problem_(&problem),
      program_(0),
      d_(problem.system().state_dim()),
      p_(problem.system().input_dim()) {
  const auto& sys = problem.system();
  const int steps = sys.steps();
  const auto d = d_;
  const auto p = p_;
  const auto q = d + p;
  n_sigma1_ = static_cast<int>(d * (d + 1) / 2);
  block_ = static_cast<int>(p * d + p * (p + 1) / 2);
  const int n = n_sigma1_ + steps * block_;
  program_ = LogDetProgram(n);
  const double g = problem.gamma();

  const auto dpairs = sym_pairs(d);
  const auto ppairs = sym_pairs(p);

  // coef[i] is d Sigma_k / d x_i for the current k; only the first `active` variables matter.
  std::vector<Matrix> coef;
  for (const auto& ij : dpairs) coef.push_back(sym_basis(d, ij));

  AffineMatrix sigma1_term;
  sigma1_term.constant = Matrix::Zero(d, d);
  for (int i = 0; i < n_sigma1_; ++i) {
    sigma1_term.vars.push_back(i);
    sigma1_term.coefficients.push_back(coef[i]);
    program_.linear()[i] += 0.5 * g * (problem.alpha_inv() * coef[i]).trace();
  }
  program_.add_objective_term(0.5 * g, std::move(sigma1_term));

  for (int k = 0; k < steps; ++k) {
    const int active = n_sigma1_ + k * block_;
    const int s_off = active;
    const int y_off = active + static_cast<int>(p * d);

    AffineMatrix lmi;
    lmi.constant = Matrix::Zero(q, q);
    for (int i = 0; i < active; ++i) {
      lmi.vars.push_back(i);
      lmi.coefficients.push_back(embed(q, p, p, coef[i]));
    }
    for (Eigen::Index c = 0; c < d; ++c) {
      for (Eigen::Index r = 0; r < p; ++r) {
        Matrix e = Matrix::Zero(p, d);
        e(r, c) = 1.0;
        Matrix z = Matrix::Zero(q, q);
        z.block(0, p, p, d) = e;
        z.block(p, 0, d, p) = e.transpose();
        lmi.vars.push_back(s_off + static_cast<int>(r + c * p));
        lmi.coefficients.push_back(std::move(z));
      }
    }
    for (std::size_t t = 0; t < ppairs.size(); ++t) {
      const Matrix e = sym_basis(p, ppairs[t]);
      lmi.vars.push_back(y_off + static_cast<int>(t));
      lmi.coefficients.push_back(embed(q, 0, 0, e));
      program_.linear()[y_off + static_cast<int>(t)] += e.trace();
    }
    program_.add_constraint(std::move(lmi));

    // Sigma_{k+1} = A Sigma_k A^T + B S_k A^T + A S_k^T B^T + B Y_k B^T.
    std::vector<Matrix> next;
    next.reserve(active + block_);
    for (int i = 0; i < active; ++i) next.push_back(sys.A * coef[i] * sys.A.transpose());
    for (Eigen::Index c = 0; c < d; ++c) {
      for (Eigen::Index r = 0; r < p; ++r) {
        Matrix e = Matrix::Zero(p, d);
        e(r, c) = 1.0;
        const Matrix bsa = sys.B * e * sys.A.transpose();
        next.push_back(bsa + bsa.transpose());
      }
    }
    for (const auto& ij : ppairs) next.push_back(sys.B * sym_basis(p, ij) * sys.B.transpose());
    coef = std::move(next);
  }

  AffineMatrix terminal;
  terminal.constant = Matrix::Zero(d, d);
  for (int i = 0; i < n; ++i) {
    if (coef[i].cwiseAbs().maxCoeff() == 0.0) continue;
    terminal.vars.push_back(i);
    program_.linear()[i] += 0.5 * g * (problem.beta_inv() * coef[i]).trace();
    terminal.coefficients.push_back(std::move(coef[i]));
  }
  program_.add_objective_term(0.5 * g, std::move(terminal));
}

Vector CovarianceProgram::pack(const Matrix& sigma1, std::span<const Matrix> S, std::span<const Matrix> Y) const {
  const int steps = problem_->system().steps();
  if (static_cast<int>(S.size()) != steps || static_cast<int>(Y.size()) != steps) {
    throw Error(ErrorCode::DimensionMismatch, "one S_k and Y_k per step");
  }
  Vector x(num_vars());
  int idx = 0;
  for (const auto& [i, j] : sym_pairs(d_)) x[idx++] = 0.5 * (sigma1(i, j) + sigma1(j, i));
  for (int k = 0; k < steps; ++k) {
    for (Eigen::Index c = 0; c < d_; ++c) {
      for (Eigen::Index r = 0; r < p_; ++r) x[idx++] = S[k](r, c);
    }
    for (const auto& [i, j] : sym_pairs(p_)) x[idx++] = 0.5 * (Y[k](i, j) + Y[k](j, i));
  }
  return x;
}

SdpVariables CovarianceProgram::unpack(const Vector& x) const {
  const auto& sys = problem_->system();
  const int steps = sys.steps();
  SdpVariables v;
  int idx = 0;
  Matrix sigma = Matrix::Zero(d_, d_);
  for (const auto& [i, j] : sym_pairs(d_)) sigma(i, j) = sigma(j, i) = x[idx++];
  v.covs.push_back(sigma);
  for (int k = 0; k < steps; ++k) {
    Matrix s(p_, d_);
    for (Eigen::Index c = 0; c < d_; ++c) {
      for (Eigen::Index r = 0; r < p_; ++r) s(r, c) = x[idx++];
    }
    Matrix y(p_, p_);
    for (const auto& [i, j] : sym_pairs(p_)) y(i, j) = y(j, i) = x[idx++];
    const Matrix bsa = sys.B * s * sys.A.transpose();
    v.covs.push_back(symmetrize(sys.A * v.covs.back() * sys.A.transpose() + bsa + bsa.transpose() +
                                sys.B * y * sys.B.transpose()));
    v.S.push_back(std::move(s));
    v.Y.push_back(std::move(y));
  }
  return v;
}

Vector CovarianceProgram::start_from_policy(const Matrix& sigma1, std::span<const Matrix> gains,
                                            std::span<const Matrix> noise_covs) const {
  const auto& sys = problem_->system();
  std::vector<Matrix> S;
  std::vector<Matrix> Y;
  Matrix sigma = symmetrize(sigma1);
  for (int k = 0; k < sys.steps(); ++k) {
    S.push_back(gains[k] * sigma);
    Y.push_back(symmetrize(gains[k] * sigma * gains[k].transpose() + noise_covs[k]));
    const Matrix closed = sys.A + sys.B * gains[k];
    sigma = symmetrize(closed * sigma * closed.transpose() + sys.B * noise_covs[k] * sys.B.transpose());
  }
  return pack(sigma1, S, Y);
}

Vector CovarianceProgram::default_start() const {
  const auto& sys = problem_->system();
  Matrix ab(d_, d_ + p_);
  ab << sys.A, sys.B;
  if (Eigen::ColPivHouseholderQR<Matrix>(ab).rank() < d_) {
    throw Error(ErrorCode::InfeasibleDynamics, "[A B] is rank deficient; no trajectory stays positive definite");
  }
  const Matrix& sa = problem_->alpha().cov();
  const double scale = sa.trace() / static_cast<double>(d_);
  std::vector<Matrix> gains(sys.steps(), Matrix::Zero(p_, d_));
  std::vector<Matrix> noise(sys.steps(), scale * Matrix::Identity(p_, p_));
  Vector x = start_from_policy(sa, gains, noise);
  if (!program_.feasible(x)) {
    throw Error(ErrorCode::InfeasibleDynamics, "open-loop start does not keep the covariance positive definite");
  }
  return x;
}

CovarianceProgramResult solve_covariance_program(const UdcProblem& problem, const CovarianceProgramOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  CovarianceProgram cp(problem);
  const Vector x0 = options.initial ? *options.initial : cp.default_start();
  BarrierOptions barrier = options.barrier;
  barrier.newton_tol = std::min(barrier.newton_tol, problem.tolerances().grad_tol);
  const BarrierResult br = minimize_barrier(cp.program(), x0, barrier);

  CovarianceProgramResult out;
  out.vars = cp.unpack(br.x);
  out.value = br.objective;
  out.report.iterations = br.newton_steps;
  out.report.final_gradient_norm = std::sqrt(std::max(0.0, br.final_decrement));
  out.report.converged = br.converged;
  double lmi_min = std::numeric_limits<double>::infinity();
  for (const auto& block : cp.program().constraints()) {
    lmi_min = std::min(lmi_min, min_eigenvalue(block.evaluate(br.x)));
  }
  out.lmi_min_eigenvalue = lmi_min;
  out.report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!br.converged) spdlog::warn("covariance program did not converge ({} Newton steps)", br.newton_steps);
  return out;
}

std::pair<std::vector<Matrix>, std::vector<Matrix>> recover_policy(std::span<const Matrix> covs,
                                                                   std::span<const Matrix> S,
                                                                   std::span<const Matrix> Y,
                                                                   const Tolerances& tol) {
  if (S.size() != Y.size() || covs.size() < S.size()) {
    throw Error(ErrorCode::DimensionMismatch, "recover_policy needs matching step counts");
  }
  std::vector<Matrix> gains;
  std::vector<Matrix> noise;
  for (std::size_t k = 0; k < S.size(); ++k) {
    if (min_eigenvalue(covs[k]) <= 1e-12) {
      throw Error(ErrorCode::SingularStateCov, "Sigma_" + std::to_string(k + 1) + " is singular");
    }
    const Matrix k_gain = S[k] * inverse_spd(covs[k], tol);
    Matrix schur = symmetrize(Y[k] - k_gain * S[k].transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(schur);
    const double floor = tol.psd_tol * std::max(1.0, Y[k].cwiseAbs().maxCoeff());
    if (es.eigenvalues().minCoeff() < -floor) {
      throw Error(ErrorCode::NegativeSchurComplement,
                  "Y_k - S_k Sigma_k^{-1} S_k^T has eigenvalue " + std::to_string(es.eigenvalues().minCoeff()));
    }
    if (es.eigenvalues().minCoeff() < 0.0) {
      // Roundoff-level negatives are clipped so the noise covariance is exactly PSD.
      const Vector ev = es.eigenvalues().cwiseMax(0.0);
      schur = symmetrize(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
    }
    gains.push_back(k_gain);
    noise.push_back(std::move(schur));
  }
  return {std::move(gains), std::move(noise)};
}

double udc_mass_star(double q_star, const UdcProblem& problem, MassTerm term) {
  return optimal_mass(q_star, problem.mass_params(), term);
}

double udc_mass_star(double q_star, const UdcProblem& problem) {
  return udc_mass_star(q_star, problem, problem.mass_term());
}

MomentTrajectory propagate(const LinearSystem& system, const Vector& m1, const Matrix& sigma1,
                           const AffinePolicy& policy) {
  system.validate();
  const auto d = system.state_dim();
  const auto p = system.input_dim();
  if (m1.size() != d || sigma1.rows() != d || sigma1.cols() != d || policy.steps() != system.steps() ||
      policy.feedforward.size() != policy.gains.size() || policy.noise_covs.size() != policy.gains.size()) {
    throw Error(ErrorCode::DimensionMismatch, "propagate: policy does not match the system");
  }
  MomentTrajectory out;
  out.means.push_back(m1);
  out.covs.push_back(symmetrize(sigma1));
  for (int k = 0; k < system.steps(); ++k) {
    const auto& K = policy.gains[k];
    if (K.rows() != p || K.cols() != d || policy.feedforward[k].size() != p || policy.noise_covs[k].rows() != p) {
      throw Error(ErrorCode::DimensionMismatch, "propagate: policy step shape");
    }
    const Matrix closed = system.A + system.B * K;
    out.means.push_back(system.A * out.means.back() + system.B * policy.feedforward[k]);
    out.covs.push_back(symmetrize(closed * out.covs.back() * closed.transpose() +
                                  system.B * policy.noise_covs[k] * system.B.transpose()));
  }
  return out;
}

std::vector<double> expected_step_costs(const MomentTrajectory& trajectory, const AffinePolicy& policy) {
  std::vector<double> out;
  for (int k = 0; k < policy.steps(); ++k) {
    const auto& K = policy.gains[k];
    out.push_back(policy.feedforward[k].squaredNorm() + (K * trajectory.covs[k] * K.transpose()).trace() +
                  policy.noise_covs[k].trace());
  }
  return out;
}

double expected_control_cost(const MomentTrajectory& trajectory, const AffinePolicy& policy) {
  double total = 0.0;
  for (double c : expected_step_costs(trajectory, policy)) total += c;
  return total;
}

double udc_objective(double mass, const MomentTrajectory& trajectory, const AffinePolicy& policy,
                     const UdcProblem& problem) {
  const GaussianMeasure first(mass, trajectory.means.front(), trajectory.covs.front(), problem.tolerances());
  const GaussianMeasure last(mass, trajectory.means.back(), trajectory.covs.back(), problem.tolerances());
  return mass * expected_control_cost(trajectory, policy) +
         problem.gamma() * (kl_gaussian(first, problem.alpha()) + kl_gaussian(last, problem.beta()));
}

UdcSolution solve_udc(const UdcProblem& problem, const CovarianceProgramOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const MeanTrajectory means = solve_mean_trajectory(problem);
  const CovarianceProgramResult cov = solve_covariance_program(problem, options);
  auto [gains, noise] = recover_policy(cov.vars.covs, cov.vars.S, cov.vars.Y, problem.tolerances());

  UdcSolution sol;
  sol.policy.gains = std::move(gains);
  sol.policy.noise_covs = std::move(noise);
  sol.policy.feedforward = means.feedforward;
  sol.policy.means = means.means;
  sol.trajectory = propagate(problem.system(), means.means.front(), cov.vars.covs.front(), sol.policy);
  for (std::size_t k = 0; k < cov.vars.covs.size(); ++k) {
    sol.trajectory_residual = std::max(
        sol.trajectory_residual, (sol.trajectory.covs[k] - cov.vars.covs[k]).cwiseAbs().maxCoeff());
  }
  if (sol.trajectory_residual > 1e-7) {
    spdlog::warn("policy round trip deviates from the program trajectory by {:.3e}", sol.trajectory_residual);
  }
  sol.mean_value = means.value;
  sol.covariance_value = cov.value;
  sol.subproblem_value = means.value + cov.value;
  const MassTerm term = problem.mass_term();
  const MassTerm other = term == MassTerm::Psi ? MassTerm::GammaPsi : MassTerm::Psi;
  sol.mass = udc_mass_star(sol.subproblem_value, problem, term);
  sol.alternate_mass = udc_mass_star(sol.subproblem_value, problem, other);
  sol.objective = mass_objective(sol.mass, sol.subproblem_value, problem.mass_params(), term);
  sol.report = cov.report;
  sol.report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return sol;
}

}  // namespace uotdc
