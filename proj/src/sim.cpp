#include "uotdc/sim.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "uotdc/error.hpp"

namespace uotdc {

namespace {

constexpr std::int64_t kBlock = 512;

struct BlockSums {
  std::vector<Vector> state;      // sum of (x_k - m_k)
  std::vector<Matrix> state_sq;   // sum of (x_k - m_k)(x_k - m_k)^T
  std::vector<double> cost;       // sum |u_k|^2
  std::vector<double> cost_sq;    // sum |u_k|^4
  std::vector<Vector> control;    // sum of (u_k - v_k)
  std::vector<Matrix> control_sq;
  double total = 0.0;             // sum over trajectories of sum_k |u_k|^2
  double total_sq = 0.0;

  BlockSums(int horizon, Eigen::Index d, Eigen::Index p, bool controls)
      : state(horizon, Vector::Zero(d)),
        state_sq(horizon, Matrix::Zero(d, d)),
        cost(horizon - 1, 0.0),
        cost_sq(horizon - 1, 0.0) {
    if (controls) {
      control.assign(horizon - 1, Vector::Zero(p));
      control_sq.assign(horizon - 1, Matrix::Zero(p, p));
    }
  }

  void add(const BlockSums& o) {
    for (std::size_t k = 0; k < state.size(); ++k) {
      state[k] += o.state[k];
      state_sq[k] += o.state_sq[k];
    }
    for (std::size_t k = 0; k < cost.size(); ++k) {
      cost[k] += o.cost[k];
      cost_sq[k] += o.cost_sq[k];
    }
    for (std::size_t k = 0; k < control.size(); ++k) {
      control[k] += o.control[k];
      control_sq[k] += o.control_sq[k];
    }
    total += o.total;
    total_sq += o.total_sq;
  }
};

struct Rollout {
  const LinearSystem& system;
  const Vector& m1;
  Matrix init_factor;
  std::vector<Matrix> noise_factors;
  const AffinePolicy& policy;
  const SimConfig& config;

  BlockSums run_block(std::int64_t block) const {
    const auto d = system.state_dim();
    const auto p = system.input_dim();
    const int steps = system.steps();
    const std::int64_t first = block * kBlock;
    const std::int64_t count = std::min(kBlock, config.sample_count - first);
    const auto nb = static_cast<Eigen::Index>(count);

    Matrix z(d + steps * p, nb);
    for (Eigen::Index j = 0; j < nb; ++j) {
      const auto index = static_cast<std::uint64_t>(first + j);
      std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                        static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
      std::mt19937_64 rng(seq);
      std::normal_distribution<double> normal;
      for (Eigen::Index r = 0; r < z.rows(); ++r) z(r, j) = normal(rng);
    }

    BlockSums sums(system.horizon, d, p, config.record_controls);
    Matrix x = (init_factor * z.topRows(d)).colwise() + m1;
    Vector traj_cost = Vector::Zero(nb);
    for (int k = 0; k < steps; ++k) {
      const Matrix dev = x.colwise() - policy.means[k];
      sums.state[k] += dev.rowwise().sum();
      sums.state_sq[k] += dev * dev.transpose();
      const Matrix centred_u = policy.gains[k] * dev + noise_factors[k] * z.middleRows(d + k * p, p);
      const Matrix u = centred_u.colwise() + policy.feedforward[k];
      const Vector effort = u.colwise().squaredNorm().transpose();
      sums.cost[k] += effort.sum();
      sums.cost_sq[k] += effort.squaredNorm();
      traj_cost += effort;
      if (config.record_controls) {
        sums.control[k] += centred_u.rowwise().sum();
        sums.control_sq[k] += centred_u * centred_u.transpose();
      }
      x = system.A * x + system.B * u;
    }
    const Matrix dev = x.colwise() - policy.means[steps];
    sums.state[steps] += dev.rowwise().sum();
    sums.state_sq[steps] += dev * dev.transpose();
    sums.total = traj_cost.sum();
    sums.total_sq = traj_cost.squaredNorm();
    return sums;
  }
};

void validate_inputs(const LinearSystem& system, const GaussianMeasure& initial, const AffinePolicy& policy,
                     const SimConfig& config) {
  config.validate();
  system.validate();
  const auto d = system.state_dim();
  const auto p = system.input_dim();
  if (initial.dim() != d || policy.steps() != system.steps() ||
      static_cast<int>(policy.means.size()) != system.horizon ||
      policy.feedforward.size() != policy.gains.size() || policy.noise_covs.size() != policy.gains.size()) {
    throw Error(ErrorCode::DimensionMismatch, "simulate: policy does not match the system");
  }
  for (int k = 0; k < policy.steps(); ++k) {
    if (policy.gains[k].rows() != p || policy.gains[k].cols() != d || policy.feedforward[k].size() != p ||
        policy.noise_covs[k].rows() != p || policy.noise_covs[k].cols() != p) {
      throw Error(ErrorCode::DimensionMismatch, "simulate: policy step shapes");
    }
  }
}

EmpiricalMoments finalize(const BlockSums& s, const AffinePolicy& policy, const SimConfig& config) {
  EmpiricalMoments out;
  const auto n = static_cast<double>(config.sample_count);
  out.samples = config.sample_count;
  const double denom = config.sample_count > 1 ? n - 1.0 : 1.0;
  for (std::size_t k = 0; k < s.state.size(); ++k) {
    const Vector shift = s.state[k] / n;
    out.means.push_back(policy.means[k] + shift);
    out.covs.push_back(symmetrize((s.state_sq[k] - n * shift * shift.transpose()) / denom));
  }
  for (std::size_t k = 0; k < s.cost.size(); ++k) {
    const double mean = s.cost[k] / n;
    const double var = std::max(0.0, (s.cost_sq[k] - n * mean * mean) / denom);
    out.step_costs.push_back(mean);
    out.step_cost_se.push_back(std::sqrt(var / n));
  }
  out.control_cost = s.total / n;
  out.control_cost_se = std::sqrt(std::max(0.0, (s.total_sq - n * out.control_cost * out.control_cost) / denom) / n);
  for (std::size_t k = 0; k < s.control.size(); ++k) {
    const Vector shift = s.control[k] / n;
    out.control_means.push_back(policy.feedforward[k] + shift);
    out.control_covs.push_back(symmetrize((s.control_sq[k] - n * shift * shift.transpose()) / denom));
  }
  return out;
}

Rollout make_rollout(const LinearSystem& system, const GaussianMeasure& initial, const AffinePolicy& policy,
                     const SimConfig& config) {
  validate_inputs(system, initial, policy, config);
  Rollout r{system, initial.mean(), covariance_factor(initial.cov()), {}, policy, config};
  for (const auto& c : policy.noise_covs) r.noise_factors.push_back(covariance_factor(c));
  return r;
}

std::int64_t block_count(const SimConfig& config) { return (config.sample_count + kBlock - 1) / kBlock; }

}  // namespace

void SimConfig::validate() const {
  if (sample_count < 1) throw Error(ErrorCode::InvalidArgument, "sample_count must be at least 1");
}

Matrix covariance_factor(const Matrix& cov) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(cov));
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

EmpiricalMoments simulate(const LinearSystem& system, const GaussianMeasure& initial, const AffinePolicy& policy,
                          const SimConfig& config) {
  const Rollout rollout = make_rollout(system, initial, policy, config);
  const std::int64_t blocks = block_count(config);
  std::vector<BlockSums> partial(blocks, BlockSums(system.horizon, system.state_dim(), system.input_dim(),
                                                   config.record_controls));
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t b = 0; b < blocks; ++b) partial[b] = rollout.run_block(b);

  BlockSums total(system.horizon, system.state_dim(), system.input_dim(), config.record_controls);
  for (const auto& p : partial) total.add(p);
  return finalize(total, policy, config);
}

EmpiricalMoments simulate_serial(const LinearSystem& system, const GaussianMeasure& initial,
                                 const AffinePolicy& policy, const SimConfig& config) {
  const Rollout rollout = make_rollout(system, initial, policy, config);
  BlockSums total(system.horizon, system.state_dim(), system.input_dim(), config.record_controls);
  for (std::int64_t b = 0; b < block_count(config); ++b) total.add(rollout.run_block(b));
  return finalize(total, policy, config);
}

MomentCheck check_moments(const EmpiricalMoments& empirical, const MomentTrajectory& analytic,
                          const AffinePolicy& policy, double z_limit) {
  MomentCheck out;
  const auto n = static_cast<double>(empirical.samples);
  auto record = [&](double error, double se, const std::string& what) {
    ++out.checks;
    // Deterministic quantities have zero standard error; allow roundoff only.
    const double slack = 1e-9 * std::max(1.0, std::abs(error));
    const double z = se > 0.0 ? std::abs(error) / se : (std::abs(error) <= slack ? 0.0 : INFINITY);
    if (z > out.worst_z) {
      out.worst_z = z;
      out.worst = what;
    }
    if (z > z_limit) {
      ++out.failures;
      out.passed = false;
    }
  };
  for (std::size_t k = 0; k < analytic.means.size(); ++k) {
    const Matrix& cov = analytic.covs[k];
    for (Eigen::Index i = 0; i < cov.rows(); ++i) {
      std::ostringstream what;
      what << "mean k=" << k + 1 << " i=" << i;
      record(empirical.means[k][i] - analytic.means[k][i], std::sqrt(std::max(0.0, cov(i, i)) / n), what.str());
      for (Eigen::Index j = 0; j <= i; ++j) {
        std::ostringstream cw;
        cw << "cov k=" << k + 1 << " (" << i << "," << j << ")";
        const double var = std::max(0.0, cov(i, i) * cov(j, j) + cov(i, j) * cov(i, j));
        record(empirical.covs[k](i, j) - cov(i, j), std::sqrt(var / n), cw.str());
      }
    }
  }
  const std::vector<double> expected = expected_step_costs(analytic, policy);
  double total = 0.0;
  for (std::size_t k = 0; k < expected.size(); ++k) {
    record(empirical.step_costs[k] - expected[k], empirical.step_cost_se[k], "control cost k=" + std::to_string(k + 1));
    total += expected[k];
  }
  record(empirical.control_cost - total, empirical.control_cost_se, "total control cost");
  return out;
}

namespace {

// Standard error of c * KL(c N(m, S) | ref) under sampling of (m, S) from n draws.
double kl_standard_error(double mass, const Vector& m, const Matrix& s, const GaussianMeasure& ref, double n) {
  const Matrix ref_inv = inverse_spd(ref.cov());
  const Vector gm = ref_inv * (m - ref.mean());
  const Matrix gs = 0.5 * (ref_inv - inverse_spd(s));
  const double var = gm.dot(s * gm) + 2.0 * (gs * s * gs * s).trace();
  return mass * std::sqrt(std::max(0.0, var) / n);
}

}  // namespace

double empirical_objective(const EmpiricalMoments& moments, const UdcSolution& solution, const UdcProblem& problem) {
  const double c = solution.mass;
  const GaussianMeasure first(c, moments.means.front(), moments.covs.front(), problem.tolerances());
  const GaussianMeasure last(c, moments.means.back(), moments.covs.back(), problem.tolerances());
  return c * moments.control_cost +
         problem.gamma() * (kl_gaussian(first, problem.alpha()) + kl_gaussian(last, problem.beta()));
}

double empirical_objective_se(const EmpiricalMoments& moments, const UdcSolution& solution,
                              const UdcProblem& problem) {
  const double c = solution.mass;
  const auto n = static_cast<double>(moments.samples);
  return c * moments.control_cost_se +
         problem.gamma() * (kl_standard_error(c, moments.means.front(), moments.covs.front(), problem.alpha(), n) +
                            kl_standard_error(c, moments.means.back(), moments.covs.back(), problem.beta(), n));
}

}  // namespace uotdc
