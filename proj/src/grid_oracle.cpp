#include "uotdc/grid_oracle.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "uotdc/error.hpp"

namespace uotdc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Vector log_weights(const Vector& w) {
  return w.unaryExpr([](double x) { return x > 0.0 ? std::log(x) : kNegInf; });
}

double log_sum_exp(const Vector& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

RowMatrix squared_distances(const Matrix& x, const Matrix& y) {
  RowMatrix c(x.rows(), y.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < y.rows(); ++j) c(i, j) = (x.row(i) - y.row(j)).squaredNorm();
  }
  return c;
}

double kl_weights(const Vector& p, const Vector& q) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) {
      if (!(q[i] > 0.0)) throw Error(ErrorCode::SupportViolation, "p has mass where q vanishes");
      sum += p[i] * std::log(p[i] / q[i]);
    }
    sum += q[i] - p[i];
  }
  return sum;
}

}  // namespace

Vector GridMeasure::mean() const {
  return (points.transpose() * weights) / mass();
}

Matrix GridMeasure::cov() const {
  const Vector m = mean();
  const Matrix centred = points.rowwise() - m.transpose();
  return symmetrize(centred.transpose() * weights.asDiagonal() * centred / mass());
}

void GridMeasure::validate() const {
  if (points.rows() != weights.size()) throw Error(ErrorCode::DimensionMismatch, "grid points vs weights");
  if ((weights.array() < 0.0).any()) throw Error(ErrorCode::InvalidArgument, "negative grid weight");
  if (!(mass() > 0.0)) throw Error(ErrorCode::NonPositiveMass, "grid measure has no mass");
}

GridMeasure uniform_grid(int dim, double lo, double hi, int n) {
  if (dim != 1 && dim != 2) throw Error(ErrorCode::InvalidArgument, "grid oracle supports d = 1 or 2");
  if (!(lo < hi)) throw Error(ErrorCode::InvalidArgument, "grid requires lo < hi");
  if (n < 8) throw Error(ErrorCode::InvalidArgument, "grid requires at least 8 cells per axis");
  if (dim == 2 && n > 64) throw Error(ErrorCode::InvalidArgument, "2-D grids are limited to 64 cells per axis");
  const double h = (hi - lo) / n;
  GridMeasure grid;
  grid.spacing = h;
  const Eigen::Index cells = dim == 1 ? n : static_cast<Eigen::Index>(n) * n;
  grid.points.resize(cells, dim);
  grid.weights = Vector::Zero(cells);
  for (Eigen::Index c = 0; c < cells; ++c) {
    const Eigen::Index i = c % n;
    grid.points(c, 0) = lo + (static_cast<double>(i) + 0.5) * h;
    if (dim == 2) grid.points(c, 1) = lo + (static_cast<double>(c / n) + 0.5) * h;
  }
  return grid;
}

GridMeasure discretize(const GaussianMeasure& g, double lo, double hi, int n) {
  const int dim = static_cast<int>(g.dim());
  GridMeasure grid = uniform_grid(dim, lo, hi, n);
  for (int axis = 0; axis < dim; ++axis) {
    const double sd = std::sqrt(g.cov()(axis, axis));
    const double reach = std::min(g.mean()[axis] - lo, hi - g.mean()[axis]) / sd;
    if (reach < 4.0) {
      throw Error(ErrorCode::DomainTooNarrow, "grid [" + std::to_string(lo) + ", " + std::to_string(hi) +
                                                  "] covers only " + std::to_string(reach) + " standard deviations");
    }
    if (reach < 6.0) spdlog::warn("grid covers only {:.2f} standard deviations of the measure", reach);
  }
  const double cell = std::pow(grid.spacing, dim);
  for (Eigen::Index c = 0; c < grid.size(); ++c) {
    grid.weights[c] = g.mass() * gaussian_pdf(grid.points.row(c).transpose(), g.mean(), g.cov()) * cell;
  }
  return grid;
}

double discrete_kl(const GridMeasure& p, const GridMeasure& q) {
  if (p.size() != q.size() || p.dim() != q.dim() || (p.points - q.points).cwiseAbs().maxCoeff() > 1e-12) {
    throw Error(ErrorCode::DimensionMismatch, "discrete_kl requires both measures on the same grid");
  }
  return kl_weights(p.weights, q.weights);
}

DiscreteUotResult solve_discrete_uot(const GridMeasure& a, const GridMeasure& b, double gamma, double epsilon,
                                     const DiscreteUotOptions& options) {
  a.validate();
  b.validate();
  if (a.dim() != b.dim()) throw Error(ErrorCode::DimensionMismatch, "grids of different dimension");
  if (!(gamma > 0.0) || !(epsilon > 0.0)) throw Error(ErrorCode::InvalidArgument, "gamma and epsilon must be positive");

  const RowMatrix cost = squared_distances(a.points, b.points);
  const RowMatrix cost_t = cost.transpose();
  const Vector la = log_weights(a.weights);
  const Vector lb = log_weights(b.weights);
  const double tau = gamma / (gamma + epsilon);

  auto build = options.parallel ? kernels::gibbs_kernel : kernels::gibbs_kernel_serial;
  auto mul = options.parallel ? kernels::matvec : kernels::matvec_serial;

  Vector f = Vector::Zero(a.size());
  Vector g = Vector::Zero(b.size());
  if (options.warm_start) {
    f = options.warm_start->first;
    g = options.warm_start->second;
    if (f.size() != a.size() || g.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "warm start");
  }

  // Optimal translation (f + l, g - l) of the dual: l = gamma/2 log(sum a e^{-f/gamma} / sum b e^{-g/gamma}).
  auto translate = [&](Vector& fv, Vector& gv) {
    const double la_sum = log_sum_exp(la - fv / gamma);
    const double lb_sum = log_sum_exp(lb - gv / gamma);
    const double shift = 0.5 * gamma * (la_sum - lb_sum);
    fv.array() += shift;
    gv.array() -= shift;
  };

  // Scaling-domain iterations against the kernel at absorbed potentials (f0, g0); the potentials are
  // absorbed into the kernel whenever the scalings exp((f - f0) / eps) leave [e^-30, e^30].
  Vector f0;
  Vector g0;
  RowMatrix kernel;
  RowMatrix kernel_t;
  int absorptions = 0;
  long fallbacks = 0;
  auto absorb = [&] {
    ++absorptions;
    f0 = f;
    g0 = g;
    build(cost, la, lb, f0, g0, epsilon, kernel);
    kernel_t = kernel.transpose();
  };
  auto drifted = [&] {
    return std::max((f - f0).cwiseAbs().maxCoeff(), (g - g0).cwiseAbs().maxCoeff()) > 30.0 * epsilon;
  };
  Vector scaling;
  Vector row_sums;
  // self_i = -tau eps log sum_j w_j exp((other_j - cost_ij) / eps); rows whose kernel row underflows are
  // recomputed in the log domain, rows of empty cells are skipped.
  auto update = [&](const RowMatrix& k, const RowMatrix& c, const Vector& log_other, const Vector& other,
                    const Vector& other0, const Vector& log_self, const Vector& self0, Vector& self) {
    scaling = ((other - other0) / epsilon).array().exp();
    mul(k, scaling, row_sums);
    for (Eigen::Index i = 0; i < self.size(); ++i) {
      if (log_self[i] == kNegInf) continue;
      const double y = row_sums[i];
      if (y > 0.0 && std::isfinite(y)) {
        self[i] = -tau * (epsilon * (std::log(y) - log_self[i]) - self0[i]);
      } else {
        self[i] = kernels::softmin_row(c, i, log_other, other, epsilon, tau);
        ++fallbacks;
      }
    }
  };

  absorb();
  DiscreteUotResult res;
  Vector f_prev;
  Vector g_prev;
  for (res.iterations = 0; res.iterations < options.max_iterations;) {
    f_prev = f;
    g_prev = g;
    if (drifted()) absorb();
    update(kernel, cost, lb, g, g0, la, f0, f);
    translate(f, g);
    if (drifted()) absorb();
    update(kernel_t, cost_t, la, f, f0, lb, g0, g);
    translate(f, g);
    ++res.iterations;
    const double change = std::max((f - f_prev).cwiseAbs().maxCoeff(), (g - g_prev).cwiseAbs().maxCoeff()) / epsilon;
    if (!std::isfinite(change)) throw Error(ErrorCode::InvalidArgument, "Sinkhorn potentials diverged");
    if (change < options.tolerance) {
      res.converged = true;
      break;
    }
  }
  spdlog::debug("Sinkhorn eps={:.3g}: {} iterations, {} absorptions, {} log-domain rows", epsilon, res.iterations,
                absorptions, fallbacks);
  if (!res.converged) {
    spdlog::warn("Sinkhorn stopped after {} iterations without reaching tolerance {:.1e}", res.iterations,
                 options.tolerance);
  }

  kernels::PlanRows rows;
  kernels::PlanRows cols;
  if (options.parallel) {
    kernels::plan_rows(cost, la, lb, f, g, epsilon, rows);
    kernels::plan_rows(cost_t, lb, la, g, f, epsilon, cols);
  } else {
    kernels::plan_rows_serial(cost, la, lb, f, g, epsilon, rows);
    kernels::plan_rows_serial(cost_t, lb, la, g, f, epsilon, cols);
  }

  res.marginal1 = GridMeasure{a.points, rows.mass, a.spacing};
  res.marginal2 = GridMeasure{b.points, cols.mass, b.spacing};
  res.transport = rows.transport.sum();
  res.kl1 = kl_weights(rows.mass, a.weights);
  res.kl2 = kl_weights(cols.mass, b.weights);
  res.objective = res.transport + gamma * (res.kl1 + res.kl2);
  res.entropy = epsilon * (rows.log_ratio.sum() - rows.mass.sum() + a.mass() * b.mass());
  if (options.keep_plan) {
    res.plan.weights.resize(a.size(), b.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      for (Eigen::Index j = 0; j < b.size(); ++j) {
        res.plan.weights(i, j) = std::exp(la[i] + lb[j] + (f[i] + g[j] - cost(i, j)) / epsilon);
      }
    }
  }
  res.f = std::move(f);
  res.g = std::move(g);
  return res;
}

double linear_extrapolate(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.empty() || x.size() != y.size()) throw Error(ErrorCode::InvalidArgument, "extrapolation needs paired data");
  if (x.size() == 1) return y.front();
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) return my;
  return my - (sxy / sxx) * mx;
}

namespace {

MomentSummary extrapolate_moments(const std::vector<double>& eps, const std::vector<const GridMeasure*>& m) {
  MomentSummary out;
  const auto d = m.front()->dim();
  std::vector<double> y(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) y[i] = m[i]->mass();
  out.mass = linear_extrapolate(eps, y);
  out.mean.resize(d);
  out.cov.resize(d, d);
  std::vector<Vector> means;
  std::vector<Matrix> covs;
  for (const auto* g : m) {
    means.push_back(g->mean());
    covs.push_back(g->cov());
  }
  for (Eigen::Index r = 0; r < d; ++r) {
    for (std::size_t i = 0; i < eps.size(); ++i) y[i] = means[i][r];
    out.mean[r] = linear_extrapolate(eps, y);
    for (Eigen::Index c = 0; c < d; ++c) {
      for (std::size_t i = 0; i < eps.size(); ++i) y[i] = covs[i](r, c);
      out.cov(r, c) = linear_extrapolate(eps, y);
    }
  }
  return out;
}

struct Gaps {
  double mass;
  double mean;
  double cov;
};

Gaps moment_gaps(const MomentSummary& got, const GaussianMeasure& want) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(want.cov(), Eigen::EigenvaluesOnly);
  const double scale = std::max(want.mean().norm(), std::sqrt(es.eigenvalues().maxCoeff()));
  return {std::abs(got.mass - want.mass()) / want.mass(), (got.mean - want.mean()).norm() / scale,
          (got.cov - want.cov()).norm() / want.cov().norm()};
}

}  // namespace

OracleComparison oracle_compare(const UotProblem& problem, const OracleOptions& options) {
  if (options.epsilons.empty()) throw Error(ErrorCode::InvalidArgument, "epsilon list is empty");
  OracleComparison out;
  out.closed_form = solve_uot(problem);

  const GridMeasure a = discretize(problem.alpha(), options.lo, options.hi, options.n);
  const GridMeasure b = discretize(problem.beta(), options.lo, options.hi, options.n);

  std::vector<double> eps = options.epsilons;
  std::sort(eps.begin(), eps.end(), std::greater<>());
  DiscreteUotOptions sink = options.sinkhorn;
  for (double e : eps) {
    OracleRun run{e, solve_discrete_uot(a, b, problem.gamma(), e, sink)};
    out.converged = out.converged && run.result.converged;
    sink.warm_start = std::make_pair(run.result.f, run.result.g);
    spdlog::info("oracle eps={:.4g}: objective {:.8g} ({} iterations)", e, run.result.objective,
                 run.result.iterations);
    out.runs.push_back(std::move(run));
  }

  std::vector<double> objectives;
  std::vector<const GridMeasure*> m1;
  std::vector<const GridMeasure*> m2;
  for (const auto& r : out.runs) {
    objectives.push_back(r.result.objective);
    m1.push_back(&r.result.marginal1);
    m2.push_back(&r.result.marginal2);
  }
  out.extrapolated_objective = linear_extrapolate(eps, objectives);
  const double reference = out.closed_form.objective;
  out.absolute_gap = std::abs(out.extrapolated_objective - reference);
  out.relative_gap = out.absolute_gap / std::max(std::abs(reference), 1e-12);
  out.extrapolated_marginal1 = extrapolate_moments(eps, m1);
  out.extrapolated_marginal2 = extrapolate_moments(eps, m2);
  const Gaps g1 = moment_gaps(out.extrapolated_marginal1, out.closed_form.marginal1);
  const Gaps g2 = moment_gaps(out.extrapolated_marginal2, out.closed_form.marginal2);
  out.mass_gap = std::max(g1.mass, g2.mass);
  out.mean_gap = std::max(g1.mean, g2.mean);
  out.variance_gap = std::max(g1.cov, g2.cov);
  return out;
}

}  // namespace uotdc
