#include "uotdc/kernels.hpp"

#include <omp.h>

#include <cmath>
#include <limits>

namespace uotdc::kernels {

namespace {

// Kernel entries below this are stored as zero so products stay out of the subnormal range.
constexpr double kKernelFloor = 1e-280;

inline double row_lse(const RowMatrix& cost, Eigen::Index i, const Eigen::ArrayXd& h, double inv_eps,
                          Eigen::ArrayXd& buf) {
  buf = h - inv_eps * cost.row(i).transpose().array();
  const double m = buf.maxCoeff();
  if (!std::isfinite(m)) return std::numeric_limits<double>::infinity();
  return m + std::log((buf - m).exp().sum());
}

inline void plan_row(const RowMatrix& cost, Eigen::Index i, const Eigen::ArrayXd& log_b,
                     const Eigen::ArrayXd& g_scaled, double log_a_i, double f_scaled_i, double inv_eps,
                     Eigen::ArrayXd& ratio, Eigen::ArrayXd& plan, PlanRows& out) {
  const auto c = cost.row(i).transpose().array();
  // log(P_ij / (a_i b_j)) = (f_i + g_j - cost_ij) / eps
  ratio = f_scaled_i + g_scaled - inv_eps * c;
  plan = (log_a_i + log_b + ratio).exp();
  plan = (log_b == -std::numeric_limits<double>::infinity()).select(0.0, plan);
  if (log_a_i == -std::numeric_limits<double>::infinity()) plan.setZero();
  out.mass[i] = plan.sum();
  out.transport[i] = (plan * c).sum();
  out.log_ratio[i] = (plan > 0.0).select(plan * ratio, 0.0).sum();
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }

double softmin_row(const RowMatrix& cost, Eigen::Index i, const Vector& log_w, const Vector& pot, double eps,
                   double tau) {
  const Eigen::ArrayXd h = log_w.array() + pot.array() / eps;
  Eigen::ArrayXd buf(cost.cols());
  return -tau * eps * row_lse(cost, i, h, 1.0 / eps, buf);
}

void gibbs_kernel(const RowMatrix& cost, const Vector& log_a, const Vector& log_b, const Vector& f,
                  const Vector& g, double eps, RowMatrix& out) {
  const double inv_eps = 1.0 / eps;
  const Eigen::ArrayXd h = log_b.array() + g.array() * inv_eps;
  out.resize(cost.rows(), cost.cols());
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < cost.rows(); ++i) {
    const double r = log_a[i] + f[i] * inv_eps;
    const Eigen::ArrayXd e = (r + h - inv_eps * cost.row(i).transpose().array()).exp();
    out.row(i) = (e < kKernelFloor).select(0.0, e).transpose();
  }
}

void gibbs_kernel_serial(const RowMatrix& cost, const Vector& log_a, const Vector& log_b, const Vector& f,
                         const Vector& g, double eps, RowMatrix& out) {
  const double inv_eps = 1.0 / eps;
  const Eigen::ArrayXd h = log_b.array() + g.array() * inv_eps;
  out.resize(cost.rows(), cost.cols());
  for (Eigen::Index i = 0; i < cost.rows(); ++i) {
    const double r = log_a[i] + f[i] * inv_eps;
    const Eigen::ArrayXd e = (r + h - inv_eps * cost.row(i).transpose().array()).exp();
    out.row(i) = (e < kKernelFloor).select(0.0, e).transpose();
  }
}

void matvec(const RowMatrix& k, const Vector& x, Vector& y) {
  y.resize(k.rows());
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < k.rows(); ++i) y[i] = k.row(i).dot(x.transpose());
}

void matvec_serial(const RowMatrix& k, const Vector& x, Vector& y) {
  y.resize(k.rows());
  for (Eigen::Index i = 0; i < k.rows(); ++i) y[i] = k.row(i).dot(x.transpose());
}

void softmin_rows(const RowMatrix& cost, const Vector& log_w, const Vector& pot, double eps, double tau,
                  Vector& out) {
  const Eigen::Index rows = cost.rows();
  const Eigen::ArrayXd h = log_w.array() + pot.array() / eps;
  const double inv_eps = 1.0 / eps;
  out.resize(rows);
#pragma omp parallel
  {
    Eigen::ArrayXd buf(cost.cols());
#pragma omp for schedule(static)
    for (Eigen::Index i = 0; i < rows; ++i) {
      out[i] = -tau * eps * row_lse(cost, i, h, inv_eps, buf);
    }
  }
}

void softmin_rows_serial(const RowMatrix& cost, const Vector& log_w, const Vector& pot, double eps, double tau,
                         Vector& out) {
  const Eigen::Index rows = cost.rows();
  const Eigen::ArrayXd h = log_w.array() + pot.array() / eps;
  const double inv_eps = 1.0 / eps;
  out.resize(rows);
  Eigen::ArrayXd buf(cost.cols());
  for (Eigen::Index i = 0; i < rows; ++i) {
    out[i] = -tau * eps * row_lse(cost, i, h, inv_eps, buf);
  }
}

}  // namespace uotdc::kernels

namespace uotdc::kernels {

namespace {

void resize_rows(PlanRows& out, Eigen::Index rows) {
  out.mass.resize(rows);
  out.transport.resize(rows);
  out.log_ratio.resize(rows);
}

}  // namespace

void plan_rows(const RowMatrix& cost, const Vector& log_a, const Vector& log_b, const Vector& f, const Vector& g,
               double eps, PlanRows& out) {
  const Eigen::Index rows = cost.rows();
  const double inv_eps = 1.0 / eps;
  const Eigen::ArrayXd lb = log_b.array();
  const Eigen::ArrayXd gs = g.array() * inv_eps;
  resize_rows(out, rows);
#pragma omp parallel
  {
    Eigen::ArrayXd ratio(cost.cols());
    Eigen::ArrayXd plan(cost.cols());
#pragma omp for schedule(static)
    for (Eigen::Index i = 0; i < rows; ++i) {
      plan_row(cost, i, lb, gs, log_a[i], f[i] * inv_eps, inv_eps, ratio, plan, out);
    }
  }
}

void plan_rows_serial(const RowMatrix& cost, const Vector& log_a, const Vector& log_b, const Vector& f,
                      const Vector& g, double eps, PlanRows& out) {
  const Eigen::Index rows = cost.rows();
  const double inv_eps = 1.0 / eps;
  const Eigen::ArrayXd lb = log_b.array();
  const Eigen::ArrayXd gs = g.array() * inv_eps;
  resize_rows(out, rows);
  Eigen::ArrayXd ratio(cost.cols());
  Eigen::ArrayXd plan(cost.cols());
  for (Eigen::Index i = 0; i < rows; ++i) {
    plan_row(cost, i, lb, gs, log_a[i], f[i] * inv_eps, inv_eps, ratio, plan, out);
  }
}

}  // namespace uotdc::kernels
