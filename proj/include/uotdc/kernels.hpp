#pragma once

#include "uotdc/linalg.hpp"

namespace uotdc {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Hot loops of the grid oracle. Each kernel has an OpenMP version and a serial
/// reference that performs the same per-row arithmetic; the two agree bit for bit.
namespace kernels {

/// out_i = -tau * eps * log sum_j exp(log_w_j + (pot_j - cost_ij) / eps)
///
/// Entries with log_w_j = -inf are empty cells and contribute nothing.
void softmin_rows(const RowMatrix& cost, const Vector& log_w, const Vector& pot, double eps, double tau,
                  Vector& out);
void softmin_rows_serial(const RowMatrix& cost, const Vector& log_w, const Vector& pot, double eps, double tau,
                         Vector& out);

/// Single-row version of softmin_rows.
double softmin_row(const RowMatrix& cost, Eigen::Index i, const Vector& log_w, const Vector& pot, double eps,
                   double tau);

/// K_ij = exp(log_a_i + log_b_j + (f_i + g_j - cost_ij) / eps), the plan at potentials (f, g).
void gibbs_kernel(const RowMatrix& cost, const Vector& log_a, const Vector& log_b, const Vector& f,
                  const Vector& g, double eps, RowMatrix& out);
void gibbs_kernel_serial(const RowMatrix& cost, const Vector& log_a, const Vector& log_b, const Vector& f,
                         const Vector& g, double eps, RowMatrix& out);

/// y = K x, one dot product per row.
void matvec(const RowMatrix& k, const Vector& x, Vector& y);
void matvec_serial(const RowMatrix& k, const Vector& x, Vector& y);

/// Row-wise statistics of the plan P_ij = exp(log_a_i + log_b_j + (f_i + g_j - cost_ij) / eps):
/// row mass, row transport cost sum_j cost_ij P_ij, and row sum_j P_ij (f_i + g_j - cost_ij) / eps.
struct PlanRows {
  Vector mass;
  Vector transport;
  Vector log_ratio;
};

void plan_rows(const RowMatrix& cost, const Vector& log_a, const Vector& log_b, const Vector& f, const Vector& g,
               double eps, PlanRows& out);
void plan_rows_serial(const RowMatrix& cost, const Vector& log_a, const Vector& log_b, const Vector& f,
                      const Vector& g, double eps, PlanRows& out);

/// Number of OpenMP threads the parallel kernels will use.
int max_threads();

}  // namespace kernels
}  // namespace uotdc
