#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "support.hpp"
#include "uotdc/kernels.hpp"

using namespace uotdc;
using uotdc::testing::Rng;

namespace {

RowMatrix random_cost(Rng& rng, Eigen::Index r, Eigen::Index c) {
  RowMatrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(0.0, 4.0);
  }
  return m;
}

Vector random_log_weights(Rng& rng, Eigen::Index n) {
  Vector w(n);
  for (Eigen::Index i = 0; i < n; ++i) w[i] = std::log(rng.uniform(0.01, 1.0));
  w[n / 3] = -std::numeric_limits<double>::infinity();  // an empty cell
  return w;
}

}  // namespace

TEST(Kernels, SoftminMatchesDirectSum) {
  Rng rng(30);
  const RowMatrix cost = random_cost(rng, 37, 23);
  const Vector lw = random_log_weights(rng, 23);
  const Vector pot = rng.vector(23);
  const double eps = 0.3;
  const double tau = 0.8;
  Vector out;
  kernels::softmin_rows(cost, lw, pot, eps, tau, out);
  for (Eigen::Index i = 0; i < cost.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < cost.cols(); ++j) s += std::exp(lw[j] + (pot[j] - cost(i, j)) / eps);
    EXPECT_NEAR(out[i], -tau * eps * std::log(s), 1e-12);
    EXPECT_NEAR(kernels::softmin_row(cost, i, lw, pot, eps, tau), out[i], 1e-12);
  }
}

TEST(Kernels, SoftminStableForSmallEpsilon) {
  Rng rng(31);
  const RowMatrix cost = random_cost(rng, 10, 10);
  const Vector lw = Vector::Zero(10);
  const Vector pot = Vector::Zero(10);
  Vector out;
  kernels::softmin_rows(cost, lw, pot, 1e-4, 1.0, out);
  for (Eigen::Index i = 0; i < 10; ++i) {
    EXPECT_TRUE(std::isfinite(out[i]));
    EXPECT_NEAR(out[i], cost.row(i).minCoeff(), 1e-3);
  }
}

TEST(Kernels, ParallelAndSerialAgreeExactly) {
  Rng rng(32);
  const RowMatrix cost = random_cost(rng, 301, 157);
  const Vector la = random_log_weights(rng, 301);
  const Vector lb = random_log_weights(rng, 157);
  const Vector f = rng.vector(301);
  const Vector g = rng.vector(157);
  Vector a;
  Vector b;
  kernels::softmin_rows(cost, lb, g, 0.05, 0.9, a);
  kernels::softmin_rows_serial(cost, lb, g, 0.05, 0.9, b);
  EXPECT_EQ(a, b);

  kernels::PlanRows pa;
  kernels::PlanRows pb;
  kernels::plan_rows(cost, la, lb, f, g, 0.2, pa);
  kernels::plan_rows_serial(cost, la, lb, f, g, 0.2, pb);
  EXPECT_EQ(pa.mass, pb.mass);
  EXPECT_EQ(pa.transport, pb.transport);
  EXPECT_EQ(pa.log_ratio, pb.log_ratio);

  RowMatrix ka;
  RowMatrix kb;
  kernels::gibbs_kernel(cost, la, lb, f, g, 0.2, ka);
  kernels::gibbs_kernel_serial(cost, la, lb, f, g, 0.2, kb);
  EXPECT_EQ(ka, kb);
  const Vector x = rng.vector(157);
  kernels::matvec(ka, x, a);
  kernels::matvec_serial(kb, x, b);
  EXPECT_EQ(a, b);
}

TEST(Kernels, PlanRowsMatchExplicitPlan) {
  Rng rng(33);
  const RowMatrix cost = random_cost(rng, 19, 13);
  const Vector la = random_log_weights(rng, 19);
  const Vector lb = random_log_weights(rng, 13);
  const Vector f = rng.vector(19);
  const Vector g = rng.vector(13);
  const double eps = 0.7;
  kernels::PlanRows rows;
  kernels::plan_rows(cost, la, lb, f, g, eps, rows);
  RowMatrix k;
  kernels::gibbs_kernel(cost, la, lb, f, g, eps, k);
  for (Eigen::Index i = 0; i < 19; ++i) {
    double mass = 0.0;
    double transport = 0.0;
    double ratio = 0.0;
    for (Eigen::Index j = 0; j < 13; ++j) {
      const double p = std::exp(la[i] + lb[j] + (f[i] + g[j] - cost(i, j)) / eps);
      mass += p;
      transport += p * cost(i, j);
      if (p > 0.0) ratio += p * (f[i] + g[j] - cost(i, j)) / eps;
      EXPECT_NEAR(k(i, j), p, 1e-14 * std::max(1.0, p));
    }
    EXPECT_NEAR(rows.mass[i], mass, 1e-13);
    EXPECT_NEAR(rows.transport[i], transport, 1e-12);
    EXPECT_NEAR(rows.log_ratio[i], ratio, 1e-12);
  }
}

TEST(Kernels, ReportsThreads) { EXPECT_GE(kernels::max_threads(), 1); }
