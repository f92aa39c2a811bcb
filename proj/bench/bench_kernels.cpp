#include <benchmark/benchmark.h>

#include <random>

#include "uotdc/kernels.hpp"
#include "uotdc/sim.hpp"
#include "uotdc/udc.hpp"

using namespace uotdc;

namespace {

struct Grid {
  RowMatrix cost;
  Vector log_a;
  Vector log_b;
  Vector f;
  Vector g;
};

Grid make_grid(int n) {
  Grid s;
  s.cost.resize(n, n);
  const double h = 16.0 / n;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double d = (i - j) * h;
      s.cost(i, j) = d * d;
    }
  }
  std::mt19937_64 gen(1);
  std::normal_distribution<double> normal;
  s.log_a = Vector::NullaryExpr(n, [&](Eigen::Index) { return -5.0 + 0.1 * normal(gen); });
  s.log_b = Vector::NullaryExpr(n, [&](Eigen::Index) { return -5.0 + 0.1 * normal(gen); });
  s.f = Vector::NullaryExpr(n, [&](Eigen::Index) { return 0.01 * normal(gen); });
  s.g = Vector::NullaryExpr(n, [&](Eigen::Index) { return 0.01 * normal(gen); });
  return s;
}

constexpr double kEps = 0.02;

void BM_softmin(benchmark::State& state) {
  const Grid s = make_grid(static_cast<int>(state.range(0)));
  Vector out;
  for (auto _ : state) {
    kernels::softmin_rows(s.cost, s.log_b, s.g, kEps, 0.9, out);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_softmin_serial(benchmark::State& state) {
  const Grid s = make_grid(static_cast<int>(state.range(0)));
  Vector out;
  for (auto _ : state) {
    kernels::softmin_rows_serial(s.cost, s.log_b, s.g, kEps, 0.9, out);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_gibbs(benchmark::State& state) {
  const Grid s = make_grid(static_cast<int>(state.range(0)));
  RowMatrix k;
  for (auto _ : state) {
    kernels::gibbs_kernel(s.cost, s.log_a, s.log_b, s.f, s.g, kEps, k);
    benchmark::DoNotOptimize(k.data());
  }
}

void BM_gibbs_serial(benchmark::State& state) {
  const Grid s = make_grid(static_cast<int>(state.range(0)));
  RowMatrix k;
  for (auto _ : state) {
    kernels::gibbs_kernel_serial(s.cost, s.log_a, s.log_b, s.f, s.g, kEps, k);
    benchmark::DoNotOptimize(k.data());
  }
}

void BM_matvec(benchmark::State& state) {
  const Grid s = make_grid(static_cast<int>(state.range(0)));
  RowMatrix k;
  kernels::gibbs_kernel_serial(s.cost, s.log_a, s.log_b, s.f, s.g, kEps, k);
  const Vector x = Vector::Ones(k.cols());
  Vector y;
  for (auto _ : state) {
    kernels::matvec(k, x, y);
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_matvec_serial(benchmark::State& state) {
  const Grid s = make_grid(static_cast<int>(state.range(0)));
  RowMatrix k;
  kernels::gibbs_kernel_serial(s.cost, s.log_a, s.log_b, s.f, s.g, kEps, k);
  const Vector x = Vector::Ones(k.cols());
  Vector y;
  for (auto _ : state) {
    kernels::matvec_serial(k, x, y);
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_plan_rows(benchmark::State& state) {
  const Grid s = make_grid(static_cast<int>(state.range(0)));
  kernels::PlanRows out;
  for (auto _ : state) {
    kernels::plan_rows(s.cost, s.log_a, s.log_b, s.f, s.g, kEps, out);
    benchmark::DoNotOptimize(out.mass.data());
  }
}

void BM_plan_rows_serial(benchmark::State& state) {
  const Grid s = make_grid(static_cast<int>(state.range(0)));
  kernels::PlanRows out;
  for (auto _ : state) {
    kernels::plan_rows_serial(s.cost, s.log_a, s.log_b, s.f, s.g, kEps, out);
    benchmark::DoNotOptimize(out.mass.data());
  }
}

struct SimCase {
  LinearSystem system;
  GaussianMeasure initial;
  AffinePolicy policy;
};

SimCase make_sim() {
  Matrix a(2, 2);
  a << 1.0, 0.1, 0.0, 1.0;
  Matrix b(2, 1);
  b << 0.005, 0.1;
  const LinearSystem sys{a, b, 20};
  Matrix cov_b(2, 2);
  cov_b << 0.2, 0.05, 0.05, 0.1;
  const UdcProblem problem(sys, GaussianMeasure(1.0, Vector::Unit(2, 0) * -1.0, Vector(Vector::Ones(2) * 0.3).asDiagonal()),
                           GaussianMeasure(0.7, Vector::Unit(2, 0), cov_b), 10.0);
  const UdcSolution sol = solve_udc(problem);
  return {sys, GaussianMeasure(sol.mass, sol.trajectory.means.front(), sol.trajectory.covs.front()), sol.policy};
}

void BM_simulate(benchmark::State& state) {
  const SimCase c = make_sim();
  SimConfig cfg;
  cfg.sample_count = state.range(0);
  for (auto _ : state) benchmark::DoNotOptimize(simulate(c.system, c.initial, c.policy, cfg).control_cost);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_simulate_serial(benchmark::State& state) {
  const SimCase c = make_sim();
  SimConfig cfg;
  cfg.sample_count = state.range(0);
  for (auto _ : state) benchmark::DoNotOptimize(simulate_serial(c.system, c.initial, c.policy, cfg).control_cost);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_softmin)->Arg(400)->Arg(1600)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_softmin_serial)->Arg(400)->Arg(1600)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_gibbs)->Arg(400)->Arg(1600)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_gibbs_serial)->Arg(400)->Arg(1600)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_matvec)->Arg(400)->Arg(1600)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_matvec_serial)->Arg(400)->Arg(1600)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_plan_rows)->Arg(400)->Arg(1600)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_plan_rows_serial)->Arg(400)->Arg(1600)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_simulate)->Arg(20000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_simulate_serial)->Arg(20000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
