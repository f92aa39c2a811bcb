#include "uotdc/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "uotdc/io.hpp"

namespace uotdc {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

struct CommonArgs {
  std::string spec_path;
  std::string out_dir = ".";
};

struct UotArgs {
  std::vector<double> plan_grid;
  double sigma_vis = 0.0;
};

struct UdcArgs {
  std::string cross_check;
  std::string mass_term;
};

struct OracleArgs {
  std::vector<double> epsilons;
};

struct SimArgs {
  std::string solution_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> samples;
};

bool is_validation(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::NotSymmetric:
    case ErrorCode::NotPSD:
    case ErrorCode::SingularReference:
    case ErrorCode::NonPositiveMass:
    case ErrorCode::DomainTooNarrow:
    case ErrorCode::SupportViolation:
      return true;
    default:
      return false;
  }
}

Json bundle_header(const char* command, const ProblemSpec& spec) {
  Json b;
  b["toolkit"] = {{"name", "uotdc"}, {"version", kVersion}};
  b["command"] = command;
  b["input"] = spec.echo;
  return b;
}

fs::path prepare_out(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

int cmd_uot(const CommonArgs& common, const UotArgs& args) {
  const ProblemSpec spec = load_spec(common.spec_path);
  if (spec.mode != Mode::Uot) throw SpecError(ErrorCode::InvalidArgument, "mode", "uot command needs mode \"uot\"");
  if (!args.plan_grid.empty() && args.plan_grid.size() != 3) {
    throw SpecError(ErrorCode::InvalidArgument, "--plan-grid", "expects lo hi n");
  }
  const UotProblem problem = spec.uot_problem();
  CovarianceOptions opts;
  opts.max_iterations = spec.max_iterations;
  const UotSolution sol = solve_uot(problem, opts);
  spdlog::info("uot: c* = {:.10g}, objective = {:.10g}, {} iterations", sol.mass, sol.objective,
               sol.report.iterations);

  const fs::path out = prepare_out(common.out_dir);
  Json bundle = bundle_header("uot", spec);
  bundle["solution"] = to_json(sol);
  if (!args.plan_grid.empty()) {
    const double lo = args.plan_grid[0];
    const double hi = args.plan_grid[1];
    const double nd = args.plan_grid[2];
    if (nd != std::floor(nd) || nd < 2 || nd > 4096) {
      throw SpecError(ErrorCode::InvalidArgument, "--plan-grid", "n must be an integer in [2, 4096]");
    }
    if (!(hi > lo)) throw SpecError(ErrorCode::InvalidArgument, "--plan-grid", "hi must exceed lo");
    if (problem.alpha().dim() != 1) {
      throw SpecError(ErrorCode::InvalidArgument, "--plan-grid", "plan rasterization is only available in 1-D");
    }
    const double sigma = args.sigma_vis > 0.0 ? args.sigma_vis : default_sigma_vis(sol);
    const PlanRaster raster = rasterize_plan(sol, lo, hi, static_cast<int>(nd), sigma);
    write_text(out / "plan.csv", plan_csv(raster));
    bundle["plan_grid"] = {{"lo", lo}, {"hi", hi}, {"n", static_cast<int>(nd)}, {"sigma_vis", sigma},
                           {"raster_mass", raster.total_mass()}};
  }
  write_text(out / "solution.json", dump(bundle));
  if (!sol.report.converged) {
    spdlog::error("covariance subproblem did not converge (gradient norm {:.3e})", sol.report.final_gradient_norm);
    return kExitConvergence;
  }
  return kExitOk;
}

int cmd_udc(const CommonArgs& common, const UdcArgs& args) {
  ProblemSpec spec = load_spec(common.spec_path);
  if (spec.mode != Mode::Udc) throw SpecError(ErrorCode::InvalidArgument, "mode", "udc command needs mode \"udc\"");
  if (!args.mass_term.empty()) spec.mass_term = parse_mass_term(args.mass_term);
  if (!args.cross_check.empty() && args.cross_check != "uot") {
    throw SpecError(ErrorCode::InvalidArgument, "--cross-check", "only \"uot\" is supported");
  }
  const UdcProblem problem = spec.udc_problem();
  const UdcSolution sol = solve_udc(problem);
  spdlog::info("udc: c* = {:.10g}, objective = {:.10g}", sol.mass, sol.objective);

  const fs::path out = prepare_out(common.out_dir);
  Json bundle = bundle_header("udc", spec);
  const MassTerm other = spec.mass_term == MassTerm::Psi ? MassTerm::GammaPsi : MassTerm::Psi;
  bundle["mass_term"] = std::string(to_string(spec.mass_term));
  bundle["alternate_mass_term"] = std::string(to_string(other));
  bundle["solution"] = to_json(sol);
  if (args.cross_check == "uot") {
    const UotSolution u = solve_uot(spec.uot_problem());
    const double gap = std::abs(sol.objective - u.objective) / std::max(std::abs(u.objective), 1e-12);
    bundle["cross_check"] = {{"uot_objective", u.objective},
                             {"uot_mass", u.mass},
                             {"udc_objective", sol.objective},
                             {"udc_mass", sol.mass},
                             {"relative_gap", gap}};
    spdlog::info("cross-check: udc {:.10g} vs uot {:.10g} (relative gap {:.2e})", sol.objective, u.objective, gap);
  }
  write_text(out / "solution.json", dump(bundle));
  write_text(out / "trajectory.csv", trajectory_csv(sol));
  return sol.report.converged ? kExitOk : kExitConvergence;
}

int cmd_oracle(const CommonArgs& common, const OracleArgs& args) {
  const ProblemSpec spec = load_spec(common.spec_path);
  if (spec.mode != Mode::Uot) throw SpecError(ErrorCode::InvalidArgument, "mode", "oracle command needs mode \"uot\"");
  if (spec.alpha.dim() > 2) throw SpecError(ErrorCode::InvalidArgument, "alpha.mean", "oracle supports d <= 2");
  OracleOptions opts = spec.oracle_options();
  if (!args.epsilons.empty()) {
    for (double e : args.epsilons) {
      if (!(e > 0.0)) throw SpecError(ErrorCode::InvalidArgument, "--epsilon-list", "entries must be positive");
    }
    opts.epsilons = args.epsilons;
  }
  const OracleComparison cmp = oracle_compare(spec.uot_problem(), opts);
  spdlog::info("oracle: closed form {:.8g}, extrapolated {:.8g}, relative gap {:.3e}", cmp.closed_form.objective,
               cmp.extrapolated_objective, cmp.relative_gap);

  const fs::path out = prepare_out(common.out_dir);
  Json bundle = bundle_header("oracle", spec);
  bundle["grid"] = {{"lo", opts.lo}, {"hi", opts.hi}, {"n", opts.n}};
  bundle["comparison"] = to_json(cmp);
  write_text(out / "oracle.json", dump(bundle));
  return cmp.converged ? kExitOk : kExitConvergence;
}

int cmd_simulate(const CommonArgs& common, const SimArgs& args) {
  const ProblemSpec spec = load_spec(common.spec_path);
  if (spec.mode != Mode::Udc) throw SpecError(ErrorCode::InvalidArgument, "mode", "simulate needs mode \"udc\"");
  const UdcProblem problem = spec.udc_problem();

  UdcSolution sol;
  if (!args.solution_path.empty()) {
    const Json bundle = read_json(args.solution_path);
    if (!bundle.contains("solution")) throw SpecError(ErrorCode::InvalidArgument, "solution", "missing");
    const StoredPolicy stored = policy_from_json(bundle["solution"]);
    sol.mass = stored.mass;
    sol.policy = stored.policy;
    sol.trajectory = stored.trajectory;
  } else {
    sol = solve_udc(problem);
  }

  SimConfig cfg;
  cfg.sample_count = args.samples.value_or(spec.sim.samples);
  cfg.seed = args.seed.value_or(spec.sim.seed);
  const GaussianMeasure initial(sol.mass, sol.trajectory.means.front(), sol.trajectory.covs.front(),
                                problem.tolerances());
  const EmpiricalMoments moments = simulate(problem.system(), initial, sol.policy, cfg);
  const MomentCheck check = check_moments(moments, sol.trajectory, sol.policy);
  spdlog::info("simulate: {} samples, {} checks, worst z {:.3f} ({})", cfg.sample_count, check.checks,
               check.worst_z, check.worst);

  const fs::path out = prepare_out(common.out_dir);
  Json bundle = bundle_header("simulate", spec);
  bundle["seed"] = cfg.seed;
  Json summary = to_json(moments, check);
  summary["empirical_objective"] = empirical_objective(moments, sol, problem);
  summary["empirical_objective_se"] = empirical_objective_se(moments, sol, problem);
  bundle["simulation"] = std::move(summary);
  write_text(out / "sim.json", dump(bundle));
  return check.passed ? kExitOk : kExitConvergence;
}

}  // namespace

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("uotdc");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("UOT_LOG")) {
    const std::string level(env);
    if (level == "error") {
      spdlog::set_level(spdlog::level::err);
    } else if (level == "info") {
      spdlog::set_level(spdlog::level::info);
    } else if (level == "debug") {
      spdlog::set_level(spdlog::level::debug);
    } else {
      spdlog::warn("ignoring UOT_LOG={} (expected error, info or debug)", level);
    }
  }
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Unbalanced transport and density control between Gaussian measures"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonArgs common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("spec", common.spec_path, "Problem document (JSON)")->required();
    sub->add_option("--out-dir", common.out_dir, "Directory for result files");
  };

  UotArgs uot_args;
  auto* uot = app.add_subcommand("uot", "Solve a Gaussian UOT problem");
  add_common(uot);
  uot->add_option("--plan-grid", uot_args.plan_grid, "Rasterize the plan on an n x n grid over [lo, hi]^2")
      ->expected(3);
  uot->add_option("--sigma-vis", uot_args.sigma_vis, "Visualization jitter of the rasterized plan");

  UdcArgs udc_args;
  auto* udc = app.add_subcommand("udc", "Solve an unbalanced density control problem");
  add_common(udc);
  udc->add_option("--cross-check", udc_args.cross_check, "Also solve the static UOT problem (uot)");
  udc->add_option("--mass-term", udc_args.mass_term, "Mass penalty reading: psi or gamma-psi")
      ->check(CLI::IsMember({"psi", "gamma-psi"}));

  OracleArgs oracle_args;
  auto* oracle = app.add_subcommand("oracle", "Compare the closed form with a grid Sinkhorn oracle");
  add_common(oracle);
  oracle->add_option("--epsilon-list", oracle_args.epsilons, "Entropic regularization levels");

  SimArgs sim_args;
  std::uint64_t seed = 0;
  std::int64_t samples = 0;
  auto* sim = app.add_subcommand("simulate", "Monte-Carlo rollout of a density control policy");
  add_common(sim);
  sim->add_option("--solution", sim_args.solution_path, "solution.json from a previous udc run");
  auto* seed_opt = sim->add_option("--seed", seed, "Random seed");
  auto* samples_opt = sim->add_option("--samples", samples, "Number of trajectories")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }
  if (seed_opt->count()) sim_args.seed = seed;
  if (samples_opt->count()) sim_args.samples = samples;

  try {
    if (*uot) return cmd_uot(common, uot_args);
    if (*udc) return cmd_udc(common, udc_args);
    if (*oracle) return cmd_oracle(common, oracle_args);
    return cmd_simulate(common, sim_args);
  } catch (const SpecError& e) {
    spdlog::error("invalid input: {}", e.what());
    return kExitValidation;
  } catch (const Error& e) {
    spdlog::error("{}: {}", to_string(e.code()), e.what());
    if (e.code() == ErrorCode::InfeasibleDynamics) return kExitInfeasible;
    return is_validation(e.code()) ? kExitValidation : kExitConvergence;
  } catch (const fs::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return kExitValidation;
  }
}

}  // namespace uotdc
