#include "uotdc/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace uotdc {

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& what,
                       ErrorCode code = ErrorCode::InvalidArgument) {
  throw SpecError(code, field, what);
}

const Json& require(const Json& obj, const char* key, const std::string& prefix) {
  const std::string field = prefix.empty() ? key : prefix + "." + key;
  if (!obj.is_object() || !obj.contains(key)) fail(field, "missing");
  return obj.at(key);
}

void reject_unknown(const Json& obj, const std::set<std::string>& known, const std::string& prefix) {
  for (const auto& [key, value] : obj.items()) {
    if (!known.count(key)) fail(prefix.empty() ? key : prefix + "." + key, "unknown key");
  }
}

double number(const Json& j, const std::string& field) {
  if (!j.is_number()) fail(field, "expected a number");
  const double x = j.get<double>();
  if (!std::isfinite(x)) fail(field, "not finite");
  return x;
}

double positive(const Json& j, const std::string& field) {
  const double x = number(j, field);
  if (x <= 0.0) fail(field, "must be positive");
  return x;
}

std::int64_t integer(const Json& j, const std::string& field, std::int64_t lo) {
  if (!j.is_number_integer()) fail(field, "expected an integer");
  const auto x = j.get<std::int64_t>();
  if (x < lo) fail(field, "must be at least " + std::to_string(lo));
  return x;
}

GaussianMeasure measure_from_json(const Json& j, const std::string& field, const Tolerances& tol) {
  if (!j.is_object()) fail(field, "expected an object with mass, mean, cov");
  reject_unknown(j, {"mass", "mean", "cov"}, field);
  const double mass = number(require(j, "mass", field), field + ".mass");
  if (mass <= 0.0) fail(field + ".mass", "must be positive", ErrorCode::NonPositiveMass);
  Vector mean = vector_from_json(require(j, "mean", field), field + ".mean");
  const Matrix cov = matrix_from_json(require(j, "cov", field), field + ".cov");
  if (cov.rows() != mean.size()) {
    fail(field + ".cov", "size does not match the mean", ErrorCode::DimensionMismatch);
  }
  try {
    GaussianMeasure g(mass, std::move(mean), cov, tol);
    g.require_reference(field.c_str());
    return g;
  } catch (const SpecError&) {
    throw;
  } catch (const Error& e) {
    fail(field + ".cov", e.what(), e.code());
  }
}

Tolerances tolerances_from_json(const Json& j, const std::string& field) {
  Tolerances t;
  reject_unknown(j, {"eig_clip", "sym_tol", "psd_tol", "grad_tol", "opt_tol"}, field);
  if (j.contains("eig_clip")) t.eig_clip = number(j["eig_clip"], field + ".eig_clip");
  if (j.contains("sym_tol")) t.sym_tol = number(j["sym_tol"], field + ".sym_tol");
  if (j.contains("psd_tol")) t.psd_tol = number(j["psd_tol"], field + ".psd_tol");
  if (j.contains("grad_tol")) t.grad_tol = number(j["grad_tol"], field + ".grad_tol");
  if (j.contains("opt_tol")) t.opt_tol = number(j["opt_tol"], field + ".opt_tol");
  try {
    t.validate();
  } catch (const Error& e) {
    fail(field, e.what(), e.code());
  }
  return t;
}

Json vectors(const std::vector<Vector>& v) {
  Json out = Json::array();
  for (const auto& x : v) out.push_back(to_json(x));
  return out;
}

Json matrices(const std::vector<Matrix>& v) {
  Json out = Json::array();
  for (const auto& x : v) out.push_back(to_json(x));
  return out;
}

std::vector<Vector> vectors_from(const Json& j, const std::string& field) {
  if (!j.is_array()) fail(field, "expected an array");
  std::vector<Vector> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(vector_from_json(j[i], field + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<Matrix> matrices_from(const Json& j, const std::string& field) {
  if (!j.is_array()) fail(field, "expected an array");
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(matrix_from_json(j[i], field + "[" + std::to_string(i) + "]"));
  return out;
}

Json moments_json(const GridMeasure& g) {
  Json out;
  out["mass"] = g.mass();
  out["mean"] = to_json(g.mean());
  out["cov"] = to_json(g.cov());
  return out;
}

Json finite_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

Json to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Json to_json(const Matrix& m) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

Vector vector_from_json(const Json& j, const std::string& field) {
  if (j.is_number()) return Vector::Constant(1, number(j, field));
  if (!j.is_array() || j.empty()) fail(field, "expected a non-empty array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = number(j[i], field + "[" + std::to_string(i) + "]");
  return v;
}

Matrix matrix_from_json(const Json& j, const std::string& field) {
  if (j.is_number()) return Matrix::Constant(1, 1, number(j, field));
  if (!j.is_array() || j.empty()) fail(field, "expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (!j[0].is_array() || j[0].empty()) fail(field + "[0]", "expected a non-empty row");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const std::string rf = field + "[" + std::to_string(r) + "]";
    const Json& row = j[r];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      fail(rf, "rows must all have " + std::to_string(cols) + " entries", ErrorCode::DimensionMismatch);
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = number(row[c], rf + "[" + std::to_string(c) + "]");
  }
  return m;
}

UotProblem ProblemSpec::uot_problem() const { return UotProblem(alpha, beta, gamma, tol); }

UdcProblem ProblemSpec::udc_problem() const {
  if (!system) throw SpecError(ErrorCode::InvalidArgument, "system", "missing");
  return UdcProblem(*system, alpha, beta, gamma, mass_term, tol);
}

OracleOptions ProblemSpec::oracle_options() const {
  OracleOptions o;
  o.lo = oracle.lo;
  o.hi = oracle.hi;
  o.n = oracle.n;
  o.epsilons = oracle.epsilons;
  o.sinkhorn.tolerance = oracle.tolerance;
  o.sinkhorn.max_iterations = oracle.max_iterations;
  return o;
}

ProblemSpec parse_spec(const Json& doc) {
  if (!doc.is_object()) fail("(document)", "expected an object");
  reject_unknown(doc, {"name", "description", "mode", "gamma", "alpha", "beta", "system", "solver", "oracle", "sim"},
                 "");
  ProblemSpec spec;
  spec.echo = doc;
  if (doc.contains("name")) {
    if (!doc["name"].is_string()) fail("name", "expected a string");
    spec.name = doc["name"].get<std::string>();
  }
  const Json& mode = require(doc, "mode", "");
  if (mode == "uot") {
    spec.mode = Mode::Uot;
  } else if (mode == "udc") {
    spec.mode = Mode::Udc;
  } else {
    fail("mode", "expected \"uot\" or \"udc\"");
  }

  if (doc.contains("solver")) {
    const Json& s = doc["solver"];
    if (!s.is_object()) fail("solver", "expected an object");
    reject_unknown(s, {"tolerances", "max_iterations", "mass_term"}, "solver");
    if (s.contains("tolerances")) spec.tol = tolerances_from_json(s["tolerances"], "solver.tolerances");
    if (s.contains("max_iterations")) {
      spec.max_iterations = static_cast<int>(integer(s["max_iterations"], "solver.max_iterations", 1));
    }
    if (s.contains("mass_term")) {
      if (!s["mass_term"].is_string()) fail("solver.mass_term", "expected a string");
      try {
        spec.mass_term = parse_mass_term(s["mass_term"].get<std::string>());
      } catch (const Error& e) {
        fail("solver.mass_term", e.what());
      }
    }
  }

  spec.gamma = positive(require(doc, "gamma", ""), "gamma");
  spec.alpha = measure_from_json(require(doc, "alpha", ""), "alpha", spec.tol);
  spec.beta = measure_from_json(require(doc, "beta", ""), "beta", spec.tol);
  if (spec.alpha.dim() != spec.beta.dim()) {
    fail("beta.mean", "dimension differs from alpha", ErrorCode::DimensionMismatch);
  }

  if (doc.contains("system")) {
    const Json& s = doc["system"];
    reject_unknown(s, {"A", "B", "horizon"}, "system");
    LinearSystem sys;
    sys.A = matrix_from_json(require(s, "A", "system"), "system.A");
    sys.B = matrix_from_json(require(s, "B", "system"), "system.B");
    sys.horizon = static_cast<int>(integer(require(s, "horizon", "system"), "system.horizon", 2));
    if (sys.A.rows() != spec.alpha.dim()) {
      fail("system.A", "state dimension differs from the references", ErrorCode::DimensionMismatch);
    }
    try {
      sys.validate();
    } catch (const Error& e) {
      fail("system", e.what(), e.code());
    }
    spec.system = std::move(sys);
  }
  if (spec.mode == Mode::Udc && !spec.system) fail("system", "missing (required for mode udc)");

  if (doc.contains("oracle")) {
    const Json& o = doc["oracle"];
    reject_unknown(o, {"lo", "hi", "n", "epsilons", "tolerance", "max_iterations"}, "oracle");
    if (o.contains("lo")) spec.oracle.lo = number(o["lo"], "oracle.lo");
    if (o.contains("hi")) spec.oracle.hi = number(o["hi"], "oracle.hi");
    if (spec.oracle.hi <= spec.oracle.lo) fail("oracle.hi", "must exceed oracle.lo");
    if (o.contains("n")) spec.oracle.n = static_cast<int>(integer(o["n"], "oracle.n", 8));
    if (o.contains("epsilons")) {
      const Json& e = o["epsilons"];
      if (!e.is_array() || e.empty()) fail("oracle.epsilons", "expected a non-empty array");
      spec.oracle.epsilons.clear();
      for (std::size_t i = 0; i < e.size(); ++i) {
        spec.oracle.epsilons.push_back(positive(e[i], "oracle.epsilons[" + std::to_string(i) + "]"));
      }
    }
    if (o.contains("tolerance")) spec.oracle.tolerance = positive(o["tolerance"], "oracle.tolerance");
    if (o.contains("max_iterations")) {
      spec.oracle.max_iterations = static_cast<int>(integer(o["max_iterations"], "oracle.max_iterations", 1));
    }
  }

  if (doc.contains("sim")) {
    const Json& s = doc["sim"];
    reject_unknown(s, {"samples", "seed"}, "sim");
    if (s.contains("samples")) spec.sim.samples = integer(s["samples"], "sim.samples", 1);
    if (s.contains("seed")) {
      if (!s["seed"].is_number_unsigned() && !(s["seed"].is_number_integer() && s["seed"].get<std::int64_t>() >= 0)) {
        fail("sim.seed", "expected a nonnegative integer");
      }
      spec.sim.seed = s["seed"].get<std::uint64_t>();
    }
  }
  return spec;
}

ProblemSpec load_spec(const std::filesystem::path& path) { return parse_spec(read_json(path)); }

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SpecError(ErrorCode::InvalidArgument, path.string(), "cannot open");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SpecError(ErrorCode::InvalidArgument, path.string(), e.what());
  }
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path.string());
  out << text;
}

Json to_json(const GaussianMeasure& g) {
  Json out;
  out["mass"] = g.mass();
  out["mean"] = to_json(g.mean());
  out["cov"] = to_json(g.cov());
  return out;
}

Json to_json(const SolverReport& r) {
  Json out;
  out["iterations"] = r.iterations;
  out["final_gradient_norm"] = r.final_gradient_norm;
  out["converged"] = r.converged;
  return out;
}

Json to_json(const UotSolution& s) {
  Json out;
  out["mass"] = s.mass;
  out["marginal1"] = to_json(s.marginal1);
  out["marginal2"] = to_json(s.marginal2);
  out["map"] = {{"linear", to_json(s.map.linear)}, {"offset", to_json(s.map.offset)}};
  out["subproblem_value"] = s.subproblem_value;
  out["objective"] = s.objective;
  out["report"] = to_json(s.report);
  return out;
}

Json to_json(const UdcSolution& s) {
  Json out;
  out["mass"] = s.mass;
  out["alternate_mass"] = s.alternate_mass;
  out["mean_value"] = s.mean_value;
  out["covariance_value"] = s.covariance_value;
  out["subproblem_value"] = s.subproblem_value;
  out["objective"] = s.objective;
  out["trajectory_residual"] = s.trajectory_residual;
  out["report"] = to_json(s.report);
  out["trajectory"] = {{"means", vectors(s.trajectory.means)}, {"covs", matrices(s.trajectory.covs)}};
  out["policy"] = {{"gains", matrices(s.policy.gains)},
                   {"feedforward", vectors(s.policy.feedforward)},
                   {"noise_covs", matrices(s.policy.noise_covs)},
                   {"means", vectors(s.policy.means)}};
  return out;
}

StoredPolicy policy_from_json(const Json& solution) {
  StoredPolicy out;
  out.mass = positive(require(solution, "mass", "solution"), "solution.mass");
  const Json& traj = require(solution, "trajectory", "solution");
  out.trajectory.means = vectors_from(require(traj, "means", "solution.trajectory"), "solution.trajectory.means");
  out.trajectory.covs = matrices_from(require(traj, "covs", "solution.trajectory"), "solution.trajectory.covs");
  const Json& pol = require(solution, "policy", "solution");
  out.policy.gains = matrices_from(require(pol, "gains", "solution.policy"), "solution.policy.gains");
  out.policy.feedforward = vectors_from(require(pol, "feedforward", "solution.policy"), "solution.policy.feedforward");
  out.policy.noise_covs = matrices_from(require(pol, "noise_covs", "solution.policy"), "solution.policy.noise_covs");
  out.policy.means = vectors_from(require(pol, "means", "solution.policy"), "solution.policy.means");
  if (out.trajectory.means.empty() || out.trajectory.covs.size() != out.trajectory.means.size()) {
    fail("solution.trajectory", "means and covs must be non-empty and of equal length",
         ErrorCode::DimensionMismatch);
  }
  out.m1 = out.trajectory.means.front();
  out.sigma1 = out.trajectory.covs.front();
  return out;
}

Json to_json(const OracleComparison& c) {
  Json out;
  out["closed_form_objective"] = c.closed_form.objective;
  out["closed_form_mass"] = c.closed_form.mass;
  Json runs = Json::array();
  for (const auto& r : c.runs) {
    Json run;
    run["epsilon"] = r.epsilon;
    run["objective"] = r.result.objective;
    run["transport"] = r.result.transport;
    run["kl1"] = r.result.kl1;
    run["kl2"] = r.result.kl2;
    run["entropy"] = r.result.entropy;
    run["iterations"] = r.result.iterations;
    run["converged"] = r.result.converged;
    run["marginal1"] = moments_json(r.result.marginal1);
    run["marginal2"] = moments_json(r.result.marginal2);
    runs.push_back(std::move(run));
  }
  out["runs"] = std::move(runs);
  out["extrapolated_objective"] = c.extrapolated_objective;
  out["absolute_gap"] = c.absolute_gap;
  out["relative_gap"] = finite_or_null(c.relative_gap);
  auto summary = [](const MomentSummary& m) {
    Json j;
    j["mass"] = m.mass;
    j["mean"] = to_json(m.mean);
    j["cov"] = to_json(m.cov);
    return j;
  };
  out["extrapolated_marginal1"] = summary(c.extrapolated_marginal1);
  out["extrapolated_marginal2"] = summary(c.extrapolated_marginal2);
  out["mass_gap"] = c.mass_gap;
  out["mean_gap"] = c.mean_gap;
  out["variance_gap"] = c.variance_gap;
  out["converged"] = c.converged;
  return out;
}

Json to_json(const EmpiricalMoments& m, const MomentCheck& check) {
  Json out;
  out["samples"] = m.samples;
  out["means"] = vectors(m.means);
  out["covs"] = matrices(m.covs);
  Json costs = Json::array();
  Json ses = Json::array();
  for (std::size_t k = 0; k < m.step_costs.size(); ++k) {
    costs.push_back(m.step_costs[k]);
    ses.push_back(m.step_cost_se[k]);
  }
  out["step_costs"] = std::move(costs);
  out["step_cost_se"] = std::move(ses);
  out["control_cost"] = m.control_cost;
  out["control_cost_se"] = m.control_cost_se;
  if (!m.control_means.empty()) {
    out["control_means"] = vectors(m.control_means);
    out["control_covs"] = matrices(m.control_covs);
  }
  out["check"] = {{"passed", check.passed},
                  {"checks", check.checks},
                  {"failures", check.failures},
                  {"worst_z", finite_or_null(check.worst_z)},
                  {"worst", check.worst}};
  return out;
}

double PlanRaster::total_mass() const { return density.sum() * spacing() * spacing(); }

double default_sigma_vis(const UotSolution& s) {
  const double scale = std::sqrt(std::max(s.marginal1.cov()(0, 0), s.marginal2.cov()(0, 0)));
  return 0.02 * std::max(scale, 1e-12);
}

PlanRaster rasterize_plan(const UotSolution& s, double lo, double hi, int n, double sigma_vis) {
  if (s.marginal1.dim() != 1) throw Error(ErrorCode::InvalidArgument, "plan rasterization needs a 1-D problem");
  if (!(hi > lo) || n < 2) throw Error(ErrorCode::InvalidArgument, "plan grid needs hi > lo and n >= 2");
  if (!(sigma_vis > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma_vis must be positive");
  PlanRaster r{lo, hi, n, sigma_vis, Matrix::Zero(n, n)};
  const double h = r.spacing();
  const double m = s.marginal1.mean()[0];
  const double sd = std::sqrt(std::max(s.marginal1.cov()(0, 0), 0.0));
  const double slope = s.map.linear(0, 0);
  const double offset = s.map.offset[0];
  constexpr int sub = 16;
  const double hs = h / sub;

  auto x_cdf = [&](double x) { return sd > 0.0 ? normal_cdf((x - m) / sd) : (x >= m ? 1.0 : 0.0); };
  for (int i = 0; i < n; ++i) {
    const double x0 = lo + i * h;
    for (int q = 0; q < sub; ++q) {
      const double a = x0 + q * hs;
      const double px = x_cdf(a + hs) - x_cdf(a);
      if (px <= 0.0) continue;
      const double y_mid = slope * (a + 0.5 * hs) + offset;
      for (int j = 0; j < n; ++j) {
        const double y0 = lo + j * h;
        const double py = normal_cdf((y0 + h - y_mid) / sigma_vis) - normal_cdf((y0 - y_mid) / sigma_vis);
        r.density(i, j) += px * py;
      }
    }
  }
  r.density *= s.mass / (h * h);
  return r;
}

double diagonal_band_fraction(const PlanRaster& raster, double band) {
  const double total = raster.density.sum();
  if (total <= 0.0) return 0.0;
  double inside = 0.0;
  for (int i = 0; i < raster.n; ++i) {
    for (int j = 0; j < raster.n; ++j) {
      if (std::abs(raster.center(j) - raster.center(i)) <= band) inside += raster.density(i, j);
    }
  }
  return inside / total;
}

std::string plan_csv(const PlanRaster& raster) {
  std::ostringstream out;
  out << "x,y,density\n";
  for (int i = 0; i < raster.n; ++i) {
    for (int j = 0; j < raster.n; ++j) {
      out << format_double(raster.center(i)) << ',' << format_double(raster.center(j)) << ','
          << format_double(raster.density(i, j)) << '\n';
    }
  }
  return out.str();
}

std::string trajectory_csv(const UdcSolution& s) {
  const auto& means = s.trajectory.means;
  const auto& covs = s.trajectory.covs;
  const Eigen::Index d = means.front().size();
  const Eigen::Index p = s.policy.feedforward.empty() ? 0 : s.policy.feedforward.front().size();
  std::ostringstream out;
  out << "k";
  for (Eigen::Index i = 0; i < d; ++i) out << ",m_k_" << i + 1;
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) out << ",Sigma_k_" << i + 1 << j + 1;
  }
  for (Eigen::Index i = 0; i < p; ++i) out << ",v_k_" << i + 1;
  out << ",trace_Sigma_u_k\n";
  for (std::size_t k = 0; k < means.size(); ++k) {
    out << k + 1;
    for (Eigen::Index i = 0; i < d; ++i) out << ',' << format_double(means[k][i]);
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) out << ',' << format_double(covs[k](i, j));
    }
    if (k < s.policy.feedforward.size()) {
      for (Eigen::Index i = 0; i < p; ++i) out << ',' << format_double(s.policy.feedforward[k][i]);
      out << ',' << format_double(s.policy.noise_covs[k].trace());
    } else {
      for (Eigen::Index i = 0; i < p; ++i) out << ',';
      out << ',';
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace uotdc
