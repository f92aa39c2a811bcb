#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "uotdc/error.hpp"
#include "uotdc/grid_oracle.hpp"
#include "uotdc/sim.hpp"
#include "uotdc/udc.hpp"
#include "uotdc/uot.hpp"

namespace uotdc {

using Json = nlohmann::ordered_json;

/// Validation failure in an input document; `field` is a dotted path such as "beta.cov".
class SpecError : public Error {
 public:
  SpecError(ErrorCode code, std::string field, const std::string& what)
      : Error(code, field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class Mode { Uot, Udc };

struct OracleSettings {
  double lo = -8.0;
  double hi = 8.0;
  int n = 400;
  std::vector<double> epsilons{0.05, 0.02, 0.01};
  double tolerance = 1e-9;
  int max_iterations = 50000;
};

struct SimSettings {
  std::int64_t samples = 100000;
  std::uint64_t seed = 0;
};

struct ProblemSpec {
  Mode mode = Mode::Uot;
  std::string name;
  double gamma = 1.0;
  GaussianMeasure alpha;
  GaussianMeasure beta;
  std::optional<LinearSystem> system;
  Tolerances tol;
  int max_iterations = 10000;
  MassTerm mass_term = MassTerm::Psi;
  OracleSettings oracle;
  SimSettings sim;
  Json echo;  // the document as read

  UotProblem uot_problem() const;
  UdcProblem udc_problem() const;
  OracleOptions oracle_options() const;
};

ProblemSpec parse_spec(const Json& doc);
ProblemSpec load_spec(const std::filesystem::path& path);

/// Shortest decimal that parses back to the same double.
std::string format_double(double x);

Json to_json(const Vector& v);
Json to_json(const Matrix& m);
Vector vector_from_json(const Json& j, const std::string& field);
Matrix matrix_from_json(const Json& j, const std::string& field);

Json to_json(const GaussianMeasure& g);
Json to_json(const SolverReport& r);
Json to_json(const UotSolution& s);
Json to_json(const UdcSolution& s);
Json to_json(const OracleComparison& c);
Json to_json(const EmpiricalMoments& m, const MomentCheck& check);

/// Reads back the mass, initial moments and policy written by `to_json(const UdcSolution&)`.
struct StoredPolicy {
  double mass = 0.0;
  Vector m1;
  Matrix sigma1;
  AffinePolicy policy;
  MomentTrajectory trajectory;
};
StoredPolicy policy_from_json(const Json& solution);

std::string dump(const Json& j);
Json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Rasterized density of a one-dimensional plan on [lo, hi]^2; y | x ~ N(T x + b, sigma_vis^2).
struct PlanRaster {
  double lo = 0.0;
  double hi = 0.0;
  int n = 0;
  double sigma_vis = 0.0;
  Matrix density;  // density(i, j) at x_i (row), y_j (column): cell mass / cell area

  double spacing() const { return (hi - lo) / n; }
  double center(int i) const { return lo + (i + 0.5) * spacing(); }
  double total_mass() const;
};

/// Default jitter: 2% of the larger marginal standard deviation.
double default_sigma_vis(const UotSolution& s);
PlanRaster rasterize_plan(const UotSolution& s, double lo, double hi, int n, double sigma_vis);
/// Fraction of the raster mass in cells with |y - x| <= band.
double diagonal_band_fraction(const PlanRaster& raster, double band);

std::string plan_csv(const PlanRaster& raster);
std::string trajectory_csv(const UdcSolution& s);

}  // namespace uotdc
