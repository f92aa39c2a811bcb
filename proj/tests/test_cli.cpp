#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "uotdc/cli.hpp"
#include "uotdc/io.hpp"

using namespace uotdc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("uotdc_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "uotdc");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

fs::path write_spec(const fs::path& dir, const Json& doc) {
  const fs::path p = dir / "spec.json";
  write_text(p, dump(doc));
  return p;
}

Json uot_doc() {
  return Json::parse(R"({
    "mode": "uot", "gamma": 1.0,
    "alpha": {"mass": 1.0, "mean": [-1.0], "cov": [[0.5]]},
    "beta": {"mass": 1.0, "mean": [1.0], "cov": [[0.3]]}
  })");
}

Json udc_doc() {
  return Json::parse(R"({
    "mode": "udc", "gamma": 3.0,
    "alpha": {"mass": 1.0, "mean": [-1.0, 0.0], "cov": [[0.5, 0.0], [0.0, 0.2]]},
    "beta": {"mass": 0.8, "mean": [1.0, 0.0], "cov": [[0.2, 0.05], [0.05, 0.1]]},
    "system": {"A": [[1.0, 0.1], [0.0, 1.0]], "B": [[0.005], [0.1]], "horizon": 6},
    "sim": {"samples": 20000, "seed": 3}
  })");
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Spec, ValidationNamesTheField) {
  Json doc = uot_doc();
  doc["beta"]["cov"] = Json::parse("[[1.0, 0.5], [0.0, 1.0]]");
  doc["beta"]["mean"] = Json::parse("[0.0, 0.0]");
  doc["alpha"]["mean"] = Json::parse("[0.0, 0.0]");
  doc["alpha"]["cov"] = Json::parse("[[1.0, 0.0], [0.0, 1.0]]");
  try {
    parse_spec(doc);
    FAIL();
  } catch (const SpecError& e) {
    EXPECT_EQ(e.field(), "beta.cov");
    EXPECT_EQ(e.code(), ErrorCode::NotSymmetric);
  }
  Json bad = uot_doc();
  bad["gama"] = 1.0;
  EXPECT_THROW(parse_spec(bad), SpecError);
  bad = uot_doc();
  bad["alpha"]["mass"] = -1.0;
  try {
    parse_spec(bad);
    FAIL();
  } catch (const SpecError& e) {
    EXPECT_EQ(e.field(), "alpha.mass");
  }
  bad = uot_doc();
  bad["mode"] = "udc";
  EXPECT_THROW(parse_spec(bad), SpecError);
}

TEST(Spec, SymmetrizesWithinTolerance) {
  Json doc = uot_doc();
  doc["alpha"] = Json::parse(R"({"mass": 1.0, "mean": [0.0, 0.0], "cov": [[1.0, 0.2], [0.2000000000001, 1.0]]})");
  doc["beta"] = doc["alpha"];
  const ProblemSpec s = parse_spec(doc);
  EXPECT_EQ(s.alpha.cov()(0, 1), s.alpha.cov()(1, 0));
}

TEST(Spec, DoublesRoundTripExactly) {
  for (double x : {0.1, 1.0 / 3.0, 1e-300, 6.02214076e23, -2.5}) {
    EXPECT_EQ(std::stod(format_double(x)), x);
    const Json j = Json::parse(dump(Json(x)));
    EXPECT_EQ(j.get<double>(), x);
  }
}

TEST(Cli, UotWritesSolutionAndPlan) {
  const fs::path dir = scratch("uot");
  const fs::path spec = write_spec(dir, uot_doc());
  ASSERT_EQ(run({"uot", spec.string(), "--plan-grid", "-4", "4", "50", "--out-dir", dir.string()}), 0);
  const std::string plan = read_file(dir / "plan.csv");
  EXPECT_EQ(count_lines(plan), 50u * 50u + 1u);
  EXPECT_EQ(plan.substr(0, 12), "x,y,density\n");
  const Json bundle = read_json(dir / "solution.json");
  EXPECT_EQ(bundle["command"], "uot");
  EXPECT_TRUE(bundle["solution"]["report"]["converged"].get<bool>());
  EXPECT_GT(bundle["plan_grid"]["sigma_vis"].get<double>(), 0.0);
}

TEST(Cli, SolutionJsonRoundTripsByteIdentical) {
  const fs::path dir = scratch("roundtrip");
  const fs::path spec = write_spec(dir, udc_doc());
  ASSERT_EQ(run({"udc", spec.string(), "--out-dir", dir.string()}), 0);
  const std::string text = read_file(dir / "solution.json");
  EXPECT_EQ(dump(Json::parse(text)), text);
}

TEST(Cli, IdentityInstanceReturnsReferenceMass) {
  const fs::path dir = scratch("identity");
  Json doc = uot_doc();
  doc["alpha"]["mass"] = 2.5;
  doc["beta"] = doc["alpha"];
  const fs::path spec = write_spec(dir, doc);
  ASSERT_EQ(run({"uot", spec.string(), "--out-dir", dir.string()}), 0);
  const Json bundle = read_json(dir / "solution.json");
  EXPECT_NEAR(bundle["solution"]["mass"].get<double>(), 2.5, 1e-6);
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("exit");
  Json doc = uot_doc();
  doc["alpha"]["mean"] = Json::parse("[0.0, 0.0]");
  doc["alpha"]["cov"] = Json::parse("[[1.0, 0.3], [0.0, 1.0]]");
  doc["beta"] = doc["alpha"];
  EXPECT_EQ(run({"uot", write_spec(dir, doc).string(), "--out-dir", dir.string()}), 2);
  EXPECT_EQ(run({"uot", (dir / "missing.json").string()}), 2);
  EXPECT_EQ(run({"nonsense"}), 2);

  Json infeasible = udc_doc();
  infeasible["system"]["A"] = Json::parse("[[0.0, 0.0], [0.0, 0.0]]");
  EXPECT_EQ(run({"udc", write_spec(dir, infeasible).string(), "--out-dir", dir.string()}), 4);

  Json narrow = uot_doc();
  narrow["oracle"] = Json::parse(R"({"lo": -2.0, "hi": 2.0, "n": 100})");
  EXPECT_EQ(run({"oracle", write_spec(dir, narrow).string(), "--out-dir", dir.string()}), 2);
}

TEST(Cli, UdcTrajectoryAndCrossCheck) {
  const fs::path dir = scratch("udc");
  ASSERT_EQ(run({"udc", write_spec(dir, udc_doc()).string(), "--out-dir", dir.string()}), 0);
  const std::string csv = read_file(dir / "trajectory.csv");
  EXPECT_EQ(count_lines(csv), 6u + 1u);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "k,m_k_1,m_k_2,Sigma_k_11,Sigma_k_12,Sigma_k_21,Sigma_k_22,v_k_1,trace_Sigma_u_k");

  Json one = udc_doc();
  one["system"] = Json::parse(R"({"A": [[1.0, 0.0], [0.0, 1.0]], "B": [[1.0, 0.0], [0.0, 1.0]], "horizon": 2})");
  ASSERT_EQ(run({"udc", write_spec(dir, one).string(), "--cross-check", "uot", "--mass-term", "gamma-psi",
                 "--out-dir", dir.string()}),
            0);
  const Json bundle = read_json(dir / "solution.json");
  EXPECT_EQ(bundle["mass_term"], "gamma-psi");
  EXPECT_EQ(bundle["alternate_mass_term"], "psi");
  EXPECT_TRUE(bundle["solution"].contains("alternate_mass"));
  // The static solver uses the psi reading, which the alternate mass reproduces.
  EXPECT_NEAR(bundle["solution"]["alternate_mass"].get<double>(), bundle["cross_check"]["uot_mass"].get<double>(),
              1e-6 * bundle["cross_check"]["uot_mass"].get<double>());
}

TEST(Cli, CrossCheckAgreesUnderDefaultMassTerm) {
  const fs::path dir = scratch("cross");
  Json one = udc_doc();
  one["system"] = Json::parse(R"({"A": [[1.0, 0.0], [0.0, 1.0]], "B": [[1.0, 0.0], [0.0, 1.0]], "horizon": 2})");
  ASSERT_EQ(run({"udc", write_spec(dir, one).string(), "--cross-check", "uot", "--out-dir", dir.string()}), 0);
  const Json bundle = read_json(dir / "solution.json");
  EXPECT_LT(bundle["cross_check"]["relative_gap"].get<double>(), 1e-4);
}

TEST(Cli, SimulateIsDeterministic) {
  const fs::path dir = scratch("sim");
  const fs::path spec = write_spec(dir, udc_doc());
  ASSERT_EQ(run({"udc", spec.string(), "--out-dir", dir.string()}), 0);
  ASSERT_EQ(run({"simulate", spec.string(), "--solution", (dir / "solution.json").string(), "--out-dir",
                 (dir / "a").string()}),
            0);
  ASSERT_EQ(run({"simulate", spec.string(), "--out-dir", (dir / "b").string()}), 0);
  EXPECT_EQ(read_file(dir / "a" / "sim.json"), read_file(dir / "b" / "sim.json"));
  ASSERT_EQ(run({"simulate", spec.string(), "--seed", "4", "--samples", "1000", "--out-dir", (dir / "c").string()}),
            0);
  const Json c = read_json(dir / "c" / "sim.json");
  EXPECT_EQ(c["simulation"]["samples"].get<int>(), 1000);
  EXPECT_TRUE(c["simulation"]["check"]["passed"].get<bool>());
}

TEST(Cli, OracleReport) {
  const fs::path dir = scratch("oracle");
  Json doc = uot_doc();
  doc["oracle"] = Json::parse(R"({"lo": -6.0, "hi": 6.0, "n": 200})");
  ASSERT_EQ(run({"oracle", write_spec(dir, doc).string(), "--epsilon-list", "0.08", "0.04", "0.02", "--out-dir",
                 dir.string()}),
            0);
  const Json report = read_json(dir / "oracle.json");
  EXPECT_EQ(report["comparison"]["runs"].size(), 3u);
  EXPECT_LT(report["comparison"]["relative_gap"].get<double>(), 0.02);
}
