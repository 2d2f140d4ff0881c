#include "cstab/report.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "cstab/simulator.hpp"

namespace cstab {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("cstab_report_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

const char* kWaveScenario = R"({
  "model": "wave-modal-case2",
  "gallery": {"modes": 8},
  "seed": 3,
  "analyses": [
    {"certify": {"T": 2.0}},
    "synthesize",
    {"name": "simulate", "runs": 2, "t_end": 5},
    "envelope-check",
    {"robustness": {"probes": [0.5]}}
  ]
})";

GTEST_TEST(ParseTest, ErrorsCarryLineAndColumn) {
  try {
    parse_json("{\n  \"model\": \"x\",\n  oops\n}", "bad.json");
    FAIL() << "expected a parse error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
    EXPECT_NE(std::string(e.what()).find("bad.json:3:"), std::string::npos) << e.what();
  }
}

GTEST_TEST(ParseTest, MatrixLiterals) {
  const Matrix m = matrix_from_json(nlohmann::json::parse("[[1, 2], [3, 4]]"), "A");
  EXPECT_EQ(m(1, 0), 3);
  EXPECT_EQ(matrix_to_json(m).dump(), "[[1.0,2.0],[3.0,4.0]]");
  EXPECT_THROW(matrix_from_json(nlohmann::json::parse("[[1, 2], [3]]"), "A"), Error);
  EXPECT_THROW(matrix_from_json(nlohmann::json::parse("[[1, \"x\"]]"), "A"), Error);
}

GTEST_TEST(ParseTest, ScenarioShapes) {
  const Scenario s = parse_scenario(kWaveScenario);
  ASSERT_EQ(s.analyses.size(), 5u);
  EXPECT_EQ(s.analyses[0].name, "certify");
  EXPECT_EQ(s.analyses[0].params.at("T"), 2.0);
  EXPECT_EQ(s.analyses[2].name, "simulate");
  EXPECT_EQ(s.analyses[2].params.at("runs"), 2);
  EXPECT_FALSE(s.analyses[2].params.contains("name"));
  EXPECT_EQ(s.seed, 3u);
  EXPECT_THROW(parse_scenario(R"({"model": "x", "analyses": ["bogus"]})"), Error);
  EXPECT_THROW(parse_scenario(R"({"model": "x", "analyses": [], "extra": 1})"), Error);
  EXPECT_THROW(parse_scenario(R"({"analyses": []})"), Error);
}

GTEST_TEST(ScenarioTest, UnknownModelListsGalleryIds) {
  Scenario s;
  s.model_ref = "no-such-model";
  s.analyses.push_back({"certify", nlohmann::json::object()});
  const ScenarioResult r = run_scenario(s, false, false);
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_EQ(r.report.at("status"), "error");
  EXPECT_EQ(r.report.at("error").at("code"), "unknown-id");
  const std::string message = r.report.at("error").at("message");
  for (const std::string& id : gallery::ids()) EXPECT_NE(message.find(id), std::string::npos) << id;
}

GTEST_TEST(ScenarioTest, StageErrorsNameTheStage) {
  Scenario s;
  s.model_ref = "identity-B";
  s.analyses.push_back({"synthesize", nlohmann::json::object()});
  const ScenarioResult r = run_scenario(s, false, false);
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.report.at("error").at("message").get<std::string>().find("synthesize#1"),
            std::string::npos);
}

GTEST_TEST(ScenarioTest, WavePipelineEndToEnd) {
  Scenario s = parse_scenario(kWaveScenario);
  const fs::path dir = scratch_dir("wave");
  s.output_dir = dir.string();
  const ScenarioResult r = run_scenario(s);
  ASSERT_EQ(r.exit_code, 0) << r.report.dump(2);
  const auto& stages = r.report.at("stages");
  ASSERT_EQ(stages.size(), 5u);
  EXPECT_GE(stages[0].at("result").at("delta").get<double>(), 1 - 1e-6);
  EXPECT_EQ(stages[1].at("result").at("certificate"), "certify#1");
  EXPECT_TRUE(stages[1].at("result").at("hypotheses").at("contraction").get<bool>());
  EXPECT_EQ(stages[2].at("result").at("envelope"), "synthesize#2");
  EXPECT_TRUE(stages[3].at("result").at("pass").get<bool>());
  EXPECT_EQ(stages[4].at("result").at("validation_runs").size(), 3u);
  for (const auto& run : stages[2].at("result").at("runs")) {
    EXPECT_TRUE(run.at("dissipation_audit").at("pass").get<bool>());
  }
  for (const char* f : {"report.json", "summary.txt", "stage3_run0.csv", "stage3_run1.csv",
                        "stage3_plot.csv"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "report.json")), r.report);
  EXPECT_NE(r.summary.find("envelope holds"), std::string::npos) << r.summary;
  fs::remove_all(dir);
}

GTEST_TEST(ScenarioTest, ReportsAreDeterministic) {
  const Scenario s = parse_scenario(kWaveScenario);
  const ScenarioResult a = run_scenario(s, false, false);
  const ScenarioResult b = run_scenario(s, false, false);
  EXPECT_EQ(a.report.dump(2), b.report.dump(2));
  EXPECT_EQ(a.summary, b.summary);
}

GTEST_TEST(ScenarioTest, AcceptanceModeFlagsMismatches) {
  Scenario ok;
  ok.model_ref = "identity-B";
  ok.analyses.push_back({"certify", nlohmann::json::object()});
  EXPECT_EQ(run_scenario(ok, true, false).exit_code, 0);

  // The claimed transport certificate does not hold; acceptance mode says so.
  Scenario bad;
  bad.model_ref = "transport-case1";
  bad.gallery_options = {{"transport_h", 1.0 / 64}};
  bad.analyses.push_back({"certify", nlohmann::json::object()});
  const ScenarioResult r = run_scenario(bad, true, false);
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_GT(r.report.at("mismatches").get<int>(), 0);
}

GTEST_TEST(ScenarioTest, OutputDirFromEnvironment) {
  const fs::path dir = scratch_dir("env");
  ASSERT_EQ(setenv("CSTAB_OUTPUT_DIR", dir.c_str(), 1), 0);
  EXPECT_EQ(default_output_dir(), dir.string());
  Scenario s;
  s.model_ref = "scalar-abs";
  s.analyses.push_back({"certify", nlohmann::json::object()});
  EXPECT_EQ(run_scenario(s).exit_code, 0);
  EXPECT_TRUE(fs::exists(dir / "report.json"));
  unsetenv("CSTAB_OUTPUT_DIR");
  EXPECT_EQ(default_output_dir(), "cstab-out");
  fs::remove_all(dir);
}

GTEST_TEST(ModelFileTest, DenseDefinitionAndExportRoundTrip) {
  const fs::path dir = scratch_dir("model");
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "m.json");
    out << R"({"id": "damped", "A": [[0, 1], [-1, 0]], "B": [[1, 0], [0, 1]],
               "semigroup_class": "isometry", "horizon_T": 2})";
  }
  const ResolvedModel r = resolve_model((dir / "m.json").string());
  EXPECT_EQ(r.model.id, "damped");
  EXPECT_EQ(r.model.size(), 2);
  EXPECT_EQ(r.horizon_T, 2);
  EXPECT_FALSE(r.entry.has_value());

  {
    std::ofstream out(dir / "export.json");
    out << gallery::export_model(gallery::load("jordan-indefinite")).dump();
  }
  const ResolvedModel e = resolve_model((dir / "export.json").string());
  const gallery::GalleryEntry g = gallery::load("jordan-indefinite");
  EXPECT_TRUE(e.model.A.matrix().isApprox(g.model.A.matrix()));
  EXPECT_EQ(e.horizon_T, g.horizon_T);

  {
    std::ofstream out(dir / "bad.json");
    out << R"({"A": [[0]], "B": [[1]], "colour": 1})";
  }
  EXPECT_THROW(resolve_model((dir / "bad.json").string()), Error);
  fs::remove_all(dir);
}

Trajectory decaying(const std::string& model, double rate, double dt, int samples) {
  Trajectory t;
  t.model_id = model;
  for (int k = 0; k < samples; ++k) {
    t.times.push_back(k * dt);
    t.norms.push_back(std::exp(-rate * k * dt));
    t.forms.push_back(0.0);
    t.controls.push_back(0.0);
  }
  return t;
}

GTEST_TEST(PlotDataTest, ColumnsAndEnvelope) {
  GainEnvelope env;
  env.sigma = 0.1;
  env.M_env = 2.0;
  std::ostringstream out;
  std::string warning;
  emit_plot_data({decaying("m", 0.5, 0.1, 11)}, env, out, &warning);
  EXPECT_TRUE(warning.empty());
  const auto rows = csv_rows(out.str());
  ASSERT_EQ(rows.size(), 12u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"t", "norm_0", "envelope"}));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double t = std::stod(rows[i][0]);
    EXPECT_NEAR(std::stod(rows[i][1]), std::exp(-0.5 * t), 1e-15);
    EXPECT_NEAR(std::stod(rows[i][2]), 2.0 * std::exp(-0.1 * t), 1e-15);
    EXPECT_GE(std::stod(rows[i][2]), std::stod(rows[i][1]));
  }
}

GTEST_TEST(PlotDataTest, ResamplesAndWarnsAcrossModels) {
  std::ostringstream out;
  std::string warning;
  // Second run sampled twice as coarsely and ending early.
  emit_plot_data({decaying("a", 1.0, 0.1, 11), decaying("b", 0.0, 0.2, 3)}, std::nullopt, out,
                 &warning);
  EXPECT_NE(warning.find("different models"), std::string::npos);
  const auto rows = csv_rows(out.str());
  ASSERT_EQ(rows.size(), 12u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"t", "norm_0", "norm_1"}));
  EXPECT_EQ(std::stod(rows[2][2]), 1.0);  // t = 0.1, interpolated
  EXPECT_TRUE(rows[11][2].empty());       // t = 1.0 lies beyond the second run
}

GTEST_TEST(PlotDataTest, EmptySetIsRejected) {
  std::ostringstream out;
  EXPECT_THROW(emit_plot_data({}, std::nullopt, out), Error);
}

}  // namespace
}  // namespace cstab
