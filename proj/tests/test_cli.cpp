#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "oracles/json_schema.hpp"

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

const std::string kCli = GRFX_CLI_PATH;
const std::string kConfigs = GRFX_CONFIG_DIR;

fs::path scratch() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / ("grfx_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Run {
  int exit_code = -1;
  std::string out, err;
  json doc;
};

Run run(const std::string& args, const std::string& tag) {
  const fs::path out = scratch() / (tag + ".json");
  const fs::path err = scratch() / (tag + ".err");
  fs::remove(out);
  const std::string cmd = "'" + kCli + "' " + args + " --out '" + out.string() + "' 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err);
  if (fs::exists(out)) {
    r.out = slurp(out);
    r.doc = json::parse(r.out);
  }
  return r;
}

std::string cfg(const std::string& name) { return "--config '" + kConfigs + "/" + name + "'"; }

fs::path write_config(const json& j, const std::string& tag) {
  const fs::path p = scratch() / (tag + ".cfg.json");
  std::ofstream(p) << j.dump(2);
  return p;
}

json without_run(json doc) {
  doc.erase("run");
  return doc;
}

const oracle::SchemaValidator& schema() {
  static const oracle::SchemaValidator v(json::parse(slurp(GRFX_SCHEMA_PATH)));
  return v;
}

void expect_schema_valid(const json& doc) {
  const auto errors = schema().validate(doc);
  for (const auto& e : errors) ADD_FAILURE() << e;
}

void expect_error_line(const Run& r, const std::string& code) {
  std::string line = r.err.substr(r.err.find('{'));
  ASSERT_EQ(std::count(line.begin(), line.end(), '\n'), 1) << r.err;
  const json e = json::parse(line);
  EXPECT_EQ(e.at("error"), code);
  EXPECT_TRUE(e.at("message").is_string());
}

TEST(SchemaValidator, RejectsMalformedDocuments) {
  json doc = {{"schema_version", "1.0.0"}, {"command", "asymptotic"}, {"seed", 1}};
  EXPECT_FALSE(schema().validate(doc).empty());
  const auto r = run("asymptotic " + cfg("asymptotic_unit.json"), "schema_base");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  json bad = r.doc;
  bad["result"]["log_v"] = "x";
  EXPECT_FALSE(schema().validate(bad).empty());
  bad = r.doc;
  bad["unexpected"] = 1;
  EXPECT_FALSE(schema().validate(bad).empty());
}

TEST(Cli, EveryCommandEmitsSchemaValidOutput) {
  const std::pair<const char*, const char*> cases[] = {
      {"estimate", "tiny.json"},        {"crude", "tiny.json"},
      {"asymptotic", "asymptotic_unit.json"}, {"conditional", "conditional_argmax.json"},
      {"diagnostic", "diagnostic_se.json"},   {"validate", "validate_steep.json"},
      {"sweep", "sweep_se.json"},       {"estimate", "estimate_se.json"}};
  int k = 0;
  for (const auto& [command, file] : cases) {
    const auto r = run(std::string(command) + " " + cfg(file), "all_" + std::to_string(k++));
    ASSERT_EQ(r.exit_code, 0) << command << ": " << r.err;
    EXPECT_EQ(r.doc.at("command"), command);
    expect_schema_valid(r.doc);
  }
}

TEST(Cli, RepeatedRunsAreIdenticalExceptRunBlock) {
  const auto a = run("estimate " + cfg("tiny.json"), "det_a");
  const auto b = run("estimate " + cfg("tiny.json") + " --workers 3", "det_b");
  ASSERT_EQ(a.exit_code, 0);
  ASSERT_EQ(b.exit_code, 0);
  EXPECT_EQ(without_run(a.doc).dump(), without_run(b.doc).dump());
  EXPECT_EQ(b.doc.at("run").at("workers"), 3);
}

TEST(Cli, SeedOverrideChangesTheEstimate) {
  const auto a = run("estimate " + cfg("tiny.json"), "seed_a");
  const auto b = run("estimate " + cfg("tiny.json") + " --seed 99", "seed_b");
  ASSERT_EQ(b.exit_code, 0);
  EXPECT_EQ(b.doc.at("seed"), 99);
  EXPECT_EQ(b.doc.at("effective_config").at("seed"), 99);
  EXPECT_NE(a.doc["result"]["estimate"]["v_hat"], b.doc["result"]["estimate"]["v_hat"]);
}

TEST(Cli, AsymptoticDoublingDomainAddsLogTwo) {
  const auto one = run("asymptotic " + cfg("asymptotic_unit.json"), "asy_1");
  const auto two = run("asymptotic " + cfg("asymptotic_double.json"), "asy_2");
  ASSERT_EQ(one.exit_code, 0);
  ASSERT_EQ(two.exit_code, 0);
  const double diff = two.doc["result"]["log_v"].get<double>() - one.doc["result"]["log_v"].get<double>();
  EXPECT_NEAR(diff, std::log(2.0), 1e-9);
}

TEST(Cli, EffectiveConfigReproducesTheRun) {
  const auto first = run("estimate " + cfg("estimate_se.json"), "eff_a");
  ASSERT_EQ(first.exit_code, 0) << first.err;
  EXPECT_TRUE(first.doc["threshold"]["approximate"].get<bool>());
  EXPECT_TRUE(first.doc["effective_config"]["target"].contains("log_b"));
  const auto path = write_config(first.doc["effective_config"], "eff");
  const auto second = run("estimate --config '" + path.string() + "'", "eff_b");
  ASSERT_EQ(second.exit_code, 0) << second.err;
  EXPECT_EQ(first.doc["result"].dump(), second.doc["result"].dump());
  EXPECT_EQ(first.doc["diagnostics"].dump(), second.doc["diagnostics"].dump());
  EXPECT_EQ(first.doc["effective_config"].dump(), second.doc["effective_config"].dump());
}

TEST(Cli, PartialTuningOverridesAreResolvedAndRecorded) {
  json c = json::parse(slurp(kConfigs + "/tiny.json"));
  c["target"] = {{"log_b", 6.0}};
  c["tuning"] = {{"rho2", 0.05}};
  const auto r = run("estimate --config '" + write_config(c, "tune").string() + "'", "tune");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto& t = r.doc["diagnostics"]["tuning"];
  EXPECT_DOUBLE_EQ(t["rho2"].get<double>(), 0.05);
  EXPECT_DOUBLE_EQ(t["rho1"].get<double>(), 0.2);
  EXPECT_FALSE(t["from_schedule"].get<bool>());
  EXPECT_EQ(r.doc["effective_config"]["tuning"].size(), 5u);
}

TEST(Cli, SweepWritesOneCsvRowPerTarget) {
  const fs::path csv = scratch() / "sweep_rows.csv";
  const auto r = run("sweep " + cfg("sweep_se.json") + " --csv '" + csv.string() + "'", "sweep_rows");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(r.doc["result"]["rows"].size(), 4u);
  std::ifstream in(csv);
  std::string line;
  int lines = 0;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("index,log_b,", 0), 0u);
  while (std::getline(in, line))
    if (!line.empty()) ++lines;
  EXPECT_EQ(lines, 4);
  const auto& sw = r.doc["effective_config"]["sweep"];
  ASSERT_TRUE(sw.contains("log_b"));
  EXPECT_EQ(sw["log_b"].size(), 4u);
  double prev = 0.0;
  for (const auto& row : r.doc["result"]["rows"]) {
    const double lb = row["threshold"]["log_b"].get<double>();
    EXPECT_GT(lb, prev);
    prev = lb;
    EXPECT_NEAR(row["log10_v_asymptotic"].get<double>(), row["threshold"]["requested_log10_v"].get<double>(), 1e-8);
  }
}

TEST(Cli, ValidateReportsAllChecksAndStandardizes) {
  const auto r = run("validate " + cfg("validate_steep.json"), "validate");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto& res = r.doc["result"];
  EXPECT_EQ(res["checks"].size(), 7u);
  bool c4_failed = false;
  for (const auto& c : res["checks"])
    if (c["name"] == "C4_hessian") c4_failed = c["status"] == "fail";
  EXPECT_TRUE(c4_failed);
  EXPECT_TRUE(res["standardization"]["applied"].get<bool>());
  EXPECT_TRUE(res["standardization"]["ok"].get<bool>());
  EXPECT_NEAR(res["standardization"]["log_jacobian"].get<double>(), std::log(0.25), 1e-9);
}

TEST(Cli, ConditionalArgmaxConcentratesAtTheMeanPeak) {
  const auto r = run("conditional " + cfg("conditional_argmax.json"), "cond");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NEAR(r.doc["result"]["value"].get<double>(), 4.0, 0.5);
  EXPECT_GT(r.doc["result"]["hits"].get<int>(), 100);
}

TEST(Cli, ConfigErrorsExitWithTwo) {
  auto r = run("estimate " + cfg("bad_sigma.json"), "bad_sigma");
  EXPECT_EQ(r.exit_code, 2);
  expect_error_line(r, "config_invalid");
  EXPECT_TRUE(r.out.empty());

  r = run("estimate --config /nonexistent/grfx.json", "missing");
  EXPECT_EQ(r.exit_code, 2);
  expect_error_line(r, "config_invalid");

  r = run("frobnicate " + cfg("tiny.json"), "bad_command");
  EXPECT_EQ(r.exit_code, 2);

  r = run("asymptotic " + cfg("estimate_se.json"), "mismatch");
  EXPECT_EQ(r.exit_code, 2);

  const fs::path malformed = scratch() / "malformed.json";
  std::ofstream(malformed) << "{\"model\": ";
  r = run("estimate --config '" + malformed.string() + "'", "malformed");
  EXPECT_EQ(r.exit_code, 2);

  json c = json::parse(slurp(kConfigs + "/tiny.json"));
  c["replcates"] = 10;
  r = run("estimate --config '" + write_config(c, "typo").string() + "'", "typo");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("replcates"), std::string::npos);

  c = json::parse(slurp(kConfigs + "/tiny.json"));
  c["target"] = {{"b", 10.0}, {"log_b", 3.0}};
  r = run("estimate --config '" + write_config(c, "two_targets").string() + "'", "two_targets");
  EXPECT_EQ(r.exit_code, 2);

  c = json::parse(slurp(kConfigs + "/tiny.json"));
  c["tuning"] = {{"rho1", 0.7}, {"rho2", 0.7}};
  r = run("estimate --config '" + write_config(c, "bad_tuning").string() + "'", "bad_tuning");
  EXPECT_EQ(r.exit_code, 2);
}

TEST(Cli, NumericalErrorsExitWithThree) {
  auto r = run("estimate " + cfg("small_b.json"), "small_b");
  EXPECT_EQ(r.exit_code, 3);
  expect_error_line(r, "b_too_small");

  json c = json::parse(slurp(kConfigs + "/tiny.json"));
  c["max_dimension"] = 10;
  r = run("estimate --config '" + write_config(c, "budget").string() + "'", "budget");
  EXPECT_EQ(r.exit_code, 3);
  expect_error_line(r, "out_of_range");
}

}  // namespace
