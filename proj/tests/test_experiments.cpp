#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "emot/experiments.hpp"

namespace emot {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("emot_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

int run_cli(const fs::path& dir, const nlohmann::json& cfg, const std::string& command, const std::string& env = "") {
  const auto path = dir / "config.json";
  std::ofstream(path) << cfg.dump();
  const std::string cmd = env + " " + EMOT_CLI_PATH + " --config " + path.string() + " " + command + " >" +
                          (dir / "stdout.txt").string() + " 2>" + (dir / "stderr.txt").string();
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

TEST(Config, Defaults) {
  const auto cfg = config_from_json(nlohmann::json::object());
  EXPECT_EQ(cfg.instance_name, "two_boxes");
  EXPECT_EQ(cfg.d, 2);
  EXPECT_EQ(cfg.grid.h_long, 0.5);
  EXPECT_TRUE(cfg.eps_list.empty());
}

TEST(Config, Rejections) {
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"eps_list": [0.1, -0.2]})")), Error);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"schedule": [[0.1, 0.05]]})")), Error);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"d": "two"})")), Error);
  const auto cfg = config_from_json(nlohmann::json::parse(R"({"instance": "triangle"})"));
  EXPECT_THROW(resolve_instance(cfg), Error);
}

TEST(Config, InlineInstance) {
  nlohmann::json j;
  j["instance"] = to_json(make_section62(2));
  EXPECT_EQ(to_json(resolve_instance(config_from_json(j))), to_json(make_section62(2)));
}

TEST(Config, DefaultSchedule) {
  const auto p = default_schedule_point(0.4);
  EXPECT_EQ(p.h_long, 0.05);
  EXPECT_EQ(p.h_trans, 0.1);
  const auto q = default_schedule_point(0.01);
  EXPECT_EQ(q.h_long, 0.005);
  EXPECT_EQ(q.h_trans, 0.05);
}

TEST(Cli, ValidateReportsGaps) {
  const auto dir = scratch("validate");
  EXPECT_EQ(run_cli(dir, {{"instance", "section62"}, {"output_dir", dir.string()}}, "validate"), 0);
  const auto rep = nlohmann::json::parse(slurp(dir / "validate.json"));
  EXPECT_TRUE(rep["ok"].get<bool>());
  ASSERT_EQ(rep["certificates"].size(), 2u);
  EXPECT_EQ(rep["certificates"][0]["h"].get<double>(), 0.5);
  EXPECT_TRUE(fs::exists(dir / "run.json"));
}

TEST(Cli, ValidationFailureExitCode) {
  const auto dir = scratch("invalid");
  auto inst = to_json(make_two_boxes(2, 3.0));
  inst["g1"] = nlohmann::json::array({nlohmann::json::array({-2.0, -1.0, 1.0})});
  EXPECT_EQ(run_cli(dir, {{"instance", inst}, {"output_dir", dir.string()}}, "validate"), 2);
  EXPECT_FALSE(nlohmann::json::parse(slurp(dir / "validate.json"))["ok"].get<bool>());
  EXPECT_EQ(run_cli(dir, {{"instance", inst}, {"output_dir", dir.string()}}, "ray-solve"), 2);
}

TEST(Cli, MalformedConfig) {
  const auto dir = scratch("malformed");
  std::ofstream(dir / "config.json") << "{\n  \"instance\": \"two_boxes\",\n  \"d\": \n}";
  const std::string cmd = std::string(EMOT_CLI_PATH) + " --config " + (dir / "config.json").string() +
                          " validate 2>" + (dir / "err.txt").string();
  const int rc = std::system(cmd.c_str());
  EXPECT_EQ(WEXITSTATUS(rc), 5);
  const auto err = slurp(dir / "err.txt");
  EXPECT_NE(err.find("line 4"), std::string::npos) << err;
  EXPECT_NE(err.find("column"), std::string::npos) << err;
}

TEST(Cli, BudgetExceeded) {
  const auto dir = scratch("budget");
  nlohmann::json cfg = {{"instance", "two_boxes"},
                        {"grid", {{"h_long", 0.005}, {"h_trans", 0.005}}},
                        {"eps_list", {0.1}},
                        {"output_dir", dir.string()}};
  EXPECT_EQ(run_cli(dir, cfg, "eot-solve"), 3);
}

TEST(Cli, SharpnessNeedsTwoEps) {
  const auto dir = scratch("sharp_single");
  nlohmann::json cfg = {{"instance", "two_boxes"},
                        {"grid", {{"h_long", 0.25}, {"h_trans", 0.25}}},
                        {"eps_list", {0.1}},
                        {"output_dir", dir.string()}};
  EXPECT_EQ(run_cli(dir, cfg, "ce-sharpness"), 5);
  EXPECT_NE(slurp(dir / "stderr.txt").find("SingularFit"), std::string::npos);
}

TEST(Cli, SharpnessNeedsSeparatedSupports) {
  const auto dir = scratch("sharp_s62");
  nlohmann::json cfg = {{"instance", "section62"}, {"eps_list", {0.1, 0.2}}, {"output_dir", dir.string()}};
  EXPECT_EQ(run_cli(dir, cfg, "ce-sharpness"), 2);
}

TEST(Cli, ReplayReproducesSyntheticFit) {
  const auto dir = scratch("replay");
  std::ofstream replay(dir / "sweep.csv");
  replay << "eps,eot\n";
  for (double eps : {0.1, 0.2, 0.4}) {
    replay << format_double(eps) << ',' << format_double(3.0 + eps * (0.5 * std::log(1.0 / eps) + 1.0)) << '\n';
  }
  replay.close();
  nlohmann::json cfg = {{"instance", "two_boxes"},
                        {"replay", (dir / "sweep.csv").string()},
                        {"s_star_h", 0.125},
                        {"output_dir", dir.string()}};
  EXPECT_EQ(run_cli(dir, cfg, "expand"), 0);
  const auto fit = nlohmann::json::parse(slurp(dir / "fit.json"));
  EXPECT_NEAR(fit["b"].get<double>(), 0.5, 1e-12);
  EXPECT_NEAR(fit["c"].get<double>(), 1.0, 1e-12);
  EXPECT_EQ(fit["ot"].get<double>(), 3.0);
  EXPECT_TRUE(fit.contains("S_star"));
  const auto csv = slurp(dir / "expansion.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "eps,eot,y,fit_pred,residual");
}

TEST(Cli, SelectionWarnsOnFixedGrid) {
  const auto dir = scratch("fixed_grid");
  nlohmann::json cfg = {{"instance", "two_boxes"},
                        {"schedule", {{0.4, 0.25, 0.25}, {0.2, 0.25, 0.25}}},
                        {"output_dir", dir.string()}};
  EXPECT_EQ(run_cli(dir, cfg, "selection"), 0);
  const auto run = nlohmann::json::parse(slurp(dir / "run.json"));
  bool warned = false;
  for (const auto& n : run["notes"]) warned = warned || n.get<std::string>().find("minimal-entropy") != std::string::npos;
  EXPECT_TRUE(warned);
  const auto csv = slurp(dir / "selection.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "eps,h,discrepancy,w1_or_nan");
}

TEST(Cli, SelfDiscrepancyIsZero) {
  const auto inst = make_two_boxes(2, 3.0);
  const auto fam = disintegrate(inst, GridSpec{0.25, 0.25});
  const auto g0 = assemble_monge_plan(fam, solve_ray(fam, 0.25, 2, true));
  EXPECT_EQ(witness_discrepancy(g0, g0), 0.0);
}

TEST(Cli, RerunsAreByteIdentical) {
  nlohmann::json base = {{"instance", "two_boxes"},
                         {"grid", {{"h_long", 0.125}, {"h_trans", 0.25}}},
                         {"eps_list", {0.4, 0.2, 0.1}},
                         {"seed", 7}};
  const auto a = scratch("rerun_a");
  const auto b = scratch("rerun_b");
  auto ca = base;
  ca["output_dir"] = (a / "out").string();
  auto cb = base;
  cb["output_dir"] = (b / "out").string();
  ASSERT_EQ(run_cli(a, ca, "eot-solve", "THREADS=1"), 0);
  ASSERT_EQ(run_cli(b, cb, "eot-solve", "THREADS=4"), 0);
  for (const char* name : {"eot.csv", "mu.csv", "nu.csv"}) {
    EXPECT_EQ(slurp(a / "out" / name), slurp(b / "out" / name)) << name;
  }
  const auto run = nlohmann::json::parse(slurp(b / "out" / "run.json"));
  EXPECT_EQ(run["threads"].get<unsigned>(), 4u);
  EXPECT_TRUE(run.contains("wall_time_seconds"));
  EXPECT_EQ(run["version"].get<std::string>(), kVersion);
}

}  // namespace
}  // namespace emot
