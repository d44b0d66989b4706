#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "emot/experiments.hpp"

namespace {

int exit_code_for(emot::ErrorCode code) {
  using emot::ErrorCode;
  switch (code) {
    case ErrorCode::BudgetExceeded:
      return 3;
    case ErrorCode::NonConvergence:
    case ErrorCode::NonConvergedInput:
      return 4;
    case ErrorCode::ParseError:
    case ErrorCode::InvalidArgument:
    case ErrorCode::SingularFit:
      return 5;
    default:
      return 2;
  }
}

emot::ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) emot::fail(emot::ErrorCode::InvalidArgument, "cannot open config " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    emot::fail(emot::ErrorCode::ParseError, e.what());
  }
  return emot::config_from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entropic Monge transport experiments"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "Experiment config (JSON)");

  const char* names[] = {"validate", "expand", "selection", "ce-directional", "ce-sharpness", "ray-solve",
                         "eot-solve"};
  // --config may come before or after the subcommand.
  for (const char* name : names) app.add_subcommand(name)->add_option("--config", config_path, "Experiment config (JSON)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 5;
  }
  if (config_path.empty()) {
    std::cerr << "--config is required\n";
    return 5;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    const auto cfg = load_config(config_path);
    const auto start = std::chrono::steady_clock::now();
    emot::CommandOutput out;
    if (command == "validate") {
      emot::run_validate(cfg, out);
    } else if (command == "expand") {
      const auto rep = emot::run_expand(cfg, out);
      std::cout << "b = " << emot::format_double(rep.fit.b) << ", c = " << emot::format_double(rep.fit.c)
                << ", S* = " << emot::format_double(rep.s_star) << "\n";
    } else if (command == "selection") {
      emot::run_selection(cfg, out);
    } else if (command == "ce-directional") {
      const auto rep = emot::run_directional(cfg, out);
      std::cout << "nonmonotone_mass = " << emot::format_double(rep.nonmonotone_mass)
                << ", cost_excess = " << emot::format_double(rep.cost_excess) << "\n";
    } else if (command == "ce-sharpness") {
      const auto rep = emot::run_sharpness(cfg, out);
      std::cout << "K = " << emot::format_double(rep.fit.slope) << ", D = " << emot::format_double(rep.discrepancy)
                << "\n";
    } else if (command == "ray-solve") {
      emot::run_ray_solve(cfg, out);
    } else {
      emot::run_eot_solve(cfg, out);
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    emot::write_outputs(cfg, command, out, wall);
    for (const auto& note : out.notes) std::cerr << note << "\n";
    if (!out.checks_passed) return 2;
    if (out.solver_warning) return 4;
    return 0;
  } catch (const emot::Error& e) {
    std::cerr << emot::to_string(e.code()) << ": " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  }
}
