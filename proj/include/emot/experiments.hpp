#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emot/common.hpp"
#include "emot/functionals.hpp"
#include "emot/instances.hpp"
#include "emot/measures.hpp"
#include "emot/metrics.hpp"
#include "emot/parallel.hpp"
#include "emot/rayeot.hpp"
#include "emot/sinkhorn.hpp"

namespace emot {

inline constexpr const char* kVersion = "0.1.0";

// Thresholds frozen from dense reference runs: half of the values observed
// on the section62 ray problem at h = 0.5 (6 x 6 atoms) and half of the
// witness discrepancy between the product and Monge plans at h = 1/32.
inline constexpr double kDirectionalMassThreshold = 0.0662188;
inline constexpr double kDirectionalExcessThreshold = 0.2694821;
inline constexpr double kSharpnessDiscrepancyThreshold = 1.9923e-4;

struct SchedulePoint {
  double eps = 0.0;
  double h_long = 0.0;
  double h_trans = 0.0;
};

struct ExperimentConfig {
  std::string instance_name = "two_boxes";
  std::optional<nlohmann::json> instance_inline;
  int d = 2;
  double shift = 3.0;
  GridSpec grid{0.5, 0.5, 20000};
  std::vector<double> eps_list;
  std::vector<SchedulePoint> schedule;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  unsigned thread_budget = 1;
  double ray_h = 0.125;
  double s_star_h = 1.0 / 256.0;
  double tol_marginal = 1e-9;
  bool eps_scaling = true;
  bool constrained = true;
  bool write_plans = false;
  std::string replay;
  double m_star = kDirectionalMassThreshold;
  double delta_star = kDirectionalExcessThreshold;
  double d_star = kSharpnessDiscrepancyThreshold;
  nlohmann::json raw;
};

// Joint (eps, h) refinement used when no explicit schedule is given.
inline SchedulePoint default_schedule_point(double eps) {
  return {eps, std::min(0.05, eps / 2.0), std::min(0.1, std::sqrt(eps) / 2.0)};
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  cfg.raw = j;
  try {
    if (j.contains("instance")) {
      if (j["instance"].is_string()) {
        cfg.instance_name = j["instance"].get<std::string>();
      } else {
        cfg.instance_name = "inline";
        cfg.instance_inline = j["instance"];
      }
    }
    cfg.d = j.value("d", cfg.d);
    cfg.shift = j.value("shift", cfg.shift);
    if (j.contains("grid")) {
      cfg.grid.h_long = j["grid"].value("h_long", cfg.grid.h_long);
      cfg.grid.h_trans = j["grid"].value("h_trans", cfg.grid.h_trans);
      cfg.grid.max_atoms = j["grid"].value("max_atoms", cfg.grid.max_atoms);
    }
    if (j.contains("eps_list")) cfg.eps_list = j["eps_list"].get<std::vector<double>>();
    if (j.contains("schedule")) {
      for (const auto& row : j["schedule"]) {
        if (row.size() != 3) fail(ErrorCode::ParseError, "schedule rows are [eps, h_long, h_trans]");
        cfg.schedule.push_back({row[0].get<double>(), row[1].get<double>(), row[2].get<double>()});
      }
    }
    cfg.seed = j.value("seed", cfg.seed);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    cfg.thread_budget = j.value("thread_budget", cfg.thread_budget);
    cfg.ray_h = j.value("ray_h", cfg.ray_h);
    cfg.s_star_h = j.value("s_star_h", cfg.s_star_h);
    cfg.tol_marginal = j.value("tol_marginal", cfg.tol_marginal);
    cfg.eps_scaling = j.value("eps_scaling", cfg.eps_scaling);
    cfg.constrained = j.value("constrained", cfg.constrained);
    cfg.write_plans = j.value("write_plans", cfg.write_plans);
    cfg.replay = j.value("replay", cfg.replay);
    cfg.m_star = j.value("m_star", cfg.m_star);
    cfg.delta_star = j.value("delta_star", cfg.delta_star);
    cfg.d_star = j.value("d_star", cfg.d_star);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, e.what());
  }
  for (double e : cfg.eps_list) {
    if (!(e > 0.0)) fail(ErrorCode::InvalidArgument, "eps_list entries must be positive");
  }
  for (const auto& p : cfg.schedule) {
    if (!(p.eps > 0.0 && p.h_long > 0.0 && p.h_trans > 0.0)) {
      fail(ErrorCode::InvalidArgument, "schedule entries must be positive");
    }
  }
  return cfg;
}

inline ProductInstance resolve_instance(const ExperimentConfig& cfg) {
  if (cfg.instance_inline) return instance_from_json(*cfg.instance_inline);
  if (cfg.instance_name == "section62") return make_section62(cfg.d);
  if (cfg.instance_name == "two_boxes") return make_two_boxes(cfg.d, cfg.shift);
  fail(ErrorCode::InvalidArgument, "unknown instance '" + cfg.instance_name + "'");
}

inline unsigned effective_threads(const ExperimentConfig& cfg) { return thread_budget(cfg.thread_budget); }

// Outputs of one command: named files plus the manifest notes.
struct CommandOutput {
  std::vector<std::pair<std::string, std::string>> files;
  std::vector<std::string> notes;
  bool checks_passed = true;
  bool solver_warning = false;
};

inline std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline void write_outputs(const ExperimentConfig& cfg, const std::string& command, const CommandOutput& out,
                          double wall_seconds) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);
  std::vector<std::string> names;
  for (const auto& [name, content] : out.files) {
    std::ofstream f(fs::path(cfg.output_dir) / name, std::ios::binary);
    f << content;
    names.push_back(name);
  }
  nlohmann::json manifest;
  manifest["command"] = command;
  manifest["config"] = cfg.raw;
  manifest["version"] = kVersion;
#if defined(__VERSION__)
  manifest["compiler"] = __VERSION__;
#endif
  manifest["threads"] = effective_threads(cfg);
  manifest["wall_time_seconds"] = wall_seconds;
  manifest["files"] = names;
  manifest["notes"] = out.notes;
  std::ofstream f(fs::path(cfg.output_dir) / "run.json", std::ios::binary);
  f << dump_json(manifest);
}

inline std::vector<double> scaling_schedule(double eps, bool enabled) {
  if (!enabled) return {};
  return {8.0 * eps, 4.0 * eps, 2.0 * eps, eps};
}

struct EotPoint {
  double eps = 0.0;
  double eot = 0.0;
  std::size_t iters = 0;
  double marginal_err = 0.0;
  double rounded_marginal_err = 0.0;
  bool warning = false;
};

// Full discrete EOT at each eps, points distributed over the worker pool and
// gathered in input order.
inline std::vector<EotPoint> eot_sweep(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cost,
                                       const std::vector<double>& eps_list, const ExperimentConfig& cfg,
                                       std::vector<Plan>* plans = nullptr) {
  std::vector<EotPoint> out(eps_list.size());
  if (plans) plans->assign(eps_list.size(), Plan{});
  const unsigned threads = effective_threads(cfg);
  const unsigned outer = std::min<unsigned>(threads, static_cast<unsigned>(eps_list.size()));
  const unsigned inner = outer <= 1 ? threads : 1;
  parallel_for(eps_list.size(), outer, [&](std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) {
      SinkhornConfig sc;
      sc.eps = eps_list[k];
      sc.tol_marginal = cfg.tol_marginal;
      sc.eps_schedule = scaling_schedule(eps_list[k], cfg.eps_scaling);
      sc.threads = inner;
      auto res = solve(mu, nu, cost, sc);
      out[k] = {eps_list[k], res.objective, res.iters, res.marginal_err, res.rounded_marginal_err,
                res.nonconvergence_warning};
      if (plans) (*plans)[k] = std::move(res.plan);
    }
  });
  return out;
}

struct ExpandReport {
  ExpansionFit fit;
  double s_star = 0.0;
  SFunctionalBreakdown breakdown;
  double ot = 0.0;
  std::vector<EotPoint> points;
};

inline std::vector<SweepPoint> read_replay(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorCode::InvalidArgument, "cannot open replay file " + path);
  std::vector<SweepPoint> out;
  std::string line;
  std::getline(f, line);
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    is.imbue(std::locale::classic());
    SweepPoint p;
    char comma = 0;
    if (!(is >> p.eps >> comma >> p.eot) || comma != ',') fail(ErrorCode::ParseError, "bad replay row: " + line);
    out.push_back(p);
  }
  return out;
}

inline ExpandReport run_expand(const ExperimentConfig& cfg, CommandOutput& out) {
  const auto inst = resolve_instance(cfg);
  require_valid(inst);
  ExpandReport rep;
  rep.ot = dual_ot_value(inst);

  const auto fam = disintegrate(inst, cfg.grid);
  const auto ray = solve_ray(fam, cfg.s_star_h, inst.d, true);
  rep.breakdown = s_functional(inst, ray);
  rep.s_star = rep.breakdown.total;

  std::vector<SweepPoint> sweep;
  if (!cfg.replay.empty()) {
    sweep = read_replay(cfg.replay);
    out.notes.push_back("sweep values replayed from " + cfg.replay);
  } else {
    const auto [mu, nu] = discretize_instance(inst, cfg.grid);
    const auto cost = distance_matrix(mu, nu);
    rep.points = eot_sweep(mu, nu, cost, cfg.eps_list, cfg);
    for (const auto& p : rep.points) {
      sweep.push_back({p.eps, p.eot});
      out.solver_warning = out.solver_warning || p.warning;
    }
  }
  rep.fit = expansion_fit(sweep, rep.ot);

  std::ostringstream csv;
  csv << "eps,eot,y,fit_pred,residual\n";
  for (std::size_t k = 0; k < sweep.size(); ++k) {
    const double y = (sweep[k].eot - rep.ot) / sweep[k].eps;
    const double pred = rep.fit.b * std::log(1.0 / sweep[k].eps) + rep.fit.c;
    csv << format_double(sweep[k].eps) << ',' << format_double(sweep[k].eot) << ',' << format_double(y) << ','
        << format_double(pred) << ',' << format_double(rep.fit.residuals[k]) << '\n';
  }
  out.files.emplace_back("expansion.csv", csv.str());
  if (!rep.points.empty()) {
    std::ostringstream sw;
    sw << "eps,eot,iters,marginal_err\n";
    for (const auto& p : rep.points) {
      sw << format_double(p.eps) << ',' << format_double(p.eot) << ',' << p.iters << ','
         << format_double(p.marginal_err) << '\n';
    }
    out.files.emplace_back("sweep.csv", sw.str());
  }
  nlohmann::json fit = to_json(rep.fit);
  fit["S_star"] = rep.s_star;
  fit["ot"] = rep.ot;
  fit["target_b"] = 0.5 * (inst.d - 1);
  fit["s_functional"] = to_json(rep.breakdown);
  out.files.emplace_back("fit.json", dump_json(fit));
  return rep;
}

struct SelectionRow {
  double eps = 0.0;
  double h_long = 0.0;
  double h_trans = 0.0;
  double discrepancy = 0.0;
  double w1 = std::numeric_limits<double>::quiet_NaN();
};

inline std::vector<SelectionRow> run_selection(const ExperimentConfig& cfg, CommandOutput& out) {
  const auto inst = resolve_instance(cfg);
  require_valid(inst);
  std::vector<SchedulePoint> schedule = cfg.schedule;
  if (schedule.empty()) {
    for (double e : cfg.eps_list) schedule.push_back(default_schedule_point(e));
    out.notes.push_back(
        "default joint schedule h_long = min(0.05, eps/2), h_trans = min(0.1, sqrt(eps)/2) (heuristic)");
  }
  if (schedule.empty()) fail(ErrorCode::InvalidArgument, "selection needs a schedule or eps_list");
  bool fixed_grid = schedule.size() > 1;
  for (const auto& p : schedule) {
    fixed_grid = fixed_grid && p.h_long == schedule.front().h_long && p.h_trans == schedule.front().h_trans;
  }
  if (fixed_grid) {
    out.notes.push_back(
        "warning: all schedule points share one grid; as eps -> 0 on a fixed grid the EOT plans tend to the "
        "discrete minimal-entropy optimal plan, not to the entropic Monge plan");
  }

  std::vector<SelectionRow> rows(schedule.size());
  const unsigned threads = effective_threads(cfg);
  parallel_for(schedule.size(), std::min<unsigned>(threads, static_cast<unsigned>(schedule.size())),
               [&](std::size_t b, std::size_t e) {
                 for (std::size_t k = b; k < e; ++k) {
                   const auto& p = schedule[k];
                   GridSpec grid{p.h_long, p.h_trans, cfg.grid.max_atoms};
                   const auto [mu, nu] = discretize_instance(inst, grid);
                   const auto cost = distance_matrix(mu, nu);
                   SinkhornConfig sc;
                   sc.eps = p.eps;
                   sc.tol_marginal = cfg.tol_marginal;
                   sc.eps_schedule = scaling_schedule(p.eps, cfg.eps_scaling);
                   const auto res = solve(mu, nu, cost, sc);
                   const auto fam = disintegrate(inst, grid);
                   const auto ray = solve_ray(fam, p.h_long, inst.d, true);
                   const auto gamma0 = assemble_monge_plan(fam, ray);
                   SelectionRow row{p.eps, p.h_long, p.h_trans, witness_discrepancy(res.plan, gamma0)};
                   const std::size_t support = plan_as_measure(res.plan).size() + plan_as_measure(gamma0).size();
                   if (support <= 400) row.w1 = w1_exact(res.plan, gamma0);
                   rows[k] = row;
                 }
               });

  std::ostringstream csv;
  csv << "eps,h,discrepancy,w1_or_nan\n";
  for (const auto& r : rows) {
    csv << format_double(r.eps) << ',' << format_double(r.h_long) << ',' << format_double(r.discrepancy) << ','
        << format_double(r.w1) << '\n';
  }
  out.files.emplace_back("selection.csv", csv.str());
  return rows;
}

struct DirectionalReport {
  double nonmonotone_mass = 0.0;
  double cost_excess = 0.0;
  double constrained_nonmonotone_mass = 0.0;
  double constrained_cost_excess = 0.0;
  double m_star = 0.0;
  double delta_star = 0.0;
  bool passed = false;
};

inline DirectionalReport run_directional(const ExperimentConfig& cfg, CommandOutput& out) {
  const auto inst = resolve_instance(cfg);
  require_valid(inst);
  const double dual = dual_ot_value(inst);
  const auto fam = disintegrate(inst, cfg.grid);
  const auto unc = solve_ray(fam, cfg.ray_h, inst.d, false);
  const auto con = solve_ray(fam, cfg.ray_h, inst.d, true);
  const auto gamma_unc = assemble_ray_plan(fam, unc.kappa);
  const auto gamma0 = assemble_monge_plan(fam, con);

  DirectionalReport rep;
  rep.nonmonotone_mass = unc.monotone_mass_violation;
  rep.cost_excess = distance_cost(gamma_unc) - dual;
  rep.constrained_nonmonotone_mass = con.monotone_mass_violation;
  rep.constrained_cost_excess = distance_cost(gamma0) - dual;
  rep.m_star = cfg.m_star;
  rep.delta_star = cfg.delta_star;
  rep.passed = rep.nonmonotone_mass > rep.m_star && rep.cost_excess > rep.delta_star &&
               rep.constrained_nonmonotone_mass == 0.0 && rep.constrained_cost_excess <= 0.05;
  out.checks_passed = rep.passed;
  out.solver_warning = !unc.converged || !con.converged;

  nlohmann::json j;
  j["ray_h"] = cfg.ray_h;
  j["dual_ot_value"] = dual;
  j["unconstrained"] = {{"nonmonotone_mass", rep.nonmonotone_mass},
                        {"cost_excess", rep.cost_excess},
                        {"objective", unc.objective}};
  j["constrained"] = {{"nonmonotone_mass", rep.constrained_nonmonotone_mass},
                      {"cost_excess", rep.constrained_cost_excess},
                      {"objective", con.objective}};
  j["thresholds"] = {{"m_star", rep.m_star}, {"delta_star", rep.delta_star}, {"constrained_excess_max", 0.05}};
  j["passed"] = rep.passed;
  out.files.emplace_back("directional.json", dump_json(j));
  return rep;
}

struct SharpnessRow {
  double eps = 0.0;
  double c_eps_product = 0.0;
  double eot = 0.0;
  double gap = 0.0;
};

struct SharpnessReport {
  std::vector<SharpnessRow> rows;
  ProportionalFit fit;
  double discrepancy = 0.0;
  double d_star = 0.0;
  bool within_band = false;
  bool passed = false;
};

inline SharpnessReport run_sharpness(const ExperimentConfig& cfg, CommandOutput& out) {
  const auto inst = resolve_instance(cfg);
  require_valid(inst);
  if (!(inst.f1.support_max() < inst.g1.support_min())) {
    fail(ErrorCode::InvalidInstance, "supports are not strictly separated by a hyperplane across the axis");
  }
  if (cfg.eps_list.size() < 2) fail(ErrorCode::SingularFit, "the proportional gap fit needs at least two eps");

  const auto [mu, nu] = discretize_instance(inst, cfg.grid);
  const auto cost = distance_matrix(mu, nu);
  const auto fam = disintegrate(inst, cfg.grid);
  const auto product = assemble_product_plan(fam, cfg.grid.h_long);
  const auto ray = solve_ray(fam, cfg.grid.h_long, inst.d, true);
  const auto gamma0 = assemble_monge_plan(fam, ray);

  SharpnessReport rep;
  rep.d_star = cfg.d_star;
  rep.discrepancy = witness_discrepancy(product, gamma0);
  const auto points = eot_sweep(mu, nu, cost, cfg.eps_list, cfg);
  std::vector<double> xs, ys;
  for (const auto& p : points) {
    const double cp = c_eps(product, p.eps);
    rep.rows.push_back({p.eps, cp, p.eot, cp - p.eot});
    xs.push_back(p.eps);
    ys.push_back(cp - p.eot);
    out.solver_warning = out.solver_warning || p.warning;
  }
  rep.fit = proportional_fit(xs, ys);
  rep.within_band = true;
  for (const auto& r : rep.rows) {
    const double ratio = r.gap / r.eps;
    rep.within_band = rep.within_band && ratio >= 0.8 * rep.fit.slope && ratio <= 1.2 * rep.fit.slope;
  }
  rep.passed = rep.within_band && rep.discrepancy >= rep.d_star;
  out.checks_passed = rep.passed;

  std::ostringstream csv;
  csv << "eps,c_eps_product,eot,gap,gap_over_eps\n";
  for (const auto& r : rep.rows) {
    csv << format_double(r.eps) << ',' << format_double(r.c_eps_product) << ',' << format_double(r.eot) << ','
        << format_double(r.gap) << ',' << format_double(r.gap / r.eps) << '\n';
  }
  out.files.emplace_back("sharpness.csv", csv.str());
  nlohmann::json j;
  j["K"] = rep.fit.slope;
  j["max_rel_residual"] = rep.fit.max_rel_residual;
  j["discrepancy"] = rep.discrepancy;
  j["d_star"] = rep.d_star;
  j["within_band"] = rep.within_band;
  j["passed"] = rep.passed;
  out.files.emplace_back("sharpness.json", dump_json(j));
  return rep;
}

struct ValidateCommandReport {
  ValidationReport validation;
  std::vector<std::pair<double, PotentialCertificate>> certificates;
};

inline ValidateCommandReport run_validate(const ExperimentConfig& cfg, CommandOutput& out) {
  const auto inst = resolve_instance(cfg);
  ValidateCommandReport rep;
  rep.validation = validate(inst);
  nlohmann::json j;
  j["ok"] = rep.validation.ok;
  j["dominance_margin"] = rep.validation.dominance_margin;
  j["violations"] = nlohmann::json::array();
  for (const auto& v : rep.validation.violations) j["violations"].push_back({{"check", v.check}, {"detail", v.detail}});
  j["certificates"] = nlohmann::json::array();
  if (rep.validation.ok) {
    for (double h : {0.5, 0.25}) {
      const auto cert = certify_potential_detail(inst, h);
      rep.certificates.emplace_back(h, cert);
      j["certificates"].push_back(
          {{"h", h}, {"lp_value", cert.lp_value}, {"dual_value", cert.dual_value}, {"gap", cert.gap}});
    }
  }
  out.checks_passed = rep.validation.ok;
  out.files.emplace_back("validate.json", dump_json(j));
  return rep;
}

inline RayEOTSolution run_ray_solve(const ExperimentConfig& cfg, CommandOutput& out) {
  const auto inst = resolve_instance(cfg);
  require_valid(inst);
  const auto fam = disintegrate(inst, cfg.grid);
  auto sol = solve_ray(fam, cfg.ray_h, inst.d, cfg.constrained);
  out.solver_warning = !sol.converged;
  std::ostringstream csv;
  write_ray_csv(csv, sol);
  out.files.emplace_back("ray.csv", csv.str());
  nlohmann::json j;
  j["ray_h"] = cfg.ray_h;
  j["constrained"] = sol.constrained;
  j["objective"] = sol.objective;
  j["monotone_mass_violation"] = sol.monotone_mass_violation;
  j["iters"] = sol.iters;
  j["marginal_err"] = sol.marginal_err;
  if (sol.converged) {
    const auto fac = extract_factorization(sol);
    j["factorization_residual"] = fac.max_residual;
    j["cyclic_residual"] = fac.max_cyclic_residual;
  }
  j["s_functional"] = to_json(s_functional(inst, sol));
  out.files.emplace_back("ray.json", dump_json(j));
  return sol;
}

inline std::vector<EotPoint> run_eot_solve(const ExperimentConfig& cfg, CommandOutput& out) {
  const auto inst = resolve_instance(cfg);
  require_valid(inst);
  if (cfg.eps_list.empty()) fail(ErrorCode::InvalidArgument, "eot-solve needs eps_list");
  const auto [mu, nu] = discretize_instance(inst, cfg.grid);
  const auto cost = distance_matrix(mu, nu);
  std::vector<Plan> plans;
  auto points = eot_sweep(mu, nu, cost, cfg.eps_list, cfg, cfg.write_plans ? &plans : nullptr);
  std::ostringstream csv;
  csv << "eps,eot,iters,marginal_err,rounded_marginal_err\n";
  for (const auto& p : points) {
    csv << format_double(p.eps) << ',' << format_double(p.eot) << ',' << p.iters << ','
        << format_double(p.marginal_err) << ',' << format_double(p.rounded_marginal_err) << '\n';
    out.solver_warning = out.solver_warning || p.warning;
  }
  out.files.emplace_back("eot.csv", csv.str());
  std::ostringstream m1, m2;
  write_measure_csv(m1, mu);
  write_measure_csv(m2, nu);
  out.files.emplace_back("mu.csv", m1.str());
  out.files.emplace_back("nu.csv", m2.str());
  for (std::size_t k = 0; k < plans.size(); ++k) {
    std::ostringstream pc;
    write_plan_csv(pc, plans[k]);
    out.files.emplace_back("plan_" + std::to_string(k) + ".csv", pc.str());
  }
  return points;
}

}  // namespace emot
