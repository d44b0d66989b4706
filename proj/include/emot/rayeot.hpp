#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "emot/common.hpp"
#include "emot/density.hpp"
#include "emot/instances.hpp"
#include "emot/measures.hpp"
#include "emot/sinkhorn.hpp"

namespace emot {

// Rays of a product instance are the lines parallel to the axis; they are
// indexed by the transverse grid cells of rho. Per-ray conditionals equal f1
// and g1 on every ray.
struct RayFamily {
  ProductInstance instance;
  double a_long = 0.0;
  double b_long = 0.0;
  DiscreteMeasure lambda;
  PiecewiseConstantDensity1D per_ray_source;
  PiecewiseConstantDensity1D per_ray_target;
};

inline RayFamily disintegrate(const ProductInstance& inst, const GridSpec& grid) {
  require_valid(inst);
  RayFamily fam;
  fam.instance = inst;
  fam.a_long = inst.f1.support_min();
  fam.b_long = inst.g1.support_max();
  fam.lambda = discretize_boxes(inst.rho, grid.h_trans, grid.max_atoms);
  fam.per_ray_source = inst.f1;
  fam.per_ray_target = inst.g1;
  return fam;
}

// Cost -(d-1)/2 log|s - t|; with the constraint, pairs where the source is
// not strictly behind the target along the ray (u(x) <= u(y)) cost +inf.
inline CostMatrix ray_cost(const DiscreteMeasure& source, const DiscreteMeasure& target, int d, bool constrained) {
  const double k = 0.5 * static_cast<double>(d - 1);
  CostMatrix c(source.size(), target.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    for (std::size_t j = 0; j < target.size(); ++j) {
      const double s = source.position(i);
      const double t = target.position(j);
      if (s == t) fail(ErrorCode::CoincidentAtoms, "source and target atom at " + format_double(s));
      c(i, j) = (constrained && s >= t) ? kInf : -k * std::log(std::abs(t - s));
    }
  }
  return c;
}

struct RayEOTSolution {
  DiscreteMeasure source_atoms;
  DiscreteMeasure target_atoms;
  Plan kappa;
  double objective = 0.0;
  bool constrained = true;
  int d = 2;
  std::vector<double> phi;
  std::vector<double> psi;
  std::vector<double> log_phi;
  std::vector<double> log_psi;
  double monotone_mass_violation = 0.0;
  bool converged = false;
  double marginal_err = 0.0;
  std::size_t iters = 0;
  std::vector<int> source_piece;
  std::vector<int> target_piece;
};

struct RaySolveOptions {
  double tol_marginal = 1e-13;
  std::vector<double> eps_schedule;
  std::size_t max_iter = 200000;
};

// A monotone coupling with strict order s < t exists iff, for every target
// atom t_j, the target mass at or below t_j is covered by source mass
// strictly below t_j.
inline bool monotone_feasible(const DiscreteMeasure& source, const DiscreteMeasure& target, double tol = 1e-12) {
  for (std::size_t j = 0; j < target.size(); ++j) {
    const double t = target.position(j);
    double tgt = 0.0;
    for (std::size_t l = 0; l < target.size(); ++l) {
      if (target.position(l) <= t) tgt += target.weight(l);
    }
    double src = 0.0;
    for (std::size_t i = 0; i < source.size(); ++i) {
      if (source.position(i) < t) src += source.weight(i);
    }
    if (tgt > src + tol) return false;
  }
  return true;
}

inline double nonmonotone_mass(const Plan& kappa) {
  std::vector<double> terms;
  kappa.for_each([&](std::size_t i, std::size_t j, double w) {
    if (w != 0.0 && kappa.row().position(i) >= kappa.col().position(j)) terms.push_back(w);
  });
  return pairwise_sum(terms);
}

// -(d-1)/2 sum kappa log(scale |s - t|) + H(kappa | source (x) target).
inline double ray_objective(const Plan& kappa, int d, double scale = 1.0) {
  const double k = 0.5 * static_cast<double>(d - 1);
  const double log_term = reduce_plan(kappa, [&](std::size_t i, std::size_t j, double w) {
    return w * std::log(scale * std::abs(kappa.row().position(i) - kappa.col().position(j)));
  });
  return -k * log_term + rel_entropy(kappa);
}

inline RayEOTSolution solve_ray_atoms(const DiscreteMeasure& source, const DiscreteMeasure& target, int d,
                                      bool constrained, const RaySolveOptions& opt = {}) {
  if (constrained && !monotone_feasible(source, target)) {
    fail(ErrorCode::MonotoneInfeasible, "no monotone coupling of the ray marginals exists");
  }
  const auto cost = ray_cost(source, target, d, constrained);
  SinkhornConfig cfg;
  cfg.eps = 1.0;
  cfg.tol_marginal = opt.tol_marginal;
  cfg.eps_schedule = opt.eps_schedule;
  cfg.max_iter = opt.max_iter;
  auto res = solve(source, target, cost, cfg);

  RayEOTSolution sol;
  sol.source_atoms = source;
  sol.target_atoms = target;
  sol.constrained = constrained;
  sol.d = d;
  sol.converged = res.converged;
  sol.marginal_err = res.marginal_err;
  sol.iters = res.iters;
  sol.objective = res.objective;
  sol.kappa = std::move(res.plan);
  sol.monotone_mass_violation = nonmonotone_mass(sol.kappa);
  sol.source_piece.assign(source.size(), 0);
  sol.target_piece.assign(target.size(), 0);
  // Gauge: max_i log phi_i = 0.
  double umax = -kInf;
  for (double x : res.u) umax = std::max(umax, x);
  sol.log_phi.resize(res.u.size());
  sol.log_psi.resize(res.v.size());
  for (std::size_t i = 0; i < res.u.size(); ++i) sol.log_phi[i] = res.u[i] - umax;
  for (std::size_t j = 0; j < res.v.size(); ++j) sol.log_psi[j] = res.v[j] + umax;
  sol.phi.resize(sol.log_phi.size());
  sol.psi.resize(sol.log_psi.size());
  for (std::size_t i = 0; i < sol.phi.size(); ++i) sol.phi[i] = std::exp(sol.log_phi[i]);
  for (std::size_t j = 0; j < sol.psi.size(); ++j) sol.psi[j] = std::exp(sol.log_psi[j]);
  return sol;
}

inline RayEOTSolution solve_ray(const RayFamily& fam, double h, int d, bool constrained,
                                const RaySolveOptions& opt = {}) {
  const auto source = discretize_1d(fam.per_ray_source, h);
  const auto target = discretize_1d(fam.per_ray_target, h);
  auto sol = solve_ray_atoms(source, target, d, constrained, opt);
  sol.source_piece.resize(source.size());
  sol.target_piece.resize(target.size());
  for (std::size_t i = 0; i < source.size(); ++i) sol.source_piece[i] = fam.per_ray_source.piece_of(source.position(i));
  for (std::size_t j = 0; j < target.size(); ++j) sol.target_piece[j] = fam.per_ray_target.piece_of(target.position(j));
  return sol;
}

struct Factorization {
  std::vector<double> phi;
  std::vector<double> psi;
  double max_residual = 0.0;
  double max_cyclic_residual = 0.0;
  std::size_t minors_checked = 0;
};

// log R_ij = log kappa_ij - log(f_i g_j) - (d-1)/2 log|s_i - t_j|.
inline double log_ratio(const RayEOTSolution& sol, std::size_t i, std::size_t j) {
  const double k = 0.5 * static_cast<double>(sol.d - 1);
  const double s = sol.source_atoms.position(i);
  const double t = sol.target_atoms.position(j);
  return std::log(sol.kappa.at(i, j)) - std::log(sol.source_atoms.weight(i) * sol.target_atoms.weight(j)) -
         k * std::log(std::abs(s - t));
}

// Checks kappa = f g |s - t|^{(d-1)/2} phi psi on the support of kappa and the
// rank-one structure of the ratio through its 2 x 2 minors. All minors are
// checked up to 4096 entries, adjacent minors beyond that.
inline Factorization extract_factorization(const RayEOTSolution& sol) {
  if (!sol.converged) fail(ErrorCode::NonConvergedInput, "ray solution did not converge");
  const std::size_t n = sol.source_atoms.size();
  const std::size_t m = sol.target_atoms.size();
  Factorization fac;
  fac.phi = sol.phi;
  fac.psi = sol.psi;
  std::vector<double> lr(n * m, kInf);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (sol.kappa.at(i, j) <= 0.0) continue;
      lr[i * m + j] = log_ratio(sol, i, j);
      fac.max_residual = std::max(fac.max_residual, std::abs(lr[i * m + j] - sol.log_phi[i] - sol.log_psi[j]));
    }
  }
  auto minor = [&](std::size_t i, std::size_t i2, std::size_t j, std::size_t j2) {
    const double a = lr[i * m + j], b = lr[i2 * m + j2], c = lr[i * m + j2], e = lr[i2 * m + j];
    if (std::isinf(a) || std::isinf(b) || std::isinf(c) || std::isinf(e)) return;
    fac.max_cyclic_residual = std::max(fac.max_cyclic_residual, std::abs(a + b - c - e));
    ++fac.minors_checked;
  };
  if (n * m <= 4096) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t i2 = i + 1; i2 < n; ++i2)
        for (std::size_t j = 0; j < m; ++j)
          for (std::size_t j2 = j + 1; j2 < m; ++j2) minor(i, i2, j, j2);
  } else {
    for (std::size_t i = 0; i + 1 < n; ++i)
      for (std::size_t j = 0; j + 1 < m; ++j) minor(i, i + 1, j, j + 1);
  }
  return fac;
}

// lambda (x) kappa: every ray carries the same kappa, and pairs never leave
// their ray.
inline Plan assemble_ray_plan(const RayFamily& fam, const Plan& kappa) {
  const auto& lam = fam.lambda;
  const std::size_t nq = lam.size();
  auto row = tensor_measure(fam.instance.axis, kappa.row(), lam);
  auto col = tensor_measure(fam.instance.axis, kappa.col(), lam);
  std::vector<PlanEntry> entries;
  kappa.for_each([&](std::size_t i, std::size_t j, double w) {
    if (w == 0.0) return;
    for (std::size_t q = 0; q < nq; ++q) entries.push_back({i * nq + q, j * nq + q, lam.weight(q) * w});
  });
  return Plan::sparse(std::move(row), std::move(col), std::move(entries));
}

inline Plan assemble_monge_plan(const RayFamily& fam, const RayEOTSolution& sol) {
  if (!sol.constrained) fail(ErrorCode::InvalidArgument, "the entropic Monge plan needs the constrained ray solution");
  if (!sol.converged) fail(ErrorCode::NonConvergedInput, "ray solution did not converge");
  return assemble_ray_plan(fam, sol.kappa);
}

inline Plan product_kappa(const DiscreteMeasure& source, const DiscreteMeasure& target) {
  std::vector<double> w(source.size() * target.size());
  for (std::size_t i = 0; i < source.size(); ++i)
    for (std::size_t j = 0; j < target.size(); ++j) w[i * target.size() + j] = source.weight(i) * target.weight(j);
  return Plan::dense(source, target, std::move(w));
}

// lambda (x) (source (x) target) at ray grid h.
inline Plan assemble_product_plan(const RayFamily& fam, double h) {
  const auto source = discretize_1d(fam.per_ray_source, h);
  const auto target = discretize_1d(fam.per_ray_target, h);
  return assemble_ray_plan(fam, product_kappa(source, target));
}

struct BlockLipschitz {
  int source_piece = 0;
  int target_piece = 0;
  double constant = 0.0;
};

// Largest difference quotient of log(kappa / (f g)) between neighbouring
// atoms, per (source piece, target piece) block on the support.
inline std::vector<BlockLipschitz> ratio_lipschitz(const RayEOTSolution& sol) {
  const std::size_t n = sol.source_atoms.size();
  const std::size_t m = sol.target_atoms.size();
  std::map<std::pair<int, int>, double> blocks;
  auto log_h = [&](std::size_t i, std::size_t j) {
    const double w = sol.kappa.at(i, j);
    return w > 0.0 ? std::log(w / (sol.source_atoms.weight(i) * sol.target_atoms.weight(j))) : kInf;
  };
  auto visit = [&](std::size_t i, std::size_t j, std::size_t i2, std::size_t j2) {
    if (sol.source_piece[i] != sol.source_piece[i2] || sol.target_piece[j] != sol.target_piece[j2]) return;
    const double a = log_h(i, j);
    const double b = log_h(i2, j2);
    if (std::isinf(a) || std::isinf(b)) return;
    const double step = std::abs(sol.source_atoms.position(i) - sol.source_atoms.position(i2)) +
                        std::abs(sol.target_atoms.position(j) - sol.target_atoms.position(j2));
    auto& c = blocks[{sol.source_piece[i], sol.target_piece[j]}];
    c = std::max(c, std::abs(a - b) / step);
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i + 1 < n) visit(i, j, i + 1, j);
      if (j + 1 < m) visit(i, j, i, j + 1);
    }
  }
  std::vector<BlockLipschitz> out;
  for (const auto& [key, c] : blocks) out.push_back({key.first, key.second, c});
  return out;
}

// Shared solve across identical rays, keyed by the discretized profiles.
class RaySolveCache {
 public:
  const RayEOTSolution& get(const RayFamily& fam, double h, int d, bool constrained,
                            const RaySolveOptions& opt = {}) {
    const auto source = discretize_1d(fam.per_ray_source, h);
    const auto target = discretize_1d(fam.per_ray_target, h);
    std::uint64_t key = hash_combine(static_cast<std::uint64_t>(d), constrained ? 1 : 0);
    for (const auto* m : {&source, &target}) {
      key = hash_combine(key, m->size());
      for (double x : m->coords()) key = hash_combine(key, hash_double(x));
      for (double x : m->weights()) key = hash_combine(key, hash_double(x));
    }
    auto it = cache_.find(key);
    if (it == cache_.end()) it = cache_.emplace(key, solve_ray(fam, h, d, constrained, opt)).first;
    return it->second;
  }

  std::size_t size() const { return cache_.size(); }

 private:
  std::map<std::uint64_t, RayEOTSolution> cache_;
};

inline void write_ray_csv(std::ostream& os, const RayEOTSolution& sol) {
  os << "i,j,s,t,kappa,phi_i,psi_j\n";
  sol.kappa.for_each([&](std::size_t i, std::size_t j, double w) {
    os << i << ',' << j << ',' << format_double(sol.source_atoms.position(i)) << ','
       << format_double(sol.target_atoms.position(j)) << ',' << format_double(w) << ',' << format_double(sol.phi[i])
       << ',' << format_double(sol.psi[j]) << '\n';
  });
}

}  // namespace emot
