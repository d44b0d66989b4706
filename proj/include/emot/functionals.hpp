#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "emot/common.hpp"
#include "emot/density.hpp"
#include "emot/measures.hpp"
#include "emot/rayeot.hpp"

namespace emot {

// Exact integral of rho log rho for piecewise-constant densities.
inline double density_entropy(const PiecewiseConstantDensity1D& rho) {
  double acc = 0.0;
  for (const auto& p : rho.pieces()) acc += p.mass() * std::log(p.level);
  return acc;
}

inline double density_entropy(const BoxDensity& rho) {
  double acc = 0.0;
  for (const auto& p : rho.pieces()) acc += p.mass() * std::log(p.level);
  return acc;
}

// Entropy of the full d-dimensional density profile (x) rho, summed over
// product pieces.
inline double product_density_entropy(const PiecewiseConstantDensity1D& profile, const BoxDensity& rho) {
  double acc = 0.0;
  for (const auto& a : profile.pieces()) {
    for (const auto& b : rho.pieces()) acc += a.mass() * b.mass() * std::log(a.level * b.level);
  }
  return acc;
}

struct SFunctionalBreakdown {
  double ray_term = 0.0;
  double f_entropy = 0.0;
  double g_entropy = 0.0;
  double f_tilde_term = 0.0;
  double g_tilde_term = 0.0;
  double total = 0.0;
};

inline nlohmann::json to_json(const SFunctionalBreakdown& s) {
  return {{"ray_term", s.ray_term},         {"f_entropy", s.f_entropy},       {"g_entropy", s.g_entropy},
          {"f_tilde_term", s.f_tilde_term}, {"g_tilde_term", s.g_tilde_term}, {"total", s.total}};
}

namespace detail {

inline void check_piece_masses(const DiscreteMeasure& atoms, const std::vector<double>& marg,
                               const PiecewiseConstantDensity1D& profile, const char* side) {
  std::vector<double> mass(profile.pieces().size(), 0.0);
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    const int k = profile.piece_of(atoms.position(i));
    if (k < 0) fail(ErrorCode::MarginalMismatch, std::string(side) + " atom outside the profile support");
    mass[static_cast<std::size_t>(k)] += marg[i];
  }
  for (std::size_t k = 0; k < mass.size(); ++k) {
    if (std::abs(mass[k] - profile.pieces()[k].mass()) > 1e-9) {
      fail(ErrorCode::MarginalMismatch, std::string(side) + " piece mass differs from the profile");
    }
  }
}

}  // namespace detail

// Second-order coefficient for a ray coupling kappa shared by all rays:
//   ray_term - f_entropy/2 - g_entropy/2 + f_tilde_term/2 + g_tilde_term/2,
// where the ray term uses log(2 pi |s - t|).
inline SFunctionalBreakdown s_functional(const ProductInstance& inst, const Plan& kappa, int d) {
  if (kappa.row().dim() != 1 || kappa.col().dim() != 1) {
    fail(ErrorCode::DimensionMismatch, "ray couplings live on the line");
  }
  if (kappa.marginal_error() > 1e-9) fail(ErrorCode::MarginalMismatch, "ray coupling marginals are off");
  detail::check_piece_masses(kappa.row(), kappa.row_sums(), inst.f1, "source");
  detail::check_piece_masses(kappa.col(), kappa.col_sums(), inst.g1, "target");

  SFunctionalBreakdown s;
  s.ray_term = ray_objective(kappa, d, 2.0 * kPi);
  s.f_entropy = product_density_entropy(inst.f1, inst.rho);
  s.g_entropy = product_density_entropy(inst.g1, inst.rho);
  s.f_tilde_term = density_entropy(inst.f1);
  s.g_tilde_term = density_entropy(inst.g1);
  s.total = s.ray_term - 0.5 * s.f_entropy - 0.5 * s.g_entropy + 0.5 * s.f_tilde_term + 0.5 * s.g_tilde_term;
  return s;
}

inline SFunctionalBreakdown s_functional(const ProductInstance& inst, const RayEOTSolution& sol) {
  return s_functional(inst, sol.kappa, sol.d);
}

// Euclidean transport cost plus eps times the relative entropy.
inline double c_eps(const Plan& p, double eps) {
  const double cost = distance_cost(p);
  if (eps == 0.0) return cost;
  return cost + eps * rel_entropy(p);
}

struct ExpansionFit {
  double b = 0.0;
  double c = 0.0;
  std::vector<double> residuals;
  double ot_reference = 0.0;
};

inline nlohmann::json to_json(const ExpansionFit& f) {
  return {{"b", f.b}, {"c", f.c}, {"residuals", f.residuals}, {"ot_reference", f.ot_reference}};
}

struct SweepPoint {
  double eps = 0.0;
  double eot = 0.0;
};

// Least squares of (eot - ot) / eps against b log(1/eps) + c.
inline ExpansionFit expansion_fit(const std::vector<SweepPoint>& sweep, double ot) {
  if (sweep.size() < 3) fail(ErrorCode::SingularFit, "need at least three sweep points");
  const std::size_t n = sweep.size();
  std::vector<double> x(n), y(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (!(sweep[k].eps > 0.0)) fail(ErrorCode::InvalidArgument, "eps must be positive");
    x[k] = std::log(1.0 / sweep[k].eps);
    y[k] = (sweep[k].eot - ot) / sweep[k].eps;
  }
  double xm = 0.0, ym = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    xm += x[k];
    ym += y[k];
  }
  xm /= static_cast<double>(n);
  ym /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    sxx += (x[k] - xm) * (x[k] - xm);
    sxy += (x[k] - xm) * (y[k] - ym);
  }
  if (!(sxx > 1e-14 * (1.0 + xm * xm))) fail(ErrorCode::SingularFit, "eps values are not distinct");
  ExpansionFit fit;
  fit.b = sxy / sxx;
  fit.c = ym - fit.b * xm;
  fit.ot_reference = ot;
  fit.residuals.resize(n);
  for (std::size_t k = 0; k < n; ++k) fit.residuals[k] = y[k] - (fit.b * x[k] + fit.c);
  return fit;
}

struct ProportionalFit {
  double slope = 0.0;
  double max_rel_residual = 0.0;
};

// y ~ K x through the origin; relative residuals |y - K x| / (K x).
inline ProportionalFit proportional_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) fail(ErrorCode::DimensionMismatch, "fit arrays differ in length");
  if (x.size() < 2) fail(ErrorCode::SingularFit, "need at least two points for a proportional fit");
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += x[k] * x[k];
    sxy += x[k] * y[k];
  }
  if (!(sxx > 0.0)) fail(ErrorCode::SingularFit, "all abscissae vanish");
  ProportionalFit fit;
  fit.slope = sxy / sxx;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double pred = fit.slope * x[k];
    fit.max_rel_residual = std::max(fit.max_rel_residual, std::abs(y[k] - pred) / std::abs(pred));
  }
  return fit;
}

}  // namespace emot
