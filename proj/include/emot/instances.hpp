#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "emot/common.hpp"
#include "emot/density.hpp"
#include "emot/measures.hpp"
#include "emot/oracles.hpp"
#include "emot/sinkhorn.hpp"

namespace emot {

struct Violation {
  std::string check;
  std::string detail;
};

struct ValidationReport {
  bool ok = true;
  std::vector<Violation> violations;
  double dominance_margin = 0.0;
};

// A1 = [0,2], A2 = [5,6] carry the source, B1 = [3,4], B2 = [7,9] the
// target, each at level 1/3, times the unit cube in the other coordinates.
inline ProductInstance make_section62(int d) {
  if (d < 2) fail(ErrorCode::InvalidDimension, "dimension must be at least 2");
  constexpr double third = 1.0 / 3.0;
  ProductInstance inst;
  inst.d = d;
  inst.axis = 0;
  inst.f1 = PiecewiseConstantDensity1D({{0.0, 2.0, third}, {5.0, 6.0, third}});
  inst.g1 = PiecewiseConstantDensity1D({{3.0, 4.0, third}, {7.0, 9.0, third}});
  inst.rho = BoxDensity::unit_cube(static_cast<std::size_t>(d - 1));
  return inst;
}

// Uniform source on [0,1]^d, uniform target on [shift, shift+1] x [0,1]^{d-1}.
inline ProductInstance make_two_boxes(int d, double shift) {
  if (d < 2) fail(ErrorCode::InvalidDimension, "dimension must be at least 2");
  if (!(shift > 1.0)) fail(ErrorCode::OverlappingSupports, "shift must exceed 1 for disjoint supports");
  ProductInstance inst;
  inst.d = d;
  inst.axis = 0;
  inst.f1 = PiecewiseConstantDensity1D({{0.0, 1.0, 1.0}});
  inst.g1 = PiecewiseConstantDensity1D({{shift, shift + 1.0, 1.0}});
  inst.rho = BoxDensity::unit_cube(static_cast<std::size_t>(d - 1));
  return inst;
}

// Smallest distance between a source piece and a target piece.
inline double support_gap(const ProductInstance& inst) {
  double gap = kInf;
  for (const auto& a : inst.f1.pieces()) {
    for (const auto& b : inst.g1.pieces()) {
      const double sep = std::max(b.lo - a.hi, a.lo - b.hi);
      gap = std::min(gap, sep);
    }
  }
  return gap;
}

// min over breakpoints of F_f1 - F_g1; the difference is piecewise linear
// so the breakpoint minimum is the global one.
inline double dominance_margin(const ProductInstance& inst) {
  double margin = kInf;
  auto pts = inst.f1.breakpoints();
  const auto more = inst.g1.breakpoints();
  pts.insert(pts.end(), more.begin(), more.end());
  for (double t : pts) margin = std::min(margin, inst.f1.cdf(t) - inst.g1.cdf(t));
  return pts.empty() ? 0.0 : margin;
}

inline ValidationReport validate(const ProductInstance& inst) {
  ValidationReport rep;
  auto add = [&](const std::string& check, const std::string& detail) { rep.violations.push_back({check, detail}); };
  if (inst.d < 2) add("dimension", "d = " + std::to_string(inst.d) + " < 2");
  if (inst.axis < 0 || inst.axis >= inst.d) add("axis", "axis index out of range");
  for (auto& v : inst.f1.violations()) add("f1", v);
  for (auto& v : inst.g1.violations()) add("g1", v);
  if (inst.d >= 2 && inst.rho.dim() != static_cast<std::size_t>(inst.d - 1)) {
    add("rho", "transverse dimension " + std::to_string(inst.rho.dim()) + " != d - 1");
  }
  for (auto& v : inst.rho.violations()) add("rho", v);
  for (const auto* prof : {&inst.f1, &inst.g1}) {
    for (const auto& p : prof->pieces()) {
      if (!std::isfinite(p.lo) || !std::isfinite(p.hi)) add("compactness", "unbounded piece");
    }
  }
  if (!inst.f1.empty() && !inst.g1.empty()) {
    const double gap = support_gap(inst);
    if (gap <= 0.0) {
      add("disjointness", "source and target supports overlap");
    } else if (gap < inst.gap_min) {
      add("disjointness", "support gap " + format_double(gap) + " below gap_min " + format_double(inst.gap_min));
    }
    rep.dominance_margin = dominance_margin(inst);
    if (rep.dominance_margin < -1e-12) {
      add("dominance", "F_f1 - F_g1 reaches " + format_double(rep.dominance_margin));
    }
  }
  rep.ok = rep.violations.empty();
  return rep;
}

inline void require_valid(const ProductInstance& inst) {
  const auto rep = validate(inst);
  if (!rep.ok) {
    fail(ErrorCode::InvalidInstance, rep.violations.front().check + ": " + rep.violations.front().detail);
  }
}

// Integral of u (f - g) for u(x) = -x_axis, i.e. E_g1[t] - E_f1[t].
inline double dual_ot_value(const ProductInstance& inst) {
  require_valid(inst);
  return inst.g1.mean() - inst.f1.mean();
}

struct PotentialCertificate {
  double lp_value = 0.0;
  double dual_value = 0.0;
  double gap = 0.0;
  std::size_t atoms = 0;
};

// Exact LP optimum on the h-grid discretization against the closed-form dual
// value.
inline PotentialCertificate certify_potential_detail(const ProductInstance& inst, double h,
                                                     std::size_t max_atoms = 600) {
  require_valid(inst);
  GridSpec grid{h, h, max_atoms};
  const auto [mu, nu] = discretize_instance(inst, grid);
  PotentialCertificate cert;
  cert.atoms = mu.size();
  cert.lp_value = lp_ot(mu, nu, distance_matrix(mu, nu)).value;
  cert.dual_value = dual_ot_value(inst);
  cert.gap = std::abs(cert.lp_value - cert.dual_value);
  return cert;
}

inline double certify_potential(const ProductInstance& inst, double h, std::size_t max_atoms = 600) {
  return certify_potential_detail(inst, h, max_atoms).gap;
}

// JSON document:
//   {"d": 2, "axis": 0, "f1": [[lo, hi, level], ...], "g1": [...],
//    "rho": [[[lo...], [hi...], level], ...]}
inline nlohmann::json to_json(const ProductInstance& inst) {
  nlohmann::json j;
  j["d"] = inst.d;
  j["axis"] = inst.axis;
  auto profile = [](const PiecewiseConstantDensity1D& p) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& piece : p.pieces()) arr.push_back({piece.lo, piece.hi, piece.level});
    return arr;
  };
  j["f1"] = profile(inst.f1);
  j["g1"] = profile(inst.g1);
  nlohmann::json rho = nlohmann::json::array();
  for (const auto& piece : inst.rho.pieces()) rho.push_back({piece.box.lo, piece.box.hi, piece.level});
  j["rho"] = rho;
  return j;
}

inline ProductInstance instance_from_json(const nlohmann::json& j) {
  try {
    ProductInstance inst;
    inst.d = j.at("d").get<int>();
    inst.axis = j.value("axis", 0);
    inst.gap_min = j.value("gap_min", 0.5);
    auto profile = [](const nlohmann::json& arr) {
      std::vector<Piece1D> pieces;
      for (const auto& p : arr) {
        if (p.size() != 3) fail(ErrorCode::ParseError, "profile pieces are [lo, hi, level]");
        pieces.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
      }
      return PiecewiseConstantDensity1D(std::move(pieces));
    };
    inst.f1 = profile(j.at("f1"));
    inst.g1 = profile(j.at("g1"));
    std::vector<BoxPiece> boxes;
    std::size_t dim = inst.d >= 1 ? static_cast<std::size_t>(inst.d - 1) : 0;
    for (const auto& b : j.at("rho")) {
      if (b.size() != 3) fail(ErrorCode::ParseError, "rho pieces are [lo[], hi[], level]");
      boxes.push_back({Box{b[0].get<std::vector<double>>(), b[1].get<std::vector<double>>()}, b[2].get<double>()});
    }
    inst.rho = BoxDensity(dim, std::move(boxes));
    return inst;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, e.what());
  }
}

inline ProductInstance instance_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::ParseError, e.what());
  }
  return instance_from_json(j);
}

}  // namespace emot
