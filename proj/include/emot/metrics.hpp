#pragma once

#include <cstddef>
#include <vector>

#include "emot/measures.hpp"
#include "emot/oracles.hpp"

namespace emot {

// A plan seen as a measure on R^{2d}: one atom (x_i, y_j) per nonzero entry.
inline DiscreteMeasure plan_as_measure(const Plan& p) {
  const std::size_t dx = p.row().dim();
  const std::size_t dy = p.col().dim();
  std::vector<double> coords;
  std::vector<double> w;
  p.for_each([&](std::size_t i, std::size_t j, double x) {
    if (x == 0.0) return;
    for (double c : p.row().point(i)) coords.push_back(c);
    for (double c : p.col().point(j)) coords.push_back(c);
    w.push_back(x);
  });
  return DiscreteMeasure(dx + dy, std::move(coords), std::move(w));
}

// Exact W1 between two plans on R^{2d} through the transportation LP.
inline double w1_exact(const Plan& p1, const Plan& p2, std::size_t max_atoms = 400) {
  if (p1.row().dim() != p2.row().dim() || p1.col().dim() != p2.col().dim()) {
    fail(ErrorCode::DimensionMismatch, "plans live in different dimensions");
  }
  const auto a = plan_as_measure(p1);
  const auto b = plan_as_measure(p2);
  if (a.size() + b.size() > max_atoms) {
    fail(ErrorCode::BudgetExceeded, "combined support " + std::to_string(a.size() + b.size()) + " exceeds " +
                                        std::to_string(max_atoms));
  }
  // Rescale the second measure onto the first one's total so rounding in
  // the plans does not trip the balance check.
  std::vector<double> wb = b.weights();
  const double ratio = a.total_mass() / b.total_mass();
  for (double& x : wb) x *= ratio;
  const DiscreteMeasure bb(b.dim(), b.coords(), std::move(wb));
  return lp_ot(a, bb, distance_matrix(a, bb)).value;
}

}  // namespace emot
