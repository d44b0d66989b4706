#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <queue>
#include <string>
#include <vector>

#include "emot/common.hpp"
#include "emot/measures.hpp"
#include "emot/sinkhorn.hpp"

namespace emot {

struct LPResult {
  double value = 0.0;
  Plan plan;
  std::size_t basis_size = 0;
  std::size_t pivots = 0;
};

namespace detail {

struct BasicCell {
  std::size_t i;
  std::size_t j;
  double x;
};

}  // namespace detail

// Exact discrete optimal transport by the transportation simplex. The initial
// basis comes from the north-west corner rule; entering and leaving cells
// follow Bland's rule in (row, col) lexicographic order.
inline LPResult lp_ot(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cost) {
  const std::size_t n = mu.size();
  const std::size_t m = nu.size();
  if (cost.n != n || cost.m != m) fail(ErrorCode::DimensionMismatch, "cost matrix shape does not match");
  if (n == 0 || m == 0) fail(ErrorCode::InvalidArgument, "empty measure");
  if (std::abs(mu.total_mass() - nu.total_mass()) > 1e-12) {
    fail(ErrorCode::UnbalancedMasses, "total masses differ");
  }
  double cmax = 0.0;
  for (double c : cost.values) {
    if (!std::isfinite(c)) fail(ErrorCode::InfiniteCostUnsupported, "lp_ot requires finite costs");
    cmax = std::max(cmax, std::abs(c));
  }
  const double rc_tol = 1e-12 * (1.0 + cmax);

  std::vector<detail::BasicCell> basis;
  basis.reserve(n + m - 1);
  std::vector<long> where(n * m, -1);
  {
    std::vector<double> a = mu.weights();
    std::vector<double> b = nu.weights();
    std::size_t i = 0, j = 0;
    while (true) {
      const double x = std::min(a[i], b[j]);
      where[i * m + j] = static_cast<long>(basis.size());
      basis.push_back({i, j, x});
      a[i] -= x;
      b[j] -= x;
      if (i == n - 1 && j == m - 1) break;
      if (j == m - 1 || (i < n - 1 && a[i] <= b[j])) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  const std::size_t nodes = n + m;
  std::vector<double> pot(nodes);
  std::vector<char> known(nodes);
  std::vector<std::vector<std::size_t>> adj(nodes);
  std::vector<long> parent_cell(nodes);
  std::vector<long> parent_node(nodes);
  std::size_t pivots = 0;

  auto build_adj = [&] {
    for (auto& a : adj) a.clear();
    for (std::size_t k = 0; k < basis.size(); ++k) {
      adj[basis[k].i].push_back(k);
      adj[n + basis[k].j].push_back(k);
    }
  };

  while (true) {
    build_adj();
    // Potentials u (row nodes) and v (column nodes) with u_0 = 0.
    std::fill(known.begin(), known.end(), 0);
    std::queue<std::size_t> q;
    pot[0] = 0.0;
    known[0] = 1;
    q.push(0);
    while (!q.empty()) {
      const std::size_t node = q.front();
      q.pop();
      for (std::size_t k : adj[node]) {
        const auto& cell = basis[k];
        const std::size_t other = node < n ? n + cell.j : cell.i;
        if (known[other]) continue;
        pot[other] = cost(cell.i, cell.j) - pot[node];
        known[other] = 1;
        q.push(other);
      }
    }

    long enter_i = -1, enter_j = -1;
    for (std::size_t i = 0; i < n && enter_i < 0; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        if (where[i * m + j] >= 0) continue;
        if (cost(i, j) - pot[i] - pot[n + j] < -rc_tol) {
          enter_i = static_cast<long>(i);
          enter_j = static_cast<long>(j);
          break;
        }
      }
    }
    if (enter_i < 0) break;

    // Tree path from row node enter_i to column node n + enter_j.
    std::fill(parent_cell.begin(), parent_cell.end(), -2);
    const std::size_t start = static_cast<std::size_t>(enter_i);
    const std::size_t goal = n + static_cast<std::size_t>(enter_j);
    parent_cell[start] = -1;
    std::queue<std::size_t> bfs;
    bfs.push(start);
    while (!bfs.empty() && parent_cell[goal] == -2) {
      const std::size_t node = bfs.front();
      bfs.pop();
      for (std::size_t k : adj[node]) {
        const auto& cell = basis[k];
        const std::size_t other = node < n ? n + cell.j : cell.i;
        if (parent_cell[other] != -2) continue;
        parent_cell[other] = static_cast<long>(k);
        parent_node[other] = static_cast<long>(node);
        bfs.push(other);
      }
    }
    // Walk back from the goal; edges alternate -, +, -, ... starting at the
    // edge incident to the goal column.
    std::vector<std::size_t> minus, plus;
    {
      std::size_t node = goal;
      bool is_minus = true;
      while (node != start) {
        const auto k = static_cast<std::size_t>(parent_cell[node]);
        (is_minus ? minus : plus).push_back(k);
        is_minus = !is_minus;
        node = static_cast<std::size_t>(parent_node[node]);
      }
    }
    double theta = kInf;
    for (std::size_t k : minus) theta = std::min(theta, basis[k].x);
    std::size_t leave = minus.front();
    bool have = false;
    for (std::size_t k : minus) {
      if (basis[k].x != theta) continue;
      if (!have || basis[k].i < basis[leave].i || (basis[k].i == basis[leave].i && basis[k].j < basis[leave].j)) {
        leave = k;
        have = true;
      }
    }
    for (std::size_t k : plus) basis[k].x += theta;
    for (std::size_t k : minus) basis[k].x = std::max(0.0, basis[k].x - theta);
    where[basis[leave].i * m + basis[leave].j] = -1;
    basis[leave] = {static_cast<std::size_t>(enter_i), static_cast<std::size_t>(enter_j), theta};
    where[static_cast<std::size_t>(enter_i) * m + static_cast<std::size_t>(enter_j)] = static_cast<long>(leave);
    ++pivots;
  }

  std::vector<PlanEntry> entries;
  entries.reserve(basis.size());
  for (const auto& c : basis) entries.push_back({c.i, c.j, c.x});
  LPResult res;
  res.basis_size = basis.size();
  res.pivots = pivots;
  res.plan = Plan::sparse(mu, nu, std::move(entries));
  res.value = reduce_plan(res.plan, [&](std::size_t i, std::size_t j, double w) { return w * cost(i, j); });
  return res;
}

struct TinyEotResult {
  Plan plan;
  std::vector<double> u;
  std::vector<double> v;
  double objective = 0.0;
  double residual = 0.0;
  std::size_t iters = 0;
};

// Reference entropic solver for problems up to 8 x 8: alternating exact KL
// projections onto the two marginal constraints in extended precision,
// iterated until the L1 residual is below 1e-14 or stalls. Residuals are
// inspected every 128 sweeps.
inline TinyEotResult tiny_eot(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cost,
                              double eps) {
  using real = long double;
  const std::size_t n = mu.size();
  const std::size_t m = nu.size();
  if (n > 8 || m > 8) fail(ErrorCode::BudgetExceeded, "tiny_eot handles at most 8 x 8 problems");
  if (!(eps > 0.0)) fail(ErrorCode::InvalidArgument, "eps must be positive");
  if (cost.n != n || cost.m != m) fail(ErrorCode::DimensionMismatch, "cost matrix shape does not match");

  // Kernel against mu (x) nu, shifted by the smallest finite cost.
  real cmin = std::numeric_limits<real>::infinity();
  for (double c : cost.values) {
    if (std::isfinite(c)) cmin = std::min(cmin, static_cast<real>(c));
  }
  std::vector<real> k(n * m, 0.0L);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double c = cost(i, j);
      if (std::isfinite(c)) {
        k[i * m + j] = static_cast<real>(mu.weight(i)) * static_cast<real>(nu.weight(j)) *
                       std::exp(-(static_cast<real>(c) - cmin) / static_cast<real>(eps));
      }
    }
  }
  std::vector<real> a(n, 1.0L), b(m, 1.0L);
  auto row_residual = [&] {
    real err = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
      real s = 0.0L;
      for (std::size_t j = 0; j < m; ++j) s += a[i] * k[i * m + j] * b[j];
      err += std::abs(s - static_cast<real>(mu.weight(i)));
    }
    return err;
  };

  TinyEotResult res;
  real last = std::numeric_limits<real>::infinity();
  real err = last;
  constexpr std::size_t kMaxSweeps = 50'000'000;
  while (res.iters < kMaxSweeps) {
    for (int sweep = 0; sweep < 128; ++sweep) {
      for (std::size_t i = 0; i < n; ++i) {
        real s = 0.0L;
        for (std::size_t j = 0; j < m; ++j) s += k[i * m + j] * b[j];
        a[i] = s > 0.0L ? static_cast<real>(mu.weight(i)) / s : 0.0L;
      }
      for (std::size_t j = 0; j < m; ++j) {
        real s = 0.0L;
        for (std::size_t i = 0; i < n; ++i) s += k[i * m + j] * a[i];
        b[j] = s > 0.0L ? static_cast<real>(nu.weight(j)) / s : 0.0L;
      }
    }
    res.iters += 128;
    err = row_residual();
    if (err <= 1e-16L) break;
    if (err <= 1e-14L && err >= last * 0.999L) break;
    last = err;
  }
  res.residual = static_cast<double>(err);

  std::vector<double> w(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) w[i * m + j] = static_cast<double>(a[i] * k[i * m + j] * b[j]);
  }
  // Potentials in the convention P_ij = mu_i nu_j exp((u_i + v_j - c_ij) / eps).
  res.u.resize(n);
  res.v.resize(m);
  for (std::size_t i = 0; i < n; ++i) {
    res.u[i] = a[i] > 0.0L ? static_cast<double>(static_cast<real>(eps) * std::log(a[i]) + cmin) : -kInf;
  }
  for (std::size_t j = 0; j < m; ++j) {
    res.v[j] = b[j] > 0.0L ? static_cast<double>(static_cast<real>(eps) * std::log(b[j])) : -kInf;
  }
  res.plan = Plan::dense(mu, nu, std::move(w));
  real obj = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const real p = a[i] * k[i * m + j] * b[j];
      if (p <= 0.0L) continue;
      const real ref = static_cast<real>(mu.weight(i)) * static_cast<real>(nu.weight(j));
      obj += p * static_cast<real>(cost(i, j)) + static_cast<real>(eps) * p * std::log(p / ref);
    }
  }
  res.objective = static_cast<double>(obj);
  if (!(res.residual <= 1e-12)) {
    fail(ErrorCode::NonConvergence, "tiny_eot residual " + format_double(res.residual));
  }
  return res;
}

// Sum of kappa_ij log(2 pi |s_i - t_j|) over a plan between 1D measures.
inline double quad_log_moment(const Plan& kappa) {
  double total = 0.0;
  std::vector<double> terms;
  kappa.for_each([&](std::size_t i, std::size_t j, double w) {
    const double dist = std::abs(kappa.row().position(i) - kappa.col().position(j));
    if (dist == 0.0) fail(ErrorCode::CoincidentAtoms, "source and target atoms coincide");
    if (w != 0.0) terms.push_back(w * std::log(2.0 * kPi * dist));
  });
  total = pairwise_sum(terms);
  return total;
}

}  // namespace emot
