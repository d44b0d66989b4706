#include <algorithm>
#include <functional>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "corpus.hpp"
#include "emot/oracles.hpp"
#include "emot/sinkhorn.hpp"

namespace emot {
namespace {

// Minimum cost over all basic feasible solutions of the n x m
// transportation polytope: every basis is a spanning tree of K_{n,m}, whose
// flow is found by peeling leaves.
double vertex_enumeration(const std::vector<double>& a, const std::vector<double>& b, const CostMatrix& cost) {
  const std::size_t n = a.size(), m = b.size(), cells = n * m, k = n + m - 1;
  std::vector<char> pick(cells, 0);
  std::fill(pick.begin(), pick.begin() + static_cast<long>(k), 1);
  double best = kInf;
  std::vector<std::size_t> parent(n + m);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  do {
    std::iota(parent.begin(), parent.end(), 0);
    std::vector<std::size_t> chosen;
    bool tree = true;
    for (std::size_t c = 0; c < cells && tree; ++c) {
      if (!pick[c]) continue;
      const std::size_t r = find(c / m), s = find(n + c % m);
      if (r == s) tree = false;
      parent[r] = s;
      chosen.push_back(c);
    }
    if (!tree) continue;
    std::vector<double> mass(n + m);
    for (std::size_t i = 0; i < n; ++i) mass[i] = a[i];
    for (std::size_t j = 0; j < m; ++j) mass[n + j] = b[j];
    std::vector<char> used(chosen.size(), 0);
    std::vector<double> flow(chosen.size(), 0.0);
    for (std::size_t step = 0; step < chosen.size(); ++step) {
      std::vector<int> deg(n + m, 0);
      for (std::size_t e = 0; e < chosen.size(); ++e) {
        if (used[e]) continue;
        ++deg[chosen[e] / m];
        ++deg[n + chosen[e] % m];
      }
      for (std::size_t e = 0; e < chosen.size(); ++e) {
        if (used[e]) continue;
        const std::size_t r = chosen[e] / m, s = n + chosen[e] % m;
        const std::size_t leaf = deg[r] == 1 ? r : (deg[s] == 1 ? s : n + m);
        if (leaf == n + m) continue;
        const std::size_t other = leaf == r ? s : r;
        flow[e] = mass[leaf];
        mass[leaf] = 0.0;
        mass[other] -= flow[e];
        used[e] = 1;
        break;
      }
    }
    bool feasible = true;
    double value = 0.0;
    for (std::size_t e = 0; e < chosen.size(); ++e) {
      if (flow[e] < -1e-12) feasible = false;
      value += flow[e] * cost(chosen[e] / m, chosen[e] % m);
    }
    if (feasible) best = std::min(best, value);
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return best;
}

TEST(LpOt, TwoByTwoIdentity) {
  const auto mu = testing::uniform_line({0.0, 1.0});
  const auto res = lp_ot(mu, mu, CostMatrix(2, 2, {0.0, 1.0, 1.0, 0.0}));
  EXPECT_EQ(res.value, 0.0);
  EXPECT_EQ(res.plan.at(0, 0), 0.5);
  EXPECT_EQ(res.plan.at(1, 1), 0.5);
  EXPECT_EQ(res.plan.at(0, 1), 0.0);
}

TEST(LpOt, ComonotoneLine) {
  const auto mu = testing::uniform_line({0.5, 1.5, 5.5});
  const auto nu = testing::uniform_line({3.5, 7.5, 8.5});
  EXPECT_NEAR(lp_ot(mu, nu, distance_matrix(mu, nu)).value, 4.0, 1e-14);
}

TEST(LpOt, MatchesVertexEnumeration) {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> ic(0, 9);
  std::uniform_int_distribution<int> iw(1, 6);
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<double> a(5), b(5);
    for (double& x : a) x = iw(rng);
    for (double& x : b) x = iw(rng);
    const double sa = std::accumulate(a.begin(), a.end(), 0.0), sb = std::accumulate(b.begin(), b.end(), 0.0);
    for (double& x : a) x /= sa;
    for (double& x : b) x /= sb;
    CostMatrix cost(5, 5);
    for (double& c : cost.values) c = ic(rng);
    const auto mu = DiscreteMeasure::on_line({0, 1, 2, 3, 4}, a);
    const auto nu = DiscreteMeasure::on_line({0, 1, 2, 3, 4}, b);
    EXPECT_NEAR(lp_ot(mu, nu, cost).value, vertex_enumeration(a, b, cost), 1e-12);
  }
}

TEST(LpOt, BelowRandomFeasiblePlans) {
  std::mt19937_64 rng(22);
  const auto mu = testing::random_measure(rng, 5, 2);
  const auto nu = testing::random_measure(rng, 6, 2);
  const auto c = distance_matrix(mu, nu);
  const double lp = lp_ot(mu, nu, c).value;
  for (int k = 0; k < 100; ++k) {
    const auto p = testing::random_plan(rng, mu, nu);
    const double cost = reduce_plan(p, [&](std::size_t i, std::size_t j, double w) { return w * c(i, j); });
    EXPECT_GE(cost - lp, -1e-10);
  }
}

TEST(LpOt, CostTranslation) {
  std::mt19937_64 rng(23);
  const auto mu = testing::random_measure(rng, 5, 2);
  const auto nu = testing::random_measure(rng, 4, 2);
  const auto c = distance_matrix(mu, nu);
  CostMatrix shifted = c;
  for (double& x : shifted.values) x += 2.5;
  const auto a = lp_ot(mu, nu, c);
  const auto b = lp_ot(mu, nu, shifted);
  EXPECT_NEAR(b.value - a.value, 2.5, 1e-12);
  for (std::size_t i = 0; i < mu.size(); ++i)
    for (std::size_t j = 0; j < nu.size(); ++j) EXPECT_EQ(a.plan.at(i, j) > 0.0, b.plan.at(i, j) > 0.0);
}

TEST(LpOt, Errors) {
  const auto mu = testing::uniform_line({0.0, 1.0});
  const auto heavy = DiscreteMeasure::on_line({0.0}, {2.0});
  try {
    lp_ot(mu, heavy, distance_matrix(mu, heavy));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnbalancedMasses);
  }
  try {
    lp_ot(mu, mu, CostMatrix(2, 2, {0.0, kInf, kInf, 0.0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InfiniteCostUnsupported);
  }
}

TEST(TinyEot, ClosedForm) {
  const auto mu = testing::uniform_line({0.0, 1.0});
  const auto res = tiny_eot(mu, mu, CostMatrix(2, 2, {0.0, 1.0, 1.0, 0.0}), 1.0);
  EXPECT_NEAR(res.plan.at(0, 0), 0.5 * std::exp(1.0) / (1.0 + std::exp(1.0)), 1e-14);
  EXPECT_NEAR(res.plan.at(0, 0), 0.365529, 1e-6);
}

TEST(TinyEot, LargeEpsIsProduct) {
  std::mt19937_64 rng(24);
  const auto mu = testing::random_measure(rng, 4, 2);
  const auto nu = testing::random_measure(rng, 3, 2);
  const auto res = tiny_eot(mu, nu, distance_matrix(mu, nu), 1e3);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(res.plan.at(i, j), mu.weight(i) * nu.weight(j), 1e-4);
}

TEST(TinyEot, SingleAtom) {
  const auto a = DiscreteMeasure::on_line({0.0}, {1.0});
  const auto b = DiscreteMeasure::on_line({2.0}, {1.0});
  const auto res = tiny_eot(a, b, distance_matrix(a, b), 0.3);
  EXPECT_EQ(res.plan.at(0, 0), 1.0);
  EXPECT_EQ(res.objective, 2.0);
}

TEST(TinyEot, BudgetExceeded) {
  std::mt19937_64 rng(25);
  const auto mu = testing::random_measure(rng, 9, 2);
  try {
    tiny_eot(mu, mu, distance_matrix(mu, mu), 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BudgetExceeded);
  }
}

TEST(TinyEot, SandwichedBetweenLpAndSinkhorn) {
  for (const auto& pb : testing::oracle_corpus()) {
    const double tiny = tiny_eot(pb.mu, pb.nu, pb.cost, pb.eps).objective;
    SinkhornConfig cfg;
    cfg.eps = pb.eps;
    EXPECT_LE(tiny, solve(pb.mu, pb.nu, pb.cost, cfg).objective + 1e-8);
    EXPECT_GE(tiny, lp_ot(pb.mu, pb.nu, pb.cost).value - 1e-12);
  }
}

TEST(QuadLogMoment, Examples) {
  const auto s = DiscreteMeasure::on_line({0.0}, {1.0});
  const auto t = DiscreteMeasure::on_line({1.0}, {1.0});
  EXPECT_NEAR(quad_log_moment(Plan::dense(s, t, {1.0})), 1.837877, 1e-6);
  EXPECT_NEAR(quad_log_moment(Plan::dense(s, t, {1.0})), std::log(2.0 * kPi), 1e-15);

  const auto a = testing::uniform_line({0.0, 1.0});
  const auto b = testing::uniform_line({3.0, 4.0});
  const double expected =
      std::log(2.0 * kPi) + 0.25 * (std::log(2.0) + 2.0 * std::log(3.0) + std::log(4.0));
  EXPECT_NEAR(quad_log_moment(Plan::dense(a, b, {0.25, 0.25, 0.25, 0.25})), expected, 1e-14);
}

TEST(QuadLogMoment, CoincidentAtoms) {
  const auto a = DiscreteMeasure::on_line({1.0}, {1.0});
  try {
    quad_log_moment(Plan::dense(a, a, {1.0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CoincidentAtoms);
  }
}

}  // namespace
}  // namespace emot
