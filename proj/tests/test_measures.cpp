#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "corpus.hpp"
#include "emot/instances.hpp"
#include "emot/measures.hpp"
#include "emot/metrics.hpp"
#include "emot/rayeot.hpp"

namespace emot {
namespace {

using testing::random_measure;
using testing::random_plan;

Plan single_pair(std::vector<double> x, std::vector<double> y) {
  const std::size_t d = x.size();
  return Plan::dense(DiscreteMeasure(d, std::move(x), {1.0}), DiscreteMeasure(d, std::move(y), {1.0}), {1.0});
}

TEST(Discretize, UniformHalfGrid) {
  const PiecewiseConstantDensity1D unif({{0.0, 1.0, 1.0}});
  const auto m = discretize_1d(unif, 0.5);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m.position(0), 0.25);
  EXPECT_EQ(m.position(1), 0.75);
  EXPECT_EQ(m.weight(0), 0.5);
  EXPECT_EQ(m.weight(1), 0.5);
}

TEST(Discretize, Section62SourceUnitGrid) {
  const auto inst = make_section62(2);
  const auto m = discretize_1d(inst.f1, 1.0);
  ASSERT_EQ(m.size(), 3u);
  EXPECT_EQ(m.position(0), 0.5);
  EXPECT_EQ(m.position(1), 1.5);
  EXPECT_EQ(m.position(2), 5.5);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(m.weight(i), 1.0 / 3.0, 1e-15);
}

TEST(Discretize, Deterministic) {
  const auto inst = make_section62(2);
  EXPECT_EQ(discretize_1d(inst.g1, 0.125), discretize_1d(inst.g1, 0.125));
}

TEST(Discretize, EmptyProfileRejected) {
  const PiecewiseConstantDensity1D empty;
  try {
    discretize_1d(empty, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyDensity);
  }
}

TEST(Discretize, TwoBoxesHalfGrid) {
  const auto [mu, nu] = discretize_instance(make_two_boxes(2, 3.0), GridSpec{0.5, 0.5});
  ASSERT_EQ(mu.size(), 4u);
  for (double w : mu.weights()) EXPECT_EQ(w, 0.25);
  EXPECT_NEAR(nu.total_mass(), 1.0, 1e-15);
}

TEST(Discretize, Section62UnitGrid) {
  const auto [mu, nu] = discretize_instance(make_section62(2), GridSpec{1.0, 1.0});
  ASSERT_EQ(mu.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(mu.point(i)[1], 0.5);
}

TEST(Discretize, WeightsSumToOne) {
  for (double h : {0.5, 0.25, 0.1, 1.0 / 48.0}) {
    const auto [mu, nu] = discretize_instance(make_section62(3), GridSpec{h, std::max(h, 0.1)});
    EXPECT_NEAR(mu.total_mass(), 1.0, 1e-12);
    EXPECT_NEAR(nu.total_mass(), 1.0, 1e-12);
  }
}

TEST(Discretize, BudgetExceeded) {
  try {
    discretize_instance(make_two_boxes(3, 3.0), GridSpec{0.01, 0.01, 20000});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BudgetExceeded);
  }
}

TEST(RelEntropy, ProductIsZero) {
  std::mt19937_64 rng(1);
  const auto mu = random_measure(rng, 4, 2);
  const auto nu = random_measure(rng, 3, 2);
  std::vector<double> w;
  for (double a : mu.weights())
    for (double b : nu.weights()) w.push_back(a * b);
  EXPECT_NEAR(rel_entropy(Plan::dense(mu, nu, w)), 0.0, 1e-15);
}

TEST(RelEntropy, PermutationIsLogN) {
  for (std::size_t n : {2u, 3u, 5u}) {
    std::vector<double> pos(n);
    for (std::size_t i = 0; i < n; ++i) pos[i] = static_cast<double>(i);
    const auto mu = testing::uniform_line(pos);
    std::vector<PlanEntry> e;
    for (std::size_t i = 0; i < n; ++i) e.push_back({i, (i + 1) % n, 1.0 / static_cast<double>(n)});
    EXPECT_NEAR(rel_entropy(Plan::sparse(mu, mu, e)), std::log(static_cast<double>(n)), 1e-14);
  }
}

TEST(RelEntropy, DiagonalTwoByTwo) {
  const auto mu = testing::uniform_line({0.0, 1.0});
  EXPECT_NEAR(rel_entropy(Plan::dense(mu, mu, {0.5, 0.0, 0.0, 0.5})), std::log(2.0), 1e-15);
}

TEST(RelEntropy, ZeroReferenceMassIsInfinite) {
  const auto mu = DiscreteMeasure::on_line({0.0, 1.0}, {1.0, 0.0});
  const auto nu = DiscreteMeasure::on_line({2.0}, {1.0});
  EXPECT_TRUE(std::isinf(rel_entropy(Plan::dense(mu, nu, {0.5, 0.5}))));
  EXPECT_EQ(rel_entropy(Plan::dense(mu, nu, {1.0, 0.0})), 0.0);
}

TEST(RelEntropy, NonnegativeAndZeroOnlyForProduct) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 25; ++k) {
    const auto mu = random_measure(rng, 2 + k % 4, 2);
    const auto nu = random_measure(rng, 2 + (k / 4) % 4, 2);
    const double h = rel_entropy(random_plan(rng, mu, nu));
    EXPECT_GE(h, 0.0);
    EXPECT_GT(h, 1e-10);
  }
}

TEST(TransportCost, ExamplesAndLinearity) {
  const auto m = DiscreteMeasure(2, {0.0, 0.0, 1.0, 2.0}, {0.5, 0.5});
  EXPECT_EQ(distance_cost(Plan::dense(m, m, {0.5, 0.0, 0.0, 0.5})), 0.0);
  EXPECT_EQ(distance_cost(single_pair({0.0, 0.0}, {3.0, 0.0})), 3.0);

  std::mt19937_64 rng(3);
  for (int k = 0; k < 10; ++k) {
    const auto mu = random_measure(rng, 4, 2);
    const auto nu = random_measure(rng, 5, 2);
    const auto p1 = random_plan(rng, mu, nu).to_dense();
    const auto p2 = random_plan(rng, mu, nu).to_dense();
    const double a = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    std::vector<double> mix(p1.size());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * p1[i] + (1.0 - a) * p2[i];
    const double lhs = distance_cost(Plan::dense(mu, nu, mix));
    const double rhs = a * distance_cost(Plan::dense(mu, nu, p1)) + (1.0 - a) * distance_cost(Plan::dense(mu, nu, p2));
    EXPECT_NEAR(lhs, rhs, 1e-12);
  }
}

TEST(TransportCost, ComonotoneRayPlanOnTwoBoxes) {
  const auto fam = disintegrate(make_two_boxes(2, 3.0), GridSpec{0.5, 0.5});
  const auto kappa = Plan::dense(discretize_1d(fam.per_ray_source, 0.5), discretize_1d(fam.per_ray_target, 0.5),
                                 {0.5, 0.0, 0.0, 0.5});
  EXPECT_EQ(distance_cost(assemble_ray_plan(fam, kappa)), 3.0);
}

TEST(Witness, DictionaryLayout) {
  EXPECT_EQ(witness_dictionary_size(2), 1u + 4u + 10u + 1u);
  std::vector<double> f;
  const double x[] = {1.0, 2.0};
  const double y[] = {4.0, 6.0};
  witness_features(x, y, f);
  ASSERT_EQ(f.size(), 16u);
  EXPECT_EQ(f[0], 1.0);
  EXPECT_EQ(f[1], 1.0);
  EXPECT_EQ(f[4], 6.0);
  EXPECT_EQ(f[5], 1.0);
  EXPECT_EQ(f[6], 2.0);
  EXPECT_EQ(f[14], 36.0);
  EXPECT_EQ(f[15], 5.0);
}

TEST(Witness, Examples) {
  const auto a = single_pair({0.0, 0.0}, {0.0, 1.0});
  const auto b = single_pair({0.0, 0.0}, {0.0, 2.0});
  EXPECT_EQ(witness_discrepancy(a, a), 0.0);
  EXPECT_GE(witness_discrepancy(a, b), 1.0);
}

TEST(Witness, BlindToMomentPreservingSwap) {
  // Two permutation plans on five atoms with equal sum of squared and of
  // absolute displacements: every dictionary moment agrees.
  const auto mu = testing::uniform_line({0.0, 1.0, 2.0, 3.0, 4.0});
  auto perm = [&](std::vector<std::size_t> s) {
    std::vector<PlanEntry> e;
    for (std::size_t i = 0; i < s.size(); ++i) e.push_back({i, s[i], 0.2});
    return Plan::sparse(mu, mu, e);
  };
  const auto p = perm({0, 1, 2, 4, 3});
  const auto q = perm({0, 1, 3, 2, 4});
  EXPECT_GT(w1_exact(p, q), 0.1);
  EXPECT_NEAR(witness_discrepancy(p, q), 0.0, 1e-15);
}

TEST(Witness, Pseudometric) {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 10; ++k) {
    const auto mu = random_measure(rng, 3, 2);
    const auto nu = random_measure(rng, 4, 2);
    const auto a = random_plan(rng, mu, nu);
    const auto b = random_plan(rng, mu, nu);
    const auto c = random_plan(rng, mu, nu);
    EXPECT_EQ(witness_discrepancy(a, b), witness_discrepancy(b, a));
    EXPECT_LE(witness_discrepancy(a, c), witness_discrepancy(a, b) + witness_discrepancy(b, c));
  }
}

TEST(Witness, DimensionMismatch) {
  const auto a = single_pair({0.0}, {1.0});
  const auto b = single_pair({0.0, 0.0}, {1.0, 0.0});
  EXPECT_THROW(witness_discrepancy(a, b), Error);
}

TEST(W1, Examples) {
  const auto a = single_pair({0.0, 0.0}, {0.0, 1.0});
  const auto b = single_pair({3.0, 0.0}, {0.0, 5.0});
  EXPECT_EQ(w1_exact(a, a), 0.0);
  EXPECT_NEAR(w1_exact(a, b), 5.0, 1e-12);
}

TEST(W1, SwapMatchesLpOracle) {
  const auto mu = DiscreteMeasure(2, {0.0, 0.0, 1.0, 0.0}, {0.5, 0.5});
  const auto nu = DiscreteMeasure(2, {0.0, 1.0, 1.0, 1.0}, {0.5, 0.5});
  const auto p = Plan::dense(mu, nu, {0.5, 0.0, 0.0, 0.5});
  const auto q = Plan::dense(mu, nu, {0.0, 0.5, 0.5, 0.0});
  const auto a = plan_as_measure(p);
  const auto b = plan_as_measure(q);
  EXPECT_NEAR(w1_exact(p, q), lp_ot(a, b, distance_matrix(a, b)).value, 1e-14);
  EXPECT_NEAR(w1_exact(p, q), 1.0, 1e-12);
}

TEST(W1, ZeroIffIdentical) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 5; ++k) {
    const auto mu = random_measure(rng, 2, 2);
    const auto nu = random_measure(rng, 2, 2);
    const auto a = random_plan(rng, mu, nu);
    const auto b = random_plan(rng, mu, nu);
    EXPECT_NEAR(w1_exact(a, a), 0.0, 1e-10);
    EXPECT_GT(w1_exact(a, b), 1e-10);
  }
}

TEST(W1, BudgetExceeded) {
  std::mt19937_64 rng(6);
  const auto mu = random_measure(rng, 15, 2);
  const auto p = random_plan(rng, mu, mu);
  try {
    w1_exact(p, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BudgetExceeded);
  }
}

TEST(PlanStorage, SparseSumsDuplicates) {
  const auto mu = testing::uniform_line({0.0, 1.0});
  const auto p = Plan::sparse(mu, mu, {{1, 1, 0.25}, {0, 0, 0.5}, {1, 1, 0.25}});
  EXPECT_EQ(p.at(1, 1), 0.5);
  EXPECT_EQ(p.at(0, 1), 0.0);
  EXPECT_EQ(p.marginal_error(), 0.0);
}

TEST(Csv, HeadersAndFormatting) {
  const auto mu = DiscreteMeasure::on_line({0.1, 2.0}, {0.3, 0.7});
  std::ostringstream m;
  write_measure_csv(m, mu);
  EXPECT_EQ(m.str(), "idx,c0,weight\n0,0.10000000000000001,0.29999999999999999\n1,2,0.69999999999999996\n");
  std::ostringstream p;
  write_plan_csv(p, Plan::dense(mu, mu, {0.3, 0.0, 0.0, 0.7}));
  EXPECT_EQ(p.str().substr(0, p.str().find('\n')), "i,j,x0,y0,weight");
}

}  // namespace
}  // namespace emot
