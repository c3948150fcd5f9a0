#include "fixtures.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace orthodir;

TEST(Merit, SphereSubstitution) {
  const auto p = fixtures::circle(1, 1);
  Vec x(2);
  x << 2, 0;
  EXPECT_DOUBLE_EQ(merit_value(p, MeritParams{2.0}, x), 8.0);
}

TEST(Merit, FeasiblePointGivesObjective) {
  const auto p = fixtures::circle(1, 1);
  Vec x(2);
  x << std::cos(0.3), std::sin(0.3);
  const double f = p.objective.value(x);
  // |h| is at roundoff level here, so compare with the exact objective for M = 0
  // and within roundoff for M > 0.
  EXPECT_EQ(merit_value(p, MeritParams{0.0}, x), f);
  EXPECT_NEAR(merit_value(p, MeritParams{5.0}, x), f, 1e-14);
}

TEST(Merit, MatchesRawOracleRecomputation) {
  const auto p = fixtures::two_constraints_r3();
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const Vec x = oracle::gaussian_vec(3, rng);
    const double M = 0.1 * t;
    const Vec h = p.constraint.value(x);
    const double expect = p.objective.value(x) + M * std::sqrt(h[0] * h[0] + h[1] * h[1]);
    EXPECT_NEAR(merit_value(p, MeritParams{M}, x), expect, 1e-12 * (1 + std::abs(expect)));
  }
}

TEST(Merit, ZeroWeightAndMonotoneInM) {
  const auto p = fixtures::four_dim();
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    const Vec x = oracle::gaussian_vec(4, rng);
    EXPECT_EQ(merit_value(p, MeritParams{0.0}, x), p.objective.value(x));
    double prev = -std::numeric_limits<double>::infinity();
    for (double M : {0.0, 0.5, 1.0, 4.0}) {
      const double v = merit_value(p, MeritParams{M}, x);
      EXPECT_GT(v, prev);
      prev = v;
    }
  }
}

TEST(Merit, NonFiniteIsEvaluationError) {
  auto p = fixtures::circle(1, 1);
  Vec x(2);
  x << std::nan(""), 0;
  EXPECT_THROW(merit_value(p, MeritParams{1.0}, x), EvaluationError);
  p.objective.value = [](const Vec&) { return std::numeric_limits<double>::infinity(); };
  EXPECT_THROW(merit_value(p, MeritParams{1.0}, Vec::Ones(2)), EvaluationError);
}

TEST(FiniteDiff, LinearObjective) {
  const auto p = fixtures::circle(0.7, -1.3);
  Vec x(2);
  x << 0.4, 2.0;
  EXPECT_LE(finite_diff_check(p.objective, x, 1e-6), 1e-9);
}

TEST(FiniteDiff, QuadraticConstraint) {
  const auto p = fixtures::circle(1, 1);
  EXPECT_LE(finite_diff_check(p.constraint, Vec::Ones(2), 1e-5), 1e-8);
}

TEST(FiniteDiff, ProcrustesGradient) {
  std::mt19937_64 rng(11);
  const Mat A = oracle::gaussian(6, 6, rng), B = oracle::gaussian(6, 3, rng);
  const auto p = make_procrustes(A, B, 0.5);
  const Vec x = oracle::gaussian_vec(18, rng);
  const double gnorm = p.objective.gradient(x).norm();
  EXPECT_LE(finite_diff_check(p.objective, x, 1e-6), 1e-5 * (1 + gnorm));
}

TEST(FiniteDiff, RejectsNonPositiveStep) {
  const auto p = fixtures::circle(1, 1);
  EXPECT_THROW(finite_diff_check(p.objective, Vec::Ones(2), 0.0), ConfigurationError);
}

TEST(SafetyRegion, BoundaryInclusive) {
  Vec on(2), far(2);
  on << 1, 0;
  far << 2, 0;
  EXPECT_TRUE(in_safety_region(fixtures::circle(1, 1, 1.0), on));
  EXPECT_FALSE(in_safety_region(fixtures::circle(1, 1, 1.0), far));
  EXPECT_TRUE(in_safety_region(fixtures::circle(1, 1, 3.0), far));
}

TEST(ProblemInstance, ValidateRejectsBadShapes) {
  auto p = fixtures::circle(1, 1);
  p.n_h = 3;
  EXPECT_THROW(p.validate(), ConfigurationError);
  p = fixtures::circle(1, 1);
  p.safety_radius = 0;
  EXPECT_THROW(p.validate(), ConfigurationError);
}

TEST(Registry, RequireMissingIsConfigurationError) {
  ConstantRegistry r;
  EXPECT_THROW(ConstantRegistry::require(r.L_f, "L_f"), ConfigurationError);
  r.L_f = 0.0;
  EXPECT_EQ(ConstantRegistry::require(r.L_f, "L_f"), 0.0);
  EXPECT_THROW(ConstantRegistry::require_positive(r.L_f, "L_f"), ConfigurationError);
}

TEST(Registry, LipschitzEstimateOfLinearMap) {
  Mat A(2, 2);
  A << 3, 0, 0, 1;
  std::mt19937_64 rng(2);
  std::vector<Vec> pts;
  for (int i = 0; i < 100; ++i) pts.push_back(oracle::gaussian_vec(2, rng));
  const double L = estimate_lipschitz([&](const Vec& x) { return Vec(A * x); }, pts);
  EXPECT_LE(L, 3.0 + 1e-12);
  EXPECT_GE(L, 2.9);
}
