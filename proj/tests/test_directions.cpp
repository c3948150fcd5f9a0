#include "fixtures.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace orthodir;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

/// Random point of the four-dimensional fixture near its feasible set.
Vec near_feasible4(std::mt19937_64& rng) {
  Vec x = oracle::gaussian_vec(4, rng);
  x /= x.norm();
  return x + oracle::gaussian_vec(4, rng, 0.1);
}

}  // namespace

// ---------------------------------------------------------------------------
// affine_projection / project_onto_V
// ---------------------------------------------------------------------------

TEST(AffineProjection, AxisAligned) {
  Mat W = Mat::Zero(2, 1);
  W(0, 0) = 1;
  const Vec v = affine_projection(W, v2(1, 1), Vec::Zero(1));
  EXPECT_NEAR(v[0], 0.0, 1e-15);
  EXPECT_NEAR(v[1], -1.0, 1e-15);
}

TEST(AffineProjection, ConsistentRhsReturnsMinusY) {
  std::mt19937_64 rng(1);
  const Mat W = oracle::gaussian(5, 2, rng);
  const Vec y = oracle::gaussian_vec(5, rng);
  const Vec v = affine_projection(W, y, -W.transpose() * y);
  EXPECT_LE((v + y).norm(), 1e-13);
}

TEST(AffineProjection, MatchesDenseKkt) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    const Mat W = oracle::gaussian(5, 2, rng);
    const Vec y = oracle::gaussian_vec(5, rng), b = oracle::gaussian_vec(2, rng);
    EXPECT_LE((affine_projection(W, y, b) - oracle::kkt_projection(W, y, b)).norm(), 1e-10);
  }
}

TEST(AffineProjection, RankDeficientThrows) {
  Mat W(3, 2);
  W << 1, 2, 0, 0, 1, 2;
  EXPECT_THROW(affine_projection(W, Vec::Ones(3), Vec::Zero(2)), SingularConstraintError);
}

TEST(ProjectOntoV, SphereVerticalAxis) {
  const auto p = fixtures::circle(1, 1);
  const Vec r = project_onto_V(p, v2(2, 0), v2(1, 1));
  EXPECT_NEAR(r[0], 0.0, 1e-15);
  EXPECT_NEAR(r[1], 1.0, 1e-15);
}

TEST(ProjectOntoV, IdempotentAndTangent) {
  const auto p = fixtures::four_dim();
  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    const Vec x = near_feasible4(rng);
    const Vec g = oracle::gaussian_vec(4, rng);
    const Vec once = project_onto_V(p, x, g);
    EXPECT_LE((project_onto_V(p, x, once) - once).norm(), 1e-12 * (1 + g.norm()));
    EXPECT_LE((p.constraint.jacobian(x).transpose() * once).norm(), 1e-10 * (1 + g.norm()));
  }
}

TEST(ProjectOntoV, MatchesAffineProjection) {
  const auto p = fixtures::two_constraints_r3();
  std::mt19937_64 rng(4);
  for (int t = 0; t < 100; ++t) {
    const Vec x = oracle::gaussian_vec(3, rng);
    const Vec g = oracle::gaussian_vec(3, rng);
    const Mat J = p.constraint.jacobian(x);
    EXPECT_LE((project_onto_V(p, x, g) - affine_projection(J, -g, Vec::Zero(2))).norm(),
              1e-10 * (1 + g.norm()));
  }
}

// ---------------------------------------------------------------------------
// Multiplier rules
// ---------------------------------------------------------------------------

TEST(MultiplierRule, MatricesAndSpd) {
  const auto p = fixtures::four_dim();
  std::mt19937_64 rng(5);
  const Vec x = near_feasible4(rng);
  const Mat J = p.constraint.jacobian(x);
  const Mat A1 = multiplier_matrix(VanillaConstant{2.0}, J, x);
  EXPECT_LE((A1 - 2.0 * Mat::Identity(2, 2)).norm(), 0.0);
  const Mat A2 = multiplier_matrix(MoorePenroseMJ{3.0}, J, x);
  EXPECT_LE((J.transpose() * J * A2 - 3.0 * Mat::Identity(2, 2)).norm(), 1e-12);
  EXPECT_TRUE(multiplier_spd(J, A1));
  EXPECT_TRUE(multiplier_spd(J, A2));
  Mat bad(2, 2);
  bad << 1, 5, 0, 1;
  EXPECT_FALSE(multiplier_spd(J, bad));
  EXPECT_FALSE(multiplier_spd(J, -A1));
}

TEST(MultiplierRule, AdaptiveScaleAndErrors) {
  const auto p = fixtures::circle(1, 1);
  const VanillaAdaptive rule{[](const Vec& x) { return 1.0 + x.squaredNorm(); }};
  const auto d = of_field(p, rule, v2(2, 0));
  EXPECT_NEAR(d.normal_part[0], -5.0 * 12.0, 1e-12);
  EXPECT_THROW(of_field(p, VanillaConstant{-1.0}, v2(2, 0)), MultiplierRuleError);
  EXPECT_THROW(of_field(p, VanillaAdaptive{[](const Vec&) { return 0.0; }}, v2(2, 0)),
               MultiplierRuleError);
}

// ---------------------------------------------------------------------------
// OF field
// ---------------------------------------------------------------------------

TEST(OfField, OnManifoldIsRiemannianGradient) {
  const auto d = of_field(fixtures::circle(1, 1), VanillaConstant{1.0}, v2(1, 0));
  EXPECT_NEAR(d.direction[0], 0.0, 1e-15);
  EXPECT_NEAR(d.direction[1], -1.0, 1e-15);
}

TEST(OfField, OffManifoldSubstitution) {
  const auto d = of_field(fixtures::circle(1, 1), VanillaConstant{1.0}, v2(2, 0));
  EXPECT_NEAR(d.normal_part[0], -12.0, 1e-14);
  EXPECT_NEAR(d.normal_part[1], 0.0, 1e-14);
  EXPECT_NEAR(d.tangent_part[0], 0.0, 1e-14);
  EXPECT_NEAR(d.tangent_part[1], -1.0, 1e-14);
  EXPECT_NEAR(d.direction[0], -12.0, 1e-14);
  EXPECT_NEAR(d.direction[1], -1.0, 1e-14);
}

TEST(OfField, CriticalPoint) {
  const auto d = of_field(fixtures::circle(0, 1), VanillaConstant{1.0}, v2(0, 1));
  EXPECT_LE(d.direction.norm(), 1e-15);
}

TEST(OfField, OrthogonalDecomposition) {
  const auto p = fixtures::four_dim();
  std::mt19937_64 rng(6);
  for (int t = 0; t < 100; ++t) {
    const Vec x = near_feasible4(rng);
    for (const MultiplierRule& rule :
         {MultiplierRule{VanillaConstant{1.5}}, MultiplierRule{MoorePenroseMJ{0.7}}}) {
      const auto d = of_field(p, rule, x);
      const double nn = d.normal_part.norm(), tn = d.tangent_part.norm();
      EXPECT_EQ(d.direction, d.normal_part + d.tangent_part);
      EXPECT_LE(std::abs(d.normal_part.dot(d.tangent_part)), 1e-10 * (nn * tn + 1));
      EXPECT_NEAR(d.direction.squaredNorm(), nn * nn + tn * tn,
                  1e-9 * (1 + d.direction.squaredNorm()));
    }
  }
}

TEST(OfField, MultipliersAreLeastSquares) {
  const auto p = fixtures::two_constraints_r3();
  Vec x(3);
  x << 0.3, 0.9, 0.2;
  const auto d = of_field(p, VanillaConstant{1.0}, x);
  const Mat J = p.constraint.jacobian(x);
  const Vec g = p.objective.gradient(x);
  const Vec mu = (J.transpose() * J).ldlt().solve(J.transpose() * g);
  EXPECT_LE((d.multipliers - mu).norm(), 1e-12);
}

// ---------------------------------------------------------------------------
// MJ field
// ---------------------------------------------------------------------------

TEST(MjField, OnManifoldEqualsProjectedGradient) {
  const auto p = fixtures::circle(1, 1);
  const Vec x = v2(std::cos(1.0), std::sin(1.0));
  const auto d = mj_field_direct(p, 2.0, x);
  EXPECT_LE((d.direction + project_onto_V(p, x, p.objective.gradient(x))).norm(), 1e-14);
}

TEST(MjField, MatchesOfFieldOnCircle) {
  const auto p = fixtures::circle(1, 1);
  const auto a = mj_field_direct(p, 1.0, v2(2, 0));
  const auto b = of_field(p, MoorePenroseMJ{1.0}, v2(2, 0));
  EXPECT_LE((a.direction - b.direction).norm(), 1e-10);
}

TEST(MjField, PathsAgreeAndResidualVanishes) {
  const auto p = fixtures::four_dim();
  std::mt19937_64 rng(7);
  for (int t = 0; t < 100; ++t) {
    const Vec x = near_feasible4(rng);
    const double alpha = 0.3 + t * 0.01;
    const auto a = mj_field_direct(p, alpha, x);
    const auto b = of_field(p, MoorePenroseMJ{alpha}, x);
    EXPECT_LE((a.direction - b.direction).norm(), 1e-10 * (1 + a.direction.norm()));
    const Vec res = p.constraint.jacobian(x).transpose() * a.direction + alpha * p.constraint.value(x);
    EXPECT_LE(res.norm(), 1e-10);
  }
}

// ---------------------------------------------------------------------------
// Reduced field
// ---------------------------------------------------------------------------

TEST(ReducedField, CircleSubstitution) {
  const auto p = fixtures::circle(1, 1);
  const auto d = reduced_field(p, 1.0, v2(2, 0), 1e-14);
  EXPECT_NEAR(d.multipliers[0], -1.0 / 12.0, 1e-15);
  EXPECT_NEAR(d.tangent_part[0], 0.0, 1e-15);
  EXPECT_NEAR(d.tangent_part[1], -1.0, 1e-15);
  EXPECT_LE((d.tangent_part + project_onto_V(p, v2(2, 0), v2(1, 1))).norm(), 1e-14);
  // alpha(x) = H / |grad H|^2 = 4.5 / 144, normal = -alpha(x) grad H.
  EXPECT_NEAR(d.normal_part[0], -4.5 / 144.0 * 12.0, 1e-14);
}

TEST(ReducedField, DegenerateBranchOnManifold) {
  const auto p = fixtures::circle(1, 1);
  const auto d = reduced_field(p, 1.0, v2(1, 0), 1e-14);
  EXPECT_EQ(d.normal_part, Vec::Zero(2));
  EXPECT_EQ(d.tangent_part, -v2(1, 1));
  EXPECT_EQ(d.multipliers[0], 0.0);
}

TEST(ReducedField, HyperplaneOrthogonalityAndBound) {
  const auto p = fixtures::two_constraints_r3();
  std::mt19937_64 rng(8);
  int differs = 0;
  for (int t = 0; t < 200; ++t) {
    const Vec x = oracle::gaussian_vec(3, rng);
    const auto d = reduced_field(p, 1.0, x, 1e-14);
    const Vec gradH = p.constraint.jacobian(x) * p.constraint.value(x);
    const Vec g = p.objective.gradient(x);
    EXPECT_LE(std::abs(gradH.dot(d.tangent_part)), 1e-10 * (1 + gradH.norm() * g.norm()));
    EXPECT_LE(d.tangent_part.norm(), 2.0 * g.norm() + 1e-12);
    // Hyperplane oracle: affine projection with a single constraint.
    const Vec ref = affine_projection(gradH, g, Vec::Zero(1));
    EXPECT_LE((d.tangent_part - ref).norm(), 1e-10 * (1 + g.norm()));
    // The hyperplane contains V(x), so its projection is never shorter.
    const Vec pv = project_onto_V(p, x, g);
    EXPECT_GE(d.tangent_part.norm(), pv.norm() - 1e-12);
    if ((d.tangent_part + pv).norm() > 1e-6) ++differs;
  }
  EXPECT_GT(differs, 150);
}

// ---------------------------------------------------------------------------
// Geometry-aware field
// ---------------------------------------------------------------------------

TEST(GofField, IdentityMetricEqualsOf) {
  const auto p = fixtures::four_dim();
  std::mt19937_64 rng(9);
  for (int t = 0; t < 50; ++t) {
    const Vec x = near_feasible4(rng);
    const auto a = gof_field(p, VanillaConstant{1.0}, MetricObject::identity(), x);
    const auto b = of_field(p, VanillaConstant{1.0}, x);
    EXPECT_LE((a.direction - b.direction).norm(), 1e-12 * (1 + b.direction.norm()));
  }
}

TEST(GofField, ScalarMetricCancels) {
  const auto p = fixtures::circle(1, 1);
  const auto a = gof_field(p, VanillaConstant{1.0}, MetricObject::scalar(2.0), v2(2, 0));
  const auto b = of_field(p, VanillaConstant{1.0}, v2(2, 0));
  // Q^{-1} scales the gradient by 1/2 before projecting; the projector itself
  // is unchanged, so tangent parts agree up to that factor.
  EXPECT_LE((a.tangent_part - 0.5 * b.tangent_part).norm(), 1e-14);
  EXPECT_LE((a.normal_part - b.normal_part).norm(), 1e-14);
}

TEST(GofField, MatchesWhitenedAffineProjection) {
  const auto p = fixtures::four_dim();
  std::mt19937_64 rng(10);
  for (int t = 0; t < 50; ++t) {
    const Mat G = oracle::gaussian(4, 4, rng);
    const Mat Q = G * G.transpose() + 0.5 * Mat::Identity(4, 4);
    const Vec x = near_feasible4(rng);
    const auto d = gof_field(p, VanillaConstant{1.0}, MetricObject::constant(Q), x);
    // With Q = S^2, u = S v minimizes 1/2 |u + S^{-1} g|^2 over S^{-1} J.
    Eigen::SelfAdjointEigenSolver<Mat> es(Q);
    const Mat S = es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() *
                  es.eigenvectors().transpose();
    const Mat Sinv = S.inverse();
    const Mat J = p.constraint.jacobian(x);
    const Vec g = p.objective.gradient(x);
    const Vec u = affine_projection(Sinv * J, Sinv * g, Vec::Zero(2));
    EXPECT_LE((d.tangent_part - Sinv * u).norm(), 1e-10 * (1 + g.norm()));
    EXPECT_LE((J.transpose() * d.tangent_part).norm(), 1e-10 * (1 + g.norm()));
  }
}

TEST(Metric, SpdAndConditionBound) {
  std::mt19937_64 rng(12);
  const Mat G = oracle::gaussian(3, 3, rng);
  const Mat Q = G * G.transpose() + Mat::Identity(3, 3);
  const auto m = MetricObject::constant(Q);
  Eigen::SelfAdjointEigenSolver<Mat> es(Q);
  const double cq = std::max(es.eigenvalues().maxCoeff(), 1.0 / es.eigenvalues().minCoeff());
  EXPECT_NEAR(m.condition_bound, cq, 1e-12 * cq);
  for (int t = 0; t < 20; ++t) {
    const Vec v = oracle::gaussian_vec(3, rng);
    EXPECT_GT(v.dot(m.apply_Q(v, v)), 0.0);
    EXPECT_LE((m.apply_Q(v, m.apply_Qinv(v, v)) - v).norm(), 1e-12 * (1 + v.norm()));
  }
  EXPECT_THROW(MetricObject::constant(-Q), ConfigurationError);
}

// ---------------------------------------------------------------------------
// Landing field
// ---------------------------------------------------------------------------

TEST(LandingField, IdentityExample) {
  Mat C(2, 2);
  C << 0, 1, 0, 0;
  const auto d = landing_field_stiefel(C, Mat::Identity(2, 2), 1.0);
  Mat psi(2, 2);
  psi << 0, 1, -1, 0;
  EXPECT_LE((d.tangent_part - stiefel::flatten(-psi)).norm(), 1e-15);
  EXPECT_LE(d.normal_part.norm(), 0.0);
}

TEST(LandingField, SymmetricGradientKernel) {
  std::mt19937_64 rng(13);
  const Mat X = oracle::orthonormal(3, 3, rng);
  Mat S = oracle::gaussian(3, 3, rng);
  S = S + S.transpose().eval();
  const auto d = landing_field_stiefel(X * S, X, 1.0);
  EXPECT_LE(d.tangent_part.norm(), 1e-13);
}

TEST(LandingField, TangencyAndOrthogonality) {
  std::mt19937_64 rng(14);
  for (int t = 0; t < 50; ++t) {
    const int p = 6, q = 3;
    const Mat Xf = oracle::orthonormal(p, q, rng);
    const Mat G = oracle::gaussian(p, q, rng);
    const auto d = landing_field_stiefel(G, Xf, 1.0);
    const Mat T = stiefel::as_matrix(d.tangent_part, p, q);
    EXPECT_LE((T.transpose() * Xf + Xf.transpose() * T).norm(), 1e-10);

    Mat X = Xf + oracle::gaussian(p, q, rng, 0.02);
    if ((X.transpose() * X - Mat::Identity(q, q)).norm() > 0.1) continue;
    const auto e = landing_field_stiefel(G, X, 1.0);
    EXPECT_LE(std::abs(e.normal_part.dot(e.tangent_part)), 1e-10 * (1 + e.tangent_part.norm()));
  }
}

TEST(LandingField, NormalPartIsGradientOfPenalty) {
  std::mt19937_64 rng(15);
  const int p = 4, q = 2;
  const Mat X = oracle::gaussian(p, q, rng);
  const auto d = landing_field_stiefel(Mat::Zero(p, q), X, 1.0);
  auto H = [&](const Mat& Y) {
    return 0.5 * (Y.transpose() * Y - Mat::Identity(q, q)).squaredNorm();
  };
  Mat fd(p, q);
  const double h = 1e-6;
  for (int j = 0; j < q; ++j)
    for (int i = 0; i < p; ++i) {
      Mat Xp = X, Xm = X;
      Xp(i, j) += h;
      Xm(i, j) -= h;
      fd(i, j) = (H(Xp) - H(Xm)) / (2 * h);
    }
  EXPECT_LE((stiefel::as_matrix(-d.normal_part, p, q) - fd).norm(), 1e-6 * (1 + fd.norm()));
}

// ---------------------------------------------------------------------------
// Stationarity
// ---------------------------------------------------------------------------

TEST(Stationarity, CriticalPoint) {
  const auto s = stationarity_measure(fixtures::circle(0, 1), VanillaConstant{1.0}, v2(0, 1));
  EXPECT_LE(s.of_norm, 1e-15);
  EXPECT_LE(s.tangent_norm, 1e-15);
  EXPECT_LE(s.h_norm, 1e-15);
  EXPECT_LE(s.h_bound, 1e-15);
}

TEST(Stationarity, CircleSubstitution) {
  const auto s = stationarity_measure(fixtures::circle(1, 1), VanillaConstant{1.0}, v2(2, 0));
  EXPECT_NEAR(s.of_norm, std::sqrt(145.0), 1e-12);
  EXPECT_NEAR(s.tangent_norm, 1.0, 1e-14);
  EXPECT_NEAR(s.h_norm, 3.0, 1e-14);
  EXPECT_NEAR(s.h_bound, std::sqrt(145.0) / 4.0, 1e-12);
}

TEST(Stationarity, LemmaInequalities) {
  const auto p = fixtures::four_dim();
  std::mt19937_64 rng(16);
  for (int t = 0; t < 1000; ++t) {
    const Vec x = near_feasible4(rng);
    const auto s = stationarity_measure(p, VanillaConstant{0.8}, x);
    EXPECT_LE(s.tangent_norm, s.of_norm * (1 + 1e-12));
    EXPECT_LE(s.h_norm, s.h_bound * (1 + 1e-10));
  }
}
