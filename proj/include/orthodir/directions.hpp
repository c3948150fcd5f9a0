#pragma once

// Projection primitives and the direction fields: the orthogonal-directions
// field OF, its Moore-Penrose (MJ) variant, the reduced hyperplane field, the
// geometry-aware field GOF and the closed-form Stiefel landing field.

#include "orthodir/core.hpp"
#include "orthodir/gram.hpp"
#include "orthodir/stiefel.hpp"

#include <Eigen/Eigenvalues>

#include <functional>
#include <variant>

namespace orthodir {

// ---------------------------------------------------------------------------
// Multiplier rules A(x)
// ---------------------------------------------------------------------------

/// A(x) = alpha I.
struct VanillaConstant {
  double alpha = 1.0;
};

/// A(x) = alpha(x) I.
struct VanillaAdaptive {
  std::function<double(const Vec&)> alpha;
};

/// A(x) = alpha (grad_h^T grad_h)^{-1}.
struct MoorePenroseMJ {
  double alpha = 1.0;
};

using MultiplierRule = std::variant<VanillaConstant, VanillaAdaptive, MoorePenroseMJ>;

namespace detail {

inline double checked_alpha(double a) {
  if (!(a > 0) || !std::isfinite(a))
    throw MultiplierRuleError("multiplier scale must be positive and finite");
  return a;
}

inline double vanilla_scale(const MultiplierRule& rule, const Vec& x) {
  if (const auto* c = std::get_if<VanillaConstant>(&rule)) return checked_alpha(c->alpha);
  if (const auto* a = std::get_if<VanillaAdaptive>(&rule)) {
    if (!a->alpha) throw MultiplierRuleError("adaptive rule without a scale function");
    return checked_alpha(a->alpha(x));
  }
  throw MultiplierRuleError("not a vanilla rule");
}

}  // namespace detail

/// A(x) as an explicit n_h x n_h matrix, for diagnostics and tests.
inline Mat multiplier_matrix(const MultiplierRule& rule, const Mat& J, const Vec& x) {
  const Index m = J.cols();
  if (const auto* mj = std::get_if<MoorePenroseMJ>(&rule)) {
    const double a = detail::checked_alpha(mj->alpha);
    GramSolver gram(J);
    return a * gram.inverse();
  }
  return detail::vanilla_scale(rule, x) * Mat::Identity(m, m);
}

/// True iff grad_h^T grad_h A is symmetric positive definite at x.
inline bool multiplier_spd(const Mat& J, const Mat& A, double tol = 1e-10) {
  const Mat P = J.transpose() * J * A;
  const double scale = std::max(1.0, P.cwiseAbs().maxCoeff());
  if ((P - P.transpose()).cwiseAbs().maxCoeff() > tol * scale) return false;
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (P + P.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues()[0] > 0;
}

// ---------------------------------------------------------------------------
// Metrics for the geometry-aware field
// ---------------------------------------------------------------------------

/// Riemannian inner product q_x(u, v) = u^T Q(x) v on the ambient space.
struct MetricObject {
  std::function<Vec(const Vec& x, const Vec& v)> apply_Q;
  std::function<Vec(const Vec& x, const Vec& v)> apply_Qinv;
  double condition_bound = 1.0;  // C_q

  static MetricObject identity() {
    return {[](const Vec&, const Vec& v) { return v; },
            [](const Vec&, const Vec& v) { return v; }, 1.0};
  }

  static MetricObject scalar(double s) {
    if (!(s > 0)) throw ConfigurationError("metric scale must be positive");
    return {[s](const Vec&, const Vec& v) { return Vec(s * v); },
            [s](const Vec&, const Vec& v) { return Vec(v / s); },
            std::max(s, 1.0 / s)};
  }

  /// Constant SPD matrix metric.
  static MetricObject constant(const Mat& Q) {
    Eigen::SelfAdjointEigenSolver<Mat> es(Q);
    const Vec& ev = es.eigenvalues();
    if (!(ev[0] > 0)) throw ConfigurationError("metric is not positive definite");
    Eigen::LLT<Mat> llt(Q);
    const double cq = std::max(ev[ev.size() - 1], 1.0 / ev[0]);
    return {[Q](const Vec&, const Vec& v) { return Vec(Q * v); },
            [llt](const Vec&, const Vec& v) { return Vec(llt.solve(v)); }, cq};
  }
};

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

struct DirectionResult {
  Vec direction;
  Vec normal_part;
  Vec tangent_part;
  Vec multipliers;

  static DirectionResult from_parts(Vec normal, Vec tangent, Vec multipliers) {
    DirectionResult r;
    r.direction = normal + tangent;
    r.normal_part = std::move(normal);
    r.tangent_part = std::move(tangent);
    r.multipliers = std::move(multipliers);
    return r;
  }
};

// ---------------------------------------------------------------------------
// Projection primitives
// ---------------------------------------------------------------------------

/// argmin over {v : W^T v = b} of 1/2 |v + y|^2, that is
/// -y + W (W^T W)^{-1} (W^T y + b).
inline Vec affine_projection(const Mat& W, const Vec& y, const Vec& b) {
  if (W.rows() != y.size() || W.cols() != b.size())
    throw ConfigurationError("affine projection operands differ in shape");
  if (W.cols() > W.rows()) throw SingularConstraintError("more constraints than unknowns");
  GramSolver gram(W);
  return -y + W * gram.solve(W.transpose() * y + b);
}

namespace detail {

/// Projection of g onto V(x) with the multipliers, dense or structured.
inline TangentProjection tangent_projection(const ProblemInstance& p, const Vec& x,
                                            const Vec& g) {
  if (p.constraint.project_tangent) return p.constraint.project_tangent(x, g);
  const Mat J = eval_jacobian(p, x);
  GramSolver gram(J, p.constraint.bandwidth);
  TangentProjection out;
  out.multipliers = gram.solve(J.transpose() * g);
  out.projected = g - J * out.multipliers;
  return out;
}

}  // namespace detail

/// g - grad_h (grad_h^T grad_h)^{-1} grad_h^T g.
inline Vec project_onto_V(const ProblemInstance& p, const Vec& x, const Vec& g) {
  return detail::tangent_projection(p, x, g).projected;
}

// ---------------------------------------------------------------------------
// Fields
// ---------------------------------------------------------------------------

/// -grad_h A h, for any multiplier rule.
inline Vec normal_component(const ProblemInstance& p, const MultiplierRule& rule,
                            const Vec& x, const Vec& h) {
  if (const auto* mj = std::get_if<MoorePenroseMJ>(&rule)) {
    const double a = detail::checked_alpha(mj->alpha);
    const Mat J = eval_jacobian(p, x);
    GramSolver gram(J, p.constraint.bandwidth);
    return -a * (J * gram.solve(h));
  }
  return -detail::vanilla_scale(rule, x) * apply_jacobian(p, x, h);
}

/// OF(x) = -grad_h(x) A(x) h(x) - grad_V f(x).
inline DirectionResult of_field(const ProblemInstance& p, const MultiplierRule& rule,
                                const Vec& x) {
  const Vec h = eval_constraint(p, x);
  const Vec g = eval_gradient(p, x);
  TangentProjection tp = detail::tangent_projection(p, x, g);
  Vec normal = normal_component(p, rule, x, h);
  return DirectionResult::from_parts(std::move(normal), -tp.projected,
                                     std::move(tp.multipliers));
}

/// The MJ field computed directly as the projection of -grad f onto the
/// affine space {v : grad_h^T v = -alpha h}.
inline DirectionResult mj_field_direct(const ProblemInstance& p, double alpha,
                                       const Vec& x) {
  detail::checked_alpha(alpha);
  const Mat J = eval_jacobian(p, x);
  const Vec h = eval_constraint(p, x);
  const Vec g = eval_gradient(p, x);
  GramSolver gram(J, p.constraint.bandwidth);
  const Vec mu = gram.solve(J.transpose() * g);
  const Vec nu = gram.solve(-alpha * h);
  DirectionResult r;
  r.direction = affine_projection(J, g, -alpha * h);
  r.tangent_part = -g + J * mu;
  r.normal_part = J * nu;
  r.multipliers = mu;
  return r;
}

/// Default on-manifold threshold of the reduced field.
inline double reduced_on_manifold_tol(double h_norm, double M_h) {
  return 1e-14 * (1.0 + h_norm * M_h);
}

/// Reduced field: projection onto the hyperplane orthogonal to
/// grad H = grad_h h, with normal scale alpha(x) = alpha H / |grad H|^2.
/// multipliers holds the single hyperplane multiplier lambda(x).
inline DirectionResult reduced_field(const ProblemInstance& p, double alpha,
                                     const Vec& x, double on_manifold_tol) {
  const Vec h = eval_constraint(p, x);
  const Vec g = eval_gradient(p, x);
  const Vec gradH = apply_jacobian(p, x, h);
  const double n2 = gradH.squaredNorm();
  if (std::sqrt(n2) <= on_manifold_tol)
    return DirectionResult::from_parts(Vec::Zero(p.n), -g, Vec::Zero(1));
  const double lambda = -gradH.dot(g) / n2;
  const double H = 0.5 * h.squaredNorm();
  Vec tangent = -(g + lambda * gradH);
  Vec normal = -(alpha * H / n2) * gradH;
  return DirectionResult::from_parts(std::move(normal), std::move(tangent),
                                     Vec::Constant(1, lambda));
}

inline DirectionResult reduced_field(const ProblemInstance& p, double alpha,
                                     const Vec& x) {
  return reduced_field(p, alpha, x, reduced_on_manifold_tol(0.0, 1.0));
}

/// GOF(x) = -grad_h A h + argmin_{v in V(x)} 1/2 |v + Q^{-1} grad f|_{q_x}^2,
/// in closed form -Q^{-1} grad f + Q^{-1} grad_h (grad_h^T Q^{-1} grad_h)^{-1}
/// grad_h^T Q^{-1} grad f for the tangent part.
inline DirectionResult gof_field(const ProblemInstance& p, const MultiplierRule& rule,
                                 const MetricObject& metric, const Vec& x) {
  const Vec h = eval_constraint(p, x);
  const Vec g = eval_gradient(p, x);
  const Mat J = eval_jacobian(p, x);
  const Vec u = metric.apply_Qinv(x, g);
  Mat QinvJ(J.rows(), J.cols());
  for (Index i = 0; i < J.cols(); ++i) QinvJ.col(i) = metric.apply_Qinv(x, J.col(i));
  Mat K = J.transpose() * QinvJ;
  K = 0.5 * (K + K.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Mat> es(K, Eigen::EigenvaluesOnly);
  const Vec& ev = es.eigenvalues();
  if (!(ev[0] > GramSolver::kRankTol * ev[ev.size() - 1]))
    throw SingularConstraintError("metric-weighted Gram matrix is singular");
  Eigen::LLT<Mat> llt(K);
  const Vec mu = llt.solve(J.transpose() * u);
  Vec tangent = -u + QinvJ * mu;
  Vec normal = normal_component(p, rule, x, h);
  return DirectionResult::from_parts(std::move(normal), std::move(tangent), mu);
}

/// Landing field on matrices: tangent part -psi(X) X with
/// psi(X) = grad f X^T - X grad f^T, normal part -lambda grad H(X) with
/// grad H(X) = 2 X (X^T X - I). Both flattened column-major.
inline DirectionResult landing_field_stiefel(const Mat& gradF, const Mat& X,
                                             double lambda) {
  if (gradF.rows() != X.rows() || gradF.cols() != X.cols())
    throw ConfigurationError("gradient and point differ in shape");
  Vec tangent = -stiefel::flatten(stiefel::relative_gradient(gradF, X));
  Vec normal = -lambda * stiefel::flatten(stiefel::normalization_gradient(X));
  return DirectionResult::from_parts(std::move(normal), std::move(tangent), Vec());
}

/// Landing field of a Stiefel-structured problem at flat point x.
inline DirectionResult landing_field(const ProblemInstance& p, double lambda,
                                     const Vec& x) {
  if (!p.stiefel) throw ConfigurationError("landing field needs a Stiefel problem");
  const auto [rows, cols] = *p.stiefel;
  const Vec g = eval_gradient(p, x);
  return landing_field_stiefel(stiefel::as_matrix(g, rows, cols),
                               stiefel::as_matrix(x, rows, cols), lambda);
}

using stiefel::stiefel_tangent_projection_sylvester;

// ---------------------------------------------------------------------------
// Stationarity
// ---------------------------------------------------------------------------

struct StationarityMeasure {
  double of_norm = 0;
  double tangent_norm = 0;
  double h_norm = 0;
  double h_bound = 0;  // of_norm / sigma_min(grad_h A)
};

inline StationarityMeasure stationarity_measure(const ProblemInstance& p,
                                                const MultiplierRule& rule,
                                                const Vec& x) {
  const DirectionResult d = of_field(p, rule, x);
  const Mat J = eval_jacobian(p, x);
  const Mat JA = J * multiplier_matrix(rule, J, x);
  Eigen::JacobiSVD<Mat> svd(JA);
  const double smin = svd.singularValues()[svd.singularValues().size() - 1];
  StationarityMeasure s;
  s.of_norm = d.direction.norm();
  s.tangent_norm = d.tangent_part.norm();
  s.h_norm = eval_constraint(p, x).norm();
  s.h_bound = s.of_norm / smin;
  return s;
}

}  // namespace orthodir
