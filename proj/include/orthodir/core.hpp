#pragma once

// Oracle interfaces, problem bundling and the merit function shared by every
// solver in the library.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace orthodir {

using Index = Eigen::Index;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// An oracle returned a non-finite value.
struct EvaluationError : Error {
  using Error::Error;
};

/// A Gram system W^T W (or W^T Q^{-1} W) is numerically singular.
struct SingularConstraintError : Error {
  using Error::Error;
};

/// A multiplier rule violates the SPD requirement on grad_h^T grad_h A.
struct MultiplierRuleError : Error {
  using Error::Error;
};

/// Missing constant, dimension mismatch, bad parameter.
struct ConfigurationError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------

/// Result of projecting a vector onto V(x) = ker grad_h(x)^T.
struct TangentProjection {
  Vec projected;
  Vec multipliers;  // mu with g - projected = grad_h(x) mu
};

struct ObjectiveOracle {
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;
  /// Optional unbiased estimator g(x, seed) of the gradient.
  std::function<Vec(const Vec&, std::uint64_t)> stochastic_gradient;
};

struct ConstraintOracle {
  std::function<Vec(const Vec&)> value;
  /// n x n_h matrix whose columns are the constraint gradients.
  std::function<Mat(const Vec&)> jacobian;

  /// Number of consecutive nonzero rows per Jacobian column, when banded.
  std::optional<Index> bandwidth;

  // Structured fast paths. Either may be empty; the dense Jacobian is used
  // instead.
  /// grad_h(x) * w for w of length n_h.
  std::function<Vec(const Vec&, const Vec&)> apply_jacobian;
  /// Euclidean projection of g onto V(x).
  std::function<TangentProjection(const Vec&, const Vec&)> project_tangent;
};

/// Shape of a Stiefel-structured problem, variable stored column-major.
struct StiefelShape {
  Index p = 0;
  Index q = 0;
};

struct ProblemInstance {
  std::string name;
  ObjectiveOracle objective;
  ConstraintOracle constraint;
  Index n = 0;
  Index n_h = 0;
  double safety_radius = 1.0;  // r1, K = {x : |h(x)| <= r1}
  std::optional<StiefelShape> stiefel;

  void validate() const {
    if (n <= 0 || n_h <= 0)
      throw ConfigurationError("problem dimensions must be positive");
    if (n_h > n)
      throw ConfigurationError("more constraints than ambient dimensions");
    if (!(safety_radius > 0))
      throw ConfigurationError("safety radius must be positive");
    if (!objective.value || !objective.gradient || !constraint.value)
      throw ConfigurationError("problem '" + name + "' is missing oracles");
    if (!constraint.jacobian && !constraint.apply_jacobian)
      throw ConfigurationError("problem '" + name + "' has no Jacobian");
  }
};

struct MeritParams {
  double M = 0.0;
};

inline bool all_finite(const Vec& v) { return v.allFinite(); }

inline Vec eval_constraint(const ProblemInstance& p, const Vec& x) {
  Vec h = p.constraint.value(x);
  if (h.size() != p.n_h) throw EvaluationError("constraint has wrong length");
  if (!h.allFinite()) throw EvaluationError("non-finite constraint value");
  return h;
}

inline double eval_objective(const ProblemInstance& p, const Vec& x) {
  const double f = p.objective.value(x);
  if (!std::isfinite(f)) throw EvaluationError("non-finite objective value");
  return f;
}

inline Vec eval_gradient(const ProblemInstance& p, const Vec& x) {
  Vec g = p.objective.gradient(x);
  if (g.size() != p.n) throw EvaluationError("gradient has wrong length");
  if (!g.allFinite()) throw EvaluationError("non-finite gradient");
  return g;
}

inline Mat eval_jacobian(const ProblemInstance& p, const Vec& x) {
  if (!p.constraint.jacobian)
    throw ConfigurationError("problem '" + p.name + "' has no dense Jacobian");
  Mat J = p.constraint.jacobian(x);
  if (J.rows() != p.n || J.cols() != p.n_h)
    throw EvaluationError("Jacobian has wrong shape");
  if (!J.allFinite()) throw EvaluationError("non-finite Jacobian");
  return J;
}

/// grad_h(x) * w, through the structured path when available.
inline Vec apply_jacobian(const ProblemInstance& p, const Vec& x, const Vec& w) {
  if (p.constraint.apply_jacobian) return p.constraint.apply_jacobian(x, w);
  return eval_jacobian(p, x) * w;
}

/// Lambda_M(x) = f(x) + M |h(x)|.
inline double merit_value(const ProblemInstance& p, const MeritParams& m,
                          const Vec& x) {
  if (!x.allFinite()) throw EvaluationError("non-finite point");
  const double f = eval_objective(p, x);
  if (m.M == 0.0) return f;
  return f + m.M * eval_constraint(p, x).norm();
}

inline bool in_safety_region(const ProblemInstance& p, const Vec& x) {
  return eval_constraint(p, x).norm() <= p.safety_radius;
}

/// Max |central difference - analytic gradient| over all coordinates.
inline double finite_diff_check(const ObjectiveOracle& o, const Vec& x,
                                double step) {
  if (!(step > 0)) throw ConfigurationError("finite-difference step must be positive");
  const Vec g = o.gradient(x);
  double dev = 0.0;
  Vec xp = x, xm = x;
  for (Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + step;
    xm[i] = x[i] - step;
    const double fd = (o.value(xp) - o.value(xm)) / (2.0 * step);
    dev = std::max(dev, std::abs(fd - g[i]));
    xp[i] = xm[i] = x[i];
  }
  return dev;
}

/// Same check for every constraint component against the Jacobian columns.
inline double finite_diff_check(const ConstraintOracle& o, const Vec& x,
                                double step) {
  if (!(step > 0)) throw ConfigurationError("finite-difference step must be positive");
  const Mat J = o.jacobian(x);
  double dev = 0.0;
  Vec xp = x, xm = x;
  for (Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + step;
    xm[i] = x[i] - step;
    const Vec fd = (o.value(xp) - o.value(xm)) / (2.0 * step);
    dev = std::max(dev, (fd - J.row(i).transpose()).cwiseAbs().maxCoeff());
    xp[i] = xm[i] = x[i];
  }
  return dev;
}

// ---------------------------------------------------------------------------
// Regularity constants
// ---------------------------------------------------------------------------

/// Constants of the convergence theory. Each is optional; consumers call
/// require() for the ones they need.
struct ConstantRegistry {
  std::optional<double> L_f, L_h, L_H;
  std::optional<double> C_f, C_h, C_A;
  std::optional<double> alpha_m;
  std::optional<double> mu_h;  // lower singular value of grad_h on K
  std::optional<double> M_h;   // upper bound of |grad_h| on K
  std::optional<double> B_f;   // sup |grad f| on K
  std::optional<double> M_1;
  std::optional<double> M_bar;
  std::optional<double> D_M, D_bar;
  std::optional<double> sigma;
  std::optional<double> C_q;
  std::optional<double> r1;
  std::optional<double> inf_f;  // lower bound of f on K

  static double require(const std::optional<double>& c, const char* name) {
    if (!c) throw ConfigurationError(std::string("missing constant ") + name);
    return *c;
  }
  static double require_positive(const std::optional<double>& c,
                                 const char* name) {
    const double v = require(c, name);
    if (!(v > 0))
      throw ConfigurationError(std::string("constant ") + name +
                               " must be positive");
    return v;
  }

  /// Visit every (name, value) pair that is set.
  template <typename F>
  void for_each(F&& fn) const {
    const std::pair<const char*, const std::optional<double>*> all[] = {
        {"L_f", &L_f},     {"L_h", &L_h},   {"L_H", &L_H},
        {"C_f", &C_f},     {"C_h", &C_h},   {"C_A", &C_A},
        {"alpha_m", &alpha_m}, {"mu_h", &mu_h}, {"M_h", &M_h},
        {"B_f", &B_f},     {"M_1", &M_1},   {"M_bar", &M_bar},
        {"D_M", &D_M},     {"D_bar", &D_bar}, {"sigma", &sigma},
        {"C_q", &C_q},     {"r1", &r1},     {"inf_f", &inf_f}};
    for (const auto& [name, value] : all)
      if (*value) fn(name, **value);
  }
};

/// Lipschitz estimate of a vector map from sample points: the max pairwise
/// ratio |F(a) - F(b)| / |a - b|. Used when no analytic constant is known.
template <typename Map>
double estimate_lipschitz(Map&& map, const std::vector<Vec>& samples) {
  std::vector<Vec> values;
  values.reserve(samples.size());
  for (const auto& s : samples) values.push_back(map(s));
  double best = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t j = i + 1; j < samples.size(); ++j) {
      const double dx = (samples[i] - samples[j]).norm();
      if (dx > 0) best = std::max(best, (values[i] - values[j]).norm() / dx);
    }
  return best;
}

/// sup |grad f| over the given samples (the B_f convention).
inline double estimate_gradient_bound(const ProblemInstance& p,
                                      const std::vector<Vec>& samples) {
  double best = 0.0;
  for (const auto& s : samples) best = std::max(best, eval_gradient(p, s).norm());
  return best;
}

}  // namespace orthodir
