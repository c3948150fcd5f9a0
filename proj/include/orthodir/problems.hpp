#pragma once

// Test problems: linear objective on the unit sphere, Procrustes on the
// Stiefel manifold, and the hanging chain. Each comes with analytic gradients
// and, where available, analytic regularity constants.

#include "orthodir/core.hpp"
#include "orthodir/directions.hpp"
#include "orthodir/stiefel.hpp"

#include <cmath>
#include <random>
#include <string>

namespace orthodir {

// ---------------------------------------------------------------------------
// Sphere
// ---------------------------------------------------------------------------

/// f(x) = c^T x on h(x) = x^T x - 1. With oracle_sigma > 0 the objective also
/// carries the stochastic gradient c + oracle_sigma * z, z ~ N(0, I).
inline ProblemInstance make_sphere(Index n, const Vec& c, double r1,
                                   double oracle_sigma = 0.0) {
  if (n < 2) throw ConfigurationError("sphere needs n >= 2");
  if (c.size() != n) throw ConfigurationError("sphere coefficient has wrong length");
  if (!(c.norm() > 0)) throw ConfigurationError("sphere coefficient must be nonzero");
  ProblemInstance p;
  p.name = "sphere";
  p.n = n;
  p.n_h = 1;
  p.safety_radius = r1;
  p.objective.value = [c](const Vec& x) { return c.dot(x); };
  p.objective.gradient = [c](const Vec&) { return c; };
  if (oracle_sigma > 0) {
    p.objective.stochastic_gradient = [c, oracle_sigma](const Vec&, std::uint64_t seed) {
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> nd;
      Vec g = c;
      for (Index i = 0; i < g.size(); ++i) g[i] += oracle_sigma * nd(rng);
      return g;
    };
  }
  p.constraint.value = [](const Vec& x) { return Vec::Constant(1, x.squaredNorm() - 1.0); };
  p.constraint.jacobian = [](const Vec& x) { return Mat(2.0 * x); };
  p.constraint.apply_jacobian = [](const Vec& x, const Vec& w) { return Vec(2.0 * w[0] * x); };
  return p;
}

/// Analytic constants on K = {| |x|^2 - 1 | <= r1} for the rule alpha I.
inline ConstantRegistry sphere_constants(const Vec& c, double r1, double alpha) {
  if (!(r1 > 0 && r1 < 1)) throw ConfigurationError("sphere constants need 0 < r1 < 1");
  const double cn = c.norm();
  const double up = std::sqrt(1.0 + r1);
  ConstantRegistry r;
  r.r1 = r1;
  r.L_f = 0.0;
  r.L_h = 2.0;
  r.L_H = 2.0 * r1 + 4.0 * (1.0 + r1);
  r.M_h = 2.0 * up;
  r.C_h = 2.0 * up;
  r.C_A = alpha * 2.0 * up;
  r.C_f = cn;
  r.B_f = cn;
  r.mu_h = 2.0 * std::sqrt(1.0 - r1);
  r.alpha_m = 4.0 * alpha * (1.0 - r1);
  r.M_1 = alpha * (2.0 * up * cn + 4.0 * alpha * (1.0 + r1) * r1);
  r.M_bar = *r.M_1 / *r.alpha_m;
  r.inf_f = -cn * up;
  return r;
}

// ---------------------------------------------------------------------------
// Procrustes
// ---------------------------------------------------------------------------

/// f(X) = |A X - B|_F^2 over p x q matrices X with h(X) = pack(X^T X - I).
/// A is m x p and B is m x q; X is stored column-major.
inline ProblemInstance make_procrustes(const Mat& A, const Mat& B, double r1) {
  const Index p = A.cols();
  const Index q = B.cols();
  if (A.rows() != B.rows())
    throw ConfigurationError("Procrustes: A and B must have the same number of rows");
  if (p < q || q < 1) throw ConfigurationError("Procrustes: need p >= q >= 1");
  if (!A.allFinite() || !B.allFinite())
    throw ConfigurationError("Procrustes: A and B must be finite");

  ProblemInstance prob;
  prob.name = "procrustes";
  prob.n = p * q;
  prob.n_h = stiefel::packed_size(q);
  prob.safety_radius = r1;
  prob.stiefel = StiefelShape{p, q};

  prob.objective.value = [A, B, p, q](const Vec& x) {
    return (A * stiefel::as_matrix(x, p, q) - B).squaredNorm();
  };
  prob.objective.gradient = [A, B, p, q](const Vec& x) {
    return stiefel::flatten(2.0 * A.transpose() * (A * stiefel::as_matrix(x, p, q) - B));
  };
  prob.constraint.value = [p, q](const Vec& x) {
    const auto X = stiefel::as_matrix(x, p, q);
    return stiefel::pack_symmetric(X.transpose() * X - Mat::Identity(q, q));
  };
  // grad_h(X) w = 2 X unpack(w).
  prob.constraint.apply_jacobian = [p, q](const Vec& x, const Vec& w) {
    return stiefel::flatten(2.0 * stiefel::as_matrix(x, p, q) * stiefel::unpack_symmetric(w, q));
  };
  prob.constraint.jacobian = [p, q](const Vec& x) {
    const auto X = stiefel::as_matrix(x, p, q);
    const Index m = stiefel::packed_size(q);
    Mat J = Mat::Zero(p * q, m);
    Index k = 0;
    for (Index j = 0; j < q; ++j)
      for (Index i = 0; i <= j; ++i, ++k) {
        if (i == j) {
          J.col(k).segment(i * p, p) = 2.0 * X.col(i);
        } else {
          J.col(k).segment(i * p, p) = M_SQRT2 * X.col(j);
          J.col(k).segment(j * p, p) = M_SQRT2 * X.col(i);
        }
      }
    return J;
  };
  prob.constraint.project_tangent = [p, q](const Vec& x, const Vec& g) {
    const auto proj = stiefel::sylvester_projection(stiefel::as_matrix(x, p, q),
                                                    stiefel::as_matrix(g, p, q));
    TangentProjection out;
    out.projected = stiefel::flatten(proj.projected);
    out.multipliers = stiefel::pack_symmetric(0.5 * proj.S);
    return out;
  };
  return prob;
}

/// Analytic constants for the rule alpha I on K = {|X^T X - I|_F <= r1}.
/// The eigenvalues of grad_h^T grad_h are 2(d_i + d_j) for the eigenvalues d
/// of X^T X, all within [1 - r1, 1 + r1].
inline ConstantRegistry procrustes_constants(const Mat& A, const Mat& B, double r1,
                                             double alpha) {
  if (!(r1 > 0 && r1 < 1)) throw ConfigurationError("Procrustes constants need 0 < r1 < 1");
  const Index q = B.cols();
  const double a2 = A.operatorNorm();
  const double rho2 = 1.0 + r1;
  ConstantRegistry r;
  r.r1 = r1;
  r.L_f = 2.0 * a2 * a2;
  r.L_h = 2.0;
  r.M_h = 2.0 * std::sqrt(rho2);
  r.C_h = *r.M_h;
  r.C_A = alpha * *r.M_h;
  r.mu_h = 2.0 * std::sqrt(1.0 - r1);
  r.alpha_m = 4.0 * alpha * (1.0 - r1);
  r.B_f = 2.0 * a2 * (a2 * std::sqrt(static_cast<double>(q) * rho2) + B.norm());
  r.C_f = *r.B_f;
  r.L_H = 2.0 * std::max(1.0, rho2 - 1.0) + 4.0 * rho2;
  r.M_1 = alpha * (*r.M_h * *r.B_f + alpha * 4.0 * rho2 * r1);
  r.M_bar = *r.M_1 / *r.alpha_m;
  r.inf_f = 0.0;
  return r;
}

/// Random point with orthonormal columns (QR of a Gaussian matrix).
inline Mat random_stiefel(Index p, Index q, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Mat G(p, q);
  for (Index j = 0; j < q; ++j)
    for (Index i = 0; i < p; ++i) G(i, j) = nd(rng);
  Eigen::HouseholderQR<Mat> qr(G);
  Mat Q = qr.householderQ() * Mat::Identity(p, q);
  const Mat R = qr.matrixQR().topLeftCorner(q, q);
  for (Index j = 0; j < q; ++j)
    if (R(j, j) < 0) Q.col(j) = -Q.col(j);
  return Q;
}

/// Gaussian matrix with N(0, scale^2) entries.
inline Mat random_gaussian(Index rows, Index cols, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, scale);
  Mat M(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) M(i, j) = nd(rng);
  return M;
}

/// Random Procrustes instance: A is p x p with N(0, 1/p) entries, B is p x q
/// with N(0, 1) entries.
struct ProcrustesData {
  Mat A, B;
};

inline ProcrustesData random_procrustes_data(Index p, Index q, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ProcrustesData d;
  d.A = random_gaussian(p, p, 1.0 / std::sqrt(static_cast<double>(p)), rng);
  d.B = random_gaussian(p, q, 1.0, rng);
  return d;
}

// ---------------------------------------------------------------------------
// Hanging chain
// ---------------------------------------------------------------------------

struct ChainGeometry {
  Index N = 0;
  double k_s = 100.0;
  double r = 0.0;  // segment length 10 / (N + 1)
  double span = 9.0;

  explicit ChainGeometry(Index joints) : N(joints), r(10.0 / static_cast<double>(joints + 1)) {}

  Eigen::Vector2d joint(const Vec& x, Index i) const {
    if (i == 0) return {0.0, 0.0};
    if (i == N + 1) return {span, 0.0};
    return {x[2 * (i - 1)], x[2 * (i - 1) + 1]};
  }
};

/// Chain with N free joints xi_1..xi_N stored as (x_1, y_1, x_2, y_2, ...).
/// f = N^{-3} sum_i [(k_s / r^4)(xi_{i-1} - xi_i)^T (xi_{i+1} - xi_i) + y_i],
/// h_k = (|xi_{k-1} - xi_k|^2 - r^2) / (2r), k = 1..N+1.
inline ProblemInstance make_chain(Index N, double r1) {
  if (N < 2) throw ConfigurationError("chain needs N >= 2");
  const ChainGeometry geo(N);
  ProblemInstance p;
  p.name = "chain";
  p.n = 2 * N;
  p.n_h = N + 1;
  p.safety_radius = r1;

  const double n3 = std::pow(static_cast<double>(N), 3);
  const double a = geo.k_s / std::pow(geo.r, 4) / n3;

  p.objective.value = [geo, a, n3](const Vec& x) {
    double f = 0.0;
    for (Index i = 1; i <= geo.N; ++i) {
      const Eigen::Vector2d xi = geo.joint(x, i);
      f += a * (geo.joint(x, i - 1) - xi).dot(geo.joint(x, i + 1) - xi) + xi.y() / n3;
    }
    return f;
  };
  p.objective.gradient = [geo, a, n3](const Vec& x) {
    Vec g = Vec::Zero(2 * geo.N);
    auto add = [&](Index j, const Eigen::Vector2d& v) {
      if (j >= 1 && j <= geo.N) g.segment<2>(2 * (j - 1)) += v;
    };
    for (Index i = 1; i <= geo.N; ++i) {
      const Eigen::Vector2d prev = geo.joint(x, i - 1);
      const Eigen::Vector2d cur = geo.joint(x, i);
      const Eigen::Vector2d next = geo.joint(x, i + 1);
      add(i - 1, a * (next - cur));
      add(i + 1, a * (prev - cur));
      add(i, a * (2.0 * cur - prev - next));
      g[2 * (i - 1) + 1] += 1.0 / n3;
    }
    return g;
  };
  p.constraint.value = [geo](const Vec& x) {
    Vec h(geo.N + 1);
    for (Index k = 1; k <= geo.N + 1; ++k)
      h[k - 1] = ((geo.joint(x, k - 1) - geo.joint(x, k)).squaredNorm() - geo.r * geo.r) /
                 (2.0 * geo.r);
    return h;
  };
  p.constraint.jacobian = [geo](const Vec& x) {
    Mat J = Mat::Zero(2 * geo.N, geo.N + 1);
    for (Index k = 1; k <= geo.N + 1; ++k) {
      const Eigen::Vector2d d = (geo.joint(x, k - 1) - geo.joint(x, k)) / geo.r;
      if (k - 1 >= 1) J.col(k - 1).segment<2>(2 * (k - 2)) = d;
      if (k <= geo.N) J.col(k - 1).segment<2>(2 * (k - 1)) = -d;
    }
    return J;
  };
  p.constraint.apply_jacobian = [geo](const Vec& x, const Vec& w) {
    Vec out = Vec::Zero(2 * geo.N);
    for (Index k = 1; k <= geo.N + 1; ++k) {
      const Eigen::Vector2d d = w[k - 1] * (geo.joint(x, k - 1) - geo.joint(x, k)) / geo.r;
      if (k - 1 >= 1) out.segment<2>(2 * (k - 2)) += d;
      if (k <= geo.N) out.segment<2>(2 * (k - 1)) -= d;
    }
    return out;
  };
  p.constraint.bandwidth = 4;
  return p;
}

/// Circular arc of length 10 through (0,0) and (9,0), sagging below the axis,
/// sampled at N+1 equal chords of length r.
inline Vec chain_initializer(Index N) {
  if (N < 2) throw ConfigurationError("chain needs N >= 2");
  const ChainGeometry geo(N);
  const double m = static_cast<double>(N + 1);
  // Chords of length r subtending 2 phi each: sin(m phi) / sin(phi) = span / r.
  const double target = geo.span / geo.r;
  double lo = 1e-12, hi = M_PI / m;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (std::sin(m * mid) / std::sin(mid) > target)
      lo = mid;
    else
      hi = mid;
  }
  const double phi = 0.5 * (lo + hi);
  const double R = geo.r / (2.0 * std::sin(phi));
  const double theta = m * phi;
  const double cx = 0.5 * geo.span;
  const double cy = R * std::cos(theta);
  Vec x(2 * N);
  for (Index j = 1; j <= N; ++j) {
    const double ang = -M_PI / 2 - theta + 2.0 * static_cast<double>(j) * phi;
    x[2 * (j - 1)] = cx + R * std::cos(ang);
    x[2 * (j - 1) + 1] = cy + R * std::sin(ang);
  }
  return x;
}

}  // namespace orthodir
