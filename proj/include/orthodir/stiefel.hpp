#pragma once

// Stiefel-manifold kernels: packing of symmetric matrices, the Sylvester-based
// Euclidean projection onto V(X) = {Y : Y^T X + X^T Y = 0}, and the closed-form
// landing field.

#include "orthodir/core.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace orthodir::stiefel {

/// Column-major view of a flat vector as a p x q matrix.
inline Eigen::Map<const Mat> as_matrix(const Vec& x, Index p, Index q) {
  return Eigen::Map<const Mat>(x.data(), p, q);
}

inline Vec flatten(const Mat& X) {
  return Eigen::Map<const Vec>(X.data(), X.size());
}

inline Index packed_size(Index q) { return q * (q + 1) / 2; }

/// Upper triangle of a symmetric q x q matrix, column by column, with
/// off-diagonal entries scaled by sqrt(2) so |pack(S)| = |S|_F.
inline Vec pack_symmetric(const Mat& S) {
  const Index q = S.rows();
  Vec out(packed_size(q));
  Index k = 0;
  for (Index j = 0; j < q; ++j)
    for (Index i = 0; i <= j; ++i)
      out[k++] = (i == j) ? S(i, i) : M_SQRT2 * 0.5 * (S(i, j) + S(j, i));
  return out;
}

inline Mat unpack_symmetric(const Vec& v, Index q) {
  Mat S(q, q);
  Index k = 0;
  for (Index j = 0; j < q; ++j)
    for (Index i = 0; i <= j; ++i) {
      const double s = (i == j) ? v[k] : v[k] / M_SQRT2;
      S(i, j) = S(j, i) = s;
      ++k;
    }
  return S;
}

struct SylvesterProjection {
  Mat projected;  // Y in V(X)
  Mat S;          // symmetric with U - Y = X S
};

/// Euclidean projection of U onto V(X). The normal space of V(X) is
/// {X S : S symmetric}, so Y = U - X S where S solves the Sylvester equation
/// (X^T X) S + S (X^T X) = X^T U + U^T X. With X^T X = V D V^T the equation is
/// diagonal in the eigenbasis: S~_ij = C~_ij / (d_i + d_j). Cost O(p q^2).
inline SylvesterProjection sylvester_projection(const Mat& X, const Mat& U) {
  if (X.rows() != U.rows() || X.cols() != U.cols())
    throw ConfigurationError("projection operands differ in shape");
  const Mat G = X.transpose() * X;
  Eigen::SelfAdjointEigenSolver<Mat> es(G);
  const Vec& d = es.eigenvalues();
  const Index q = G.rows();
  if (!(d[0] > 1e-12 * d[q - 1]))
    throw SingularConstraintError("X is not of full column rank");
  const Mat& V = es.eigenvectors();
  const Mat XtU = X.transpose() * U;
  Mat C = V.transpose() * (XtU + XtU.transpose()) * V;
  for (Index j = 0; j < q; ++j)
    for (Index i = 0; i < q; ++i) C(i, j) /= (d[i] + d[j]);
  SylvesterProjection out;
  out.S = V * C * V.transpose();
  out.projected = U - X * out.S;
  return out;
}

inline Mat stiefel_tangent_projection_sylvester(const Mat& X, const Mat& U) {
  return sylvester_projection(X, U).projected;
}

/// psi(X) X with psi = G X^T - X G^T, evaluated in O(p q^2).
inline Mat relative_gradient(const Mat& G, const Mat& X) {
  return G * (X.transpose() * X) - X * (G.transpose() * X);
}

/// grad of 1/2 |X^T X - I|_F^2.
inline Mat normalization_gradient(const Mat& X) {
  const Index q = X.cols();
  return 2.0 * X * (X.transpose() * X - Mat::Identity(q, q));
}

}  // namespace orthodir::stiefel
