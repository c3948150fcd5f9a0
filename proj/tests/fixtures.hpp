#pragma once

// Small hand-written problems shared by the unit tests.

#include "orthodir.hpp"

#include <cmath>

namespace fixtures {

using orthodir::Mat;
using orthodir::ProblemInstance;
using orthodir::Vec;

/// Unit circle with f(x) = c^T x.
inline ProblemInstance circle(double c1, double c2, double r1 = 1.0) {
  Vec c(2);
  c << c1, c2;
  return orthodir::make_sphere(2, c, r1);
}

/// R^3 with h = (x1^2 + x2^2 - 1, x3 - x1) and a quadratic objective
/// f = 1/2 x^T Q x + b^T x.
inline ProblemInstance two_constraints_r3() {
  ProblemInstance p;
  p.name = "two-constraints";
  p.n = 3;
  p.n_h = 2;
  p.safety_radius = 10.0;
  Mat Q(3, 3);
  Q << 2, 0.5, 0, 0.5, 1, 0.3, 0, 0.3, 3;
  Vec b(3);
  b << 1, -2, 0.5;
  p.objective.value = [Q, b](const Vec& x) { return 0.5 * x.dot(Q * x) + b.dot(x); };
  p.objective.gradient = [Q, b](const Vec& x) { return Vec(Q * x + b); };
  p.constraint.value = [](const Vec& x) {
    Vec h(2);
    h << x[0] * x[0] + x[1] * x[1] - 1.0, x[2] - x[0];
    return h;
  };
  p.constraint.jacobian = [](const Vec& x) {
    Mat J(3, 2);
    J << 2 * x[0], -1, 2 * x[1], 0, 0, 1;
    return J;
  };
  return p;
}

/// R^4 with h = (|x|^2 - 1, x1 x2 + x3 - x4) and f = sum sin(x_i) + x^T x / 4.
inline ProblemInstance four_dim() {
  ProblemInstance p;
  p.name = "four-dim";
  p.n = 4;
  p.n_h = 2;
  p.safety_radius = 10.0;
  p.objective.value = [](const Vec& x) { return x.array().sin().sum() + 0.25 * x.squaredNorm(); };
  p.objective.gradient = [](const Vec& x) { return Vec(x.array().cos().matrix() + 0.5 * x); };
  p.constraint.value = [](const Vec& x) {
    Vec h(2);
    h << x.squaredNorm() - 1.0, x[0] * x[1] + x[2] - x[3];
    return h;
  };
  p.constraint.jacobian = [](const Vec& x) {
    Mat J(4, 2);
    J.col(0) = 2.0 * x;
    J.col(1) << x[1], x[0], 1, -1;
    return J;
  };
  return p;
}

}  // namespace fixtures
