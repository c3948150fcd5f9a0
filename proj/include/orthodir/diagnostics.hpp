#pragma once

// Retraction-based Riemannian gradient descent on the Stiefel manifold and
// trace-level rate diagnostics.

#include "orthodir/core.hpp"
#include "orthodir/solver.hpp"
#include "orthodir/stiefel.hpp"

#include <Eigen/QR>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <vector>

namespace orthodir {

// ---------------------------------------------------------------------------
// Riemannian gradient descent
// ---------------------------------------------------------------------------

enum class RgdMetric { Euclidean, Canonical };

struct RGDConfig {
  double step = 1e-2;
  RgdMetric metric = RgdMetric::Euclidean;
  Index max_iters = 1000;
  Index snapshot_stride = 1;
};

/// Q factor of Y with R's diagonal forced positive. Throws
/// SingularConstraintError when Y has (numerically) dependent columns.
inline Mat qr_retraction(const Mat& Y) {
  const Index q = Y.cols();
  Eigen::HouseholderQR<Mat> qr(Y);
  const Mat R = qr.matrixQR().topLeftCorner(q, q).triangularView<Eigen::Upper>();
  Mat Q = qr.householderQ() * Mat::Identity(Y.rows(), q);
  const double rmax = R.diagonal().cwiseAbs().maxCoeff();
  for (Index j = 0; j < q; ++j) {
    if (!(std::abs(R(j, j)) > 1e-14 * rmax))
      throw SingularConstraintError("rank collapse in QR retraction");
    if (R(j, j) < 0) Q.col(j) = -Q.col(j);
  }
  return Q;
}

/// Riemannian gradient of f at a feasible X for the chosen metric.
inline Mat riemannian_gradient(const Mat& G, const Mat& X, RgdMetric metric) {
  if (metric == RgdMetric::Euclidean) return stiefel::stiefel_tangent_projection_sylvester(X, G);
  return stiefel::relative_gradient(G, X);
}

/// X_{k+1} = qf(X_k - gamma xi_k) with xi_k the Riemannian gradient.
/// Records use field_norm = tangent_norm = |xi_k| and merit = f.
inline IterateTrace rgd_run(const ProblemInstance& p, const RGDConfig& cfg, const Vec& x0) {
  if (!p.stiefel) throw ConfigurationError("RGD needs a Stiefel problem");
  if (!(cfg.step > 0)) throw ConfigurationError("RGD step must be positive");
  if (cfg.max_iters < 1 || cfg.snapshot_stride < 1)
    throw ConfigurationError("RGD needs max_iters >= 1 and stride >= 1");
  const auto [rows, cols] = *p.stiefel;
  if (x0.size() != rows * cols) throw ConfigurationError("starting point has wrong dimension");
  Mat X = stiefel::as_matrix(x0, rows, cols);
  if ((X.transpose() * X - Mat::Identity(cols, cols)).norm() > 1e-10)
    throw ConfigurationError("RGD starting point is not on the Stiefel manifold");

  IterateTrace trace;
  const auto t0 = std::chrono::steady_clock::now();
  for (Index k = 0;; ++k) {
    const Vec x = stiefel::flatten(X);
    IterateRecord rec;
    rec.k = k;
    Mat xi;
    try {
      rec.f = eval_objective(p, x);
      xi = riemannian_gradient(stiefel::as_matrix(eval_gradient(p, x), rows, cols), X,
                               cfg.metric);
    } catch (const Error& e) {
      trace.status = RunStatus::NumericalFailure;
      trace.message = e.what();
      break;
    }
    rec.h_norm = (X.transpose() * X - Mat::Identity(cols, cols)).norm();
    rec.field_norm = rec.tangent_norm = xi.norm();
    rec.merit = rec.f;
    rec.step = cfg.step;
    rec.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    trace.records.push_back(rec);
    if (k % cfg.snapshot_stride == 0) trace.snapshots.emplace_back(k, x);
    if (k == cfg.max_iters) {
      trace.status = RunStatus::BudgetExhausted;
      break;
    }
    try {
      X = qr_retraction(X - cfg.step * xi);
    } catch (const SingularConstraintError& e) {
      trace.status = RunStatus::NumericalFailure;
      trace.message = e.what();
      break;
    }
  }
  trace.final_x = stiefel::flatten(X);
  if (!trace.records.empty() && trace.snapshots.back().first != trace.records.back().k)
    trace.snapshots.emplace_back(trace.records.back().k, trace.final_x);
  return trace;
}

/// Closed-form minimizer of |X - B|_F over orthonormal X: U V^T from B = U S V^T.
inline Mat orthogonal_procrustes_solution(const Mat& B) {
  Eigen::JacobiSVD<Mat> svd(B, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return svd.matrixU() * svd.matrixV().transpose();
}

// ---------------------------------------------------------------------------
// Deterministic rate report
// ---------------------------------------------------------------------------

struct RateReport {
  std::vector<double> realized;  // min_{k<N} |v_k|^2, N = 1..size
  std::vector<double> bound;     // 2 C_q D_M / (N gamma)
  std::vector<double> h_norm;
  double D_M = 0;
  bool pass = true;
  Index first_failure = -1;  // smallest failing N, or -1
};

/// D_M = Lambda_M(x_0) - min_k Lambda_M(x_k) over the trace.
inline RateReport rate_report(const IterateTrace& trace, double gamma, double M,
                              double C_q = 1.0) {
  if (!(gamma > 0)) throw ConfigurationError("rate report needs gamma > 0");
  RateReport rep;
  const auto& r = trace.records;
  if (r.empty()) return rep;
  const double lam0 = r[0].f + M * r[0].h_norm;
  double lam_min = lam0;
  for (const auto& rec : r) lam_min = std::min(lam_min, rec.f + M * rec.h_norm);
  rep.D_M = lam0 - lam_min;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < r.size(); ++i) {
    best = std::min(best, r[i].field_norm * r[i].field_norm);
    const double N = static_cast<double>(i + 1);
    const double b = 2.0 * C_q * rep.D_M / (N * gamma);
    rep.realized.push_back(best);
    rep.bound.push_back(b);
    rep.h_norm.push_back(r[i].h_norm);
    if (rep.pass && best > b * (1.0 + 1e-6)) {
      rep.pass = false;
      rep.first_failure = static_cast<Index>(i + 1);
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Stochastic rate report
// ---------------------------------------------------------------------------

struct StochasticRateReport {
  double estimate = 0;        // mean of |v_{k^}|^2 over runs
  double stderr_ = 0;
  double uniform_average = 0;  // mean over runs and k < N of |v_k|^2
  double bound = 0;
  double D_M = 0;
  std::vector<Index> sampled_k;
  bool pass = false;
};

/// 2 D_M (L_f + M L_h + alpha_m) / N + sigma / sqrt(N) (D_bar (L_f + M L_h) + 2 D_M / D_bar).
inline double stochastic_rate_bound(const ConstantRegistry& reg, double M, Index N,
                                    double D_bar, double sigma, double D_M) {
  const double Lf = ConstantRegistry::require(reg.L_f, "L_f");
  const double Lh = ConstantRegistry::require(reg.L_h, "L_h");
  const double am = ConstantRegistry::require_positive(reg.alpha_m, "alpha_m");
  const double n = static_cast<double>(N);
  const double lip = Lf + M * Lh;
  return 2.0 * D_M * (lip + am) / n +
         sigma / std::sqrt(n) * (D_bar * lip + 2.0 * D_M / D_bar);
}

/// Monte-Carlo check of the expected stationarity at a uniformly sampled
/// iterate. Run i uses seeds[i] for its sample stream. D_M is taken from the
/// registry when set, otherwise max_i Lambda_M(x_0^i) - inf_f.
inline StochasticRateReport stochastic_rate_report(const std::vector<IterateTrace>& runs,
                                                   const std::vector<std::uint64_t>& seeds,
                                                   const ConstantRegistry& reg, double M,
                                                   Index N, double D_bar, double sigma) {
  if (runs.size() < 2) throw ConfigurationError("stochastic rate report needs >= 2 runs");
  if (seeds.size() != runs.size()) throw ConfigurationError("one sample seed per run");
  if (!(D_bar > 0)) throw ConfigurationError("D_bar must be positive");
  StochasticRateReport rep;
  if (reg.D_M) {
    rep.D_M = *reg.D_M;
  } else {
    const double inf_f = ConstantRegistry::require(reg.inf_f, "inf_f");
    double lam0 = -std::numeric_limits<double>::infinity();
    for (const auto& t : runs) {
      if (t.records.empty()) throw ConfigurationError("empty trace");
      lam0 = std::max(lam0, t.records[0].f + M * t.records[0].h_norm);
    }
    rep.D_M = lam0 - inf_f;
  }
  const double R = static_cast<double>(runs.size());
  double sum = 0, sum2 = 0, uni = 0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto s = sampled_iterate(runs[i], N, seeds[i]);
    const double v = runs[i].records[static_cast<std::size_t>(s.k)].field_norm;
    rep.sampled_k.push_back(s.k);
    sum += v * v;
    sum2 += v * v * v * v;
    double run_avg = 0;
    for (Index k = 0; k < N; ++k) {
      const double fk = runs[i].records[static_cast<std::size_t>(k)].field_norm;
      run_avg += fk * fk;
    }
    uni += run_avg / static_cast<double>(N);
  }
  rep.estimate = sum / R;
  const double var = std::max(0.0, (sum2 - R * rep.estimate * rep.estimate) / (R - 1.0));
  rep.stderr_ = std::sqrt(var / R);
  rep.uniform_average = uni / R;
  rep.bound = stochastic_rate_bound(reg, M, N, D_bar, sigma, rep.D_M);
  rep.pass = rep.estimate - 3.0 * rep.stderr_ <= rep.bound;
  return rep;
}

// ---------------------------------------------------------------------------
// Reduced variant
// ---------------------------------------------------------------------------

/// Deterministic right-hand side for the reduced variant with
/// gamma = min(gamma_max, D_bar N^{-1/3}) and alpha = gamma:
/// 8 D_0 (L_f + L_h / mu_h^2) / N + (8 D_0 / D_bar + 8 C~ L_H D_bar) / N^{2/3},
/// C~ = B_f M_h / mu_h^2.
inline double reduced_rate_rhs(const ConstantRegistry& reg, Index N, double D_bar,
                               double D_0) {
  using R = ConstantRegistry;
  const double Lf = R::require(reg.L_f, "L_f");
  const double Lh = R::require(reg.L_h, "L_h");
  const double LH = R::require(reg.L_H, "L_H");
  const double mu = R::require_positive(reg.mu_h, "mu_h");
  const double Bf = R::require(reg.B_f, "B_f");
  const double Mh = R::require(reg.M_h, "M_h");
  if (N < 1 || !(D_bar > 0)) throw ConfigurationError("need N >= 1 and D_bar > 0");
  const double n = static_cast<double>(N);
  const double Ct = Bf * Mh / (mu * mu);
  return 8.0 * D_0 * (Lf + Lh / (mu * mu)) / n +
         (8.0 * D_0 / D_bar + 8.0 * Ct * LH * D_bar) / std::pow(n, 2.0 / 3.0);
}

/// min over k < N of |grad_V~ f(x_k)|^2 + |h(x_k)|^2 / 2 from a reduced trace
/// (tangent_norm holds the hyperplane-projected gradient norm).
inline double reduced_stationarity_min(const IterateTrace& trace, Index N) {
  if (static_cast<Index>(trace.records.size()) < N)
    throw std::out_of_range("trace shorter than N");
  double best = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < N; ++k) {
    const auto& r = trace.records[static_cast<std::size_t>(k)];
    best = std::min(best, r.tangent_norm * r.tangent_norm + 0.5 * r.h_norm * r.h_norm);
  }
  return best;
}

}  // namespace orthodir
