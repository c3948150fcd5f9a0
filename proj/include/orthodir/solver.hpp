#pragma once

// The discrete recursion x_{k+1} = x_k + gamma_k (v_k + eta_{k+1}) over any of
// the direction fields, with step-size policies, tangent noise, the safety
// region guard and per-iteration traces.

#include "orthodir/core.hpp"
#include "orthodir/directions.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace orthodir {

enum class FieldKind { ODCGM, Reduced, GeometryAware, LandingStiefel };

inline const char* to_string(FieldKind f) {
  switch (f) {
    case FieldKind::ODCGM: return "odcgm";
    case FieldKind::Reduced: return "reduced";
    case FieldKind::GeometryAware: return "godcgm";
    case FieldKind::LandingStiefel: return "landing";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Seeds
// ---------------------------------------------------------------------------

/// splitmix64 finalizer; derives independent stream seeds from one root.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  std::uint64_t z = root + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

enum SeedStream : std::uint64_t { kInstanceStream = 0, kNoiseStream = 1, kSampleStream = 2 };

// ---------------------------------------------------------------------------
// Step sizes
// ---------------------------------------------------------------------------

struct ConstantStep {
  double gamma = 1e-2;
};

/// gamma_k = gamma0 * max(1, k - offset)^(-exponent).
struct PolyDecayStep {
  double gamma0 = 1e-2;
  double exponent = 0.5;
  double offset = 0.0;
};

enum class RateMode { Deterministic, Stochastic };

/// Constant step chosen from the convergence theory.
struct TheoremStep {
  RateMode mode = RateMode::Deterministic;
  ConstantRegistry registry;
  double M = 0.0;
  Index horizon = 1;
  double d_bar = 1.0;
  double sigma = 0.0;
};

using StepPolicy = std::variant<ConstantStep, PolyDecayStep, TheoremStep>;

/// Largest gamma with alpha = gamma satisfying gamma <= 1/alpha and
/// gamma <= 1 / (L_f + alpha L_H / mu_h^2).
inline double reduced_gamma_max(double L_f, double L_H, double mu_h) {
  const double a = L_H / (mu_h * mu_h);
  double root;
  if (a == 0.0)
    root = L_f > 0 ? 1.0 / L_f : std::numeric_limits<double>::infinity();
  else
    root = (-L_f + std::sqrt(L_f * L_f + 4.0 * a)) / (2.0 * a);
  return std::min(1.0, root);
}

inline double theorem_step_size(const TheoremStep& t, FieldKind field) {
  const auto& r = t.registry;
  if (t.horizon < 1) throw ConfigurationError("theorem step needs a horizon N >= 1");
  const double N = static_cast<double>(t.horizon);
  if (field == FieldKind::Reduced) {
    const double gmax = reduced_gamma_max(ConstantRegistry::require(r.L_f, "L_f"),
                                          ConstantRegistry::require_positive(r.L_H, "L_H"),
                                          ConstantRegistry::require_positive(r.mu_h, "mu_h"));
    const double sched = t.mode == RateMode::Deterministic ? t.d_bar * std::cbrt(1.0 / N)
                                                           : t.d_bar / std::sqrt(N);
    return std::min(gmax, sched);
  }
  const double am = ConstantRegistry::require_positive(r.alpha_m, "alpha_m");
  const double Lf = ConstantRegistry::require(r.L_f, "L_f");
  const double Lh = ConstantRegistry::require(r.L_h, "L_h");
  double cq = 1.0;
  if (field == FieldKind::GeometryAware || field == FieldKind::LandingStiefel)
    cq = r.C_q.value_or(1.0);
  const double lip = cq * (Lf + t.M * Lh);
  const double gmax = lip > 0 ? std::min(1.0 / am, 1.0 / lip) : 1.0 / am;
  if (t.mode == RateMode::Deterministic || t.sigma == 0.0) return gmax;
  return std::min(gmax, t.d_bar / (t.sigma * std::sqrt(N)));
}

inline double step_size(const StepPolicy& policy, Index k, FieldKind field) {
  if (const auto* c = std::get_if<ConstantStep>(&policy)) return c->gamma;
  if (const auto* d = std::get_if<PolyDecayStep>(&policy)) {
    const double base = std::max(1.0, static_cast<double>(k) - d->offset);
    return d->gamma0 * std::pow(base, -d->exponent);
  }
  return theorem_step_size(std::get<TheoremStep>(policy), field);
}

// ---------------------------------------------------------------------------
// Noise
// ---------------------------------------------------------------------------

struct NoNoise {};

/// eta = sigma P_V z / sqrt(n - n_h), z ~ N(0, I_n); E|eta|^2 = sigma^2.
struct GaussianTangent {
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

/// eta = P_V(grad f - g(x, xi)) from the objective's stochastic gradient.
struct OracleNoise {
  std::uint64_t seed = 0;
};

using NoiseModel = std::variant<NoNoise, GaussianTangent, OracleNoise>;

/// Stateful generator for one run.
class NoiseStream {
 public:
  explicit NoiseStream(const NoiseModel& model) : model_(model) {
    if (const auto* g = std::get_if<GaussianTangent>(&model_)) {
      if (!(g->sigma >= 0)) throw ConfigurationError("noise level must be nonnegative");
      rng_.seed(g->seed);
    } else if (const auto* o = std::get_if<OracleNoise>(&model_)) {
      rng_.seed(o->seed);
    }
  }

  bool active() const {
    if (const auto* g = std::get_if<GaussianTangent>(&model_)) return g->sigma > 0;
    return std::holds_alternative<OracleNoise>(model_);
  }

  Vec draw(const ProblemInstance& p, const Vec& x) {
    if (const auto* g = std::get_if<GaussianTangent>(&model_)) {
      Vec z(p.n);
      for (Index i = 0; i < p.n; ++i) z[i] = normal_(rng_);
      const double scale = g->sigma / std::sqrt(static_cast<double>(p.n - p.n_h));
      return scale * detail::tangent_projection(p, x, z).projected;
    }
    if (!p.objective.stochastic_gradient)
      throw ConfigurationError("problem '" + p.name + "' has no stochastic gradient");
    const Vec est = p.objective.stochastic_gradient(x, rng_());
    return detail::tangent_projection(p, x, Vec(eval_gradient(p, x) - est)).projected;
  }

 private:
  NoiseModel model_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
};

// ---------------------------------------------------------------------------
// Configuration and traces
// ---------------------------------------------------------------------------

struct GuardOff {};
/// Stop with LeftRegion when |h(x_k)| > r1.
struct GuardAssert {};
/// Reject steps leaving K and halve the step threshold gamma_bar.
struct SafeStepHalving {
  double gamma_bar = 1.0;
};

using RegionGuard = std::variant<GuardOff, GuardAssert, SafeStepHalving>;

inline RegionGuard default_guard(FieldKind field) {
  if (field == FieldKind::Reduced) return GuardOff{};
  return GuardAssert{};
}

struct SolverRunConfig {
  FieldKind field = FieldKind::ODCGM;
  MultiplierRule rule = VanillaConstant{1.0};
  double reduced_alpha = 1.0;
  double landing_lambda = 1.0;
  std::optional<MetricObject> metric;  // GeometryAware only; Euclidean if unset
  StepPolicy step = ConstantStep{};
  NoiseModel noise = NoNoise{};
  Index max_iters = 1000;
  double stop_of_norm = 0.0;
  MeritParams merit;
  std::optional<RegionGuard> guard;  // default_guard(field) if unset
  Index snapshot_stride = 1;
  double reduced_M_h = 1.0;  // scale of the reduced on-manifold threshold

  void validate() const {
    if (max_iters < 1) throw ConfigurationError("max_iters must be >= 1");
    if (!(stop_of_norm >= 0)) throw ConfigurationError("stop_of_norm must be >= 0");
    if (snapshot_stride < 1) throw ConfigurationError("snapshot stride must be >= 1");
    if (!(merit.M >= 0)) throw ConfigurationError("merit weight must be >= 0");
  }
};

enum class RunStatus { Converged, BudgetExhausted, LeftRegion, NumericalFailure };

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Converged: return "Converged";
    case RunStatus::BudgetExhausted: return "BudgetExhausted";
    case RunStatus::LeftRegion: return "LeftRegion";
    case RunStatus::NumericalFailure: return "NumericalFailure";
  }
  return "?";
}

struct IterateRecord {
  Index k = 0;
  double f = 0;
  double h_norm = 0;
  double field_norm = 0;    // |v_k|
  double tangent_norm = 0;  // |tangent part of v_k|
  double merit = 0;         // Lambda_M(x_k)
  double step = 0;          // gamma_k used to leave x_k
  double elapsed_s = 0;
  double noise_sq = 0;        // |eta_{k+1}|^2
  double noise_residual = 0;  // |grad_h(x_k)^T eta_{k+1}|, when measured
};

struct HalvingEvent {
  Index k = 0;
  double gamma_bar = 0;
};

struct IterateTrace {
  std::vector<IterateRecord> records;
  std::vector<std::pair<Index, Vec>> snapshots;
  Vec final_x;
  RunStatus status = RunStatus::BudgetExhausted;
  std::string message;
  std::vector<HalvingEvent> halvings;

  /// Stored iterate x_k, if k was snapshotted.
  const Vec* snapshot(Index k) const {
    for (const auto& [kk, x] : snapshots)
      if (kk == k) return &x;
    return nullptr;
  }
};

/// Direction of the configured field at x.
inline DirectionResult evaluate_field(const ProblemInstance& p, const SolverRunConfig& cfg,
                                      double reduced_alpha, const Vec& x, const Vec& h) {
  switch (cfg.field) {
    case FieldKind::ODCGM:
      return of_field(p, cfg.rule, x);
    case FieldKind::Reduced:
      return reduced_field(p, reduced_alpha, x,
                           reduced_on_manifold_tol(h.norm(), cfg.reduced_M_h));
    case FieldKind::GeometryAware:
      // Without a metric the field is OF, which has structured fast paths.
      if (!cfg.metric) return of_field(p, cfg.rule, x);
      return gof_field(p, cfg.rule, *cfg.metric, x);
    case FieldKind::LandingStiefel:
      return landing_field(p, cfg.landing_lambda, x);
  }
  throw ConfigurationError("unknown field");
}

namespace detail {

inline bool measure_noise_residual(const ProblemInstance& p) {
  return static_cast<bool>(p.constraint.jacobian) && p.n * p.n_h <= 1'000'000;
}

}  // namespace detail

/// Runs the recursion from x0 and records every iteration.
inline IterateTrace run(const ProblemInstance& p, const SolverRunConfig& cfg, const Vec& x0) {
  p.validate();
  cfg.validate();
  if (x0.size() != p.n) throw ConfigurationError("starting point has wrong dimension");
  if (!x0.allFinite()) throw ConfigurationError("starting point is not finite");

  const RegionGuard guard = cfg.guard.value_or(default_guard(cfg.field));
  const bool assert_region = std::holds_alternative<GuardAssert>(guard);
  const auto* halving = std::get_if<SafeStepHalving>(&guard);
  const double r1 = p.safety_radius;
  if (!std::holds_alternative<GuardOff>(guard) && eval_constraint(p, x0).norm() > r1)
    throw ConfigurationError("starting point lies outside the safety region");

  // Reduced runs under the theorem policy couple alpha = gamma.
  double reduced_alpha = cfg.reduced_alpha;
  const bool theorem_step = std::holds_alternative<TheoremStep>(cfg.step);
  if (cfg.field == FieldKind::Reduced && theorem_step)
    reduced_alpha = step_size(cfg.step, 0, cfg.field);

  NoiseStream noise(cfg.noise);
  const bool noisy = noise.active();
  const bool track_residual = noisy && detail::measure_noise_residual(p);
  double gamma_bar = halving ? halving->gamma_bar : std::numeric_limits<double>::infinity();

  IterateTrace trace;
  trace.records.reserve(static_cast<std::size_t>(cfg.max_iters) + 1);
  const auto t0 = std::chrono::steady_clock::now();
  Vec x = x0;

  for (Index k = 0;; ++k) {
    IterateRecord rec;
    rec.k = k;
    DirectionResult dir;
    Vec h;
    try {
      h = eval_constraint(p, x);
      rec.f = eval_objective(p, x);
      dir = evaluate_field(p, cfg, reduced_alpha, x, h);
      if (!dir.direction.allFinite()) throw EvaluationError("non-finite direction");
    } catch (const Error& e) {
      trace.status = RunStatus::NumericalFailure;
      trace.message = e.what();
      break;
    }
    rec.h_norm = h.norm();
    rec.field_norm = dir.direction.norm();
    rec.tangent_norm = dir.tangent_part.norm();
    rec.merit = rec.f + cfg.merit.M * rec.h_norm;
    rec.step = std::min(step_size(cfg.step, k, cfg.field), gamma_bar);
    rec.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    trace.records.push_back(rec);
    if (k % cfg.snapshot_stride == 0) trace.snapshots.emplace_back(k, x);

    if (assert_region && rec.h_norm > r1) {
      trace.status = RunStatus::LeftRegion;
      break;
    }
    if (rec.field_norm <= cfg.stop_of_norm) {
      trace.status = RunStatus::Converged;
      break;
    }
    if (k == cfg.max_iters) {
      trace.status = RunStatus::BudgetExhausted;
      break;
    }

    Vec move = dir.direction;
    if (noisy) {
      try {
        const Vec eta = noise.draw(p, x);
        auto& last = trace.records.back();
        last.noise_sq = eta.squaredNorm();
        if (track_residual)
          last.noise_residual = (eval_jacobian(p, x).transpose() * eta).norm();
        move += eta;
      } catch (const Error& e) {
        trace.status = RunStatus::NumericalFailure;
        trace.message = e.what();
        break;
      }
    }

    double gamma = trace.records.back().step;
    Vec next = x + gamma * move;
    if (halving) {
      int consecutive = 0;
      bool failed = false;
      while (true) {
        bool outside = !next.allFinite();
        if (!outside) {
          try {
            outside = eval_constraint(p, next).norm() > r1;
          } catch (const EvaluationError&) {
            outside = true;
          }
        }
        if (!outside) break;
        if (++consecutive > 64) {
          failed = true;
          break;
        }
        gamma_bar /= 2;
        trace.halvings.push_back({k, gamma_bar});
        gamma = std::min(step_size(cfg.step, k, cfg.field), gamma_bar);
        next = x + gamma * move;
      }
      trace.records.back().step = gamma;
      if (failed) {
        trace.status = RunStatus::NumericalFailure;
        trace.message = "64 consecutive step halvings";
        break;
      }
    }
    if (!next.allFinite()) {
      trace.status = RunStatus::NumericalFailure;
      trace.message = "non-finite iterate";
      break;
    }
    x = std::move(next);
  }

  trace.final_x = x;
  if (!trace.records.empty()) {
    const Index last = trace.records.back().k;
    if (trace.snapshots.empty() || trace.snapshots.back().first != last)
      trace.snapshots.emplace_back(last, x);
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Post-run operations
// ---------------------------------------------------------------------------

struct SampledIterate {
  Index k = 0;
  std::optional<Vec> x;  // present when x_k was snapshotted
};

/// Uniform index k in {0, ..., N-1} from the dedicated sample stream of seed.
inline Index sample_index(Index N, std::uint64_t seed) {
  if (N < 1) throw std::out_of_range("sample horizon must be >= 1");
  std::mt19937_64 rng(derive_seed(seed, kSampleStream));
  std::uniform_int_distribution<Index> dist(0, N - 1);
  return dist(rng);
}

inline SampledIterate sampled_iterate(const IterateTrace& trace, Index N, std::uint64_t seed) {
  if (static_cast<Index>(trace.records.size()) < N)
    throw std::out_of_range("trace shorter than the sampling horizon");
  SampledIterate out;
  out.k = sample_index(N, seed);
  if (const Vec* x = trace.snapshot(out.k)) out.x = *x;
  return out;
}

/// Largest step keeping ODCGM iterates inside K from |h(x0)| <= r1 - delta.
inline double safe_step_bound(const ConstantRegistry& reg, double delta, double b) {
  using R = ConstantRegistry;
  const double am = R::require_positive(reg.alpha_m, "alpha_m");
  const double Ch = R::require_positive(reg.C_h, "C_h");
  const double CA = R::require_positive(reg.C_A, "C_A");
  const double r1 = R::require_positive(reg.r1, "r1");
  const double Cf = R::require(reg.C_f, "C_f");
  const double Lh = R::require_positive(reg.L_h, "L_h");
  if (!(delta > 0) || !(delta < r1)) throw ConfigurationError("need 0 < delta < r1");
  if (!(b >= 0)) throw ConfigurationError("noise bound must be nonnegative");
  if (std::isinf(b)) return 0.0;
  const double t1 = 1.0 / am;
  const double t2 = delta / (Ch * std::sqrt(2.0 * (CA * CA * r1 * r1 + Cf * Cf + b * b)));
  const double t3 = am / (2.0 * Lh * CA * CA * r1);
  const double t4 = 2.0 * am * (r1 - delta) / (3.0 * Lh * (Cf * Cf + b * b));
  return std::min({t1, t2, t3, t4});
}

/// Runs with the SafeStepHalving guard; thin wrapper over run().
inline IterateTrace safe_step_halving_run(const ProblemInstance& p, SolverRunConfig cfg,
                                          const Vec& x0, double gamma_bar) {
  cfg.guard = SafeStepHalving{gamma_bar};
  return run(p, cfg, x0);
}

/// Every k where Lambda_M(x_{k+1}) - Lambda_M(x_k) exceeds
/// -gamma_k |v_k|^2 (1/C_q - (L_f + M L_h) gamma_k / 2) + 1e-9 (1 + |Lambda_M(x_k)|).
inline std::vector<Index> lyapunov_decrease_check(const IterateTrace& trace,
                                                  const ConstantRegistry& reg, double M,
                                                  double C_q = 1.0) {
  const double Lf = ConstantRegistry::require(reg.L_f, "L_f");
  const double Lh = ConstantRegistry::require(reg.L_h, "L_h");
  std::vector<Index> violations;
  const auto& r = trace.records;
  for (std::size_t i = 0; i + 1 < r.size(); ++i) {
    const double lam0 = r[i].f + M * r[i].h_norm;
    const double lam1 = r[i + 1].f + M * r[i + 1].h_norm;
    const double g = r[i].step;
    const double allowed = -g * r[i].field_norm * r[i].field_norm *
                               (1.0 / C_q - (Lf + M * Lh) * g / 2.0) +
                           1e-9 * (1.0 + std::abs(lam0));
    if (lam1 - lam0 > allowed) violations.push_back(r[i].k);
  }
  return violations;
}

/// Every k where |h(x_{k+1})| > (1 - alpha_m gamma)|h(x_k)| + L_h gamma^2 |v_k|^2 / 2 + slack.
inline std::vector<Index> constraint_contraction_check(const IterateTrace& trace,
                                                       const ConstantRegistry& reg,
                                                       double slack = 1e-9) {
  const double am = ConstantRegistry::require(reg.alpha_m, "alpha_m");
  const double Lh = ConstantRegistry::require(reg.L_h, "L_h");
  std::vector<Index> violations;
  const auto& r = trace.records;
  for (std::size_t i = 0; i + 1 < r.size(); ++i) {
    const double g = r[i].step;
    const double v2 = r[i].field_norm * r[i].field_norm;
    if (r[i + 1].h_norm > (1.0 - am * g) * r[i].h_norm + 0.5 * Lh * g * g * v2 + slack)
      violations.push_back(r[i].k);
  }
  return violations;
}

/// Reduced runs: every k where H(x_{k+1}) > (1 - alpha gamma) H(x_k)
/// + (L_H gamma^2 / 2)(|v_k|^2 + sigma^2) + slack, with H = |h|^2 / 2.
inline std::vector<Index> reduced_h_recursion_check(const IterateTrace& trace, double alpha,
                                                    double L_H, double sigma = 0.0,
                                                    double slack = 1e-9) {
  std::vector<Index> violations;
  const auto& r = trace.records;
  for (std::size_t i = 0; i + 1 < r.size(); ++i) {
    const double g = r[i].step;
    const double H0 = 0.5 * r[i].h_norm * r[i].h_norm;
    const double H1 = 0.5 * r[i + 1].h_norm * r[i + 1].h_norm;
    const double v2 = r[i].field_norm * r[i].field_norm;
    if (H1 > (1.0 - alpha * g) * H0 + 0.5 * L_H * g * g * (v2 + sigma * sigma) + slack)
      violations.push_back(r[i].k);
  }
  return violations;
}

}  // namespace orthodir
