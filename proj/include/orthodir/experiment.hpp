#pragma once

// Named problem presets, resolution of an ExperimentConfig into runnable
// solver settings, multi-seed execution with CSV traces, and the JSON run
// manifest.

#include "orthodir/config.hpp"
#include "orthodir/core.hpp"
#include "orthodir/diagnostics.hpp"
#include "orthodir/problems.hpp"
#include "orthodir/solver.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace orthodir {

inline constexpr const char* kVersion = "0.1.0";

inline constexpr const char* kTraceHeader = "k,f,h_norm,field_norm,tangent_norm,merit,step,elapsed_s";
inline constexpr const char* kAggregateHeader =
    "k,runs,f_mean,f_stderr,h_norm_mean,h_norm_stderr,field_norm_mean,field_norm_stderr";
inline constexpr const char* kPlotHeader = "method,k,mean,stderr";

// ---------------------------------------------------------------------------
// Resolution
// ---------------------------------------------------------------------------

/// Everything needed to execute one seed of an experiment.
struct ResolvedRun {
  ProblemInstance problem;
  Vec x0;
  bool rgd = false;
  SolverRunConfig solver;
  RGDConfig rgd_config;
  std::optional<ConstantRegistry> registry;
  std::string registry_source;  // "analytic", "estimated" or "none"
  std::vector<std::pair<std::string, std::string>> echo;
  std::string method;
};

namespace experiment_detail {

inline std::string fmt(double v) { return config_detail::format_double(v); }

/// Sampled estimates of L_f, L_h and B_f in a small neighborhood of x0.
inline ConstantRegistry estimate_constants(const ProblemInstance& p, const Vec& x0,
                                           std::uint64_t seed, int samples = 100) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<Vec> pts;
  const double scale = 1e-2 * std::max(1.0, x0.norm() / std::sqrt(static_cast<double>(x0.size())));
  for (int tries = 0; static_cast<int>(pts.size()) < samples && tries < 20 * samples; ++tries) {
    Vec z(p.n);
    for (Index i = 0; i < p.n; ++i) z[i] = nd(rng);
    Vec x = x0 + scale * z;
    if (in_safety_region(p, x)) pts.push_back(std::move(x));
  }
  ConstantRegistry r;
  r.r1 = p.safety_radius;
  r.L_f = estimate_lipschitz([&](const Vec& x) { return eval_gradient(p, x); }, pts);
  r.L_h = estimate_lipschitz(
      [&](const Vec& x) {
        const Mat J = eval_jacobian(p, x);
        return Vec(Eigen::Map<const Vec>(J.data(), J.size()));
      },
      pts);
  r.B_f = estimate_gradient_bound(p, pts);
  return r;
}

inline FieldKind parse_field(const std::string& s) {
  if (s == "odcgm") return FieldKind::ODCGM;
  if (s == "reduced") return FieldKind::Reduced;
  if (s == "godcgm") return FieldKind::GeometryAware;
  if (s == "landing") return FieldKind::LandingStiefel;
  throw ConfigurationError("unknown field '" + s + "'");
}

}  // namespace experiment_detail

/// Builds the problem, starting point and solver settings for one seed.
/// Config values override the preset defaults.
inline ResolvedRun resolve(const ExperimentConfig& cfg, std::uint64_t seed) {
  using experiment_detail::fmt;
  const auto& P = cfg.problem;
  const auto& S = cfg.solver;
  ResolvedRun out;
  auto echo = [&](const std::string& k, const std::string& v) { out.echo.emplace_back(k, v); };

  const std::string field_name = S.field.value_or("odcgm");
  out.rgd = field_name.rfind("rgd-", 0) == 0;
  const std::string& preset = P.preset;
  const bool is_chain = preset == "chain" || preset == "chain-large";
  const bool is_procrustes = preset == "procrustes-small" || preset == "procrustes-large";

  // Preset defaults.
  double r1 = 0.5, alpha = 1.0, gamma = 0.05;
  std::string rule = "constant", step = "constant";
  double decay_exponent = 0.5, decay_offset = 0.0;
  double reduced_alpha = 1.0;
  std::int64_t max_iters = 100;
  if (is_procrustes) {
    alpha = 5.0;
    gamma = 1e-2;
    max_iters = 10000;
    reduced_alpha = 5.0;
    if (field_name == "reduced") {
      step = "poly";
      decay_exponent = 1.0 / 3.0;
    }
  } else if (is_chain) {
    const double T = 0.1 / 100.0;
    r1 = 1.0;
    rule = "mj";
    alpha = 0.05 / T;
    gamma = T;
    max_iters = 10000;
    reduced_alpha = 0.05 / T;
    if (field_name == "reduced") {
      step = "poly";
      decay_offset = 100.0;
    }
  }
  r1 = P.r1.value_or(r1);
  alpha = S.alpha.value_or(alpha);
  rule = S.rule.value_or(rule);
  step = S.step.value_or(step);
  gamma = S.gamma.value_or(gamma);
  decay_exponent = S.decay_exponent.value_or(decay_exponent);
  decay_offset = S.decay_offset.value_or(decay_offset);
  reduced_alpha = S.reduced_alpha.value_or(reduced_alpha);
  max_iters = S.max_iters.value_or(max_iters);
  const double sigma = S.sigma.value_or(0.0);
  const std::string noise = S.noise.value_or("none");
  const std::uint64_t instance_seed = P.instance_seed.value_or(seed);
  echo("preset", preset);
  echo("seed", std::to_string(seed));

  // Problem and starting point.
  if (preset == "sphere") {
    const Index n = P.n.value_or(2);
    if (n < 2) throw ConfigurationError("sphere needs n >= 2");
    const Vec c = Vec::Ones(n);
    out.problem = make_sphere(n, c, r1, noise == "oracle" ? sigma : 0.0);
    const double offset = P.start_offset.value_or(0.2);
    out.x0 = Vec::Zero(n);
    out.x0[0] = 1.0 + offset;
    echo("n", std::to_string(n));
    echo("c", "ones");
    if (rule == "constant" && r1 < 1) {
      out.registry = sphere_constants(c, r1, alpha);
      out.registry_source = "analytic";
    }
  } else if (is_procrustes) {
    const bool small = preset == "procrustes-small";
    const Index p = P.p.value_or(small ? 60 : 1000);
    const Index q = P.q.value_or(small ? 40 : 500);
    if (p < q || q < 1) throw ConfigurationError("Procrustes preset needs p >= q >= 1");
    const ProcrustesData data = random_procrustes_data(p, q, derive_seed(instance_seed, kInstanceStream));
    out.problem = make_procrustes(data.A, data.B, r1);
    std::mt19937_64 rng(derive_seed(instance_seed, kInstanceStream + 3));
    const Mat Q = random_stiefel(p, q, rng);
    const double offset = P.start_offset.value_or(0.01);
    Mat X0 = Q + offset / std::sqrt(static_cast<double>(p)) * random_gaussian(p, q, 1.0, rng);
    if (out.rgd) X0 = qr_retraction(X0);
    out.x0 = stiefel::flatten(X0);
    echo("p", std::to_string(p));
    echo("q", std::to_string(q));
    echo("instance_seed", std::to_string(instance_seed));
    if (rule == "constant" && r1 < 1) {
      out.registry = procrustes_constants(data.A, data.B, r1, alpha);
      out.registry_source = "analytic";
    }
  } else if (is_chain) {
    const Index N = P.N.value_or(preset == "chain" ? 20 : 10000);
    out.problem = make_chain(N, r1);
    out.x0 = chain_initializer(N);
    echo("N", std::to_string(N));
    if (N <= 1000) {
      out.registry = experiment_detail::estimate_constants(out.problem, out.x0,
                                                           derive_seed(seed, kInstanceStream));
      out.registry_source = "estimated";
    }
  } else {
    throw ConfigurationError("unknown preset '" + preset + "'");
  }
  if (!out.registry) out.registry_source = "none";
  echo("r1", fmt(r1));

  if (out.rgd) {
    if (!out.problem.stiefel) throw ConfigurationError("RGD fields need a Stiefel preset");
    out.rgd_config.step = gamma;
    out.rgd_config.metric = field_name == "rgd-euclidean" ? RgdMetric::Euclidean : RgdMetric::Canonical;
    out.rgd_config.max_iters = max_iters;
    out.rgd_config.snapshot_stride = S.snapshot_stride.value_or(max_iters);
    out.method = cfg.output.label.value_or(field_name);
    echo("field", field_name);
    echo("gamma", fmt(gamma));
    echo("max_iters", std::to_string(max_iters));
    return out;
  }

  SolverRunConfig& sc = out.solver;
  sc.field = experiment_detail::parse_field(field_name);
  // The geometry-aware field on the Stiefel manifold with the canonical
  // metric is the landing field; lambda plays the role of alpha.
  if (sc.field == FieldKind::GeometryAware && out.problem.stiefel) sc.field = FieldKind::LandingStiefel;
  if (rule == "constant")
    sc.rule = VanillaConstant{alpha};
  else
    sc.rule = MoorePenroseMJ{alpha};
  sc.reduced_alpha = reduced_alpha;
  sc.landing_lambda = S.landing_lambda.value_or(alpha);
  sc.max_iters = max_iters;
  sc.stop_of_norm = S.stop_of_norm.value_or(0.0);
  sc.merit.M = S.merit_M.value_or(out.registry && out.registry->M_bar ? *out.registry->M_bar : 0.0);
  sc.snapshot_stride = S.snapshot_stride.value_or(std::max<std::int64_t>(1, max_iters));
  if (!out.problem.stiefel) sc.reduced_M_h = out.registry && out.registry->M_h ? *out.registry->M_h : 1.0;

  if (step == "constant") {
    sc.step = ConstantStep{gamma};
  } else if (step == "poly") {
    sc.step = PolyDecayStep{gamma, decay_exponent, decay_offset};
  } else {
    if (!out.registry) throw ConfigurationError("theorem step needs constants; preset has none");
    TheoremStep t;
    t.mode = S.theorem_mode.value_or("deterministic") == "stochastic" ? RateMode::Stochastic
                                                                      : RateMode::Deterministic;
    t.registry = *out.registry;
    t.M = sc.merit.M;
    t.horizon = S.horizon.value_or(max_iters);
    t.d_bar = S.d_bar.value_or(1.0);
    t.sigma = sigma;
    sc.step = t;
  }

  const std::uint64_t noise_seed = derive_seed(seed, kNoiseStream);
  if (noise == "gaussian")
    sc.noise = GaussianTangent{sigma, noise_seed};
  else if (noise == "oracle")
    sc.noise = OracleNoise{noise_seed};

  // Procrustes presets keep the nominal step but halve it whenever an
  // iterate would leave K (the landing field's first steps do at gamma = 1e-2).
  const std::string guard = S.guard.value_or(is_procrustes ? "halving" : "default");
  if (guard == "off")
    sc.guard = GuardOff{};
  else if (guard == "assert")
    sc.guard = GuardAssert{};
  else if (guard == "halving")
    sc.guard = SafeStepHalving{S.gamma_bar.value_or(is_procrustes ? gamma : 1.0)};

  out.method = cfg.output.label.value_or(field_name);
  echo("field", to_string(sc.field));
  echo("rule", rule == "constant" ? "A(x) = " + fmt(alpha) + " I"
                                  : "A(x) = " + fmt(alpha) + " (grad_h^T grad_h)^-1");
  echo("step", step);
  echo("gamma", fmt(step_size(sc.step, 0, sc.field)));
  if (step == "poly") {
    echo("decay_exponent", fmt(decay_exponent));
    echo("decay_offset", fmt(decay_offset));
  }
  if (sc.field == FieldKind::Reduced) echo("reduced_alpha", fmt(reduced_alpha));
  if (sc.field == FieldKind::LandingStiefel) echo("landing_lambda", fmt(sc.landing_lambda));
  echo("noise", noise);
  if (noise != "none") echo("sigma", fmt(sigma));
  echo("guard", guard);
  if (guard == "halving") echo("gamma_bar", fmt(std::get<SafeStepHalving>(*sc.guard).gamma_bar));
  echo("merit_M", fmt(sc.merit.M));
  echo("max_iters", std::to_string(max_iters));
  return out;
}

inline IterateTrace execute(const ResolvedRun& r) {
  if (r.rgd) return rgd_run(r.problem, r.rgd_config, r.x0);
  return run(r.problem, r.solver, r.x0);
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

/// Rows kept when thinning a trace: every stride-th k and the final record.
inline std::vector<std::size_t> thinned_rows(const IterateTrace& t, Index stride) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < t.records.size(); ++i)
    if (t.records[i].k % stride == 0 || i + 1 == t.records.size()) rows.push_back(i);
  return rows;
}

inline std::string trace_csv(const IterateTrace& t, Index stride = 1) {
  std::string out = std::string(kTraceHeader) + "\n";
  char buf[512];
  for (std::size_t i : thinned_rows(t, stride)) {
    const auto& r = t.records[i];
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.6f\n",
                  static_cast<long long>(r.k), r.f, r.h_norm, r.field_norm, r.tangent_norm,
                  r.merit, r.step, r.elapsed_s);
    out += buf;
  }
  return out;
}

struct AggregateRow {
  Index k = 0;
  int runs = 0;
  double mean[3] = {0, 0, 0};    // f, h_norm, field_norm
  double stderr_[3] = {0, 0, 0};
};

/// Mean and standard error over runs of f, h_norm and field_norm at each
/// thinned k, in seed order.
inline std::vector<AggregateRow> aggregate(const std::vector<IterateTrace>& traces, Index stride) {
  std::map<Index, std::vector<const IterateRecord*>> by_k;
  for (const auto& t : traces)
    for (std::size_t i : thinned_rows(t, stride)) by_k[t.records[i].k].push_back(&t.records[i]);
  std::vector<AggregateRow> rows;
  for (const auto& [k, recs] : by_k) {
    AggregateRow row;
    row.k = k;
    row.runs = static_cast<int>(recs.size());
    for (int qi = 0; qi < 3; ++qi) {
      auto value = [qi](const IterateRecord* r) {
        return qi == 0 ? r->f : qi == 1 ? r->h_norm : r->field_norm;
      };
      double sum = 0;
      for (const auto* r : recs) sum += value(r);
      const double mean = sum / row.runs;
      double ss = 0;
      for (const auto* r : recs) ss += (value(r) - mean) * (value(r) - mean);
      row.mean[qi] = mean;
      row.stderr_[qi] = row.runs > 1 ? std::sqrt(ss / (row.runs - 1) / row.runs) : 0.0;
    }
    rows.push_back(row);
  }
  return rows;
}

inline std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::string out = std::string(kAggregateHeader) + "\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%lld,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<long long>(r.k), r.runs, r.mean[0], r.stderr_[0], r.mean[1],
                  r.stderr_[1], r.mean[2], r.stderr_[2]);
    out += buf;
  }
  return out;
}

namespace experiment_detail {

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << content;
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

/// Write to a temporary sibling and rename over the target.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = path.string() + ".tmp";
  write_file(tmp, content);
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigurationError("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace experiment_detail

// ---------------------------------------------------------------------------
// Experiment execution
// ---------------------------------------------------------------------------

struct RunOptions {
  int jobs = 1;
  std::optional<std::string> output_dir;
  std::optional<std::int64_t> seed_count;  // replaces an explicit seed list
};

struct RunSummary {
  std::uint64_t seed = 0;
  RunStatus status = RunStatus::BudgetExhausted;
  std::string message;
  Index iterations = 0;
  double final_f = 0, final_h_norm = 0, final_field_norm = 0;
  double wall_s = 0;
  std::size_t halvings = 0;
};

struct RunManifest {
  nlohmann::json json;
  std::filesystem::path path;
  std::vector<RunSummary> runs;
  int exit_code = 0;  // 0 all runs succeeded, 2 some run failed
};

/// Applies the CLI overrides to a parsed config.
inline ExperimentConfig apply_options(ExperimentConfig cfg, const RunOptions& opt) {
  if (opt.output_dir) cfg.output.dir = *opt.output_dir;
  if (opt.seed_count) {
    if (*opt.seed_count < 1) throw ConfigurationError("seed count must be >= 1");
    cfg.output.seed_count = *opt.seed_count;
    if (cfg.output.seeds) {
      cfg.output.seed_root = cfg.output.seeds->front();
      cfg.output.seeds.reset();
    }
  }
  return cfg;
}

/// Runs every seed, writes trace_<seed>.csv, aggregate.csv and manifest.json
/// into the output directory. Configuration problems throw ConfigurationError
/// before any run starts.
inline RunManifest run_experiment(const ExperimentConfig& raw, const RunOptions& opt = {}) {
  namespace fs = std::filesystem;
  const ExperimentConfig cfg = apply_options(raw, opt);
  const auto seeds = cfg.seed_list();
  if (seeds.empty()) throw ConfigurationError("no seeds");
  const std::int64_t stride = cfg.output.stride.value_or(1);
  if (stride < 1) throw ConfigurationError("output stride must be >= 1");
  if (opt.jobs < 1) throw ConfigurationError("--jobs must be >= 1");
  const fs::path dir = cfg.output.dir.value_or("out");

  // Resolve the first seed up front so configuration errors surface early.
  const ResolvedRun first = resolve(cfg, seeds.front());
  fs::create_directories(dir);

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<IterateTrace> traces(seeds.size());
  std::vector<RunSummary> summaries(seeds.size());
  std::vector<std::string> errors(seeds.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&]() {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      const auto ts = std::chrono::steady_clock::now();
      RunSummary& s = summaries[i];
      s.seed = seeds[i];
      try {
        const ResolvedRun r = i == 0 ? first : resolve(cfg, seeds[i]);
        traces[i] = execute(r);
        experiment_detail::write_file(dir / ("trace_" + std::to_string(seeds[i]) + ".csv"),
                                      trace_csv(traces[i], stride));
      } catch (const std::exception& e) {
        traces[i].status = RunStatus::NumericalFailure;
        traces[i].message = e.what();
      }
      const auto& t = traces[i];
      s.status = t.status;
      s.message = t.message;
      s.halvings = t.halvings.size();
      if (!t.records.empty()) {
        const auto& last = t.records.back();
        s.iterations = last.k;
        s.final_f = last.f;
        s.final_h_norm = last.h_norm;
        s.final_field_norm = last.field_norm;
      }
      s.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - ts).count();
    }
  };
  const int nthreads = std::min<int>(opt.jobs, static_cast<int>(seeds.size()));
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < nthreads; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  experiment_detail::write_file(dir / "aggregate.csv", aggregate_csv(aggregate(traces, stride)));

  RunManifest m;
  m.runs = summaries;
  nlohmann::json j;
  j["version"] = kVersion;
  j["method"] = first.method;
  j["config"] = to_text(cfg);
  j["seeds"] = seeds;
  j["stride"] = stride;
  nlohmann::json resolved = nlohmann::json::object();
  for (const auto& [k, v] : first.echo)
    if (k != "seed") resolved[k] = v;
  j["resolved"] = resolved;
  nlohmann::json reg = nlohmann::json::object();
  if (first.registry) first.registry->for_each([&](const char* name, double v) { reg[name] = v; });
  j["registry"] = reg;
  j["registry_source"] = first.registry_source;
  if (first.rgd) j["notes"] = "RGD step size is not given for this baseline; the ODCGM step is reused";
  j["aggregate_file"] = "aggregate.csv";
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& s : summaries) {
    runs.push_back({{"seed", s.seed},
                    {"trace_file", "trace_" + std::to_string(s.seed) + ".csv"},
                    {"status", to_string(s.status)},
                    {"message", s.message},
                    {"iterations", s.iterations},
                    {"final_f", s.final_f},
                    {"final_h_norm", s.final_h_norm},
                    {"final_field_norm", s.final_field_norm},
                    {"halvings", s.halvings},
                    {"wall_s", s.wall_s}});
    if (s.status == RunStatus::NumericalFailure || s.status == RunStatus::LeftRegion)
      m.exit_code = 2;
  }
  j["runs"] = runs;
  j["wall_clock_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  m.json = j;
  m.path = dir / "manifest.json";
  experiment_detail::write_atomic(m.path, j.dump(2) + "\n");
  return m;
}

/// Long-format plot data (method,k,mean,stderr) for one of f, h_norm or
/// field_norm, read from the aggregate file named in the manifest.
inline std::string emit_plot_data(const std::filesystem::path& manifest_path,
                                  const std::string& quantity) {
  int col;
  if (quantity == "f")
    col = 0;
  else if (quantity == "h_norm")
    col = 1;
  else if (quantity == "field_norm")
    col = 2;
  else
    throw ConfigurationError("unknown quantity '" + quantity + "' (expected f, h_norm or field_norm)");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(experiment_detail::read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigurationError(std::string("malformed manifest: ") + e.what());
  }
  const std::string method = j.at("method").get<std::string>();
  const auto agg_path = manifest_path.parent_path() / j.at("aggregate_file").get<std::string>();
  std::istringstream in(experiment_detail::read_file(agg_path));
  std::string line;
  std::getline(in, line);
  if (line != kAggregateHeader) throw ConfigurationError("unexpected aggregate header");
  std::string out = std::string(kPlotHeader) + "\n";
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) throw ConfigurationError("malformed aggregate row");
    out += method + "," + cells[0] + "," + cells[2 + 2 * col] + "," + cells[3 + 2 * col] + "\n";
  }
  return out;
}

}  // namespace orthodir
