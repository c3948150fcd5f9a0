// Command-line front end: run experiments, validate configs, emit plot data.

#include "orthodir.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

orthodir::ExperimentConfig load(const std::string& path) {
  return orthodir::parse_config(orthodir::experiment_detail::read_file(path));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Infeasible orthogonal-directions solvers for equality-constrained problems"};
  app.require_subcommand(1);

  orthodir::RunOptions opts;
  std::string config_path, manifest_path, quantity;
  int jobs = 1;
  std::string output_dir;
  std::int64_t seed_count = 0;

  auto* run = app.add_subcommand("run", "Run an experiment config");
  run->add_option("config", config_path, "Config file")->required();
  run->add_option("--jobs", jobs, "Seeds run in parallel")->check(CLI::PositiveNumber);
  run->add_option("--output-dir", output_dir, "Override [output] dir");
  run->add_option("--seed-count", seed_count, "Run seeds root..root+count-1")->check(CLI::PositiveNumber);

  auto* validate = app.add_subcommand("validate", "Parse and resolve a config without running");
  validate->add_option("config", config_path, "Config file")->required();

  auto* plot = app.add_subcommand("plot-data", "Long-format CSV (method,k,mean,stderr) on stdout");
  plot->add_option("manifest", manifest_path, "manifest.json of a finished run")->required();
  plot->add_option("quantity", quantity, "f, h_norm or field_norm")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) {
      opts.jobs = jobs;
      if (!output_dir.empty()) opts.output_dir = output_dir;
      if (seed_count > 0) opts.seed_count = seed_count;
      const auto m = orthodir::run_experiment(load(config_path), opts);
      for (const auto& r : m.runs) {
        std::cout << "seed " << r.seed << ": " << orthodir::to_string(r.status) << " after "
                  << r.iterations << " iterations, f = " << r.final_f
                  << ", |h| = " << r.final_h_norm;
        if (!r.message.empty()) std::cout << " (" << r.message << ")";
        std::cout << "\n";
      }
      std::cout << "manifest: " << m.path.string() << "\n";
      return m.exit_code;
    }
    if (*validate) {
      const auto cfg = load(config_path);
      const auto seeds = cfg.seed_list();
      if (seeds.empty()) throw orthodir::ConfigurationError("no seeds");
      const auto r = orthodir::resolve(cfg, seeds.front());
      std::cout << orthodir::to_text(cfg) << "\n# resolved\n";
      for (const auto& [k, v] : r.echo) std::cout << k << " = " << v << "\n";
      std::cout << "seeds = " << seeds.size() << "\n";
      return 0;
    }
    std::cout << orthodir::emit_plot_data(manifest_path, quantity);
    return 0;
  } catch (const orthodir::ConfigurationError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
