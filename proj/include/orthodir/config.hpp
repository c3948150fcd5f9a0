#pragma once

// Flat INI-style experiment configuration with [problem], [solver] and
// [output] sections. Unknown keys and malformed values are rejected with the
// offending line number.

#include "orthodir/core.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace orthodir {

struct ParseError : ConfigurationError {
  ParseError(int line, const std::string& what)
      : ConfigurationError("line " + std::to_string(line) + ": " + what), line(line) {}
  int line;
};

struct ProblemSection {
  std::string preset;
  std::optional<std::int64_t> n, p, q, N;
  std::optional<double> r1;
  std::optional<double> start_offset;  // sphere: |x0| - 1; procrustes: perturbation scale
  std::optional<std::uint64_t> instance_seed;

  bool operator==(const ProblemSection&) const = default;
};

struct SolverSection {
  std::optional<std::string> field, rule, step, noise, guard, theorem_mode;
  std::optional<double> alpha, reduced_alpha, landing_lambda, gamma, decay_exponent,
      decay_offset, d_bar, sigma, stop_of_norm, merit_M, gamma_bar;
  std::optional<std::int64_t> max_iters, horizon, snapshot_stride;

  bool operator==(const SolverSection&) const = default;
};

struct OutputSection {
  std::optional<std::string> dir, label;
  std::optional<std::vector<std::uint64_t>> seeds;
  std::optional<std::uint64_t> seed_root;
  std::optional<std::int64_t> seed_count, stride;

  bool operator==(const OutputSection&) const = default;
};

struct ExperimentConfig {
  ProblemSection problem;
  SolverSection solver;
  OutputSection output;

  bool operator==(const ExperimentConfig&) const = default;

  /// Seeds of the experiment: the explicit list, or seed_root + i.
  std::vector<std::uint64_t> seed_list() const {
    if (output.seeds) return *output.seeds;
    const std::uint64_t root = output.seed_root.value_or(0);
    const std::int64_t count = output.seed_count.value_or(1);
    std::vector<std::uint64_t> out;
    for (std::int64_t i = 0; i < count; ++i) out.push_back(root + static_cast<std::uint64_t>(i));
    return out;
  }
};

inline const std::vector<std::string>& known_presets() {
  static const std::vector<std::string> names = {
      "sphere", "procrustes-small", "procrustes-large", "chain", "chain-large"};
  return names;
}

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s, int line, const std::string& key) {
  std::size_t used = 0;
  double v;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ParseError(line, "key '" + key + "' expects a number, got '" + s + "'");
  }
  if (used != s.size()) throw ParseError(line, "key '" + key + "' expects a number, got '" + s + "'");
  return v;
}

inline std::int64_t parse_int(const std::string& s, int line, const std::string& key) {
  std::size_t used = 0;
  long long v;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    throw ParseError(line, "key '" + key + "' expects an integer, got '" + s + "'");
  }
  if (used != s.size()) throw ParseError(line, "key '" + key + "' expects an integer, got '" + s + "'");
  return v;
}

inline std::uint64_t parse_uint(const std::string& s, int line, const std::string& key) {
  if (s.empty() || s[0] == '-')
    throw ParseError(line, "key '" + key + "' expects a nonnegative integer, got '" + s + "'");
  std::size_t used = 0;
  unsigned long long v;
  try {
    v = std::stoull(s, &used);
  } catch (const std::exception&) {
    throw ParseError(line, "key '" + key + "' expects a nonnegative integer, got '" + s + "'");
  }
  if (used != s.size())
    throw ParseError(line, "key '" + key + "' expects a nonnegative integer, got '" + s + "'");
  return v;
}

struct KeyDef {
  std::string section, key;
  std::function<void(ExperimentConfig&, const std::string&, int)> set;
  std::function<std::optional<std::string>(const ExperimentConfig&)> get;
};

template <typename Sec>
KeyDef string_key(const char* section, const char* key, Sec ExperimentConfig::*sec,
                  std::optional<std::string> Sec::*field, std::vector<std::string> allowed) {
  return {section, key,
          [=](ExperimentConfig& c, const std::string& v, int line) {
            if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
              std::string opts;
              for (const auto& a : allowed) opts += (opts.empty() ? "" : ", ") + a;
              throw ParseError(line, "key '" + std::string(key) + "' must be one of: " + opts);
            }
            (c.*sec).*field = v;
          },
          [=](const ExperimentConfig& c) { return (c.*sec).*field; }};
}

template <typename Sec>
KeyDef double_key(const char* section, const char* key, Sec ExperimentConfig::*sec,
                  std::optional<double> Sec::*field) {
  return {section, key,
          [=](ExperimentConfig& c, const std::string& v, int line) {
            (c.*sec).*field = parse_double(v, line, key);
          },
          [=](const ExperimentConfig& c) -> std::optional<std::string> {
            const auto& f = (c.*sec).*field;
            if (!f) return std::nullopt;
            return format_double(*f);
          }};
}

template <typename Sec>
KeyDef int_key(const char* section, const char* key, Sec ExperimentConfig::*sec,
               std::optional<std::int64_t> Sec::*field) {
  return {section, key,
          [=](ExperimentConfig& c, const std::string& v, int line) {
            (c.*sec).*field = parse_int(v, line, key);
          },
          [=](const ExperimentConfig& c) -> std::optional<std::string> {
            const auto& f = (c.*sec).*field;
            if (!f) return std::nullopt;
            return std::to_string(*f);
          }};
}

template <typename Sec>
KeyDef uint_key(const char* section, const char* key, Sec ExperimentConfig::*sec,
                std::optional<std::uint64_t> Sec::*field) {
  return {section, key,
          [=](ExperimentConfig& c, const std::string& v, int line) {
            (c.*sec).*field = parse_uint(v, line, key);
          },
          [=](const ExperimentConfig& c) -> std::optional<std::string> {
            const auto& f = (c.*sec).*field;
            if (!f) return std::nullopt;
            return std::to_string(*f);
          }};
}

inline const std::vector<KeyDef>& key_table() {
  using EC = ExperimentConfig;
  using PS = ProblemSection;
  using SS = SolverSection;
  using OS = OutputSection;
  static const std::vector<KeyDef> table = [] {
    std::vector<KeyDef> t;
    t.push_back({"problem", "preset",
                 [](EC& c, const std::string& v, int line) {
                   const auto& names = known_presets();
                   if (std::find(names.begin(), names.end(), v) == names.end())
                     throw ParseError(line, "unknown preset '" + v + "'");
                   c.problem.preset = v;
                 },
                 [](const EC& c) -> std::optional<std::string> {
                   if (c.problem.preset.empty()) return std::nullopt;
                   return c.problem.preset;
                 }});
    t.push_back(int_key("problem", "n", &EC::problem, &PS::n));
    t.push_back(int_key("problem", "p", &EC::problem, &PS::p));
    t.push_back(int_key("problem", "q", &EC::problem, &PS::q));
    t.push_back(int_key("problem", "N", &EC::problem, &PS::N));
    t.push_back(double_key("problem", "r1", &EC::problem, &PS::r1));
    t.push_back(double_key("problem", "start_offset", &EC::problem, &PS::start_offset));
    t.push_back(uint_key("problem", "instance_seed", &EC::problem, &PS::instance_seed));

    t.push_back(string_key("solver", "field", &EC::solver, &SS::field,
                           {"odcgm", "reduced", "godcgm", "landing", "rgd-euclidean",
                            "rgd-canonical"}));
    t.push_back(string_key("solver", "rule", &EC::solver, &SS::rule, {"constant", "mj"}));
    t.push_back(double_key("solver", "alpha", &EC::solver, &SS::alpha));
    t.push_back(double_key("solver", "reduced_alpha", &EC::solver, &SS::reduced_alpha));
    t.push_back(double_key("solver", "landing_lambda", &EC::solver, &SS::landing_lambda));
    t.push_back(string_key("solver", "step", &EC::solver, &SS::step, {"constant", "poly", "theorem"}));
    t.push_back(double_key("solver", "gamma", &EC::solver, &SS::gamma));
    t.push_back(double_key("solver", "decay_exponent", &EC::solver, &SS::decay_exponent));
    t.push_back(double_key("solver", "decay_offset", &EC::solver, &SS::decay_offset));
    t.push_back(string_key("solver", "theorem_mode", &EC::solver, &SS::theorem_mode,
                           {"deterministic", "stochastic"}));
    t.push_back(int_key("solver", "horizon", &EC::solver, &SS::horizon));
    t.push_back(double_key("solver", "d_bar", &EC::solver, &SS::d_bar));
    t.push_back(string_key("solver", "noise", &EC::solver, &SS::noise, {"none", "gaussian", "oracle"}));
    t.push_back(double_key("solver", "sigma", &EC::solver, &SS::sigma));
    t.push_back(int_key("solver", "max_iters", &EC::solver, &SS::max_iters));
    t.push_back(double_key("solver", "stop_of_norm", &EC::solver, &SS::stop_of_norm));
    t.push_back(double_key("solver", "merit_M", &EC::solver, &SS::merit_M));
    t.push_back(string_key("solver", "guard", &EC::solver, &SS::guard,
                           {"default", "off", "assert", "halving"}));
    t.push_back(double_key("solver", "gamma_bar", &EC::solver, &SS::gamma_bar));
    t.push_back(int_key("solver", "snapshot_stride", &EC::solver, &SS::snapshot_stride));

    t.push_back(string_key("output", "dir", &EC::output, &OS::dir, {}));
    t.push_back(string_key("output", "label", &EC::output, &OS::label, {}));
    t.push_back({"output", "seeds",
                 [](EC& c, const std::string& v, int line) {
                   std::vector<std::uint64_t> seeds;
                   std::stringstream ss(v);
                   std::string item;
                   while (std::getline(ss, item, ',')) seeds.push_back(parse_uint(trim(item), line, "seeds"));
                   if (seeds.empty()) throw ParseError(line, "key 'seeds' is empty");
                   c.output.seeds = seeds;
                 },
                 [](const EC& c) -> std::optional<std::string> {
                   if (!c.output.seeds) return std::nullopt;
                   std::string s;
                   for (auto v : *c.output.seeds) s += (s.empty() ? "" : ", ") + std::to_string(v);
                   return s;
                 }});
    t.push_back(uint_key("output", "seed_root", &EC::output, &OS::seed_root));
    t.push_back(int_key("output", "seed_count", &EC::output, &OS::seed_count));
    t.push_back(int_key("output", "stride", &EC::output, &OS::stride));
    return t;
  }();
  return table;
}

}  // namespace config_detail

/// Parses the configuration text. Lines are `[section]`, `key = value`, blank,
/// or comments starting with '#' or ';'.
inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string raw, section;
  int line = 0, problem_line = 0;
  std::vector<std::string> seen;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = config_detail::trim(raw);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ParseError(line, "malformed section header");
      section = config_detail::trim(s.substr(1, s.size() - 2));
      if (section != "problem" && section != "solver" && section != "output")
        throw ParseError(line, "unknown section '" + section + "'");
      if (section == "problem" && problem_line == 0) problem_line = line;
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ParseError(line, "expected 'key = value'");
    const std::string key = config_detail::trim(s.substr(0, eq));
    const std::string value = config_detail::trim(s.substr(eq + 1));
    if (section.empty()) throw ParseError(line, "key '" + key + "' outside of a section");
    const auto& table = config_detail::key_table();
    const auto it = std::find_if(table.begin(), table.end(), [&](const auto& d) {
      return d.section == section && d.key == key;
    });
    if (it == table.end()) throw ParseError(line, "unknown key '" + key + "' in [" + section + "]");
    const std::string full = section + "." + key;
    if (std::find(seen.begin(), seen.end(), full) != seen.end())
      throw ParseError(line, "duplicate key '" + key + "'");
    seen.push_back(full);
    if (value.empty()) throw ParseError(line, "key '" + key + "' has no value");
    it->set(cfg, value, line);
  }
  if (cfg.problem.preset.empty())
    throw ParseError(problem_line, "missing required key 'preset' in [problem]");
  return cfg;
}

/// Canonical text form; parse_config(to_text(c)) == c.
inline std::string to_text(const ExperimentConfig& cfg) {
  std::string out;
  std::string current;
  for (const auto& d : config_detail::key_table()) {
    const auto v = d.get(cfg);
    if (!v) continue;
    if (d.section != current) {
      if (!current.empty()) out += "\n";
      out += "[" + d.section + "]\n";
      current = d.section;
    }
    out += d.key + " = " + *v + "\n";
  }
  return out;
}

}  // namespace orthodir
