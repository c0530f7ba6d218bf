#pragma once

// Run configuration: one JSON document, echoed into every run directory.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pje/density.hpp"
#include "pje/dichotomy.hpp"
#include "pje/errors.hpp"
#include "pje/estimates.hpp"
#include "pje/hierarchy.hpp"
#include "pje/solver.hpp"

namespace pje {

struct DensityConfig {
  std::vector<Rational> sigma{Rational(1)};  // base values on an n^d grid, n^d == sigma.size()
  int base_n = 1;
  int depth = 1;             // k0
  Rational eps{0};           // constraint slack
  int sample_cells = 144;    // sample CSV resolution per axis over [0,1]^d
};

struct VerifyConfig {
  int trials = 100;
  int grid_cells = 128;      // per axis on [0,1]^d
  double lip = 2.0;
  int sum_terms = 3;
};

struct ClassifyConfig {
  std::string map = "identity";  // identity | affine | random-sum
  int terms = 2;
  int grid_cells = 64;
};

struct RunConfig {
  HierarchyParams hierarchy{2, 6, 4, 2};
  DensityConfig density;
  TolerancePolicy tolerance;
  DichotomyParams dichotomy;
  SolverConfig solver;
  SweepConfig sweep;
  VerifyConfig verify;
  ClassifyConfig classify;
  std::string output_dir = "runs";
  std::uint64_t seed = 1;
  int threads = 1;

  BaseField base() const {
    BaseField b{hierarchy.d, density.base_n, density.sigma};
    b.validate();
    return b;
  }

  void validate() const {
    hierarchy.validate();
    base();
    if (density.depth < 0 || density.depth > hierarchy.k_max) throw ConfigError("density.depth outside [0, k_max]");
    if (density.eps.sign() < 0) throw ConfigError("density.eps must be >= 0");
    if (density.sample_cells < 1) throw ConfigError("density.sample_cells must be >= 1");
    dichotomy.validate();
    if (dichotomy.k0 > hierarchy.k_max) throw ConfigError("dichotomy.k0 exceeds k_max");
    solver.validate();
    sweep.validate();
    if (verify.trials < 1 || verify.grid_cells < 2 || !(verify.lip > 0) || verify.sum_terms < 1)
      throw ConfigError("verify: invalid trials, grid_cells, lip or sum_terms");
    if (classify.map != "identity" && classify.map != "affine" && classify.map != "random-sum")
      throw ConfigError("classify.map must be identity, affine or random-sum");
    if (classify.terms < 1 || classify.grid_cells < 2) throw ConfigError("classify: invalid terms or grid_cells");
    if (threads < 1) throw ConfigError("threads must be >= 1");
  }
};

namespace detail {

inline nlohmann::json rationals_to_json(const std::vector<Rational>& v) {
  auto j = nlohmann::json::array();
  for (const auto& q : v) j.push_back(q.fraction_str());
  return j;
}

// Rationals may be given as strings ("1/3") or integers.
inline Rational rational_from_json(const nlohmann::json& j) {
  if (j.is_string()) return Rational::parse(j.get<std::string>());
  if (j.is_number_integer()) return Rational(j.get<long>());
  throw ConfigError("expected a rational as string or integer, got " + j.dump());
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void read_rational(const nlohmann::json& j, const char* key, Rational& out) {
  if (j.contains(key)) out = rational_from_json(j.at(key));
}

}  // namespace detail

inline nlohmann::json to_json(const SolverConfig& s) {
  return {{"lip_budget", s.lip_budget},
          {"max_iters", s.max_iters},
          {"step", s.step},
          {"step_shrink", s.step_shrink},
          {"min_step", s.min_step},
          {"lbfgs_memory", s.lbfgs_memory},
          {"feasibility_sweeps", s.feasibility_sweeps},
          {"seed", s.seed},
          {"residual_target", s.residual_target},
          {"stall_tol", s.stall_tol},
          {"stall_iters", s.stall_iters},
          {"init_noise", s.init_noise},
          {"projection",
           {{"max_sweeps", s.projection.max_sweeps},
            {"rel_tol", s.projection.rel_tol},
            {"undershoot", s.projection.undershoot},
            {"global_fallback", s.projection.global_fallback}}}};
}

inline void from_json(const nlohmann::json& j, SolverConfig& s) {
  using detail::read;
  read(j, "lip_budget", s.lip_budget);
  read(j, "max_iters", s.max_iters);
  read(j, "step", s.step);
  read(j, "step_shrink", s.step_shrink);
  read(j, "min_step", s.min_step);
  read(j, "lbfgs_memory", s.lbfgs_memory);
  read(j, "feasibility_sweeps", s.feasibility_sweeps);
  read(j, "seed", s.seed);
  read(j, "residual_target", s.residual_target);
  read(j, "stall_tol", s.stall_tol);
  read(j, "stall_iters", s.stall_iters);
  read(j, "init_noise", s.init_noise);
  if (j.contains("projection")) {
    const auto& p = j.at("projection");
    read(p, "max_sweeps", s.projection.max_sweeps);
    read(p, "rel_tol", s.projection.rel_tol);
    read(p, "undershoot", s.projection.undershoot);
    read(p, "global_fallback", s.projection.global_fallback);
  }
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["hierarchy"] = c.hierarchy;
  j["density"] = {{"sigma", detail::rationals_to_json(c.density.sigma)},
                  {"base_n", c.density.base_n},
                  {"depth", c.density.depth},
                  {"eps", c.density.eps.fraction_str()},
                  {"sample_cells", c.density.sample_cells}};
  j["tolerance"] = {{"slack_factor", c.tolerance.slack_factor}, {"affine", c.tolerance.affine},
                    {"regularize", c.tolerance.regularize},     {"idempotence", c.tolerance.idempotence},
                    {"embedding", c.tolerance.embedding},       {"projection", c.tolerance.projection}};
  j["dichotomy"] = {{"eps", c.dichotomy.eps.fraction_str()},
                    {"phi", c.dichotomy.phi.fraction_str()},
                    {"k0", c.dichotomy.k0},
                    {"L", c.dichotomy.L},
                    {"samples_per_side", c.dichotomy.samples_per_side}};
  j["solver"] = to_json(c.solver);
  j["sweep"] = {{"hierarchy", c.sweep.hierarchy},
                {"depths", c.sweep.depths},
                {"budgets", c.sweep.budgets},
                {"cells_per_leaf", c.sweep.cells_per_leaf},
                {"window_order", c.sweep.window_order},
                {"record_timing", c.sweep.record_timing},
                {"solver", to_json(c.sweep.solver)}};
  j["verify"] = {{"trials", c.verify.trials},
                 {"grid_cells", c.verify.grid_cells},
                 {"lip", c.verify.lip},
                 {"sum_terms", c.verify.sum_terms}};
  j["classify"] = {{"map", c.classify.map}, {"terms", c.classify.terms}, {"grid_cells", c.classify.grid_cells}};
  j["output_dir"] = c.output_dir;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  return j;
}

inline RunConfig default_sweep_run_config() {
  RunConfig c;
  c.sweep.solver.max_iters = 2000;
  return c;
}

// Missing keys keep their defaults. Unknown top-level keys are rejected.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known{"hierarchy", "density", "tolerance", "dichotomy", "solver", "sweep",
                                              "verify",    "classify", "output_dir", "seed",      "threads"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown config key '" + key + "'");

  using detail::read;
  using detail::read_rational;
  RunConfig c = default_sweep_run_config();
  try {
    if (j.contains("hierarchy")) c.hierarchy = j.at("hierarchy").get<HierarchyParams>();
    if (j.contains("density")) {
      const auto& d = j.at("density");
      if (d.contains("sigma")) {
        c.density.sigma.clear();
        const auto& s = d.at("sigma");
        if (s.is_array())
          for (const auto& v : s) c.density.sigma.push_back(detail::rational_from_json(v));
        else
          c.density.sigma.push_back(detail::rational_from_json(s));
      }
      read(d, "base_n", c.density.base_n);
      read(d, "depth", c.density.depth);
      read_rational(d, "eps", c.density.eps);
      read(d, "sample_cells", c.density.sample_cells);
    }
    if (j.contains("tolerance")) {
      const auto& t = j.at("tolerance");
      read(t, "slack_factor", c.tolerance.slack_factor);
      read(t, "affine", c.tolerance.affine);
      read(t, "regularize", c.tolerance.regularize);
      read(t, "idempotence", c.tolerance.idempotence);
      read(t, "embedding", c.tolerance.embedding);
      read(t, "projection", c.tolerance.projection);
    }
    if (j.contains("dichotomy")) {
      const auto& d = j.at("dichotomy");
      read_rational(d, "eps", c.dichotomy.eps);
      read_rational(d, "phi", c.dichotomy.phi);
      read(d, "k0", c.dichotomy.k0);
      read(d, "L", c.dichotomy.L);
      read(d, "samples_per_side", c.dichotomy.samples_per_side);
    }
    if (j.contains("solver")) c.solver = j.at("solver").get<SolverConfig>();
    if (j.contains("sweep")) {
      const auto& s = j.at("sweep");
      if (s.contains("hierarchy")) c.sweep.hierarchy = s.at("hierarchy").get<HierarchyParams>();
      read(s, "depths", c.sweep.depths);
      read(s, "budgets", c.sweep.budgets);
      read(s, "cells_per_leaf", c.sweep.cells_per_leaf);
      read(s, "window_order", c.sweep.window_order);
      read(s, "record_timing", c.sweep.record_timing);
      if (s.contains("solver")) c.sweep.solver = s.at("solver").get<SolverConfig>();
    }
    if (j.contains("verify")) {
      const auto& v = j.at("verify");
      read(v, "trials", c.verify.trials);
      read(v, "grid_cells", c.verify.grid_cells);
      read(v, "lip", c.verify.lip);
      read(v, "sum_terms", c.verify.sum_terms);
    }
    if (j.contains("classify")) {
      const auto& v = j.at("classify");
      read(v, "map", c.classify.map);
      read(v, "terms", c.classify.terms);
      read(v, "grid_cells", c.classify.grid_cells);
    }
    read(j, "output_dir", c.output_dir);
    read(j, "seed", c.seed);
    read(j, "threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.sweep.threads = c.threads;
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace pje
