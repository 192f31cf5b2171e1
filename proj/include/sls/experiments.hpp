#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sls/synthesis.hpp"
#include "sls/sysid.hpp"
#include "sls/types.hpp"

namespace sls {

inline constexpr int kExperimentSchemaVersion = 1;

// Controller family evaluated per cell; parsed from "nominal", "cl",
// "fir(L)" or "fixed-gamma(g)".
struct MethodSpec {
  enum class Kind { nominal, cl, fir, fixed_gamma };
  Kind kind = Kind::nominal;
  int L = 32;            // fir only
  double gamma = 0.999;  // fixed_gamma only
};

MethodSpec parse_method(const std::string& text);
std::string to_string(const MethodSpec& m);

struct ExperimentConfig {
  LinearSystem system;  // explicit matrices or the named example instance
  CostWeights cost;
  NoiseSpec noise;
  std::vector<int> Ns;  // rollout-count sweep
  int T = 6;
  int trials = 20;
  std::vector<MethodSpec> methods;
  ErrorSource error_source = ErrorSource::bootstrap;
  int bootstrap_M = 200;
  double bootstrap_delta = 0.05;
  std::uint64_t seed = 0;
  std::string run_id = "run";
  std::string out_dir = ".";

  void validate() const;
};

ExperimentConfig experiment_config_from_json(const std::string& text);
std::string experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_experiment_config(const std::string& path);

// One (N, trial, method) outcome.  Costs are dimensional (sigma_w^2 applied);
// non-stabilizing controllers record infinite true_cost and rel_subopt.
struct CellResult {
  int N = 0;
  int trial = 0;
  MethodSpec method;
  ErrorSource source = ErrorSource::bootstrap;
  double eps_A = 0.0;
  double eps_B = 0.0;
  std::string status;  // feasible | infeasible | numerical_failure | error
  double gamma = 0.0;
  double alpha = 0.0;
  double nominal_cost = 0.0;
  double true_cost = 0.0;
  double J_star = 0.0;
  double rel_subopt = 0.0;
  bool stabilized = false;
  std::string error;  // per-cell failure detail; run continues
};

struct ExperimentTable {
  ExperimentConfig cfg;
  std::vector<CellResult> rows;

  bool any_hard_failure() const;
};

// Runs the full (N, trial) grid in parallel with per-cell derived seeds.
// Module errors are recorded in the affected rows, never thrown.
ExperimentTable run_experiment(const ExperimentConfig& cfg);

void save_table_csv(const ExperimentTable& table, const std::string& path);
ExperimentTable load_table_csv(const std::string& path);

// Writes results.csv plus the standard plots (estimation error, relative
// suboptimality, stabilization frequency) into table.cfg.out_dir.
std::vector<std::string> emit_report(const ExperimentTable& table);

// Median and quartiles over the extended reals (infinities participate).
double median_ext(std::vector<double> values);
double quantile_ext(std::vector<double> values, double q);

}  // namespace sls
