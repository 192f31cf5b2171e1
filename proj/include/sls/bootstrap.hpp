#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sls/sysid.hpp"

namespace sls {

struct BootstrapConfig {
  int M = 100;                // trial count
  double delta = 0.05;        // confidence level
  std::uint64_t seed = 0;     // master seed for the synthetic streams
  NoiseSpec noise;            // sigma_u, sigma_w taken as known
  bool estimate_noise = false;  // plug-in residual-variance estimate of sigma_w

  void validate() const;
};

struct BootstrapResult {
  double eps_A = 0.0;
  double eps_B = 0.0;
  // Ascending per-trial deviations, kept for calibration plots.
  std::vector<double> trial_eps_A;
  std::vector<double> trial_eps_B;
};

// Order statistic at index ceil((1-delta) * M) of the ascending sort.
double nearest_rank_percentile(std::vector<double> values, double delta);

// Parametric bootstrap: re-simulate M synthetic datasets from (A_hat, B_hat)
// with fresh Gaussian inputs/noises, refit by full-data least squares, and
// return the 100(1-delta)-th percentiles of the deviations.  Deterministic in
// (data, estimate, cfg) independent of thread scheduling.
BootstrapResult bootstrap_errors(const RolloutData& data, const MatrixXd& A_hat,
                                 const MatrixXd& B_hat, const BootstrapConfig& cfg);

// Residual-variance plug-in estimate of sigma_w from a full-data fit.
double estimate_sigma_w(const RolloutData& data, const MatrixXd& A_hat, const MatrixXd& B_hat);

void save_bootstrap_trials_csv(const BootstrapResult& result, const std::string& path);

}  // namespace sls
