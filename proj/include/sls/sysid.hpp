#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sls/lti.hpp"
#include "sls/types.hpp"

namespace sls {

inline constexpr int kRolloutSchemaVersion = 1;

// N independent rollouts of length T started from the origin.
struct RolloutData {
  int N = 0;
  int T = 0;
  Eigen::Index n = 0;
  Eigen::Index p = 0;
  std::uint64_t seed = 0;
  NoiseSpec noise;
  // states[l] has T+1 columns (x_0..x_T); inputs[l] has T columns.
  std::vector<MatrixXd> states;
  std::vector<MatrixXd> inputs;
  // Recorded only by the simulator; estimation paths never read them.
  std::vector<MatrixXd> noises;

  void validate() const;
};

enum class LsMode { full, last_sample };

enum class ErrorSource { theory_independent, data_dependent, bootstrap, oracle };

std::string to_string(ErrorSource s);

// Estimated pair plus operator-norm error radii.
struct EstimateWithError {
  MatrixXd A_hat;
  MatrixXd B_hat;
  double eps_A = 0.0;
  double eps_B = 0.0;
  ErrorSource source = ErrorSource::oracle;

  Eigen::Index n() const { return A_hat.rows(); }
  Eigen::Index p() const { return B_hat.cols(); }
  LinearSystem nominal() const { return LinearSystem(A_hat, B_hat); }
};

// Stacked regression data: rows of Z are [x_t' u_t'], X_next the matching
// next states.
struct RegressionMatrices {
  MatrixXd Z;
  MatrixXd X_next;
  LsMode mode = LsMode::full;
};

RolloutData simulate_rollouts(const LinearSystem& sys, const NoiseSpec& noise, int N, int T,
                              std::uint64_t seed, bool record_noises = false);

RegressionMatrices regression_matrices(const RolloutData& data, LsMode mode);

// Least-squares fit of (A, B); throws when the design is rank deficient.
std::pair<MatrixXd, MatrixXd> ls_estimate(const RolloutData& data, LsMode mode);

struct TheoryBound {
  double eps_A;
  double eps_B;
  double min_samples;  // 8(n+p) + 16 log(4/delta)
};

// Last-sample high-probability bound; requires N above the sample threshold.
TheoryBound theory_bound_independent(double lambda_g, int n, int p, int N, double delta,
                                     const NoiseSpec& noise);

struct DataDependentBound {
  MatrixXd dominator;  // C(n,p,delta) * (sum z z')^{-1}
  double eps_A;
  double eps_B;
};

// Prop-style data-dependent bound from independent samples (y, x, u) with
// y = Ax + Bu + w.  Rows of zs are [x' u'].
DataDependentBound data_dependent_bound(const MatrixXd& zs, double delta, double sigma_w, int n,
                                        int p);

// Columnar CSV (rollout, t, x_1..x_n, u_1..u_p) plus a JSON header carrying
// dimensions, seed, and noise levels.
void save_rollouts_csv(const RolloutData& data, const std::string& csv_path,
                       const std::string& header_path);
RolloutData load_rollouts_csv(const std::string& csv_path, const std::string& header_path);

}  // namespace sls
