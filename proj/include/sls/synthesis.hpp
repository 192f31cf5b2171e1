#pragma once

#include <string>
#include <vector>

#include "sls/lti.hpp"
#include "sls/state_space.hpp"
#include "sls/sysid.hpp"
#include "sls/types.hpp"

namespace sls {

// Length-L closed-loop response pair with tail slack V:
// [zI - A, -B] [Phi_x; Phi_u] = I + z^{-L} V.
struct FirResponse {
  int L = 0;
  std::vector<MatrixXd> Phi_x;  // n x n blocks, Phi_x[0] = I
  std::vector<MatrixXd> Phi_u;  // p x n blocks
  MatrixXd V;                   // n x n

  Eigen::Index n() const { return Phi_x.empty() ? 0 : Phi_x[0].rows(); }
  Eigen::Index p() const { return Phi_u.empty() ? 0 : Phi_u[0].rows(); }
  void validate() const;
};

enum class SynthesisStatus { feasible, infeasible, numerical_failure };

std::string to_string(SynthesisStatus s);

struct SynthesisResult {
  SynthesisStatus status = SynthesisStatus::numerical_failure;
  bool is_static = true;
  StateFeedbackGain gain;  // static controller (common-Lyapunov program)
  FirResponse response;    // dynamic controller (FIR program)
  double gamma_star = 0.0;
  double alpha = 0.5;
  // Certified worst-case LQR cost per unit noise variance (multiply by
  // sigma_w^2 for the dimensional cost).
  double robust_upper_bound = 0.0;
  // J(A_hat, B_hat, K) per unit noise variance.
  double nominal_cost = 0.0;
  std::string message;
};

struct GammaSearch {
  double lo = 0.0;
  double hi = 1.0 - 1e-4;
  double tol = 1e-3;          // golden-section width; ties toward smaller gamma
  int coarse_points = 10;     // bracketing grid before the golden section
  double hint = -1.0;         // when >= 0, search only near this gamma
  bool fixed = false;         // pin gamma to fixed_value
  double fixed_value = 0.999;
  bool nominal_objective = false;  // fixed-gamma variant: minimize nominal cost
  double solver_tol = 1e-6;
};

struct AlphaSearch {
  bool optimize = false;  // FIR only; the CL program always optimizes alpha
  double value = 0.5;
  double tol = 5e-2;
};

// H_alpha(Phi_x, Phi_u): H-infinity norm of the stacked weighted response
// [(eps_A/sqrt(alpha)) Phi_x ; (eps_B/sqrt(1-alpha)) Phi_u].
double halpha(const FirResponse& resp, double eps_A, double eps_B, double alpha);

// Static-gain robust synthesis via the common-Lyapunov SDP with an outer
// golden-section search on gamma; alpha is a decision variable per gamma.
SynthesisResult cl_synthesis(const EstimateWithError& est, const CostWeights& cost,
                             const GammaSearch& gamma = {});

// FIR robust synthesis.  The H-infinity constraint is enforced on an adaptive
// frequency grid and certified exactly on the returned response.
SynthesisResult fir_synthesis(const EstimateWithError& est, const CostWeights& cost, int L,
                              const GammaSearch& gamma = {}, const AlphaSearch& alpha = {});

// Internal-state controller realization of an FIR response via the innovation
// recursion w_hat_t = x_t - x_hat_t.
struct RealizedController {
  int L = 0;
  Eigen::Index n = 0, p = 0;
  MatrixXd A_K, B_K, C_K, D_K;  // u = C_K xi + D_K x; xi' = A_K xi + B_K x
  VectorXd state;

  void reset() { state.setZero(); }
  VectorXd step(const VectorXd& x);
  StateSpace controller_ss() const { return StateSpace{A_K, B_K, C_K, D_K}; }
};

RealizedController realize_controller(const FirResponse& resp);

// Steady-state cost of the dynamic controller on sys; +infinity if the
// augmented closed loop is unstable.
double closed_loop_nominal_cost(const LinearSystem& sys, const RealizedController& ctrl,
                                const CostWeights& cost, double sigma_w);

struct CertifyResult {
  bool certified = false;
  double h_value = 0.0;
  double cost_upper_bound = 0.0;
};

// Small-gain certificate on the nominal model: certified iff H < 1, with
// cost_upper_bound = J(A_hat, B_hat, K) / (1 - H).  Throws when the
// controller does not stabilize the nominal model.
CertifyResult certify_and_bound(const EstimateWithError& est, const StateFeedbackGain& K,
                                const CostWeights& cost, double alpha, double sigma_w);
CertifyResult certify_and_bound(const EstimateWithError& est, const FirResponse& resp,
                                const CostWeights& cost, double alpha, double sigma_w);

// Minimum FIR horizon ceil(4 log(C/zeta) / (1 - rho)); 0 when zeta >= C.
int fir_horizon_bound(const DecayEnvelope& env, double zeta);

enum class SuboptMode { infinite, fir };

// Relative-suboptimality bound 5*zeta (infinite) or 10*zeta (fir) with
// zeta = (eps_A + eps_B ||K*||) * resolvent_hinf; requires zeta < 1/5.
double suboptimality_calculator(double eps_A, double eps_B, const StateFeedbackGain& K_star,
                                double resolvent_hinf, SuboptMode which);

std::string synthesis_result_to_json(const SynthesisResult& result);
void save_fir_csv(const FirResponse& resp, const std::string& path);

}  // namespace sls
