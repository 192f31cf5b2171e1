#pragma once

#include "sls/types.hpp"

namespace sls {

// Systems with spectral radius below 1 - kStabilityMargin count as stable.
inline constexpr double kStabilityMargin = 1e-8;

struct DareResult {
  MatrixXd P;               // stabilizing Riccati solution
  StateFeedbackGain gain;   // K = -(R + B'PB)^{-1} B'PA
  double cost_per_sigma;    // trace(P); J* = sigma_w^2 * trace(P)
};

struct GramianResult {
  MatrixXd GG;       // sum_k A^k B B' A'^k, k < T
  MatrixXd FF;       // sum_k A^k A'^k, k < T
  double lambda_g;   // lambda_min(sigma_u^2 GG + sigma_w^2 FF)
};

double spectral_radius(const MatrixXd& M);

bool is_stable(const MatrixXd& M);

// Solves X = M X M' + W for stable M.  Throws if spectral_radius(M) >= 1.
MatrixXd dlyap(const MatrixXd& M, const MatrixXd& W);

// Stabilizing solution of the discrete algebraic Riccati equation via
// structure-preserving doubling, with a value-iteration fallback.
DareResult dare_lqr(const LinearSystem& sys, const CostWeights& cost);

// Steady-state LQR cost of u = Kx; +infinity when A + BK is not stable.
double lqr_cost_closed_loop(const LinearSystem& sys, const StateFeedbackGain& gain,
                            const CostWeights& cost, double sigma_w);

GramianResult gramians(const LinearSystem& sys, const NoiseSpec& noise, int T);

// Envelope with rho = (1 + spectral_radius(M))/2 and C the certified peak of
// ||M^t|| / rho^t over a horizon past the maximum.
DecayEnvelope decay_envelope(const MatrixXd& M);

}  // namespace sls
