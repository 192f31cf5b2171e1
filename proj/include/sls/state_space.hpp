#pragma once

#include <vector>

#include "sls/types.hpp"

namespace sls {

// Discrete-time realization y = C (zI - A)^{-1} B u + D u.
struct StateSpace {
  MatrixXd A, B, C, D;

  Eigen::Index state_dim() const { return A.rows(); }
  Eigen::Index input_dim() const { return B.cols(); }
  Eigen::Index output_dim() const { return C.rows(); }

  // Frequency response C (e^{i theta} I - A)^{-1} B + D.
  Eigen::MatrixXcd eval(double theta) const;
};

// Resolvent (zI - M)^{-1} as a state-space system.
StateSpace resolvent_ss(const MatrixXd& M);

// Strictly proper FIR transfer sum_k z^{-k} coeffs[k-1] realized on a shift
// register of the input history.
StateSpace fir_ss(const std::vector<MatrixXd>& coeffs);

struct HinfOptions {
  double rel_tol = 1e-6;
  int grid_points = 512;
};

// H-infinity norm of a stable realization: grid warm start plus bisection
// with a symplectic-pencil unit-circle eigenvalue certificate.  The returned
// value is the certified upper end of the final bracket.
double hinf_norm(const StateSpace& ss, const HinfOptions& opt = {});

// H-infinity norm of an FIR transfer function given its Markov coefficients
// (starting at z^{-1}).  Certified by a Lipschitz-refined frequency grid.
double hinf_norm_fir(const std::vector<MatrixXd>& coeffs, double rel_tol = 1e-8);

// Squared H2 norm (equals the steady-state output power under unit white
// noise input).  Requires a stable A.
double h2_norm_sq(const StateSpace& ss);

}  // namespace sls
