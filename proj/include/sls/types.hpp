#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace sls {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// State-space pair x_{t+1} = A x_t + B u_t + w_t.
struct LinearSystem {
  MatrixXd A;  // n x n
  MatrixXd B;  // n x p

  LinearSystem() = default;
  LinearSystem(MatrixXd A_, MatrixXd B_) : A(std::move(A_)), B(std::move(B_)) {
    if (A.rows() != A.cols()) throw std::invalid_argument("LinearSystem: A must be square");
    if (B.rows() != A.rows()) throw std::invalid_argument("LinearSystem: B row count must match A");
    if (!A.allFinite() || !B.allFinite()) throw std::invalid_argument("LinearSystem: entries must be finite");
  }

  Eigen::Index n() const { return A.rows(); }
  Eigen::Index p() const { return B.cols(); }
};

// Quadratic stage cost x'Qx + u'Ru.  Q PSD, R PD.
struct CostWeights {
  MatrixXd Q;
  MatrixXd R;

  CostWeights() = default;
  CostWeights(MatrixXd Q_, MatrixXd R_);
};

// Input excitation and process noise standard deviations.
struct NoiseSpec {
  double sigma_u = 1.0;
  double sigma_w = 1.0;

  NoiseSpec() = default;
  NoiseSpec(double su, double sw) : sigma_u(su), sigma_w(sw) {
    if (!(sigma_u >= 0.0) || !(sigma_w >= 0.0))
      throw std::invalid_argument("NoiseSpec: standard deviations must be nonnegative");
  }
};

// Static feedback u = K x.
struct StateFeedbackGain {
  MatrixXd K;  // p x n

  StateFeedbackGain() = default;
  explicit StateFeedbackGain(MatrixXd K_) : K(std::move(K_)) {
    if (!K.allFinite()) throw std::invalid_argument("StateFeedbackGain: entries must be finite");
  }
};

// Certified pair (C, rho) with ||M^t|| <= C rho^t.
struct DecayEnvelope {
  double C = 1.0;
  double rho = 0.0;
};

// The marginally unstable graph-Laplacian benchmark instance
// (tridiagonal A with 1.01 diagonal and 0.01 couplings, B = I).
inline LinearSystem laplacian_example_system() {
  MatrixXd A(3, 3);
  A << 1.01, 0.01, 0.00,
       0.01, 1.01, 0.01,
       0.00, 0.01, 1.01;
  return LinearSystem(A, MatrixXd::Identity(3, 3));
}

inline CostWeights laplacian_example_cost() {
  return CostWeights(1e-3 * MatrixXd::Identity(3, 3), MatrixXd::Identity(3, 3));
}

}  // namespace sls
