#include "sls/lti.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <optional>

namespace sls {

CostWeights::CostWeights(MatrixXd Q_, MatrixXd R_) : Q(std::move(Q_)), R(std::move(R_)) {
  if (Q.rows() != Q.cols() || R.rows() != R.cols())
    throw std::invalid_argument("CostWeights: Q and R must be square");
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + Q.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("CostWeights: Q must be symmetric");
  if ((R - R.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + R.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("CostWeights: R must be symmetric");
  Eigen::SelfAdjointEigenSolver<MatrixXd> eq(Q), er(R);
  if (eq.eigenvalues().minCoeff() < -1e-10)
    throw std::invalid_argument("CostWeights: Q must be positive semidefinite");
  if (er.eigenvalues().minCoeff() < 1e-12)
    throw std::invalid_argument("CostWeights: R must be positive definite");
}

double spectral_radius(const MatrixXd& M) {
  if (M.rows() != M.cols()) throw std::invalid_argument("spectral_radius: matrix must be square");
  if (M.size() == 0) return 0.0;
  if (!M.allFinite()) throw std::invalid_argument("spectral_radius: entries must be finite");
  Eigen::EigenSolver<MatrixXd> es(M, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

bool is_stable(const MatrixXd& M) { return spectral_radius(M) < 1.0 - kStabilityMargin; }

MatrixXd dlyap(const MatrixXd& M, const MatrixXd& W) {
  if (M.rows() != M.cols() || W.rows() != W.cols() || M.rows() != W.rows())
    throw std::invalid_argument("dlyap: dimension mismatch");
  if (!is_stable(M)) throw std::runtime_error("dlyap: M is unstable (spectral radius >= 1)");

  // Doubling: X_{k+1} = X_k + M_k X_k M_k', M_{k+1} = M_k^2 sums the series
  // in O(log) squarings.
  MatrixXd X = 0.5 * (W + W.transpose());
  MatrixXd Mk = M;
  for (int it = 0; it < 200; ++it) {
    X = X + Mk * X * Mk.transpose();
    Mk = Mk * Mk;
    if (Mk.norm() < 1e-150) break;
    if (Mk.cwiseAbs().maxCoeff() * X.cwiseAbs().maxCoeff() < 1e-18 * (1.0 + X.cwiseAbs().maxCoeff()))
      break;
  }
  X = 0.5 * (X + X.transpose());
  double resid = (X - M * X * M.transpose() - 0.5 * (W + W.transpose())).norm();
  if (!(resid <= 1e-9 * (1.0 + X.norm())))
    throw std::runtime_error("dlyap: residual too large (ill-conditioned instance)");
  return X;
}

namespace {

StateFeedbackGain gain_from_p(const LinearSystem& sys, const CostWeights& cost, const MatrixXd& P) {
  MatrixXd S = cost.R + sys.B.transpose() * P * sys.B;
  return StateFeedbackGain(-S.ldlt().solve(sys.B.transpose() * P * sys.A));
}

double dare_residual(const LinearSystem& sys, const CostWeights& cost, const MatrixXd& P) {
  MatrixXd S = cost.R + sys.B.transpose() * P * sys.B;
  MatrixXd APB = sys.A.transpose() * P * sys.B;
  MatrixXd rhs = cost.Q + sys.A.transpose() * P * sys.A - APB * S.ldlt().solve(APB.transpose());
  return (P - rhs).norm() / (1.0 + P.norm());
}

// Structure-preserving doubling; returns empty on breakdown.
std::optional<MatrixXd> dare_doubling(const LinearSystem& sys, const CostWeights& cost) {
  const auto n = sys.n();
  MatrixXd Ak = sys.A;
  MatrixXd Gk = sys.B * cost.R.ldlt().solve(sys.B.transpose());
  MatrixXd Hk = cost.Q;
  for (int it = 0; it < 120; ++it) {
    MatrixXd W = MatrixXd::Identity(n, n) + Gk * Hk;
    Eigen::PartialPivLU<MatrixXd> lu(W);
    if (std::abs(lu.determinant()) < 1e-300) return std::nullopt;
    MatrixXd WinvA = lu.solve(Ak);
    MatrixXd WinvG = lu.solve(Gk);
    MatrixXd Anew = Ak * WinvA;
    MatrixXd Gnew = Gk + Ak * WinvG * Ak.transpose();
    MatrixXd Hnew = Hk + Ak.transpose() * Hk * WinvA;
    Hnew = 0.5 * (Hnew + Hnew.transpose());
    Gnew = 0.5 * (Gnew + Gnew.transpose());
    double dh = (Hnew - Hk).norm();
    Ak = Anew;
    Gk = Gnew;
    Hk = Hnew;
    if (!Hk.allFinite()) return std::nullopt;
    if (dh <= 1e-13 * (1.0 + Hk.norm())) return Hk;
  }
  return std::nullopt;
}

std::optional<MatrixXd> dare_value_iteration(const LinearSystem& sys, const CostWeights& cost) {
  MatrixXd P = cost.Q;
  for (int it = 0; it < 200000; ++it) {
    MatrixXd S = cost.R + sys.B.transpose() * P * sys.B;
    MatrixXd APB = sys.A.transpose() * P * sys.B;
    MatrixXd Pn = cost.Q + sys.A.transpose() * P * sys.A - APB * S.ldlt().solve(APB.transpose());
    Pn = 0.5 * (Pn + Pn.transpose());
    if (!Pn.allFinite() || Pn.norm() > 1e14) return std::nullopt;
    double dp = (Pn - P).norm();
    P = Pn;
    if (dp <= 1e-13 * (1.0 + P.norm())) return P;
  }
  return std::nullopt;
}

}  // namespace

DareResult dare_lqr(const LinearSystem& sys, const CostWeights& cost) {
  if (cost.Q.rows() != sys.n() || cost.R.rows() != sys.p())
    throw std::invalid_argument("dare_lqr: cost dimensions do not match system");

  auto P = dare_doubling(sys, cost);
  if (!P || dare_residual(sys, cost, *P) > 1e-10) P = dare_value_iteration(sys, cost);
  if (!P) throw std::runtime_error("dare_lqr: iteration failed to converge (pair may not be stabilizable)");

  StateFeedbackGain gain = gain_from_p(sys, cost, *P);
  if (!is_stable(sys.A + sys.B * gain.K))
    throw std::runtime_error("dare_lqr: resulting closed loop is not stable (pair not stabilizable)");
  if (dare_residual(sys, cost, *P) > 1e-8)
    throw std::runtime_error("dare_lqr: Riccati residual above tolerance");
  return DareResult{*P, gain, P->trace()};
}

double lqr_cost_closed_loop(const LinearSystem& sys, const StateFeedbackGain& gain,
                            const CostWeights& cost, double sigma_w) {
  MatrixXd Acl = sys.A + sys.B * gain.K;
  if (!is_stable(Acl)) return std::numeric_limits<double>::infinity();
  MatrixXd X = dlyap(Acl, MatrixXd::Identity(sys.n(), sys.n()));
  MatrixXd W = cost.Q + gain.K.transpose() * cost.R * gain.K;
  return sigma_w * sigma_w * (W * X).trace();
}

GramianResult gramians(const LinearSystem& sys, const NoiseSpec& noise, int T) {
  if (T < 1) throw std::invalid_argument("gramians: horizon must be >= 1");
  const auto n = sys.n();
  MatrixXd GG = MatrixXd::Zero(n, n);
  MatrixXd FF = MatrixXd::Zero(n, n);
  MatrixXd Ak = MatrixXd::Identity(n, n);
  for (int k = 0; k < T; ++k) {
    MatrixXd AkB = Ak * sys.B;
    GG += AkB * AkB.transpose();
    FF += Ak * Ak.transpose();
    Ak = sys.A * Ak;
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(noise.sigma_u * noise.sigma_u * GG +
                                             noise.sigma_w * noise.sigma_w * FF);
  return GramianResult{GG, FF, es.eigenvalues().minCoeff()};
}

DecayEnvelope decay_envelope(const MatrixXd& M) {
  double sr = spectral_radius(M);
  if (sr >= 1.0 - kStabilityMargin) throw std::runtime_error("decay_envelope: M is unstable");
  double rho = 0.5 * (1.0 + sr);
  double C = 1.0;
  MatrixXd Mt = MatrixXd::Identity(M.rows(), M.cols());
  double prev = 1.0;
  int decreasing = 0;
  for (int t = 1; t <= 100000 && decreasing < 10; ++t) {
    Mt = M * Mt;
    double ratio = Mt.operatorNorm() / std::pow(rho, t);
    C = std::max(C, ratio);
    decreasing = (ratio < prev) ? decreasing + 1 : 0;
    prev = ratio;
  }
  return DecayEnvelope{C, rho};
}

}  // namespace sls
