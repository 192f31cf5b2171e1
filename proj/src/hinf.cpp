#include "sls/state_space.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <complex>
#include <deque>

#include "sls/lti.hpp"

namespace sls {

Eigen::MatrixXcd StateSpace::eval(double theta) const {
  std::complex<double> z = std::polar(1.0, theta);
  Eigen::MatrixXcd zIA = -A.cast<std::complex<double>>();
  zIA.diagonal().array() += z;
  return C.cast<std::complex<double>>() * zIA.partialPivLu().solve(B.cast<std::complex<double>>()) +
         D.cast<std::complex<double>>();
}

StateSpace resolvent_ss(const MatrixXd& M) {
  const auto n = M.rows();
  return StateSpace{M, MatrixXd::Identity(n, n), MatrixXd::Identity(n, n), MatrixXd::Zero(n, n)};
}

StateSpace fir_ss(const std::vector<MatrixXd>& coeffs) {
  if (coeffs.empty()) throw std::invalid_argument("fir_ss: need at least one coefficient");
  const auto q = coeffs[0].rows();
  const auto n = coeffs[0].cols();
  const int L = static_cast<int>(coeffs.size());
  // State stacks the last L inputs; the transfer starts at z^{-1} so D = 0.
  MatrixXd A = MatrixXd::Zero(n * L, n * L);
  for (int k = 1; k < L; ++k) A.block(k * n, (k - 1) * n, n, n).setIdentity();
  MatrixXd B = MatrixXd::Zero(n * L, n);
  B.topRows(n).setIdentity();
  MatrixXd C(q, n * L);
  for (int k = 0; k < L; ++k) {
    if (coeffs[k].rows() != q || coeffs[k].cols() != n)
      throw std::invalid_argument("fir_ss: inconsistent coefficient dimensions");
    C.middleCols(k * n, n) = coeffs[k];
  }
  return StateSpace{A, B, C, MatrixXd::Zero(q, n)};
}

namespace {

double sigma_max(const Eigen::MatrixXcd& M) {
  return Eigen::JacobiSVD<Eigen::MatrixXcd>(M).singularValues().maxCoeff();
}

// True when the symplectic pencil for level gamma has a unit-circle
// generalized eigenvalue, i.e. gamma is attained as a singular value of the
// frequency response somewhere on the circle.
bool gamma_attained(const StateSpace& ss, double gamma) {
  const auto n = ss.state_dim();
  MatrixXd R = gamma * gamma * MatrixXd::Identity(ss.input_dim(), ss.input_dim()) -
               ss.D.transpose() * ss.D;
  Eigen::LDLT<MatrixXd> Rf(R);
  MatrixXd RinvBt = Rf.solve(ss.B.transpose());
  MatrixXd Abar = ss.A + ss.B * Rf.solve(ss.D.transpose() * ss.C);
  MatrixXd G = ss.B * RinvBt;
  MatrixXd Qbar = ss.C.transpose() *
                  (MatrixXd::Identity(ss.output_dim(), ss.output_dim()) +
                   ss.D * Rf.solve(ss.D.transpose())) *
                  ss.C;

  MatrixXd Mp = MatrixXd::Zero(2 * n, 2 * n), Np = MatrixXd::Zero(2 * n, 2 * n);
  Mp.topLeftCorner(n, n) = Abar;
  Mp.topRightCorner(n, n) = G;
  Mp.bottomRightCorner(n, n).setIdentity();
  Np.topLeftCorner(n, n).setIdentity();
  Np.bottomLeftCorner(n, n) = Qbar;
  Np.bottomRightCorner(n, n) = Abar.transpose();

  Eigen::GeneralizedEigenSolver<MatrixXd> ges(Mp, Np, /*computeEigenvectors=*/false);
  const auto& alphas = ges.alphas();
  const auto& betas = ges.betas();
  for (Eigen::Index i = 0; i < alphas.size(); ++i) {
    double a = std::abs(alphas(i)), b = std::abs(betas(i));
    if (a + b < 1e-12) continue;
    if (std::abs(a - b) <= 1e-7 * (a + b)) return true;
  }
  return false;
}

}  // namespace

double hinf_norm(const StateSpace& ss, const HinfOptions& opt) {
  if (!is_stable(ss.A)) throw std::runtime_error("hinf_norm: realization is unstable");
  if (ss.C.size() == 0 || ss.B.size() == 0) return ss.D.size() ? ss.D.operatorNorm() : 0.0;

  double lo = ss.D.size() ? ss.D.operatorNorm() : 0.0;
  for (int k = 0; k < opt.grid_points; ++k) {
    double theta = M_PI * static_cast<double>(k) / (opt.grid_points - 1);
    lo = std::max(lo, sigma_max(ss.eval(theta)));
  }
  if (lo <= 0.0) return 0.0;

  double hi = lo * (1.0 + 1e-8);
  while (gamma_attained(ss, hi)) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e15) throw std::runtime_error("hinf_norm: bisection failed to bracket");
  }
  while (hi - lo > opt.rel_tol * hi) {
    double mid = 0.5 * (lo + hi);
    if (gamma_attained(ss, mid))
      lo = mid;
    else
      hi = mid;
  }
  return hi;
}

double hinf_norm_fir(const std::vector<MatrixXd>& coeffs, double rel_tol) {
  const int L = static_cast<int>(coeffs.size());
  if (L == 0) return 0.0;
  double lipschitz = 0.0;
  for (int k = 0; k < L; ++k) lipschitz += (k + 1) * coeffs[k].operatorNorm();
  if (lipschitz == 0.0) return 0.0;

  auto value_at = [&](double theta) {
    Eigen::MatrixXcd T = Eigen::MatrixXcd::Zero(coeffs[0].rows(), coeffs[0].cols());
    for (int k = 0; k < L; ++k)
      T += std::polar(1.0, -(k + 1) * theta) * coeffs[k].cast<std::complex<double>>();
    return sigma_max(T);
  };

  struct Interval {
    double a, b, va, vb;
  };
  int initial = std::max(64, 8 * L);
  std::deque<Interval> work;
  double best = 0.0;
  double prev_theta = 0.0, prev_val = value_at(0.0);
  best = prev_val;
  for (int k = 1; k <= initial; ++k) {
    double theta = M_PI * static_cast<double>(k) / initial;
    double val = value_at(theta);
    best = std::max(best, val);
    work.push_back({prev_theta, theta, prev_val, val});
    prev_theta = theta;
    prev_val = val;
  }
  // Keep splitting intervals whose Lipschitz cap exceeds the incumbent.
  while (!work.empty()) {
    Interval iv = work.front();
    work.pop_front();
    double cap = 0.5 * (iv.va + iv.vb) + 0.5 * lipschitz * (iv.b - iv.a);
    if (cap <= best * (1.0 + rel_tol) + 1e-15) continue;
    double mid = 0.5 * (iv.a + iv.b);
    double vm = value_at(mid);
    best = std::max(best, vm);
    work.push_back({iv.a, mid, iv.va, vm});
    work.push_back({mid, iv.b, vm, iv.vb});
  }
  return best * (1.0 + rel_tol);
}

double h2_norm_sq(const StateSpace& ss) {
  MatrixXd X = dlyap(ss.A, ss.B * ss.B.transpose());
  double out = (ss.C * X * ss.C.transpose()).trace();
  if (ss.D.size()) out += ss.D.squaredNorm();
  return out;
}

}  // namespace sls
