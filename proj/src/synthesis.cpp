#include "sls/synthesis.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>

#include "sls/conic.hpp"
#include "sls/parallel.hpp"

#include "json.hpp"

namespace sls {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

MatrixXd matrix_sqrt(const MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(M);
  return es.operatorSqrt();
}

// Stacked FIR coefficients [(eps_A/sqrt(a)) Phi_x(k); (eps_B/sqrt(1-a)) Phi_u(k)].
std::vector<MatrixXd> scaled_stack(const std::vector<MatrixXd>& phi_x,
                                   const std::vector<MatrixXd>& phi_u, double eps_A, double eps_B,
                                   double alpha) {
  const double ca = eps_A / std::sqrt(alpha);
  const double cb = eps_B / std::sqrt(1.0 - alpha);
  const auto n = phi_x[0].cols();
  std::vector<MatrixXd> coeffs(phi_x.size());
  for (std::size_t k = 0; k < phi_x.size(); ++k) {
    MatrixXd c(phi_x[k].rows() + phi_u[k].rows(), n);
    c.topRows(phi_x[k].rows()) = ca * phi_x[k];
    c.bottomRows(phi_u[k].rows()) = cb * phi_u[k];
    coeffs[k] = c;
  }
  return coeffs;
}

double stack_norm_at(const std::vector<MatrixXd>& coeffs, double theta) {
  Eigen::MatrixXcd T = Eigen::MatrixXcd::Zero(coeffs[0].rows(), coeffs[0].cols());
  for (std::size_t k = 0; k < coeffs.size(); ++k)
    T += std::polar(1.0, -(static_cast<double>(k) + 1.0) * theta) *
         coeffs[k].cast<std::complex<double>>();
  return Eigen::JacobiSVD<Eigen::MatrixXcd>(T).singularValues().maxCoeff();
}

double golden_refine(const std::vector<MatrixXd>& coeffs, double lo, double hi) {
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
  double fc = stack_norm_at(coeffs, c), fd = stack_norm_at(coeffs, d);
  for (int it = 0; it < 40; ++it) {
    if (fc >= fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - gr * (hi - lo);
      fc = stack_norm_at(coeffs, c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + gr * (hi - lo);
      fd = stack_norm_at(coeffs, d);
    }
  }
  return fc >= fd ? c : d;
}

// Frequencies (at most eight) where the FIR gain peaks locally above `level`,
// golden-refined; the global peak is always included so every call yields at
// least one cut.
std::vector<double> stack_violation_thetas(const std::vector<MatrixXd>& coeffs, double level) {
  const int grid = std::max<int>(512, 16 * static_cast<int>(coeffs.size()));
  std::vector<double> vals(grid + 1);
  for (int k = 0; k <= grid; ++k)
    vals[k] = stack_norm_at(coeffs, M_PI * static_cast<double>(k) / grid);
  std::vector<std::pair<double, int>> peaks;  // (value, grid index)
  for (int k = 0; k <= grid; ++k) {
    bool local_max = (k == 0 || vals[k] >= vals[k - 1]) && (k == grid || vals[k] >= vals[k + 1]);
    if (local_max && vals[k] > level) peaks.emplace_back(vals[k], k);
  }
  if (peaks.empty())
    peaks.emplace_back(0.0, static_cast<int>(std::max_element(vals.begin(), vals.end()) -
                                             vals.begin()));
  std::sort(peaks.begin(), peaks.end(), std::greater<>());
  if (peaks.size() > 8) peaks.resize(8);
  std::vector<double> thetas;
  for (const auto& [v, k] : peaks) {
    double theta = M_PI * static_cast<double>(k) / grid;
    thetas.push_back(golden_refine(coeffs, std::max(0.0, theta - M_PI / grid),
                                   std::min(M_PI, theta + M_PI / grid)));
  }
  return thetas;
}

}  // namespace

// ---------------------------------------------------------------------------
// FirResponse and realization

void FirResponse::validate() const {
  if (L < 1 || static_cast<int>(Phi_x.size()) != L || static_cast<int>(Phi_u.size()) != L)
    throw std::invalid_argument("FirResponse: block count must equal L >= 1");
  const auto nn = n();
  const auto pp = p();
  for (const auto& m : Phi_x)
    if (m.rows() != nn || m.cols() != nn || !m.allFinite())
      throw std::invalid_argument("FirResponse: bad Phi_x block");
  for (const auto& m : Phi_u)
    if (m.rows() != pp || m.cols() != nn || !m.allFinite())
      throw std::invalid_argument("FirResponse: bad Phi_u block");
  if (V.rows() != nn || V.cols() != nn || !V.allFinite())
    throw std::invalid_argument("FirResponse: bad V block");
  if (!Phi_x[0].isIdentity(1e-9))
    throw std::invalid_argument("FirResponse: Phi_x(1) must be the identity");
}

std::string to_string(SynthesisStatus s) {
  switch (s) {
    case SynthesisStatus::feasible: return "feasible";
    case SynthesisStatus::infeasible: return "infeasible";
    case SynthesisStatus::numerical_failure: return "numerical-failure";
  }
  return "?";
}

double halpha(const FirResponse& resp, double eps_A, double eps_B, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("halpha: alpha must be in (0,1)");
  if (eps_A < 0.0 || eps_B < 0.0) throw std::invalid_argument("halpha: eps must be nonnegative");
  resp.validate();
  if (eps_A == 0.0 && eps_B == 0.0) return 0.0;
  return hinf_norm_fir(scaled_stack(resp.Phi_x, resp.Phi_u, eps_A, eps_B, alpha), 1e-7);
}

VectorXd RealizedController::step(const VectorXd& x) {
  VectorXd u = D_K * x;
  if (state.size() > 0) {
    u += C_K * state;
    state = (A_K * state + B_K * x).eval();
  }
  return u;
}

RealizedController realize_controller(const FirResponse& resp) {
  resp.validate();
  const auto n = resp.n();
  const auto p = resp.p();
  const int L = resp.L;
  RealizedController c;
  c.L = L;
  c.n = n;
  c.p = p;
  const Eigen::Index m = n * (L - 1);
  MatrixXd phix_tail(n, m), phiu_tail(p, m);
  for (int k = 1; k < L; ++k) {
    phix_tail.middleCols((k - 1) * n, n) = resp.Phi_x[k];
    phiu_tail.middleCols((k - 1) * n, n) = resp.Phi_u[k];
  }
  c.A_K = MatrixXd::Zero(m, m);
  if (m > 0) {
    c.A_K.topRows(n) = -phix_tail;
    if (m > n) c.A_K.block(n, 0, m - n, m - n).setIdentity();
  }
  c.B_K = MatrixXd::Zero(m, n);
  if (m > 0) c.B_K.topRows(n).setIdentity();
  c.D_K = resp.Phi_u[0];
  c.C_K = m > 0 ? MatrixXd(phiu_tail - resp.Phi_u[0] * phix_tail) : MatrixXd::Zero(p, 0);
  c.state = VectorXd::Zero(m);
  return c;
}

double closed_loop_nominal_cost(const LinearSystem& sys, const RealizedController& ctrl,
                                const CostWeights& cost, double sigma_w) {
  const auto n = sys.n();
  const Eigen::Index m = ctrl.A_K.rows();
  MatrixXd Acl(n + m, n + m);
  Acl.topLeftCorner(n, n) = sys.A + sys.B * ctrl.D_K;
  Acl.topRightCorner(n, m) = sys.B * ctrl.C_K;
  Acl.bottomLeftCorner(m, n) = ctrl.B_K;
  Acl.bottomRightCorner(m, m) = ctrl.A_K;
  if (!is_stable(Acl)) return kInf;
  MatrixXd W = MatrixXd::Zero(n + m, n + m);
  W.topLeftCorner(n, n).setIdentity();
  MatrixXd X = dlyap(Acl, W);
  MatrixXd Cu(ctrl.p, n + m);
  Cu.leftCols(n) = ctrl.D_K;
  Cu.rightCols(m) = ctrl.C_K;
  MatrixXd Ccl = MatrixXd::Zero(n + m, n + m);
  Ccl.topLeftCorner(n, n) = cost.Q;
  Ccl += Cu.transpose() * cost.R * Cu;
  return sigma_w * sigma_w * (Ccl * X).trace();
}

// ---------------------------------------------------------------------------
// Certification and calculators

CertifyResult certify_and_bound(const EstimateWithError& est, const StateFeedbackGain& K,
                                const CostWeights& cost, double alpha, double sigma_w) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("certify_and_bound: alpha must be in (0,1)");
  LinearSystem nominal = est.nominal();
  MatrixXd Acl = nominal.A + nominal.B * K.K;
  if (!is_stable(Acl))
    throw std::runtime_error("certify_and_bound: controller does not stabilize the nominal model");
  CertifyResult out;
  if (est.eps_A == 0.0 && est.eps_B == 0.0) {
    out.h_value = 0.0;
  } else {
    const auto n = nominal.n();
    const auto p = nominal.p();
    MatrixXd C(n + p, n);
    C.topRows(n) = (est.eps_A / std::sqrt(alpha)) * MatrixXd::Identity(n, n);
    C.bottomRows(p) = (est.eps_B / std::sqrt(1.0 - alpha)) * K.K;
    out.h_value = hinf_norm(
        StateSpace{Acl, MatrixXd::Identity(n, n), C, MatrixXd::Zero(n + p, n)});
  }
  out.certified = out.h_value < 1.0;
  double j = lqr_cost_closed_loop(nominal, K, cost, sigma_w);
  out.cost_upper_bound = out.certified ? j / (1.0 - out.h_value) : kInf;
  return out;
}

CertifyResult certify_and_bound(const EstimateWithError& est, const FirResponse& resp,
                                const CostWeights& cost, double alpha, double sigma_w) {
  RealizedController ctrl = realize_controller(resp);
  double j = closed_loop_nominal_cost(est.nominal(), ctrl, cost, sigma_w);
  if (!std::isfinite(j))
    throw std::runtime_error("certify_and_bound: controller does not stabilize the nominal model");
  CertifyResult out;
  out.h_value = halpha(resp, est.eps_A, est.eps_B, alpha) + resp.V.operatorNorm();
  out.certified = out.h_value < 1.0;
  out.cost_upper_bound = out.certified ? j / (1.0 - out.h_value) : kInf;
  return out;
}

int fir_horizon_bound(const DecayEnvelope& env, double zeta) {
  if (!(zeta > 0.0)) throw std::invalid_argument("fir_horizon_bound: zeta must be positive");
  if (zeta >= env.C) return 0;
  return static_cast<int>(std::ceil(4.0 * std::log(env.C / zeta) / (1.0 - env.rho)));
}

double suboptimality_calculator(double eps_A, double eps_B, const StateFeedbackGain& K_star,
                                double resolvent_hinf, SuboptMode which) {
  double zeta = (eps_A + eps_B * K_star.K.operatorNorm()) * resolvent_hinf;
  if (!(zeta < 0.2))
    throw std::runtime_error("suboptimality_calculator: zeta = " + std::to_string(zeta) +
                             " exceeds the 1/5 margin");
  return (which == SuboptMode::infinite ? 5.0 : 10.0) * zeta;
}

// ---------------------------------------------------------------------------
// Common-Lyapunov synthesis

namespace {

struct ClInner {
  conic::SolveStatus status = conic::SolveStatus::numerical_failure;
  MatrixXd K;
  double alpha = 0.5;
  double objective = kInf;  // trace(Q W11) + trace(R W22), unscaled
  std::string msg;
};

ClInner cl_solve_fixed_gamma(const LinearSystem& nominal, const CostWeights& cost, double eps_A,
                             double eps_B, double gamma, double solver_tol) {
  using namespace conic;
  const int n = static_cast<int>(nominal.n());
  const int p = static_cast<int>(nominal.p());
  const bool uncertain = eps_A > 0.0 || eps_B > 0.0;

  ConicProgram prog;
  SymVar X = prog.add_symmetric(n);
  SymVar W = prog.add_symmetric(n + p);
  std::vector<std::vector<int>> Z(p, std::vector<int>(n));
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < n; ++j) Z[i][j] = prog.add_scalar();
  int av = uncertain ? prog.add_scalar() : -1;

  // [[X, X, Z'], [X, W11, W12], [Z, W21, W22]] >= 0.
  {
    ExprMatrix m = expr_matrix(2 * n + p, 2 * n + p);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        m[i][j] = X.expr(i, j);
        m[i][n + j] = X.expr(i, j);
      }
    for (int i = 0; i < n; ++i)
      for (int q = 0; q < p; ++q) m[i][2 * n + q] = LinExpr::variable(Z[q][i]);
    for (int i = 0; i < n + p; ++i)
      for (int j = 0; j < n + p; ++j) m[n + i][n + j] = W.expr(i, j);
    prog.add_psd_block(m);
  }

  // Robustness block: [[X - I, AX + BZ, 0, 0], [., X, eA X, eB Z'],
  //                    [., ., a g^2 I, 0], [., ., ., (1-a) g^2 I]].
  auto axbz = [&](int i, int j) {
    LinExpr e;
    for (int k = 0; k < n; ++k) e += nominal.A(i, k) * X.expr(k, j);
    for (int q = 0; q < p; ++q) e += nominal.B(i, q) * LinExpr::variable(Z[q][j]);
    return e;
  };
  if (uncertain) {
    const double g2 = gamma * gamma;
    ExprMatrix m = expr_matrix(3 * n + p, 3 * n + p);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        m[i][j] = X.expr(i, j) - LinExpr(i == j ? 1.0 : 0.0);
        m[i][n + j] = axbz(i, j);
        m[n + i][n + j] = X.expr(i, j);
        m[n + i][2 * n + j] = eps_A * X.expr(i, j);
      }
    for (int i = 0; i < n; ++i)
      for (int q = 0; q < p; ++q) m[n + i][3 * n + q] = eps_B * LinExpr::variable(Z[q][i]);
    for (int i = 0; i < n; ++i) m[2 * n + i][2 * n + i] = g2 * LinExpr::variable(av);
    for (int q = 0; q < p; ++q)
      m[3 * n + q][3 * n + q] = LinExpr(g2) - g2 * LinExpr::variable(av);
    prog.add_psd_block(m);
    prog.add_ineq(LinExpr::variable(av) - LinExpr(1e-6));
    prog.add_ineq(LinExpr(1.0 - 1e-6) - LinExpr::variable(av));
  } else {
    ExprMatrix m = expr_matrix(2 * n, 2 * n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        m[i][j] = X.expr(i, j) - LinExpr(i == j ? 1.0 : 0.0);
        m[i][n + j] = axbz(i, j);
        m[n + i][n + j] = X.expr(i, j);
      }
    prog.add_psd_block(m);
  }

  LinExpr obj;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) obj += cost.Q(i, j) * W.expr(j, i);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) obj += cost.R(i, j) * W.expr(n + j, n + i);
  prog.minimize(obj);

  ConicSolution sol = solve_conic(prog, solver_tol);
  ClInner out;
  out.status = sol.status;
  out.msg = sol.message;
  if (sol.status != SolveStatus::optimal) return out;

  MatrixXd Xv = sol.value(X);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(Xv, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() <= 1e-8) {
    out.status = SolveStatus::numerical_failure;
    out.msg = "X is numerically singular";
    return out;
  }
  MatrixXd Zv(p, n);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < n; ++j) Zv(i, j) = sol.x(Z[i][j]);
  out.K = Zv * Xv.inverse();
  out.alpha = uncertain ? sol.x(av) : 0.5;
  out.objective = sol.objective;
  return out;
}

// Coarse grid plus golden-section minimization of value(gamma) over [lo, hi];
// +inf marks infeasible gammas and ties resolve toward smaller gamma.
// Returns the best gamma, or a negative value when everything was infeasible.
double minimize_over_gamma(const std::function<double(double)>& value, double lo, double hi,
                           double tol, int coarse_points, double hint) {
  double a = lo, b = hi;
  if (hint >= 0.0) {
    a = std::max(lo, hint - 0.1);
    b = std::min(hi, hint + 0.1);
  } else if (coarse_points >= 3) {
    std::vector<double> gs(coarse_points), vs(coarse_points);
    for (int i = 0; i < coarse_points; ++i)
      gs[i] = lo + (hi - lo) * (i + 1.0) / (coarse_points + 1.0);
    parallel_for(coarse_points, [&](int i) { vs[i] = value(gs[i]); });
    int best = -1;
    for (int i = 0; i < coarse_points; ++i)
      if (std::isfinite(vs[i]) && (best < 0 || vs[i] < vs[best])) best = i;
    if (best < 0) return -1.0;
    a = best > 0 ? gs[best - 1] : lo;
    b = best + 1 < coarse_points ? gs[best + 1] : hi;
  }
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = value(c), fd = value(d);
  while (b - a > tol) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = value(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = value(d);
    }
  }
  if (!std::isfinite(fc) && !std::isfinite(fd)) return -1.0;
  return fc <= fd ? c : d;
}

}  // namespace

SynthesisResult cl_synthesis(const EstimateWithError& est, const CostWeights& cost,
                             const GammaSearch& gamma) {
  LinearSystem nominal = est.nominal();
  SynthesisResult res;
  res.is_static = true;

  auto finish = [&](const ClInner& inner, double g) {
    res.gain = StateFeedbackGain(inner.K);
    res.gamma_star = g;
    res.alpha = inner.alpha;
    res.robust_upper_bound = inner.objective / ((1.0 - g) * (1.0 - g));
    res.nominal_cost = lqr_cost_closed_loop(nominal, res.gain, cost, 1.0);
    res.status = SynthesisStatus::feasible;
  };

  if (est.eps_A == 0.0 && est.eps_B == 0.0 && !gamma.fixed) {
    ClInner inner = cl_solve_fixed_gamma(nominal, cost, 0.0, 0.0, 0.0, gamma.solver_tol);
    if (inner.status != conic::SolveStatus::optimal) {
      res.status = inner.status == conic::SolveStatus::infeasible
                       ? SynthesisStatus::infeasible
                       : SynthesisStatus::numerical_failure;
      res.message = inner.msg;
      return res;
    }
    finish(inner, 0.0);
    return res;
  }

  std::mutex failure_mu;
  std::string last_failure;
  bool any_failure = false;
  // Thread-safe: the coarse gamma grid is evaluated in parallel.
  auto evaluate = [&](double g) -> std::pair<double, ClInner> {
    ClInner inner = cl_solve_fixed_gamma(nominal, cost, est.eps_A, est.eps_B, g, gamma.solver_tol);
    if (inner.status == conic::SolveStatus::optimal) {
      double v = gamma.nominal_objective ? inner.objective
                                         : inner.objective / ((1.0 - g) * (1.0 - g));
      return {v, inner};
    }
    if (inner.status != conic::SolveStatus::infeasible) {
      std::lock_guard<std::mutex> lock(failure_mu);
      any_failure = true;
      last_failure = "gamma=" + std::to_string(g) + ": " + inner.msg;
    }
    return {kInf, inner};
  };

  double gstar;
  if (gamma.fixed) {
    gstar = gamma.fixed_value;
  } else {
    auto value = [&](double g) { return evaluate(g).first; };
    double lo = std::max(gamma.lo, 1e-6);
    gstar = minimize_over_gamma(value, lo, gamma.hi, gamma.tol, gamma.coarse_points, gamma.hint);
  }
  if (gstar >= 0.0) {
    auto [v, inner] = evaluate(gstar);
    if (std::isfinite(v)) {
      finish(inner, gstar);
      return res;
    }
  }
  res.status = any_failure ? SynthesisStatus::numerical_failure : SynthesisStatus::infeasible;
  res.message = any_failure ? last_failure : "no gamma in (0,1) admits a solution";
  return res;
}

// ---------------------------------------------------------------------------
// FIR synthesis

namespace {

struct FirProgram {
  conic::ConicProgram prog;
  int tau = -1, gamma_h = -1, gamma_v = -1;
  std::vector<std::vector<std::vector<int>>> phi_u;  // [k][i][j]
};

// Builds the fixed-(gamma, alpha) FIR program with Phi_x eliminated through
// the achievability recursion and the H-infinity constraint sampled at the
// given frequencies.
FirProgram build_fir_program(const LinearSystem& nominal, const MatrixXd& Q12, const MatrixXd& R12,
                             double eps_A, double eps_B, int L, double alpha, double gamma,
                             const std::vector<double>& thetas) {
  using namespace conic;
  const int n = static_cast<int>(nominal.n());
  const int p = static_cast<int>(nominal.p());
  const bool uncertain = eps_A > 0.0 || eps_B > 0.0;

  FirProgram fp;
  fp.tau = fp.prog.add_scalar();
  fp.phi_u.assign(L, std::vector<std::vector<int>>(p, std::vector<int>(n)));
  for (int k = 0; k < L; ++k)
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < n; ++j) fp.phi_u[k][i][j] = fp.prog.add_scalar();
  fp.gamma_v = fp.prog.add_scalar();
  if (uncertain) fp.gamma_h = fp.prog.add_scalar();

  auto phi_u_expr = [&](int k) {
    ExprMatrix m = expr_matrix(p, n);
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < n; ++j) m[i][j] = LinExpr::variable(fp.phi_u[k][i][j]);
    return m;
  };
  auto compress_all = [](ExprMatrix& m) {
    for (auto& row : m)
      for (auto& e : row) e.compress();
  };

  // Phi_x(1) = I; Phi_x(k+1) = A Phi_x(k) + B Phi_u(k).
  std::vector<ExprMatrix> phi_x(L);
  phi_x[0] = expr_matrix(n, n);
  add_constant_block(phi_x[0], 0, 0, MatrixXd::Identity(n, n));
  for (int k = 1; k < L; ++k) {
    phi_x[k] = expr_matrix(n, n);
    add_product_block(phi_x[k], 0, 0, nominal.A, phi_x[k - 1]);
    add_product_block(phi_x[k], 0, 0, nominal.B, phi_u_expr(k - 1));
    compress_all(phi_x[k]);
  }
  ExprMatrix v_expr = expr_matrix(n, n);
  add_product_block(v_expr, 0, 0, nominal.A, phi_x[L - 1], -1.0);
  add_product_block(v_expr, 0, 0, nominal.B, phi_u_expr(L - 1), -1.0);
  compress_all(v_expr);

  // H2 objective: tau >= || [Q^1/2 Phi_x; R^1/2 Phi_u] ||_F over all blocks.
  std::vector<LinExpr> soc_u;
  soc_u.reserve(static_cast<std::size_t>(L) * (n + p) * n);
  for (int k = 0; k < L; ++k) {
    ExprMatrix qx = expr_matrix(n, n);
    add_product_block(qx, 0, 0, Q12, phi_x[k]);
    ExprMatrix ru = expr_matrix(p, n);
    add_product_block(ru, 0, 0, R12, phi_u_expr(k));
    for (auto& row : qx)
      for (auto& e : row) {
        e.compress();
        soc_u.push_back(std::move(e));
      }
    for (auto& row : ru)
      for (auto& e : row) {
        e.compress();
        soc_u.push_back(std::move(e));
      }
  }
  fp.prog.add_soc(LinExpr::variable(fp.tau), std::move(soc_u));
  fp.prog.minimize(LinExpr::variable(fp.tau));

  // ||V|| <= gamma_v and gamma_h + gamma_v <= gamma (gamma_h only when the
  // model is uncertain).
  {
    ExprMatrix m = expr_matrix(2 * n, 2 * n);
    for (int i = 0; i < n; ++i) {
      m[i][i] = LinExpr::variable(fp.gamma_v);
      m[n + i][n + i] = LinExpr::variable(fp.gamma_v);
      for (int j = 0; j < n; ++j) m[i][n + j] = v_expr[i][j];
    }
    fp.prog.add_psd_block(m);
  }
  LinExpr budget = LinExpr(gamma) - LinExpr::variable(fp.gamma_v);
  if (uncertain) budget -= LinExpr::variable(fp.gamma_h);
  fp.prog.add_ineq(budget);

  if (!uncertain) return fp;

  // Frequency-sampled norm constraint on the weighted stack T(theta).
  const double ca = eps_A / std::sqrt(alpha);
  const double cb = eps_B / std::sqrt(1.0 - alpha);
  const int q = 2 * n + p;
  for (double theta : thetas) {
    ExprMatrix t_re = expr_matrix(n + p, n), t_im = expr_matrix(n + p, n);
    for (int k = 0; k < L; ++k) {
      double cosk = std::cos((k + 1) * theta), sink = std::sin((k + 1) * theta);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          t_re[i][j] += (ca * cosk) * phi_x[k][i][j];
          t_im[i][j] += (-ca * sink) * phi_x[k][i][j];
        }
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < n; ++j) {
          t_re[n + i][j] += (cb * cosk) * LinExpr::variable(fp.phi_u[k][i][j]);
          t_im[n + i][j] += (-cb * sink) * LinExpr::variable(fp.phi_u[k][i][j]);
        }
    }
    for (auto* m : {&t_re, &t_im}) compress_all(*m);

    // Hermitian [[gh I_n, T*], [T, gh I_{n+p}]] >= 0 via the real embedding
    // [[Hre, -Him], [Him, Hre]]; only the upper triangle is read.
    ExprMatrix m = expr_matrix(2 * q, 2 * q);
    for (int r = 0; r < 2; ++r)
      for (int i = 0; i < q; ++i) m[r * q + i][r * q + i] = LinExpr::variable(fp.gamma_h);
    for (int i = 0; i < n + p; ++i)
      for (int j = 0; j < n; ++j) {
        const LinExpr& re = t_re[i][j];
        const LinExpr& im = t_im[i][j];
        m[j][n + i] = re;               // Hre upper-left: Re T'(j, i)
        m[q + j][q + n + i] = re;       // Hre lower-right copy
        m[n + i][q + j] = -1.0 * im;    // -Him(n+i, j)
        m[j][q + n + i] = im;           // -Him(j, n+i) = +Im T(i, j)
      }
    fp.prog.add_psd_block(m);
  }
  return fp;
}

struct FirInner {
  conic::SolveStatus status = conic::SolveStatus::numerical_failure;
  FirResponse resp;
  double tau = kInf;
  double gamma_eff = 0.0;  // exact H + ||V|| of the returned response
  std::string msg;
};

FirInner fir_solve_fixed(const LinearSystem& nominal, const MatrixXd& Q12, const MatrixXd& R12,
                         double eps_A, double eps_B, int L, double alpha, double gamma,
                         double solver_tol, int freq_points) {
  using namespace conic;
  const int n = static_cast<int>(nominal.n());
  const int p = static_cast<int>(nominal.p());
  const bool uncertain = eps_A > 0.0 || eps_B > 0.0;

  std::vector<double> thetas;
  if (uncertain)
    for (int i = 0; i < freq_points; ++i)
      thetas.push_back(M_PI * static_cast<double>(i) / (freq_points - 1));

  FirInner out;
  for (int round = 0; round < 16; ++round) {
    FirProgram fp = build_fir_program(nominal, Q12, R12, eps_A, eps_B, L, alpha, gamma, thetas);
    ConicSolution sol = solve_conic(fp.prog, solver_tol);
    out.status = sol.status;
    out.msg = sol.message;
    if (sol.status != SolveStatus::optimal) return out;

    FirResponse resp;
    resp.L = L;
    resp.Phi_x.assign(L, MatrixXd::Zero(n, n));
    resp.Phi_u.assign(L, MatrixXd::Zero(p, n));
    resp.Phi_x[0].setIdentity();
    for (int k = 0; k < L; ++k) {
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < n; ++j) resp.Phi_u[k](i, j) = sol.x(fp.phi_u[k][i][j]);
      if (k + 1 < L)
        resp.Phi_x[k + 1] = nominal.A * resp.Phi_x[k] + nominal.B * resp.Phi_u[k];
    }
    resp.V = -(nominal.A * resp.Phi_x[L - 1] + nominal.B * resp.Phi_u[L - 1]);
    out.resp = std::move(resp);
    out.tau = sol.objective;

    if (!uncertain) {
      out.gamma_eff = out.resp.V.operatorNorm();
      return out;
    }
    auto coeffs = scaled_stack(out.resp.Phi_x, out.resp.Phi_u, eps_A, eps_B, alpha);
    double h = hinf_norm_fir(coeffs, 1e-7);
    double vnorm = out.resp.V.operatorNorm();
    out.gamma_eff = h + vnorm;
    // Reported bounds use the exact gamma_eff, so a small sampling overshoot
    // of the budget costs only slight conservatism, never soundness.
    if (out.gamma_eff <= std::min(gamma * 1.01 + 1e-7, 1.0 - 1e-9)) return out;

    // Violated between grid points: cut at every local peak at or near the
    // allowed level, so the next solve cannot just shift the peak sideways.
    for (double th : stack_violation_thetas(coeffs, 0.9 * std::max(0.0, gamma - vnorm)))
      thetas.push_back(th);
  }
  out.status = SolveStatus::infeasible;
  out.msg = "frequency-cut loop did not close the sampling gap";
  return out;
}

}  // namespace

SynthesisResult fir_synthesis(const EstimateWithError& est, const CostWeights& cost, int L,
                              const GammaSearch& gamma, const AlphaSearch& alpha) {
  if (L < 1) throw std::invalid_argument("fir_synthesis: L must be at least 1");
  LinearSystem nominal = est.nominal();
  MatrixXd Q12 = matrix_sqrt(cost.Q), R12 = matrix_sqrt(cost.R);
  // Short horizons get by on a sparse grid plus cuts; long ones need a denser
  // start or the cut loop cannot close the sampling gap.  The exact norm
  // check inside the solve keeps any grid sound.
  const int freq_points = L > 16 ? std::min(L + 1, 65) : std::max(7, L / 4 + 3);

  SynthesisResult res;
  res.is_static = false;

  auto finish = [&](const FirInner& inner, double g, double a) {
    res.response = inner.resp;
    res.gamma_star = g;
    res.alpha = a;
    res.robust_upper_bound = (inner.tau / (1.0 - g)) * (inner.tau / (1.0 - g));
    res.nominal_cost = closed_loop_nominal_cost(nominal, realize_controller(inner.resp), cost, 1.0);
    res.status = SynthesisStatus::feasible;
  };

  if (est.eps_A == 0.0 && est.eps_B == 0.0 && !gamma.fixed) {
    // Without uncertainty the objective barely depends on the budget: solve
    // once with a permissive tail budget, then certify against the achieved
    // tail.  A short horizon on a slow system may need the full search below.
    FirInner inner = fir_solve_fixed(nominal, Q12, R12, 0.0, 0.0, L, alpha.value, 0.5,
                                     gamma.solver_tol, freq_points);
    if (inner.status == conic::SolveStatus::optimal) {
      finish(inner, inner.gamma_eff, alpha.value);
      return res;
    }
  }

  std::mutex failure_mu;
  std::string last_failure;
  bool any_failure = false;
  // Thread-safe: the coarse gamma grid is evaluated in parallel.
  auto evaluate_ga = [&](double g, double a) -> std::pair<double, FirInner> {
    FirInner inner = fir_solve_fixed(nominal, Q12, R12, est.eps_A, est.eps_B, L, a, g,
                                     gamma.solver_tol, freq_points);
    if (inner.status == conic::SolveStatus::optimal) {
      // The exact certified gain of the returned response can sit on either
      // side of the budget; the bound always uses it.
      double ge = inner.gamma_eff;
      double v = (inner.tau / (1.0 - ge)) * (inner.tau / (1.0 - ge));
      return {v, inner};
    }
    if (inner.status != conic::SolveStatus::infeasible) {
      std::lock_guard<std::mutex> lock(failure_mu);
      any_failure = true;
      last_failure = "gamma=" + std::to_string(g) + ": " + inner.msg;
    }
    return {kInf, inner};
  };

  // Nested golden section on alpha when requested; returns (value, alpha).
  auto best_alpha_at = [&](double g) -> std::pair<double, double> {
    if (!alpha.optimize) return {evaluate_ga(g, alpha.value).first, alpha.value};
    double a = 0.05, b = 0.95;
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = evaluate_ga(g, c).first, fd = evaluate_ga(g, d).first;
    while (b - a > alpha.tol) {
      if (fc <= fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - gr * (b - a);
        fc = evaluate_ga(g, c).first;
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + gr * (b - a);
        fd = evaluate_ga(g, d).first;
      }
    }
    return fc <= fd ? std::make_pair(fc, c) : std::make_pair(fd, d);
  };

  double gstar;
  if (gamma.fixed) {
    gstar = gamma.fixed_value;
  } else {
    auto value = [&](double g) { return best_alpha_at(g).first; };
    double lo = std::max(gamma.lo, 1e-4);
    gstar = minimize_over_gamma(value, lo, gamma.hi, gamma.tol, gamma.coarse_points, gamma.hint);
  }
  if (gstar >= 0.0) {
    double astar = alpha.optimize ? best_alpha_at(gstar).second : alpha.value;
    auto [v, inner] = evaluate_ga(gstar, astar);
    if (std::isfinite(v)) {
      finish(inner, inner.gamma_eff, astar);
      return res;
    }
  }
  res.status = any_failure ? SynthesisStatus::numerical_failure : SynthesisStatus::infeasible;
  res.message = any_failure ? last_failure : "no gamma in (0,1) admits a solution";
  return res;
}

// ---------------------------------------------------------------------------
// Serialization

std::string synthesis_result_to_json(const SynthesisResult& result) {
  nlohmann::json j;
  j["status"] = to_string(result.status);
  j["gamma"] = result.gamma_star;
  j["alpha"] = result.alpha;
  j["robust_upper_bound"] = result.robust_upper_bound;
  j["nominal_cost"] = result.nominal_cost;
  j["static"] = result.is_static;
  if (!result.message.empty()) j["message"] = result.message;
  auto dump = [](const MatrixXd& m) {
    std::vector<std::vector<double>> rows;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      std::vector<double> r;
      for (Eigen::Index k = 0; k < m.cols(); ++k) r.push_back(m(i, k));
      rows.push_back(std::move(r));
    }
    return rows;
  };
  if (result.status == SynthesisStatus::feasible) {
    if (result.is_static) {
      j["K"] = dump(result.gain.K);
    } else {
      j["L"] = result.response.L;
      for (const auto& m : result.response.Phi_x) j["phi_x"].push_back(dump(m));
      for (const auto& m : result.response.Phi_u) j["phi_u"].push_back(dump(m));
      j["V"] = dump(result.response.V);
    }
  }
  return j.dump(2);
}

void save_fir_csv(const FirResponse& resp, const std::string& path) {
  resp.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  out << "block,k,row,col,value\n";
  auto dump = [&](const char* name, int k, const MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        out << name << "," << k << "," << i << "," << j << "," << m(i, j) << "\n";
  };
  for (int k = 0; k < resp.L; ++k) {
    dump("phi_x", k + 1, resp.Phi_x[k]);
    dump("phi_u", k + 1, resp.Phi_u[k]);
  }
  dump("v", resp.L, resp.V);
}

}  // namespace sls
