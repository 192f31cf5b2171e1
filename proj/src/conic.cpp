#include "sls/conic.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

namespace sls::conic {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------
// Expressions

LinExpr& LinExpr::operator+=(const LinExpr& o) {
  constant += o.constant;
  terms.insert(terms.end(), o.terms.begin(), o.terms.end());
  return *this;
}

LinExpr& LinExpr::operator-=(const LinExpr& o) {
  constant -= o.constant;
  for (const auto& [i, v] : o.terms) terms.emplace_back(i, -v);
  return *this;
}

LinExpr& LinExpr::operator*=(double s) {
  constant *= s;
  for (auto& [i, v] : terms) v *= s;
  return *this;
}

void LinExpr::compress() {
  std::sort(terms.begin(), terms.end());
  std::vector<std::pair<int, double>> merged;
  for (const auto& [i, v] : terms) {
    if (!merged.empty() && merged.back().first == i)
      merged.back().second += v;
    else
      merged.emplace_back(i, v);
  }
  merged.erase(std::remove_if(merged.begin(), merged.end(),
                              [](const auto& t) { return t.second == 0.0; }),
               merged.end());
  terms = std::move(merged);
}

LinExpr operator+(LinExpr a, const LinExpr& b) { return a += b; }
LinExpr operator-(LinExpr a, const LinExpr& b) { return a -= b; }
LinExpr operator*(double s, LinExpr a) { return a *= s; }
LinExpr operator-(LinExpr a) { return a *= -1.0; }

int SymVar::operator()(int i, int j) const {
  if (i > j) std::swap(i, j);
  if (i < 0 || j >= dim) throw std::out_of_range("SymVar: index out of range");
  return idx[static_cast<std::size_t>(i) * dim + j - i * (i + 1) / 2];
}

ExprMatrix expr_matrix(int rows, int cols) {
  return ExprMatrix(rows, std::vector<LinExpr>(cols));
}

void add_constant_block(ExprMatrix& m, int r0, int c0, const MatrixXd& M, double coeff) {
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index j = 0; j < M.cols(); ++j)
      m[r0 + i][c0 + j] += LinExpr(coeff * M(i, j));
}

void add_product_block(ExprMatrix& m, int r0, int c0, const MatrixXd& M, const ExprMatrix& X,
                       double coeff) {
  const auto rows = static_cast<int>(X.size());
  if (M.cols() != rows) throw std::invalid_argument("add_product_block: inner dimension mismatch");
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (int k = 0; k < rows; ++k) {
      double w = coeff * M(i, k);
      if (w == 0.0) continue;
      for (std::size_t j = 0; j < X[k].size(); ++j) m[r0 + i][c0 + j] += w * X[k][j];
    }
}

ExprMatrix sym_var_matrix(const SymVar& v) {
  ExprMatrix m = expr_matrix(v.dim, v.dim);
  for (int i = 0; i < v.dim; ++i)
    for (int j = 0; j < v.dim; ++j) m[i][j] = v.expr(i, j);
  return m;
}

ExprMatrix transpose(const ExprMatrix& m) {
  if (m.empty()) return {};
  ExprMatrix t = expr_matrix(static_cast<int>(m[0].size()), static_cast<int>(m.size()));
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[i].size(); ++j) t[j][i] = m[i][j];
  return t;
}

// ---------------------------------------------------------------------------
// Program construction

int ConicProgram::add_scalar() { return num_vars_++; }

SymVar ConicProgram::add_symmetric(int dim) {
  if (dim < 1) throw std::invalid_argument("add_symmetric: dimension must be positive");
  SymVar v;
  v.dim = dim;
  v.idx.resize(static_cast<std::size_t>(dim) * (dim + 1) / 2);
  for (auto& i : v.idx) i = num_vars_++;
  return v;
}

namespace {
void check_expr(const LinExpr& e, int nv, const char* where) {
  for (const auto& [i, v] : e.terms) {
    if (i < 0 || i >= nv) throw std::invalid_argument(std::string(where) + ": undeclared variable");
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(where) + ": non-finite coefficient");
  }
  if (!std::isfinite(e.constant))
    throw std::invalid_argument(std::string(where) + ": non-finite constant");
}
}  // namespace

void ConicProgram::minimize(LinExpr objective) {
  check_expr(objective, num_vars_, "minimize");
  objective.compress();
  objective_ = std::move(objective);
}

void ConicProgram::add_psd_block(const ExprMatrix& entries) {
  if (entries.empty()) throw std::invalid_argument("add_psd_block: empty block");
  for (const auto& row : entries) {
    if (row.size() != entries.size()) throw std::invalid_argument("add_psd_block: block not square");
    for (const auto& e : row) check_expr(e, num_vars_, "add_psd_block");
  }
  psd_blocks_.push_back(entries);
  for (auto& row : psd_blocks_.back())
    for (auto& e : row) e.compress();
}

void ConicProgram::add_soc(LinExpr t, std::vector<LinExpr> u) {
  check_expr(t, num_vars_, "add_soc");
  t.compress();
  for (auto& e : u) {
    check_expr(e, num_vars_, "add_soc");
    e.compress();
  }
  socs_.emplace_back(std::move(t), std::move(u));
}

void ConicProgram::add_eq(LinExpr e) {
  check_expr(e, num_vars_, "add_eq");
  e.compress();
  eqs_.push_back(std::move(e));
}

void ConicProgram::add_ineq(LinExpr e) {
  check_expr(e, num_vars_, "add_ineq");
  e.compress();
  ineqs_.push_back(std::move(e));
}

// ---------------------------------------------------------------------------
// Compiled barrier representation (x-space; optional phase-1 shift variable)

namespace {

struct Triplet {
  int r, c;
  double v;
};

struct PsdBlock {
  int d = 0;
  MatrixXd F0;
  std::vector<int> vars;                    // global variable indices
  std::vector<std::vector<Triplet>> Fi;     // full (mirrored) triplets per var

  MatrixXd eval(const VectorXd& x) const {
    MatrixXd S = F0;
    for (std::size_t k = 0; k < vars.size(); ++k) {
      double xv = x(vars[k]);
      if (xv == 0.0) continue;
      for (const auto& t : Fi[k]) S(t.r, t.c) += xv * t.v;
    }
    return S;
  }
};

struct SocBlock {
  std::vector<int> vars;
  VectorXd jt;   // coefficients of t over vars
  double t0 = 0.0;
  MatrixXd Ju;   // m x k
  VectorXd u0;   // m
  MatrixXd Gu;   // Ju' Ju, precomputed

  void eval(const VectorXd& x, double& t, VectorXd& u) const {
    VectorXd xl(vars.size());
    for (std::size_t k = 0; k < vars.size(); ++k) xl(k) = x(vars[k]);
    t = t0 + jt.dot(xl);
    u = u0 + Ju * xl;
  }
};

struct IneqRow {
  std::vector<std::pair<int, double>> terms;
  double c0 = 0.0;

  double eval(const VectorXd& x) const {
    double v = c0;
    for (const auto& [i, w] : terms) v += w * x(i);
    return v;
  }
};

struct Compiled {
  int nv = 0;
  int shift_var = -1;  // phase-1 slack; -1 when absent
  std::vector<PsdBlock> psd;
  std::vector<SocBlock> soc;
  std::vector<IneqRow> ineq;
  double nu = 0.0;

  Compiled(const ConicProgram& prog, bool phase1) {
    nv = prog.num_vars_ + (phase1 ? 1 : 0);
    shift_var = phase1 ? prog.num_vars_ : -1;

    for (const auto& entries : prog.psd_blocks_) {
      PsdBlock b;
      b.d = static_cast<int>(entries.size());
      b.F0 = MatrixXd::Zero(b.d, b.d);
      std::map<int, std::vector<Triplet>> by_var;
      for (int i = 0; i < b.d; ++i)
        for (int j = i; j < b.d; ++j) {
          const LinExpr& e = entries[i][j];
          b.F0(i, j) += e.constant;
          if (i != j) b.F0(j, i) += e.constant;
          for (const auto& [vi, w] : e.terms) {
            by_var[vi].push_back({i, j, w});
            if (i != j) by_var[vi].push_back({j, i, w});
          }
        }
      if (phase1) {
        auto& t = by_var[shift_var];
        for (int i = 0; i < b.d; ++i) t.push_back({i, i, 1.0});
      }
      for (auto& [vi, trips] : by_var) {
        b.vars.push_back(vi);
        b.Fi.push_back(std::move(trips));
      }
      nu += b.d;
      psd.push_back(std::move(b));
    }

    for (const auto& [texpr, uexprs] : prog.socs_) {
      SocBlock s;
      std::map<int, int> local;
      auto touch = [&](int vi) {
        if (!local.count(vi)) {
          local[vi] = static_cast<int>(s.vars.size());
          s.vars.push_back(vi);
        }
      };
      for (const auto& [vi, w] : texpr.terms) touch(vi);
      for (const auto& ue : uexprs)
        for (const auto& [vi, w] : ue.terms) touch(vi);
      if (phase1) touch(shift_var);
      const int k = static_cast<int>(s.vars.size());
      const int m = static_cast<int>(uexprs.size());
      s.jt = VectorXd::Zero(k);
      s.t0 = texpr.constant;
      for (const auto& [vi, w] : texpr.terms) s.jt(local[vi]) += w;
      if (phase1) s.jt(local[shift_var]) += 1.0;
      s.Ju = MatrixXd::Zero(m, k);
      s.u0 = VectorXd::Zero(m);
      for (int r = 0; r < m; ++r) {
        s.u0(r) = uexprs[r].constant;
        for (const auto& [vi, w] : uexprs[r].terms) s.Ju(r, local[vi]) += w;
      }
      s.Gu = s.Ju.transpose() * s.Ju;
      nu += 2.0;
      soc.push_back(std::move(s));
    }

    for (const auto& e : prog.ineqs_) {
      IneqRow r;
      r.terms = e.terms;
      r.c0 = e.constant;
      if (phase1) r.terms.emplace_back(shift_var, 1.0);
      nu += 1.0;
      ineq.push_back(std::move(r));
    }
  }

  // Barrier value; +inf outside the strict interior.
  double barrier(const VectorXd& x) const {
    double phi = 0.0;
    for (const auto& b : psd) {
      Eigen::LLT<MatrixXd> llt(b.eval(x));
      if (llt.info() != Eigen::Success) return kInf;
      const MatrixXd& packed = llt.matrixLLT();
      double logdet = 0.0;
      for (int i = 0; i < b.d; ++i) {
        double lii = packed(i, i);
        if (!(lii > 0.0)) return kInf;
        logdet += std::log(lii);
      }
      phi -= 2.0 * logdet;
    }
    for (const auto& s : soc) {
      double t;
      VectorXd u;
      s.eval(x, t, u);
      double d = t * t - u.squaredNorm();
      if (!(t > 0.0) || !(d > 0.0)) return kInf;
      phi -= std::log(d);
    }
    for (const auto& r : ineq) {
      double g = r.eval(x);
      if (!(g > 0.0)) return kInf;
      phi -= std::log(g);
    }
    return phi;
  }

  // Gradient and Hessian of the barrier at a strictly interior x.
  void grad_hess(const VectorXd& x, VectorXd& g, MatrixXd& H) const {
    g = VectorXd::Zero(nv);
    H = MatrixXd::Zero(nv, nv);

    for (const auto& b : psd) {
      MatrixXd S = b.eval(x);
      Eigen::LLT<MatrixXd> llt(S);
      if (llt.info() != Eigen::Success)
        throw std::runtime_error("conic: PSD block left the interior during a Newton step");
      MatrixXd Sinv = llt.solve(MatrixXd::Identity(b.d, b.d));
      const int k = static_cast<int>(b.vars.size());
      MatrixXd R(k, b.d * b.d);
      MatrixXd Fi = MatrixXd::Zero(b.d, b.d);
      for (int q = 0; q < k; ++q) {
        Fi.setZero();
        for (const auto& t : b.Fi[q]) Fi(t.r, t.c) += t.v;
        double dot = 0.0;
        for (const auto& t : b.Fi[q]) dot += t.v * Sinv(t.r, t.c);
        g(b.vars[q]) -= dot;
        // M = L^{-1} Fi L^{-T}; H_qq' = <M_q, M_q'>.
        MatrixXd M = llt.matrixL().solve(Fi);
        M = llt.matrixL().solve(M.transpose()).transpose();
        R.row(q) = Eigen::Map<const VectorXd>(M.data(), M.size());
      }
      MatrixXd Hb = R * R.transpose();
      for (int q = 0; q < k; ++q)
        for (int r = 0; r < k; ++r) H(b.vars[q], b.vars[r]) += Hb(q, r);
    }

    for (const auto& s : soc) {
      double t;
      VectorXd u;
      s.eval(x, t, u);
      double d = t * t - u.squaredNorm();
      if (!(d > 0.0)) throw std::runtime_error("conic: SOC left the interior during a Newton step");
      VectorXd w = s.Ju.transpose() * u - t * s.jt;  // k
      VectorXd gl = (2.0 / d) * w;
      MatrixXd Hl = (2.0 / d) * (s.Gu - s.jt * s.jt.transpose()) +
                    (4.0 / (d * d)) * (w * w.transpose());
      const int k = static_cast<int>(s.vars.size());
      for (int q = 0; q < k; ++q) {
        g(s.vars[q]) += gl(q);
        for (int r = 0; r < k; ++r) H(s.vars[q], s.vars[r]) += Hl(q, r);
      }
    }

    for (const auto& r : ineq) {
      double gval = r.eval(x);
      if (!(gval > 0.0)) throw std::runtime_error("conic: inequality left the interior");
      for (const auto& [i, wi] : r.terms) {
        g(i) -= wi / gval;
        for (const auto& [j, wj] : r.terms) H(i, j) += wi * wj / (gval * gval);
      }
    }
  }

  // Largest constraint violation at x (for phase-1 initialization).
  double max_violation(const VectorXd& x) const {
    double viol = 0.0;
    for (const auto& b : psd) {
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(b.eval(x), Eigen::EigenvaluesOnly);
      viol = std::max(viol, -es.eigenvalues().minCoeff());
    }
    for (const auto& s : soc) {
      double t;
      VectorXd u;
      s.eval(x, t, u);
      viol = std::max(viol, u.norm() - t);
    }
    for (const auto& r : ineq) viol = std::max(viol, -r.eval(x));
    return viol;
  }
};

struct BarrierOutcome {
  bool converged = false;
  bool unbounded = false;
  bool early_exit = false;
  double final_t = 1.0;
  std::string error;
};

// Minimizes c'x over the interior of C along x = xoff + Nb * z, following the
// central path until nu/t <= gap_tol.  stop_below, when finite, triggers an
// early exit once the objective falls below it.  A positive ball_radius adds
// the trust barrier -log(R^2 - ||z||^2), which keeps phase-1 iterates bounded
// when the slack objective has flat escape directions.
BarrierOutcome barrier_minimize(const Compiled& C, const VectorXd& c, const VectorXd& xoff,
                                const MatrixXd& Nb, VectorXd& z, double gap_tol,
                                double stop_below = -kInf, double ball_radius = 0.0) {
  BarrierOutcome out;
  if (z.size() == 0) {  // point fully determined by the equalities
    out.converged = std::isfinite(C.barrier(xoff));
    if (!out.converged) out.error = "fixed point is not strictly feasible";
    return out;
  }
  const double mu = 20.0;
  double t = 1.0;
  VectorXd cz = Nb.transpose() * c;
  const double nu = C.nu + (ball_radius > 0.0 ? 2.0 : 0.0);
  const double target_t = std::max(1.0, 2.0 * nu / gap_tol);

  auto merit_barrier = [&](const VectorXd& zz) {
    double phi = C.barrier(xoff + Nb * zz);
    if (ball_radius > 0.0) {
      double d = ball_radius * ball_radius - zz.squaredNorm();
      if (!(d > 0.0)) return kInf;
      phi -= std::log(d);
    }
    return phi;
  };

  VectorXd g;
  MatrixXd H;
  int steps = 0;
  for (int outer = 0; outer < 200; ++outer) {
    for (int it = 0; it < 80; ++it) {
      ++steps;
      VectorXd x = xoff + Nb * z;
      try {
        C.grad_hess(x, g, H);
      } catch (const std::exception& e) {
        out.error = e.what();
        return out;
      }
      VectorXd gz = t * cz + Nb.transpose() * g;
      MatrixXd Hz = Nb.transpose() * H * Nb;
      if (ball_radius > 0.0) {
        double d = ball_radius * ball_radius - z.squaredNorm();
        gz += (2.0 / d) * z;
        Hz += (2.0 / d) * MatrixXd::Identity(Hz.rows(), Hz.cols()) +
              (4.0 / (d * d)) * (z * z.transpose());
      }

      VectorXd dz;
      double reg = 0.0;
      for (int attempt = 0; attempt < 8; ++attempt) {
        Eigen::LDLT<MatrixXd> ldlt(Hz + reg * MatrixXd::Identity(Hz.rows(), Hz.cols()));
        dz = ldlt.solve(-gz);
        if (ldlt.info() == Eigen::Success && dz.allFinite() && gz.dot(dz) < 0.0) break;
        double scale = Hz.size() > 0 ? Hz.diagonal().cwiseAbs().maxCoeff() : 0.0;
        reg = (reg == 0.0) ? 1e-10 * (1.0 + scale) : reg * 100.0;
        dz.setZero();
      }
      double decrement = -gz.dot(dz);
      if (!(decrement > 0.0)) break;  // centered (or stuck at numerical floor)
      if (decrement * 0.5 < 1e-2) {
        // Close enough to the central path; refine only near the target gap.
        if (t < target_t || decrement * 0.5 < 1e-10) break;
      }

      double f0 = t * cz.dot(z) + merit_barrier(z);
      double alpha = 1.0;
      bool moved = false;
      while (alpha > 1e-13) {
        VectorXd zt = z + alpha * dz;
        double ft = t * cz.dot(zt) + merit_barrier(zt);
        if (ft < f0 - 0.25 * alpha * decrement) {
          z = zt;
          moved = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!moved) break;
      double objval = cz.dot(z) + c.dot(xoff);
      if (objval < stop_below) {
        out.early_exit = true;
        out.final_t = t;
        return out;
      }
      if (objval < -1e14 || z.norm() > 1e12) {
        out.unbounded = true;
        return out;
      }
    }
    double objval = cz.dot(z) + c.dot(xoff);
    if (objval < stop_below) {
      out.early_exit = true;
      out.final_t = t;
      return out;
    }
    if (t >= target_t) {
      out.converged = true;
      out.final_t = t;
      if (std::getenv("SLS_CONIC_DEBUG"))
        std::fprintf(stderr, "[conic] nv=%d nz=%d nu=%.0f steps=%d\n", (int)C.nv,
                     (int)z.size(), nu, steps);
      return out;
    }
    t = std::min(t * mu, target_t);
  }
  out.error = "barrier: outer iteration cap reached";
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Solution helpers

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::numerical_failure: return "numerical-failure";
  }
  return "?";
}

MatrixXd ConicSolution::value(const SymVar& v) const {
  MatrixXd M(v.dim, v.dim);
  for (int i = 0; i < v.dim; ++i)
    for (int j = 0; j < v.dim; ++j) M(i, j) = x(v(i, j));
  return M;
}

double ConicSolution::value(const LinExpr& e) const {
  double v = e.constant;
  for (const auto& [i, w] : e.terms) v += w * x(i);
  return v;
}

// ---------------------------------------------------------------------------
// Top-level solve

ConicSolution solve_conic(const ConicProgram& prog, double tol) {
  ConicSolution sol;
  const int nv = prog.num_vars();

  // Eliminate equalities: x = xp + N y with N an orthonormal null-space basis.
  VectorXd xp = VectorXd::Zero(nv);
  MatrixXd N = MatrixXd::Identity(nv, nv);
  if (!prog.eqs_.empty()) {
    const int me = static_cast<int>(prog.eqs_.size());
    MatrixXd Aeq = MatrixXd::Zero(me, nv);
    VectorXd beq(me);
    for (int r = 0; r < me; ++r) {
      beq(r) = -prog.eqs_[r].constant;
      for (const auto& [i, w] : prog.eqs_[r].terms) Aeq(r, i) += w;
    }
    Eigen::JacobiSVD<MatrixXd> svd(Aeq, Eigen::ComputeThinU | Eigen::ComputeFullV);
    xp = svd.solve(beq);
    if ((Aeq * xp - beq).norm() > 1e-8 * (1.0 + beq.norm())) {
      sol.status = SolveStatus::infeasible;
      sol.message = "inconsistent equality constraints";
      return sol;
    }
    double smax = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
    int rank = 0;
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
      if (svd.singularValues()(i) > 1e-12 * std::max(1.0, smax)) ++rank;
    N = svd.matrixV().rightCols(nv - rank);
  }
  const int m = static_cast<int>(N.cols());

  Compiled C(prog, /*phase1=*/false);
  const bool has_cones = !C.psd.empty() || !C.soc.empty() || !C.ineq.empty();

  VectorXd y = VectorXd::Zero(m);
  if (has_cones) {
    // Phase 1: minimize the uniform shift s over (y, s).
    Compiled C1(prog, /*phase1=*/true);
    MatrixXd N1 = MatrixXd::Zero(nv + 1, m + 1);
    N1.topLeftCorner(nv, m) = N;
    N1(nv, m) = 1.0;
    VectorXd xoff1 = VectorXd::Zero(nv + 1);
    xoff1.head(nv) = xp;
    VectorXd c1 = VectorXd::Zero(nv + 1);
    c1(nv) = 1.0;

    VectorXd x1 = VectorXd::Zero(nv + 1);
    x1.head(nv) = xp;
    double s0 = C1.max_violation(x1) + 1.0;
    VectorXd z1 = VectorXd::Zero(m + 1);
    z1(m) = s0;

    BarrierOutcome p1 = barrier_minimize(C1, c1, xoff1, N1, z1, std::min(tol, 1e-6),
                                         /*stop_below=*/-1e-3,
                                         /*ball_radius=*/1e6 * (1.0 + s0));
    double s_final = z1(m);
    if (!p1.early_exit) {
      if (!p1.converged) {
        sol.status = SolveStatus::numerical_failure;
        sol.message = "phase 1 failed: " + (p1.error.empty() ? "no convergence" : p1.error);
        return sol;
      }
      if (s_final > 1e-7 * (1.0 + s0)) {
        sol.status = SolveStatus::infeasible;
        sol.message = "phase 1 optimum " + std::to_string(s_final) + " > 0";
        // Approximate Farkas certificate from the phase-1 barrier duals.
        VectorXd xf = xoff1 + N1 * z1;
        double tfin = p1.final_t;
        for (const auto& b : C1.psd) {
          MatrixXd S = b.eval(xf);
          sol.psd_duals.push_back(S.llt().solve(MatrixXd::Identity(b.d, b.d)) / tfin);
        }
        for (const auto& r : C1.ineq)
          sol.psd_duals.push_back(MatrixXd::Constant(1, 1, 1.0 / (tfin * r.eval(xf))));
        return sol;
      }
      if (s_final > 0.0) {
        sol.status = SolveStatus::numerical_failure;
        sol.message = "no strictly feasible point found (phase 1 optimum " +
                      std::to_string(s_final) + ")";
        return sol;
      }
    }
    y = z1.head(m);
    // Interior check without the shift.
    if (!std::isfinite(C.barrier(xp + N * y))) {
      sol.status = SolveStatus::numerical_failure;
      sol.message = "phase 1 endpoint not strictly feasible";
      return sol;
    }
  }

  VectorXd c = VectorXd::Zero(nv);
  for (const auto& [i, w] : prog.objective_.terms) c(i) += w;

  double final_t = 1.0;
  if (c.norm() > 0.0 || !has_cones) {
    if (!has_cones) {
      // Pure linear-equality problem: optimal iff the objective is constant
      // on the feasible affine set.
      if ((N.transpose() * c).norm() > 1e-10 * (1.0 + c.norm())) {
        sol.status = SolveStatus::unbounded;
        sol.message = "objective unbounded on the equality-feasible set";
        return sol;
      }
    } else {
      BarrierOutcome p2 = barrier_minimize(C, c, xp, N, y, tol);
      if (p2.unbounded) {
        sol.status = SolveStatus::unbounded;
        sol.message = "objective decreased without bound";
        return sol;
      }
      if (!p2.converged) {
        sol.status = SolveStatus::numerical_failure;
        sol.message = "phase 2 failed: " + (p2.error.empty() ? "no convergence" : p2.error);
        return sol;
      }
      final_t = p2.final_t;
    }
  }

  sol.x = xp + N * y;
  sol.objective = prog.objective_.constant + c.dot(sol.x);
  sol.gap = (has_cones && c.norm() > 0.0 && m > 0) ? C.nu / final_t : 0.0;
  sol.dual_objective = sol.objective - sol.gap;
  sol.status = SolveStatus::optimal;

  // Residuals and duals at the returned point.
  double pres = 0.0;
  for (const auto& e : prog.eqs_) {
    double v = e.constant;
    for (const auto& [i, w] : e.terms) v += w * sol.x(i);
    pres = std::max(pres, std::abs(v));
  }
  for (const auto& b : C.psd) {
    MatrixXd S = b.eval(sol.x);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(S, Eigen::EigenvaluesOnly);
    pres = std::max(pres, -es.eigenvalues().minCoeff());
    sol.psd_duals.push_back(S.llt().solve(MatrixXd::Identity(b.d, b.d)) / final_t);
  }
  sol.primal_residual = std::max(pres, 0.0);
  if (has_cones && c.norm() > 0.0 && N.cols() > 0) {
    VectorXd g;
    MatrixXd H;
    C.grad_hess(sol.x, g, H);
    sol.dual_residual = (N.transpose() * (final_t * c + g)).cwiseAbs().maxCoeff() / final_t;
  }
  return sol;
}

// ---------------------------------------------------------------------------
// SDPA export

void ConicProgram::export_sdpa(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);

  // Block table: PSD blocks, SOC arrow blocks, one diagonal block for the
  // inequalities plus paired equalities.
  std::vector<int> block_sizes;
  for (const auto& b : psd_blocks_) block_sizes.push_back(static_cast<int>(b.size()));
  for (const auto& [t, u] : socs_) block_sizes.push_back(static_cast<int>(u.size()) + 1);
  const int diag_rows = static_cast<int>(ineqs_.size() + 2 * eqs_.size());
  if (diag_rows > 0) block_sizes.push_back(-diag_rows);

  out << num_vars_ << "\n" << block_sizes.size() << "\n";
  for (std::size_t i = 0; i < block_sizes.size(); ++i)
    out << block_sizes[i] << (i + 1 < block_sizes.size() ? " " : "\n");
  VectorXd c = VectorXd::Zero(num_vars_);
  for (const auto& [i, w] : objective_.terms) c(i) += w;
  for (int i = 0; i < num_vars_; ++i) out << c(i) << (i + 1 < num_vars_ ? " " : "");
  out << "\n";

  // SDPA primal form is sum_i x_i F_i - F0 >= 0, so constants flip sign.
  auto emit = [&](int mat, int blk, int i, int j, double v) {
    if (v != 0.0 && i <= j) out << mat << " " << blk << " " << (i + 1) << " " << (j + 1) << " " << v << "\n";
  };
  int blk = 1;
  for (const auto& entries : psd_blocks_) {
    const int d = static_cast<int>(entries.size());
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        emit(0, blk, i, j, -entries[i][j].constant);
        for (const auto& [vi, w] : entries[i][j].terms) emit(vi + 1, blk, i, j, w);
      }
    ++blk;
  }
  for (const auto& [t, u] : socs_) {
    // Arrow LMI [[t, u'],[u, t I]] >= 0 is equivalent to t >= ||u||.
    emit(0, blk, 0, 0, -t.constant);
    for (const auto& [vi, w] : t.terms) emit(vi + 1, blk, 0, 0, w);
    for (std::size_t r = 0; r < u.size(); ++r) {
      emit(0, blk, 0, static_cast<int>(r) + 1, -u[r].constant);
      for (const auto& [vi, w] : u[r].terms) emit(vi + 1, blk, 0, static_cast<int>(r) + 1, w);
      emit(0, blk, static_cast<int>(r) + 1, static_cast<int>(r) + 1, -t.constant);
      for (const auto& [vi, w] : t.terms)
        emit(vi + 1, blk, static_cast<int>(r) + 1, static_cast<int>(r) + 1, w);
    }
    ++blk;
  }
  if (diag_rows > 0) {
    int row = 0;
    auto emit_row = [&](const LinExpr& e, double sign) {
      emit(0, blk, row, row, -sign * e.constant);
      for (const auto& [vi, w] : e.terms) emit(vi + 1, blk, row, row, sign * w);
      ++row;
    };
    for (const auto& e : ineqs_) emit_row(e, 1.0);
    for (const auto& e : eqs_) {
      emit_row(e, 1.0);
      emit_row(e, -1.0);
    }
  }
}

}  // namespace sls::conic
