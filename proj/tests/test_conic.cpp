#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "sls/conic.hpp"

using namespace sls::conic;
using sls::MatrixXd;

TEST_CASE("scalar PSD lower bound") {
  ConicProgram prog;
  int x = prog.add_scalar();
  prog.minimize(LinExpr::variable(x));
  ExprMatrix m = expr_matrix(1, 1);
  m[0][0] = LinExpr::variable(x) - LinExpr(1.0);
  prog.add_psd_block(m);
  ConicSolution s = solve_conic(prog);
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK(s.x(x) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(s.objective >= s.dual_objective - 1e-6);
  CHECK(s.gap <= 1e-6);
}

TEST_CASE("positive-part projection in trace norm") {
  // minimize trace(X) s.t. X >= diag(1, -1), X >= 0 -> X = diag(1, 0).
  ConicProgram prog;
  SymVar X = prog.add_symmetric(2);
  prog.minimize(X.expr(0, 0) + X.expr(1, 1));
  ExprMatrix shifted = sym_var_matrix(X);
  MatrixXd D(2, 2);
  D << 1, 0, 0, -1;
  add_constant_block(shifted, 0, 0, D, -1.0);
  prog.add_psd_block(shifted);
  prog.add_psd_block(sym_var_matrix(X));
  ConicSolution s = solve_conic(prog);
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK(s.objective == doctest::Approx(1.0).epsilon(1e-6));
  MatrixXd Xv = s.value(X);
  CHECK(Xv(0, 0) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(Xv(1, 1) == doctest::Approx(0.0).epsilon(1e-5));
}

TEST_CASE("contradictory scalar bounds are infeasible with a certificate") {
  ConicProgram prog;
  int x = prog.add_scalar();
  prog.minimize(LinExpr::variable(x));
  prog.add_ineq(LinExpr(-1.0) - LinExpr::variable(x));  // x <= -1
  prog.add_ineq(LinExpr::variable(x) - LinExpr(1.0));   // x >= 1
  ConicSolution s = solve_conic(prog);
  CHECK(s.status == SolveStatus::infeasible);
}

TEST_CASE("second-order cone attains the Euclidean norm") {
  ConicProgram prog;
  int t = prog.add_scalar();
  prog.minimize(LinExpr::variable(t));
  prog.add_soc(LinExpr::variable(t), {LinExpr(1.0), LinExpr(2.0)});
  ConicSolution s = solve_conic(prog);
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK(s.x(t) == doctest::Approx(std::sqrt(5.0)).epsilon(1e-6));
}

TEST_CASE("equality elimination") {
  ConicProgram prog;
  int x = prog.add_scalar(), y = prog.add_scalar();
  prog.minimize(LinExpr::variable(x));
  prog.add_eq(LinExpr::variable(x) + LinExpr::variable(y) - LinExpr(2.0));
  prog.add_eq(LinExpr::variable(x) - LinExpr::variable(y));
  ExprMatrix m = expr_matrix(1, 1);
  m[0][0] = LinExpr::variable(x) + LinExpr(5.0);
  prog.add_psd_block(m);
  ConicSolution s = solve_conic(prog);
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK(s.x(x) == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(s.x(y) == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("inconsistent equalities are infeasible") {
  ConicProgram prog;
  int x = prog.add_scalar();
  prog.minimize(LinExpr::variable(x));
  prog.add_eq(LinExpr::variable(x) - LinExpr(1.0));
  prog.add_eq(LinExpr::variable(x) - LinExpr(2.0));
  CHECK(solve_conic(prog).status == SolveStatus::infeasible);
}

TEST_CASE("unbounded descent is flagged") {
  ConicProgram prog;
  int x = prog.add_scalar();
  prog.minimize(LinExpr::variable(x));
  prog.add_ineq(LinExpr(1.0) - LinExpr::variable(x));  // x <= 1, no lower bound
  CHECK(solve_conic(prog).status == SolveStatus::unbounded);
}

TEST_CASE("optimal PSD blocks are feasible to 10x tolerance") {
  const double tol = 1e-8;
  ConicProgram prog;
  SymVar X = prog.add_symmetric(3);
  LinExpr obj;
  for (int i = 0; i < 3; ++i) obj += X.expr(i, i);
  prog.minimize(obj);
  ExprMatrix shifted = sym_var_matrix(X);
  MatrixXd D(3, 3);
  D << 2, 1, 0, 1, 1, 0, 0, 0, -1;
  add_constant_block(shifted, 0, 0, D, -1.0);
  prog.add_psd_block(shifted);
  prog.add_psd_block(sym_var_matrix(X));
  ConicSolution s = solve_conic(prog, tol);
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK(s.primal_residual <= 10 * tol);
  CHECK(s.objective >= s.dual_objective - 10 * tol);
  // Independent feasibility check of the shifted block.
  MatrixXd Xv = s.value(X);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(Xv - D);
  CHECK(es.eigenvalues().minCoeff() >= -10 * tol);
}

TEST_CASE("sparse SDPA export round-trips basic structure") {
  ConicProgram prog;
  int x = prog.add_scalar();
  prog.minimize(LinExpr::variable(x));
  ExprMatrix m = expr_matrix(1, 1);
  m[0][0] = LinExpr::variable(x) - LinExpr(1.0);
  prog.add_psd_block(m);
  prog.add_soc(LinExpr::variable(x), {LinExpr(1.0)});
  prog.add_eq(LinExpr::variable(x) - LinExpr(1.0));
  std::string path = "export_test.dat-s";
  prog.export_sdpa(path);
  std::ifstream in(path);
  REQUIRE(in.good());
  std::string first;
  std::getline(in, first);
  CHECK(!first.empty());
  std::remove(path.c_str());
}
