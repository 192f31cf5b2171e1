#pragma once

#include <string>
#include <vector>

#include "sls/types.hpp"

namespace sls::conic {

// Sparse affine expression c0 + sum_i coeff_i * x_i.
struct LinExpr {
  double constant = 0.0;
  std::vector<std::pair<int, double>> terms;

  LinExpr() = default;
  LinExpr(double c) : constant(c) {}  // NOLINT: implicit by design
  static LinExpr variable(int idx, double coeff = 1.0) {
    LinExpr e;
    e.terms.emplace_back(idx, coeff);
    return e;
  }

  LinExpr& operator+=(const LinExpr& o);
  LinExpr& operator-=(const LinExpr& o);
  LinExpr& operator*=(double s);
  // Merge duplicate variable indices and drop zero coefficients.
  void compress();
};

LinExpr operator+(LinExpr a, const LinExpr& b);
LinExpr operator-(LinExpr a, const LinExpr& b);
LinExpr operator*(double s, LinExpr a);
LinExpr operator-(LinExpr a);

// Handle to a symmetric matrix variable: entry (i, j) shares a scalar
// variable with (j, i).
struct SymVar {
  int dim = 0;
  std::vector<int> idx;  // row-major upper-triangular storage

  int operator()(int i, int j) const;
  LinExpr expr(int i, int j) const { return LinExpr::variable((*this)(i, j)); }
};

// Grid of affine expressions, used for PSD constraint blocks.
using ExprMatrix = std::vector<std::vector<LinExpr>>;

ExprMatrix expr_matrix(int rows, int cols);
// Adds coeff * M starting at (r0, c0), where M is a constant matrix.
void add_constant_block(ExprMatrix& m, int r0, int c0, const MatrixXd& M, double coeff = 1.0);
// Adds coeff * (M * X) where X is a matrix of expressions (entry grid).
void add_product_block(ExprMatrix& m, int r0, int c0, const MatrixXd& M, const ExprMatrix& X,
                       double coeff = 1.0);
ExprMatrix sym_var_matrix(const SymVar& v);
ExprMatrix transpose(const ExprMatrix& m);

// Linear objective over scalar and symmetric-matrix variables subject to
// affine PSD blocks, second-order cones, equalities, and inequalities.
class ConicProgram {
 public:
  int add_scalar();
  SymVar add_symmetric(int dim);

  void minimize(LinExpr objective);
  // entries must be square; only the upper triangle is read and the block is
  // constrained to be symmetric PSD.
  void add_psd_block(const ExprMatrix& entries);
  // t >= ||u||_2.
  void add_soc(LinExpr t, std::vector<LinExpr> u);
  void add_eq(LinExpr e);    // e == 0
  void add_ineq(LinExpr e);  // e >= 0

  int num_vars() const { return num_vars_; }

  // Primal standard sparse SDPA export; second-order cones are written as
  // arrow-head LMI blocks and equalities as paired inequalities.
  void export_sdpa(const std::string& path) const;

  // Internal representation, read by the solver and the SDPA exporter.
  int num_vars_ = 0;
  LinExpr objective_;
  std::vector<ExprMatrix> psd_blocks_;
  std::vector<std::pair<LinExpr, std::vector<LinExpr>>> socs_;
  std::vector<LinExpr> eqs_;
  std::vector<LinExpr> ineqs_;
};

enum class SolveStatus { optimal, infeasible, unbounded, numerical_failure };

std::string to_string(SolveStatus s);

struct ConicSolution {
  SolveStatus status = SolveStatus::numerical_failure;
  VectorXd x;
  double objective = 0.0;
  double dual_objective = 0.0;
  double gap = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  std::string message;
  // PSD-block duals at the solution (optimal) or an approximate improving
  // ray (infeasible): Z >= 0 with <Z, F_i> ~ 0 for every variable and
  // <Z, F_0> < 0.
  std::vector<MatrixXd> psd_duals;

  double value(int var) const { return x(var); }
  MatrixXd value(const SymVar& v) const;
  double value(const LinExpr& e) const;
};

ConicSolution solve_conic(const ConicProgram& prog, double tol = 1e-8);

}  // namespace sls::conic
