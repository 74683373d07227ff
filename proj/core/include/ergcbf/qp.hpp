#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace ergcbf::qp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// minimize 1/2 u^T H u + f^T u   s.t.  G u <= h,  lower <= u <= upper
//
// Constraint rows are indexed [0, m) for G, [m, m+p) for upper bounds and
// [m+p, m+2p) for lower bounds; duals and active_set use that numbering.
struct QpProblem {
  MatrixXd H;       // p x p, PSD (lambda_min >= -1e-10)
  VectorXd f;
  MatrixXd G;       // m x p
  VectorXd h;
  VectorXd lower;   // empty or size p; +-inf entries allowed
  VectorXd upper;

  int num_vars() const { return static_cast<int>(H.rows()); }
  int num_ineq() const { return static_cast<int>(G.rows()); }
};

enum class QpStatus { optimal, infeasible, max_iterations };

struct QpSolution {
  VectorXd u;
  QpStatus status = QpStatus::max_iterations;
  double kkt_residual = 0.0;       // worst of the four KKT residual classes
  std::vector<int> active_set;     // row indices active at the solution
  VectorXd duals;                  // one multiplier per constraint row
  int pivots = 0;
};

struct KktReport {
  double stationarity = 0.0;       // ||H u + f + A^T lambda||_inf
  double primal_feasibility = 0.0; // max constraint violation
  double dual_feasibility = 0.0;   // max(0, -min lambda)
  double complementarity = 0.0;    // max |lambda_i * slack_i|
  double worst() const;
};

// Active set carried across control steps; pass the previous solution's
// active_set/u to warm start the next solve.
struct WarmStart {
  VectorXd u;
  std::vector<int> active;
};

QpSolution solve(const QpProblem& problem);
QpSolution solve(const QpProblem& problem, const WarmStart& warm);

KktReport check_kkt(const QpProblem& problem, const VectorXd& u, const VectorXd& duals);

std::string to_string(QpStatus s);

}  // namespace ergcbf::qp
