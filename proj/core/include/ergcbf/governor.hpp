#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>
#include <vector>

#include "ergcbf/qp.hpp"
#include "ergcbf/stl.hpp"
#include "ergcbf/world.hpp"

namespace ergcbf::governor {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct GovernorConfig {
  MatrixXd H;              // PSD input weight of the navigation QP
  double q_dist = -0.01;   // negative weight on the one-step-lookahead distance
  double alpha_obs = 1.0;  // linear class-K slope for obstacle rows
  double alpha_stl = 1.0;  // linear class-K slope for the task row
  VectorXd u_lower;
  VectorXd u_upper;
  double delta_floor = 0.0;
  // cap on ||g'|| = Delta ||u||; tightens the box to |u_i| <= limit/Delta
  double speed_limit = std::numeric_limits<double>::infinity();
  // static safety margin: obstacle rows keep d_s(g) >= this, so the DSM
  // retains escape authority instead of collapsing at boundaries
  double static_margin = 0.0;

  static GovernorConfig defaults(int dim);
};

void validate(const GovernorConfig& cfg, int dim);

struct GovernorState {
  VectorXd g;
  double t = 0.0;
  double dsm = 0.0;       // unclamped margin from the current plant state
  VectorXd u;             // navigation field value this step
  qp::QpSolution last_qp;
  double slack = 0.0;     // STL relaxation magnitude, 0 when the QP was feasible
  bool stl_pressure_infeasible = false;  // frozen governor could not honor d(b_stl)/dt
};

// Delta(x, g) = d_s(g, O)^2 - l^2 (x - xbar_g)^T P (x - xbar_g) with
// xbar_g = [g; 0]; the state layout is [positions; derivatives].
double dsm(const VectorXd& x, const VectorXd& g, const MatrixXd& P, double l,
           const world::Environment& env);

// Lyapunov energy (x - xbar_g)^T P (x - xbar_g)
double tracking_energy(const VectorXd& x, const VectorXd& g, const MatrixXd& P);

struct NavigationQp {
  qp::QpProblem problem;
  std::vector<int> stl_rows;            // row indices within problem.G
  std::vector<std::string> row_labels;
  std::vector<double> obstacle_values;  // b_obs per row, pre-scaling
  double stl_value = 0.0;               // +inf when no task barrier is active
  double stl_time_derivative = 0.0;
};

// One row per obstacle (plus the arena), one row for the smooth task
// barrier, box bounds, and the distance-augmented objective. The effective
// governor dynamics is g' = Delta u, so Delta scales every constraint row.
NavigationQp assemble_navigation_qp(const VectorXd& g, double t, double delta,
                                    const world::Environment& env,
                                    const stl::TimeVaryingBarrier& b_stl,
                                    const GovernorConfig& cfg, double dt);

// Slack-relaxed re-solve: STL rows gain a shared slack s >= 0 penalized by
// 1e6 ||H||; obstacle rows stay hard. Throws when even the relaxed problem
// is infeasible.
struct RelaxedSolution {
  qp::QpSolution qp;
  double slack = 0.0;
};
RelaxedSolution relax_and_resolve(const qp::QpProblem& problem,
                                  const std::vector<int>& stl_rows);

// g' = g + dt * max(delta, floor) * u (the update law integrated explicitly)
VectorXd step_reference(const VectorXd& g, double delta_eff, const VectorXd& u, double dt);

// Full governor update: margin, QP (with warm start and slack fallback),
// explicit Euler step.
GovernorState governor_step(const GovernorState& state, const VectorXd& x,
                            const MatrixXd& P, double l, const world::Environment& env,
                            const stl::TimeVaryingBarrier& b_stl,
                            const GovernorConfig& cfg, double dt);

}  // namespace ergcbf::governor
