#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ergcbf/plants.hpp"
#include "ergcbf/scenario.hpp"
#include "ergcbf/stl.hpp"

namespace ergcbf::sim {

using Eigen::VectorXd;

struct StepRecord {
  double t = 0.0;
  VectorXd x;                  // flattened plant state
  VectorXd y;                  // output position
  VectorXd g;                  // governor reference
  double dsm = 0.0;
  double energy = 0.0;         // (x - xbar_g)^T P (x - xbar_g)
  VectorXd u_g;
  VectorXd u_plant;            // DI: accel; quadrotor: [f, M]
  double b_stl = 0.0;          // smooth task barrier, +inf when inactive
  double d_g = 0.0;            // governor clearance d_s(g)
  double d_y = 0.0;            // output clearance
  std::vector<double> barrier_values;  // per atomic component, NaN when inactive
  std::string qp_status;
  std::vector<int> qp_active;
  double slack = 0.0;
};

struct TrajectoryLog {
  double dt = 0.01;
  std::vector<std::string> barrier_labels;
  std::vector<StepRecord> steps;

  stl::Signal output_signal() const;
  stl::Signal governor_signal() const;
};

struct RunMetrics {
  double min_dsm = 0.0;
  double mean_dsm = 0.0;
  double min_output_clearance = 0.0;
  double min_governor_clearance = 0.0;
  std::optional<double> robustness_g;
  std::optional<double> robustness_y;
  std::optional<double> t_g;        // completion time, always-windows included
  std::optional<double> t_a;
  std::optional<double> t_g_reach;  // reach-task completion only
  std::optional<double> t_a_reach;
  double tracking_loss = 0.0;       // sum ||y - g||^2 dt over [0, t_a_reach]
  bool incomplete_task = false;     // loss fell back to the full horizon
  int relaxed_steps = 0;
  double max_slack = 0.0;
  double max_rotation_drift = 0.0;  // quadrotor only
  bool task_satisfied = false;      // robustness_y > 0; true without a task
};

struct RunResult {
  TrajectoryLog log;
  RunMetrics metrics;
};

// The closed loop of the paper: margin -> barriers -> navigation QP ->
// governor step -> tracking controller -> RK4 plant step, at the
// configured rate.
RunResult run_closed_loop(const scenario::ScenarioConfig& config);

// Lyapunov certificate of the tracking loop: P from the closed-loop
// Lyapunov equation (Q = I) and the output gain l.
struct TrackingCertificate {
  Eigen::MatrixXd P;
  double l = 1.0;
};
TrackingCertificate tracking_certificate(const scenario::ScenarioConfig& config);

RunMetrics compute_metrics(const TrajectoryLog& log, const scenario::ScenarioConfig& config);

// Double-integrator tracking of a frozen reference signal; used by the
// gain-tuning gradient checks.
TrajectoryLog replay_di_tracking(const stl::Signal& g_signal, const VectorXd& x0,
                                 const plants::DoubleIntegratorGains& gains);

struct HocbfRun {
  TrajectoryLog log;
  std::vector<std::string> target_names;
  std::vector<bool> reached;
  std::vector<double> reach_times;  // -1 when never reached
  int infeasible_steps = 0;
};

// The conservative baseline: straight pursuit of each reach center in
// temporal order, filtered by second-order exponential barrier rows.
HocbfRun run_hocbf_baseline(const scenario::ScenarioConfig& config, double k1, double k2);

// reach/until target regions of the formula in temporal order
std::vector<std::pair<std::string, stl::Predicate>> ordered_targets(const stl::Formula& formula);

}  // namespace ergcbf::sim
