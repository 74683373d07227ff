#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "ergcbf/plants.hpp"
#include "ergcbf/scenario.hpp"
#include "ergcbf/simulate.hpp"

namespace ergcbf::tuning {

using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::VectorXd;

// sum over logged steps of ||y(t) - g(t)||^2 dt, truncated at t_stop;
// pass nullopt to integrate the whole log (incomplete-task fallback)
double loss(const sim::TrajectoryLog& log, std::optional<double> t_stop);

// One zero-order-hold RK4 update of the tracking sensitivity s = dx/dtheta
// (4x2, theta = [kp, kd]) alongside the plant state x under reference g.
MatrixXd sensitivity_step(const MatrixXd& s, const VectorXd& x, const VectorXd& g,
                          const plants::DoubleIntegratorGains& gains, double dt);

// Gradient of the tracking loss on a frozen governor signal, propagated by
// the sensitivity equation.
Vector2d sensitivity_gradient(const stl::Signal& g_signal, const VectorXd& x0,
                              const plants::DoubleIntegratorGains& gains, double t_stop);

// Central-difference oracle on the same frozen replay.
Vector2d finite_diff_gradient_frozen(const stl::Signal& g_signal, const VectorXd& x0,
                                     const plants::DoubleIntegratorGains& gains, double t_stop,
                                     double delta);

// theta means (kp, kd) for the double integrator and (k_x, k_v) for the
// quadrotor
Vector2d scenario_theta(const scenario::ScenarioConfig& config);
void apply_theta(scenario::ScenarioConfig* config, const Vector2d& theta);
bool theta_stabilizes(const scenario::ScenarioConfig& config, const Vector2d& theta);

// Central differences over full closed-loop re-simulations (governor
// feedback included).
Vector2d finite_diff_gradient(const scenario::ScenarioConfig& config, const Vector2d& theta,
                              double delta);

struct IterationMetrics {
  Vector2d theta;
  double loss = 0.0;
  std::optional<double> t_g;  // reach completion of the governor
  std::optional<double> t_a;  // reach completion of the agent
  double completion_gap = 0.0;
  double mean_dsm = 0.0;
  double min_dsm = 0.0;
};

struct TuningRun {
  std::vector<IterationMetrics> history;  // initial gains first, final gains last
  bool stalled = false;
  double final_alpha = 0.0;

  const IterationMetrics& initial() const { return history.front(); }
  const IterationMetrics& final_entry() const { return history.back(); }
};

struct TuneOptions {
  int iterations = 20;
  double alpha = 1e-3;
  bool use_finite_differences = false;  // gradient oracle instead of sensitivities
  double fd_delta = 1e-4;
};

// theta <- theta - alpha grad(L); Hurwitz-violating steps are rejected with
// alpha halved, stalling below 1e-8.
TuningRun tune(const scenario::ScenarioConfig& config, const TuneOptions& options = {});

}  // namespace ergcbf::tuning
