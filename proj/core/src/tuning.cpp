#include "ergcbf/tuning.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "ergcbf/linalg.hpp"

namespace ergcbf::tuning {
namespace {

const double kInf = std::numeric_limits<double>::infinity();

// K s for K = [kp I, kd I]
Eigen::Vector2d feedback_times(const plants::DoubleIntegratorGains& gains, const VectorXd& col) {
  return gains.kp * col.head(2) + gains.kd * col.tail(2);
}

}  // namespace

double loss(const sim::TrajectoryLog& log, std::optional<double> t_stop) {
  double acc = 0.0;
  for (const auto& rec : log.steps) {
    if (t_stop && rec.t > *t_stop + 1e-9) break;
    acc += (rec.y - rec.g).squaredNorm() * log.dt;
  }
  return acc;
}

MatrixXd sensitivity_step(const MatrixXd& s, const VectorXd& x, const VectorXd& g,
                          const plants::DoubleIntegratorGains& gains, double dt) {
  if (s.rows() != 4 || s.cols() != 2) {
    throw std::invalid_argument("sensitivity_step: s must be 4x2");
  }
  VectorXd e = x;
  e.head(2) -= g;  // x - xbar_g, velocities untouched

  MatrixXd next(4, 2);
  for (int j = 0; j < 2; ++j) {
    // forcing held over the step, matching the zero-order-hold plant input
    Eigen::Vector2d dK_e = j == 0 ? Eigen::Vector2d(e.head(2)) : Eigen::Vector2d(e.tail(2));
    Eigen::Vector2d w = dK_e + feedback_times(gains, s.col(j));
    next.col(j) = plants::rk4_step(
        [&](const VectorXd& sj) { return plants::di_derivatives(sj, w); }, s.col(j), dt);
  }
  return next;
}

Vector2d sensitivity_gradient(const stl::Signal& g_signal, const VectorXd& x0,
                              const plants::DoubleIntegratorGains& gains, double t_stop) {
  VectorXd x = x0;
  MatrixXd s = MatrixXd::Zero(4, 2);
  Vector2d grad = Vector2d::Zero();
  const double dt = g_signal.dt;

  for (size_t k = 0; k < g_signal.samples.size(); ++k) {
    const double t = g_signal.time_at(k);
    if (t > t_stop + 1e-9) break;
    const VectorXd& g = g_signal.samples[k];
    const Eigen::Vector2d e_y = x.head(2) - g;
    for (int j = 0; j < 2; ++j) {
      grad[j] += 2.0 * e_y.dot(s.col(j).head(2)) * dt;
    }
    if (k + 1 == g_signal.samples.size()) break;
    const VectorXd u = plants::di_controller(x, g, gains);
    MatrixXd s_next = sensitivity_step(s, x, g, gains, dt);
    x = plants::rk4_step([&](const VectorXd& xs) { return plants::di_derivatives(xs, u); }, x, dt);
    s = s_next;
  }
  return grad;
}

Vector2d finite_diff_gradient_frozen(const stl::Signal& g_signal, const VectorXd& x0,
                                     const plants::DoubleIntegratorGains& gains, double t_stop,
                                     double delta) {
  if (delta <= 0.0) throw std::invalid_argument("finite differences need delta > 0");
  auto eval = [&](const plants::DoubleIntegratorGains& g2) {
    return loss(sim::replay_di_tracking(g_signal, x0, g2), t_stop);
  };
  Vector2d grad;
  {
    plants::DoubleIntegratorGains up = gains, dn = gains;
    up.kp += delta;
    dn.kp -= delta;
    grad[0] = (eval(up) - eval(dn)) / (2.0 * delta);
  }
  {
    plants::DoubleIntegratorGains up = gains, dn = gains;
    up.kd += delta;
    dn.kd -= delta;
    grad[1] = (eval(up) - eval(dn)) / (2.0 * delta);
  }
  return grad;
}

Vector2d scenario_theta(const scenario::ScenarioConfig& config) {
  if (config.plant == scenario::PlantKind::quadrotor) {
    return Vector2d(config.quad.k_x, config.quad.k_v);
  }
  return Vector2d(config.di_gains.kp, config.di_gains.kd);
}

void apply_theta(scenario::ScenarioConfig* config, const Vector2d& theta) {
  if (config->plant == scenario::PlantKind::quadrotor) {
    config->quad.k_x = theta[0];
    config->quad.k_v = theta[1];
  } else {
    config->di_gains.kp = theta[0];
    config->di_gains.kd = theta[1];
  }
}

bool theta_stabilizes(const scenario::ScenarioConfig& config, const Vector2d& theta) {
  scenario::ScenarioConfig probe = config;
  apply_theta(&probe, theta);
  if (probe.plant == scenario::PlantKind::quadrotor) {
    return probe.quad.k_x > 0.0 && probe.quad.k_v > 0.0 &&
           linalg::is_hurwitz(plants::quad_hover_closed_loop(probe.quad));
  }
  return linalg::is_hurwitz(plants::di_matrices(probe.di_gains).Acl);
}

Vector2d finite_diff_gradient(const scenario::ScenarioConfig& config, const Vector2d& theta,
                              double delta) {
  if (delta <= 0.0) throw std::invalid_argument("finite differences need delta > 0");
  auto eval = [&](const Vector2d& th) {
    scenario::ScenarioConfig probe = config;
    apply_theta(&probe, th);
    return sim::run_closed_loop(probe).metrics.tracking_loss;
  };
  Vector2d grad;
  for (int j = 0; j < 2; ++j) {
    Vector2d up = theta, dn = theta;
    up[j] += delta;
    dn[j] -= delta;
    grad[j] = (eval(up) - eval(dn)) / (2.0 * delta);
  }
  return grad;
}

TuningRun tune(const scenario::ScenarioConfig& config, const TuneOptions& options) {
  if (options.iterations < 0) throw std::invalid_argument("tune: iterations must be >= 0");
  scenario::ScenarioConfig cfg = config;
  Vector2d theta = scenario_theta(cfg);
  if (!theta_stabilizes(cfg, theta)) {
    throw std::invalid_argument("tune: initial gains do not stabilize the plant");
  }

  TuningRun run;
  double alpha = options.alpha;

  for (int it = 0; it <= options.iterations; ++it) {
    sim::RunResult res = sim::run_closed_loop(cfg);

    IterationMetrics entry;
    entry.theta = theta;
    entry.loss = res.metrics.tracking_loss;
    entry.t_g = res.metrics.t_g_reach;
    entry.t_a = res.metrics.t_a_reach;
    entry.completion_gap = (entry.t_g && entry.t_a)
                               ? std::abs(*entry.t_g - *entry.t_a)
                               : std::numeric_limits<double>::quiet_NaN();
    entry.mean_dsm = res.metrics.mean_dsm;
    entry.min_dsm = res.metrics.min_dsm;
    run.history.push_back(entry);

    if (it == options.iterations || run.stalled) break;

    Vector2d grad;
    if (cfg.plant == scenario::PlantKind::double_integrator && !options.use_finite_differences) {
      const double t_stop = res.metrics.t_a_reach.value_or(cfg.horizon_s);
      VectorXd x0(4);
      x0.head(2) = cfg.initial_position;
      x0.tail(2) = cfg.initial_velocity;
      grad = sensitivity_gradient(res.log.governor_signal(), x0, cfg.di_gains, t_stop);
    } else {
      grad = finite_diff_gradient(cfg, theta, options.fd_delta);
    }

    Vector2d theta_next = theta - alpha * grad;
    while (!theta_stabilizes(cfg, theta_next)) {
      alpha *= 0.5;
      if (alpha < 1e-8) {
        run.stalled = true;
        break;
      }
      theta_next = theta - alpha * grad;
    }
    if (run.stalled) break;
    theta = theta_next;
    apply_theta(&cfg, theta);
  }

  run.final_alpha = alpha;
  return run;
}

}  // namespace ergcbf::tuning
