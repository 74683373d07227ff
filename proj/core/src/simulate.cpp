#include "ergcbf/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ergcbf/governor.hpp"
#include "ergcbf/linalg.hpp"

namespace ergcbf::sim {
namespace {

using governor::GovernorState;
using scenario::PlantKind;
using scenario::ScenarioConfig;

const double kInf = std::numeric_limits<double>::infinity();
const double kNan = std::numeric_limits<double>::quiet_NaN();

void require_valid(const ScenarioConfig& config) {
  auto problems = scenario::check(config);
  if (!problems.empty()) {
    std::string msg = "scenario invalid:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw std::invalid_argument(msg);
  }
}

stl::TimeVaryingBarrier build_barrier(const ScenarioConfig& config) {
  if (!config.has_task()) return {};
  return stl::compile_barrier(config.parsed_formula(), config.initial_governor,
                              config.barrier.options());
}

void fill_barrier_columns(const stl::TimeVaryingBarrier& barrier, const VectorXd& g, double t,
                          StepRecord* rec) {
  for (const auto& part : barrier.components()) {
    rec->barrier_values.push_back(part.active(t) ? part.value(g, t) : kNan);
  }
  rec->b_stl = barrier.any_active(t) ? barrier.value(g, t) : kInf;
}

struct GovernorBundle {
  Eigen::MatrixXd P;
  double l = 1.0;
  governor::GovernorConfig cfg;
};

GovernorBundle governor_bundle(const ScenarioConfig& config) {
  GovernorBundle b;
  TrackingCertificate cert = tracking_certificate(config);
  b.P = cert.P;
  b.l = cert.l;
  b.cfg = config.governor.config(config.dimension());
  return b;
}

RunResult run_double_integrator(const ScenarioConfig& config) {
  const double dt = 1.0 / config.rate_hz;
  const int n_steps = static_cast<int>(std::lround(config.horizon_s * config.rate_hz));
  const world::Environment env = config.effective_environment();
  const auto bundle = governor_bundle(config);
  const stl::TimeVaryingBarrier barrier = build_barrier(config);

  VectorXd x(4);
  x.head(2) = config.initial_position;
  x.tail(2) = config.initial_velocity;

  GovernorState gs;
  gs.g = config.initial_governor;
  gs.t = 0.0;

  const double delta0 = governor::dsm(x, gs.g, bundle.P, bundle.l, env);
  if (delta0 <= 0.0) {
    throw std::runtime_error("run_closed_loop: initial safety margin is not positive (Delta(x0,g0)=" +
                             std::to_string(delta0) + ")");
  }

  RunResult out;
  out.log.dt = dt;
  for (const auto& part : barrier.components()) out.log.barrier_labels.push_back(part.label);
  out.log.steps.reserve(n_steps + 1);

  for (int k = 0; k <= n_steps; ++k) {
    const double t = k * dt;
    GovernorState gnext;
    try {
      gnext = governor::governor_step(gs, x, bundle.P, bundle.l, env, barrier, bundle.cfg, dt);
    } catch (const std::exception& e) {
      throw std::runtime_error("step " + std::to_string(k) + ": " + e.what());
    }
    const VectorXd u_plant = plants::di_controller(x, gs.g, config.di_gains);

    StepRecord rec;
    rec.t = t;
    rec.x = x;
    rec.y = x.head(2);
    rec.g = gs.g;
    rec.dsm = gnext.dsm;
    rec.energy = governor::tracking_energy(x, gs.g, bundle.P);
    rec.u_g = gnext.u;
    rec.u_plant = u_plant;
    rec.d_g = world::distance_to_unsafe(gs.g, env);
    rec.d_y = world::distance_to_unsafe(rec.y, env);
    fill_barrier_columns(barrier, gs.g, t, &rec);
    rec.qp_status = qp::to_string(gnext.last_qp.status);
    rec.qp_active = gnext.last_qp.active_set;
    rec.slack = gnext.slack;
    out.log.steps.push_back(std::move(rec));

    if (k == n_steps) break;
    x = plants::rk4_step(
        [&](const VectorXd& s) { return plants::di_derivatives(s, u_plant); }, x, dt);
    gs = gnext;
  }
  out.metrics = compute_metrics(out.log, config);
  return out;
}

RunResult run_quadrotor(const ScenarioConfig& config) {
  const double dt = 1.0 / config.rate_hz;
  const int n_steps = static_cast<int>(std::lround(config.horizon_s * config.rate_hz));
  const world::Environment env = config.effective_environment();
  const auto bundle = governor_bundle(config);
  const stl::TimeVaryingBarrier barrier = build_barrier(config);

  plants::QuadrotorState qs;
  qs.x = config.initial_position;
  qs.v = config.initial_velocity;
  plants::QuadTrackingController controller(config.quad);

  GovernorState gs;
  gs.g = config.initial_governor;
  gs.t = 0.0;

  VectorXd sub(6);
  sub << qs.x, qs.v;
  const double delta0 = governor::dsm(sub, gs.g, bundle.P, bundle.l, env);
  if (delta0 <= 0.0) {
    throw std::runtime_error("run_closed_loop: initial safety margin is not positive");
  }

  RunResult out;
  out.log.dt = dt;
  for (const auto& part : barrier.components()) out.log.barrier_labels.push_back(part.label);
  out.log.steps.reserve(n_steps + 1);

  Eigen::Vector3d g_prev = gs.g, g_prev2 = gs.g;
  const double a_ff_cap = 0.5 * config.quad.gravity;  // reject reference-jerk spikes

  for (int k = 0; k <= n_steps; ++k) {
    const double t = k * dt;
    sub << qs.x, qs.v;
    GovernorState gnext;
    try {
      gnext = governor::governor_step(gs, sub, bundle.P, bundle.l, env, barrier, bundle.cfg, dt);
    } catch (const std::exception& e) {
      throw std::runtime_error("step " + std::to_string(k) + ": " + e.what());
    }

    Eigen::Vector3d x_d = gs.g;
    Eigen::Vector3d v_d = Eigen::Vector3d::Zero();
    Eigen::Vector3d a_d = Eigen::Vector3d::Zero();
    if (k > 0) v_d = (gs.g - g_prev) / dt;
    if (k > 1) a_d = (gs.g - 2.0 * g_prev + g_prev2) / (dt * dt);
    if (a_d.norm() > a_ff_cap) a_d *= a_ff_cap / a_d.norm();

    plants::QuadrotorInput u = controller.control(qs, x_d, v_d, a_d, dt);

    StepRecord rec;
    rec.t = t;
    rec.x = qs.flatten();
    rec.y = qs.x;
    rec.g = gs.g;
    rec.dsm = gnext.dsm;
    rec.energy = governor::tracking_energy(sub, gs.g, bundle.P);
    rec.u_g = gnext.u;
    rec.u_plant = VectorXd(4);
    rec.u_plant << u.thrust, u.moment;
    rec.d_g = world::distance_to_unsafe(gs.g, env);
    rec.d_y = world::distance_to_unsafe(rec.y, env);
    fill_barrier_columns(barrier, gs.g, t, &rec);
    rec.qp_status = qp::to_string(gnext.last_qp.status);
    rec.qp_active = gnext.last_qp.active_set;
    rec.slack = gnext.slack;
    out.log.steps.push_back(std::move(rec));

    if (k == n_steps) break;
    VectorXd flat = plants::rk4_step(
        [&](const VectorXd& s) { return plants::quadrotor_derivatives(s, u, config.quad); },
        qs.flatten(), dt);
    qs = plants::QuadrotorState::unflatten(flat);
    qs.reorthonormalize();
    g_prev2 = g_prev;
    g_prev = gs.g;
    gs = gnext;
  }
  out.metrics = compute_metrics(out.log, config);
  return out;
}

}  // namespace

stl::Signal TrajectoryLog::output_signal() const {
  stl::Signal s;
  s.t0 = steps.empty() ? 0.0 : steps.front().t;
  s.dt = dt;
  s.samples.reserve(steps.size());
  for (const auto& rec : steps) s.samples.push_back(rec.y);
  return s;
}

stl::Signal TrajectoryLog::governor_signal() const {
  stl::Signal s;
  s.t0 = steps.empty() ? 0.0 : steps.front().t;
  s.dt = dt;
  s.samples.reserve(steps.size());
  for (const auto& rec : steps) s.samples.push_back(rec.g);
  return s;
}

RunMetrics compute_metrics(const TrajectoryLog& log, const scenario::ScenarioConfig& config) {
  RunMetrics m;
  if (log.steps.empty()) return m;

  m.min_dsm = kInf;
  m.min_output_clearance = kInf;
  m.min_governor_clearance = kInf;
  double dsm_sum = 0.0;
  for (const auto& rec : log.steps) {
    m.min_dsm = std::min(m.min_dsm, rec.dsm);
    dsm_sum += rec.dsm;
    m.min_output_clearance = std::min(m.min_output_clearance, rec.d_y);
    m.min_governor_clearance = std::min(m.min_governor_clearance, rec.d_g);
    if (rec.slack > 1e-9) ++m.relaxed_steps;
    m.max_slack = std::max(m.max_slack, rec.slack);
  }
  m.mean_dsm = dsm_sum / static_cast<double>(log.steps.size());

  if (config.plant == PlantKind::quadrotor) {
    for (const auto& rec : log.steps) {
      plants::QuadrotorState qs = plants::QuadrotorState::unflatten(rec.x);
      m.max_rotation_drift = std::max(m.max_rotation_drift, qs.orthonormality_error());
    }
  }

  if (config.has_task()) {
    const stl::Formula formula = config.parsed_formula();
    const stl::Signal y = log.output_signal();
    const stl::Signal g = log.governor_signal();
    m.robustness_y = stl::robustness(y, formula, y.t0);
    m.robustness_g = stl::robustness(g, formula, g.t0);
    m.t_a = stl::completion_time(y, formula);
    m.t_g = stl::completion_time(g, formula);
    m.t_a_reach = stl::reach_completion_time(y, formula);
    m.t_g_reach = stl::reach_completion_time(g, formula);
    m.task_satisfied = *m.robustness_y > 0.0;
  } else {
    m.task_satisfied = true;
    m.t_g = m.t_a = m.t_g_reach = m.t_a_reach = 0.0;
  }

  double t_stop = kInf;
  if (m.t_a_reach) {
    t_stop = *m.t_a_reach;
  } else {
    m.incomplete_task = config.has_task();
  }
  for (const auto& rec : log.steps) {
    if (rec.t > t_stop + 1e-9) break;
    m.tracking_loss += (rec.y - rec.g).squaredNorm() * log.dt;
  }
  return m;
}

TrackingCertificate tracking_certificate(const scenario::ScenarioConfig& config) {
  const int dim = config.dimension();
  Eigen::MatrixXd Acl;
  if (config.plant == PlantKind::double_integrator) {
    Acl = plants::di_matrices(config.di_gains).Acl;
  } else if (config.plant == PlantKind::quadrotor) {
    Acl = plants::quad_hover_closed_loop(config.quad);
  } else {
    throw std::invalid_argument("tracking_certificate: acc fixture has no tracking loop");
  }
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(dim, 2 * dim);
  C.leftCols(dim) = Eigen::MatrixXd::Identity(dim, dim);
  TrackingCertificate cert;
  cert.P = linalg::solve_lyapunov(Acl, Eigen::MatrixXd::Identity(2 * dim, 2 * dim));
  cert.l = linalg::output_gain(cert.P, C);
  return cert;
}

RunResult run_closed_loop(const scenario::ScenarioConfig& config) {
  require_valid(config);
  switch (config.plant) {
    case PlantKind::double_integrator:
      return run_double_integrator(config);
    case PlantKind::quadrotor:
      return run_quadrotor(config);
    case PlantKind::acc:
      throw std::invalid_argument(
          "run_closed_loop: the acc fixture has no governor loop; use the acc checks");
  }
  throw std::logic_error("run_closed_loop: unknown plant");
}

TrajectoryLog replay_di_tracking(const stl::Signal& g_signal, const VectorXd& x0,
                                 const plants::DoubleIntegratorGains& gains) {
  TrajectoryLog log;
  log.dt = g_signal.dt;
  VectorXd x = x0;
  for (size_t k = 0; k < g_signal.samples.size(); ++k) {
    const VectorXd& g = g_signal.samples[k];
    const VectorXd u = plants::di_controller(x, g, gains);
    StepRecord rec;
    rec.t = g_signal.time_at(k);
    rec.x = x;
    rec.y = x.head(2);
    rec.g = g;
    rec.u_plant = u;
    log.steps.push_back(std::move(rec));
    if (k + 1 == g_signal.samples.size()) break;
    x = plants::rk4_step([&](const VectorXd& s) { return plants::di_derivatives(s, u); }, x,
                         g_signal.dt);
  }
  return log;
}

std::vector<std::pair<std::string, stl::Predicate>> ordered_targets(const stl::Formula& formula) {
  struct Item {
    double key;
    std::string name;
    stl::Predicate pred;
  };
  std::vector<Item> items;
  std::function<void(const stl::Formula&)> walk = [&](const stl::Formula& f) {
    switch (f.kind) {
      case stl::NodeKind::conjunction:
        for (const auto& c : f.children) walk(c);
        break;
      case stl::NodeKind::eventually:
        if (f.children[0].kind == stl::NodeKind::predicate) {
          items.push_back({f.a, f.children[0].pred_name, f.children[0].pred});
        }
        break;
      case stl::NodeKind::until:
        if (f.children[1].kind == stl::NodeKind::predicate) {
          items.push_back({f.a, f.children[1].pred_name, f.children[1].pred});
        }
        break;
      default:
        break;
    }
  };
  walk(formula);
  std::stable_sort(items.begin(), items.end(),
                   [](const Item& a, const Item& b) { return a.key < b.key; });
  std::vector<std::pair<std::string, stl::Predicate>> out;
  for (auto& it : items) out.emplace_back(it.name, it.pred);
  return out;
}

HocbfRun run_hocbf_baseline(const scenario::ScenarioConfig& config, double k1, double k2) {
  require_valid(config);
  if (config.plant != PlantKind::double_integrator) {
    throw std::invalid_argument("hocbf baseline runs on the double integrator only");
  }
  if (!config.has_task()) {
    throw std::invalid_argument("hocbf baseline needs an STL task to extract targets");
  }
  const double dt = 1.0 / config.rate_hz;
  const int n_steps = static_cast<int>(std::lround(config.horizon_s * config.rate_hz));
  const world::Environment env = config.effective_environment();
  auto targets = ordered_targets(config.parsed_formula());
  if (targets.empty()) {
    throw std::invalid_argument("hocbf baseline: formula has no reach targets");
  }

  HocbfRun run;
  run.log.dt = dt;
  for (auto& [name, pred] : targets) {
    run.target_names.push_back(name);
    run.reached.push_back(false);
    run.reach_times.push_back(-1.0);
  }

  VectorXd x(4);
  x.head(2) = config.initial_position;
  x.tail(2) = config.initial_velocity;
  size_t idx = 0;

  for (int k = 0; k <= n_steps; ++k) {
    const double t = k * dt;
    const size_t pursue = std::min(idx, targets.size() - 1);
    const VectorXd target = targets[pursue].second.center;

    plants::HocbfResult res = plants::hocbf_controller(x, target, env, k1, k2, config.di_gains);
    if (!res.feasible) ++run.infeasible_steps;

    StepRecord rec;
    rec.t = t;
    rec.x = x;
    rec.y = x.head(2);
    rec.g = target;
    rec.u_plant = res.u;
    rec.d_y = world::distance_to_unsafe(rec.y, env);
    rec.qp_status = res.feasible ? "optimal" : "infeasible";
    run.log.steps.push_back(std::move(rec));

    if (idx < targets.size() &&
        (x.head(2) - targets[idx].second.center).norm() < targets[idx].second.radius) {
      run.reached[idx] = true;
      run.reach_times[idx] = t;
      ++idx;
    }

    if (k == n_steps) break;
    x = plants::rk4_step([&](const VectorXd& s) { return plants::di_derivatives(s, res.u); }, x,
                         dt);
  }
  return run;
}

}  // namespace ergcbf::sim
