#include "ergcbf/governor.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "ergcbf/linalg.hpp"

namespace ergcbf::governor {
namespace {

const double kInf = std::numeric_limits<double>::infinity();

VectorXd equilibrium_for(const VectorXd& g, Eigen::Index n) {
  VectorXd xbar = VectorXd::Zero(n);
  xbar.head(g.size()) = g;
  return xbar;
}

}  // namespace

GovernorConfig GovernorConfig::defaults(int dim) {
  GovernorConfig cfg;
  cfg.H = MatrixXd::Identity(dim, dim);
  cfg.u_lower = VectorXd::Constant(dim, -1.0);
  cfg.u_upper = VectorXd::Constant(dim, 1.0);
  return cfg;
}

void validate(const GovernorConfig& cfg, int dim) {
  if (cfg.H.rows() != dim || cfg.H.cols() != dim) {
    throw std::invalid_argument("governor: H must be dim x dim");
  }
  if (!linalg::is_symmetric(cfg.H, 1e-9) ||
      linalg::max_sym_eig(-0.5 * (cfg.H + cfg.H.transpose())) > 1e-10) {
    throw std::invalid_argument("governor: H must be symmetric PSD");
  }
  if (cfg.q_dist >= 0.0) throw std::invalid_argument("governor: q_dist must be negative");
  if (cfg.alpha_obs <= 0.0 || cfg.alpha_stl <= 0.0) {
    throw std::invalid_argument("governor: class-K slopes must be positive");
  }
  if (cfg.delta_floor < 0.0) throw std::invalid_argument("governor: delta_floor must be >= 0");
  if (cfg.speed_limit <= 0.0) throw std::invalid_argument("governor: speed_limit must be > 0");
  if (cfg.static_margin < 0.0) throw std::invalid_argument("governor: static_margin must be >= 0");
}

double tracking_energy(const VectorXd& x, const VectorXd& g, const MatrixXd& P) {
  VectorXd e = x - equilibrium_for(g, x.size());
  return e.dot(P * e);
}

double dsm(const VectorXd& x, const VectorXd& g, const MatrixXd& P, double l,
           const world::Environment& env) {
  double d = world::distance_to_unsafe(g, env);
  return d * d - l * l * tracking_energy(x, g, P);
}

NavigationQp assemble_navigation_qp(const VectorXd& g, double t, double delta,
                                    const world::Environment& env,
                                    const stl::TimeVaryingBarrier& b_stl,
                                    const GovernorConfig& cfg, double dt) {
  const int p = static_cast<int>(g.size());
  NavigationQp nav;

  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> rhs;

  // obstacle rows: -Delta grad(b_i)^T u <= alpha_obs b_i, one per term
  for (size_t i = 0; i < env.obstacles.size(); ++i) {
    const auto& ob = env.obstacles[i];
    VectorXd diff = g - ob.center;
    double dist = diff.norm();
    double b = dist - ob.radius;
    VectorXd grad = dist > 1e-12 ? VectorXd(diff / dist) : VectorXd::Zero(p);
    rows.emplace_back(-delta * grad.transpose());
    rhs.push_back(cfg.alpha_obs * (b - cfg.static_margin));
    nav.obstacle_values.push_back(b);
    nav.row_labels.push_back("obstacle" + std::to_string(i));
  }
  if (env.arena) {
    VectorXd diff = g - env.arena->center;
    double dist = diff.norm();
    double b = env.arena->radius - dist;
    VectorXd grad = dist > 1e-12 ? VectorXd(-diff / dist) : VectorXd::Zero(p);
    rows.emplace_back(-delta * grad.transpose());
    rhs.push_back(cfg.alpha_obs * (b - cfg.static_margin));
    nav.obstacle_values.push_back(b);
    nav.row_labels.push_back("arena");
  }

  // task row: -Delta grad(b_stl)^T u <= alpha_stl b_stl + db_stl/dt
  nav.stl_value = kInf;
  if (b_stl.any_active(t)) {
    nav.stl_value = b_stl.value(g, t);
    nav.stl_time_derivative = b_stl.time_derivative(g, t);
    VectorXd grad = b_stl.spatial_gradient(g, t);
    nav.stl_rows.push_back(static_cast<int>(rows.size()));
    rows.emplace_back(-delta * grad.transpose());
    rhs.push_back(cfg.alpha_stl * nav.stl_value + nav.stl_time_derivative);
    nav.row_labels.push_back("stl");
  }

  // objective: u^T H u + q d(g + dt Delta u)^2, the distance linearized at g
  MatrixXd Hq = cfg.H;
  VectorXd fq = VectorXd::Zero(p);
  double d0 = world::distance_to_unsafe(g, env);
  if (!env.obstacles.empty() || env.arena) {
    bool have_grad = true;
    VectorXd w = VectorXd::Zero(p);
    try {
      w = world::unsafe_gradient(g, env);
    } catch (const std::exception&) {
      have_grad = false;  // at a center; drop the tilt this step
    }
    if (have_grad) {
      double c = dt * std::max(delta, 0.0);
      double curv = cfg.q_dist * c * c;
      // keep H + curv ww^T PSD: clip the negative rank-1 curvature
      double lam_min = -linalg::max_sym_eig(-cfg.H);
      if (lam_min + curv < 1e-12) curv = -lam_min + 1e-12;
      Hq += curv * (w * w.transpose());
      fq = cfg.q_dist * d0 * c * w;  // (1/2) of the expanded linear term, x2 below
    }
  }

  nav.problem.H = 2.0 * Hq;
  nav.problem.f = 2.0 * fq;
  nav.problem.G.resize(static_cast<int>(rows.size()), p);
  nav.problem.h.resize(static_cast<int>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    nav.problem.G.row(static_cast<int>(i)) = rows[i];
    nav.problem.h[static_cast<int>(i)] = rhs[i];
  }
  nav.problem.lower = cfg.u_lower;
  nav.problem.upper = cfg.u_upper;
  if (std::isfinite(cfg.speed_limit) && delta > 0.0) {
    const double cap = cfg.speed_limit / delta;
    for (int i = 0; i < p; ++i) {
      nav.problem.lower[i] = std::max(nav.problem.lower[i], -cap);
      nav.problem.upper[i] = std::min(nav.problem.upper[i], cap);
    }
  }
  return nav;
}

RelaxedSolution relax_and_resolve(const qp::QpProblem& problem,
                                  const std::vector<int>& stl_rows) {
  const int p = problem.num_vars();
  const int m = problem.num_ineq();

  qp::QpProblem relaxed;
  relaxed.H = MatrixXd::Zero(p + 1, p + 1);
  relaxed.H.topLeftCorner(p, p) = problem.H;
  relaxed.H(p, p) = 2.0 * 1e6 * std::max(1.0, problem.H.norm());
  relaxed.f = VectorXd::Zero(p + 1);
  relaxed.f.head(p) = problem.f;
  relaxed.G = MatrixXd::Zero(m, p + 1);
  relaxed.G.leftCols(p) = problem.G;
  for (int r : stl_rows) relaxed.G(r, p) = -1.0;  // a^T u - s <= h
  relaxed.h = problem.h;
  relaxed.lower = VectorXd::Constant(p + 1, -kInf);
  relaxed.upper = VectorXd::Constant(p + 1, kInf);
  if (problem.lower.size() == p) relaxed.lower.head(p) = problem.lower;
  if (problem.upper.size() == p) relaxed.upper.head(p) = problem.upper;
  relaxed.lower[p] = 0.0;

  qp::QpSolution sol = qp::solve(relaxed);
  if (sol.status != qp::QpStatus::optimal) {
    throw std::runtime_error(
        "governor: navigation QP infeasible even with task slack (obstacle rows "
        "inconsistent), status " + qp::to_string(sol.status));
  }
  RelaxedSolution out;
  out.slack = sol.u[p];
  out.qp = sol;
  out.qp.u = sol.u.head(p);
  return out;
}

VectorXd step_reference(const VectorXd& g, double delta_eff, const VectorXd& u, double dt) {
  return g + dt * delta_eff * u;
}

GovernorState governor_step(const GovernorState& state, const VectorXd& x,
                            const MatrixXd& P, double l, const world::Environment& env,
                            const stl::TimeVaryingBarrier& b_stl,
                            const GovernorConfig& cfg, double dt) {
  GovernorState next = state;
  next.dsm = dsm(x, state.g, P, l, env);
  const double delta_eff = std::max(next.dsm, cfg.delta_floor);

  NavigationQp nav = assemble_navigation_qp(state.g, state.t, delta_eff, env, b_stl, cfg, dt);

  qp::QpSolution sol;
  if (state.last_qp.u.size() == state.g.size()) {
    qp::WarmStart warm{state.last_qp.u, state.last_qp.active_set};
    sol = qp::solve(nav.problem, warm);
  } else {
    sol = qp::solve(nav.problem);
  }

  next.slack = 0.0;
  next.stl_pressure_infeasible = false;
  if (sol.status != qp::QpStatus::optimal) {
    RelaxedSolution relaxed = relax_and_resolve(nav.problem, nav.stl_rows);
    sol = relaxed.qp;
    next.slack = relaxed.slack;
    next.stl_pressure_infeasible = relaxed.slack > 1e-9;
  }
  if (sol.status != qp::QpStatus::optimal) {
    std::ostringstream oss;
    oss << "governor: navigation QP failed (" << qp::to_string(sol.status)
        << ") at t=" << state.t << ", g=[" << state.g.transpose() << "], dsm=" << next.dsm;
    throw std::runtime_error(oss.str());
  }

  next.u = sol.u;
  next.last_qp = sol;
  next.g = step_reference(state.g, delta_eff, sol.u, dt);
  next.t = state.t + dt;
  return next;
}

}  // namespace ergcbf::governor
