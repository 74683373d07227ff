#include "ergcbf/plants.hpp"

#include <cmath>
#include <stdexcept>

#include "ergcbf/linalg.hpp"

namespace ergcbf::plants {
namespace {

Matrix3d hat(const Vector3d& w) {
  Matrix3d m;
  m << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return m;
}

Vector3d vee(const Matrix3d& m) {
  return Vector3d(m(2, 1), m(0, 2), m(1, 0));
}

}  // namespace

// ---------------------------------------------------------------------------
// double integrator

DiMatrices di_matrices(const DoubleIntegratorGains& gains) {
  DiMatrices m;
  m.A = MatrixXd::Zero(4, 4);
  m.A.topRightCorner(2, 2) = MatrixXd::Identity(2, 2);
  m.B = MatrixXd::Zero(4, 2);
  m.B.bottomRows(2) = MatrixXd::Identity(2, 2);
  m.C = MatrixXd::Zero(2, 4);
  m.C.leftCols(2) = MatrixXd::Identity(2, 2);
  m.K = MatrixXd::Zero(2, 4);
  m.K.leftCols(2) = gains.kp * MatrixXd::Identity(2, 2);
  m.K.rightCols(2) = gains.kd * MatrixXd::Identity(2, 2);
  m.Acl = m.A + m.B * m.K;
  return m;
}

void check_di_gains(const DoubleIntegratorGains& gains) {
  if (!linalg::is_hurwitz(di_matrices(gains).Acl)) {
    throw std::invalid_argument("double integrator gains kp=" + std::to_string(gains.kp) +
                                ", kd=" + std::to_string(gains.kd) +
                                " do not stabilize the plant");
  }
}

VectorXd di_controller(const VectorXd& state, const VectorXd& g,
                       const DoubleIntegratorGains& gains) {
  if (state.size() != 4 || g.size() != 2) {
    throw std::invalid_argument("di_controller: state must be 4-d, reference 2-d");
  }
  return gains.kp * (state.head(2) - g) + gains.kd * state.tail(2);
}

VectorXd di_derivatives(const VectorXd& state, const VectorXd& u) {
  VectorXd dx(4);
  dx.head(2) = state.tail(2);
  dx.tail(2) = u;
  return dx;
}

// ---------------------------------------------------------------------------
// quadrotor

VectorXd QuadrotorState::flatten() const {
  VectorXd s(18);
  s.segment(0, 3) = x;
  s.segment(3, 3) = v;
  for (int c = 0; c < 3; ++c) s.segment(6 + 3 * c, 3) = R.col(c);
  s.segment(15, 3) = Omega;
  return s;
}

QuadrotorState QuadrotorState::unflatten(const VectorXd& s) {
  if (s.size() != 18) throw std::invalid_argument("quadrotor state must have 18 entries");
  QuadrotorState q;
  q.x = s.segment(0, 3);
  q.v = s.segment(3, 3);
  for (int c = 0; c < 3; ++c) q.R.col(c) = s.segment(6 + 3 * c, 3);
  q.Omega = s.segment(15, 3);
  return q;
}

double QuadrotorState::orthonormality_error() const {
  return (R.transpose() * R - Matrix3d::Identity()).norm();
}

void QuadrotorState::reorthonormalize() {
  Vector3d c0 = R.col(0).normalized();
  Vector3d c1 = (R.col(1) - c0 * c0.dot(R.col(1))).normalized();
  Vector3d c2 = c0.cross(c1);
  R.col(0) = c0;
  R.col(1) = c1;
  R.col(2) = c2;
}

VectorXd quadrotor_derivatives(const VectorXd& state, const QuadrotorInput& u,
                               const QuadrotorParams& p) {
  QuadrotorState q = QuadrotorState::unflatten(state);
  const Vector3d e3(0, 0, 1);
  VectorXd ds(18);
  ds.segment(0, 3) = q.v;
  ds.segment(3, 3) = p.gravity * e3 - (u.thrust / p.mass) * (q.R * e3);
  Matrix3d Rdot = q.R * hat(q.Omega);
  for (int c = 0; c < 3; ++c) ds.segment(6 + 3 * c, 3) = Rdot.col(c);
  ds.segment(15, 3) = p.inertia.inverse() * (u.moment - q.Omega.cross(p.inertia * q.Omega));
  return ds;
}

QuadrotorInput QuadTrackingController::control(const QuadrotorState& s, const Vector3d& x_d,
                                               const Vector3d& v_d, const Vector3d& a_d,
                                               double dt) {
  const Vector3d e3(0, 0, 1);
  const Vector3d e_x = s.x - x_d;
  const Vector3d e_v = s.v - v_d;

  // desired force; thrust opposes +e3 gravity
  Vector3d A = -params_.k_x * e_x - params_.k_v * e_v - params_.mass * params_.gravity * e3 +
               params_.mass * a_d;
  if (A.norm() < 1e-9) {
    throw std::runtime_error("quad controller: desired thrust direction degenerate "
                             "(commanded acceleration cancels gravity)");
  }
  const double f = -A.dot(s.R * e3);

  const Vector3d b3d = -A.normalized();
  Vector3d b1c = heading_;
  if (std::abs(b3d.dot(b1c)) > 1.0 - 1e-6) b1c = Vector3d(0, 1, 0);
  const Vector3d b2d = b3d.cross(b1c).normalized();
  const Vector3d b1d = b2d.cross(b3d);
  Matrix3d Rd;
  Rd.col(0) = b1d;
  Rd.col(1) = b2d;
  Rd.col(2) = b3d;

  Vector3d Omega_d = Vector3d::Zero();
  Vector3d Omega_d_dot = Vector3d::Zero();
  if (have_prev_ && dt > 0.0) {
    Matrix3d S = prev_Rd_.transpose() * Rd;  // small relative rotation
    Omega_d = vee(0.5 * (S - S.transpose())) / dt;
    if (have_prev_omega_) Omega_d_dot = (Omega_d - prev_Omega_d_) / dt;
    prev_Omega_d_ = Omega_d;
    have_prev_omega_ = true;
  }
  prev_Rd_ = Rd;
  have_prev_ = true;

  const Vector3d e_R = 0.5 * vee(Rd.transpose() * s.R - s.R.transpose() * Rd);
  const Vector3d e_Omega = s.Omega - s.R.transpose() * Rd * Omega_d;

  QuadrotorInput u;
  u.thrust = f;
  u.moment = -params_.k_R * e_R - params_.k_Omega * e_Omega +
             s.Omega.cross(params_.inertia * s.Omega) -
             params_.inertia * (hat(s.Omega) * s.R.transpose() * Rd * Omega_d -
                                s.R.transpose() * Rd * Omega_d_dot);
  return u;
}

void QuadTrackingController::reset() {
  have_prev_ = false;
  have_prev_omega_ = false;
  prev_Rd_ = Matrix3d::Identity();
  prev_Omega_d_ = Vector3d::Zero();
}

MatrixXd quad_hover_closed_loop(const QuadrotorParams& p) {
  MatrixXd Acl = MatrixXd::Zero(6, 6);
  Acl.topRightCorner(3, 3) = Matrix3d::Identity();
  Acl.bottomLeftCorner(3, 3) = -(p.k_x / p.mass) * Matrix3d::Identity();
  Acl.bottomRightCorner(3, 3) = -(p.k_v / p.mass) * Matrix3d::Identity();
  return Acl;
}

// ---------------------------------------------------------------------------
// ACC fixture

VectorXd acc_drift(const VectorXd& state, double v0) {
  VectorXd f(2);
  f << v0 - state[1], 0.0;
  return f;
}

VectorXd acc_input_dir(const VectorXd& state) {
  (void)state;
  VectorXd g(2);
  g << 0.0, 1.0;
  return g;
}

VectorXd acc_plant(double v_e, double d, double v0, double u) {
  VectorXd state(2);
  state << d, v_e;
  return acc_drift(state, v0) + acc_input_dir(state) * u;
}

AccLieCheck acc_lie_check(double v0, double d_delta, const VectorXd& x_eval) {
  if (x_eval.size() != 2) throw std::invalid_argument("acc state is [d, v_e]");
  const double h = 1e-6;
  auto barrier = [&](const VectorXd& x) { return x[0] - d_delta; };
  auto grad = [&](const std::function<double(const VectorXd&)>& fn, const VectorXd& x) {
    VectorXd g(2);
    for (int i = 0; i < 2; ++i) {
      VectorXd up = x, dn = x;
      up[i] += h;
      dn[i] -= h;
      g[i] = (fn(up) - fn(dn)) / (2.0 * h);
    }
    return g;
  };

  AccLieCheck out;
  out.first_order_input_coeff = grad(barrier, x_eval).dot(acc_input_dir(x_eval));
  auto drift_derivative = [&](const VectorXd& x) { return grad(barrier, x).dot(acc_drift(x, v0)); };
  out.second_order_input_coeff = grad(drift_derivative, x_eval).dot(acc_input_dir(x_eval));
  return out;
}

// ---------------------------------------------------------------------------
// HOCBF baseline

HocbfResult hocbf_controller(const VectorXd& state, const VectorXd& target,
                             const world::Environment& env, double k1, double k2,
                             const DoubleIntegratorGains& nominal) {
  const VectorXd u_nom = di_controller(state, target, nominal);
  const VectorXd x = state.head(2);
  const VectorXd v = state.tail(2);

  const int rows = static_cast<int>(env.obstacles.size()) + (env.arena ? 1 : 0);
  qp::QpProblem pb;
  pb.H = 2.0 * MatrixXd::Identity(2, 2);
  pb.f = -2.0 * u_nom;
  pb.G.resize(rows, 2);
  pb.h.resize(rows);
  int r = 0;
  for (const auto& ob : env.obstacles) {
    VectorXd d = x - ob.center;
    double b = d.squaredNorm() - ob.radius * ob.radius;
    double bd = 2.0 * d.dot(v);
    // bdd = 2 v.v + 2 d.u >= -(k1+k2) bd - k1 k2 b
    pb.G.row(r) = -2.0 * d.transpose();
    pb.h[r] = 2.0 * v.squaredNorm() + (k1 + k2) * bd + k1 * k2 * b;
    ++r;
  }
  if (env.arena) {
    VectorXd d = x - env.arena->center;
    double b = env.arena->radius * env.arena->radius - d.squaredNorm();
    double bd = -2.0 * d.dot(v);
    pb.G.row(r) = 2.0 * d.transpose();
    pb.h[r] = -2.0 * v.squaredNorm() + (k1 + k2) * bd + k1 * k2 * b;
    ++r;
  }

  qp::QpSolution sol = qp::solve(pb);
  HocbfResult out;
  if (sol.status != qp::QpStatus::optimal) {
    out.u = VectorXd::Zero(2);
    out.feasible = false;
  } else {
    out.u = sol.u;
  }
  return out;
}

// ---------------------------------------------------------------------------
// integrator

VectorXd rk4_step(const Dynamics& f, const VectorXd& state, double dt) {
  if (dt <= 0.0) throw std::invalid_argument("rk4_step: dt must be > 0");
  VectorXd k1 = f(state);
  VectorXd k2 = f(state + 0.5 * dt * k1);
  VectorXd k3 = f(state + 0.5 * dt * k2);
  VectorXd k4 = f(state + dt * k3);
  VectorXd next = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) {
    throw std::runtime_error("rk4_step: state became non-finite");
  }
  return next;
}

}  // namespace ergcbf::plants
