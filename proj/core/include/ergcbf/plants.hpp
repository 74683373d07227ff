#pragma once

#include <Eigen/Dense>
#include <functional>

#include "ergcbf/qp.hpp"
#include "ergcbf/world.hpp"

namespace ergcbf::plants {

using Eigen::Matrix3d;
using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// 2-D double integrator, state [x1 x2 v1 v2], u = acceleration

struct DoubleIntegratorGains {
  double kp = -6.0;
  double kd = -4.0;
};

// A, B, C and the closed loop A + B K for per-axis PD feedback
struct DiMatrices {
  MatrixXd A;    // 4x4
  MatrixXd B;    // 4x2
  MatrixXd C;    // 2x4 position selector
  MatrixXd K;    // 2x4
  MatrixXd Acl;  // A + B K
};
DiMatrices di_matrices(const DoubleIntegratorGains& gains);

// throws when A + B K is not Hurwitz
void check_di_gains(const DoubleIntegratorGains& gains);

// u = kp (x - g) + kd v
VectorXd di_controller(const VectorXd& state, const VectorXd& g,
                       const DoubleIntegratorGains& gains);

VectorXd di_derivatives(const VectorXd& state, const VectorXd& u);

// ---------------------------------------------------------------------------
// quadrotor on SE(3), gravity along +e3, thrust along -R e3

struct QuadrotorParams {
  double mass = 1.0;
  Matrix3d inertia = (Eigen::Vector3d(0.02, 0.02, 0.04)).asDiagonal();
  double gravity = 9.81;
  double k_x = 8.0;
  double k_v = 4.0;
  double k_R = 2.0;
  double k_Omega = 0.4;
  double arm_length = 0.2;  // obstacle inflation margin
};

struct QuadrotorState {
  Vector3d x = Vector3d::Zero();
  Vector3d v = Vector3d::Zero();
  Matrix3d R = Matrix3d::Identity();
  Vector3d Omega = Vector3d::Zero();

  VectorXd flatten() const;                  // 18 entries
  static QuadrotorState unflatten(const VectorXd& s);
  double orthonormality_error() const;       // ||R^T R - I||_F
  void reorthonormalize();                   // Gram-Schmidt on the columns
};

struct QuadrotorInput {
  double thrust = 0.0;
  Vector3d moment = Vector3d::Zero();
};

VectorXd quadrotor_derivatives(const VectorXd& state, const QuadrotorInput& u,
                               const QuadrotorParams& p);

// Geometric tracking controller; holds the finite-difference attitude
// reference across calls.
class QuadTrackingController {
 public:
  explicit QuadTrackingController(QuadrotorParams params, Vector3d heading = Vector3d(1, 0, 0))
      : params_(params), heading_(heading) {}

  QuadrotorInput control(const QuadrotorState& s, const Vector3d& x_d, const Vector3d& v_d,
                         const Vector3d& a_d, double dt);
  void reset();

  const QuadrotorParams& params() const { return params_; }

 private:
  QuadrotorParams params_;
  Vector3d heading_;
  bool have_prev_ = false;
  Matrix3d prev_Rd_ = Matrix3d::Identity();
  Vector3d prev_Omega_d_ = Vector3d::Zero();
  bool have_prev_omega_ = false;
};

// 6x6 closed loop of the feedback-linearized translational subsystem at
// hover, used by the governor's margin.
MatrixXd quad_hover_closed_loop(const QuadrotorParams& p);

// ---------------------------------------------------------------------------
// adaptive cruise control fixture, state [d, v_e]

VectorXd acc_drift(const VectorXd& state, double v0);   // f(x)
VectorXd acc_input_dir(const VectorXd& state);          // g(x)
VectorXd acc_plant(double v_e, double d, double v0, double u);  // full dx/dt

// Numeric Lie-derivative probe of b = d - d_delta along the ACC dynamics:
// the input coefficients of the first and second time derivatives of b
// (0 and -1 -> the input only appears after two differentiations).
struct AccLieCheck {
  double first_order_input_coeff = 0.0;
  double second_order_input_coeff = 0.0;
};
AccLieCheck acc_lie_check(double v0, double d_delta, const VectorXd& x_eval);

// ---------------------------------------------------------------------------
// HOCBF baseline for the double integrator

struct HocbfResult {
  VectorXd u;
  bool feasible = true;
};

// min ||u - u_nom||^2 s.t. second-order exponential barrier rows per
// obstacle (and arena): bdd + (k1+k2) bd + k1 k2 b >= 0 with
// b = ||x-o||^2 - r^2. Infeasible -> zero input, flagged.
HocbfResult hocbf_controller(const VectorXd& state, const VectorXd& target,
                             const world::Environment& env, double k1, double k2,
                             const DoubleIntegratorGains& nominal);

// ---------------------------------------------------------------------------
// integrator

using Dynamics = std::function<VectorXd(const VectorXd&)>;

// classical RK4, input held over the step by the caller's closure
VectorXd rk4_step(const Dynamics& f, const VectorXd& state, double dt);

}  // namespace ergcbf::plants
