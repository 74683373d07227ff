#include "ergcbf/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ergcbf/linalg.hpp"

namespace ergcbf::qp {
namespace {

constexpr double kActiveTol = 1e-9;
constexpr double kDualTol = 1e-10;
constexpr double kTikhonov = 1e-9;
constexpr int kMaxPivots = 1000;
const double kInf = std::numeric_limits<double>::infinity();

// Unified row form a_i^T u <= b_i covering G plus both bound sides.
// Unbounded sides keep their slot (b_i = +inf) so indices stay stable.
struct Rows {
  MatrixXd A;
  VectorXd b;
  int count() const { return static_cast<int>(A.rows()); }
  bool finite(int i) const { return std::isfinite(b[i]); }
};

Rows build_rows(const QpProblem& pb) {
  const int p = pb.num_vars();
  const int m = pb.num_ineq();
  Rows r;
  r.A.setZero(m + 2 * p, p);
  r.b.setConstant(m + 2 * p, kInf);
  if (m > 0) {
    r.A.topRows(m) = pb.G;
    r.b.head(m) = pb.h;
  }
  for (int i = 0; i < p; ++i) {
    r.A(m + i, i) = 1.0;
    if (pb.upper.size() == p) r.b[m + i] = pb.upper[i];
    r.A(m + p + i, i) = -1.0;
    if (pb.lower.size() == p) r.b[m + p + i] = -pb.lower[i];
  }
  return r;
}

struct KktStep {
  VectorXd p;
  VectorXd lambda;
};

// [H A_W^T; A_W 0] [p; lambda] = [rhs_top; rhs_bot], Tikhonov-regularized
// when the plain system is singular.
KktStep kkt_solve(const MatrixXd& H, const MatrixXd& Aw, const VectorXd& rhs_top,
                  const VectorXd& rhs_bot) {
  const int nv = static_cast<int>(H.rows());
  const int nw = static_cast<int>(Aw.rows());
  MatrixXd M(nv + nw, nv + nw);
  VectorXd rhs(nv + nw);
  for (int reg_pass = 0; reg_pass < 2; ++reg_pass) {
    M.setZero();
    M.topLeftCorner(nv, nv) = H;
    if (reg_pass > 0) {
      M.topLeftCorner(nv, nv) += kTikhonov * MatrixXd::Identity(nv, nv);
      M.bottomRightCorner(nw, nw) -= kTikhonov * MatrixXd::Identity(nw, nw);
    }
    if (nw > 0) {
      M.topRightCorner(nv, nw) = Aw.transpose();
      M.bottomLeftCorner(nw, nv) = Aw;
    }
    rhs.head(nv) = rhs_top;
    rhs.tail(nw) = rhs_bot;
    Eigen::FullPivLU<MatrixXd> lu(M);
    if (!lu.isInvertible() && reg_pass == 0) continue;
    VectorXd x = lu.solve(rhs);
    if (!x.allFinite()) {
      throw std::runtime_error("qp: KKT system produced non-finite step");
    }
    return {x.head(nv), x.tail(nw)};
  }
  throw std::runtime_error("qp: unreachable");
}

MatrixXd gather_rows(const Rows& rows, const std::vector<int>& W) {
  MatrixXd Aw(static_cast<int>(W.size()), rows.A.cols());
  for (size_t k = 0; k < W.size(); ++k) Aw.row(static_cast<int>(k)) = rows.A.row(W[k]);
  return Aw;
}

bool rows_independent(const Rows& rows, const std::vector<int>& W) {
  if (W.empty()) return true;
  MatrixXd Aw = gather_rows(rows, W);
  Eigen::FullPivLU<MatrixXd> lu(Aw);
  lu.setThreshold(1e-10);
  return lu.rank() == static_cast<int>(W.size());
}

// Primal active-set loop from a feasible start. Falls back to Bland's
// lowest-index pivoting after kBlandAfter pivots so degenerate vertices
// cannot cycle.
QpSolution active_set_solve(const MatrixXd& H, const VectorXd& f, const Rows& rows,
                            VectorXd u, const std::vector<int>& preferred_active) {
  const int nv = static_cast<int>(H.rows());
  const int kBlandAfter = 3 * (rows.count() + nv) + 20;
  QpSolution sol;
  sol.status = QpStatus::max_iterations;

  std::vector<int> W;
  auto in_working = [&](int i) { return std::find(W.begin(), W.end(), i) != W.end(); };
  auto seed_add = [&](int i) {
    if (in_working(i) || static_cast<int>(W.size()) >= nv) return;
    W.push_back(i);
    if (!rows_independent(rows, W)) W.pop_back();
  };
  for (int i : preferred_active) {
    if (i >= 0 && i < rows.count() && rows.finite(i) &&
        rows.A.row(i).dot(u) >= rows.b[i] - kActiveTol) {
      seed_add(i);
    }
  }
  for (int i = 0; i < rows.count(); ++i) {
    if (rows.finite(i) && rows.A.row(i).dot(u) >= rows.b[i] - kActiveTol) seed_add(i);
  }

  VectorXd lambda_W;
  for (int pivot = 0; pivot < kMaxPivots; ++pivot) {
    sol.pivots = pivot + 1;
    const bool bland = pivot >= kBlandAfter;
    VectorXd g = H * u + f;
    MatrixXd Aw = gather_rows(rows, W);
    KktStep step = kkt_solve(H, Aw, -g, VectorXd::Zero(static_cast<int>(W.size())));
    lambda_W = step.lambda;

    // ill-conditioned KKT systems leave noise in p; the polish pass
    // re-solves the final working set exactly, so the threshold can be loose
    const double step_scale = 1e-9 * std::max(1.0, u.lpNorm<Eigen::Infinity>());
    bool at_eqp_optimum = step.p.lpNorm<Eigen::Infinity>() <= step_scale;

    if (!at_eqp_optimum) {
      double alpha = 1.0;
      int blocker = -1;
      for (int i = 0; i < rows.count(); ++i) {
        if (!rows.finite(i) || in_working(i)) continue;
        double d = rows.A.row(i).dot(step.p);
        if (d <= 1e-13 * std::max(1.0, step.p.norm())) continue;
        double ai = (rows.b[i] - rows.A.row(i).dot(u)) / d;
        if (ai < alpha - 1e-13 || (bland && blocker >= 0 && ai < alpha + 1e-13 && i < blocker)) {
          alpha = std::max(ai, 0.0);
          blocker = i;
        }
      }
      u += alpha * step.p;
      if (blocker >= 0) {
        // a genuinely blocking row is independent of W (A_W p = 0,
        // a_i p > 0), so add unconditionally
        W.push_back(blocker);
        continue;
      }
      // full step without a blocker lands on the EQP optimum: the
      // multipliers from this solve are valid there, check them now
      at_eqp_optimum = true;
    }

    if (at_eqp_optimum) {
      int worst = -1;
      double worst_val = -kDualTol;
      for (size_t k = 0; k < W.size(); ++k) {
        const double lam = lambda_W[static_cast<int>(k)];
        if (lam >= -kDualTol) continue;
        if (bland) {  // lowest row index wins
          if (worst < 0 || W[k] < W[worst]) worst = static_cast<int>(k);
        } else if (lam < worst_val) {
          worst_val = lam;
          worst = static_cast<int>(k);
        }
      }
      if (worst < 0) {
        sol.status = QpStatus::optimal;
        break;
      }
      W.erase(W.begin() + worst);
    }
  }

  sol.u = u;
  sol.duals = VectorXd::Zero(rows.count());
  for (size_t k = 0; k < W.size(); ++k) {
    sol.duals[W[k]] = std::max(lambda_W.size() > static_cast<int>(k)
                                   ? lambda_W[static_cast<int>(k)]
                                   : 0.0,
                               0.0);
  }
  sol.active_set = W;
  std::sort(sol.active_set.begin(), sol.active_set.end());
  return sol;
}

// Exact KKT re-solve on the final active set; keeps the iterate when the
// polished point leaks out of the feasible region.
void polish(const MatrixXd& H, const VectorXd& f, const Rows& rows, QpSolution* sol) {
  if (sol->status != QpStatus::optimal) return;
  MatrixXd Aw = gather_rows(rows, sol->active_set);
  VectorXd bw(static_cast<int>(sol->active_set.size()));
  for (size_t k = 0; k < sol->active_set.size(); ++k) bw[static_cast<int>(k)] = rows.b[sol->active_set[k]];
  KktStep s = kkt_solve(H, Aw, -f, bw);
  for (int i = 0; i < rows.count(); ++i) {
    if (!rows.finite(i)) continue;
    if (rows.A.row(i).dot(s.p) > rows.b[i] + 1e-10) return;
  }
  sol->u = s.p;
  for (size_t k = 0; k < sol->active_set.size(); ++k) {
    sol->duals[sol->active_set[k]] = std::max(s.lambda[static_cast<int>(k)], 0.0);
  }
}

KktReport report_rows(const MatrixXd& H, const VectorXd& f, const Rows& rows,
                      const VectorXd& u, const VectorXd& duals) {
  KktReport rep;
  VectorXd stat = H * u + f;
  for (int i = 0; i < rows.count(); ++i) {
    if (!rows.finite(i)) continue;
    stat += duals[i] * rows.A.row(i).transpose();
    double slack = rows.A.row(i).dot(u) - rows.b[i];
    rep.primal_feasibility = std::max(rep.primal_feasibility, slack);
    rep.dual_feasibility = std::max(rep.dual_feasibility, -duals[i]);
    rep.complementarity = std::max(rep.complementarity, std::abs(duals[i] * slack));
  }
  rep.primal_feasibility = std::max(rep.primal_feasibility, 0.0);
  rep.dual_feasibility = std::max(rep.dual_feasibility, 0.0);
  rep.stationarity = stat.lpNorm<Eigen::Infinity>();
  return rep;
}

void validate(const QpProblem& pb) {
  const int p = pb.num_vars();
  if (p == 0) throw std::invalid_argument("qp: empty problem");
  if (pb.H.cols() != p) throw std::invalid_argument("qp: H must be square");
  if (pb.f.size() != p) throw std::invalid_argument("qp: f size mismatch");
  if (pb.G.rows() > 0 && pb.G.cols() != p) throw std::invalid_argument("qp: G column mismatch");
  if (pb.G.rows() != pb.h.size()) throw std::invalid_argument("qp: G/h row mismatch");
  if (pb.lower.size() != 0 && pb.lower.size() != p) throw std::invalid_argument("qp: lower size mismatch");
  if (pb.upper.size() != 0 && pb.upper.size() != p) throw std::invalid_argument("qp: upper size mismatch");
  if (!linalg::is_symmetric(pb.H, 1e-9)) throw std::invalid_argument("qp: H must be symmetric");
  if (linalg::max_sym_eig(-0.5 * (pb.H + pb.H.transpose())) > 1e-10) {
    throw std::invalid_argument("qp: H must be positive semidefinite");
  }
}

QpSolution solve_impl(const QpProblem& pb, const WarmStart* warm) {
  validate(pb);
  const int p = pb.num_vars();
  Rows rows = build_rows(pb);

  if (pb.lower.size() == p && pb.upper.size() == p) {
    for (int i = 0; i < p; ++i) {
      if (pb.lower[i] > pb.upper[i]) {
        QpSolution sol;
        sol.status = QpStatus::infeasible;
        sol.u = VectorXd::Zero(p);
        sol.duals = VectorXd::Zero(rows.count());
        return sol;
      }
    }
  }

  auto clamp_box = [&](VectorXd v) {
    for (int i = 0; i < p; ++i) {
      if (pb.lower.size() == p && v[i] < pb.lower[i]) v[i] = pb.lower[i];
      if (pb.upper.size() == p && v[i] > pb.upper[i]) v[i] = pb.upper[i];
    }
    return v;
  };

  VectorXd u0 = clamp_box(VectorXd::Zero(p));
  std::vector<int> preferred;
  if (warm != nullptr && warm->u.size() == p) {
    VectorXd cand = clamp_box(warm->u);
    bool ok = true;
    for (int i = 0; i < rows.count() && ok; ++i) {
      if (rows.finite(i) && rows.A.row(i).dot(cand) > rows.b[i] + kActiveTol) ok = false;
    }
    if (ok) {
      u0 = cand;
      preferred = warm->active;
    }
  }

  double violation = 0.0;
  for (int i = 0; i < rows.count(); ++i) {
    if (rows.finite(i)) violation = std::max(violation, rows.A.row(i).dot(u0) - rows.b[i]);
  }

  if (violation > kActiveTol) {
    // Phase 1: min 1/2 s^2 over (u, s) with every G row relaxed by s. The
    // u block of the Hessian stays zero; the KKT regularization pins u.
    const int m = pb.num_ineq();
    Rows aux;
    aux.A.setZero(rows.count() + 1, p + 1);
    aux.b.setConstant(rows.count() + 1, kInf);
    aux.A.block(0, 0, rows.count(), p) = rows.A;
    aux.b.head(rows.count()) = rows.b;
    for (int i = 0; i < m; ++i) aux.A(i, p) = -1.0;  // a_i^T u - s <= b_i
    aux.A(rows.count(), p) = -1.0;                   // s >= 0
    aux.b[rows.count()] = 0.0;

    MatrixXd Haux = MatrixXd::Zero(p + 1, p + 1);
    Haux(p, p) = 1.0;
    VectorXd faux = VectorXd::Zero(p + 1);

    VectorXd start(p + 1);
    start.head(p) = u0;
    start[p] = violation + 1.0;
    QpSolution aux_sol = active_set_solve(Haux, faux, aux, start, {});
    VectorXd cand = aux_sol.u.head(p);
    double residual = 0.0;
    for (int i = 0; i < rows.count(); ++i) {
      if (rows.finite(i)) residual = std::max(residual, rows.A.row(i).dot(cand) - rows.b[i]);
    }
    if (aux_sol.status == QpStatus::max_iterations || residual > 1e-8) {
      QpSolution sol;
      sol.status = QpStatus::infeasible;
      sol.u = cand;
      sol.duals = VectorXd::Zero(rows.count());
      return sol;
    }
    u0 = cand;
  }

  QpSolution sol = active_set_solve(pb.H, pb.f, rows, u0, preferred);
  polish(pb.H, pb.f, rows, &sol);
  sol.kkt_residual = report_rows(pb.H, pb.f, rows, sol.u, sol.duals).worst();
  return sol;
}

}  // namespace

double KktReport::worst() const {
  return std::max({stationarity, primal_feasibility, dual_feasibility, complementarity});
}

QpSolution solve(const QpProblem& problem) { return solve_impl(problem, nullptr); }

QpSolution solve(const QpProblem& problem, const WarmStart& warm) {
  return solve_impl(problem, &warm);
}

KktReport check_kkt(const QpProblem& problem, const VectorXd& u, const VectorXd& duals) {
  Rows rows = build_rows(problem);
  if (u.size() != problem.num_vars() || duals.size() != rows.count()) {
    throw std::invalid_argument("check_kkt: dimension mismatch");
  }
  return report_rows(problem.H, problem.f, rows, u, duals);
}

std::string to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::max_iterations: return "max-iterations";
  }
  return "unknown";
}

}  // namespace ergcbf::qp
