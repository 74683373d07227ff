#include "ergcbf/linalg.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

namespace ergcbf::linalg {
namespace {

void require_square(const MatrixXd& M, const char* who) {
  if (M.rows() != M.cols()) {
    throw std::invalid_argument(std::string(who) + ": matrix must be square");
  }
}

// Characteristic polynomial coefficients via Faddeev-LeVerrier:
// p(s) = s^n + c[0] s^(n-1) + ... + c[n-1].
std::vector<double> char_poly(const MatrixXd& A) {
  const int n = static_cast<int>(A.rows());
  std::vector<double> c(n);
  MatrixXd M = MatrixXd::Identity(n, n);
  for (int k = 1; k <= n; ++k) {
    M = A * M;
    c[k - 1] = -M.trace() / k;
    M += c[k - 1] * MatrixXd::Identity(n, n);
  }
  return c;
}

// Durand-Kerner simultaneous root iteration on a monic polynomial.
std::vector<std::complex<double>> poly_roots(const std::vector<double>& c) {
  using cplx = std::complex<double>;
  const int n = static_cast<int>(c.size());
  auto eval = [&](cplx s) {
    cplx v(1.0, 0.0);
    for (int i = 0; i < n; ++i) v = v * s + c[i];
    return v;
  };
  double radius = 1.0;
  for (int i = 0; i < n; ++i) {
    radius = std::max(radius, 2.0 * std::pow(std::abs(c[i]), 1.0 / (i + 1)));
  }
  std::vector<cplx> r(n);
  for (int i = 0; i < n; ++i) {
    double ang = 2.0 * M_PI * i / n + 0.35;  // avoid starting on an axis
    r[i] = radius * cplx(std::cos(ang), std::sin(ang));
  }
  for (int it = 0; it < 500; ++it) {
    double shift = 0.0;
    for (int i = 0; i < n; ++i) {
      cplx denom(1.0, 0.0);
      for (int j = 0; j < n; ++j) {
        if (j != i) denom *= (r[i] - r[j]);
      }
      if (std::abs(denom) < 1e-300) continue;
      cplx d = eval(r[i]) / denom;
      r[i] -= d;
      shift = std::max(shift, std::abs(d));
    }
    if (shift < 1e-13 * std::max(1.0, radius)) break;
  }
  return r;
}

double max_real_by_char_poly(const MatrixXd& M) {
  auto roots = poly_roots(char_poly(M));
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& r : roots) worst = std::max(worst, r.real());
  return worst;
}

// Unshifted QR iteration; real parts read off the quasi-triangular limit
// (1x1 blocks directly, 2x2 blocks via trace/discriminant).
double max_real_by_qr(const MatrixXd& M) {
  const int n = static_cast<int>(M.rows());
  MatrixXd A = M;
  const double scale = std::max(1.0, A.norm());
  for (int it = 0; it < 10000; ++it) {
    Eigen::HouseholderQR<MatrixXd> qr(A);
    MatrixXd Q = qr.householderQ();
    MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
    A = R * Q;
    bool settled = true;
    for (int i = 1; i < n && settled; ++i) {
      double sub = std::abs(A(i, i - 1));
      if (sub > 1e-12 * scale) {
        // part of a genuine 2x2 block is fine; a chain of two is not
        bool chained = (i + 1 < n && std::abs(A(i + 1, i)) > 1e-12 * scale) ||
                       (i - 1 >= 1 && std::abs(A(i - 1, i - 2)) > 1e-12 * scale);
        if (chained) settled = false;
      }
    }
    if (settled && it > 2) break;
  }
  double worst = -std::numeric_limits<double>::infinity();
  int i = 0;
  while (i < n) {
    if (i + 1 < n && std::abs(A(i + 1, i)) > 1e-12 * scale) {
      double a = A(i, i), b = A(i, i + 1), cc = A(i + 1, i), d = A(i + 1, i + 1);
      double tr = a + d;
      double disc = (a - d) * (a - d) + 4.0 * b * cc;
      if (disc >= 0.0) {
        double s = std::sqrt(disc);
        worst = std::max({worst, 0.5 * (tr + s), 0.5 * (tr - s)});
      } else {
        worst = std::max(worst, 0.5 * tr);
      }
      i += 2;
    } else {
      worst = std::max(worst, A(i, i));
      i += 1;
    }
  }
  return worst;
}

}  // namespace

bool is_symmetric(const MatrixXd& M, double rel_tol) {
  if (M.rows() != M.cols()) return false;
  const double tol = rel_tol * std::max(1.0, M.norm());
  for (int i = 0; i < M.rows(); ++i) {
    for (int j = i + 1; j < M.cols(); ++j) {
      if (std::abs(M(i, j) - M(j, i)) > tol) return false;
    }
  }
  return true;
}

double max_real_eigenvalue(const MatrixXd& M) {
  require_square(M, "max_real_eigenvalue");
  if (M.rows() == 0) throw std::invalid_argument("max_real_eigenvalue: empty matrix");
  if (M.rows() == 1) return M(0, 0);
  if (M.rows() <= 4) return max_real_by_char_poly(M);
  return max_real_by_qr(M);
}

bool is_hurwitz(const MatrixXd& M) {
  return max_real_eigenvalue(M) < 0.0;
}

MatrixXd solve_lyapunov(const MatrixXd& Acl, const MatrixXd& Q) {
  require_square(Acl, "solve_lyapunov");
  const int n = static_cast<int>(Acl.rows());
  if (Q.rows() != n || Q.cols() != n) {
    throw std::invalid_argument("solve_lyapunov: Q dimension mismatch");
  }
  if (!is_symmetric(Q)) {
    throw std::invalid_argument("solve_lyapunov: Q must be symmetric");
  }
  {
    Eigen::LLT<MatrixXd> llt(Q);
    if (llt.info() != Eigen::Success) {
      throw std::invalid_argument("solve_lyapunov: Q must be positive definite");
    }
  }
  if (!is_hurwitz(Acl)) {
    throw std::runtime_error("solve_lyapunov: Acl is not Hurwitz, no unique SPD solution");
  }

  const MatrixXd At = Acl.transpose();
  const MatrixXd I = MatrixXd::Identity(n, n);
  MatrixXd K(n * n, n * n);  // I (x) At + At (x) I, column-major vec
  K.setZero();
  for (int bc = 0; bc < n; ++bc) {
    for (int br = 0; br < n; ++br) {
      // kron(I, At): block-diagonal copies of At
      if (bc == br) K.block(br * n, bc * n, n, n) += At;
      // kron(At, I): At(br, bc) * I per block
      K.block(br * n, bc * n, n, n) += At(br, bc) * I;
    }
  }
  VectorXd rhs(n * n);
  for (int c = 0; c < n; ++c) rhs.segment(c * n, n) = -Q.col(c);

  VectorXd p = K.partialPivLu().solve(rhs);
  MatrixXd P(n, n);
  for (int c = 0; c < n; ++c) P.col(c) = p.segment(c * n, n);
  P = 0.5 * (P + P.transpose());

  const double residual = (At * P + P * Acl + Q).norm();
  if (residual > 1e-9 * Q.norm()) {
    throw std::runtime_error("solve_lyapunov: residual exceeds 1e-9 * ||Q||");
  }
  return P;
}

MatrixXd cholesky_lower(const MatrixXd& P) {
  require_square(P, "cholesky_lower");
  if (!is_symmetric(P)) {
    throw std::invalid_argument("cholesky_lower: matrix is not symmetric");
  }
  const int n = static_cast<int>(P.rows());
  MatrixXd L = MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    double diag = P(j, j) - L.row(j).head(j).squaredNorm();
    if (diag <= 0.0) {
      throw std::runtime_error("cholesky_lower: non-positive pivot, matrix not SPD");
    }
    L(j, j) = std::sqrt(diag);
    for (int i = j + 1; i < n; ++i) {
      L(i, j) = (P(i, j) - L.row(i).head(j).dot(L.row(j).head(j))) / L(j, j);
    }
  }
  return L;
}

SymEig sym_eig(const MatrixXd& S) {
  require_square(S, "sym_eig");
  if (!is_symmetric(S)) {
    throw std::invalid_argument("sym_eig: matrix is not symmetric within tolerance");
  }
  const int n = static_cast<int>(S.rows());
  MatrixXd A = 0.5 * (S + S.transpose());
  MatrixXd V = MatrixXd::Identity(n, n);
  const double scale = std::max(1.0, A.norm());

  auto off_norm = [&](const MatrixXd& M) {
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) s += M(i, j) * M(i, j);
    return std::sqrt(2.0 * s);
  };

  for (int sweep = 0; sweep < 100 && off_norm(A) > 1e-14 * scale; ++sweep) {
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(A(p, q)) <= 1e-300) continue;
        double tau = (A(q, q) - A(p, p)) / (2.0 * A(p, q));
        double t = (tau >= 0 ? 1.0 : -1.0) /
                   (std::abs(tau) + std::sqrt(tau * tau + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        // A <- J^T A J with J the (p,q)-plane rotation [[c, s], [-s, c]]
        for (int k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          double akp = A(k, p), akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
          A(p, k) = A(k, p);
          A(q, k) = A(k, q);
        }
        double app = A(p, p), aqq = A(q, q), apq = A(p, q);
        A(p, p) = c * c * app - 2.0 * s * c * apq + s * s * aqq;
        A(q, q) = s * s * app + 2.0 * s * c * apq + c * c * aqq;
        A(p, q) = A(q, p) = 0.0;
        for (int k = 0; k < n; ++k) {
          double vkp = V(k, p), vkq = V(k, q);
          V(k, p) = c * vkp - s * vkq;
          V(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  SymEig out;
  out.values = A.diagonal();
  out.vectors = V;
  // ascending order
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(),
            [&](int a, int b) { return out.values[a] < out.values[b]; });
  VectorXd vals(n);
  MatrixXd vecs(n, n);
  for (int i = 0; i < n; ++i) {
    vals[i] = out.values[idx[i]];
    vecs.col(i) = out.vectors.col(idx[i]);
  }
  out.values = vals;
  out.vectors = vecs;
  return out;
}

double max_sym_eig(const MatrixXd& S) {
  auto eig = sym_eig(S);
  return eig.values[eig.values.size() - 1];
}

double output_gain(const MatrixXd& P, const MatrixXd& C) {
  if (C.cols() != P.rows()) {
    throw std::invalid_argument("output_gain: C column count must match P dimension");
  }
  MatrixXd L = cholesky_lower(P);
  // W = L^-1 C^T by forward substitution, then S = W W^T
  MatrixXd W = L.triangularView<Eigen::Lower>().solve(MatrixXd(C.transpose()));
  MatrixXd S = W * W.transpose();
  S = 0.5 * (S + S.transpose());
  return std::sqrt(std::max(0.0, max_sym_eig(S)));
}

}  // namespace ergcbf::linalg
