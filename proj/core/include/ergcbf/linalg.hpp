#pragma once

#include <Eigen/Dense>

namespace ergcbf::linalg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Max |M_ij - M_ji| must stay below 1e-12 * max(1, ||M||_F) for a matrix to
// count as symmetric.
bool is_symmetric(const MatrixXd& M, double rel_tol = 1e-12);

// Largest real part over all eigenvalues. Characteristic-polynomial roots
// (Faddeev-LeVerrier + Durand-Kerner) for n <= 4, unshifted QR iteration
// with a 1e4 sweep cap above that.
double max_real_eigenvalue(const MatrixXd& M);

// True iff every eigenvalue of M has strictly negative real part.
bool is_hurwitz(const MatrixXd& M);

// Solves Acl^T P + P Acl = -Q for symmetric positive definite Q by
// vectorization: (I (x) Acl^T + Acl^T (x) I) vec(P) = -vec(Q).
// Requires Acl Hurwitz; the accepted P satisfies
// ||Acl^T P + P Acl + Q||_F <= 1e-9 ||Q||_F and is SPD.
MatrixXd solve_lyapunov(const MatrixXd& Acl, const MatrixXd& Q);

// Lower-triangular L with L L^T = P. Throws if a pivot is <= 0.
MatrixXd cholesky_lower(const MatrixXd& P);

struct SymEig {
  VectorXd values;   // ascending
  MatrixXd vectors;  // column k pairs with values[k]
};

// Cyclic Jacobi eigendecomposition of a symmetric matrix.
SymEig sym_eig(const MatrixXd& S);

double max_sym_eig(const MatrixXd& S);

// l = sqrt(lambda_max(L^-1 C^T C L^-T)) with P = L L^T, the smallest
// constant with ||C (x1 - x2)||^2 <= l^2 (x1 - x2)^T P (x1 - x2).
double output_gain(const MatrixXd& P, const MatrixXd& C);

}  // namespace ergcbf::linalg
