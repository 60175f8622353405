#pragma once

#include <Eigen/Dense>

#include "lqmfg/errors.hpp"

// Dense symmetric/spectral helpers shared by every other module.
// Conventions: matrices are real and dynamically sized; "precision matrix"
// always means the inverse of a covariance.

namespace lqmfg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;

// Elementwise max-norm symmetry tolerance: 1e-9 * (1 + max|M_ij|).
double symmetry_tolerance(const Matrix& M);
bool is_symmetric(const Matrix& M);
Matrix symmetrized(const Matrix& M);

// Throws DimensionError when M has a NaN/Inf entry.
void require_finite(const Matrix& M, const char* what);
void require_finite(const Vector& v, const char* what);

struct SpectralReport {
  ComplexVector eigenvalues;
  double min_real_part = 0.0;
  double max_abs = 0.0;
  bool symmetric = false;
  bool spd = false;
};

// Full eigenvalue summary of a (possibly non-symmetric) square matrix.
SpectralReport spectral_report(const Matrix& M);

// Largest |eigenvalue| of a symmetric matrix. Throws NonSymmetricError.
double spectral_norm(const Matrix& M);

// Largest singular value; defined for any rectangular matrix.
double operator_norm(const Matrix& M);

// Smallest eigenvalue of the symmetric part of M.
double min_symmetric_eigenvalue(const Matrix& M);

// Symmetric within tolerance and lambda_min > 1e-9 * (1 + ||M||).
bool is_spd(const Matrix& M);
void require_spd(const Matrix& M, const char* what);

// Unique SPD square root of an SPD matrix. Throws NotSpdError.
Matrix spd_sqrt(const Matrix& M);

// Max real part of spec(M); stable means < -1e-9 * (1 + spectral radius).
double stability_margin(const Matrix& M);
bool is_stable(const Matrix& M);

// Solves M V + V M^T + C = 0 for stable M and symmetric C via the
// vectorized d^2 x d^2 Kronecker system. Throws UnstableError when M is
// not strictly stable and NonSymmetricError when C is not symmetric.
Matrix solve_lyapunov(const Matrix& M, const Matrix& C);

struct RankReport {
  int rank_lhs = 0;
  int rank_augmented = 0;
  bool consistent = false;
};

// Ranks of B and [B | P] with cutoff 1e-8 * sigma_max * max(rows, cols);
// consistent means the two ranks agree, i.e. B x = P has a solution.
RankReport rank_consistent(const Matrix& B, const Vector& P);

// Rank of a single matrix under the same cutoff rule.
int numerical_rank(const Matrix& M);

}  // namespace lqmfg
