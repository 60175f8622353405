#include "lqmfg/matlin.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <string>

namespace lqmfg {

namespace {

void require_square(const Matrix& M, const char* what) {
  if (M.rows() != M.cols()) {
    throw DimensionError(std::string(what) + ": expected a square matrix, got " +
                         std::to_string(M.rows()) + "x" + std::to_string(M.cols()));
  }
  require_finite(M, what);
}

double rank_cutoff(const Eigen::JacobiSVD<Matrix>& svd, Eigen::Index rows, Eigen::Index cols) {
  const double smax = svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
  return 1e-8 * smax * static_cast<double>(std::max(rows, cols));
}

int rank_with_cutoff(const Eigen::JacobiSVD<Matrix>& svd, double cutoff) {
  int r = 0;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) {
    if (svd.singularValues()(i) > cutoff) ++r;
  }
  return r;
}

}  // namespace

double symmetry_tolerance(const Matrix& M) {
  return 1e-9 * (1.0 + M.cwiseAbs().maxCoeff());
}

bool is_symmetric(const Matrix& M) {
  if (M.rows() != M.cols()) return false;
  return (M - M.transpose()).cwiseAbs().maxCoeff() <= symmetry_tolerance(M);
}

Matrix symmetrized(const Matrix& M) { return 0.5 * (M + M.transpose()); }

void require_finite(const Matrix& M, const char* what) {
  if (!M.allFinite()) {
    throw DimensionError(std::string(what) + ": non-finite entry");
  }
}

void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) {
    throw DimensionError(std::string(what) + ": non-finite entry");
  }
}

SpectralReport spectral_report(const Matrix& M) {
  require_square(M, "spectral_report");
  SpectralReport rep;
  rep.symmetric = is_symmetric(M);
  if (rep.symmetric) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(M));
    rep.eigenvalues = es.eigenvalues().cast<std::complex<double>>();
  } else {
    Eigen::EigenSolver<Matrix> es(M);
    rep.eigenvalues = es.eigenvalues();
  }
  rep.min_real_part = rep.eigenvalues.real().minCoeff();
  rep.max_abs = rep.eigenvalues.cwiseAbs().maxCoeff();
  const double spd_tol = 1e-9 * (1.0 + rep.max_abs);
  rep.spd = rep.symmetric && rep.min_real_part > spd_tol;
  return rep;
}

double spectral_norm(const Matrix& M) {
  require_square(M, "spectral_norm");
  if (!is_symmetric(M)) {
    throw NonSymmetricError("spectral_norm: matrix is not symmetric within tolerance");
  }
  if (M.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(M), Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double operator_norm(const Matrix& M) {
  require_finite(M, "operator_norm");
  if (M.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(M);
  return svd.singularValues()(0);
}

double min_symmetric_eigenvalue(const Matrix& M) {
  require_square(M, "min_symmetric_eigenvalue");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(M), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

bool is_spd(const Matrix& M) {
  if (M.rows() != M.cols() || !M.allFinite() || !is_symmetric(M)) return false;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(M), Eigen::EigenvaluesOnly);
  const double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
  return es.eigenvalues().minCoeff() > 1e-9 * (1.0 + lmax);
}

void require_spd(const Matrix& M, const char* what) {
  require_square(M, what);
  if (!is_symmetric(M)) {
    throw NonSymmetricError(std::string(what) + ": matrix is not symmetric");
  }
  if (!is_spd(M)) {
    throw NotSpdError(std::string(what) + ": matrix is not positive definite");
  }
}

Matrix spd_sqrt(const Matrix& M) {
  require_square(M, "spd_sqrt");
  if (!is_symmetric(M)) {
    throw NonSymmetricError("spd_sqrt: matrix is not symmetric within tolerance");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(M));
  const Vector ev = es.eigenvalues();
  const double lmax = ev.cwiseAbs().maxCoeff();
  if (ev.minCoeff() <= 1e-9 * (1.0 + lmax)) {
    throw NotSpdError("spd_sqrt: matrix is not positive definite");
  }
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

double stability_margin(const Matrix& M) {
  require_square(M, "stability_margin");
  Eigen::EigenSolver<Matrix> es(M, /*computeEigenvectors=*/false);
  return es.eigenvalues().real().maxCoeff();
}

bool is_stable(const Matrix& M) {
  Eigen::EigenSolver<Matrix> es(M, false);
  const double radius = es.eigenvalues().cwiseAbs().maxCoeff();
  return es.eigenvalues().real().maxCoeff() < -1e-9 * (1.0 + radius);
}

Matrix solve_lyapunov(const Matrix& M, const Matrix& C) {
  require_square(M, "solve_lyapunov");
  require_square(C, "solve_lyapunov");
  const Eigen::Index d = M.rows();
  if (C.rows() != d) {
    throw DimensionError("solve_lyapunov: M and C sizes differ");
  }
  if (!is_symmetric(C)) {
    throw NonSymmetricError("solve_lyapunov: C is not symmetric within tolerance");
  }
  if (!is_stable(M)) {
    throw UnstableError("solve_lyapunov: M has an eigenvalue with real part >= 0");
  }

  // vec(MV) = (I (x) M) vec(V), vec(V M^T) = (M (x) I) vec(V), column-major.
  const Eigen::Index n = d * d;
  Matrix K = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < d; ++j) {
    K.block(j * d, j * d, d, d) += M;
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index k = 0; k < d; ++k) {
        K(i * d + k, j * d + k) += M(i, j);
      }
    }
  }
  const Matrix Cs = symmetrized(C);
  Vector rhs(n);
  for (Eigen::Index j = 0; j < d; ++j) rhs.segment(j * d, d) = -Cs.col(j);

  Vector v = K.partialPivLu().solve(rhs);
  Matrix V(d, d);
  for (Eigen::Index j = 0; j < d; ++j) V.col(j) = v.segment(j * d, d);
  V = symmetrized(V);

  const double scale = 1.0 + Cs.cwiseAbs().maxCoeff() + V.cwiseAbs().maxCoeff() * M.cwiseAbs().maxCoeff();
  const double resid = (M * V + V * M.transpose() + Cs).cwiseAbs().maxCoeff();
  if (resid > 1e-7 * scale) {
    throw IllConditionedError("solve_lyapunov: residual too large, system is ill conditioned");
  }
  return V;
}

RankReport rank_consistent(const Matrix& B, const Vector& P) {
  require_finite(B, "rank_consistent");
  require_finite(P, "rank_consistent");
  if (P.size() != B.rows()) {
    throw DimensionError("rank_consistent: right-hand side length does not match B");
  }
  Matrix aug(B.rows(), B.cols() + 1);
  aug.leftCols(B.cols()) = B;
  aug.col(B.cols()) = P;

  Eigen::JacobiSVD<Matrix> svd_b(B);
  Eigen::JacobiSVD<Matrix> svd_aug(aug);
  // One cutoff for both so a tiny right-hand side cannot flip the verdict.
  const double cutoff = std::max(rank_cutoff(svd_b, B.rows(), B.cols()),
                                 rank_cutoff(svd_aug, aug.rows(), aug.cols()));
  RankReport rep;
  rep.rank_lhs = rank_with_cutoff(svd_b, cutoff);
  rep.rank_augmented = rank_with_cutoff(svd_aug, cutoff);
  rep.consistent = rep.rank_lhs == rep.rank_augmented;
  return rep;
}

int numerical_rank(const Matrix& M) {
  require_finite(M, "numerical_rank");
  if (M.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(M);
  return rank_with_cutoff(svd, rank_cutoff(svd, M.rows(), M.cols()));
}

}  // namespace lqmfg
