#include "lqmfg/riccati.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <string>
#include <vector>

namespace lqmfg {

Matrix build_hamiltonian(const AREProblem& p) {
  require_spd(p.Rcal, "build_hamiltonian: Rcal");
  if (p.Qcal.rows() != p.Rcal.rows() || p.Qcal.cols() != p.Rcal.cols()) {
    throw DimensionError("build_hamiltonian: Rcal and Qcal sizes differ");
  }
  if (!is_symmetric(p.Qcal)) {
    throw NonSymmetricError("build_hamiltonian: Qcal is not symmetric");
  }
  const Eigen::Index d = p.Rcal.rows();
  Matrix H = Matrix::Zero(2 * d, 2 * d);
  H.topRightCorner(d, d) = p.Rcal;
  H.bottomLeftCorner(d, d) = p.Qcal;
  return H;
}

Matrix solve_are_spd(const AREProblem& p) {
  const Matrix H = build_hamiltonian(p);
  const Eigen::Index d = p.Rcal.rows();
  if (!is_spd(p.Qcal)) {
    throw NotSpdError("solve_are_spd: Qcal is not positive definite");
  }

  Eigen::EigenSolver<Matrix> es(H);
  if (es.info() != Eigen::Success) {
    throw IllConditionedError("solve_are_spd: eigensolver failed on the Hamiltonian");
  }
  const ComplexVector evs = es.eigenvalues();
  const double scale = evs.cwiseAbs().maxCoeff();

  // With Qcal SPD the spectrum is real; residual imaginary parts beyond
  // roundoff mean the data left the admissible cone.
  std::vector<Eigen::Index> positive;
  for (Eigen::Index i = 0; i < evs.size(); ++i) {
    if (std::abs(evs(i).imag()) > 1e-9 * (1.0 + scale)) {
      throw NotSpdError("solve_are_spd: Hamiltonian spectrum is not real");
    }
    if (evs(i).real() > 0.0) positive.push_back(i);
  }
  if (static_cast<Eigen::Index>(positive.size()) != d) {
    throw IllConditionedError("solve_are_spd: positive-eigenvalue subspace has wrong dimension");
  }

  const ComplexMatrix V = es.eigenvectors();
  Matrix X1(d, d), X2(d, d);
  for (Eigen::Index k = 0; k < d; ++k) {
    const ComplexVector col = V.col(positive[static_cast<size_t>(k)]);
    X1.col(k) = col.head(d).real();
    X2.col(k) = col.tail(d).real();
  }

  Eigen::JacobiSVD<Matrix> svd(X1);
  const double smin = svd.singularValues()(d - 1);
  const double smax = svd.singularValues()(0);
  if (smin <= 0.0 || smax / smin > 1e12) {
    throw IllConditionedError("solve_are_spd: invariant-subspace basis is ill conditioned");
  }

  // Y = X2 X1^{-1} via X1^T Y^T = X2^T.
  Matrix Y = X1.transpose().partialPivLu().solve(X2.transpose()).transpose();
  Y = symmetrized(Y);

  const double resid = operator_norm(Y * p.Rcal * Y - p.Qcal);
  if (resid > 1e-7 * (1.0 + operator_norm(p.Qcal))) {
    throw IllConditionedError("solve_are_spd: residual check failed");
  }
  return Y;
}

Matrix closed_form_sigma(const Matrix& A, const Matrix& Q, double r, double nubar) {
  if (!(r > 0.0) || !(nubar > 0.0)) {
    throw Error("closed_form_sigma: r and nubar must be positive");
  }
  if (A.rows() != Q.rows() || A.cols() != Q.cols()) {
    throw DimensionError("closed_form_sigma: A and Q sizes differ");
  }
  if (!is_symmetric(A)) {
    throw NonSymmetricError("closed_form_sigma: A is not symmetric");
  }
  return spd_sqrt((2.0 / r) * Q + A * A) / nubar;
}

double sylvester_residual(const Matrix& Y, const Matrix& nu, const Matrix& R, const Matrix& A) {
  const Eigen::Index d = Y.rows();
  if (nu.rows() != d || R.rows() != d || A.rows() != d ||
      nu.cols() != d || R.cols() != d || A.cols() != d || Y.cols() != d) {
    throw DimensionError("sylvester_residual: size mismatch");
  }
  const Matrix S = Y * nu * R - R * nu * Y - (R * A - A.transpose() * R);
  return operator_norm(S);
}

}  // namespace lqmfg
