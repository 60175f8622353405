#pragma once

#include "lqmfg/matlin.hpp"

// Algebraic Riccati equation Y Rcal Y = Qcal for SPD Rcal and SPD Qcal,
// solved through the invariant subspaces of the block Hamiltonian
// [[0, Rcal], [Qcal, 0]].

namespace lqmfg {

struct AREProblem {
  Matrix Rcal;  // SPD weight
  Matrix Qcal;  // SPD right-hand side
};

// The 2d x 2d block matrix [[0, Rcal], [Qcal, 0]]. Its eigenvalues come in
// +-ell pairs with ell^2 in spec(Rcal * Qcal).
Matrix build_hamiltonian(const AREProblem& p);

// Unique SPD solution Y = X2 * X1^{-1} built from the eigenvectors of the
// Hamiltonian attached to its positive eigenvalues; spec(Rcal * Y) equals
// spec(Hamiltonian) intersected with (0, inf).
// Throws NotSpdError when Rcal or Qcal fails positivity (a complex
// Hamiltonian eigenvalue beyond roundoff signals the latter) and
// IllConditionedError when the eigenvector basis degenerates.
Matrix solve_are_spd(const AREProblem& p);

// Sigma = (1/nubar) * sqrt((2/r) Q + A^2) for symmetric A and scalar
// weights: the closed form of the ARE with Rcal = nubar^2 r / 2 * I and
// Qcal = r A^2 / 2 + Q. Independent of the Hamiltonian route.
Matrix closed_form_sigma(const Matrix& A, const Matrix& Q, double r, double nubar);

// || Y nu R - R nu Y - (R A - A^T R) ||, the operator norm of the skew
// defect; zero exactly when Lambda = R (nu Y + A) is symmetric.
double sylvester_residual(const Matrix& Y, const Matrix& nu, const Matrix& R, const Matrix& A);

}  // namespace lqmfg
