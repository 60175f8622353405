#pragma once

#include "lqmfg/games.hpp"
#include "lqmfg/synthesis.hpp"

// Change of variables xi = Z P x that turns a non-symmetric drift with an
// SPD symmetrizer Y = P^T Z^2 P (P orthogonal, Z diagonal SPD) into a
// symmetric one. Games whose noise and control weight carry the matching
// structure sigma = s P^T Z^{-1}, R = r Y transform into scalar-weight
// games that the exchangeable solver handles; solutions pull back exactly.

namespace lqmfg {

struct Symmetrizer {
  Matrix Y;  // SPD, Y M = M^T Y
  Matrix P;  // orthogonal factor
  Matrix Z;  // diagonal SPD factor, Y = P^T Z^2 P
  Matrix T;  // the transform Z P

  Matrix T_inverse() const;  // P^T Z^{-1}
};

// Builds an SPD symmetrizer for a non-defective drift with real spectrum.
// The linear constraint Y M = M^T Y is solved on the symmetric matrices
// and an SPD point of the solution cone is selected; the left-eigenvector
// Gram matrix seeds the search. Throws DefectiveError when the eigenbasis
// condition number exceeds 1e10 and NotSpdError when the cone contains no
// SPD point (complex spectrum).
Symmetrizer find_symmetrizer(const Matrix& M);

// Residual || Y M - M^T Y || used by tests and validation.
double symmetrizer_residual(const Matrix& Y, const Matrix& M);

struct TransformedGame {
  NearlyIdenticalGame game;  // data in xi coordinates, symmetric drift
  Symmetrizer sym;
  double s = 0.0;
  double r = 0.0;
};

// Requires sigma = s P^T Z^{-1} and R = r Y within tolerance; throws
// StructureMismatchError otherwise. The transformed game has drift
// Z P A P^T Z^{-1} (symmetric), noise s I and weight r I.
TransformedGame transform_game(const NearlyIdenticalGame& g, double s, double r);

// Maps a solution in xi coordinates back to the original ones:
// Lambda_x = T^T Lambda_xi T, rho_x = T^T rho_xi, mu_x = T^{-1} mu_xi,
// Sigma_x = T^T Sigma_xi T, K_x = T^{-1} K_xi T, c_x = T^{-1} c_xi;
// lambda is invariant.
EquilibriumSolution pull_back(const EquilibriumSolution& sol, const Symmetrizer& sym);

}  // namespace lqmfg
