#pragma once

#include <optional>
#include <vector>

#include "lqmfg/games.hpp"
#include "lqmfg/riccati.hpp"

// Quadratic-Gaussian equilibrium synthesis. Per player the ansatz is
// v(x) = x^T Lambda x / 2 + rho^T x and an invariant Gaussian with
// precision Sigma; existence reduces to one ARE per player, a Sylvester
// compatibility condition and a linear system coupling the means.

namespace lqmfg {

struct QuadraticValue {
  Matrix Lambda;  // symmetric Hessian of v
  Vector rho;
};

struct GaussianMeasure {
  Vector mu;
  Matrix Sigma;  // precision, SPD

  double gamma() const;  // (2 pi)^{-d/2} sqrt(det Sigma), unit-mass normalizer
  Matrix covariance() const;
  double density(const Vector& x) const;
  MeasureMoments moments() const;
};

struct AffineFeedback {
  Matrix K;
  Vector c;

  Vector eval(const Vector& x) const { return K * x + c; }
};

struct PlayerSolution {
  QuadraticValue value;
  GaussianMeasure measure;
  double lambda = 0.0;       // ergodic cost
  AffineFeedback feedback;   // optimal control alpha(x) = K x + c
};

// Present when the mean system is singular but consistent: every
// mu_particular + null_basis * t is an equilibrium mean vector.
struct SolutionFamily {
  Vector mu_particular;  // minimum-norm stacked mean
  Matrix null_basis;     // orthonormal columns
  int dimension() const { return static_cast<int>(null_basis.cols()); }
};

struct EquilibriumSolution {
  std::vector<PlayerSolution> players;
  std::optional<SolutionFamily> family;
};

enum class ConditionKind { NPerson, NearlyIdentical, MeanField };

struct ConditionReport {
  ConditionKind which = ConditionKind::NPerson;
  bool are_solved = false;
  std::vector<double> sylvester_residuals;  // per player
  bool sylvester_ok = false;
  int rank_B = 0;
  int rank_BP = 0;
  bool rank_consistent = false;
  bool B_invertible = false;
  int null_space_dim = 0;
  bool verdict_exists = false;
  bool verdict_unique = false;
};

// Coupling matrix and right-hand side of the mean system B mu = P:
// B_{ab} = -Q^a_{ab} - delta_{ab} A_a^T R_a A_a / 2 and
// P_a = -sum_j Q^a_{aj} Xbar_a^j.
std::pair<Matrix, Vector> assemble_B_P(const NPersonGame& g);
// Same, but asserts the ARE identity Sigma_a nu R nu Sigma_a / 2 =
// Q^a_{aa} + A^T R A / 2 that justifies the diagonal rewrite.
std::pair<Matrix, Vector> assemble_B_P(const NPersonGame& g, const std::vector<Matrix>& Sigmas);

// Reduced mean system for exchangeable games: B' = Q + A^T R A/2 +
// (N-1) B/2 and right-hand side Q H + (N-1) (B/2) Delta.
Matrix assemble_Bprime(const NearlyIdenticalGame& g);
Vector assemble_Pprime_rhs(const NearlyIdenticalGame& g);

// Mean-field analogue: B_inf = Qhat + A^T R A/2 + Bhat/2 and right-hand
// side Qhat H + (Bhat/2) Delta.
Matrix assemble_Binf(const MeanFieldGame& g);
Vector assemble_Pinf_rhs(const MeanFieldGame& g);

// Existence/uniqueness verdicts: exists iff every Sylvester residual is
// below 1e-8 (1 + ||R A||) and the mean system is rank consistent;
// unique iff the coupling matrix is invertible. ARE errors propagate.
ConditionReport check_conditions(const NPersonGame& g);
ConditionReport check_conditions(const NearlyIdenticalGame& g);
ConditionReport check_conditions(const MeanFieldGame& g);

// Full synthesis. Throws ConditionsFailError naming the failing clause;
// a singular but consistent mean system yields a SolutionFamily (with the
// minimum-norm member materialized) instead of an error.
EquilibriumSolution solve_n_person(const NPersonGame& g);
EquilibriumSolution solve_nearly_identical(const NearlyIdenticalGame& g);
EquilibriumSolution solve_mean_field(const MeanFieldGame& g);

// Re-synthesizes the family member with stacked mean
// mu_particular + null_basis * coeffs; all mean-dependent quantities
// (rho, c, lambda) are recomputed. Throws when no family is present.
EquilibriumSolution family_member(const NPersonGame& g, const EquilibriumSolution& sol, const Vector& coeffs);
EquilibriumSolution family_member(const NearlyIdenticalGame& g, const EquilibriumSolution& sol, const Vector& coeffs);
EquilibriumSolution family_member(const MeanFieldGame& g, const EquilibriumSolution& sol, const Vector& coeffs);

// K = R^{-1} Lambda, c = R^{-1} rho. When the drift A is supplied the
// closed loop A - K must be strictly stable; throws UnstableError.
AffineFeedback feedback_from_value(const QuadraticValue& v, const Matrix& R,
                                   const std::optional<Matrix>& A = std::nullopt);

struct ResidualReport {
  double hjb_max = 0.0;
  double kfp_max = 0.0;
  double mass_error = 0.0;
};

// Evaluates both stationary PDEs on quasi-random points in a box of five
// standard deviations around each player's mean; mass_error checks the
// Gaussian normalizer identity.
ResidualReport hjb_kfp_residual(const NPersonGame& g, const EquilibriumSolution& sol, int points = 1000);
ResidualReport hjb_kfp_residual(const NearlyIdenticalGame& g, const EquilibriumSolution& sol, int points = 1000);
ResidualReport hjb_kfp_residual(const MeanFieldGame& g, const EquilibriumSolution& sol, int points = 1000);

// Deterministic low-discrepancy points filling [-1, 1]^d.
std::vector<Vector> quasi_random_box(int d, int count);

}  // namespace lqmfg
