#pragma once

#include <string>
#include <vector>

#include "lqmfg/matlin.hpp"

// Game containers and cost operators. An N-person game couples players only
// through the quadratic state cost F^i(X) = (X - Xbar_i)^T Q^i (X - Xbar_i)
// on the stacked state X in R^{Nd}; dynamics are decoupled and linear.

namespace lqmfg {

struct NPersonGame {
  int N = 0;
  int d = 0;
  std::vector<Matrix> A;      // per player, d x d drift
  std::vector<Matrix> sigma;  // per player, d x d invertible noise
  std::vector<Matrix> R;      // per player, d x d SPD control weight
  std::vector<Matrix> Q;      // per player, Nd x Nd symmetric block matrix
  std::vector<Vector> Xbar;   // per player, Nd stacked reference

  Matrix nu(int i) const;            // sigma_i sigma_i^T / 2
  Matrix q_block(int i, int j, int k) const;
  Vector xbar_block(int i, int j) const;
};

struct HReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

// Standing assumptions: sigma_i invertible, R_i SPD, Q^i symmetric and
// Q^i_{ii} SPD. In relaxed mode positivity is asked of
// Q^i_{ii} + A_i^T R_i A_i / 2 instead of Q^i_{ii} alone.
HReport validate_H(const NPersonGame& g, bool relaxed = false);

// Per-player data extracted when the costs treat the opponents
// exchangeably: Q^i_{ij} = B_i/2, Q^i_{jj} = C_i, Q^i_{jk} = D_i and
// Xbar_i^j = Delta_i for all j != k both different from i.
struct SymmetryDecomposition {
  bool ok = false;
  std::string failure;           // names the first offending block pair
  std::vector<Matrix> B, C, D;   // per player
  std::vector<Vector> Delta;     // per player
};

SymmetryDecomposition check_symmetry_S(const NPersonGame& g);

// Exchangeable-opponent game with shared dynamics and own-cost data;
// heterogeneity is confined to the opponent weights C_i, D_i.
struct NearlyIdenticalGame {
  int N = 0;
  int d = 0;
  Matrix A, sigma, R;
  Matrix Q, B;            // own-state weight and cross weight (symmetric)
  std::vector<Matrix> C;  // per player, symmetric
  std::vector<Matrix> D;  // per player, symmetric
  Vector H, Delta;        // own and opponent reference points

  Matrix nu() const;  // sigma sigma^T / 2
};

HReport validate_nearly_identical(const NearlyIdenticalGame& g);

// Throws NotNearlyIdenticalError when the shared fields differ across
// players; C_i and D_i are allowed to vary.
NearlyIdenticalGame reduce_to_nearly_identical(const NPersonGame& g);

// F^i = 1/(N-1) sum_{j != i} (X^i - X^j)^T P_N (X^i - X^j), which expands
// to Q = P_N, B = -2 P_N/(N-1), C_i = P_N/(N-1), D_i = 0, H = Delta = 0.
NearlyIdenticalGame build_consensus_game(int N, const Matrix& P_N, const Matrix& A,
                                         const Matrix& sigma, const Matrix& R);

// Expands the exchangeable blocks back into a full N-person game.
NPersonGame to_n_person(const NearlyIdenticalGame& g);

// One representative player against the distribution of the others.
struct MeanFieldGame {
  int d = 0;
  Matrix A, nu, R;               // nu SPD, R SPD
  Matrix Qhat, Bhat, Chat, Dhat; // Qhat SPD, rest symmetric
  Vector H, Delta;

  Matrix sigma() const;  // SPD root of 2 nu
};

HReport validate_mean_field(const MeanFieldGame& g);

// First and raw second moment of a probability measure on R^d; all cost
// operators below only look at these.
struct MeasureMoments {
  Vector mean;
  Matrix second_moment;  // E[xi xi^T]

  Matrix covariance() const { return second_moment - mean * mean.transpose(); }
  static MeasureMoments from_gaussian(const Vector& mu, const Matrix& precision);
  static MeasureMoments point_mass(const Vector& x);
  static MeasureMoments from_mean_cov(const Vector& mu, const Matrix& cov);
};

// Scalar quadratic x^T P x + q^T x + c.
struct Quadratic {
  Matrix P;
  Vector q;
  double c = 0.0;

  double operator()(const Vector& x) const { return x.dot(P * x) + q.dot(x) + c; }
  // Expectation under a measure with the given moments.
  double expectation(const MeasureMoments& m) const;
};

// f^i as a quadratic in player i's own state: the state cost integrated
// against the other players' measures. The Q^i_{jj} trace terms use each
// opponent's own covariance.
Quadratic expected_state_cost(const NPersonGame& g, int i, const std::vector<MeasureMoments>& measures);

// Mean-field cost V^hat[m](x): own quadratic, two cross terms against the
// mean of m, an integrated Chat term and a Dhat term on the centered mean.
Quadratic vhat_quadratic(const MeanFieldGame& g, const MeasureMoments& m);
double eval_Vhat(const MeanFieldGame& g, const MeasureMoments& m, const Vector& x);

// Prelimit operator V^i_N[m](x) with its (N-1) weights; plugging in the
// empirical measure of the opponents recovers F^i exactly.
Quadratic viN_quadratic(const NearlyIdenticalGame& g, int player, const MeasureMoments& m);
double eval_ViN(const NearlyIdenticalGame& g, int player, const MeasureMoments& m, const Vector& x);

// Integral of V^hat[m] - V^hat[n] against m - n; collapses to the
// quadratic form of Bhat on the mean difference.
double monotonicity_gap(const MeanFieldGame& g, const MeasureMoments& m, const MeasureMoments& n);

// Families of N-person data converging to a mean-field game. The default
// schedule keeps Q^N = Qhat and scales B, C, D by 1/(N-1), 1/(N-1) and
// 1/(N-1)^2. hetero_C adds a per-player wobble to C_i vanishing in N.
struct ScalingRule {
  enum class Kind { Default, QPerturbed, ConsensusPerturbed, ConstantB };
  Kind kind = Kind::Default;
  double hetero_C = 0.0;
};

NearlyIdenticalGame scaled_game(const MeanFieldGame& g, const ScalingRule& rule, int N);
std::vector<NearlyIdenticalGame> scaled_family(const MeanFieldGame& g, const ScalingRule& rule,
                                               const std::vector<int>& Ns);

}  // namespace lqmfg
