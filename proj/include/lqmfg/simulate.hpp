#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lqmfg/games.hpp"
#include "lqmfg/synthesis.hpp"

namespace lqmfg {

struct SimConfig {
  double dt = 1e-3;
  double T = 200.0;
  double burn_in = 0.2;  // fraction of T discarded before averaging
  int replicas = 32;
  std::uint64_t seed = 1;
  int batches = 16;           // batch means per replica for standard errors
  double blowup_bound = 1e8;  // sup-norm bound before BlowupError
  bool require_stable = true;
  int threads = 0;  // 0: LQMFG_THREADS env var, else hardware concurrency
  bool capture_paths = false;
  int path_stride = 100;  // record every k-th step of replica 0
};

struct PathSample {
  double t = 0.0;
  std::vector<Vector> states;  // one entry per player
};

struct PlayerEstimate {
  Vector mean_hat;
  Matrix cov_hat;
  Vector mean_se;
  Matrix cov_se;  // entrywise, from batch means
  double cost_hat = 0.0;
  double cost_se = 0.0;
  // Ratio of mean squared state norm over the second half of the batches to
  // the first half; near 1 for an ergodic path, large under diffusive growth.
  double variance_trend = 0.0;
  bool ergodic_flag = true;
};

struct ErgodicEstimate {
  std::vector<PlayerEstimate> players;
  std::vector<PathSample> trace;  // non-empty only with capture_paths
};

// P solving M^T P + P M = -I; certifies that M generates a contraction.
Matrix stability_certificate(const Matrix& M);

struct MomentTrajectory {
  std::vector<double> t;
  std::vector<Vector> mean;
  std::vector<Matrix> cov;
  Vector steady_mean;  // M^{-1} c
  Matrix steady_cov;   // solves M V + V M^T + sigma sigma^T = 0
};

// RK4 integration of mdot = M m - c and vdot = M v + v M^T + sigma sigma^T,
// with v(0) = 0 (deterministic start).
MomentTrajectory moment_odes(const Matrix& M, const Vector& c, const Matrix& sigma,
                             const Vector& x0, double T, double dt);

// Joint Euler-Maruyama run of all players under affine feedbacks; each player
// accumulates alpha^T R alpha / 2 plus the state coupling cost along the path.
ErgodicEstimate simulate_n_person(const NPersonGame& g,
                                  const std::vector<AffineFeedback>& feedbacks,
                                  const SimConfig& cfg,
                                  const std::vector<Vector>& x0 = {});

// Single representative player against a frozen population measure.
ErgodicEstimate simulate_mean_field(const MeanFieldGame& g, const AffineFeedback& feedback,
                                    const MeasureMoments& population, const SimConfig& cfg,
                                    const Vector& x0 = Vector());

// Closed-form long-run average of alpha^T R alpha / 2 + state_cost(x) when
// playing the affine feedback in dx = (A x - alpha) dt + sigma dW, computed
// from the stationary Gaussian moments.
double exact_ergodic_cost(const Matrix& A, const Matrix& sigma, const Matrix& R,
                          const Quadratic& state_cost, const AffineFeedback& feedback);

struct Deviation {
  Matrix dK;
  Vector dc;
  std::string label;
};

struct DeviationOutcome {
  std::string label;
  bool skipped = false;  // deviation destabilizes the closed loop
  double cost_hat = 0.0;
  double cost_se = 0.0;
  double lambda = 0.0;  // equilibrium value being tested against
  bool nash_ok = false; // cost_hat >= lambda - 3 * cost_se
};

struct DeviationReport {
  int player = 0;
  std::vector<DeviationOutcome> outcomes;
  std::vector<std::string> warnings;
  bool all_ok = true;  // over non-skipped outcomes
};

// Unilateral deviations: one player's feedback perturbed, the rest pinned at
// the equilibrium; estimated cost must not beat lambda beyond noise.
DeviationReport nash_deviation_test(const NPersonGame& g, const EquilibriumSolution& sol,
                                    int player, const std::vector<Deviation>& deviations,
                                    const SimConfig& cfg);

DeviationReport nash_deviation_test(const MeanFieldGame& g, const EquilibriumSolution& sol,
                                    const std::vector<Deviation>& deviations,
                                    const SimConfig& cfg);

}  // namespace lqmfg
