#pragma once

#include <limits>
#include <string>
#include <vector>

#include "lqmfg/games.hpp"
#include "lqmfg/synthesis.hpp"

namespace lqmfg {

struct LimitEntry {
  int N = 0;
  bool solved = false;
  std::string failure;  // why this N failed (conditions or solver), if it did
  Matrix Sigma;
  Vector mu;
  std::vector<double> lambdas;
  double dist_sigma = std::numeric_limits<double>::quiet_NaN();
  double dist_mu = std::numeric_limits<double>::quiet_NaN();
  double dist_lambda = std::numeric_limits<double>::quiet_NaN();   // max over players
  double dist_Lambda = std::numeric_limits<double>::quiet_NaN();   // value-function Hessian
  double dist_density = std::numeric_limits<double>::quiet_NaN();  // sup-norm Gaussian gap
};

struct RateFit {
  double slope = 0.0;  // least-squares slope of log distance vs log N
  double intercept = 0.0;
  int points = 0;
};

struct LimitStudy {
  ScalingRule rule;
  std::vector<LimitEntry> entries;
  EquilibriumSolution limit;  // mean-field solution being approached
  bool converged_sigma = false;
  bool converged_mu = false;
  bool converged_lambda = false;
  bool converged_Lambda = false;
  bool converged_density = false;
  RateFit rate_sigma, rate_mu, rate_lambda, rate_Lambda, rate_density;
  bool coefficients_converged() const {
    return converged_sigma && converged_mu && converged_lambda && converged_Lambda;
  }
};

// Largest pointwise gap between two Gaussian densities, probed at both means
// and a low-discrepancy cloud covering both supports.
double gaussian_sup_gap(const GaussianMeasure& a, const GaussianMeasure& b, int probes = 512);

// Solves the scaled N-player game for each N and measures the distance of
// (Sigma_N, mu_N, lambda_N^i, Lambda_N, m_N) to the mean-field solution.
// Per-N condition failures are recorded in the entry, never thrown.
LimitStudy run_limit_study(const MeanFieldGame& limit_game, const ScalingRule& rule,
                           const std::vector<int>& N_list);

}  // namespace lqmfg
