#include "lqmfg/converge.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace lqmfg {

namespace {

bool finite(double x) { return std::isfinite(x); }

// Convergence heuristic: the last distance is already tiny, or the column
// decreases monotonically over the final three solved entries with a clear
// decay factor; a slide toward a positive plateau has ratios near 1 and is
// not accepted.
bool column_converged(const std::vector<double>& dist) {
  if (dist.empty()) return false;
  if (dist.back() < 1e-6) return true;
  if (dist.size() < 3) return false;
  const size_t n = dist.size();
  const bool monotone = dist[n - 1] < dist[n - 2] && dist[n - 2] < dist[n - 3];
  return monotone && dist[n - 1] < 0.9 * dist[n - 2];
}

RateFit fit_rate(const std::vector<int>& Ns, const std::vector<double>& dist) {
  RateFit fit;
  std::vector<double> lx, ly;
  for (size_t k = 0; k < dist.size(); ++k) {
    if (finite(dist[k]) && dist[k] > 0.0) {
      lx.push_back(std::log(static_cast<double>(Ns[k])));
      ly.push_back(std::log(dist[k]));
    }
  }
  fit.points = static_cast<int>(lx.size());
  if (fit.points < 2) return fit;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int k = 0; k < fit.points; ++k) {
    sx += lx[k];
    sy += ly[k];
    sxx += lx[k] * lx[k];
    sxy += lx[k] * ly[k];
  }
  const double n = static_cast<double>(fit.points);
  const double denom = n * sxx - sx * sx;
  if (denom != 0.0) {
    fit.slope = (n * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / n;
  }
  return fit;
}

int limit_threads(int jobs) {
  int n = 0;
  if (const char* env = std::getenv("LQMFG_THREADS")) n = std::atoi(env);
  if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
  if (n <= 0) n = 1;
  return std::min(n, jobs);
}

}  // namespace

double gaussian_sup_gap(const GaussianMeasure& a, const GaussianMeasure& b, int probes) {
  const Eigen::Index d = a.mu.size();
  if (b.mu.size() != d) throw DimensionError("gaussian_sup_gap: dimension mismatch");
  const Matrix cov_a = a.covariance();
  const Matrix cov_b = b.covariance();
  const double radius = (a.mu - b.mu).norm() +
                        5.0 * std::sqrt(std::max(spectral_norm(cov_a), spectral_norm(cov_b)));
  const Vector center = 0.5 * (a.mu + b.mu);

  double sup = std::max(std::abs(a.density(a.mu) - b.density(a.mu)),
                        std::abs(a.density(b.mu) - b.density(b.mu)));
  for (const Vector& u : quasi_random_box(static_cast<int>(d), probes)) {
    const Vector x = center + radius * u;
    sup = std::max(sup, std::abs(a.density(x) - b.density(x)));
  }
  return sup;
}

LimitStudy run_limit_study(const MeanFieldGame& limit_game, const ScalingRule& rule,
                           const std::vector<int>& N_list) {
  for (size_t k = 1; k < N_list.size(); ++k) {
    if (N_list[k] <= N_list[k - 1]) {
      throw DimensionError("run_limit_study: N_list must be strictly increasing");
    }
  }
  LimitStudy study;
  study.rule = rule;
  study.limit = solve_mean_field(limit_game);  // (E-inf)/(U-inf) failures propagate
  const PlayerSolution& lim = study.limit.players.front();

  study.entries.resize(N_list.size());
  const int n_threads = limit_threads(static_cast<int>(N_list.size()));
  auto worker = [&](int tid) {
    for (size_t k = static_cast<size_t>(tid); k < N_list.size(); k += n_threads) {
      LimitEntry& e = study.entries[k];
      e.N = N_list[k];
      try {
        const NearlyIdenticalGame g = scaled_game(limit_game, rule, e.N);
        const EquilibriumSolution sol = solve_nearly_identical(g);
        const PlayerSolution& p0 = sol.players.front();
        e.solved = true;
        e.Sigma = p0.measure.Sigma;
        e.mu = p0.measure.mu;
        for (const auto& ps : sol.players) e.lambdas.push_back(ps.lambda);
        e.dist_sigma = operator_norm(p0.measure.Sigma - lim.measure.Sigma);
        e.dist_mu = (p0.measure.mu - lim.measure.mu).norm();
        e.dist_lambda = 0.0;
        for (double l : e.lambdas) e.dist_lambda = std::max(e.dist_lambda, std::abs(l - lim.lambda));
        e.dist_Lambda = operator_norm(p0.value.Lambda - lim.value.Lambda);
        e.dist_density = gaussian_sup_gap(p0.measure, lim.measure);
      } catch (const Error& err) {
        e.solved = false;
        e.failure = err.what();
      }
    }
  };
  if (n_threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker, t);
    for (auto& th : pool) th.join();
  }

  std::vector<int> Ns;
  std::vector<double> ds, dm, dl, dL, dd;
  for (const auto& e : study.entries) {
    if (!e.solved) continue;
    Ns.push_back(e.N);
    ds.push_back(e.dist_sigma);
    dm.push_back(e.dist_mu);
    dl.push_back(e.dist_lambda);
    dL.push_back(e.dist_Lambda);
    dd.push_back(e.dist_density);
  }
  study.converged_sigma = column_converged(ds);
  study.converged_mu = column_converged(dm);
  study.converged_lambda = column_converged(dl);
  study.converged_Lambda = column_converged(dL);
  study.converged_density = column_converged(dd);
  study.rate_sigma = fit_rate(Ns, ds);
  study.rate_mu = fit_rate(Ns, dm);
  study.rate_lambda = fit_rate(Ns, dl);
  study.rate_Lambda = fit_rate(Ns, dL);
  study.rate_density = fit_rate(Ns, dd);
  return study;
}

}  // namespace lqmfg
