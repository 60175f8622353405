#include "lqmfg/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <functional>
#include <thread>

namespace lqmfg {

namespace {

// Counter-based Gaussian stream: every draw is a pure function of
// (seed, replica, player, index), so replica or thread count changes never
// reshuffle another stream.
std::uint64_t sm_mix(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4B90BULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double unit_open(std::uint64_t x) {
  return (static_cast<double>(x >> 11) + 0.5) * 0x1p-53;  // in (0,1)
}

std::uint64_t stream_key(std::uint64_t seed, std::uint64_t replica, std::uint64_t player) {
  return sm_mix(sm_mix(sm_mix(seed) ^ replica) ^ player);
}

double normal_at(std::uint64_t key, std::uint64_t index) {
  const double u1 = unit_open(sm_mix(key ^ (2 * index)));
  const double u2 = unit_open(sm_mix(key ^ (2 * index + 1)));
  constexpr double two_pi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

struct PlayerDyn {
  Matrix A, sigma, R, K;
  Vector c;
  Matrix M;  // A - K, the closed-loop generator
};

// Fills per-player state-coupling cost at the current joint state.
using StateCostFn = std::function<void(const std::vector<Vector>&, std::vector<double>&)>;

struct ReplicaAccum {
  std::vector<Vector> sum_x;
  std::vector<Matrix> sum_xx;
  std::vector<std::vector<double>> batch_cost;    // [player][batch]
  std::vector<std::vector<Vector>> batch_x;       // [player][batch] mean state
  std::vector<std::vector<Matrix>> batch_xx;      // [player][batch] mean x x^T
  std::vector<std::vector<double>> batch_sqnorm;  // [player][batch] mean |x|^2
  long count = 0;
  std::vector<PathSample> trace;
};

void check_config(const SimConfig& cfg) {
  if (!(cfg.dt > 0.0) || !(cfg.dt < cfg.T)) throw ParseError("SimConfig: need 0 < dt < T");
  if (!(cfg.burn_in >= 0.0) || !(cfg.burn_in < 1.0))
    throw ParseError("SimConfig: need 0 <= burn_in < 1");
  if (cfg.replicas < 1) throw ParseError("SimConfig: need at least one replica");
  if (cfg.batches < 1) throw ParseError("SimConfig: need at least one batch");
}

int resolve_threads(const SimConfig& cfg, int replicas) {
  int n = cfg.threads;
  if (n <= 0) {
    if (const char* env = std::getenv("LQMFG_THREADS")) n = std::atoi(env);
  }
  if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
  if (n <= 0) n = 1;
  return std::min(n, replicas);
}

void run_replica(int replica, const std::vector<PlayerDyn>& dyn, const StateCostFn& state_cost,
                 const SimConfig& cfg, const std::vector<Vector>& x0, long burn_steps,
                 long batch_len, ReplicaAccum& acc) {
  const int n_players = static_cast<int>(dyn.size());
  const int batches = cfg.batches;
  const long total_steps = burn_steps + batch_len * batches;
  const double sqrt_dt = std::sqrt(cfg.dt);

  std::vector<Vector> x = x0;
  std::vector<std::uint64_t> keys(n_players);
  for (int i = 0; i < n_players; ++i) {
    keys[i] = stream_key(cfg.seed, static_cast<std::uint64_t>(replica),
                         static_cast<std::uint64_t>(i));
  }

  acc.sum_x.assign(n_players, Vector());
  acc.sum_xx.assign(n_players, Matrix());
  for (int i = 0; i < n_players; ++i) {
    acc.sum_x[i] = Vector::Zero(x[i].size());
    acc.sum_xx[i] = Matrix::Zero(x[i].size(), x[i].size());
  }
  acc.batch_cost.assign(n_players, std::vector<double>(batches, 0.0));
  acc.batch_x.assign(n_players, std::vector<Vector>(batches));
  acc.batch_xx.assign(n_players, std::vector<Matrix>(batches));
  acc.batch_sqnorm.assign(n_players, std::vector<double>(batches, 0.0));
  for (int i = 0; i < n_players; ++i) {
    for (int b = 0; b < batches; ++b) {
      acc.batch_x[i][b] = Vector::Zero(x[i].size());
      acc.batch_xx[i][b] = Matrix::Zero(x[i].size(), x[i].size());
    }
  }

  const bool tracing = cfg.capture_paths && replica == 0;
  std::vector<double> fcost(n_players, 0.0);
  std::vector<Vector> alpha(n_players);

  for (long step = 0; step < total_steps; ++step) {
    for (int i = 0; i < n_players; ++i) {
      if (x[i].cwiseAbs().maxCoeff() > cfg.blowup_bound) {
        throw BlowupError("simulation state exceeded the blow-up bound in replica " +
                          std::to_string(replica));
      }
    }
    if (tracing && step % cfg.path_stride == 0) {
      acc.trace.push_back({static_cast<double>(step) * cfg.dt, x});
    }
    for (int i = 0; i < n_players; ++i) alpha[i] = dyn[i].K * x[i] + dyn[i].c;

    if (step >= burn_steps) {
      const long post = step - burn_steps;
      const int b = static_cast<int>(post / batch_len);
      state_cost(x, fcost);
      for (int i = 0; i < n_players; ++i) {
        const double running = 0.5 * alpha[i].dot(dyn[i].R * alpha[i]) + fcost[i];
        acc.batch_cost[i][b] += running;
        acc.batch_x[i][b] += x[i];
        acc.batch_xx[i][b] += x[i] * x[i].transpose();
        acc.batch_sqnorm[i][b] += x[i].squaredNorm();
        acc.sum_x[i] += x[i];
        acc.sum_xx[i] += x[i] * x[i].transpose();
      }
      ++acc.count;
    }

    for (int i = 0; i < n_players; ++i) {
      const Eigen::Index d = x[i].size();
      Vector noise(d);
      const std::uint64_t base = static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(d);
      for (Eigen::Index k = 0; k < d; ++k) {
        noise(k) = normal_at(keys[i], base + static_cast<std::uint64_t>(k));
      }
      x[i] += cfg.dt * (dyn[i].A * x[i] - alpha[i]) + sqrt_dt * (dyn[i].sigma * noise);
    }
  }

  const double inv_len = 1.0 / static_cast<double>(batch_len);
  for (int i = 0; i < n_players; ++i) {
    for (int b = 0; b < batches; ++b) {
      acc.batch_cost[i][b] *= inv_len;
      acc.batch_x[i][b] *= inv_len;
      acc.batch_xx[i][b] *= inv_len;
      acc.batch_sqnorm[i][b] *= inv_len;
    }
  }
}

ErgodicEstimate reduce_replicas(const std::vector<ReplicaAccum>& accs, int n_players,
                                const SimConfig& cfg) {
  ErgodicEstimate est;
  const int batches = cfg.batches;
  const int replicas = cfg.replicas;
  const long n_means = static_cast<long>(batches) * replicas;

  for (int i = 0; i < n_players; ++i) {
    PlayerEstimate pe;
    const Eigen::Index d = accs[0].sum_x[i].size();

    long count = 0;
    Vector sx = Vector::Zero(d);
    Matrix sxx = Matrix::Zero(d, d);
    for (const auto& a : accs) {
      count += a.count;
      sx += a.sum_x[i];
      sxx += a.sum_xx[i];
    }
    pe.mean_hat = sx / static_cast<double>(count);
    pe.cov_hat = symmetrized(sxx / static_cast<double>(count) -
                             pe.mean_hat * pe.mean_hat.transpose());

    double cost_sum = 0.0, cost_sq = 0.0;
    Vector mean_sum = Vector::Zero(d), mean_sq = Vector::Zero(d);
    Matrix cov_sum = Matrix::Zero(d, d), cov_sq = Matrix::Zero(d, d);
    const Matrix mm = pe.mean_hat * pe.mean_hat.transpose();
    for (const auto& a : accs) {
      for (int b = 0; b < batches; ++b) {
        const double cb = a.batch_cost[i][b];
        cost_sum += cb;
        cost_sq += cb * cb;
        mean_sum += a.batch_x[i][b];
        mean_sq += a.batch_x[i][b].cwiseAbs2();
        const Matrix cov_b = a.batch_xx[i][b] - a.batch_x[i][b] * pe.mean_hat.transpose() -
                             pe.mean_hat * a.batch_x[i][b].transpose() + mm;
        cov_sum += cov_b;
        cov_sq += cov_b.cwiseAbs2();
      }
    }
    pe.cost_hat = cost_sum / static_cast<double>(n_means);
    pe.mean_se = Vector::Zero(d);
    pe.cov_se = Matrix::Zero(d, d);
    if (n_means > 1) {
      const double var =
          std::max(0.0, (cost_sq - cost_sum * cost_sum / n_means) / (n_means - 1));
      pe.cost_se = std::sqrt(var / static_cast<double>(n_means));
      const Vector mvar = ((mean_sq - mean_sum.cwiseAbs2() / n_means) / (n_means - 1))
                              .cwiseMax(0.0);
      pe.mean_se = (mvar / static_cast<double>(n_means)).cwiseSqrt();
      const Matrix cvar = ((cov_sq - cov_sum.cwiseAbs2() / n_means) / (n_means - 1))
                              .cwiseMax(0.0);
      pe.cov_se = (cvar / static_cast<double>(n_means)).cwiseSqrt();
    }

    // Diffusive-growth diagnostic: pooled mean |x|^2 per batch index, second
    // half of the run against the first.
    double first = 0.0, second = 0.0;
    for (const auto& a : accs) {
      for (int b = 0; b < batches; ++b) {
        (b < batches / 2 ? first : second) += a.batch_sqnorm[i][b];
      }
    }
    pe.variance_trend = first > 0.0 ? second / first : 1.0;
    pe.ergodic_flag = pe.variance_trend < 1.5;
    est.players.push_back(std::move(pe));
  }
  est.trace = accs[0].trace;
  return est;
}

ErgodicEstimate run_sim(const std::vector<PlayerDyn>& dyn, const StateCostFn& state_cost,
                        const SimConfig& cfg, const std::vector<Vector>& x0) {
  check_config(cfg);
  const int n_players = static_cast<int>(dyn.size());
  if (cfg.require_stable) {
    for (int i = 0; i < n_players; ++i) {
      if (!is_stable(dyn[i].M)) {
        throw UnstableError("closed loop for player " + std::to_string(i) +
                            " is not stable; pass require_stable=false to force");
      }
    }
  }
  const long raw_steps = static_cast<long>(std::llround(cfg.T / cfg.dt));
  const long burn_steps = static_cast<long>(std::llround(cfg.burn_in * raw_steps));
  const long batch_len = (raw_steps - burn_steps) / cfg.batches;
  if (batch_len < 1) throw ParseError("SimConfig: horizon too short for the batch count");

  std::vector<ReplicaAccum> accs(cfg.replicas);
  std::vector<std::exception_ptr> errors(cfg.replicas);
  const int n_threads = resolve_threads(cfg, cfg.replicas);

  auto worker = [&](int tid) {
    for (int r = tid; r < cfg.replicas; r += n_threads) {
      try {
        run_replica(r, dyn, state_cost, cfg, x0, burn_steps, batch_len, accs[r]);
      } catch (...) {
        errors[r] = std::current_exception();
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
  for (int r = 0; r < cfg.replicas; ++r) {
    if (errors[r]) std::rethrow_exception(errors[r]);
  }
  return reduce_replicas(accs, n_players, cfg);
}

}  // namespace

Matrix stability_certificate(const Matrix& M) {
  if (!is_stable(M)) {
    throw UnstableError("stability_certificate: M has an eigenvalue with nonnegative real part");
  }
  // M^T P + P M = -I is the Lyapunov equation for M^T.
  return solve_lyapunov(M.transpose(), Matrix::Identity(M.rows(), M.cols()));
}

MomentTrajectory moment_odes(const Matrix& M, const Vector& c, const Matrix& sigma,
                             const Vector& x0, double T, double dt) {
  if (!(dt > 0.0) || !(T > 0.0)) throw ParseError("moment_odes: need positive T and dt");
  const Eigen::Index d = M.rows();
  if (M.cols() != d || c.size() != d || sigma.rows() != d || x0.size() != d) {
    throw DimensionError("moment_odes: inconsistent dimensions");
  }
  const Matrix S = sigma * sigma.transpose();
  auto fm = [&](const Vector& m) { return Vector(M * m - c); };
  auto fv = [&](const Matrix& v) { return Matrix(M * v + v * M.transpose() + S); };

  MomentTrajectory out;
  const long steps = static_cast<long>(std::llround(T / dt));
  Vector m = x0;
  Matrix v = Matrix::Zero(d, d);
  out.t.push_back(0.0);
  out.mean.push_back(m);
  out.cov.push_back(v);
  for (long k = 0; k < steps; ++k) {
    const Vector k1 = fm(m);
    const Matrix l1 = fv(v);
    const Vector k2 = fm(m + 0.5 * dt * k1);
    const Matrix l2 = fv(v + 0.5 * dt * l1);
    const Vector k3 = fm(m + 0.5 * dt * k2);
    const Matrix l3 = fv(v + 0.5 * dt * l2);
    const Vector k4 = fm(m + dt * k3);
    const Matrix l4 = fv(v + dt * l3);
    m += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    v += dt / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
    out.t.push_back(static_cast<double>(k + 1) * dt);
    out.mean.push_back(m);
    out.cov.push_back(symmetrized(v));
  }
  if (is_stable(M)) {
    out.steady_mean = M.partialPivLu().solve(c);
    out.steady_cov = solve_lyapunov(M, S);
  }
  return out;
}

ErgodicEstimate simulate_n_person(const NPersonGame& g,
                                  const std::vector<AffineFeedback>& feedbacks,
                                  const SimConfig& cfg, const std::vector<Vector>& x0) {
  if (static_cast<int>(feedbacks.size()) != g.N) {
    throw DimensionError("simulate_n_person: one feedback per player required");
  }
  std::vector<PlayerDyn> dyn(g.N);
  for (int i = 0; i < g.N; ++i) {
    dyn[i] = {g.A[i], g.sigma[i], g.R[i], feedbacks[i].K, feedbacks[i].c,
              g.A[i] - feedbacks[i].K};
  }
  std::vector<Vector> start = x0;
  if (start.empty()) start.assign(g.N, Vector::Zero(g.d));
  if (static_cast<int>(start.size()) != g.N) {
    throw DimensionError("simulate_n_person: initial condition must list every player");
  }

  Vector joint(g.N * g.d), shifted(g.N * g.d);
  auto cost = [&, g](const std::vector<Vector>& x, std::vector<double>& out) mutable {
    for (int j = 0; j < g.N; ++j) joint.segment(j * g.d, g.d) = x[j];
    for (int i = 0; i < g.N; ++i) {
      shifted = joint - g.Xbar[i];
      out[i] = shifted.dot(g.Q[i] * shifted);
    }
  };
  return run_sim(dyn, cost, cfg, start);
}

ErgodicEstimate simulate_mean_field(const MeanFieldGame& g, const AffineFeedback& feedback,
                                    const MeasureMoments& population, const SimConfig& cfg,
                                    const Vector& x0) {
  std::vector<PlayerDyn> dyn(1);
  dyn[0] = {g.A, g.sigma(), g.R, feedback.K, feedback.c, g.A - feedback.K};
  const Quadratic frozen = vhat_quadratic(g, population);
  auto cost = [frozen](const std::vector<Vector>& x, std::vector<double>& out) {
    out[0] = frozen(x[0]);
  };
  std::vector<Vector> start(1, x0.size() ? x0 : Vector::Zero(g.d));
  return run_sim(dyn, cost, cfg, start);
}

double exact_ergodic_cost(const Matrix& A, const Matrix& sigma, const Matrix& R,
                          const Quadratic& state_cost, const AffineFeedback& feedback) {
  const Matrix M = A - feedback.K;
  if (!is_stable(M)) {
    throw UnstableError("exact_ergodic_cost: closed loop is not stable");
  }
  const Vector m = M.partialPivLu().solve(feedback.c);
  const Matrix V = solve_lyapunov(M, sigma * sigma.transpose());
  // alpha = K x + c expands to a quadratic in x; take stationary expectations.
  const Matrix S = V + m * m.transpose();
  const double control = 0.5 * (feedback.K.transpose() * R * feedback.K * S).trace() +
                         feedback.c.dot(R * feedback.K * m) + 0.5 * feedback.c.dot(R * feedback.c);
  return control + state_cost.expectation(MeasureMoments::from_mean_cov(m, V));
}

namespace {

DeviationOutcome run_deviation(const Deviation& dev, const Matrix& A, const Matrix& K0,
                               const Vector& c0, double lambda,
                               const std::function<ErgodicEstimate(const AffineFeedback&)>& sim,
                               std::vector<std::string>& warnings, int player) {
  DeviationOutcome out;
  out.label = dev.label;
  out.lambda = lambda;
  AffineFeedback fb;
  fb.K = dev.dK.size() ? Matrix(K0 + dev.dK) : K0;
  fb.c = dev.dc.size() ? Vector(c0 + dev.dc) : c0;
  if (!is_stable(A - fb.K)) {
    out.skipped = true;
    warnings.push_back("deviation '" + dev.label + "' destabilizes player " +
                       std::to_string(player) + "; skipped");
    return out;
  }
  const ErgodicEstimate est = sim(fb);
  out.cost_hat = est.players[static_cast<size_t>(player)].cost_hat;
  out.cost_se = est.players[static_cast<size_t>(player)].cost_se;
  out.nash_ok = out.cost_hat >= lambda - 3.0 * out.cost_se;
  return out;
}

}  // namespace

DeviationReport nash_deviation_test(const NPersonGame& g, const EquilibriumSolution& sol,
                                    int player, const std::vector<Deviation>& deviations,
                                    const SimConfig& cfg) {
  if (player < 0 || player >= g.N) throw DimensionError("nash_deviation_test: bad player index");
  if (static_cast<int>(sol.players.size()) != g.N) {
    throw DimensionError("nash_deviation_test: solution does not match the game");
  }
  std::vector<AffineFeedback> base;
  for (const auto& ps : sol.players) base.push_back(ps.feedback);

  DeviationReport rep;
  rep.player = player;
  auto sim = [&](const AffineFeedback& fb) {
    std::vector<AffineFeedback> fbs = base;
    fbs[static_cast<size_t>(player)] = fb;
    return simulate_n_person(g, fbs, cfg);
  };
  for (const auto& dev : deviations) {
    rep.outcomes.push_back(run_deviation(dev, g.A[player], base[static_cast<size_t>(player)].K,
                                         base[static_cast<size_t>(player)].c,
                                         sol.players[static_cast<size_t>(player)].lambda, sim,
                                         rep.warnings, player));
    if (!rep.outcomes.back().skipped && !rep.outcomes.back().nash_ok) rep.all_ok = false;
  }
  return rep;
}

DeviationReport nash_deviation_test(const MeanFieldGame& g, const EquilibriumSolution& sol,
                                    const std::vector<Deviation>& deviations,
                                    const SimConfig& cfg) {
  if (sol.players.empty()) throw DimensionError("nash_deviation_test: empty solution");
  const PlayerSolution& ps = sol.players.front();
  const MeasureMoments population = ps.measure.moments();

  DeviationReport rep;
  rep.player = 0;
  auto sim = [&](const AffineFeedback& fb) {
    return simulate_mean_field(g, fb, population, cfg);
  };
  for (const auto& dev : deviations) {
    rep.outcomes.push_back(
        run_deviation(dev, g.A, ps.feedback.K, ps.feedback.c, ps.lambda, sim, rep.warnings, 0));
    if (!rep.outcomes.back().skipped && !rep.outcomes.back().nash_ok) rep.all_ok = false;
  }
  return rep;
}

}  // namespace lqmfg
