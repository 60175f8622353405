#include "lqmfg/synthesis.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <cmath>
#include <numbers>
#include <string>

namespace lqmfg {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct MeanSystem {
  Matrix B;
  Vector P;
  RankReport rank;
  bool invertible = false;
  Vector particular;  // minimum-norm solution when consistent
  Matrix null_basis;  // orthonormal columns spanning ker(B)
};

MeanSystem analyze_mean_system(const Matrix& B, const Vector& P) {
  MeanSystem ms;
  ms.B = B;
  ms.P = P;
  ms.rank = rank_consistent(B, P);
  const Eigen::Index n = B.cols();
  ms.invertible = ms.rank.rank_lhs == n && B.rows() == n;

  Eigen::JacobiSVD<Matrix> svd(B, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double smax = svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
  const double cutoff = 1e-8 * smax * static_cast<double>(std::max(B.rows(), B.cols()));

  Vector y = svd.matrixU().transpose() * P;
  Vector z = Vector::Zero(n);
  int live = 0;
  for (Eigen::Index k = 0; k < svd.singularValues().size(); ++k) {
    if (svd.singularValues()(k) > cutoff) {
      z(k) = y(k) / svd.singularValues()(k);
      ++live;
    }
  }
  ms.particular = svd.matrixV() * z;
  ms.null_basis = svd.matrixV().rightCols(n - live);
  return ms;
}

struct PlayerCore {
  Matrix nu, Sigma;
  double syl_resid = 0.0;
};

PlayerCore player_core(const Matrix& A, const Matrix& sigma, const Matrix& R, const Matrix& Qown) {
  PlayerCore core;
  core.nu = 0.5 * sigma * sigma.transpose();
  AREProblem p;
  p.Rcal = symmetrized(0.5 * core.nu * R * core.nu);
  p.Qcal = symmetrized(0.5 * A.transpose() * R * A + Qown);
  core.Sigma = solve_are_spd(p);
  core.syl_resid = sylvester_residual(core.Sigma, core.nu, R, A);
  return core;
}

double sylvester_tolerance(const Matrix& R, const Matrix& A) {
  return 1e-8 * (1.0 + operator_norm(R * A));
}

void fill_rank_fields(ConditionReport& rep, const MeanSystem& ms) {
  rep.rank_B = ms.rank.rank_lhs;
  rep.rank_BP = ms.rank.rank_augmented;
  rep.rank_consistent = ms.rank.consistent;
  rep.B_invertible = ms.invertible;
  rep.null_space_dim = static_cast<int>(ms.B.cols()) - ms.rank.rank_lhs;
  rep.verdict_exists = rep.sylvester_ok && rep.rank_consistent;
  rep.verdict_unique = rep.B_invertible;
}

PlayerSolution materialize_player(const Matrix& A, const Matrix& R, const PlayerCore& core,
                                  const Vector& mu) {
  PlayerSolution ps;
  const Matrix nuSigma = core.nu * core.Sigma;
  ps.value.Lambda = symmetrized(R * (nuSigma + A));
  ps.value.rho = -R * nuSigma * mu;
  ps.measure.mu = mu;
  ps.measure.Sigma = core.Sigma;
  ps.feedback.K = nuSigma + A;
  ps.feedback.c = -nuSigma * mu;
  const Matrix closed_loop = A - ps.feedback.K;  // equals -nu Sigma
  if (!is_stable(closed_loop)) {
    throw UnstableError("synthesis: closed loop A - K failed the stability check");
  }
  return ps;
}

double lambda_from_F0(double F0, const Matrix& nu, const Matrix& R, const Matrix& A,
                      const Matrix& Sigma, const Vector& mu) {
  const Matrix nuSigma = nu * Sigma;
  const double quad = mu.dot(Sigma * nu * R * nuSigma * mu) / 2.0;
  const double trace = (nu * R * nuSigma + nu * R * A).trace();
  return F0 - quad + trace;
}

void throw_sylvester(const ConditionReport& rep) {
  double worst = 0.0;
  size_t worst_i = 0;
  for (size_t i = 0; i < rep.sylvester_residuals.size(); ++i) {
    if (rep.sylvester_residuals[i] > worst) {
      worst = rep.sylvester_residuals[i];
      worst_i = i;
    }
  }
  throw ConditionsFailError("sylvester compatibility fails: residual " + std::to_string(worst) +
                            " at player " + std::to_string(worst_i));
}

void throw_rank(const ConditionReport& rep) {
  throw ConditionsFailError("mean system is rank inconsistent: rank(B) = " +
                            std::to_string(rep.rank_B) + ", rank([B,P]) = " +
                            std::to_string(rep.rank_BP));
}

// Centered constant term shared by the exchangeable and mean-field lambda
// formulas; weights already carry their N factors.
double population_F0(const Vector& H, const Matrix& Qown, const Matrix& Bw, const Matrix& Cw,
                     const Matrix& Dw, const Vector& w, const Matrix& cov) {
  double F0 = H.dot(Qown * H);
  F0 -= H.dot(Bw * w) + w.dot(Bw * H);
  F0 += (Cw * cov).trace();
  F0 += w.dot(Dw * w);
  return F0;
}

}  // namespace

double GaussianMeasure::gamma() const {
  const auto d = static_cast<double>(Sigma.rows());
  return std::pow(kTwoPi, -d / 2.0) * std::sqrt(Sigma.determinant());
}

Matrix GaussianMeasure::covariance() const {
  return Sigma.llt().solve(Matrix::Identity(Sigma.rows(), Sigma.cols()));
}

double GaussianMeasure::density(const Vector& x) const {
  const Vector z = x - mu;
  return gamma() * std::exp(-0.5 * z.dot(Sigma * z));
}

MeasureMoments GaussianMeasure::moments() const {
  return MeasureMoments::from_mean_cov(mu, covariance());
}

std::pair<Matrix, Vector> assemble_B_P(const NPersonGame& g) {
  const Eigen::Index d = g.d, nd = static_cast<Eigen::Index>(g.N) * g.d;
  Matrix B = Matrix::Zero(nd, nd);
  Vector P = Vector::Zero(nd);
  for (int a = 0; a < g.N; ++a) {
    for (int b = 0; b < g.N; ++b) {
      Matrix blk = -g.q_block(a, a, b);
      if (a == b) blk -= 0.5 * g.A[a].transpose() * g.R[a] * g.A[a];
      B.block(a * d, b * d, d, d) = blk;
    }
    Vector rhs = Vector::Zero(d);
    for (int j = 0; j < g.N; ++j) rhs -= g.q_block(a, a, j) * g.xbar_block(a, j);
    P.segment(a * d, d) = rhs;
  }
  return {B, P};
}

std::pair<Matrix, Vector> assemble_B_P(const NPersonGame& g, const std::vector<Matrix>& Sigmas) {
  if (Sigmas.size() != static_cast<size_t>(g.N)) {
    throw DimensionError("assemble_B_P: one Sigma per player required");
  }
  for (int a = 0; a < g.N; ++a) {
    const Matrix nu = g.nu(a);
    const Matrix lhs = 0.5 * Sigmas[a] * nu * g.R[a] * nu * Sigmas[a];
    const Matrix rhs = g.q_block(a, a, a) + 0.5 * g.A[a].transpose() * g.R[a] * g.A[a];
    const double scale = 1.0 + operator_norm(rhs);
    if (operator_norm(lhs - rhs) > 1e-7 * scale) {
      throw ConditionsFailError("assemble_B_P: Sigma of player " + std::to_string(a) +
                                " does not solve its ARE");
    }
  }
  return assemble_B_P(g);
}

Matrix assemble_Bprime(const NearlyIdenticalGame& g) {
  return symmetrized(g.Q + 0.5 * g.A.transpose() * g.R * g.A + 0.5 * (g.N - 1.0) * g.B);
}

Vector assemble_Pprime_rhs(const NearlyIdenticalGame& g) {
  return g.Q * g.H + 0.5 * (g.N - 1.0) * g.B * g.Delta;
}

Matrix assemble_Binf(const MeanFieldGame& g) {
  return symmetrized(g.Qhat + 0.5 * g.A.transpose() * g.R * g.A + 0.5 * g.Bhat);
}

Vector assemble_Pinf_rhs(const MeanFieldGame& g) {
  return g.Qhat * g.H + 0.5 * g.Bhat * g.Delta;
}

namespace {

struct NPersonWork {
  ConditionReport report;
  std::vector<PlayerCore> cores;
  MeanSystem ms;
};

NPersonWork n_person_work(const NPersonGame& g) {
  NPersonWork w;
  w.report.which = ConditionKind::NPerson;
  w.report.sylvester_ok = true;
  for (int i = 0; i < g.N; ++i) {
    w.cores.push_back(player_core(g.A[i], g.sigma[i], g.R[i], g.q_block(i, i, i)));
    w.report.sylvester_residuals.push_back(w.cores.back().syl_resid);
    if (w.cores.back().syl_resid >= sylvester_tolerance(g.R[i], g.A[i])) {
      w.report.sylvester_ok = false;
    }
  }
  w.report.are_solved = true;
  auto [B, P] = assemble_B_P(g);
  w.ms = analyze_mean_system(B, P);
  fill_rank_fields(w.report, w.ms);
  return w;
}

struct ReducedWork {
  ConditionReport report;
  PlayerCore core;
  MeanSystem ms;
};

ReducedWork reduced_work(ConditionKind which, const Matrix& A, const Matrix& sigma, const Matrix& R,
                         const Matrix& Qown, const Matrix& Bsys, const Vector& rhs) {
  ReducedWork w;
  w.report.which = which;
  w.core = player_core(A, sigma, R, Qown);
  w.report.sylvester_residuals.push_back(w.core.syl_resid);
  w.report.sylvester_ok = w.core.syl_resid < sylvester_tolerance(R, A);
  w.report.are_solved = true;
  w.ms = analyze_mean_system(Bsys, rhs);
  fill_rank_fields(w.report, w.ms);
  return w;
}

EquilibriumSolution materialize_n_person(const NPersonGame& g, const std::vector<PlayerCore>& cores,
                                         const Vector& mu_stack) {
  EquilibriumSolution sol;
  std::vector<MeasureMoments> moments;
  for (int i = 0; i < g.N; ++i) {
    sol.players.push_back(
        materialize_player(g.A[i], g.R[i], cores[static_cast<size_t>(i)], mu_stack.segment(i * g.d, g.d)));
    moments.push_back(sol.players.back().measure.moments());
  }
  for (int i = 0; i < g.N; ++i) {
    auto& ps = sol.players[static_cast<size_t>(i)];
    const double F0 = expected_state_cost(g, i, moments).c;
    ps.lambda = lambda_from_F0(F0, cores[static_cast<size_t>(i)].nu, g.R[i], g.A[i],
                               cores[static_cast<size_t>(i)].Sigma, ps.measure.mu);
  }
  return sol;
}

EquilibriumSolution materialize_nid(const NearlyIdenticalGame& g, const PlayerCore& core,
                                    const Vector& mu) {
  EquilibriumSolution sol;
  PlayerSolution base = materialize_player(g.A, g.R, core, mu);
  const Matrix cov = base.measure.covariance();
  const Vector w = mu - g.Delta;
  const double n1 = g.N - 1.0;
  for (int i = 0; i < g.N; ++i) {
    PlayerSolution ps = base;
    const auto& Ci = g.C[static_cast<size_t>(i)];
    const auto& Di = g.D[static_cast<size_t>(i)];
    // Cross and trace terms carry (N-1); the mean-mean D term carries
    // (N-1)(N-2) because opponents are independent, so D never sees the
    // covariance.
    const double F0 =
        population_F0(g.H, g.Q, Matrix(0.5 * n1 * g.B), Matrix(n1 * Ci),
                      Matrix(n1 * Ci + n1 * (g.N - 2.0) * Di), w, cov);
    ps.lambda = lambda_from_F0(F0, core.nu, g.R, g.A, core.Sigma, mu);
    sol.players.push_back(ps);
  }
  return sol;
}

EquilibriumSolution materialize_mfg(const MeanFieldGame& g, const PlayerCore& core, const Vector& mu) {
  EquilibriumSolution sol;
  PlayerSolution ps = materialize_player(g.A, g.R, core, mu);
  const Matrix cov = ps.measure.covariance();
  const Vector w = mu - g.Delta;
  const double F0 = population_F0(g.H, g.Qhat, Matrix(0.5 * g.Bhat), g.Chat,
                                  Matrix(g.Chat + g.Dhat), w, cov);
  ps.lambda = lambda_from_F0(F0, core.nu, g.R, g.A, core.Sigma, mu);
  sol.players.push_back(ps);
  return sol;
}

void attach_family(EquilibriumSolution& sol, const MeanSystem& ms) {
  if (!ms.invertible) {
    sol.family = SolutionFamily{ms.particular, ms.null_basis};
  }
}

}  // namespace

ConditionReport check_conditions(const NPersonGame& g) { return n_person_work(g).report; }

ConditionReport check_conditions(const NearlyIdenticalGame& g) {
  return reduced_work(ConditionKind::NearlyIdentical, g.A, g.sigma, g.R, g.Q, assemble_Bprime(g),
                      assemble_Pprime_rhs(g))
      .report;
}

ConditionReport check_conditions(const MeanFieldGame& g) {
  return reduced_work(ConditionKind::MeanField, g.A, g.sigma(), g.R, g.Qhat, assemble_Binf(g),
                      assemble_Pinf_rhs(g))
      .report;
}

EquilibriumSolution solve_n_person(const NPersonGame& g) {
  NPersonWork w = n_person_work(g);
  if (!w.report.sylvester_ok) throw_sylvester(w.report);
  if (!w.report.rank_consistent) throw_rank(w.report);
  EquilibriumSolution sol = materialize_n_person(g, w.cores, w.ms.particular);
  attach_family(sol, w.ms);
  return sol;
}

EquilibriumSolution solve_nearly_identical(const NearlyIdenticalGame& g) {
  ReducedWork w = reduced_work(ConditionKind::NearlyIdentical, g.A, g.sigma, g.R, g.Q,
                               assemble_Bprime(g), assemble_Pprime_rhs(g));
  if (!w.report.sylvester_ok) throw_sylvester(w.report);
  if (!w.report.rank_consistent) throw_rank(w.report);
  EquilibriumSolution sol = materialize_nid(g, w.core, w.ms.particular);
  attach_family(sol, w.ms);
  return sol;
}

EquilibriumSolution solve_mean_field(const MeanFieldGame& g) {
  ReducedWork w = reduced_work(ConditionKind::MeanField, g.A, g.sigma(), g.R, g.Qhat,
                               assemble_Binf(g), assemble_Pinf_rhs(g));
  if (!w.report.sylvester_ok) throw_sylvester(w.report);
  if (!w.report.rank_consistent) throw_rank(w.report);
  EquilibriumSolution sol = materialize_mfg(g, w.core, w.ms.particular);
  attach_family(sol, w.ms);
  return sol;
}

namespace {

Vector family_mu(const EquilibriumSolution& sol, const Vector& coeffs) {
  if (!sol.family) throw Error("family_member: solution has no family");
  if (coeffs.size() != sol.family->null_basis.cols()) {
    throw DimensionError("family_member: coefficient vector has wrong length");
  }
  return sol.family->mu_particular + sol.family->null_basis * coeffs;
}

}  // namespace

EquilibriumSolution family_member(const NPersonGame& g, const EquilibriumSolution& sol,
                                  const Vector& coeffs) {
  const Vector mu = family_mu(sol, coeffs);
  NPersonWork w = n_person_work(g);
  EquilibriumSolution out = materialize_n_person(g, w.cores, mu);
  out.family = sol.family;
  return out;
}

EquilibriumSolution family_member(const NearlyIdenticalGame& g, const EquilibriumSolution& sol,
                                  const Vector& coeffs) {
  const Vector mu = family_mu(sol, coeffs);
  ReducedWork w = reduced_work(ConditionKind::NearlyIdentical, g.A, g.sigma, g.R, g.Q,
                               assemble_Bprime(g), assemble_Pprime_rhs(g));
  EquilibriumSolution out = materialize_nid(g, w.core, mu);
  out.family = sol.family;
  return out;
}

EquilibriumSolution family_member(const MeanFieldGame& g, const EquilibriumSolution& sol,
                                  const Vector& coeffs) {
  const Vector mu = family_mu(sol, coeffs);
  ReducedWork w = reduced_work(ConditionKind::MeanField, g.A, g.sigma(), g.R, g.Qhat,
                               assemble_Binf(g), assemble_Pinf_rhs(g));
  EquilibriumSolution out = materialize_mfg(g, w.core, mu);
  out.family = sol.family;
  return out;
}

AffineFeedback feedback_from_value(const QuadraticValue& v, const Matrix& R,
                                   const std::optional<Matrix>& A) {
  require_spd(R, "feedback_from_value: R");
  if (!is_symmetric(v.Lambda)) {
    throw NonSymmetricError("feedback_from_value: Lambda is not symmetric");
  }
  AffineFeedback fb;
  const auto llt = R.llt();
  fb.K = llt.solve(v.Lambda);
  fb.c = llt.solve(v.rho);
  if (A) {
    if (!is_stable(*A - fb.K)) {
      throw UnstableError("feedback_from_value: A - K is not strictly stable");
    }
  }
  return fb;
}

std::vector<Vector> quasi_random_box(int d, int count) {
  static const int primes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31,
                               37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79,
                               83, 89, 97, 101, 103, 107, 109, 113, 127, 131};
  if (d < 1 || d > 32) throw DimensionError("quasi_random_box: d out of range");
  std::vector<double> alpha(static_cast<size_t>(d));
  for (int j = 0; j < d; ++j) {
    double s = std::sqrt(static_cast<double>(primes[j]));
    alpha[static_cast<size_t>(j)] = s - std::floor(s);
  }
  std::vector<Vector> pts;
  pts.reserve(static_cast<size_t>(count));
  for (int n = 1; n <= count; ++n) {
    Vector x(d);
    for (int j = 0; j < d; ++j) {
      double t = n * alpha[static_cast<size_t>(j)];
      t -= std::floor(t);
      x(j) = 2.0 * t - 1.0;
    }
    pts.push_back(x);
  }
  return pts;
}

namespace {

struct PlayerResidualData {
  Matrix Rinv, nu;
  Quadratic f;
};

void accumulate_residuals(const Matrix& A, const PlayerResidualData& dat, const PlayerSolution& ps,
                          int points, ResidualReport& rep) {
  const Matrix& Lambda = ps.value.Lambda;
  const Vector& rho = ps.value.rho;
  const Matrix& Sigma = ps.measure.Sigma;
  const Vector& mu = ps.measure.mu;
  const Matrix cov = ps.measure.covariance();
  const double radius = 5.0 * std::sqrt(spectral_norm(cov));

  const Matrix G = dat.Rinv * Lambda - A;
  const Vector g0 = dat.Rinv * rho;
  const Matrix SnS = Sigma * dat.nu * Sigma;
  const double tr_nuSigma = (dat.nu * Sigma).trace();
  const double tr_nuLambda = (dat.nu * Lambda).trace();
  const double tr_G = G.trace();

  for (const Vector& u : quasi_random_box(static_cast<int>(mu.size()), points)) {
    const Vector x = mu + radius * u;
    const Vector p = Lambda * x + rho;
    const double hjb =
        -tr_nuLambda + 0.5 * p.dot(dat.Rinv * p) - p.dot(A * x) + ps.lambda - dat.f(x);
    const Vector z = x - mu;
    const double m = ps.measure.density(x);
    const double kfp = -m * (z.dot(SnS * z) - tr_nuSigma) - m * (tr_G - z.dot(Sigma * (G * x + g0)));
    rep.hjb_max = std::max(rep.hjb_max, std::abs(hjb));
    rep.kfp_max = std::max(rep.kfp_max, std::abs(kfp));
  }
  const auto d = static_cast<double>(mu.size());
  const double mass = ps.measure.gamma() * std::pow(kTwoPi, d / 2.0) / std::sqrt(Sigma.determinant());
  rep.mass_error = std::max(rep.mass_error, std::abs(mass - 1.0));
}

}  // namespace

ResidualReport hjb_kfp_residual(const NPersonGame& g, const EquilibriumSolution& sol, int points) {
  if (sol.players.size() != static_cast<size_t>(g.N)) {
    throw DimensionError("hjb_kfp_residual: solution/game player counts differ");
  }
  std::vector<MeasureMoments> moments;
  for (const auto& ps : sol.players) moments.push_back(ps.measure.moments());
  ResidualReport rep;
  for (int i = 0; i < g.N; ++i) {
    PlayerResidualData dat;
    dat.Rinv = g.R[i].llt().solve(Matrix::Identity(g.d, g.d));
    dat.nu = g.nu(i);
    dat.f = expected_state_cost(g, i, moments);
    accumulate_residuals(g.A[i], dat, sol.players[static_cast<size_t>(i)], points, rep);
  }
  return rep;
}

ResidualReport hjb_kfp_residual(const NearlyIdenticalGame& g, const EquilibriumSolution& sol,
                                int points) {
  return hjb_kfp_residual(to_n_person(g), sol, points);
}

ResidualReport hjb_kfp_residual(const MeanFieldGame& g, const EquilibriumSolution& sol, int points) {
  if (sol.players.size() != 1) {
    throw DimensionError("hjb_kfp_residual: mean-field solution must have one player");
  }
  PlayerResidualData dat;
  dat.Rinv = g.R.llt().solve(Matrix::Identity(g.d, g.d));
  dat.nu = g.nu;
  dat.f = vhat_quadratic(g, sol.players[0].measure.moments());
  ResidualReport rep;
  accumulate_residuals(g.A, dat, sol.players[0], points, rep);
  return rep;
}

}  // namespace lqmfg
