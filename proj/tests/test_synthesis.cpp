#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "lqmfg/synthesis.hpp"
#include "test_support.hpp"

using namespace lqmfg;

namespace {

// d = 1 game with unit weights and noise sqrt(2): precision and cost are
// both sqrt(2), the value slope is sqrt(2) x.
MeanFieldGame canonical_game() {
  MeanFieldGame g;
  g.d = 1;
  g.A = Matrix::Zero(1, 1);
  g.nu = Matrix::Identity(1, 1);
  g.R = Matrix::Identity(1, 1);
  g.Qhat = Matrix::Identity(1, 1);
  g.Bhat = Matrix::Zero(1, 1);
  g.Chat = Matrix::Zero(1, 1);
  g.Dhat = Matrix::Zero(1, 1);
  g.H = Vector::Zero(1);
  g.Delta = Vector::Zero(1);
  return g;
}

// Exchangeable game with symmetric drift and scalar noise/control weights,
// the shape for which the compatibility condition holds automatically.
NearlyIdenticalGame compatible_nid(std::mt19937_64& gen, int N, int d) {
  NearlyIdenticalGame g;
  g.N = N;
  g.d = d;
  g.A = testsup::random_symmetric(gen, d);
  g.sigma = 1.3 * Matrix::Identity(d, d);
  g.R = 0.8 * Matrix::Identity(d, d);
  g.Q = testsup::random_spd(gen, d, 1.0);
  g.B = 0.1 * testsup::random_symmetric(gen, d);
  for (int i = 0; i < N; ++i) {
    g.C.push_back(0.1 * testsup::random_symmetric(gen, d));
    g.D.push_back(0.1 * testsup::random_symmetric(gen, d));
  }
  g.H = testsup::random_vector(gen, d);
  g.Delta = testsup::random_vector(gen, d);
  return g;
}

}  // namespace

TEST_CASE("canonical one-dimensional game solves in closed form") {
  MeanFieldGame g = canonical_game();
  ConditionReport rep = check_conditions(g);
  CHECK(rep.verdict_exists);
  CHECK(rep.verdict_unique);

  EquilibriumSolution sol = solve_mean_field(g);
  REQUIRE(sol.players.size() == 1);
  const auto& ps = sol.players[0];
  const double rt2 = std::sqrt(2.0);
  CHECK(ps.measure.Sigma(0, 0) == doctest::Approx(rt2).epsilon(1e-12));
  CHECK(ps.value.Lambda(0, 0) == doctest::Approx(rt2).epsilon(1e-12));
  CHECK(ps.lambda == doctest::Approx(rt2).epsilon(1e-12));
  CHECK(ps.feedback.K(0, 0) == doctest::Approx(rt2).epsilon(1e-12));
  CHECK(std::abs(ps.measure.mu(0)) < 1e-12);
  CHECK(std::abs(ps.value.rho(0)) < 1e-12);
  CHECK(std::abs(ps.feedback.c(0)) < 1e-12);
  CHECK_FALSE(sol.family.has_value());

  ResidualReport res = hjb_kfp_residual(g, sol, 1000);
  CHECK(res.hjb_max < 1e-12);
  CHECK(res.kfp_max < 1e-12);
  CHECK(res.mass_error < 1e-12);
}

TEST_CASE("two players with decoupled unit costs") {
  // Q^i = identity over the stacked state: own weight 1, no coupling.
  NearlyIdenticalGame nid;
  nid.N = 2;
  nid.d = 1;
  nid.A = Matrix::Zero(1, 1);
  nid.sigma = Matrix::Constant(1, 1, std::sqrt(2.0));
  nid.R = Matrix::Identity(1, 1);
  nid.Q = Matrix::Identity(1, 1);
  nid.B = Matrix::Zero(1, 1);
  nid.C.assign(2, Matrix::Identity(1, 1));
  nid.D.assign(2, Matrix::Zero(1, 1));
  nid.H = Vector::Zero(1);
  nid.Delta = Vector::Zero(1);

  NPersonGame g = to_n_person(nid);
  EquilibriumSolution sol = solve_n_person(g);
  REQUIRE(sol.players.size() == 2);
  const double rt2 = std::sqrt(2.0);
  for (const auto& ps : sol.players) {
    CHECK(ps.measure.Sigma(0, 0) == doctest::Approx(rt2).epsilon(1e-12));
    // lambda = E[own cost] + E[opponent cost] + control trace
    //        = 1/sqrt(2) (opponent variance term) + sqrt(2).
    CHECK(ps.lambda == doctest::Approx(1.0 / rt2 + rt2).epsilon(1e-12));
  }
  ResidualReport res = hjb_kfp_residual(g, sol, 1000);
  CHECK(res.hjb_max < 1e-10);
  CHECK(res.kfp_max < 1e-10);
}

TEST_CASE("verdicts match solver outcomes on curated games") {
  // Consensus with drift I: reduced mean matrix is A^T R A / 2 = I/2.
  NearlyIdenticalGame good = build_consensus_game(3, Matrix::Identity(2, 2), Matrix::Identity(2, 2),
                                                  Matrix::Identity(2, 2), Matrix::Identity(2, 2));
  ConditionReport rep_good = check_conditions(good);
  CHECK(rep_good.verdict_exists);
  CHECK(rep_good.verdict_unique);
  EquilibriumSolution sol_good = solve_nearly_identical(good);
  CHECK_FALSE(sol_good.family.has_value());
  CHECK(sol_good.players[0].measure.mu.norm() < 1e-12);

  // Shear drift with identity weights: the compatibility defect is 1.
  NearlyIdenticalGame shear;
  shear.N = 2;
  shear.d = 2;
  shear.A = Matrix::Zero(2, 2);
  shear.A(0, 1) = 1.0;
  shear.sigma = Matrix::Identity(2, 2);
  shear.R = Matrix::Identity(2, 2);
  shear.Q = Matrix::Identity(2, 2);
  shear.B = Matrix::Zero(2, 2);
  shear.C.assign(2, Matrix::Zero(2, 2));
  shear.D.assign(2, Matrix::Zero(2, 2));
  shear.H = Vector::Zero(2);
  shear.Delta = Vector::Zero(2);
  ConditionReport rep_shear = check_conditions(shear);
  CHECK_FALSE(rep_shear.verdict_exists);
  CHECK(rep_shear.sylvester_residuals[0] == doctest::Approx(1.0));
  CHECK_THROWS_WITH_AS(solve_nearly_identical(shear),
                       doctest::Contains("sylvester"), ConditionsFailError);

  // Kernel drift: mean matrix diag(0, 1/2), consistent right-hand side.
  Matrix Ak = Matrix::Zero(2, 2);
  Ak(1, 1) = 1.0;
  NearlyIdenticalGame fam = build_consensus_game(3, Matrix::Identity(2, 2), Ak,
                                                 Matrix::Identity(2, 2), Matrix::Identity(2, 2));
  ConditionReport rep_fam = check_conditions(fam);
  CHECK(rep_fam.verdict_exists);
  CHECK_FALSE(rep_fam.verdict_unique);
  CHECK(rep_fam.null_space_dim == 1);
  EquilibriumSolution sol_fam = solve_nearly_identical(fam);
  REQUIRE(sol_fam.family.has_value());
  CHECK(sol_fam.family->dimension() == 1);
}

TEST_CASE("singular mean system, consistent and inconsistent sides") {
  NearlyIdenticalGame g;
  g.N = 2;
  g.d = 2;
  g.A = Matrix::Zero(2, 2);
  g.sigma = Matrix::Identity(2, 2);
  g.R = Matrix::Identity(2, 2);
  g.Q = Matrix::Identity(2, 2);
  g.B = Matrix::Zero(2, 2);
  g.B(1, 1) = -2.0;  // cancels Q on the second coordinate: B' = diag(1, 0)
  g.C.assign(2, Matrix::Zero(2, 2));
  g.D.assign(2, Matrix::Zero(2, 2));
  g.Delta = Vector::Zero(2);

  g.H = Vector::Zero(2);
  g.H(1) = 1.0;  // right-hand side leaves the range
  ConditionReport bad = check_conditions(g);
  CHECK_FALSE(bad.rank_consistent);
  CHECK(bad.rank_B == 1);
  CHECK(bad.rank_BP == 2);
  CHECK_THROWS_WITH_AS(solve_nearly_identical(g), doctest::Contains("rank"), ConditionsFailError);

  g.H = Vector::Zero(2);
  g.H(0) = 1.0;  // now inside the range, one-parameter family
  ConditionReport ok = check_conditions(g);
  CHECK(ok.rank_consistent);
  CHECK_FALSE(ok.verdict_unique);
  EquilibriumSolution sol = solve_nearly_identical(g);
  REQUIRE(sol.family.has_value());
  CHECK(sol.family->dimension() == 1);
  // Minimum-norm member is orthogonal to the null directions.
  CHECK(std::abs(sol.family->null_basis.col(0).dot(sol.family->mu_particular)) < 1e-10);
}

TEST_CASE("pde residuals react to a perturbed solution") {
  MeanFieldGame g = canonical_game();
  EquilibriumSolution sol = solve_mean_field(g);

  EquilibriumSolution wrong_value = sol;
  wrong_value.players[0].value.Lambda(0, 0) += 1e-2;
  ResidualReport r1 = hjb_kfp_residual(g, wrong_value, 500);
  CHECK(r1.hjb_max > 1e-4);

  EquilibriumSolution wrong_measure = sol;
  wrong_measure.players[0].measure.Sigma(0, 0) += 1e-3;
  ResidualReport r2 = hjb_kfp_residual(g, wrong_measure, 500);
  CHECK(r2.kfp_max > 1e-5);
}

TEST_CASE("noise scaling leaves feedback and value slope invariant") {
  std::mt19937_64 gen(41);
  NearlyIdenticalGame base = compatible_nid(gen, 3, 2);
  EquilibriumSolution ref = solve_nearly_identical(base);

  for (double kappa : {0.1, 10.0}) {
    NearlyIdenticalGame g = base;
    g.sigma = kappa * base.sigma;
    EquilibriumSolution sol = solve_nearly_identical(g);
    for (size_t i = 0; i < sol.players.size(); ++i) {
      CHECK(operator_norm(sol.players[i].feedback.K - ref.players[i].feedback.K) < 1e-9);
      CHECK((sol.players[i].feedback.c - ref.players[i].feedback.c).norm() < 1e-9);
      CHECK(operator_norm(sol.players[i].value.Lambda - ref.players[i].value.Lambda) < 1e-9);
      CHECK((sol.players[i].value.rho - ref.players[i].value.rho).norm() < 1e-9);
      // The precision scales by 1/kappa^2 instead.
      CHECK(operator_norm(kappa * kappa * sol.players[i].measure.Sigma -
                          ref.players[i].measure.Sigma) < 1e-9 * kappa * kappa);
    }
  }
}

TEST_CASE("family members share the ergodic constant on consensus games") {
  Matrix Ak = Matrix::Zero(2, 2);
  Ak(1, 1) = 1.0;
  NearlyIdenticalGame g = build_consensus_game(4, Matrix::Identity(2, 2), Ak,
                                               Matrix::Identity(2, 2), Matrix::Identity(2, 2));
  EquilibriumSolution sol = solve_nearly_identical(g);
  REQUIRE(sol.family.has_value());
  REQUIRE(sol.family->dimension() == 1);

  const double lambda0 = sol.players[0].lambda;
  Vector prev_mu = sol.players[0].measure.mu;
  for (double t : {-1.0, 0.5, 2.0}) {
    Vector coeffs(1);
    coeffs << t;
    EquilibriumSolution member = family_member(g, sol, coeffs);
    CHECK((member.players[0].measure.mu - prev_mu).norm() > 1e-3);  // means move
    CHECK(member.players[0].lambda == doctest::Approx(lambda0).epsilon(1e-10));
    ResidualReport res = hjb_kfp_residual(g, member, 500);
    CHECK(res.hjb_max < 1e-8);
    CHECK(res.kfp_max < 1e-8);
    prev_mu = member.players[0].measure.mu;
  }

  Vector too_long(2);
  too_long << 1.0, 2.0;
  CHECK_THROWS_AS(family_member(g, sol, too_long), DimensionError);

  EquilibriumSolution unique_sol = solve_mean_field(canonical_game());
  Vector empty(0);
  CHECK_THROWS_AS(family_member(canonical_game(), unique_sol, empty), Error);
}

TEST_CASE("mean system assembly cross-checks the precision input") {
  std::mt19937_64 gen(42);
  NearlyIdenticalGame nid = compatible_nid(gen, 3, 2);
  NPersonGame g = to_n_person(nid);
  EquilibriumSolution sol = solve_n_person(g);

  std::vector<Matrix> sigmas;
  for (const auto& ps : sol.players) sigmas.push_back(ps.measure.Sigma);
  auto [B, P] = assemble_B_P(g, sigmas);  // consistent input passes
  CHECK(B.rows() == 6);
  CHECK(P.size() == 6);

  sigmas[1] *= 2.0;
  CHECK_THROWS_AS(assemble_B_P(g, sigmas), ConditionsFailError);
}

TEST_CASE("exchangeable and stacked solvers agree") {
  std::mt19937_64 gen(43);
  for (int trial = 0; trial < 5; ++trial) {
    NearlyIdenticalGame nid = compatible_nid(gen, 3, 2);
    EquilibriumSolution a = solve_nearly_identical(nid);
    EquilibriumSolution b = solve_n_person(to_n_person(nid));
    REQUIRE(a.players.size() == b.players.size());
    for (size_t i = 0; i < a.players.size(); ++i) {
      CHECK(operator_norm(a.players[i].measure.Sigma - b.players[i].measure.Sigma) < 1e-9);
      CHECK((a.players[i].measure.mu - b.players[i].measure.mu).norm() < 1e-9);
      CHECK(operator_norm(a.players[i].feedback.K - b.players[i].feedback.K) < 1e-9);
      CHECK((a.players[i].feedback.c - b.players[i].feedback.c).norm() < 1e-9);
      // Two independent constant-term routes: stacked expectation vs the
      // population weights.
      CHECK(a.players[i].lambda == doctest::Approx(b.players[i].lambda).epsilon(1e-9));
    }
    ResidualReport res = hjb_kfp_residual(nid, a, 300);
    CHECK(res.hjb_max < 1e-8);
    CHECK(res.kfp_max < 1e-8);
  }
}

TEST_CASE("feedback from value data") {
  QuadraticValue v;
  v.Lambda = Matrix::Identity(2, 2);
  v.rho = Vector::Ones(2);
  Matrix R = 2.0 * Matrix::Identity(2, 2);

  AffineFeedback fb = feedback_from_value(v, R);
  CHECK(operator_norm(fb.K - 0.5 * Matrix::Identity(2, 2)) < 1e-12);
  CHECK((fb.c - 0.5 * Vector::Ones(2)).norm() < 1e-12);

  // Stability is enforced only when the drift is supplied.
  CHECK_NOTHROW(feedback_from_value(v, R, Matrix::Zero(2, 2)));
  CHECK_THROWS_AS(feedback_from_value(v, R, Matrix::Identity(2, 2)), UnstableError);

  v.Lambda(0, 1) = 0.5;  // asymmetric Hessian is rejected
  CHECK_THROWS_AS(feedback_from_value(v, R), NonSymmetricError);
}

TEST_CASE("probe points are deterministic and fill the box") {
  auto pts1 = quasi_random_box(3, 200);
  auto pts2 = quasi_random_box(3, 200);
  REQUIRE(pts1.size() == 200);
  for (size_t k = 0; k < pts1.size(); ++k) {
    CHECK((pts1[k] - pts2[k]).norm() == 0.0);
    CHECK(pts1[k].cwiseAbs().maxCoeff() <= 1.0);
  }
  // Coverage: each octant of [-1,1]^3 gets hit.
  int octants[8] = {0};
  for (const auto& p : pts1) {
    int idx = (p(0) > 0) + 2 * (p(1) > 0) + 4 * (p(2) > 0);
    ++octants[idx];
  }
  for (int k = 0; k < 8; ++k) CHECK(octants[k] > 0);

  CHECK_THROWS_AS(quasi_random_box(0, 10), DimensionError);
  CHECK_THROWS_AS(quasi_random_box(33, 10), DimensionError);
}

TEST_CASE("gaussian measure normalizer") {
  GaussianMeasure m;
  m.mu = Vector::Zero(1);
  m.Sigma = Matrix::Constant(1, 1, 2.0);
  CHECK(m.gamma() == doctest::Approx(std::sqrt(2.0 / (2.0 * M_PI))));
  CHECK(m.covariance()(0, 0) == doctest::Approx(0.5));
  CHECK(m.density(m.mu) == doctest::Approx(m.gamma()));

  // Trapezoid integral of the density over a wide window is close to 1.
  double mass = 0.0;
  const double h = 1e-3;
  for (double x = -8.0; x <= 8.0; x += h) {
    Vector v(1);
    v << x;
    mass += h * m.density(v);
  }
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
}
