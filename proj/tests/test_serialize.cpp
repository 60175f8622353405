#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lqmfg/serialize.hpp"
#include "test_support.hpp"

using namespace lqmfg;

namespace {

std::string spec_path(const char* name) {
  return std::string(LQMFG_SPEC_DIR) + "/" + name;
}

std::string golden_path(const char* name) {
  return std::string(LQMFG_GOLDEN_DIR) + "/" + name;
}

std::string temp_file(const char* stem) {
  return (std::filesystem::temp_directory_path() /
          (std::string("lqmfg_") + stem + ".json"))
      .string();
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return 1e300;
  if (a.size() == 0) return 0.0;
  return (a - b).cwiseAbs().maxCoeff();
}

double max_abs_diff(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return 1e300;
  if (a.size() == 0) return 0.0;
  return (a - b).cwiseAbs().maxCoeff();
}

MeanFieldGame crowd_like(double Bhat) {
  MeanFieldGame g;
  g.d = 1;
  g.A = Matrix::Zero(1, 1);
  g.nu = Matrix::Identity(1, 1);
  g.R = Matrix::Identity(1, 1);
  g.Qhat = Matrix::Identity(1, 1);
  g.Bhat = Matrix::Constant(1, 1, Bhat);
  g.Chat = Matrix::Zero(1, 1);
  g.Dhat = Matrix::Zero(1, 1);
  g.H = Vector::Constant(1, 1.0);
  g.Delta = Vector::Zero(1);
  return g;
}

}  // namespace

TEST_CASE("matrix and vector values survive the json round trip") {
  std::mt19937_64 gen(71);
  Matrix M = testsup::random_matrix(gen, 3, 4);
  Vector v = testsup::random_vector(gen, 5);

  CHECK(max_abs_diff(matrix_from_json(matrix_json(M), "M"), M) == 0.0);
  CHECK(max_abs_diff(vector_from_json(vector_json(v), "v"), v) == 0.0);

  // Through text as well: dump uses shortest-round-trip formatting.
  Json reparsed = Json::parse(matrix_json(M).dump());
  CHECK(max_abs_diff(matrix_from_json(reparsed, "M"), M) == 0.0);
}

TEST_CASE("malformed arrays are rejected with a field name") {
  Json ragged = Json::array({Json::array({1.0, 2.0}), Json::array({3.0})});
  CHECK_THROWS_WITH_AS(matrix_from_json(ragged, "Q"), doctest::Contains("ragged"),
                       ParseError);
  CHECK_THROWS_WITH_AS(matrix_from_json(ragged, "Q"), doctest::Contains("Q"),
                       ParseError);

  Json text = Json::array({Json::array({1.0, "two"})});
  CHECK_THROWS_WITH_AS(matrix_from_json(text, "R"), doctest::Contains("number"),
                       ParseError);

  CHECK_THROWS_AS(matrix_from_json(Json::array(), "A"), ParseError);
  CHECK_THROWS_AS(matrix_from_json(Json::object(), "A"), ParseError);
  CHECK_THROWS_AS(vector_from_json(Json::object(), "H"), ParseError);
  CHECK_THROWS_WITH_AS(vector_from_json(Json::array({1.0, nullptr}), "H"),
                       doctest::Contains("number"), ParseError);
}

TEST_CASE("every bundled spec loads with the expected kind") {
  GameSpec canonical = load_game(spec_path("canonical_mfg.json"));
  CHECK(canonical.kind == GameKind::MeanField);
  REQUIRE(canonical.mean_field.has_value());
  CHECK(canonical.mean_field->d == 1);
  REQUIRE(canonical.scaling.has_value());
  CHECK(canonical.scaling->kind == ScalingRule::Kind::Default);

  GameSpec crowd = load_game(spec_path("crowd_mfg.json"));
  CHECK(crowd.kind == GameKind::MeanField);
  REQUIRE(crowd.scaling.has_value());
  CHECK(crowd.scaling->kind == ScalingRule::Kind::Default);
  CHECK(crowd.scaling->hetero_C == doctest::Approx(0.2));

  GameSpec cons_mfg = load_game(spec_path("consensus_mfg.json"));
  CHECK(cons_mfg.kind == GameKind::MeanField);
  REQUIRE(cons_mfg.scaling.has_value());
  CHECK(cons_mfg.scaling->kind == ScalingRule::Kind::ConsensusPerturbed);

  GameSpec cons = load_game(spec_path("consensus_n3_d2.json"));
  CHECK(cons.kind == GameKind::Consensus);
  REQUIRE(cons.nearly_identical.has_value());
  CHECK(cons.nearly_identical->N == 3);
  CHECK(cons.nearly_identical->d == 2);
  REQUIRE(cons.consensus_P.has_value());

  GameSpec fam = load_game(spec_path("consensus_family_d2.json"));
  CHECK(fam.kind == GameKind::Consensus);

  GameSpec shear = load_game(spec_path("bad_sylvester.json"));
  CHECK(shear.kind == GameKind::NearlyIdentical);
  REQUIRE(shear.nearly_identical.has_value());
  CHECK(shear.nearly_identical->N == 2);
}

TEST_CASE("n-person specs round trip exactly") {
  std::mt19937_64 gen(72);
  const int N = 3, d = 2;
  NPersonGame g;
  g.N = N;
  g.d = d;
  for (int i = 0; i < N; ++i) {
    g.A.push_back(testsup::random_matrix(gen, d, d));
    g.sigma.push_back(testsup::random_spd(gen, d));
    g.R.push_back(testsup::random_spd(gen, d));
    g.Q.push_back(testsup::random_symmetric(gen, N * d));
    g.Xbar.push_back(testsup::random_vector(gen, N * d));
  }
  GameSpec spec;
  spec.kind = GameKind::NPerson;
  spec.n_person = g;

  GameSpec back = parse_game(game_json(spec));
  REQUIRE(back.kind == GameKind::NPerson);
  REQUIRE(back.n_person.has_value());
  const NPersonGame& h = *back.n_person;
  CHECK(h.N == N);
  CHECK(h.d == d);
  for (int i = 0; i < N; ++i) {
    CHECK(max_abs_diff(h.A[i], g.A[i]) == 0.0);
    CHECK(max_abs_diff(h.sigma[i], g.sigma[i]) == 0.0);
    CHECK(max_abs_diff(h.R[i], g.R[i]) == 0.0);
    CHECK(max_abs_diff(h.Q[i], g.Q[i]) == 0.0);
    CHECK(max_abs_diff(h.Xbar[i], g.Xbar[i]) == 0.0);
  }
}

TEST_CASE("nearly identical specs round trip with per-player couplings") {
  std::mt19937_64 gen(73);
  const int N = 4, d = 2;
  NearlyIdenticalGame g;
  g.N = N;
  g.d = d;
  g.A = testsup::random_matrix(gen, d, d);
  g.sigma = testsup::random_spd(gen, d);
  g.R = testsup::random_spd(gen, d);
  g.Q = testsup::random_spd(gen, d);
  g.B = testsup::random_symmetric(gen, d);
  for (int i = 0; i < N; ++i) {
    g.C.push_back(testsup::random_symmetric(gen, d));
    g.D.push_back(testsup::random_symmetric(gen, d));
  }
  g.H = testsup::random_vector(gen, d);
  g.Delta = testsup::random_vector(gen, d);
  GameSpec spec;
  spec.kind = GameKind::NearlyIdentical;
  spec.nearly_identical = g;

  GameSpec back = parse_game(game_json(spec));
  REQUIRE(back.nearly_identical.has_value());
  const NearlyIdenticalGame& h = *back.nearly_identical;
  CHECK(max_abs_diff(h.A, g.A) == 0.0);
  CHECK(max_abs_diff(h.sigma, g.sigma) == 0.0);
  CHECK(max_abs_diff(h.R, g.R) == 0.0);
  CHECK(max_abs_diff(h.Q, g.Q) == 0.0);
  CHECK(max_abs_diff(h.B, g.B) == 0.0);
  REQUIRE(h.C.size() == static_cast<size_t>(N));
  REQUIRE(h.D.size() == static_cast<size_t>(N));
  for (int i = 0; i < N; ++i) {
    CHECK(max_abs_diff(h.C[i], g.C[i]) == 0.0);
    CHECK(max_abs_diff(h.D[i], g.D[i]) == 0.0);
  }
  CHECK(max_abs_diff(h.H, g.H) == 0.0);
  CHECK(max_abs_diff(h.Delta, g.Delta) == 0.0);
}

TEST_CASE("a shared coupling matrix expands to one copy per player") {
  Json j;
  j["kind"] = "nearly_identical";
  j["N"] = 3;
  j["d"] = 1;
  j["A"] = Json::array({Json::array({0.0})});
  j["sigma"] = Json::array({Json::array({1.0})});
  j["R"] = Json::array({Json::array({1.0})});
  j["Q"] = Json::array({Json::array({1.0})});
  j["B"] = Json::array({Json::array({0.5})});
  j["C"] = Json::array({Json::array({0.25})});  // shared: a single matrix
  j["D"] = Json::array({Json::array({Json::array({0.125})}),
                        Json::array({Json::array({0.25})}),
                        Json::array({Json::array({0.5})})});
  j["H"] = Json::array({1.0});
  j["Delta"] = Json::array({0.0});

  GameSpec spec = parse_game(j);
  REQUIRE(spec.nearly_identical.has_value());
  const NearlyIdenticalGame& g = *spec.nearly_identical;
  REQUIRE(g.C.size() == 3);
  for (const Matrix& Ci : g.C) CHECK(Ci(0, 0) == 0.25);
  REQUIRE(g.D.size() == 3);
  CHECK(g.D[0](0, 0) == 0.125);
  CHECK(g.D[2](0, 0) == 0.5);

  // A per-player list with the wrong count is a shape error.
  j["D"] = Json::array({Json::array({Json::array({0.125})}),
                        Json::array({Json::array({0.25})})});
  CHECK_THROWS_WITH_AS(parse_game(j), doctest::Contains("per player"),
                       DimensionError);
}

TEST_CASE("mean-field and consensus specs round trip semantically") {
  GameSpec spec = load_game(spec_path("crowd_mfg.json"));
  GameSpec back = parse_game(game_json(spec));
  REQUIRE(back.mean_field.has_value());
  const MeanFieldGame& g = *spec.mean_field;
  const MeanFieldGame& h = *back.mean_field;
  CHECK(max_abs_diff(h.A, g.A) == 0.0);
  CHECK(max_abs_diff(h.R, g.R) == 0.0);
  CHECK(max_abs_diff(h.Qhat, g.Qhat) == 0.0);
  CHECK(max_abs_diff(h.Bhat, g.Bhat) == 0.0);
  CHECK(max_abs_diff(h.Chat, g.Chat) == 0.0);
  CHECK(max_abs_diff(h.Dhat, g.Dhat) == 0.0);
  CHECK(max_abs_diff(h.H, g.H) == 0.0);
  CHECK(max_abs_diff(h.Delta, g.Delta) == 0.0);
  // sigma is stored, nu kept; the writer emits the SPD root of 2 nu.
  CHECK(max_abs_diff(h.nu, g.nu) < 1e-14);
  REQUIRE(back.scaling.has_value());
  CHECK(back.scaling->kind == spec.scaling->kind);
  CHECK(back.scaling->hetero_C == spec.scaling->hetero_C);

  GameSpec cons = load_game(spec_path("consensus_n3_d2.json"));
  GameSpec cons_back = parse_game(game_json(cons));
  REQUIRE(cons_back.kind == GameKind::Consensus);
  REQUIRE(cons_back.consensus_P.has_value());
  CHECK(max_abs_diff(*cons_back.consensus_P, *cons.consensus_P) == 0.0);
  CHECK(max_abs_diff(cons_back.nearly_identical->Q, cons.nearly_identical->Q) == 0.0);
  CHECK(max_abs_diff(cons_back.nearly_identical->B, cons.nearly_identical->B) == 0.0);
}

TEST_CASE("spec validation names the offending field") {
  Json j;
  j["kind"] = "wavelet";
  j["d"] = 1;
  CHECK_THROWS_WITH_AS(parse_game(j), doctest::Contains("unknown game kind"),
                       ParseError);

  j["kind"] = "mean_field";
  CHECK_THROWS_WITH_AS(parse_game(j), doctest::Contains("missing field 'A'"),
                       ParseError);

  Json bad_d{{"kind", "mean_field"}, {"d", 0}};
  CHECK_THROWS_AS(parse_game(bad_d), DimensionError);
  Json frac_d{{"kind", "mean_field"}, {"d", 1.5}};
  CHECK_THROWS_WITH_AS(parse_game(frac_d), doctest::Contains("integer"), ParseError);

  // Shape mismatches surface as DimensionError with the expected size.
  Json mf = load_json_file(spec_path("canonical_mfg.json"));
  mf["d"] = 2;
  CHECK_THROWS_WITH_AS(parse_game(mf), doctest::Contains("2x2"), DimensionError);

  Json nid = load_json_file(spec_path("bad_sylvester.json"));
  nid["N"] = 1;
  CHECK_THROWS_WITH_AS(parse_game(nid), doctest::Contains("N >= 2"),
                       DimensionError);
  nid["N"] = 2;
  nid["H"] = Json::array({1.0, 2.0, 3.0});
  CHECK_THROWS_WITH_AS(parse_game(nid), doctest::Contains("length 2"),
                       DimensionError);

  Json scale = load_json_file(spec_path("crowd_mfg.json"));
  scale["scaling"]["rule"] = "exotic";
  CHECK_THROWS_WITH_AS(parse_game(scale), doctest::Contains("unknown scaling rule"),
                       ParseError);
}

TEST_CASE("solutions round trip including the family block") {
  GameSpec fam_spec = load_game(spec_path("consensus_family_d2.json"));
  EquilibriumSolution sol = solve_nearly_identical(*fam_spec.nearly_identical);
  REQUIRE(sol.family.has_value());

  EquilibriumSolution back = solution_from_json(solution_json(sol));
  REQUIRE(back.players.size() == sol.players.size());
  for (size_t i = 0; i < sol.players.size(); ++i) {
    CHECK(max_abs_diff(back.players[i].value.Lambda, sol.players[i].value.Lambda) == 0.0);
    CHECK(max_abs_diff(back.players[i].value.rho, sol.players[i].value.rho) == 0.0);
    CHECK(max_abs_diff(back.players[i].measure.mu, sol.players[i].measure.mu) == 0.0);
    CHECK(max_abs_diff(back.players[i].measure.Sigma, sol.players[i].measure.Sigma) == 0.0);
    CHECK(back.players[i].lambda == sol.players[i].lambda);
    CHECK(max_abs_diff(back.players[i].feedback.K, sol.players[i].feedback.K) == 0.0);
    CHECK(max_abs_diff(back.players[i].feedback.c, sol.players[i].feedback.c) == 0.0);
  }
  REQUIRE(back.family.has_value());
  CHECK(back.family->dimension() == sol.family->dimension());
  CHECK(max_abs_diff(back.family->mu_particular, sol.family->mu_particular) == 0.0);
  CHECK(max_abs_diff(back.family->null_basis, sol.family->null_basis) == 0.0);

  // A unique solution writes no family block.
  GameSpec mf = load_game(spec_path("canonical_mfg.json"));
  EquilibriumSolution unique_sol = solve_mean_field(*mf.mean_field);
  Json doc = solution_json(unique_sol);
  CHECK(!doc.contains("family"));
  CHECK(!solution_from_json(doc).family.has_value());

  CHECK_THROWS_WITH_AS(solution_from_json(Json::object()),
                       doctest::Contains("players"), ParseError);
  Json empty{{"players", Json::array()}};
  CHECK_THROWS_AS(solution_from_json(empty), ParseError);
  Json partial = doc;
  partial["players"][0].erase("K");
  CHECK_THROWS_WITH_AS(solution_from_json(partial),
                       doctest::Contains("missing field 'K'"), ParseError);
}

TEST_CASE("condition reports export every verdict field") {
  GameSpec mf = load_game(spec_path("canonical_mfg.json"));
  Json j = report_json(check_conditions(*mf.mean_field));
  CHECK(j.at("which") == "mean_field");
  CHECK(j.at("are_solved") == true);
  CHECK(j.at("sylvester_ok") == true);
  CHECK(j.at("sylvester_residuals").is_array());
  CHECK(j.at("rank_B") == 1);
  CHECK(j.at("rank_BP") == 1);
  CHECK(j.at("rank_consistent") == true);
  CHECK(j.at("B_invertible") == true);
  CHECK(j.at("null_space_dim") == 0);
  CHECK(j.at("exists") == true);
  CHECK(j.at("unique") == true);
}

TEST_CASE("estimate and deviation documents carry their statistics") {
  PlayerEstimate pe;
  pe.mean_hat = Vector::Constant(2, 0.5);
  pe.cov_hat = Matrix::Identity(2, 2);
  pe.mean_se = Vector::Constant(2, 0.01);
  pe.cov_se = Matrix::Constant(2, 2, 0.02);
  pe.cost_hat = 3.25;
  pe.cost_se = 0.125;
  pe.variance_trend = 1.05;
  pe.ergodic_flag = true;
  ErgodicEstimate est;
  est.players.push_back(pe);

  Json je = estimate_json(est);
  REQUIRE(je.at("players").size() == 1);
  const Json& p = je.at("players").at(0);
  CHECK(p.at("cost_hat") == 3.25);
  CHECK(p.at("cost_se") == 0.125);
  CHECK(p.at("variance_trend") == 1.05);
  CHECK(p.at("ergodic") == true);
  CHECK(max_abs_diff(vector_from_json(p.at("mean_hat"), "mean_hat"), pe.mean_hat) == 0.0);
  CHECK(max_abs_diff(matrix_from_json(p.at("cov_se"), "cov_se"), pe.cov_se) == 0.0);

  DeviationReport rep;
  rep.player = 1;
  rep.all_ok = false;
  rep.warnings.push_back("deviation 'flip' destabilizes player 1; skipped");
  DeviationOutcome out;
  out.label = "stiffen";
  out.skipped = false;
  out.cost_hat = 2.0;
  out.cost_se = 0.1;
  out.lambda = 1.5;
  out.nash_ok = true;
  rep.outcomes.push_back(out);

  Json jd = deviation_json(rep);
  CHECK(jd.at("player") == 1);
  CHECK(jd.at("all_ok") == false);
  REQUIRE(jd.at("warnings").size() == 1);
  CHECK(jd.at("outcomes").at(0).at("label") == "stiffen");
  CHECK(jd.at("outcomes").at(0).at("nash_ok") == true);
}

TEST_CASE("limit studies serialize entries, verdicts and rates") {
  GameSpec spec = load_game(spec_path("consensus_mfg.json"));
  LimitStudy study = run_limit_study(*spec.mean_field, *spec.scaling, {2, 4, 8});
  Json j = study_json(study);

  CHECK(j.at("scaling").at("rule") == "consensus_perturbed");
  CHECK(j.at("limit").at("players").is_array());
  REQUIRE(j.at("entries").size() == 3);
  const Json& e0 = j.at("entries").at(0);
  CHECK(e0.at("N") == 2);
  CHECK(e0.at("solved") == true);
  CHECK(e0.contains("Sigma"));
  CHECK(e0.contains("dist_sigma"));
  CHECK(e0.contains("dist_m_sup"));
  CHECK(j.at("converged").contains("sigma"));
  CHECK(j.at("converged").contains("density"));
  CHECK(j.at("rates").at("sigma").contains("slope"));
  CHECK(j.at("rates").at("sigma").at("points") == 3);

  std::ostringstream csv;
  write_study_csv(csv, study);
  std::istringstream lines(csv.str());
  std::string line;
  REQUIRE(std::getline(lines, line));
  CHECK(line == "N,dist_sigma,dist_mu,dist_lambda,dist_Lambda,dist_m_sup,eprime_ok");
  int rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    CHECK(line.back() == '1');  // every entry here solved
  }
  CHECK(rows == 3);
}

TEST_CASE("a failed schedule entry serializes its failure reason") {
  ScalingRule rule;
  rule.kind = ScalingRule::Kind::QPerturbed;
  // The reduced mean operator crosses zero exactly at N = 4 under this rule.
  LimitStudy study = run_limit_study(crowd_like(-2.5), rule, {2, 4});
  Json j = study_json(study);
  const Json& bad = j.at("entries").at(1);
  CHECK(bad.at("N") == 4);
  CHECK(bad.at("solved") == false);
  REQUIRE(bad.contains("failure"));
  CHECK(bad.at("failure").get<std::string>().find("rank") != std::string::npos);
  CHECK(!bad.contains("Sigma"));

  std::ostringstream csv;
  write_study_csv(csv, study);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);  // header
  std::getline(lines, line);
  CHECK(line.back() == '1');
  std::getline(lines, line);
  CHECK(line.substr(0, 2) == "4,");
  CHECK(line.back() == '0');
  CHECK(line.find("nan") != std::string::npos);
}

TEST_CASE("trace csv lists every sampled state") {
  std::vector<PathSample> trace(2);
  trace[0].t = 0.0;
  trace[0].states = {Vector::Constant(2, 1.0), Vector::Constant(2, -1.0)};
  trace[1].t = 0.5;
  trace[1].states = {Vector::Constant(2, 2.0), Vector::Constant(2, -2.0)};

  std::ostringstream csv;
  write_trace_csv(csv, trace);
  std::istringstream lines(csv.str());
  std::string line;
  REQUIRE(std::getline(lines, line));
  CHECK(line == "t,player,x0,x1");
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == 4);

  std::ostringstream none;
  write_trace_csv(none, {});
  CHECK(none.str().empty());
}

TEST_CASE("file io wraps failures in parse errors") {
  CHECK_THROWS_WITH_AS(load_json_file("/nonexistent/lqmfg.json"),
                       doctest::Contains("cannot open"), ParseError);

  const std::string bad = temp_file("bad");
  {
    std::ofstream out(bad);
    out << "{ not json";
  }
  CHECK_THROWS_WITH_AS(load_json_file(bad), doctest::Contains("invalid JSON"),
                       ParseError);
  std::remove(bad.c_str());

  const std::string ok = temp_file("roundtrip");
  std::mt19937_64 gen(74);
  Matrix M = testsup::random_symmetric(gen, 3);
  save_json_file(ok, Json{{"M", matrix_json(M)}});
  Json j = load_json_file(ok);
  CHECK(max_abs_diff(matrix_from_json(j.at("M"), "M"), M) == 0.0);
  std::remove(ok.c_str());
}

TEST_CASE("the stored canonical solution matches a fresh solve") {
  Json doc = load_json_file(golden_path("canonical_solution.json"));
  EquilibriumSolution stored = solution_from_json(doc);
  GameSpec spec = load_game(spec_path("canonical_mfg.json"));
  EquilibriumSolution fresh = solve_mean_field(*spec.mean_field);

  REQUIRE(stored.players.size() == 1);
  const PlayerSolution& a = stored.players[0];
  const PlayerSolution& b = fresh.players[0];
  CHECK(max_abs_diff(a.value.Lambda, b.value.Lambda) < 1e-9);
  CHECK(max_abs_diff(a.value.rho, b.value.rho) < 1e-9);
  CHECK(max_abs_diff(a.measure.mu, b.measure.mu) < 1e-9);
  CHECK(max_abs_diff(a.measure.Sigma, b.measure.Sigma) < 1e-9);
  CHECK(a.lambda == doctest::Approx(b.lambda).epsilon(1e-9));
  CHECK(max_abs_diff(a.feedback.K, b.feedback.K) < 1e-9);
  CHECK(max_abs_diff(a.feedback.c, b.feedback.c) < 1e-9);
  CHECK(a.lambda == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
}
