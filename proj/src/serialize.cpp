#include "lqmfg/serialize.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>

namespace lqmfg {

namespace {

const Json& require(const Json& j, const std::string& key, const std::string& ctx) {
  if (!j.is_object() || !j.contains(key)) {
    throw ParseError("missing field '" + key + "' in " + ctx);
  }
  return j.at(key);
}

double number_from(const Json& j, const std::string& name) {
  if (!j.is_number()) throw ParseError("field '" + name + "' must be a number");
  return j.get<double>();
}

int integer_from(const Json& j, const std::string& name) {
  if (!j.is_number_integer()) throw ParseError("field '" + name + "' must be an integer");
  return j.get<int>();
}

void check_square(const Matrix& M, int d, const std::string& name) {
  if (M.rows() != d || M.cols() != d) {
    throw DimensionError("matrix '" + name + "' must be " + std::to_string(d) + "x" +
                         std::to_string(d));
  }
}

void check_length(const Vector& v, int d, const std::string& name) {
  if (v.size() != d) {
    throw DimensionError("vector '" + name + "' must have length " + std::to_string(d));
  }
}

ScalingRule scaling_from_json(const Json& j) {
  ScalingRule rule;
  const std::string name = require(j, "rule", "scaling").get<std::string>();
  if (name == "default")
    rule.kind = ScalingRule::Kind::Default;
  else if (name == "q_perturbed")
    rule.kind = ScalingRule::Kind::QPerturbed;
  else if (name == "consensus_perturbed")
    rule.kind = ScalingRule::Kind::ConsensusPerturbed;
  else if (name == "constant_b")
    rule.kind = ScalingRule::Kind::ConstantB;
  else
    throw ParseError("unknown scaling rule '" + name + "'");
  if (j.contains("hetero_C")) rule.hetero_C = number_from(j.at("hetero_C"), "hetero_C");
  return rule;
}

Json scaling_json(const ScalingRule& rule) {
  const char* name = "default";
  switch (rule.kind) {
    case ScalingRule::Kind::Default: name = "default"; break;
    case ScalingRule::Kind::QPerturbed: name = "q_perturbed"; break;
    case ScalingRule::Kind::ConsensusPerturbed: name = "consensus_perturbed"; break;
    case ScalingRule::Kind::ConstantB: name = "constant_b"; break;
  }
  return Json{{"rule", name}, {"hetero_C", rule.hetero_C}};
}

// C and D of a nearly identical spec: one shared matrix or one per player.
std::vector<Matrix> per_player_matrices(const Json& j, int N, int d, const std::string& name) {
  std::vector<Matrix> out;
  if (j.is_array() && !j.empty() && j.at(0).is_array() && !j.at(0).empty() &&
      j.at(0).at(0).is_array()) {
    if (static_cast<int>(j.size()) != N) {
      throw DimensionError("field '" + name + "': expected one matrix per player");
    }
    for (int i = 0; i < N; ++i) {
      out.push_back(matrix_from_json(j.at(i), name));
      check_square(out.back(), d, name);
    }
  } else {
    Matrix shared = matrix_from_json(j, name);
    check_square(shared, d, name);
    out.assign(static_cast<size_t>(N), shared);
  }
  return out;
}

Json rate_json(const RateFit& fit) {
  return Json{{"slope", fit.slope}, {"intercept", fit.intercept}, {"points", fit.points}};
}

}  // namespace

Json matrix_json(const Matrix& M) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json vector_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Matrix matrix_from_json(const Json& j, const std::string& name) {
  if (!j.is_array() || j.empty()) {
    throw ParseError("field '" + name + "' must be a non-empty array of rows");
  }
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  if (!j.at(0).is_array() || j.at(0).empty()) {
    throw ParseError("field '" + name + "' must contain array rows");
  }
  const Eigen::Index cols = static_cast<Eigen::Index>(j.at(0).size());
  Matrix M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Json& row = j.at(static_cast<size_t>(i));
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ParseError("field '" + name + "' has ragged rows");
    }
    for (Eigen::Index k = 0; k < cols; ++k) {
      M(i, k) = number_from(row.at(static_cast<size_t>(k)), name);
    }
  }
  return M;
}

Vector vector_from_json(const Json& j, const std::string& name) {
  if (!j.is_array()) throw ParseError("field '" + name + "' must be an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v(i) = number_from(j.at(static_cast<size_t>(i)), name);
  }
  return v;
}

GameSpec parse_game(const Json& j) {
  GameSpec spec;
  const std::string kind = require(j, "kind", "game spec").get<std::string>();
  const int d = integer_from(require(j, "d", "game spec"), "d");
  if (d < 1) throw DimensionError("d must be positive");

  if (kind == "n_person") {
    spec.kind = GameKind::NPerson;
    NPersonGame g;
    g.N = integer_from(require(j, "N", "game spec"), "N");
    g.d = d;
    if (g.N < 2) throw DimensionError("n_person games need N >= 2");
    const Json& players = require(j, "players", "game spec");
    if (!players.is_array() || static_cast<int>(players.size()) != g.N) {
      throw DimensionError("'players' must list exactly N entries");
    }
    for (int i = 0; i < g.N; ++i) {
      const Json& p = players.at(static_cast<size_t>(i));
      const std::string ctx = "player " + std::to_string(i);
      g.A.push_back(matrix_from_json(require(p, "A", ctx), "A"));
      g.sigma.push_back(matrix_from_json(require(p, "sigma", ctx), "sigma"));
      g.R.push_back(matrix_from_json(require(p, "R", ctx), "R"));
      check_square(g.A.back(), d, "A");
      check_square(g.sigma.back(), d, "sigma");
      check_square(g.R.back(), d, "R");

      const Json& qb = require(p, "Q_blocks", ctx);
      if (!qb.is_array() || static_cast<int>(qb.size()) != g.N) {
        throw DimensionError("'Q_blocks' must have N block rows");
      }
      Matrix Q(g.N * d, g.N * d);
      for (int r = 0; r < g.N; ++r) {
        const Json& qrow = qb.at(static_cast<size_t>(r));
        if (!qrow.is_array() || static_cast<int>(qrow.size()) != g.N) {
          throw DimensionError("'Q_blocks' must have N block columns");
        }
        for (int c = 0; c < g.N; ++c) {
          Matrix block = matrix_from_json(qrow.at(static_cast<size_t>(c)), "Q_blocks");
          check_square(block, d, "Q_blocks");
          Q.block(r * d, c * d, d, d) = block;
        }
      }
      g.Q.push_back(Q);

      const Json& xb = require(p, "Xbar", ctx);
      if (!xb.is_array() || static_cast<int>(xb.size()) != g.N) {
        throw DimensionError("'Xbar' must list N blocks");
      }
      Vector xbar(g.N * d);
      for (int r = 0; r < g.N; ++r) {
        Vector block = vector_from_json(xb.at(static_cast<size_t>(r)), "Xbar");
        check_length(block, d, "Xbar");
        xbar.segment(r * d, d) = block;
      }
      g.Xbar.push_back(xbar);
    }
    spec.n_person = g;
    return spec;
  }

  if (kind == "nearly_identical") {
    spec.kind = GameKind::NearlyIdentical;
    NearlyIdenticalGame g;
    g.N = integer_from(require(j, "N", "game spec"), "N");
    g.d = d;
    if (g.N < 2) throw DimensionError("nearly identical games need N >= 2");
    g.A = matrix_from_json(require(j, "A", "game spec"), "A");
    g.sigma = matrix_from_json(require(j, "sigma", "game spec"), "sigma");
    g.R = matrix_from_json(require(j, "R", "game spec"), "R");
    g.Q = matrix_from_json(require(j, "Q", "game spec"), "Q");
    g.B = matrix_from_json(require(j, "B", "game spec"), "B");
    check_square(g.A, d, "A");
    check_square(g.sigma, d, "sigma");
    check_square(g.R, d, "R");
    check_square(g.Q, d, "Q");
    check_square(g.B, d, "B");
    g.C = per_player_matrices(require(j, "C", "game spec"), g.N, d, "C");
    g.D = per_player_matrices(require(j, "D", "game spec"), g.N, d, "D");
    g.H = vector_from_json(require(j, "H", "game spec"), "H");
    g.Delta = vector_from_json(require(j, "Delta", "game spec"), "Delta");
    check_length(g.H, d, "H");
    check_length(g.Delta, d, "Delta");
    spec.nearly_identical = g;
    return spec;
  }

  if (kind == "mean_field") {
    spec.kind = GameKind::MeanField;
    MeanFieldGame g;
    g.d = d;
    g.A = matrix_from_json(require(j, "A", "game spec"), "A");
    const Matrix sigma = matrix_from_json(require(j, "sigma", "game spec"), "sigma");
    g.R = matrix_from_json(require(j, "R", "game spec"), "R");
    g.Qhat = matrix_from_json(require(j, "Qhat", "game spec"), "Qhat");
    g.Bhat = matrix_from_json(require(j, "Bhat", "game spec"), "Bhat");
    g.Chat = matrix_from_json(require(j, "Chat", "game spec"), "Chat");
    g.Dhat = matrix_from_json(require(j, "Dhat", "game spec"), "Dhat");
    check_square(g.A, d, "A");
    check_square(sigma, d, "sigma");
    check_square(g.R, d, "R");
    check_square(g.Qhat, d, "Qhat");
    check_square(g.Bhat, d, "Bhat");
    check_square(g.Chat, d, "Chat");
    check_square(g.Dhat, d, "Dhat");
    g.nu = symmetrized(0.5 * sigma * sigma.transpose());
    g.H = vector_from_json(require(j, "H", "game spec"), "H");
    g.Delta = vector_from_json(require(j, "Delta", "game spec"), "Delta");
    check_length(g.H, d, "H");
    check_length(g.Delta, d, "Delta");
    spec.mean_field = g;
    if (j.contains("scaling")) spec.scaling = scaling_from_json(j.at("scaling"));
    return spec;
  }

  if (kind == "consensus") {
    spec.kind = GameKind::Consensus;
    const int N = integer_from(require(j, "N", "game spec"), "N");
    if (N < 2) throw DimensionError("consensus games need N >= 2");
    const Matrix A = matrix_from_json(require(j, "A", "game spec"), "A");
    const Matrix sigma = matrix_from_json(require(j, "sigma", "game spec"), "sigma");
    const Matrix R = matrix_from_json(require(j, "R", "game spec"), "R");
    const Matrix P_N = matrix_from_json(require(j, "P_N", "game spec"), "P_N");
    check_square(A, d, "A");
    check_square(sigma, d, "sigma");
    check_square(R, d, "R");
    check_square(P_N, d, "P_N");
    spec.consensus_P = P_N;
    spec.nearly_identical = build_consensus_game(N, P_N, A, sigma, R);
    return spec;
  }

  throw ParseError("unknown game kind '" + kind + "'");
}

GameSpec load_game(const std::string& path) { return parse_game(load_json_file(path)); }

Json game_json(const GameSpec& spec) {
  Json j;
  switch (spec.kind) {
    case GameKind::NPerson: {
      const NPersonGame& g = *spec.n_person;
      j["kind"] = "n_person";
      j["N"] = g.N;
      j["d"] = g.d;
      Json players = Json::array();
      for (int i = 0; i < g.N; ++i) {
        Json p;
        p["A"] = matrix_json(g.A[i]);
        p["sigma"] = matrix_json(g.sigma[i]);
        p["R"] = matrix_json(g.R[i]);
        Json qb = Json::array();
        for (int r = 0; r < g.N; ++r) {
          Json qrow = Json::array();
          for (int c = 0; c < g.N; ++c) qrow.push_back(matrix_json(g.q_block(i, r, c)));
          qb.push_back(std::move(qrow));
        }
        p["Q_blocks"] = std::move(qb);
        Json xb = Json::array();
        for (int r = 0; r < g.N; ++r) xb.push_back(vector_json(g.xbar_block(i, r)));
        p["Xbar"] = std::move(xb);
        players.push_back(std::move(p));
      }
      j["players"] = std::move(players);
      break;
    }
    case GameKind::NearlyIdentical: {
      const NearlyIdenticalGame& g = *spec.nearly_identical;
      j["kind"] = "nearly_identical";
      j["N"] = g.N;
      j["d"] = g.d;
      j["A"] = matrix_json(g.A);
      j["sigma"] = matrix_json(g.sigma);
      j["R"] = matrix_json(g.R);
      j["Q"] = matrix_json(g.Q);
      j["B"] = matrix_json(g.B);
      Json C = Json::array(), D = Json::array();
      for (const auto& Ci : g.C) C.push_back(matrix_json(Ci));
      for (const auto& Di : g.D) D.push_back(matrix_json(Di));
      j["C"] = std::move(C);
      j["D"] = std::move(D);
      j["H"] = vector_json(g.H);
      j["Delta"] = vector_json(g.Delta);
      break;
    }
    case GameKind::MeanField: {
      const MeanFieldGame& g = *spec.mean_field;
      j["kind"] = "mean_field";
      j["d"] = g.d;
      j["A"] = matrix_json(g.A);
      j["sigma"] = matrix_json(g.sigma());
      j["R"] = matrix_json(g.R);
      j["Qhat"] = matrix_json(g.Qhat);
      j["Bhat"] = matrix_json(g.Bhat);
      j["Chat"] = matrix_json(g.Chat);
      j["Dhat"] = matrix_json(g.Dhat);
      j["H"] = vector_json(g.H);
      j["Delta"] = vector_json(g.Delta);
      if (spec.scaling) j["scaling"] = scaling_json(*spec.scaling);
      break;
    }
    case GameKind::Consensus: {
      const NearlyIdenticalGame& g = *spec.nearly_identical;
      j["kind"] = "consensus";
      j["N"] = g.N;
      j["d"] = g.d;
      j["A"] = matrix_json(g.A);
      j["sigma"] = matrix_json(g.sigma);
      j["R"] = matrix_json(g.R);
      j["P_N"] = matrix_json(*spec.consensus_P);
      break;
    }
  }
  return j;
}

Json solution_json(const EquilibriumSolution& sol) {
  Json j;
  Json players = Json::array();
  for (const auto& ps : sol.players) {
    Json p;
    p["Lambda"] = matrix_json(ps.value.Lambda);
    p["rho"] = vector_json(ps.value.rho);
    p["mu"] = vector_json(ps.measure.mu);
    p["Sigma"] = matrix_json(ps.measure.Sigma);
    p["lambda"] = ps.lambda;
    p["K"] = matrix_json(ps.feedback.K);
    p["c"] = vector_json(ps.feedback.c);
    players.push_back(std::move(p));
  }
  j["players"] = std::move(players);
  if (sol.family) {
    j["family"] = Json{{"dimension", sol.family->dimension()},
                       {"mu_particular", vector_json(sol.family->mu_particular)},
                       {"basis", matrix_json(sol.family->null_basis)}};
  }
  return j;
}

EquilibriumSolution solution_from_json(const Json& j) {
  EquilibriumSolution sol;
  const Json& players = require(j, "players", "solution");
  if (!players.is_array() || players.empty()) {
    throw ParseError("solution 'players' must be a non-empty array");
  }
  for (const auto& p : players) {
    PlayerSolution ps;
    ps.value.Lambda = matrix_from_json(require(p, "Lambda", "solution player"), "Lambda");
    ps.value.rho = vector_from_json(require(p, "rho", "solution player"), "rho");
    ps.measure.mu = vector_from_json(require(p, "mu", "solution player"), "mu");
    ps.measure.Sigma = matrix_from_json(require(p, "Sigma", "solution player"), "Sigma");
    ps.lambda = number_from(require(p, "lambda", "solution player"), "lambda");
    ps.feedback.K = matrix_from_json(require(p, "K", "solution player"), "K");
    ps.feedback.c = vector_from_json(require(p, "c", "solution player"), "c");
    sol.players.push_back(std::move(ps));
  }
  if (j.contains("family")) {
    const Json& f = j.at("family");
    SolutionFamily fam;
    fam.mu_particular = vector_from_json(require(f, "mu_particular", "family"), "mu_particular");
    fam.null_basis = matrix_from_json(require(f, "basis", "family"), "basis");
    sol.family = fam;
  }
  return sol;
}

Json report_json(const ConditionReport& rep) {
  const char* which = rep.which == ConditionKind::NPerson ? "n_person"
                      : rep.which == ConditionKind::NearlyIdentical ? "nearly_identical"
                                                                    : "mean_field";
  return Json{{"which", which},
              {"are_solved", rep.are_solved},
              {"sylvester_residuals", rep.sylvester_residuals},
              {"sylvester_ok", rep.sylvester_ok},
              {"rank_B", rep.rank_B},
              {"rank_BP", rep.rank_BP},
              {"rank_consistent", rep.rank_consistent},
              {"B_invertible", rep.B_invertible},
              {"null_space_dim", rep.null_space_dim},
              {"exists", rep.verdict_exists},
              {"unique", rep.verdict_unique}};
}

Json residual_json(const ResidualReport& rep) {
  return Json{{"hjb_max", rep.hjb_max}, {"kfp_max", rep.kfp_max}, {"mass_error", rep.mass_error}};
}

Json estimate_json(const ErgodicEstimate& est) {
  Json players = Json::array();
  for (const auto& pe : est.players) {
    players.push_back(Json{{"mean_hat", vector_json(pe.mean_hat)},
                           {"cov_hat", matrix_json(pe.cov_hat)},
                           {"mean_se", vector_json(pe.mean_se)},
                           {"cov_se", matrix_json(pe.cov_se)},
                           {"cost_hat", pe.cost_hat},
                           {"cost_se", pe.cost_se},
                           {"variance_trend", pe.variance_trend},
                           {"ergodic", pe.ergodic_flag}});
  }
  return Json{{"players", std::move(players)}};
}

Json deviation_json(const DeviationReport& rep) {
  Json outcomes = Json::array();
  for (const auto& o : rep.outcomes) {
    outcomes.push_back(Json{{"label", o.label},
                            {"skipped", o.skipped},
                            {"cost_hat", o.cost_hat},
                            {"cost_se", o.cost_se},
                            {"lambda", o.lambda},
                            {"nash_ok", o.nash_ok}});
  }
  return Json{{"player", rep.player},
              {"outcomes", std::move(outcomes)},
              {"warnings", rep.warnings},
              {"all_ok", rep.all_ok}};
}

Json study_json(const LimitStudy& study) {
  Json entries = Json::array();
  for (const auto& e : study.entries) {
    Json je{{"N", e.N}, {"solved", e.solved}};
    if (e.solved) {
      je["Sigma"] = matrix_json(e.Sigma);
      je["mu"] = vector_json(e.mu);
      je["lambdas"] = e.lambdas;
      je["dist_sigma"] = e.dist_sigma;
      je["dist_mu"] = e.dist_mu;
      je["dist_lambda"] = e.dist_lambda;
      je["dist_Lambda"] = e.dist_Lambda;
      je["dist_m_sup"] = e.dist_density;
    } else {
      je["failure"] = e.failure;
    }
    entries.push_back(std::move(je));
  }
  return Json{{"scaling", scaling_json(study.rule)},
              {"limit", solution_json(study.limit)},
              {"entries", std::move(entries)},
              {"converged",
               Json{{"sigma", study.converged_sigma},
                    {"mu", study.converged_mu},
                    {"lambda", study.converged_lambda},
                    {"Lambda", study.converged_Lambda},
                    {"density", study.converged_density}}},
              {"rates",
               Json{{"sigma", rate_json(study.rate_sigma)},
                    {"mu", rate_json(study.rate_mu)},
                    {"lambda", rate_json(study.rate_lambda)},
                    {"Lambda", rate_json(study.rate_Lambda)},
                    {"density", rate_json(study.rate_density)}}}};
}

void write_study_csv(std::ostream& os, const LimitStudy& study) {
  os << "N,dist_sigma,dist_mu,dist_lambda,dist_Lambda,dist_m_sup,eprime_ok\n";
  os << std::setprecision(17);
  for (const auto& e : study.entries) {
    os << e.N << ',' << e.dist_sigma << ',' << e.dist_mu << ',' << e.dist_lambda << ','
       << e.dist_Lambda << ',' << e.dist_density << ',' << (e.solved ? 1 : 0) << '\n';
  }
}

void write_trace_csv(std::ostream& os, const std::vector<PathSample>& trace) {
  if (trace.empty()) return;
  const Eigen::Index d = trace.front().states.front().size();
  os << "t,player";
  for (Eigen::Index k = 0; k < d; ++k) os << ",x" << k;
  os << '\n' << std::setprecision(17);
  for (const auto& sample : trace) {
    for (size_t i = 0; i < sample.states.size(); ++i) {
      os << sample.t << ',' << i;
      for (Eigen::Index k = 0; k < d; ++k) os << ',' << sample.states[i](k);
      os << '\n';
    }
  }
}

Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ParseError("invalid JSON in '" + path + "': " + e.what());
  }
}

void save_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

}  // namespace lqmfg
