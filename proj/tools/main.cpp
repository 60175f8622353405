#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lqmfg/converge.hpp"
#include "lqmfg/serialize.hpp"
#include "lqmfg/simulate.hpp"
#include "lqmfg/symmetrize.hpp"
#include "lqmfg/synthesis.hpp"

namespace {

using namespace lqmfg;

// Exit codes shared by all commands; command-specific codes are documented
// at each cmd_* function.
constexpr int kExitParse = 2;
constexpr int kExitDimension = 3;

void emit(const Json& j, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << j.dump(2) << std::endl;
  } else {
    save_json_file(out_path, j);
  }
}

// 0 exists and unique, 10 exists only, 20 not exists; report on stdout.
int cmd_check(const std::string& spec_path) {
  const GameSpec spec = load_game(spec_path);
  ConditionReport rep;
  try {
    switch (spec.kind) {
      case GameKind::NPerson: rep = check_conditions(*spec.n_person); break;
      case GameKind::MeanField: rep = check_conditions(*spec.mean_field); break;
      default: rep = check_conditions(*spec.nearly_identical); break;
    }
  } catch (const Error& e) {
    // Structural failures (ARE not solvable, assumptions violated) count as
    // non-existence of a quadratic-Gaussian solution.
    std::cout << Json{{"exists", false}, {"unique", false}, {"error", e.what()}}.dump(2)
              << std::endl;
    return 20;
  }
  std::cout << report_json(rep).dump(2) << std::endl;
  if (!rep.verdict_exists) return 20;
  return rep.verdict_unique ? 0 : 10;
}

EquilibriumSolution solve_spec(const GameSpec& spec) {
  switch (spec.kind) {
    case GameKind::NPerson: return solve_n_person(*spec.n_person);
    case GameKind::MeanField: return solve_mean_field(*spec.mean_field);
    default: return solve_nearly_identical(*spec.nearly_identical);
  }
}

ResidualReport residuals_for(const GameSpec& spec, const EquilibriumSolution& sol) {
  switch (spec.kind) {
    case GameKind::NPerson: return hjb_kfp_residual(*spec.n_person, sol);
    case GameKind::MeanField: return hjb_kfp_residual(*spec.mean_field, sol);
    default: return hjb_kfp_residual(*spec.nearly_identical, sol);
  }
}

// 0 solved, 20 conditions fail, 4 bad family member selection.
int cmd_solve(const std::string& spec_path, const std::string& out_path, int family_member_k,
              bool min_norm) {
  const GameSpec spec = load_game(spec_path);
  EquilibriumSolution sol;
  try {
    sol = solve_spec(spec);
  } catch (const ConditionsFailError& e) {
    std::cerr << "conditions fail: " << e.what() << std::endl;
    return 20;
  }

  if (family_member_k >= 0) {
    if (!sol.family || family_member_k >= sol.family->dimension()) {
      std::cerr << "family member " << family_member_k << " out of range" << std::endl;
      return 4;
    }
    Vector coeffs = Vector::Zero(sol.family->dimension());
    coeffs(family_member_k) = 1.0;
    switch (spec.kind) {
      case GameKind::NPerson: sol = family_member(*spec.n_person, sol, coeffs); break;
      case GameKind::MeanField: sol = family_member(*spec.mean_field, sol, coeffs); break;
      default: sol = family_member(*spec.nearly_identical, sol, coeffs); break;
    }
  } else if (min_norm) {
    sol.family.reset();  // keep only the minimum-norm member
  }

  Json out = solution_json(sol);
  ConditionReport rep;
  switch (spec.kind) {
    case GameKind::NPerson: rep = check_conditions(*spec.n_person); break;
    case GameKind::MeanField: rep = check_conditions(*spec.mean_field); break;
    default: rep = check_conditions(*spec.nearly_identical); break;
  }
  out["diagnostics"] =
      Json{{"residuals", residual_json(residuals_for(spec, sol))}, {"conditions", report_json(rep)}};
  emit(out, out_path);
  return 0;
}

std::vector<Deviation> parse_deviations(const std::vector<std::string>& raw, int d, int n_players,
                                        int& player_out) {
  std::vector<Deviation> devs;
  player_out = -1;
  for (const auto& s : raw) {
    std::istringstream in(s);
    std::string p_str, e_str, delta_str;
    if (!std::getline(in, p_str, ':') || !std::getline(in, e_str, ':') ||
        !std::getline(in, delta_str)) {
      throw ParseError("--deviate expects player:entry:delta, got '" + s + "'");
    }
    int player = 0, entry = 0;
    double delta = 0.0;
    try {
      player = std::stoi(p_str);
      entry = std::stoi(e_str);
      delta = std::stod(delta_str);
    } catch (const std::exception&) {
      throw ParseError("--deviate expects numeric player:entry:delta, got '" + s + "'");
    }
    if (player < 0 || player >= n_players) throw DimensionError("--deviate player out of range");
    if (entry < 0 || entry >= d * d) throw DimensionError("--deviate entry out of range");
    if (player_out >= 0 && player_out != player) {
      throw ParseError("--deviate entries must all target one player");
    }
    player_out = player;
    Deviation dev;
    dev.dK = Matrix::Zero(d, d);
    dev.dK(entry / d, entry % d) = delta;
    dev.label = s;
    devs.push_back(dev);
  }
  return devs;
}

// 0 ran, 30 unstable closed loop, 31 numerical blow-up.
int cmd_simulate(const std::string& spec_path, const std::string& solution_path,
                 const SimConfig& cfg, const std::vector<std::string>& deviate,
                 const std::string& trace_path, const std::string& out_path) {
  const GameSpec spec = load_game(spec_path);
  const EquilibriumSolution sol = solution_from_json(load_json_file(solution_path));

  SimConfig run_cfg = cfg;
  run_cfg.capture_paths = !trace_path.empty();

  try {
    ErgodicEstimate est;
    Json checks = Json::array();
    std::optional<DeviationReport> dev_rep;

    if (spec.kind == GameKind::MeanField) {
      const MeanFieldGame& g = *spec.mean_field;
      if (sol.players.empty()) throw DimensionError("solution has no players");
      const PlayerSolution& ps = sol.players.front();
      est = simulate_mean_field(g, ps.feedback, ps.measure.moments(), run_cfg);
      if (!deviate.empty()) {
        int player = 0;
        const auto devs = parse_deviations(deviate, g.d, 1, player);
        dev_rep = nash_deviation_test(g, sol, devs, cfg);
      }
    } else {
      const NPersonGame g = spec.kind == GameKind::NPerson ? *spec.n_person
                                                           : to_n_person(*spec.nearly_identical);
      if (static_cast<int>(sol.players.size()) != g.N) {
        throw DimensionError("solution player count does not match the game");
      }
      std::vector<AffineFeedback> fbs;
      for (const auto& ps : sol.players) fbs.push_back(ps.feedback);
      est = simulate_n_person(g, fbs, run_cfg);
      if (!deviate.empty()) {
        int player = 0;
        const auto devs = parse_deviations(deviate, g.d, g.N, player);
        dev_rep = nash_deviation_test(g, sol, player, devs, cfg);
      }
    }

    for (size_t i = 0; i < est.players.size(); ++i) {
      const PlayerEstimate& pe = est.players[i];
      const PlayerSolution& ps = sol.players[i];
      const Matrix cov_target = ps.measure.covariance();
      const bool mean_ok =
          ((pe.mean_hat - ps.measure.mu).cwiseAbs().array() <=
           (3.0 * pe.mean_se.array() + 1e-12)).all();
      const bool cov_ok = ((pe.cov_hat - cov_target).cwiseAbs().array() <=
                           (3.0 * pe.cov_se.array() + 1e-12)).all();
      const bool cost_ok = std::abs(pe.cost_hat - ps.lambda) <= 3.0 * pe.cost_se + 1e-12;
      checks.push_back(Json{{"player", i},
                            {"mean_ok", mean_ok},
                            {"cov_ok", cov_ok},
                            {"cost_ok", cost_ok},
                            {"ergodic", pe.ergodic_flag}});
    }

    Json out = estimate_json(est);
    out["checks"] = std::move(checks);
    if (dev_rep) out["deviations"] = deviation_json(*dev_rep);
    if (!trace_path.empty()) {
      std::ofstream tf(trace_path);
      if (!tf) throw ParseError("cannot write '" + trace_path + "'");
      write_trace_csv(tf, est.trace);
    }
    emit(out, out_path);
    return 0;
  } catch (const UnstableError& e) {
    std::cerr << e.what() << std::endl;
    return 30;
  } catch (const BlowupError& e) {
    std::cerr << e.what() << std::endl;
    return 31;
  }
}

// 0 converged, 40 limit conditions fail, 41 coefficient columns did not
// converge along N_list.
int cmd_limit(const std::string& spec_path, const std::string& n_csv, const std::string& rule_name,
              double hetero_C, const std::string& out_path, const std::string& csv_path) {
  const GameSpec spec = load_game(spec_path);
  if (spec.kind != GameKind::MeanField) {
    throw ParseError("limit studies need a mean_field spec");
  }
  ScalingRule rule = spec.scaling.value_or(ScalingRule{});
  if (!rule_name.empty()) {
    if (rule_name == "default")
      rule.kind = ScalingRule::Kind::Default;
    else if (rule_name == "q_perturbed")
      rule.kind = ScalingRule::Kind::QPerturbed;
    else if (rule_name == "consensus_perturbed")
      rule.kind = ScalingRule::Kind::ConsensusPerturbed;
    else if (rule_name == "constant_b")
      rule.kind = ScalingRule::Kind::ConstantB;
    else
      throw ParseError("unknown scaling rule '" + rule_name + "'");
  }
  if (hetero_C != 0.0) rule.hetero_C = hetero_C;

  std::vector<int> Ns;
  {
    std::istringstream in(n_csv);
    std::string tok;
    while (std::getline(in, tok, ',')) {
      if (tok.empty()) continue;
      try {
        Ns.push_back(std::stoi(tok));
      } catch (const std::exception&) {
        throw ParseError("--N expects a comma-separated integer list");
      }
    }
  }
  if (Ns.empty()) throw ParseError("--N list is empty");

  LimitStudy study;
  try {
    study = run_limit_study(*spec.mean_field, rule, Ns);
  } catch (const DimensionError&) {
    throw;  // bad N list and shape mismatches are usage errors
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    std::cerr << "limit solve failed: " << e.what() << std::endl;
    return 40;
  }
  Json out = study_json(study);
  emit(out, out_path);
  if (!csv_path.empty()) {
    std::ofstream cf(csv_path);
    if (!cf) throw ParseError("cannot write '" + csv_path + "'");
    write_study_csv(cf, study);
  }
  return study.coefficients_converged() ? 0 : 41;
}

// Builds, solves and verifies a small consensus game end to end.
int cmd_consensus_demo(int N, int d, bool kernel, const std::string& out_dir) {
  Matrix A = Matrix::Identity(d, d);
  if (kernel) {
    for (int k = 0; k < d; ++k) A(k, k) = static_cast<double>(k);  // diag(0, 1, ...)
  }
  const Matrix P = Matrix::Identity(d, d);
  const Matrix sigma = Matrix::Identity(d, d);
  const Matrix R = Matrix::Identity(d, d);
  const NearlyIdenticalGame g = build_consensus_game(N, P, A, sigma, R);

  EquilibriumSolution sol;
  try {
    sol = solve_nearly_identical(g);
  } catch (const ConditionsFailError& e) {
    std::cerr << "conditions fail: " << e.what() << std::endl;
    return 20;
  }
  const ResidualReport res = hjb_kfp_residual(g, sol);

  SimConfig cfg;
  cfg.T = 100.0;
  cfg.replicas = 8;
  std::vector<AffineFeedback> fbs;
  for (const auto& ps : sol.players) fbs.push_back(ps.feedback);
  const ErgodicEstimate est = simulate_n_person(to_n_person(g), fbs, cfg);

  Json out = solution_json(sol);
  out["residuals"] = residual_json(res);
  out["estimate"] = estimate_json(est);
  if (sol.family) {
    std::cout << "solution family of dimension " << sol.family->dimension()
              << " (kernel of the drift)" << std::endl;
  }
  std::cout << "lambda[0] = " << sol.players.front().lambda
            << ", simulated cost = " << est.players.front().cost_hat << " +- "
            << est.players.front().cost_se << std::endl;
  if (!out_dir.empty()) {
    GameSpec spec;
    spec.kind = GameKind::Consensus;
    spec.nearly_identical = g;
    spec.consensus_P = P;
    save_json_file(out_dir + "/consensus_game.json", game_json(spec));
    save_json_file(out_dir + "/consensus_solution.json", out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quadratic-Gaussian equilibria of ergodic linear-quadratic games"};
  app.require_subcommand(1);

  std::string spec_path, solution_path, out_path, trace_path, csv_path;
  std::string n_csv = "2,4,8,16,32,64,128";
  std::string rule_name;
  double hetero_C = 0.0;
  int family_k = -1;
  bool min_norm = false;
  SimConfig cfg;
  std::vector<std::string> deviate;
  int demo_N = 3, demo_d = 2;
  bool demo_kernel = false;
  std::string demo_out;

  auto* check = app.add_subcommand("check", "Existence/uniqueness report for a game spec");
  check->add_option("spec", spec_path, "game spec JSON")->required();

  auto* solve = app.add_subcommand("solve", "Synthesize the quadratic-Gaussian equilibrium");
  solve->add_option("spec", spec_path, "game spec JSON")->required();
  solve->add_option("-o,--out", out_path, "solution JSON path (default stdout)");
  solve->add_option("--family-member", family_k, "select unit-coefficient member k of the family");
  solve->add_flag("--min-norm", min_norm, "emit only the minimum-norm member");

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo validation of a solution");
  simulate->add_option("spec", spec_path, "game spec JSON")->required();
  simulate->add_option("solution", solution_path, "solution JSON from solve")->required();
  simulate->add_option("--dt", cfg.dt, "time step");
  simulate->add_option("-T,--horizon", cfg.T, "horizon");
  simulate->add_option("--replicas", cfg.replicas, "independent replicas");
  simulate->add_option("--seed", cfg.seed, "master seed");
  simulate->add_option("--burn-in", cfg.burn_in, "fraction of the horizon discarded");
  simulate->add_option("--threads", cfg.threads, "worker threads (0: LQMFG_THREADS)");
  simulate->add_option("--deviate", deviate, "player:entry:delta feedback perturbation");
  simulate->add_option("--trace", trace_path, "CSV path for a sample path");
  simulate->add_option("-o,--out", out_path, "estimate JSON path (default stdout)");

  auto* limit = app.add_subcommand("limit", "Large-population limit study");
  limit->add_option("spec", spec_path, "mean-field spec JSON")->required();
  limit->add_option("--N", n_csv, "comma-separated population sizes");
  limit->add_option("--rule", rule_name,
                    "scaling rule: default, q_perturbed, consensus_perturbed, constant_b");
  limit->add_option("--hetero-C", hetero_C, "heterogeneity amplitude for C_i");
  limit->add_option("-o,--out", out_path, "study JSON path (default stdout)");
  limit->add_option("--csv", csv_path, "distance table CSV path");

  auto* demo = app.add_subcommand("consensus-demo", "Solve and simulate a consensus game");
  demo->add_option("-N,--players", demo_N, "number of players");
  demo->add_option("-d,--dim", demo_d, "state dimension");
  demo->add_flag("--kernel", demo_kernel, "use A = diag(0,1,...) so means form a family");
  demo->add_option("--out", demo_out, "directory for spec/solution JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*check) return cmd_check(spec_path);
    if (*solve) return cmd_solve(spec_path, out_path, family_k, min_norm);
    if (*simulate) return cmd_simulate(spec_path, solution_path, cfg, deviate, trace_path, out_path);
    if (*limit) return cmd_limit(spec_path, n_csv, rule_name, hetero_C, out_path, csv_path);
    if (*demo) return cmd_consensus_demo(demo_N, demo_d, demo_kernel, demo_out);
  } catch (const ParseError& e) {
    std::cerr << e.what() << std::endl;
    return kExitParse;
  } catch (const DimensionError& e) {
    std::cerr << e.what() << std::endl;
    return kExitDimension;
  } catch (const Error& e) {
    std::cerr << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << e.what() << std::endl;
    return 1;
  }
  return 0;
}
