#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "json.hpp"
#include "lqmfg/converge.hpp"
#include "lqmfg/games.hpp"
#include "lqmfg/simulate.hpp"
#include "lqmfg/synthesis.hpp"

// JSON game specs, solution documents and CSV exports. Matrices are
// row-major nested arrays, vectors flat arrays. Schema violations raise
// ParseError, shape mismatches DimensionError.

namespace lqmfg {

using Json = nlohmann::json;

enum class GameKind { NPerson, NearlyIdentical, MeanField, Consensus };

struct GameSpec {
  GameKind kind = GameKind::NPerson;
  std::optional<NPersonGame> n_person;
  std::optional<NearlyIdenticalGame> nearly_identical;  // also set for consensus
  std::optional<MeanFieldGame> mean_field;
  std::optional<ScalingRule> scaling;  // mean_field specs may carry one
  std::optional<Matrix> consensus_P;   // P_N of a consensus spec
};

Json matrix_json(const Matrix& M);
Json vector_json(const Vector& v);
Matrix matrix_from_json(const Json& j, const std::string& name);
Vector vector_from_json(const Json& j, const std::string& name);

GameSpec parse_game(const Json& j);
GameSpec load_game(const std::string& path);
Json game_json(const GameSpec& spec);

Json solution_json(const EquilibriumSolution& sol);
EquilibriumSolution solution_from_json(const Json& j);

Json report_json(const ConditionReport& rep);
Json residual_json(const ResidualReport& rep);
Json estimate_json(const ErgodicEstimate& est);
Json deviation_json(const DeviationReport& rep);
Json study_json(const LimitStudy& study);

// Columns: N, dist_sigma, dist_mu, dist_lambda, dist_Lambda, dist_m_sup,
// eprime_ok (0 when the conditions failed at that N).
void write_study_csv(std::ostream& os, const LimitStudy& study);
// Columns: t, player, state components.
void write_trace_csv(std::ostream& os, const std::vector<PathSample>& trace);

Json load_json_file(const std::string& path);
void save_json_file(const std::string& path, const Json& j);

}  // namespace lqmfg
