#include "lqmfg/games.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <string>

namespace lqmfg {

namespace {

bool close(const Matrix& a, const Matrix& b) {
  const double scale = 1.0 + std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
  return (a - b).cwiseAbs().maxCoeff() <= 1e-9 * scale;
}

bool close(const Vector& a, const Vector& b) {
  const double scale = 1.0 + std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
  return (a - b).cwiseAbs().maxCoeff() <= 1e-9 * scale;
}

bool invertible_sigma(const Matrix& sigma) {
  return sigma.rows() == sigma.cols() && numerical_rank(sigma) == sigma.rows();
}

std::string block_name(int i, int j, int k) {
  return "player " + std::to_string(i) + " block (" + std::to_string(j) + "," + std::to_string(k) + ")";
}

void check_player_shapes(const NPersonGame& g) {
  const auto N = static_cast<size_t>(g.N);
  if (g.N < 2 || g.d < 1) throw DimensionError("n-person game: need N >= 2 and d >= 1");
  if (g.A.size() != N || g.sigma.size() != N || g.R.size() != N || g.Q.size() != N ||
      g.Xbar.size() != N) {
    throw DimensionError("n-person game: per-player array has wrong length");
  }
  for (int i = 0; i < g.N; ++i) {
    const Eigen::Index d = g.d, nd = static_cast<Eigen::Index>(g.N) * g.d;
    if (g.A[i].rows() != d || g.A[i].cols() != d || g.sigma[i].rows() != d ||
        g.sigma[i].cols() != d || g.R[i].rows() != d || g.R[i].cols() != d) {
      throw DimensionError("n-person game: player matrix is not d x d");
    }
    if (g.Q[i].rows() != nd || g.Q[i].cols() != nd || g.Xbar[i].size() != nd) {
      throw DimensionError("n-person game: coupling data is not Nd-sized");
    }
  }
}

}  // namespace

Matrix NPersonGame::nu(int i) const { return 0.5 * sigma[i] * sigma[i].transpose(); }

Matrix NPersonGame::q_block(int i, int j, int k) const {
  return Q[i].block(static_cast<Eigen::Index>(j) * d, static_cast<Eigen::Index>(k) * d, d, d);
}

Vector NPersonGame::xbar_block(int i, int j) const {
  return Xbar[i].segment(static_cast<Eigen::Index>(j) * d, d);
}

HReport validate_H(const NPersonGame& g, bool relaxed) {
  check_player_shapes(g);
  HReport rep;
  for (int i = 0; i < g.N; ++i) {
    const std::string who = "player " + std::to_string(i);
    if (!invertible_sigma(g.sigma[i])) rep.violations.push_back(who + ": sigma is singular");
    if (!is_spd(g.R[i])) rep.violations.push_back(who + ": R is not SPD");
    if (!is_symmetric(g.Q[i])) rep.violations.push_back(who + ": Q is not symmetric");
    const Matrix own = g.q_block(i, i, i);
    const Matrix probe = relaxed ? Matrix(own + 0.5 * g.A[i].transpose() * g.R[i] * g.A[i]) : own;
    if (!is_spd(probe)) {
      rep.violations.push_back(who + (relaxed ? ": Q_ii + A^T R A/2 is not SPD" : ": Q_ii is not SPD"));
    }
  }
  return rep;
}

SymmetryDecomposition check_symmetry_S(const NPersonGame& g) {
  check_player_shapes(g);
  SymmetryDecomposition out;
  for (int i = 0; i < g.N; ++i) {
    int j0 = (i == 0) ? 1 : 0;
    const Matrix B = 2.0 * g.q_block(i, i, j0);
    const Matrix C = g.q_block(i, j0, j0);
    const Vector Delta = g.xbar_block(i, j0);
    Matrix D = Matrix::Zero(g.d, g.d);
    bool have_D = false;

    for (int j = 0; j < g.N; ++j) {
      if (j == i) continue;
      if (!close(2.0 * g.q_block(i, i, j), B)) {
        out.failure = block_name(i, i, j0) + " and " + block_name(i, i, j) + " disagree";
        return out;
      }
      if (!close(g.q_block(i, j, j), C)) {
        out.failure = block_name(i, j0, j0) + " and " + block_name(i, j, j) + " disagree";
        return out;
      }
      if (!close(g.xbar_block(i, j), Delta)) {
        out.failure = "player " + std::to_string(i) + " reference " + std::to_string(j0) +
                      " and " + std::to_string(j) + " disagree";
        return out;
      }
      for (int k = 0; k < g.N; ++k) {
        if (k == i || k == j) continue;
        if (!have_D) {
          D = g.q_block(i, j, k);
          have_D = true;
        } else if (!close(g.q_block(i, j, k), D)) {
          out.failure = block_name(i, j, k) + " breaks the common off-pair block";
          return out;
        }
      }
    }
    out.B.push_back(B);
    out.C.push_back(C);
    out.D.push_back(D);  // stays zero when N = 2
    out.Delta.push_back(Delta);
  }
  out.ok = true;
  return out;
}

Matrix NearlyIdenticalGame::nu() const { return 0.5 * sigma * sigma.transpose(); }

HReport validate_nearly_identical(const NearlyIdenticalGame& g) {
  HReport rep;
  if (g.N < 2 || g.d < 1) {
    rep.violations.push_back("need N >= 2 and d >= 1");
    return rep;
  }
  if (!invertible_sigma(g.sigma)) rep.violations.push_back("sigma is singular");
  if (!is_spd(g.R)) rep.violations.push_back("R is not SPD");
  if (!is_spd(g.Q)) rep.violations.push_back("Q is not SPD");
  if (!is_symmetric(g.B)) rep.violations.push_back("B is not symmetric");
  if (g.C.size() != static_cast<size_t>(g.N) || g.D.size() != static_cast<size_t>(g.N)) {
    rep.violations.push_back("C/D per-player arrays have wrong length");
    return rep;
  }
  for (int i = 0; i < g.N; ++i) {
    if (!is_symmetric(g.C[i])) rep.violations.push_back("C_" + std::to_string(i) + " is not symmetric");
    if (!is_symmetric(g.D[i])) rep.violations.push_back("D_" + std::to_string(i) + " is not symmetric");
  }
  if (g.H.size() != g.d || g.Delta.size() != g.d) rep.violations.push_back("reference point has wrong size");
  return rep;
}

NearlyIdenticalGame reduce_to_nearly_identical(const NPersonGame& g) {
  SymmetryDecomposition sym = check_symmetry_S(g);
  if (!sym.ok) {
    throw NotNearlyIdenticalError("reduction failed: " + sym.failure);
  }
  auto require_shared = [](bool ok, const char* field) {
    if (!ok) throw NotNearlyIdenticalError(std::string("reduction failed: ") + field +
                                           " differs across players");
  };
  for (int i = 1; i < g.N; ++i) {
    require_shared(close(g.A[i], g.A[0]), "A");
    require_shared(close(g.sigma[i], g.sigma[0]), "sigma");
    require_shared(close(g.R[i], g.R[0]), "R");
    require_shared(close(g.q_block(i, i, i), g.q_block(0, 0, 0)), "Q_ii");
    require_shared(close(sym.B[i], sym.B[0]), "B");
    require_shared(close(g.xbar_block(i, i), g.xbar_block(0, 0)), "own reference");
    require_shared(close(sym.Delta[i], sym.Delta[0]), "Delta");
  }
  NearlyIdenticalGame out;
  out.N = g.N;
  out.d = g.d;
  out.A = g.A[0];
  out.sigma = g.sigma[0];
  out.R = g.R[0];
  out.Q = symmetrized(g.q_block(0, 0, 0));
  out.B = symmetrized(sym.B[0]);
  out.C.assign(sym.C.begin(), sym.C.end());
  out.D.assign(sym.D.begin(), sym.D.end());
  out.H = g.xbar_block(0, 0);
  out.Delta = sym.Delta[0];
  return out;
}

NearlyIdenticalGame build_consensus_game(int N, const Matrix& P_N, const Matrix& A,
                                         const Matrix& sigma, const Matrix& R) {
  if (N < 2) throw DimensionError("build_consensus_game: need N >= 2");
  require_spd(P_N, "build_consensus_game: P_N");
  const Eigen::Index d = P_N.rows();
  if (A.rows() != d || sigma.rows() != d || R.rows() != d) {
    throw DimensionError("build_consensus_game: size mismatch");
  }
  NearlyIdenticalGame g;
  g.N = N;
  g.d = static_cast<int>(d);
  g.A = A;
  g.sigma = sigma;
  g.R = R;
  g.Q = P_N;
  g.B = -2.0 / (N - 1.0) * P_N;
  g.C.assign(static_cast<size_t>(N), Matrix(P_N / (N - 1.0)));
  g.D.assign(static_cast<size_t>(N), Matrix::Zero(d, d));
  g.H = Vector::Zero(d);
  g.Delta = Vector::Zero(d);
  return g;
}

NPersonGame to_n_person(const NearlyIdenticalGame& g) {
  NPersonGame out;
  out.N = g.N;
  out.d = g.d;
  const Eigen::Index d = g.d, nd = static_cast<Eigen::Index>(g.N) * g.d;
  out.A.assign(static_cast<size_t>(g.N), g.A);
  out.sigma.assign(static_cast<size_t>(g.N), g.sigma);
  out.R.assign(static_cast<size_t>(g.N), g.R);
  for (int i = 0; i < g.N; ++i) {
    Matrix Q = Matrix::Zero(nd, nd);
    Vector xb = Vector::Zero(nd);
    for (int j = 0; j < g.N; ++j) {
      for (int k = 0; k < g.N; ++k) {
        Matrix blk;
        if (j == i && k == i) {
          blk = g.Q;
        } else if (j == i) {
          blk = 0.5 * g.B;
        } else if (k == i) {
          blk = 0.5 * g.B.transpose();
        } else if (j == k) {
          blk = g.C[static_cast<size_t>(i)];
        } else {
          blk = g.D[static_cast<size_t>(i)];
        }
        Q.block(j * d, k * d, d, d) = blk;
      }
      xb.segment(j * d, d) = (j == i) ? g.H : g.Delta;
    }
    out.Q.push_back(symmetrized(Q));
    out.Xbar.push_back(xb);
  }
  return out;
}

Matrix MeanFieldGame::sigma() const { return spd_sqrt(2.0 * nu); }

HReport validate_mean_field(const MeanFieldGame& g) {
  HReport rep;
  if (g.d < 1) {
    rep.violations.push_back("need d >= 1");
    return rep;
  }
  if (!is_spd(g.nu)) rep.violations.push_back("nu is not SPD");
  if (!is_spd(g.R)) rep.violations.push_back("R is not SPD");
  if (!is_spd(g.Qhat)) rep.violations.push_back("Qhat is not SPD");
  if (!is_symmetric(g.Bhat)) rep.violations.push_back("Bhat is not symmetric");
  if (!is_symmetric(g.Chat)) rep.violations.push_back("Chat is not symmetric");
  if (!is_symmetric(g.Dhat)) rep.violations.push_back("Dhat is not symmetric");
  if (g.H.size() != g.d || g.Delta.size() != g.d) rep.violations.push_back("reference point has wrong size");
  return rep;
}

MeasureMoments MeasureMoments::from_gaussian(const Vector& mu, const Matrix& precision) {
  require_spd(precision, "MeasureMoments::from_gaussian: precision");
  const Matrix cov = precision.llt().solve(Matrix::Identity(precision.rows(), precision.cols()));
  return from_mean_cov(mu, cov);
}

MeasureMoments MeasureMoments::point_mass(const Vector& x) {
  return MeasureMoments{x, x * x.transpose()};
}

MeasureMoments MeasureMoments::from_mean_cov(const Vector& mu, const Matrix& cov) {
  return MeasureMoments{mu, cov + mu * mu.transpose()};
}

double Quadratic::expectation(const MeasureMoments& m) const {
  return (P * m.second_moment).trace() + q.dot(m.mean) + c;
}

Quadratic expected_state_cost(const NPersonGame& g, int i, const std::vector<MeasureMoments>& measures) {
  check_player_shapes(g);
  if (measures.size() != static_cast<size_t>(g.N)) {
    throw DimensionError("expected_state_cost: one measure per player required");
  }
  const Matrix Qii = g.q_block(i, i, i);
  const Vector h = g.xbar_block(i, i);

  Quadratic f;
  f.P = Qii;
  Vector cross = Vector::Zero(g.d);  // sum_k Q^i_{ik} (mu^k - Xbar_i^k)
  for (int k = 0; k < g.N; ++k) {
    if (k == i) continue;
    cross += g.q_block(i, i, k) * (measures[static_cast<size_t>(k)].mean - g.xbar_block(i, k));
  }
  f.q = -2.0 * Qii * h + 2.0 * cross;
  f.c = h.dot(Qii * h) - 2.0 * h.dot(cross);
  for (int j = 0; j < g.N; ++j) {
    if (j == i) continue;
    const Vector uj = measures[static_cast<size_t>(j)].mean - g.xbar_block(i, j);
    for (int k = 0; k < g.N; ++k) {
      if (k == i || k == j) continue;
      const Vector uk = measures[static_cast<size_t>(k)].mean - g.xbar_block(i, k);
      f.c += uj.dot(g.q_block(i, j, k) * uk);
    }
    f.c += (g.q_block(i, j, j) * measures[static_cast<size_t>(j)].covariance()).trace() +
           uj.dot(g.q_block(i, j, j) * uj);
  }
  return f;
}

namespace {

// Shared shape of V^hat and V^i_N: own quadratic centered at H, cross
// weight W1 against the centered mean, integrated W2 term, rank-one W3
// term on the scaled centered mean.
Quadratic population_quadratic(const Matrix& Qown, const Vector& H, const Matrix& W1,
                               const Matrix& W2, const Matrix& W3, double mean_scale,
                               const Vector& Delta, const MeasureMoments& m) {
  const Vector w = m.mean - Delta;
  const Matrix M2c = m.second_moment - m.mean * Delta.transpose() -
                     Delta * m.mean.transpose() + Delta * Delta.transpose();
  Quadratic out;
  out.P = Qown;
  out.q = -2.0 * Qown * H + 0.5 * (W1 + W1.transpose()) * w;
  out.c = H.dot(Qown * H) - 0.5 * (H.dot(W1 * w) + w.dot(W1 * H));
  out.c += (W2 * M2c).trace();
  const Vector ws = mean_scale * w;
  out.c += ws.dot(W3 * ws);
  return out;
}

}  // namespace

Quadratic vhat_quadratic(const MeanFieldGame& g, const MeasureMoments& m) {
  if (m.mean.size() != g.d) throw DimensionError("vhat_quadratic: measure dimension mismatch");
  return population_quadratic(g.Qhat, g.H, g.Bhat, g.Chat, g.Dhat, 1.0, g.Delta, m);
}

double eval_Vhat(const MeanFieldGame& g, const MeasureMoments& m, const Vector& x) {
  return vhat_quadratic(g, m)(x);
}

Quadratic viN_quadratic(const NearlyIdenticalGame& g, int player, const MeasureMoments& m) {
  if (player < 0 || player >= g.N) throw DimensionError("viN_quadratic: player index out of range");
  if (m.mean.size() != g.d) throw DimensionError("viN_quadratic: measure dimension mismatch");
  const auto i = static_cast<size_t>(player);
  const double n1 = g.N - 1.0;
  return population_quadratic(g.Q, g.H, Matrix(n1 * g.B), Matrix(n1 * (g.C[i] - g.D[i])),
                              g.D[i], n1, g.Delta, m);
}

double eval_ViN(const NearlyIdenticalGame& g, int player, const MeasureMoments& m, const Vector& x) {
  return viN_quadratic(g, player, m)(x);
}

double monotonicity_gap(const MeanFieldGame& g, const MeasureMoments& m, const MeasureMoments& n) {
  const Vector w = m.mean - n.mean;
  return w.dot(g.Bhat * w);
}

NearlyIdenticalGame scaled_game(const MeanFieldGame& g, const ScalingRule& rule, int N) {
  if (N < 2) throw DimensionError("scaled_game: need N >= 2");
  const double n1 = N - 1.0;

  if (rule.kind == ScalingRule::Kind::ConsensusPerturbed) {
    // Consensus schedule P^N = (1 + 1/N) Qhat; B, C, D follow from it.
    const Matrix P_N = (1.0 + 1.0 / N) * g.Qhat;
    return build_consensus_game(N, P_N, g.A, g.sigma(), g.R);
  }

  NearlyIdenticalGame out;
  out.N = N;
  out.d = g.d;
  out.A = g.A;
  out.sigma = g.sigma();
  out.R = g.R;
  out.Q = (rule.kind == ScalingRule::Kind::QPerturbed) ? Matrix((1.0 + 1.0 / N) * g.Qhat) : g.Qhat;
  out.B = (rule.kind == ScalingRule::Kind::ConstantB) ? g.Bhat : Matrix(g.Bhat / n1);
  out.C.reserve(static_cast<size_t>(N));
  out.D.reserve(static_cast<size_t>(N));
  for (int i = 0; i < N; ++i) {
    Matrix Ci = g.Chat / n1;
    if (rule.hetero_C != 0.0) {
      // Per-player wobble with (N-1) C_i^N -> Chat for every i.
      Ci += rule.hetero_C * std::sin(i + 1.0) / (n1 * N) * Matrix::Identity(g.d, g.d);
    }
    out.C.push_back(Ci);
    out.D.push_back(g.Dhat / (n1 * n1));
  }
  out.H = g.H;
  out.Delta = g.Delta;
  return out;
}

std::vector<NearlyIdenticalGame> scaled_family(const MeanFieldGame& g, const ScalingRule& rule,
                                               const std::vector<int>& Ns) {
  std::vector<NearlyIdenticalGame> out;
  out.reserve(Ns.size());
  for (int N : Ns) out.push_back(scaled_game(g, rule, N));
  return out;
}

}  // namespace lqmfg
