#include "lqmfg/symmetrize.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <cmath>
#include <random>

namespace lqmfg {

namespace {

Vector vec_of(const Matrix& M) {
  Vector v(M.size());
  Eigen::Index idx = 0;
  for (Eigen::Index j = 0; j < M.cols(); ++j)
    for (Eigen::Index i = 0; i < M.rows(); ++i) v(idx++) = M(i, j);
  return v;
}

Matrix unvec(const Vector& v, Eigen::Index d) {
  Matrix M(d, d);
  Eigen::Index idx = 0;
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < d; ++i) M(i, j) = v(idx++);
  return M;
}

// Basis of Sym(d) as matrices.
std::vector<Matrix> symmetric_basis(Eigen::Index d) {
  std::vector<Matrix> basis;
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index b = a; b < d; ++b) {
      Matrix E = Matrix::Zero(d, d);
      E(a, b) = 1.0;
      E(b, a) = 1.0;
      basis.push_back(E);
    }
  }
  return basis;
}

double normalized_min_eig(const Matrix& Y) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(Y), Eigen::EigenvaluesOnly);
  const double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
  if (lmax == 0.0) return -1.0;
  return es.eigenvalues().minCoeff() / lmax;
}

}  // namespace

Matrix Symmetrizer::T_inverse() const { return P.transpose() * Z.inverse(); }

double symmetrizer_residual(const Matrix& Y, const Matrix& M) {
  return operator_norm(Y * M - M.transpose() * Y);
}

Symmetrizer find_symmetrizer(const Matrix& M) {
  require_finite(M, "find_symmetrizer");
  if (M.rows() != M.cols()) throw DimensionError("find_symmetrizer: M must be square");
  const Eigen::Index d = M.rows();

  Eigen::EigenSolver<Matrix> es(M);
  if (es.info() != Eigen::Success) {
    throw DefectiveError("find_symmetrizer: eigensolver failed");
  }
  {
    Eigen::JacobiSVD<ComplexMatrix> svd(es.eigenvectors());
    const double smin = svd.singularValues()(d - 1);
    if (smin <= 0.0 || svd.singularValues()(0) / smin > 1e10) {
      throw DefectiveError("find_symmetrizer: eigenvector basis condition number exceeds 1e10");
    }
  }
  const double radius = es.eigenvalues().cwiseAbs().maxCoeff();
  if ((es.eigenvalues().imag().cwiseAbs().array() > 1e-9 * (1.0 + radius)).any()) {
    throw NotSpdError("find_symmetrizer: drift spectrum is not real, no SPD symmetrizer exists");
  }

  // Solution space of Y M = M^T Y inside Sym(d), via SVD null space.
  const auto basis = symmetric_basis(d);
  Matrix L(d * d, static_cast<Eigen::Index>(basis.size()));
  for (size_t k = 0; k < basis.size(); ++k) {
    L.col(static_cast<Eigen::Index>(k)) = vec_of(basis[k] * M - M.transpose() * basis[k]);
  }
  Eigen::JacobiSVD<Matrix> svd(L, Eigen::ComputeFullV);
  const double smax = svd.singularValues()(0);
  const double cutoff = 1e-8 * smax * static_cast<double>(std::max(L.rows(), L.cols()));
  int rank = 0;
  for (Eigen::Index k = 0; k < svd.singularValues().size(); ++k) {
    if (svd.singularValues()(k) > cutoff) ++rank;
  }
  const Matrix null_coeffs = svd.matrixV().rightCols(svd.matrixV().cols() - rank);
  const Eigen::Index k_null = null_coeffs.cols();
  if (k_null < 1) {
    throw DefectiveError("find_symmetrizer: constraint system has trivial null space");
  }
  auto assemble = [&](const Vector& c) {
    Matrix Y = Matrix::Zero(d, d);
    for (size_t k = 0; k < basis.size(); ++k) {
      Y += c(static_cast<Eigen::Index>(k)) * basis[k];
    }
    return symmetrized(Y);
  };

  // Seed with the left-eigenvector Gram matrix Y0 = V^{-T} V^{-1}, which
  // symmetrizes any diagonalizable M and is SPD when the eigenbasis is
  // real; project it onto the constraint null space.
  const ComplexMatrix Vinv = es.eigenvectors().inverse();
  const Matrix Y0 = (Vinv.transpose() * Vinv).real();
  Vector c_best(k_null);
  {
    Vector target(static_cast<Eigen::Index>(basis.size()));
    for (size_t k = 0; k < basis.size(); ++k) {
      // Coefficient of Y0 on basis element (a,b): half the (a,b)+(b,a) sum.
      const Matrix& E = basis[k];
      target(static_cast<Eigen::Index>(k)) = (E.cwiseProduct(Y0)).sum() / E.squaredNorm();
    }
    c_best = null_coeffs.transpose() * target;
  }
  Matrix Y = assemble(null_coeffs * c_best);
  double best = normalized_min_eig(Y);
  if (best < 0.0) {
    Y = -Y;
    best = normalized_min_eig(Y);
  }

  if (best <= 1e-8) {
    // Fallback: random search over the solution cone.
    std::mt19937_64 rng(0xC0FFEEULL);
    std::normal_distribution<double> gauss;
    for (int trial = 0; trial < 1024 && best <= 1e-8; ++trial) {
      Vector c(k_null);
      for (Eigen::Index j = 0; j < k_null; ++j) c(j) = gauss(rng);
      Matrix cand = assemble(null_coeffs * c);
      double score = normalized_min_eig(cand);
      if (-score > best) {
        cand = -cand;
        score = -score;
      }
      if (score > best) {
        best = score;
        Y = cand;
      }
    }
  }
  if (best <= 1e-8) {
    throw NotSpdError("find_symmetrizer: no SPD point found in the symmetrizer cone");
  }

  Y /= spectral_norm(Y);  // fix the free scale
  Eigen::SelfAdjointEigenSolver<Matrix> eY(Y);
  Symmetrizer out;
  out.Y = Y;
  out.P = eY.eigenvectors().transpose();
  out.Z = eY.eigenvalues().cwiseSqrt().asDiagonal();
  out.T = out.Z * out.P;

  const double resid = symmetrizer_residual(out.Y, M);
  if (resid > 1e-9 * std::max(1.0, operator_norm(M))) {
    throw IllConditionedError("find_symmetrizer: residual check failed");
  }
  return out;
}

TransformedGame transform_game(const NearlyIdenticalGame& g, double s, double r) {
  if (!(s > 0.0) || !(r > 0.0)) {
    throw StructureMismatchError("transform_game: s and r must be positive");
  }
  HReport rep = validate_nearly_identical(g);
  if (!rep.ok()) {
    throw StructureMismatchError("transform_game: invalid game: " + rep.violations.front());
  }
  TransformedGame out;
  out.sym = find_symmetrizer(g.A);
  out.s = s;
  out.r = r;

  const Matrix Tinv = out.sym.T_inverse();
  const Matrix sigma_expect = s * Tinv;
  if ((g.sigma - sigma_expect).cwiseAbs().maxCoeff() >
      1e-8 * (1.0 + sigma_expect.cwiseAbs().maxCoeff())) {
    throw StructureMismatchError("transform_game: sigma does not equal s P^T Z^{-1}");
  }
  const Matrix R_expect = r * out.sym.Y;
  if ((g.R - R_expect).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + R_expect.cwiseAbs().maxCoeff())) {
    throw StructureMismatchError("transform_game: R does not equal r Y");
  }

  const Matrix& T = out.sym.T;
  auto congruence = [&](const Matrix& W) { return symmetrized(Tinv.transpose() * W * Tinv); };

  NearlyIdenticalGame t;
  t.N = g.N;
  t.d = g.d;
  t.A = T * g.A * Tinv;
  if (!is_symmetric(t.A)) {
    throw IllConditionedError("transform_game: transformed drift failed the symmetry check");
  }
  t.A = symmetrized(t.A);
  t.sigma = T * g.sigma;  // equals s I up to roundoff
  t.R = congruence(g.R);  // equals r I up to roundoff
  t.Q = congruence(g.Q);
  t.B = congruence(g.B);
  for (const auto& Ci : g.C) t.C.push_back(congruence(Ci));
  for (const auto& Di : g.D) t.D.push_back(congruence(Di));
  t.H = T * g.H;
  t.Delta = T * g.Delta;
  out.game = t;
  return out;
}

EquilibriumSolution pull_back(const EquilibriumSolution& sol, const Symmetrizer& sym) {
  const Matrix& T = sym.T;
  const Matrix Tinv = sym.T_inverse();
  EquilibriumSolution out;
  for (const auto& ps : sol.players) {
    PlayerSolution q;
    q.value.Lambda = symmetrized(T.transpose() * ps.value.Lambda * T);
    q.value.rho = T.transpose() * ps.value.rho;
    q.measure.mu = Tinv * ps.measure.mu;
    q.measure.Sigma = symmetrized(T.transpose() * ps.measure.Sigma * T);
    q.lambda = ps.lambda;
    q.feedback.K = Tinv * ps.feedback.K * T;
    q.feedback.c = Tinv * ps.feedback.c;
    out.players.push_back(q);
  }
  if (sol.family) {
    SolutionFamily fam;
    fam.mu_particular = Tinv * sol.family->mu_particular;
    if (sol.family->null_basis.cols() > 0) {
      const Matrix mapped = Tinv * sol.family->null_basis;
      Eigen::HouseholderQR<Matrix> qr(mapped);
      fam.null_basis = Matrix(qr.householderQ()).leftCols(mapped.cols());
    } else {
      fam.null_basis = sol.family->null_basis;
    }
    out.family = fam;
  }
  return out;
}

}  // namespace lqmfg
