#include "landmark/nystrom.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "support/oracles.hpp"

using namespace landmark;

namespace {

// Corner-point landmark approximation straight from the definition.
Matrix corner_nystrom(const Matrix& k, const std::vector<int>& mask) {
  std::vector<int> cols = mask;
  Matrix c(k.rows(), 0);
  Index kk = 0;
  for (int m : mask) kk += m != 0;
  c.resize(k.rows(), kk);
  Index at = 0;
  for (Index j = 0; j < k.cols(); ++j)
    if (mask[j]) c.col(at++) = k.col(j);
  Matrix w = oracle::submatrix(k, mask);
  return c * oracle::svd_pinv(w) * c.transpose();
}

}  // namespace

TEST(KTilde, IdentityKernelClosedForm) {
  const Index n = 6;
  Matrix k = Matrix::Identity(n, n);
  Vector t = oracle::random_interior_t(n, 1);
  const double delta = 0.6;
  Matrix kt = k_tilde_dense(k, t, delta);
  Matrix expect = Matrix::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    const double tj = t[j];
    expect(j, j) = tj * tj / (tj * tj + delta * (1.0 - tj * tj));
  }
  EXPECT_LE((kt - expect).norm(), 1e-12);
}

TEST(KTilde, CornersReproduceLandmarkApproximation) {
  Matrix k = oracle::random_spd(7, 2);
  for (unsigned seed = 0; seed < 6; ++seed) {
    std::vector<int> mask = oracle::random_mask(7, 30 + seed);
    Vector t = Vector::Zero(7);
    for (Index j = 0; j < 7; ++j) t[j] = mask[j] ? 1.0 : 0.0;
    EXPECT_LE((k_tilde_dense(k, t, 1.0) - corner_nystrom(k, mask)).norm(), 1e-8)
        << "mask seed " << seed;
  }
}

TEST(KTilde, ContinuousApproachToCorner) {
  Matrix k = oracle::random_spd(8, 3);
  k /= k.norm();
  std::vector<int> mask = {1, 0, 0, 1, 0, 1, 0, 0};
  Matrix corner = corner_nystrom(k, mask);

  Vector u = oracle::random_matrix(8, 1, 4).col(0).cwiseAbs();
  u /= u.norm();
  std::vector<double> err;
  for (int l = 1; l <= 6; ++l) {
    const double step = std::pow(10.0, -l);
    Vector t(8);
    for (Index j = 0; j < 8; ++j)
      t[j] = mask[j] ? 1.0 - step * u[j] : step * u[j];
    err.push_back((k_tilde_dense(k, t, 1.0) - corner).norm());
  }
  for (std::size_t l = 1; l < err.size(); ++l)
    EXPECT_LT(err[l], err[l - 1]) << "level " << l + 1;
  EXPECT_LT(err.back(), 1e-4);
}

TEST(GLambda, HandComputedIdentityInstance) {
  Matrix k = Matrix::Identity(3, 3);
  Vector t = Vector::Constant(3, 0.5);
  // K~ = diag(1/4); g = 3 * (3/4)^2 + 1.5 lambda
  EXPECT_NEAR(g_lambda_dense(k, t, 1.0, 0.4), 3.0 * 0.5625 + 0.6, 1e-12);
}

TEST(GLambda, CornerValueEqualsLandmarkResidual) {
  Matrix k = oracle::random_spd(6, 5);
  std::vector<int> mask = {0, 1, 1, 0, 0, 1};
  Vector t = Vector::Zero(6);
  for (Index j = 0; j < 6; ++j) t[j] = mask[j] ? 1.0 : 0.0;
  const double lambda = 0.7;
  const double expect =
      (k - corner_nystrom(k, mask)).squaredNorm() + lambda * 3.0;
  EXPECT_NEAR(g_lambda_dense(k, t, 1.0, lambda), expect,
              1e-8 * (1.0 + expect));
}

TEST(TraceIdentity, NuclearErrorMatchesColumnResidual) {
  // ||K - K^_s||_* = ||X - P_s X||_F^2 when K = X^T X
  Matrix x = oracle::random_matrix(12, 8, 6);
  Matrix k = x.transpose() * x;
  for (unsigned seed = 0; seed < 6; ++seed) {
    std::vector<int> mask = oracle::random_mask(8, 40 + seed);
    Matrix khat = corner_nystrom(k, mask);
    const double lhs = oracle::nuclear_norm_sym(k - khat);
    Matrix p = oracle::projector_qr(oracle::select_columns(x, mask));
    const double rhs = (x - p * x).squaredNorm();
    EXPECT_NEAR(lhs, rhs, 1e-8 * (1.0 + rhs)) << "mask seed " << seed;
  }
}

TEST(GradGExact, MatchesCentralDifferences) {
  Matrix k = oracle::random_psd(6, 7);
  k /= k.norm();
  const double delta = 0.8;
  const double lambda = 0.2;
  auto g = [&](const Vector& t) { return g_lambda_dense(k, t, delta, lambda); };
  for (unsigned pt = 0; pt < 20; ++pt) {
    Vector t = oracle::random_interior_t(6, 200 + pt, 0.1, 0.9);
    Vector grad = grad_g_exact(k, t, delta, lambda);
    Vector fd = oracle::central_fd(g, t, 1e-5);
    EXPECT_LE((grad - fd).cwiseAbs().maxCoeff(),
              1e-5 * (1.0 + grad.cwiseAbs().maxCoeff()))
        << "point " << pt;
  }
}

TEST(GradGExact, LambdaShiftAndBoundaryGuard) {
  Matrix k = oracle::random_psd(5, 8);
  Vector t = oracle::random_interior_t(5, 9);
  Vector g0 = grad_g_exact(k, t, 1.0, 0.0);
  Vector g2 = grad_g_exact(k, t, 1.0, 2.0);
  EXPECT_LE((g2 - g0 - Vector::Constant(5, 2.0)).norm(), 1e-13);
  t[0] = 1.0;
  EXPECT_THROW(grad_g_exact(k, t, 1.0, 0.0), std::invalid_argument);
}

TEST(GradGStochastic, SingleProbeMatchesDenseReplay) {
  const Index n = 6;
  Matrix kd = oracle::random_psd(n, 10);
  MaterializedOperator k(kd);
  Vector t = oracle::random_interior_t(n, 11, 0.15, 0.85);
  HyperParams hp;
  hp.delta = 1.1;
  hp.lambda = 0.35;
  hp.mc_size = 1;
  CgConfig cg;
  cg.rel_tolerance = 1e-13;

  const std::uint64_t seed = 55, iteration = 4;
  GradientEstimate est =
      grad_g_stochastic(k, t, hp, cg, ProbeStream{seed, iteration});

  Vector z = rademacher_probe(n, seed, iteration, 0);
  Matrix lt = oracle::dense_lt(kd, t, hp.delta);
  Matrix zmat = kd - hp.delta * Matrix::Identity(n, n);
  Vector a = kd * z;
  Vector b = lt.ldlt().solve(t.cwiseProduct(a));
  Vector c = kd * t.cwiseProduct(b) - a;
  Vector d = kd * c;
  Vector e = lt.ldlt().solve(t.cwiseProduct(d));
  Vector psi = b.cwiseProduct(d) + a.cwiseProduct(e) -
               e.cwiseProduct(zmat * t.cwiseProduct(b)) -
               b.cwiseProduct(zmat * t.cwiseProduct(e));
  Vector expect = 2.0 * psi + Vector::Constant(n, hp.lambda);

  EXPECT_LE((est.grad - expect).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_NEAR(est.loss_estimate, c.squaredNorm() + hp.lambda * t.sum(), 1e-8);
  EXPECT_TRUE(est.cg_all_converged);
}

TEST(GradGStochastic, SupportReductionMatchesFullDenseReplay) {
  const Index n = 8;
  Matrix kd = oracle::random_psd(n, 12);
  MaterializedOperator k(kd);
  Vector t = oracle::random_interior_t(n, 13, 0.2, 0.8);
  t[0] = 0.0;
  t[5] = 0.0;
  HyperParams hp;
  hp.mc_size = 1;
  CgConfig cg;
  cg.rel_tolerance = 1e-13;
  GradientEstimate est = grad_g_stochastic(k, t, hp, cg, ProbeStream{21, 2});

  Vector z = rademacher_probe(n, 21, 2, 0);
  Matrix lt = oracle::dense_lt(kd, t, hp.delta);
  Matrix zmat = kd - hp.delta * Matrix::Identity(n, n);
  Vector a = kd * z;
  Vector b = lt.ldlt().solve(t.cwiseProduct(a));
  Vector c = kd * t.cwiseProduct(b) - a;
  Vector d = kd * c;
  Vector e = lt.ldlt().solve(t.cwiseProduct(d));
  Vector psi = b.cwiseProduct(d) + a.cwiseProduct(e) -
               e.cwiseProduct(zmat * t.cwiseProduct(b)) -
               b.cwiseProduct(zmat * t.cwiseProduct(e));
  Vector expect = 2.0 * psi + Vector::Constant(n, hp.lambda);

  EXPECT_LE((est.grad - expect).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_EQ(est.grad[0], hp.lambda);
  EXPECT_EQ(est.grad[5], hp.lambda);
}

TEST(GradGStochastic, UnbiasedAgainstExactGradient) {
  const Index n = 7;
  Matrix kd = oracle::random_psd(n, 14);
  kd /= kd.norm();
  MaterializedOperator k(kd);
  Vector t = oracle::random_interior_t(n, 15, 0.2, 0.8);
  HyperParams hp;
  hp.delta = 0.5;
  hp.lambda = 0.1;
  hp.mc_size = 10;
  CgConfig cg;
  cg.rel_tolerance = 1e-12;

  Vector exact = grad_g_exact(kd, t, hp.delta, hp.lambda);
  const double g_exact = g_lambda_dense(kd, t, hp.delta, hp.lambda);

  const int runs = 400;
  Matrix samples(n, runs);
  Vector losses(runs);
  for (int r = 0; r < runs; ++r) {
    GradientEstimate est = grad_g_stochastic(
        k, t, hp, cg, ProbeStream{777, static_cast<std::uint64_t>(r)});
    samples.col(r) = est.grad;
    losses[r] = est.loss_estimate;
  }
  Vector mean = samples.rowwise().mean();
  for (Index j = 0; j < n; ++j) {
    const double var =
        (samples.row(j).array() - mean[j]).square().sum() / (runs - 1.0);
    const double se = std::sqrt(var / runs);
    EXPECT_LE(std::abs(mean[j] - exact[j]), 3.5 * se + 1e-12) << "coord " << j;
  }
  const double loss_mean = losses.mean();
  const double loss_var = (losses.array() - loss_mean).square().sum() / (runs - 1.0);
  EXPECT_LE(std::abs(loss_mean - g_exact),
            3.5 * std::sqrt(loss_var / runs) + 1e-12);
}

TEST(GradGStochastic, EmptySupportKeepsLossHonest) {
  const Index n = 5;
  Matrix kd = oracle::random_psd(n, 16);
  MaterializedOperator k(kd);
  HyperParams hp;
  hp.lambda = 1.5;
  hp.mc_size = 4;
  GradientEstimate est =
      grad_g_stochastic(k, Vector::Zero(n), hp, CgConfig{}, ProbeStream{9, 3});
  EXPECT_LE((est.grad - Vector::Constant(n, 1.5)).norm(), 0.0);
  double expect = 0.0;
  for (std::uint64_t m = 0; m < 4; ++m)
    expect += (kd * rademacher_probe(n, 9, 3, m)).squaredNorm();
  EXPECT_NEAR(est.loss_estimate, expect / 4.0, 1e-10);
}

TEST(GradGStochastic, Deterministic) {
  MaterializedOperator k(oracle::random_psd(6, 17));
  Vector t = oracle::random_interior_t(6, 18);
  HyperParams hp;
  hp.mc_size = 3;
  GradientEstimate a = grad_g_stochastic(k, t, hp, CgConfig{}, ProbeStream{4, 7});
  GradientEstimate b = grad_g_stochastic(k, t, hp, CgConfig{}, ProbeStream{4, 7});
  EXPECT_EQ((a.grad - b.grad).norm(), 0.0);
  GradientEstimate c = grad_g_stochastic(k, t, hp, CgConfig{}, ProbeStream{4, 8});
  EXPECT_GT((a.grad - c.grad).norm(), 0.0);
}

TEST(NystromReconstruct, FullSelectionRecoversKernel) {
  Matrix kd = oracle::random_spd(6, 19);
  MaterializedOperator k(kd);
  std::vector<Index> all = {0, 1, 2, 3, 4, 5};
  NystromApprox approx = nystrom_reconstruct(k, all);
  EXPECT_EQ(approx.rank_bound(), 6);
  EXPECT_LE((approx.reconstruct_dense() - kd).norm(), 1e-8 * kd.norm());
}

TEST(NystromReconstruct, SingleLandmarkRankOne) {
  Matrix kd = oracle::random_spd(5, 20);
  MaterializedOperator k(kd);
  NystromApprox approx = nystrom_reconstruct(k, std::vector<Index>{2});
  Matrix expect = kd.col(2) * kd.row(2) / kd(2, 2);
  EXPECT_LE((approx.reconstruct_dense() - expect).norm(), 1e-10 * kd.norm());
}

TEST(NystromReconstruct, MatchesOracleOnRandomMasks) {
  Matrix kd = oracle::random_spd(8, 21);
  MaterializedOperator k(kd);
  for (unsigned seed = 0; seed < 5; ++seed) {
    std::vector<int> mask = oracle::random_mask(8, 50 + seed);
    NystromApprox approx = nystrom_reconstruct(k, mask);
    EXPECT_LE((approx.reconstruct_dense() - corner_nystrom(kd, mask)).norm(),
              1e-8 * kd.norm())
        << "mask seed " << seed;
  }
}

TEST(NystromReconstruct, ResidualIsPositiveSemidefinite) {
  Matrix kd = oracle::random_spd(7, 22);
  MaterializedOperator k(kd);
  std::vector<int> mask = {1, 0, 1, 0, 0, 1, 0};
  Matrix resid = kd - nystrom_reconstruct(k, mask).reconstruct_dense();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(resid);
  EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-9 * kd.norm());
}

TEST(NystromReconstruct, EmptySelection) {
  MaterializedOperator k(oracle::random_spd(4, 23));
  NystromApprox approx = nystrom_reconstruct(k, std::vector<Index>{});
  EXPECT_EQ(approx.rank_bound(), 0);
  EXPECT_EQ(approx.reconstruct_dense().size(), 0);
}

TEST(NystromReconstruct, MaskAndIndexOverloadsAgree) {
  Matrix kd = oracle::random_spd(6, 24);
  MaterializedOperator k(kd);
  std::vector<int> mask = {0, 1, 0, 0, 1, 1};
  NystromApprox a = nystrom_reconstruct(k, mask);
  NystromApprox b = nystrom_reconstruct(k, std::vector<Index>{1, 4, 5});
  EXPECT_EQ(a.indices, b.indices);
  EXPECT_EQ((a.columns - b.columns).norm(), 0.0);
  EXPECT_EQ((a.core_pinv - b.core_pinv).norm(), 0.0);
  EXPECT_THROW(nystrom_reconstruct(k, std::vector<Index>{6}),
               std::invalid_argument);
}
