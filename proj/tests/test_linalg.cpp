#include "optdesign/linalg.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "optdesign/rng.hpp"
#include "test_util.hpp"

namespace optdesign {
namespace {

using testutil::random_ground_set;
using testutil::random_matrix;
using testutil::random_pd;
using testutil::random_psd;
using testutil::random_vector;

TEST(PsdFactorize, Identity) {
  PsdFactorization f = psd_factorize(Matrix::Identity(3, 3));
  EXPECT_TRUE(f.lower_triangular_factor.isApprox(Matrix::Identity(3, 3), 1e-14));
  EXPECT_NEAR(f.log_det_cache, 0.0, 1e-14);
  EXPECT_EQ(f.dim, 3);
}

TEST(PsdFactorize, KnownFactor) {
  Matrix m(2, 2);
  m << 4, 2, 2, 5;
  PsdFactorization f = psd_factorize(m);
  Matrix expected(2, 2);
  expected << 2, 0, 1, 2;
  EXPECT_TRUE(f.lower_triangular_factor.isApprox(expected, 1e-14));
  EXPECT_NEAR(f.log_det_cache, std::log(16.0), 1e-12);
}

TEST(PsdFactorize, RejectsIndefinite) {
  Matrix m(2, 2);
  m << 1, 2, 2, 1;
  EXPECT_THROW(psd_factorize(m), NotPositiveDefinite);
}

TEST(PsdFactorize, RejectsSingular) {
  Matrix m(2, 2);
  m << 1, 1, 1, 1;
  EXPECT_THROW(psd_factorize(m), NotPositiveDefinite);
}

TEST(PsdFactorize, HashTracksSource) {
  Rng rng = Rng::from_seed(3);
  Matrix a = random_pd(rng, 4);
  Matrix b = a;
  b(0, 0) += 1e-9;
  EXPECT_EQ(psd_factorize(a).source_hash, matrix_hash(a));
  EXPECT_NE(psd_factorize(a).source_hash, psd_factorize(b).source_hash);
}

TEST(InvQuad, IdentityIsSquaredNorm) {
  PsdFactorization f = psd_factorize(Matrix::Identity(3, 3));
  Vector v(3);
  v << 1, 2, 3;
  EXPECT_NEAR(inv_quad(f, v), 14.0, 1e-12);
}

TEST(InvQuad, MatchesExplicitInverse) {
  Rng rng = Rng::from_seed(4);
  for (int trial = 0; trial < 50; ++trial) {
    int d = 1 + static_cast<int>(rng.next_below(6));
    Matrix m = random_pd(rng, d);
    Vector v = random_vector(rng, d);
    PsdFactorization f = psd_factorize(m);
    EXPECT_NEAR(inv_quad(f, v), v.dot(m.inverse() * v), 1e-9 * (1.0 + inv_quad(f, v)));
  }
}

TEST(TraceInverse, Diagonal) {
  Matrix m = Vector::LinSpaced(3, 1, 3).asDiagonal();
  EXPECT_NEAR(trace_inverse(psd_factorize(m)), 1.0 + 0.5 + 1.0 / 3.0, 1e-12);
}

TEST(WeightedTraceInverse, IdentityWeightReducesToTraceInverse) {
  Rng rng = Rng::from_seed(5);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix m = random_pd(rng, 4);
    PsdFactorization f = psd_factorize(m);
    EXPECT_NEAR(weighted_trace_inverse(f, Matrix::Identity(4, 4)), trace_inverse(f), 1e-10);
  }
}

TEST(WeightedTraceInverse, RankOneWeightIsInvQuad) {
  Rng rng = Rng::from_seed(6);
  Matrix m = random_pd(rng, 3);
  Vector v = random_vector(rng, 3);
  PsdFactorization f = psd_factorize(m);
  EXPECT_NEAR(weighted_trace_inverse(f, v * v.transpose()), inv_quad(f, v), 1e-10);
}

TEST(MinEigenpair, PathGraphProjection) {
  // Laplacian of the 4-vertex path; its kernel is the all-ones vector and its
  // second-smallest eigenvalue is 2 - sqrt(2).
  Matrix lap(4, 4);
  lap << 1, -1, 0, 0, -1, 2, -1, 0, 0, -1, 2, -1, 0, 0, -1, 1;
  auto [zero_eig, ones_dir] = min_eigenpair(lap);
  EXPECT_NEAR(zero_eig, 0.0, 1e-12);
  EXPECT_NEAR(std::abs(ones_dir.sum()), 2.0, 1e-9);

  // Project onto the orthogonal complement of the all-ones direction.
  Eigen::JacobiSVD<Matrix> svd(Matrix::Ones(4, 1), Eigen::ComputeFullU);
  Matrix q = svd.matrixU().rightCols(3).transpose();
  auto [lambda2, fiedler] = min_eigenpair(q * lap * q.transpose());
  EXPECT_NEAR(lambda2, 2.0 - std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(fiedler.norm(), 1.0, 1e-12);
}

TEST(MinEigenpair, ResidualIsSmall) {
  Rng rng = Rng::from_seed(7);
  for (int trial = 0; trial < 30; ++trial) {
    int d = 2 + static_cast<int>(rng.next_below(5));
    Matrix m = random_pd(rng, d);
    auto [lambda, w] = min_eigenpair(m);
    EXPECT_LT((m * w - lambda * w).norm(), 1e-10 * m.norm());
  }
}

TEST(InvSqrt, Diagonal) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = 4;
  m(1, 1) = 9;
  Matrix r = inv_sqrt(m);
  EXPECT_NEAR(r(0, 0), 0.5, 1e-12);
  EXPECT_NEAR(r(1, 1), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(r(0, 1), 0.0, 1e-12);
}

TEST(InvSqrt, WhitensItsSource) {
  Rng rng = Rng::from_seed(8);
  for (int trial = 0; trial < 30; ++trial) {
    int d = 1 + static_cast<int>(rng.next_below(6));
    Matrix m = random_pd(rng, d);
    Matrix r = inv_sqrt(m);
    EXPECT_TRUE((r * m * r).isApprox(Matrix::Identity(d, d), 1e-10));
  }
}

TEST(InvSqrt, RejectsNearSingular) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = 1.0;
  m(1, 1) = 1e-14;
  EXPECT_THROW(inv_sqrt(m), NotPositiveDefinite);
}

TEST(RankTwoLogdetDelta, PureAddition) {
  PsdFactorization f = psd_factorize(Matrix::Identity(2, 2));
  Vector u = Vector::Zero(2);
  Vector w(2);
  w << 1, 0;
  EXPECT_NEAR(rank_two_logdet_delta(f, u, w), std::log(2.0), 1e-12);
}

TEST(RankTwoLogdetDelta, RemovalSingularThrows) {
  PsdFactorization f = psd_factorize(Matrix::Identity(2, 2));
  Vector u(2);
  u << 1, 0;
  EXPECT_THROW(rank_two_logdet_delta(f, u, u), RemovalSingular);
}

TEST(RankTwoLogdetDelta, MatchesRebuiltDeterminant) {
  Rng rng = Rng::from_seed(9);
  int checked = 0;
  while (checked < 200) {
    int d = 1 + static_cast<int>(rng.next_below(5));
    Matrix m = random_pd(rng, d);
    Vector u = random_vector(rng, d, 0.4);
    Vector w = random_vector(rng, d);
    PsdFactorization f = psd_factorize(m);
    if (inv_quad(f, u) >= 0.9) continue;
    double delta = rank_two_logdet_delta(f, u, w);
    Matrix rebuilt = m - u * u.transpose() + w * w.transpose();
    double expected = std::log(rebuilt.determinant()) - std::log(m.determinant());
    EXPECT_NEAR(delta, expected, 1e-9 * (1.0 + std::abs(expected)));
    ++checked;
  }
}

// det(M + vv') = det(M) (1 + v'M^{-1}v), exercised through the rank-two
// delta with an empty removal slot; 1000 random cases.
TEST(RankTwoLogdetDelta, RankOneDeterminantLemmaSweep) {
  Rng rng = Rng::from_seed(10);
  for (int trial = 0; trial < 1000; ++trial) {
    int d = 1 + static_cast<int>(rng.next_below(6));
    Matrix m = random_pd(rng, d);
    Vector v = random_vector(rng, d);
    PsdFactorization f = psd_factorize(m);
    double growth = std::exp(rank_two_logdet_delta(f, Vector::Zero(d), v));
    double expected = 1.0 + inv_quad(f, v);
    EXPECT_NEAR(growth, expected, 1e-9 * expected);
  }
}

// det(M - uu' + ww') >= det(M) (1 - u'M^{-1}u)(1 + w'M^{-1}w) whenever
// u'M^{-1}u <= 1; 1000 random cases.
TEST(RankTwoLogdetDelta, ExchangeLowerBoundSweep) {
  Rng rng = Rng::from_seed(11);
  int checked = 0;
  while (checked < 1000) {
    int d = 1 + static_cast<int>(rng.next_below(5));
    Matrix m = random_pd(rng, d);
    Vector u = random_vector(rng, d, 0.5);
    Vector w = random_vector(rng, d);
    PsdFactorization f = psd_factorize(m);
    double a = inv_quad(f, u);
    if (a >= 1.0 - 1e-9) continue;
    Matrix rebuilt = m - u * u.transpose() + w * w.transpose();
    double det_m = std::exp(f.log_det_cache);
    double lhs = rebuilt.determinant();
    double rhs = det_m * (1.0 - a) * (1.0 + inv_quad(f, w));
    EXPECT_GE(lhs, rhs - 1e-9 * det_m);
    ++checked;
  }
}

TEST(RankTwoWeightedTraceDelta, KnownTinyCase) {
  PsdFactorization f = psd_factorize(Matrix::Identity(2, 2));
  Vector u = Vector::Zero(2);
  Vector w(2);
  w << 1, 0;
  double delta = rank_two_weighted_trace_delta(f, Matrix::Identity(2, 2), u, w);
  EXPECT_NEAR(delta, -0.5, 1e-12);
}

TEST(RankTwoWeightedTraceDelta, PreconditionThrows) {
  PsdFactorization f = psd_factorize(Matrix::Identity(2, 2));
  Vector u(2);
  u << 0.8, 0;
  EXPECT_THROW(rank_two_weighted_trace_delta(f, Matrix::Identity(2, 2), u, Vector::Zero(2)),
               RemovalSingular);
}

TEST(RankTwoWeightedTraceDelta, MatchesRebuild) {
  Rng rng = Rng::from_seed(12);
  int checked = 0;
  while (checked < 200) {
    int d = 1 + static_cast<int>(rng.next_below(5));
    Matrix m = random_pd(rng, d);
    Matrix wgt = random_psd(rng, d, d);
    Vector u = random_vector(rng, d, 0.3);
    Vector w = random_vector(rng, d);
    PsdFactorization f = psd_factorize(m);
    if (2.0 * inv_quad(f, u) >= 0.9) continue;
    Matrix rebuilt = m - u * u.transpose() + w * w.transpose();
    double delta = rank_two_weighted_trace_delta(f, wgt, u, w);
    double expected =
        weighted_trace_inverse(psd_factorize(rebuilt), wgt) - weighted_trace_inverse(f, wgt);
    EXPECT_NEAR(delta, expected, 1e-9 * (1.0 + std::abs(expected)));
    ++checked;
  }
}

// tr((M - vv' + uu')^{-1} W) <= tr(M^{-1}W) + <W, M^{-1}vv'M^{-1}>/(1 - 2v'M^{-1}v)
//                                            - <W, M^{-1}uu'M^{-1}>/(1 + 2u'M^{-1}u)
// whenever 2 v'M^{-1}v < 1; 1000 random cases (v removed, u added).
TEST(RankTwoWeightedTraceDelta, ExchangeUpperBoundSweep) {
  Rng rng = Rng::from_seed(13);
  int checked = 0;
  while (checked < 1000) {
    int d = 1 + static_cast<int>(rng.next_below(5));
    Matrix m = random_pd(rng, d);
    Matrix wgt = random_psd(rng, d, d);
    Vector v = random_vector(rng, d, 0.3);
    Vector u = random_vector(rng, d);
    PsdFactorization f = psd_factorize(m);
    double a = inv_quad(f, v);
    if (2.0 * a >= 0.95) continue;
    Vector mv = solve_spd(f, v);
    Vector mu = solve_spd(f, u);
    double bound = mv.dot(wgt * mv) / (1.0 - 2.0 * a) -
                   mu.dot(wgt * mu) / (1.0 + 2.0 * inv_quad(f, u));
    double exact = rank_two_weighted_trace_delta(f, wgt, v, u);
    EXPECT_LE(exact, bound + 1e-9);
    ++checked;
  }
}

// <A, B> >= d det(A)^{1/d} det(B)^{1/d} for positive definite pairs.
TEST(PdInequalities, InnerProductDominatesGeometricMeans) {
  Rng rng = Rng::from_seed(14);
  for (int trial = 0; trial < 1000; ++trial) {
    int d = 1 + static_cast<int>(rng.next_below(6));
    Matrix a = random_pd(rng, d);
    Matrix b = random_pd(rng, d);
    double lhs = (a * b).trace();
    double rhs = d * std::exp((psd_factorize(a).log_det_cache + psd_factorize(b).log_det_cache) /
                              static_cast<double>(d));
    EXPECT_GE(lhs, rhs - 1e-9 * (1.0 + std::abs(rhs)));
  }
}

// <A, B^2> >= tr(B)^2 / tr(A^{-1}) and <A, B> <= sqrt(tr(A) <A, B^2>).
TEST(PdInequalities, TraceCauchySchwarzPair) {
  Rng rng = Rng::from_seed(15);
  for (int trial = 0; trial < 1000; ++trial) {
    int d = 1 + static_cast<int>(rng.next_below(6));
    Matrix a = random_pd(rng, d);
    Matrix b = random_pd(rng, d);
    double ab2 = (a * b * b).trace();
    double tr_b = b.trace();
    double tr_ainv = trace_inverse(psd_factorize(a));
    EXPECT_GE(ab2, tr_b * tr_b / tr_ainv - 1e-9 * (1.0 + ab2));
    double ab = (a * b).trace();
    EXPECT_LE(ab, std::sqrt(a.trace() * ab2) + 1e-9 * (1.0 + ab));
  }
}

TEST(GramState, MatchesRebuildUnderExchanges) {
  Rng rng = Rng::from_seed(16);
  const int d = 4, n = 12;
  std::vector<Vector> ground = random_ground_set(rng, d, n);
  std::vector<int> subset = {0, 1, 2, 3, 4, 5};
  GramState state(ground, subset);
  for (int step = 0; step < 150; ++step) {
    // Random valid exchange; retry until the removal keeps the Gram PD.
    std::vector<int> in_set, out_set;
    for (int i = 0; i < n; ++i) (state.contains(i) ? in_set : out_set).push_back(i);
    int out = in_set[rng.next_below(in_set.size())];
    int in = out_set[rng.next_below(out_set.size())];
    Matrix target = state.gram() - ground[out] * ground[out].transpose() +
                    ground[in] * ground[in].transpose();
    if (min_eigenvalue(target) < 1e-6) continue;
    state.apply_exchange(ground, out, in);

    Matrix rebuilt = Matrix::Zero(d, d);
    for (int idx : state.subset()) rebuilt.noalias() += ground[idx] * ground[idx].transpose();
    ASSERT_TRUE(state.gram().isApprox(rebuilt, 1e-10));
    PsdFactorization fresh = psd_factorize(rebuilt);
    ASSERT_NEAR(state.log_det(), fresh.log_det_cache, 1e-8 * (1.0 + std::abs(fresh.log_det_cache)));
    Matrix lt = state.factorization().lower_triangular_factor;
    ASSERT_TRUE((lt * lt.transpose()).isApprox(rebuilt, 1e-8));
    ASSERT_NEAR(state.min_eig(), min_eigenvalue(rebuilt), 1e-9 * (1.0 + state.min_eig()));
  }
}

TEST(GramState, RefactorCounterCycles) {
  Rng rng = Rng::from_seed(17);
  const int d = 3, n = 10;
  std::vector<Vector> ground = random_ground_set(rng, d, n);
  GramState state(ground, {0, 1, 2, 3});
  int seen_reset = 0;
  int applied = 0;
  for (int attempt = 0; attempt < 2000 && applied < 140; ++attempt) {
    std::vector<int> in_set, out_set;
    for (int i = 0; i < n; ++i) (state.contains(i) ? in_set : out_set).push_back(i);
    int out = in_set[rng.next_below(in_set.size())];
    int in = out_set[rng.next_below(out_set.size())];
    Matrix target = state.gram() - ground[out] * ground[out].transpose() +
                    ground[in] * ground[in].transpose();
    if (min_eigenvalue(target) < 1e-6) continue;
    int before = state.refactor_counter();
    state.apply_exchange(ground, out, in);
    ++applied;
    if (before == GramState::kRefactorPeriod - 1) {
      EXPECT_EQ(state.refactor_counter(), 0);
      ++seen_reset;
    }
    ASSERT_LT(state.refactor_counter(), GramState::kRefactorPeriod);
  }
  ASSERT_GE(applied, 140);
  EXPECT_GE(seen_reset, 1);
}

TEST(GramState, RemovalToSingularThrows) {
  std::vector<Vector> ground;
  Vector e1(2), e2(2);
  e1 << 1, 0;
  e2 << 0, 1;
  ground = {e1, e2, e1};
  GramState state(ground, {0, 1});
  EXPECT_THROW(state.apply_exchange(ground, 1, 2), NotPositiveDefinite);
}

TEST(GramState, AdditionOnlyAndRemovalOnlySlots) {
  Rng rng = Rng::from_seed(18);
  std::vector<Vector> ground = random_ground_set(rng, 3, 8);
  GramState state(ground, {0, 1, 2, 3});
  Matrix before = state.gram();
  state.apply_exchange(ground, -1, 6);
  EXPECT_TRUE(
      state.gram().isApprox(before + ground[6] * ground[6].transpose(), 1e-12));
  EXPECT_EQ(state.subset().size(), 5u);
  state.apply_exchange(ground, 6, -1);
  EXPECT_TRUE(state.gram().isApprox(before, 1e-10));
  EXPECT_EQ(state.subset().size(), 4u);
}

}  // namespace
}  // namespace optdesign
