// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "tdz/svd.hpp"
#include "tdz/tensor_ops.hpp"

using namespace tdz;

namespace {

Tensor<double> rebuild(const SvdTriple<double>& t) {
  auto us = t.u;
  for (Index i = 0; i < us.dim(0); ++i)
    for (Index k = 0; k < us.dim(1); ++k) us(i, k) *= t.s[k];
  return matmul(us, t.v);
}

}  // namespace

TEST(Svd, DiagonalMatrixGivesSortedValues) {
  const auto m = Tensor<double>::matrix({{1, 0, 0}, {0, 3, 0}, {0, 0, 2}});
  const auto t = svd_full(m);
  ASSERT_EQ(t.s.size(), 3u);
  EXPECT_NEAR(t.s[0], 3.0, 1e-14);
  EXPECT_NEAR(t.s[1], 2.0, 1e-14);
  EXPECT_NEAR(t.s[2], 1.0, 1e-14);
}

TEST(Svd, MatchesEigenOracleAcrossShapes) {
  std::mt19937_64 rng(21);
  for (const auto& [r, c] : std::vector<std::pair<Index, Index>>{{6, 6}, {9, 4}, {4, 9}, {1, 7}, {7, 1}, {30, 17}}) {
    const auto m = oracle::random_tensor({r, c}, rng).cast<double>();
    const auto t = svd_full(m);
    const auto want = oracle::singular_values(oracle::to_mat(m));
    ASSERT_EQ(t.s.size(), std::min(r, c));
    for (Index k = 0; k < t.s.size(); ++k) EXPECT_NEAR(t.s[k], want[k], 1e-10 * want[0]) << r << "x" << c;
    EXPECT_LT(oracle::orthonormality_gap(t.u), 1e-12);
    EXPECT_LT(oracle::orthonormality_gap(transpose(t.v)), 1e-12);
    EXPECT_LT(relative_error(m, rebuild(t)), 1e-12);
    for (Index k = 1; k < t.s.size(); ++k) EXPECT_GE(t.s[k - 1], t.s[k]);
  }
}

TEST(Svd, RankDeficientInputKeepsOrthonormalFactors) {
  // Rank 2 in a 6x5 matrix: the null directions still come back orthonormal.
  std::mt19937_64 rng(22);
  const auto m = oracle::planted(6, 5, {4.0, 1.0}, rng);
  const auto t = svd_full(oracle::to_tensor(m).cast<double>());
  EXPECT_NEAR(t.s[0], 4.0, 1e-6);
  EXPECT_NEAR(t.s[1], 1.0, 1e-6);
  for (Index k = 2; k < 5; ++k) EXPECT_LT(t.s[k], 1e-6);
  EXPECT_LT(oracle::orthonormality_gap(t.u), 1e-12);
  EXPECT_LT(oracle::orthonormality_gap(transpose(t.v)), 1e-12);
}

TEST(Svd, ZeroMatrix) {
  const Tensor<double> z({3, 4});
  const auto t = svd_full(z);
  for (double s : t.s) EXPECT_EQ(s, 0.0);
  EXPECT_LT(oracle::orthonormality_gap(t.u), 1e-12);
}

TEST(Svd, TruncationErrorIsTailNorm) {
  std::mt19937_64 rng(23);
  const std::vector<double> s{10, 7, 5, 2, 1, 0.5, 0.1};
  const auto m = oracle::to_tensor(oracle::planted(12, 9, s, rng)).cast<double>();
  for (Index rank = 1; rank <= s.size(); ++rank) {
    const auto t = svd_truncated(m, rank);
    double tail = 0.0;
    for (Index k = rank; k < s.size(); ++k) tail += s[k] * s[k];
    const double err = frobenius_norm(m) * relative_error(m, rebuild(t));
    EXPECT_NEAR(err, std::sqrt(tail), 1e-5 * frobenius_norm(m));
  }
  EXPECT_THROW(svd_truncated(m, 0), ShapeError);
  EXPECT_THROW(svd_truncated(m, 10), ShapeError);
}

TEST(Svd, NonFiniteInputIsRejected) {
  const std::vector<double> bad{1.0, std::numeric_limits<double>::quiet_NaN(), 0.0, 1.0};
  EXPECT_THROW(detail::svd_double(2, 2, bad, true, true, {}), ValueError);
}

TEST(Svd, SweepBudgetIsEnforced) {
  std::mt19937_64 rng(24);
  const auto m = oracle::random_tensor({40, 40}, rng).cast<double>();
  SvdOptions opt;
  opt.max_sweeps = 1;
  EXPECT_THROW(svd_full(m, opt), ConvergenceError);
}

TEST(Svd, FloatInputIsComputedInDouble) {
  std::mt19937_64 rng(25);
  const auto m = oracle::random_tensor({8, 5}, rng);
  const auto t = svd_full(m);
  const auto want = oracle::singular_values(oracle::to_mat(m));
  for (Index k = 0; k < 5; ++k) EXPECT_NEAR(t.s[k], want[k], 1e-10 * want[0]);
}

TEST(SymmetricEigen, MatchesJacobiOracle) {
  std::mt19937_64 rng(26);
  for (Index n : {1, 2, 5, 24}) {
    const auto a = oracle::random_tensor({n, n}, rng).cast<double>();
    auto sym = matmul(a, transpose(a));
    const auto eig = detail::symmetric_eigen(std::vector<double>(sym.data().begin(), sym.data().end()), n);
    const auto want = oracle::symmetric_eigenvalues(oracle::to_mat(sym));
    for (Index k = 0; k < n; ++k) EXPECT_NEAR(eig.values[k], want[k], 1e-10 * (1.0 + want[0]));
    const Tensor<double> v({n, n}, eig.vectors);
    EXPECT_LT(oracle::orthonormality_gap(v), 1e-12);
    // A·v_k = λ_k·v_k
    const auto av = matmul(sym, v);
    for (Index i = 0; i < n; ++i)
      for (Index k = 0; k < n; ++k) EXPECT_NEAR(av(i, k), eig.values[k] * v(i, k), 1e-9 * (1.0 + want[0]));
  }
}

TEST(LeadingSubspace, SpansTheDominantLeftSingularVectors) {
  std::mt19937_64 rng(27);
  const auto m = oracle::to_tensor(oracle::planted(6, 40, {9, 7, 5, 0.3, 0.2, 0.1}, rng)).cast<double>();
  const auto q = detail::leading_subspace(m, 3);
  const auto u = detail::left_singular_vectors(m, 3);
  EXPECT_LT(oracle::orthonormality_gap(q), 1e-12);
  // Same subspace: the projector difference vanishes.
  const auto pq = matmul(q, transpose(q));
  const auto pu = matmul(u, transpose(u));
  for (Index i = 0; i < pq.size(); ++i) EXPECT_NEAR(pq.data()[i], pu.data()[i], 1e-6);
}

TEST(LeftSingularVectors, ExtendsBasisBeyondRank) {
  // A 4x2 matrix asked for 3 left vectors: the third completes the basis.
  const auto m = Tensor<double>::matrix({{1, 0}, {0, 1}, {0, 0}, {0, 0}});
  const auto u = detail::left_singular_vectors(m, 3);
  EXPECT_EQ(u.shape(), (Shape{4, 3}));
  EXPECT_LT(oracle::orthonormality_gap(u), 1e-12);
}
