#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "forcelr/filter_bank.hpp"
#include "forcelr/linalg.hpp"
#include "forcelr/matrix.hpp"
#include "forcelr/rng.hpp"

using forcelr::FilterMatrix;
using forcelr::Mat;
using forcelr::SplitMix64;

namespace {

FilterMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  FilterMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.data.resize(rows * cols);
  SplitMix64 g(seed);
  for (double& v : m.data) v = g.uniform(-1.0, 1.0);
  return m;
}

Mat random_symmetric(std::size_t n, std::uint64_t seed) {
  SplitMix64 g(seed);
  Mat a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      const double v = g.uniform(-1.0, 1.0);
      a(i, j) = v;
      a(j, i) = v;
    }
  return a;
}

}  // namespace

TEST(Covariance, IdentityRows) {
  FilterMatrix m;
  m.rows = 2;
  m.cols = 2;
  m.data = {1, 0, 0, 1};
  const Mat c = forcelr::covariance(m);
  EXPECT_DOUBLE_EQ(c(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(c(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(c(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(c(1, 1), 1.0);
}

TEST(Covariance, RankOneRows) {
  FilterMatrix m;
  m.rows = 2;
  m.cols = 2;
  m.data = {1, 1, 1, 1};
  const Mat c = forcelr::covariance(m);
  for (double v : c.a) EXPECT_DOUBLE_EQ(v, 2.0);
}

TEST(Covariance, MatchesNaiveDoubleLoop) {
  const FilterMatrix m = random_matrix(5, 12, 77);
  const Mat c = forcelr::covariance(m);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 12; ++k) s += m.row(i)[k] * m.row(j)[k];
      EXPECT_NEAR(c(i, j), s / 11.0, 1e-12);
      EXPECT_DOUBLE_EQ(c(i, j), c(j, i));
    }
}

TEST(Covariance, TraceEqualsRowNormSumOverDivisor) {
  const FilterMatrix m = random_matrix(7, 9, 123);
  const Mat c = forcelr::covariance(m);
  double expected = 0.0;
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double len = forcelr::norm2(m.row(i));
    expected += len * len;
  }
  expected /= double(m.cols - 1);
  EXPECT_NEAR(forcelr::trace(c), expected, 1e-10 * std::abs(expected));
}

TEST(Covariance, SingleColumnRejected) {
  const FilterMatrix m = random_matrix(3, 1, 5);
  EXPECT_THROW(forcelr::covariance(m), std::invalid_argument);
}

TEST(SymEigen, DiagonalInput) {
  Mat a(3, 3, {3, 0, 0, 0, 1, 0, 0, 0, 2});
  const auto eig = forcelr::sym_eigen(a);
  EXPECT_DOUBLE_EQ(eig.eigenvalues[0], 3.0);
  EXPECT_DOUBLE_EQ(eig.eigenvalues[1], 2.0);
  EXPECT_DOUBLE_EQ(eig.eigenvalues[2], 1.0);
  // axis eigenvectors, canonical positive orientation
  EXPECT_DOUBLE_EQ(eig.eigenvectors(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(eig.eigenvectors(2, 1), 1.0);
  EXPECT_DOUBLE_EQ(eig.eigenvectors(1, 2), 1.0);
}

TEST(SymEigen, ClassicTwoByTwo) {
  Mat a(2, 2, {2, 1, 1, 2});
  const auto eig = forcelr::sym_eigen(a);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(eig.eigenvalues[0], 3.0, 1e-12);
  EXPECT_NEAR(eig.eigenvalues[1], 1.0, 1e-12);
  EXPECT_NEAR(eig.eigenvectors(0, 0), inv_sqrt2, 1e-12);
  EXPECT_NEAR(eig.eigenvectors(1, 0), inv_sqrt2, 1e-12);
  EXPECT_NEAR(eig.eigenvectors(0, 1), inv_sqrt2, 1e-12);
  EXPECT_NEAR(eig.eigenvectors(1, 1), -inv_sqrt2, 1e-12);
}

TEST(SymEigen, ReconstructionAndOrthonormality) {
  const Mat a = random_symmetric(8, 31415);
  const auto eig = forcelr::sym_eigen(a);

  for (std::size_t k = 0; k + 1 < 8; ++k)
    EXPECT_GE(eig.eigenvalues[k], eig.eigenvalues[k + 1]);

  double tr = 0.0;
  for (double v : eig.eigenvalues) tr += v;
  EXPECT_NEAR(tr, forcelr::trace(a), 1e-9 * std::abs(forcelr::trace(a)));

  const Mat vtv = forcelr::matmul_tn(eig.eigenvectors, eig.eigenvectors);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j)
      EXPECT_NEAR(vtv(i, j), i == j ? 1.0 : 0.0, 1e-8);

  // V diag(lambda) V^T == A
  Mat vl = eig.eigenvectors;
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t k = 0; k < 8; ++k) vl(i, k) *= eig.eigenvalues[k];
  const Mat rec = forcelr::matmul(vl, forcelr::transpose(eig.eigenvectors));
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(rec(i, j), a(i, j), 1e-8);
}

TEST(SymEigen, EigenpairResidualsSmall) {
  const Mat a = random_symmetric(6, 999);
  const auto eig = forcelr::sym_eigen(a);
  for (std::size_t k = 0; k < 6; ++k) {
    double res_sq = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
      double av = 0.0;
      for (std::size_t j = 0; j < 6; ++j) av += a(i, j) * eig.eigenvectors(j, k);
      const double r = av - eig.eigenvalues[k] * eig.eigenvectors(i, k);
      res_sq += r * r;
    }
    EXPECT_LE(std::sqrt(res_sq), 1e-8 * (1.0 + std::abs(eig.eigenvalues[k])));
  }
}

TEST(SymEigen, AsymmetricInputRejected) {
  Mat a(2, 2, {1, 2, 3, 4});
  EXPECT_THROW(forcelr::sym_eigen(a), std::invalid_argument);
}

TEST(SymEigen, PsdClampZeroesTinyNegatives) {
  Mat a(2, 2, {1.0, 0.0, 0.0, -1e-13});
  forcelr::SymEigenOptions opts;
  opts.psd_clamp_tol = 1e-12;
  const auto eig = forcelr::sym_eigen(a, opts);
  EXPECT_DOUBLE_EQ(eig.eigenvalues[1], 0.0);
  const auto raw = forcelr::sym_eigen(a);
  EXPECT_DOUBLE_EQ(raw.eigenvalues[1], -1e-13);
}

TEST(JacobiSvd, ReconstructsRandomMatrix) {
  const FilterMatrix m = random_matrix(6, 11, 404);
  const auto svd = forcelr::jacobi_svd(m.as_mat());

  for (std::size_t k = 0; k + 1 < 6; ++k)
    EXPECT_GE(svd.singular_values[k], svd.singular_values[k + 1]);

  const Mat utu = forcelr::matmul_tn(svd.u, svd.u);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      EXPECT_NEAR(utu(i, j), i == j ? 1.0 : 0.0, 1e-10);

  Mat us = svd.u;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t k = 0; k < 6; ++k) us(i, k) *= svd.singular_values[k];
  const Mat rec = forcelr::matmul(us, svd.vt);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 11; ++j) EXPECT_NEAR(rec(i, j), m.row(i)[j], 1e-10);
}

TEST(JacobiSvd, SingularValuesMatchCovarianceEigenvalues) {
  const FilterMatrix m = random_matrix(5, 9, 2025);
  const auto svd = forcelr::jacobi_svd(m.as_mat());
  const auto eig = forcelr::sym_eigen(forcelr::covariance(m));
  for (std::size_t k = 0; k < 5; ++k) {
    const double sv_sq = svd.singular_values[k] * svd.singular_values[k];
    EXPECT_NEAR(sv_sq / double(m.cols - 1), eig.eigenvalues[k],
                1e-10 * (1.0 + std::abs(eig.eigenvalues[k])));
  }
}

TEST(JacobiSvd, ZeroRowsHandled) {
  Mat a(3, 4);
  a(0, 1) = 2.0;
  const auto svd = forcelr::jacobi_svd(a);
  EXPECT_NEAR(svd.singular_values[0], 2.0, 1e-12);
  EXPECT_NEAR(svd.singular_values[1], 0.0, 1e-12);
  EXPECT_NEAR(svd.singular_values[2], 0.0, 1e-12);
  Mat us = svd.u;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 3; ++k) us(i, k) *= svd.singular_values[k];
  const Mat rec = forcelr::matmul(us, svd.vt);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(rec(i, j), a(i, j), 1e-12);
}
