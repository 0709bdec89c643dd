#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "forcelr/rng.hpp"

using forcelr::SplitMix64;

// Reference outputs computed from the published SplitMix64 recurrence.
TEST(SplitMix64, KnownSequenceSeed0) {
  SplitMix64 g(0);
  EXPECT_EQ(g.next_u64(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(g.next_u64(), 0x6e789e6aa1b965f4ULL);
  EXPECT_EQ(g.next_u64(), 0x06c45d188009454fULL);
}

TEST(SplitMix64, KnownSequenceSeed42) {
  SplitMix64 g(42);
  EXPECT_EQ(g.next_u64(), 0xbdd732262feb6e95ULL);
  EXPECT_EQ(g.next_u64(), 0x28efe333b266f103ULL);
  EXPECT_EQ(g.next_u64(), 0x47526757130f9f52ULL);
}

TEST(SplitMix64, SameSeedSameStream) {
  SplitMix64 a(123456789), b(123456789);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(SplitMix64, UniformInHalfOpenUnitInterval) {
  SplitMix64 g(42);
  EXPECT_DOUBLE_EQ(g.uniform(), 0.7415648787718233);
  for (int i = 0; i < 10000; ++i) {
    const double u = g.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(SplitMix64, UniformRangeRespectsBounds) {
  SplitMix64 g(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = g.uniform(-2.5, 3.5);
    EXPECT_GE(u, -2.5);
    EXPECT_LT(u, 3.5);
  }
}

TEST(SplitMix64, IndexStaysInRange) {
  SplitMix64 g(9);
  std::vector<int> hits(10, 0);
  for (int i = 0; i < 10000; ++i) ++hits[g.index(10)];
  for (int c : hits) EXPECT_GT(c, 0);
}

TEST(SplitMix64, NormalMomentsRoughlyStandard) {
  SplitMix64 g(2024);
  const int n = 20000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = g.normal();
    sum += x;
    sumsq += x * x;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  EXPECT_NEAR(mean, 0.0, 0.03);
  EXPECT_NEAR(var, 1.0, 0.05);
}

TEST(SplitMix64, NormalStreamDeterministic) {
  SplitMix64 a(5), b(5);
  for (int i = 0; i < 101; ++i) EXPECT_EQ(a.normal(), b.normal());
}

TEST(SeedDerivation, Fnv1aKnownAnswers) {
  EXPECT_EQ(forcelr::fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(forcelr::fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(forcelr::fnv1a64("weights"), 0xb1494b6ef08a411eULL);
}

TEST(SeedDerivation, KnownAnswerAndLabelSeparation) {
  EXPECT_EQ(forcelr::derive_seed(7, "weights"), 0x92970897f0f80b66ULL);
  EXPECT_NE(forcelr::derive_seed(7, "weights"), forcelr::derive_seed(7, "biases"));
  EXPECT_NE(forcelr::derive_seed(7, "weights"), forcelr::derive_seed(8, "weights"));
  EXPECT_EQ(forcelr::derive_seed(7, "weights"), forcelr::derive_seed(7, "weights"));
}

TEST(SeedDerivation, IndexedStreamsDistinct) {
  EXPECT_NE(forcelr::derive_seed(7, "layer", 0), forcelr::derive_seed(7, "layer", 1));
  EXPECT_NE(forcelr::derive_seed(7, "layer", 0), forcelr::derive_seed(7, "layer"));
}
