#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "optprof/random.hpp"

using namespace optprof;

TEST(Random, EngineMatchesStandardReferenceValue) {
  // The C++ standard fixes the 10000th output of a default-seeded mt19937_64.
  std::mt19937_64 rng;
  rng.discard(9999);
  EXPECT_EQ(rng(), 9981545732273789042ULL);
}

TEST(Random, DerivedStreamsAreStableAndDistinct) {
  EXPECT_EQ(derive_seed(1, 2), derive_seed(1, 2));
  EXPECT_NE(derive_seed(1, 2), derive_seed(1, 3));
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 2));
  Rng a = make_rng(5, 9), b = make_rng(5, 9);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a(), b());
}

TEST(Random, Uniform01StaysInUnitInterval) {
  Rng rng = make_rng(3);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = uniform01(rng);
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000, 0.5, 0.01);
}

TEST(Random, UniformIndexCoversRange) {
  Rng rng = make_rng(4);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 70000; ++i) ++hits[uniform_index(rng, 7)];
  for (int h : hits) EXPECT_NEAR(h, 10000, 500);
}

TEST(Random, CategoricalPassesChiSquare) {
  const std::vector<double> w{0.1, 0.0, 0.3, 0.6};
  Rng rng = make_rng(11);
  std::vector<double> counts(w.size(), 0.0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) counts[sample_categorical(rng, w)] += 1.0;
  EXPECT_EQ(counts[1], 0.0);
  double chi2 = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k)
    if (w[k] > 0.0) chi2 += std::pow(counts[k] - n * w[k], 2) / (n * w[k]);
  // 2 degrees of freedom: the 0.999 quantile is 13.8.
  EXPECT_LT(chi2, 13.8);
}

TEST(Random, CategoricalRejectsZeroMass) {
  Rng rng = make_rng(0);
  const std::vector<double> w{0.0, 0.0};
  EXPECT_THROW(sample_categorical(rng, w), ConfigError);
}

TEST(Random, NormalMoments) {
  Rng rng = make_rng(12);
  const int n = 200000;
  double m1 = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = standard_normal(rng);
    m1 += z;
    m2 += z * z;
  }
  EXPECT_NEAR(m1 / n, 0.0, 0.01);
  EXPECT_NEAR(m2 / n, 1.0, 0.02);
}
