#include <gtest/gtest.h>

#include <random>

#include "sepsis_hmm/kde.hpp"

using namespace sepsis_hmm;

TEST(KdeMap, IdenticalSamplesReturnThatValue) {
  const std::vector<double> v(50, 3.7);
  EXPECT_EQ(kde_map(v), 3.7);
}

TEST(KdeMap, NormalSampleModeNearMean) {
  std::mt19937_64 eng(11);
  std::normal_distribution<double> n(5.0, 1.0);
  std::vector<double> v(100000);
  for (auto& x : v) x = n(eng);
  EXPECT_NEAR(kde_map(v), 5.0, 0.05);
}

// Two equal, well-separated modes: either is acceptable, the midpoint is not.
TEST(KdeMap, BimodalPicksAMode) {
  std::mt19937_64 eng(4);
  std::normal_distribution<double> n(0.0, 0.5);
  std::vector<double> v;
  for (int i = 0; i < 5000; ++i) {
    v.push_back(-5.0 + n(eng));
    v.push_back(5.0 + n(eng));
  }
  const double m = kde_map(v);
  EXPECT_NEAR(std::abs(m), 5.0, 0.2);
}

TEST(KdeMap, SkewedSampleModeBelowMean) {
  std::mt19937_64 eng(6);
  std::gamma_distribution<double> g(3.0, 1.0);  // mode 2, mean 3
  std::vector<double> v(50000);
  for (auto& x : v) x = g(eng);
  EXPECT_NEAR(kde_map(v), 2.0, 0.2);
}

TEST(KdeMap, OrderInvariant) {
  std::mt19937_64 eng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(500);
  for (auto& x : v) x = n(eng);
  auto w = v;
  std::shuffle(w.begin(), w.end(), eng);
  auto s = v;
  std::sort(s.begin(), s.end());
  EXPECT_EQ(kde_map(s), kde_map(std::vector<double>(s)));
  EXPECT_EQ(kde_map(v), kde_map(w));
}

TEST(KdeMap, TooFewSamplesRejected) {
  EXPECT_THROW(kde_map(std::vector<double>(9, 1.0)), ValidationError);
  EXPECT_NO_THROW(kde_map(std::vector<double>(10, 1.0)));
}

TEST(KdeMap, NonFiniteRejected) {
  std::vector<double> v(20, 1.0);
  v[3] = std::nan("");
  EXPECT_THROW(kde_map(v), ValidationError);
}

TEST(SilvermanBandwidth, MatchesRuleOfThumb) {
  // sd of {1..10} is sqrt(55/6) ~ 3.03; IQR (type 7) is 4.5, so IQR/1.34 > sd.
  std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  const double expected = 1.06 * std::sqrt(55.0 / 6.0) * std::pow(10.0, -0.2);
  EXPECT_NEAR(silverman_bandwidth(v), expected, 1e-12);
  // Heavy outliers: the IQR branch takes over.
  std::vector<double> w{1, 2, 3, 4, 5, 6, 7, 8, 9, 1000};
  EXPECT_NEAR(silverman_bandwidth(w), 1.06 * (4.5 / 1.34) * std::pow(10.0, -0.2), 1e-12);
}
