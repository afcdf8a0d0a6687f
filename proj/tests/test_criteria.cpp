#include <gtest/gtest.h>

#include <random>

#include "sepsis_hmm/criteria.hpp"
#include "test_support.hpp"

using namespace sepsis_hmm;
using sepsis_hmm::testing::vitals;

TEST(Sirs, BoundaryValuesAreNotMet) {
  const auto f = sirs_flags(vitals(120, 70, 90.0, 20.0, 98.0));
  EXPECT_FALSE(f.heart_rate);
  EXPECT_FALSE(f.respiratory_rate);
  EXPECT_FALSE(f.temperature);
}

TEST(Sirs, HeartRateAndRespiratoryRate) {
  const auto f = sirs_flags(vitals(120, 70, 91, 22, 98.6));
  EXPECT_TRUE(f.heart_rate);
  EXPECT_TRUE(f.respiratory_rate);
  EXPECT_FALSE(f.temperature);
}

TEST(Sirs, TemperatureIsTwoSided) {
  EXPECT_TRUE(sirs_flags(vitals(120, 70, 80, 16, 96.7)).temperature);
  EXPECT_TRUE(sirs_flags(vitals(120, 70, 80, 16, 100.5)).temperature);
  EXPECT_FALSE(sirs_flags(vitals(120, 70, 80, 16, 96.8)).temperature);
  EXPECT_FALSE(sirs_flags(vitals(120, 70, 80, 16, 100.4)).temperature);
}

TEST(Sepsis1, TwoOfThree) {
  EXPECT_TRUE(sepsis1_met(SirsFlags{true, true, false}));
  EXPECT_FALSE(sepsis1_met(SirsFlags{true, false, false}));
  EXPECT_TRUE(sepsis1_met(SirsFlags{true, true, true}));
  EXPECT_FALSE(sepsis1_met(SirsFlags{false, false, false}));
}

TEST(Qsofa, NonStrictConjunction) {
  EXPECT_TRUE(qsofa_met(vitals(100, 60, 80, 22, 98)));
  EXPECT_FALSE(qsofa_met(vitals(101, 60, 80, 30, 98)));
  EXPECT_FALSE(qsofa_met(vitals(95, 60, 80, 21.9, 98)));
}

// Every combination of the boundary grid, checked against the rules written
// out longhand.
TEST(CriteriaTruthTable, ExhaustiveBoundaries) {
  const double hrs[] = {89.9, 90, 90.1};
  const double rrs[] = {19.9, 20, 20.1, 21.9, 22, 22.1};
  const double temps[] = {96.7, 96.8, 96.9, 100.3, 100.4, 100.5};
  const double sbps[] = {99.9, 100, 100.1};
  int checked = 0;
  for (double hr : hrs)
    for (double rr : rrs)
      for (double temp : temps)
        for (double sbp : sbps) {
          const auto f = criteria_flags(vitals(sbp, 50, hr, rr, temp));
          const bool e_hr = hr > 90;
          const bool e_rr = rr > 20;
          const bool e_temp = temp < 96.8 || temp > 100.4;
          const bool e_sepsis1 = (int(e_hr) + int(e_rr) + int(e_temp)) >= 2;
          const bool e_qsofa = sbp <= 100 && rr >= 22;
          EXPECT_EQ(f.sirs_hr, e_hr);
          EXPECT_EQ(f.sirs_rr, e_rr);
          EXPECT_EQ(f.sirs_temp, e_temp);
          EXPECT_EQ(f.sepsis1_met, e_sepsis1);
          EXPECT_EQ(f.qsofa_sbp, sbp <= 100);
          EXPECT_EQ(f.qsofa_rr, rr >= 22);
          EXPECT_EQ(f.qsofa_met, e_qsofa);
          EXPECT_EQ(f.met(Criterion::Sepsis1), e_sepsis1);
          EXPECT_EQ(f.met(Criterion::Qsofa), e_qsofa);
          ++checked;
        }
  EXPECT_EQ(checked, 3 * 6 * 6 * 3);
}

TEST(CriteriaFlags, InvariantsOnRandomVitals) {
  std::mt19937_64 eng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const auto x = vitals(110 + 20 * n(eng), 60, 90 + 15 * n(eng), 21 + 3 * n(eng), 98.6 + 2 * n(eng));
    const auto f = criteria_flags(x);
    EXPECT_EQ(f.sepsis1_met, (int(f.sirs_hr) + int(f.sirs_rr) + int(f.sirs_temp)) >= 2);
    EXPECT_EQ(f.qsofa_met, f.qsofa_sbp && f.qsofa_rr);
    // Raising HR never clears the HR flag.
    auto y = x;
    y.values[index(Vital::HeartRate)] += std::abs(n(eng));
    if (f.sirs_hr) {
      EXPECT_TRUE(sirs_flags(y).heart_rate);
    }
  }
}

TEST(Segments, RunLengthEncoding) {
  const auto s = segments_from_mask({false, true, true, false, true});
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0], (Segment{1, 3}));
  EXPECT_EQ(s[1], (Segment{4, 5}));
}

TEST(Segments, AllFalseAndAllTrue) {
  EXPECT_TRUE(segments_from_mask({false, false, false}).empty());
  const auto s = segments_from_mask({true, true, true, true});
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0], (Segment{0, 4}));
}

TEST(Segments, RoundTripRandomMasks) {
  std::mt19937_64 eng(9);
  std::bernoulli_distribution coin(0.4);
  for (int n = 0; n < 2000; ++n) {
    std::vector<bool> mask(1 + n % 40);
    for (auto&& b : mask) b = coin(eng);
    const auto segs = segments_from_mask(mask);
    for (std::size_t i = 0; i < segs.size(); ++i) {
      EXPECT_LT(segs[i].start, segs[i].end);
      if (i > 0) {
        EXPECT_LT(segs[i - 1].end, segs[i].start);  // maximal: never adjacent
      }
    }
    EXPECT_EQ(mask_from_segments(segs, mask.size()), mask);
  }
}

TEST(Segments, OutOfRangeRejected) {
  EXPECT_THROW(mask_from_segments({Segment{2, 6}}, 5), std::out_of_range);
}

TEST(Segments, FromEpisode) {
  const auto e = sepsis_hmm::testing::make_episode(
      "e", {vitals(95, 50, 95, 23, 98), vitals(120, 70, 80, 16, 98), vitals(98, 50, 80, 25, 101)});
  const auto s1 = criteria_segments(e, Criterion::Sepsis1);
  ASSERT_EQ(s1.size(), 2u);
  EXPECT_EQ(s1[0], (Segment{0, 1}));
  EXPECT_EQ(s1[1], (Segment{2, 3}));
  const auto q = criteria_segments(e, Criterion::Qsofa);
  EXPECT_EQ(mask_from_segments(q, 3), (std::vector<bool>{true, false, true}));
}
