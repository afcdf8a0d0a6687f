#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "sepsis_hmm/analysis.hpp"
#include "sepsis_hmm/cohort_sim.hpp"
#include "test_support.hpp"

using namespace sepsis_hmm;
namespace st = sepsis_hmm::testing;

namespace {

FractionMetric fm(double v, Outcome o) { return {"e", MetricKind::S3, v, o}; }

// KL sums written out term by term.
double hand_jsd(const std::vector<double>& p, const std::vector<double>& q) {
  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0) a += p[i] * std::log(p[i] / m);
    if (q[i] > 0) b += q[i] * std::log(q[i] / m);
  }
  return 0.5 * a + 0.5 * b;
}

std::vector<double> random_masses(std::size_t n, std::mt19937_64& eng, double zero_prob = 0.2) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(n);
  double s = 0.0;
  for (auto& x : v) {
    x = u(eng) < zero_prob ? 0.0 : u(eng);
    s += x;
  }
  if (s == 0.0) {
    v[0] = 1.0;
    s = 1.0;
  }
  for (auto& x : v) x /= s;
  return v;
}

TrajectoryRecord record(const std::string& id, Outcome o, std::vector<TransientState> states,
                        std::vector<bool> sepsis1, std::vector<bool> qsofa) {
  TrajectoryRecord r{id, o, {}, {}};
  for (std::size_t t = 0; t < states.size(); ++t) {
    TrajectoryPoint p;
    p.interval = t;
    p.state = states[t];
    p.sepsis1_met = sepsis1[t];
    p.qsofa_met = qsofa[t];
    r.points.push_back(p);
  }
  return r;
}

}  // namespace

TEST(FractionFlagged, Examples) {
  EXPECT_EQ(fraction_flagged(4, {true, false, false, false}), 0.25);
  EXPECT_EQ(fraction_flagged(3, {false, false, false}), 0.0);
  EXPECT_EQ(fraction_flagged(2, {true, true}), 1.0);
  EXPECT_THROW(fraction_flagged(3, {true, false}), std::invalid_argument);
  EXPECT_THROW(fraction_flagged(0, {}), std::invalid_argument);
}

TEST(FractionFlagged, SameFromSegments) {
  std::mt19937_64 eng(2);
  std::bernoulli_distribution coin(0.3);
  for (int i = 0; i < 500; ++i) {
    std::vector<bool> mask(1 + i % 25);
    for (auto&& b : mask) b = coin(eng);
    const auto v = fraction_flagged(mask.size(), mask);
    const auto via = fraction_flagged(mask.size(), mask_from_segments(segments_from_mask(mask), mask.size()));
    EXPECT_EQ(v, via);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(ConditionalHistograms, OnePatientPerGroup) {
  const std::vector<FractionMetric> m{fm(0.0, Outcome::Discharged), fm(1.0, Outcome::Died)};
  const auto h = conditional_histograms(m, 2);
  EXPECT_EQ(h.discharged, (std::vector<double>{2.0, 0.0}));
  EXPECT_EQ(h.died, (std::vector<double>{0.0, 2.0}));
  EXPECT_EQ(h.edges, (std::vector<double>{0.0, 0.5, 1.0}));
}

TEST(ConditionalHistograms, IdenticalGroupsGiveIdenticalDensities) {
  std::vector<FractionMetric> m;
  for (double v : {0.1, 0.4, 0.4, 0.95}) {
    m.push_back(fm(v, Outcome::Discharged));
    m.push_back(fm(v, Outcome::Died));
  }
  const auto h = conditional_histograms(m, 20);
  EXPECT_EQ(h.discharged, h.died);
  EXPECT_EQ(js_divergence(h), 0.0);
}

TEST(ConditionalHistograms, CensoredExcludedAndEmptyGroupsNamed) {
  const std::vector<FractionMetric> m{fm(0.3, Outcome::Discharged), fm(0.3, Outcome::Censored)};
  try {
    conditional_histograms(m, 4);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("Died"), std::string::npos);
  }
  const std::vector<FractionMetric> m2{fm(0.3, Outcome::Died)};
  try {
    conditional_histograms(m2, 4);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("Discharged"), std::string::npos);
  }
}

// Bin masses times group sizes recover the raw counts, recounted here.
TEST(ConditionalHistograms, RecountAndUnitArea) {
  std::mt19937_64 eng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<FractionMetric> m;
  const Outcome outcomes[] = {Outcome::Discharged, Outcome::Died, Outcome::Censored};
  for (int i = 0; i < 3000; ++i) m.push_back(fm(i % 97 == 0 ? 1.0 : u(eng), outcomes[i % 3]));
  const std::size_t n_bins = 20;
  const auto h = conditional_histograms(m, n_bins);
  std::vector<double> dis(n_bins, 0.0), died(n_bins, 0.0);
  for (const auto& x : m) {
    if (x.outcome == Outcome::Censored) continue;
    std::size_t b = 0;
    while (b + 1 < n_bins && x.value >= static_cast<double>(b + 1) / n_bins) ++b;
    (x.outcome == Outcome::Discharged ? dis : died)[b] += 1.0;
  }
  double area_dis = 0.0, area_died = 0.0;
  for (std::size_t b = 0; b < n_bins; ++b) {
    EXPECT_NEAR(h.discharged[b] / n_bins * h.n_discharged, dis[b], 1e-9);
    EXPECT_NEAR(h.died[b] / n_bins * h.n_died, died[b], 1e-9);
    area_dis += h.discharged[b] / n_bins;
    area_died += h.died[b] / n_bins;
  }
  EXPECT_NEAR(area_dis, 1.0, 1e-9);
  EXPECT_NEAR(area_died, 1.0, 1e-9);
  EXPECT_EQ(h.n_discharged + h.n_died, 2000u);
}

TEST(JsDivergence, AnalyticCases) {
  const std::vector<double> p{0.2, 0.3, 0.5};
  EXPECT_EQ(js_divergence(p, p), 0.0);
  const std::vector<double> a{0.5, 0.5, 0.0, 0.0}, b{0.0, 0.0, 0.25, 0.75};
  EXPECT_NEAR(js_divergence(a, b), std::numbers::ln2, 1e-12);
  const std::vector<double> h{0.5, 0.5}, k{1.0, 0.0};
  EXPECT_NEAR(js_divergence(h, k), hand_jsd(h, k), 1e-15);
  // Closed form: 0.5 * [0.5 ln(2/3) + 0.5 ln 2] + 0.5 * ln(4/3).
  EXPECT_NEAR(js_divergence(h, k),
              0.5 * (0.5 * std::log(0.5 / 0.75) + 0.5 * std::log(2.0)) + 0.5 * std::log(1.0 / 0.75),
              1e-15);
}

TEST(JsDivergence, RejectsUnnormalisedInput) {
  const std::vector<double> p{0.5, 0.6}, q{0.5, 0.5};
  EXPECT_THROW(js_divergence(p, q), std::invalid_argument);
  const std::vector<double> r{0.5, 0.5, 0.0};
  EXPECT_THROW(js_divergence(q, r), std::invalid_argument);
  const std::vector<double> neg{1.5, -0.5};
  EXPECT_THROW(js_divergence(neg, q), std::invalid_argument);
}

TEST(JsDivergence, RandomizedProperties) {
  std::mt19937_64 eng(6);
  for (int i = 0; i < 20000; ++i) {
    const std::size_t n = 1 + i % 30;
    const auto p = random_masses(n, eng);
    const auto q = random_masses(n, eng);
    const double d = js_divergence(p, q);
    EXPECT_EQ(d, js_divergence(q, p));
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, std::numbers::ln2 + 1e-12);
    EXPECT_NEAR(d, hand_jsd(p, q), 1e-12);
    EXPECT_EQ(js_divergence(p, p), 0.0);
    if (p != q) {
      EXPECT_GT(d, 0.0);
    }
  }
}

TEST(OverlapStats, Examples) {
  const CriteriaSegments a{{0, 4}}, b{{2, 6}};
  const auto s = overlap_stats(a, b, 8);
  EXPECT_DOUBLE_EQ(s.jaccard, 2.0 / 6.0);
  EXPECT_DOUBLE_EQ(s.covered_a_by_b, 2.0 / 4.0);
  EXPECT_DOUBLE_EQ(s.covered_b_by_a, 2.0 / 4.0);

  const auto same = overlap_stats(a, a, 8);
  EXPECT_EQ(same.jaccard, 1.0);
  EXPECT_EQ(same.covered_a_by_b, 1.0);
  const auto apart = overlap_stats(CriteriaSegments{{0, 2}}, CriteriaSegments{{5, 7}}, 8);
  EXPECT_EQ(apart.jaccard, 0.0);
  EXPECT_EQ(apart.covered_a_by_b, 0.0);
  EXPECT_EQ(apart.covered_b_by_a, 0.0);
  const auto empty = overlap_stats({}, {}, 8);
  EXPECT_EQ(empty.jaccard, 1.0);
  EXPECT_THROW(overlap_stats(CriteriaSegments{{6, 9}}, {}, 8), std::out_of_range);
}

TEST(OverlapStats, JaccardSymmetric) {
  std::mt19937_64 eng(8);
  std::bernoulli_distribution coin(0.4);
  for (int i = 0; i < 2000; ++i) {
    const std::size_t n = 1 + i % 30;
    std::vector<bool> ma(n), mb(n);
    for (std::size_t t = 0; t < n; ++t) {
      ma[t] = coin(eng);
      mb[t] = coin(eng);
    }
    const auto a = segments_from_mask(ma), b = segments_from_mask(mb);
    const auto ab = overlap_stats(a, b, n), ba = overlap_stats(b, a, n);
    EXPECT_EQ(ab.jaccard, ba.jaccard);
    EXPECT_EQ(ab.covered_a_by_b, ba.covered_b_by_a);
  }
}

TEST(SeverityReport, DegenerateAllS3) {
  std::vector<LatentPath> decoded{{TransientState::S3, TransientState::S3}};
  CriteriaFlags f;
  f.sepsis1_met = true;
  f.qsofa_met = true;
  std::vector<std::vector<CriteriaFlags>> flags{{f, f}};
  const auto r = severity_monotonicity_report(decoded, flags);
  EXPECT_FALSE(r.sepsis1[0].has_value());
  EXPECT_FALSE(r.sepsis1[1].has_value());
  EXPECT_EQ(r.sepsis1[2], 1.0);
  EXPECT_EQ(r.qsofa[2], 1.0);
}

TEST(SeverityReport, IndependentFlagsGiveEqualRates) {
  std::mt19937_64 eng(10);
  std::uniform_int_distribution<int> k(0, 2);
  std::bernoulli_distribution coin(0.3);
  std::vector<LatentPath> decoded(300);
  std::vector<std::vector<CriteriaFlags>> flags(300);
  for (std::size_t i = 0; i < 300; ++i)
    for (int t = 0; t < 20; ++t) {
      decoded[i].push_back(transient_from_index(static_cast<std::size_t>(k(eng))));
      CriteriaFlags f;
      f.sepsis1_met = coin(eng);
      flags[i].push_back(f);
    }
  const auto r = severity_monotonicity_report(decoded, flags);
  for (std::size_t s = 0; s < 3; ++s) {
    const double se = std::sqrt(0.3 * 0.7 / static_cast<double>(r.intervals[s]));
    EXPECT_NEAR(*r.sepsis1[s], 0.3, 3 * se);
  }
}

TEST(SeverityReport, S3MoreOftenSepsisPositiveThanS1) {
  CohortSpec spec;
  spec.n_patients = 500;
  spec.seed = 44;
  const auto sims = simulate_cohort(default_ground_truth(), spec);
  std::vector<LatentPath> decoded;
  std::vector<std::vector<CriteriaFlags>> flags;
  for (const auto& s : sims) {
    decoded.push_back(decode(s.episode, default_ground_truth(), {.n_sweeps = 300, .n_keep = 200}).map_states);
    flags.push_back(criteria_flags(s.episode));
  }
  const auto r = severity_monotonicity_report(decoded, flags);
  EXPECT_GT(*r.sepsis1[2], *r.sepsis1[0]);
}

TEST(SeverityReport, MisalignedInputsRejected) {
  std::vector<LatentPath> decoded{{TransientState::S1}};
  std::vector<std::vector<CriteriaFlags>> flags{{CriteriaFlags{}, CriteriaFlags{}}};
  EXPECT_THROW(severity_monotonicity_report(decoded, flags), std::invalid_argument);
}

TEST(TrajectoryExport, SingleInterval) {
  const auto e = st::make_episode("t1", {st::vitals(95, 50, 95, 23, 101)}, Outcome::Died,
                                  Covariates{{0.1, 0.2, 0.3}});
  DecodeResult d{{TransientState::S3}, {{0.1, 0.2, 0.7}}};
  const auto r = trajectory_export(e, d, criteria_flags(e));
  ASSERT_EQ(r.points.size(), 1u);
  EXPECT_EQ(r.episode_id, "t1");
  EXPECT_EQ(r.outcome, Outcome::Died);
  EXPECT_EQ(r.covariates, e.covariates);
  EXPECT_EQ(r.points[0].interval, 0u);
  EXPECT_EQ(r.points[0].vitals, e.intervals[0]);
  EXPECT_EQ(r.points[0].state, TransientState::S3);
  EXPECT_EQ(r.points[0].probabilities[2], 0.7);
  EXPECT_TRUE(r.points[0].sepsis1_met);
  EXPECT_TRUE(r.points[0].qsofa_met);
}

TEST(TrajectoryExport, RecordCountEqualsLengthAndMisalignmentRejected) {
  const auto mp = default_ground_truth();
  const auto e = st::flat_episode("e", 5, mp.emission, TransientState::S2);
  const auto d = decode(e, mp, {.n_sweeps = 20, .n_keep = 10});
  EXPECT_EQ(trajectory_export(e, d, criteria_flags(e)).points.size(), 5u);
  auto short_flags = criteria_flags(e);
  short_flags.pop_back();
  EXPECT_THROW(trajectory_export(e, d, short_flags), std::invalid_argument);
}

TEST(AnalyzeTrajectories, EndToEndOnHandBuiltRecords) {
  using enum TransientState;
  std::vector<TrajectoryRecord> recs{
      record("a", Outcome::Discharged, {S1, S1, S2, S1}, {false, true, false, false},
             {false, false, false, false}),
      record("b", Outcome::Died, {S2, S3, S3, S3}, {true, true, true, false},
             {false, true, true, false}),
      record("c", Outcome::Censored, {S1, S2}, {false, false}, {false, false})};
  const auto rep = analyze_trajectories(recs, 4);
  EXPECT_EQ(rep.n_excluded_censored, 1u);
  const auto& s3 = rep.metric(MetricKind::S3);
  EXPECT_EQ(s3.fractions.size(), 3u);
  EXPECT_EQ(s3.fractions[1].value, 0.75);
  // Discharged at 0, Died at 0.75: disjoint bins.
  EXPECT_NEAR(s3.jsd, std::numbers::ln2, 1e-12);
  EXPECT_EQ(rep.metric(MetricKind::Sepsis1).fractions[0].value, 0.25);
  // Episode b: S3 = [1,4), qSOFA = [1,3).
  EXPECT_DOUBLE_EQ(rep.overlaps[1].per_episode[1].jaccard, 2.0 / 3.0);
  EXPECT_EQ(*rep.severity.sepsis1[2], 2.0 / 3.0);
}
