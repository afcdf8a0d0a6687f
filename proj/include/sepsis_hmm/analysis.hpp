#pragma once

// Outcome-discrimination analysis, criteria-versus-state overlap, and
// per-interval trajectory records for plotting.

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sepsis_hmm/criteria.hpp"
#include "sepsis_hmm/decode.hpp"
#include "sepsis_hmm/model.hpp"

namespace sepsis_hmm {

enum class MetricKind { Sepsis1, Qsofa, S3 };
inline constexpr std::array<MetricKind, 3> kMetricKinds{MetricKind::Sepsis1, MetricKind::Qsofa,
                                                        MetricKind::S3};

constexpr std::string_view name(MetricKind m) {
  switch (m) {
    case MetricKind::Sepsis1: return "sepsis1";
    case MetricKind::Qsofa: return "qsofa";
    case MetricKind::S3: return "s3";
  }
  return "?";
}

struct FractionMetric {
  std::string episode_id;
  MetricKind kind = MetricKind::S3;
  double value = 0.0;  // flagged intervals / T
  Outcome outcome = Outcome::Censored;
};

inline double fraction_flagged(std::size_t length, const std::vector<bool>& flags) {
  if (length == 0) throw std::invalid_argument("fraction_flagged: empty episode");
  if (flags.size() != length)
    throw std::invalid_argument("fraction_flagged: " + std::to_string(flags.size()) +
                                " flags for " + std::to_string(length) + " intervals");
  std::size_t n = 0;
  for (bool f : flags) n += f ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(length);
}

inline double fraction_flagged(const PatientEpisode& episode, const std::vector<bool>& flags) {
  return fraction_flagged(episode.length(), flags);
}

struct ConditionalHistogramPair {
  std::vector<double> edges;       // n_bins + 1 uniform edges on [0, 1]
  std::vector<double> discharged;  // densities with unit area
  std::vector<double> died;
  std::size_t n_discharged = 0;
  std::size_t n_died = 0;

  std::size_t bins() const { return discharged.size(); }
};

// Uniform bins on [0, 1]; the last bin is closed on the right.
inline std::size_t unit_bin(double v, std::size_t n_bins) {
  if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("value outside [0, 1]");
  const auto b = static_cast<std::size_t>(std::floor(v * static_cast<double>(n_bins)));
  return std::min(b, n_bins - 1);
}

// Censored episodes carry no outcome label and are skipped.
inline ConditionalHistogramPair conditional_histograms(std::span<const FractionMetric> metrics,
                                                       std::size_t n_bins) {
  if (n_bins < 1) throw std::invalid_argument("conditional_histograms: n_bins must be >= 1");
  ConditionalHistogramPair h;
  h.edges.resize(n_bins + 1);
  for (std::size_t b = 0; b <= n_bins; ++b)
    h.edges[b] = static_cast<double>(b) / static_cast<double>(n_bins);
  std::vector<double> c_dis(n_bins, 0.0), c_died(n_bins, 0.0);
  for (const auto& m : metrics) {
    if (m.outcome == Outcome::Censored) continue;
    const std::size_t b = unit_bin(m.value, n_bins);
    if (m.outcome == Outcome::Discharged) {
      c_dis[b] += 1.0;
      ++h.n_discharged;
    } else {
      c_died[b] += 1.0;
      ++h.n_died;
    }
  }
  if (h.n_discharged == 0) throw std::invalid_argument("conditional_histograms: no Discharged episodes");
  if (h.n_died == 0) throw std::invalid_argument("conditional_histograms: no Died episodes");
  const double width = 1.0 / static_cast<double>(n_bins);
  h.discharged.resize(n_bins);
  h.died.resize(n_bins);
  for (std::size_t b = 0; b < n_bins; ++b) {
    h.discharged[b] = c_dis[b] / (static_cast<double>(h.n_discharged) * width);
    h.died[b] = c_died[b] / (static_cast<double>(h.n_died) * width);
  }
  return h;
}

// Bin probability masses from densities over uniform [0, 1] bins.
inline std::vector<double> bin_masses(const std::vector<double>& densities) {
  std::vector<double> out(densities.size());
  const double width = 1.0 / static_cast<double>(densities.size());
  for (std::size_t b = 0; b < densities.size(); ++b) out[b] = densities[b] * width;
  return out;
}

// Jensen-Shannon divergence of two probability mass vectors, natural log.
inline double js_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty())
    throw std::invalid_argument("js_divergence: distributions must share a non-empty support");
  double sp = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] >= 0.0) || !(q[i] >= 0.0))
      throw std::invalid_argument("js_divergence: negative or non-finite mass");
    sp += p[i];
    sq += q[i];
  }
  if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9)
    throw std::invalid_argument("js_divergence: inputs must each sum to 1");
  double kl_p = 0.0, kl_q = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == q[i]) continue;  // both terms vanish
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) kl_p += p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) kl_q += q[i] * std::log(q[i] / m);
  }
  const double jsd = 0.5 * kl_p + 0.5 * kl_q;
  return std::clamp(jsd, 0.0, std::numbers::ln2);
}

inline double js_divergence(const ConditionalHistogramPair& h) {
  const auto p = bin_masses(h.discharged);
  const auto q = bin_masses(h.died);
  return js_divergence(p, q);
}

struct OverlapStats {
  double jaccard = 1.0;
  double covered_a_by_b = 1.0;  // |A and B| / |A|
  double covered_b_by_a = 1.0;  // |A and B| / |B|
};

inline OverlapStats overlap_stats(const CriteriaSegments& a, const CriteriaSegments& b,
                                  std::size_t length) {
  const auto ma = mask_from_segments(a, length);
  const auto mb = mask_from_segments(b, length);
  std::size_t na = 0, nb = 0, both = 0, either = 0;
  for (std::size_t t = 0; t < length; ++t) {
    na += ma[t];
    nb += mb[t];
    both += ma[t] && mb[t];
    either += ma[t] || mb[t];
  }
  OverlapStats s;
  if (either > 0) s.jaccard = static_cast<double>(both) / static_cast<double>(either);
  if (na > 0) s.covered_a_by_b = static_cast<double>(both) / static_cast<double>(na);
  if (nb > 0) s.covered_b_by_a = static_cast<double>(both) / static_cast<double>(nb);
  return s;
}

// Fraction of intervals flagged by each criterion among intervals decoded as
// each state; absent when no interval was decoded as that state.
struct SeverityRates {
  std::array<std::optional<double>, kNumTransient> sepsis1;
  std::array<std::optional<double>, kNumTransient> qsofa;
  std::array<std::size_t, kNumTransient> intervals{};
};

inline SeverityRates severity_monotonicity_report(std::span<const LatentPath> decoded,
                                                  std::span<const std::vector<CriteriaFlags>> flags) {
  if (decoded.size() != flags.size())
    throw std::invalid_argument("severity report: decode and flag cohorts differ in size");
  std::array<std::size_t, kNumTransient> s1{}, qs{};
  SeverityRates r;
  for (std::size_t i = 0; i < decoded.size(); ++i) {
    if (decoded[i].size() != flags[i].size())
      throw std::invalid_argument("severity report: misaligned episode " + std::to_string(i));
    for (std::size_t t = 0; t < decoded[i].size(); ++t) {
      const std::size_t k = index(decoded[i][t]);
      ++r.intervals[k];
      s1[k] += flags[i][t].sepsis1_met;
      qs[k] += flags[i][t].qsofa_met;
    }
  }
  for (std::size_t k = 0; k < kNumTransient; ++k) {
    if (r.intervals[k] == 0) continue;
    r.sepsis1[k] = static_cast<double>(s1[k]) / static_cast<double>(r.intervals[k]);
    r.qsofa[k] = static_cast<double>(qs[k]) / static_cast<double>(r.intervals[k]);
  }
  return r;
}

struct TrajectoryPoint {
  std::size_t interval = 0;
  VitalSigns vitals;
  TransientState state = TransientState::S1;
  StateProbabilities probabilities{};
  bool sepsis1_met = false;
  bool qsofa_met = false;
  bool operator==(const TrajectoryPoint&) const = default;
};

struct TrajectoryRecord {
  std::string episode_id;
  Outcome outcome = Outcome::Censored;
  Covariates covariates;
  std::vector<TrajectoryPoint> points;
  bool operator==(const TrajectoryRecord&) const = default;
};

inline TrajectoryRecord trajectory_export(const PatientEpisode& episode, const DecodeResult& decoded,
                                          const std::vector<CriteriaFlags>& flags) {
  const std::size_t n = episode.length();
  if (decoded.map_states.size() != n || decoded.probabilities.size() != n || flags.size() != n)
    throw std::invalid_argument("trajectory_export: misaligned inputs for episode " +
                                episode.episode_id);
  TrajectoryRecord r{episode.episode_id, episode.outcome, episode.covariates, {}};
  r.points.reserve(n);
  for (std::size_t t = 0; t < n; ++t)
    r.points.push_back({t, episode.intervals[t], decoded.map_states[t], decoded.probabilities[t],
                        flags[t].sepsis1_met, flags[t].qsofa_met});
  return r;
}

inline std::vector<bool> metric_mask(const TrajectoryRecord& r, MetricKind kind) {
  std::vector<bool> out;
  out.reserve(r.points.size());
  for (const auto& p : r.points) {
    switch (kind) {
      case MetricKind::Sepsis1: out.push_back(p.sepsis1_met); break;
      case MetricKind::Qsofa: out.push_back(p.qsofa_met); break;
      case MetricKind::S3: out.push_back(p.state == TransientState::S3); break;
    }
  }
  return out;
}

struct MetricSummary {
  MetricKind kind = MetricKind::S3;
  std::vector<FractionMetric> fractions;
  ConditionalHistogramPair histograms;
  double jsd = 0.0;
};

struct OverlapSummary {
  Criterion criterion = Criterion::Sepsis1;
  std::vector<OverlapStats> per_episode;  // S3 segments (a) vs criterion segments (b)
  OverlapStats mean;
};

struct DiscriminationReport {
  std::array<MetricSummary, 3> metrics;
  std::array<OverlapSummary, 2> overlaps;
  SeverityRates severity;
  std::size_t n_bins = 20;
  std::size_t n_excluded_censored = 0;

  const MetricSummary& metric(MetricKind k) const {
    return metrics[static_cast<std::size_t>(k)];
  }
};

inline constexpr std::size_t kDefaultHistogramBins = 20;

inline DiscriminationReport analyze_trajectories(std::span<const TrajectoryRecord> records,
                                                 std::size_t n_bins = kDefaultHistogramBins) {
  DiscriminationReport rep;
  rep.n_bins = n_bins;
  for (std::size_t m = 0; m < kMetricKinds.size(); ++m) {
    auto& summary = rep.metrics[m];
    summary.kind = kMetricKinds[m];
    for (const auto& r : records)
      summary.fractions.push_back({r.episode_id, summary.kind,
                                   fraction_flagged(r.points.size(), metric_mask(r, summary.kind)),
                                   r.outcome});
    summary.histograms = conditional_histograms(summary.fractions, n_bins);
    summary.jsd = js_divergence(summary.histograms);
  }
  for (const auto& r : records) rep.n_excluded_censored += r.outcome == Outcome::Censored;

  const std::array<Criterion, 2> criteria{Criterion::Sepsis1, Criterion::Qsofa};
  for (std::size_t c = 0; c < 2; ++c) {
    auto& ov = rep.overlaps[c];
    ov.criterion = criteria[c];
    OverlapStats sum{0.0, 0.0, 0.0};
    for (const auto& r : records) {
      const auto s3 = segments_from_mask(metric_mask(r, MetricKind::S3));
      const auto crit = segments_from_mask(
          metric_mask(r, criteria[c] == Criterion::Sepsis1 ? MetricKind::Sepsis1 : MetricKind::Qsofa));
      const auto st = overlap_stats(s3, crit, r.points.size());
      ov.per_episode.push_back(st);
      sum.jaccard += st.jaccard;
      sum.covered_a_by_b += st.covered_a_by_b;
      sum.covered_b_by_a += st.covered_b_by_a;
    }
    if (!records.empty()) {
      const auto n = static_cast<double>(records.size());
      ov.mean = {sum.jaccard / n, sum.covered_a_by_b / n, sum.covered_b_by_a / n};
    }
  }

  std::vector<LatentPath> decoded;
  std::vector<std::vector<CriteriaFlags>> flags;
  for (const auto& r : records) {
    LatentPath z;
    std::vector<CriteriaFlags> f;
    for (const auto& p : r.points) {
      z.push_back(p.state);
      CriteriaFlags cf;
      cf.sepsis1_met = p.sepsis1_met;
      cf.qsofa_met = p.qsofa_met;
      f.push_back(cf);
    }
    decoded.push_back(std::move(z));
    flags.push_back(std::move(f));
  }
  rep.severity = severity_monotonicity_report(decoded, flags);
  return rep;
}

}  // namespace sepsis_hmm
