#pragma once

// Vital-sign portions of the sepsis-1 (SIRS) and qSOFA rules, evaluated per
// interval, plus run-length segmentation of the resulting flags.
//
// SIRS thresholds are strict (HR > 90, RR > 20, T < 96.8 or T > 100.4 deg F);
// PaCO2 and WBC are not observable here and the two-of rule applies to the
// three evaluable conditions. qSOFA is non-strict (SBP <= 100, RR >= 22) and
// requires both items.

#include <cstddef>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "sepsis_hmm/model.hpp"

namespace sepsis_hmm {

enum class Criterion { Sepsis1, Qsofa };

constexpr std::string_view name(Criterion c) { return c == Criterion::Sepsis1 ? "sepsis1" : "qsofa"; }

struct SirsFlags {
  bool heart_rate = false;
  bool respiratory_rate = false;
  bool temperature = false;

  int count() const { return int(heart_rate) + int(respiratory_rate) + int(temperature); }
  bool operator==(const SirsFlags&) const = default;
};

struct CriteriaFlags {
  bool sirs_hr = false;
  bool sirs_rr = false;
  bool sirs_temp = false;
  bool sepsis1_met = false;
  bool qsofa_sbp = false;
  bool qsofa_rr = false;
  bool qsofa_met = false;

  bool met(Criterion c) const { return c == Criterion::Sepsis1 ? sepsis1_met : qsofa_met; }
  bool operator==(const CriteriaFlags&) const = default;
};

inline SirsFlags sirs_flags(const VitalSigns& x) {
  return {x.heart_rate() > 90.0, x.respiratory_rate() > 20.0,
          x.temperature() < 96.8 || x.temperature() > 100.4};
}

inline bool sepsis1_met(const SirsFlags& f) { return f.count() >= 2; }
inline bool sepsis1_met(const VitalSigns& x) { return sepsis1_met(sirs_flags(x)); }

inline bool qsofa_met(const VitalSigns& x) {
  return x.systolic_bp() <= 100.0 && x.respiratory_rate() >= 22.0;
}

inline CriteriaFlags criteria_flags(const VitalSigns& x) {
  const SirsFlags s = sirs_flags(x);
  CriteriaFlags f;
  f.sirs_hr = s.heart_rate;
  f.sirs_rr = s.respiratory_rate;
  f.sirs_temp = s.temperature;
  f.sepsis1_met = sepsis1_met(s);
  f.qsofa_sbp = x.systolic_bp() <= 100.0;
  f.qsofa_rr = x.respiratory_rate() >= 22.0;
  f.qsofa_met = f.qsofa_sbp && f.qsofa_rr;
  return f;
}

inline std::vector<CriteriaFlags> criteria_flags(const PatientEpisode& episode) {
  std::vector<CriteriaFlags> out;
  out.reserve(episode.length());
  for (const auto& x : episode.intervals) out.push_back(criteria_flags(x));
  return out;
}

inline std::vector<bool> criterion_mask(const std::vector<CriteriaFlags>& flags, Criterion c) {
  std::vector<bool> out;
  out.reserve(flags.size());
  for (const auto& f : flags) out.push_back(f.met(c));
  return out;
}

// Half-open interval-index range [start, end).
struct Segment {
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - start; }
  bool operator==(const Segment&) const = default;
};

// Sorted, disjoint, non-adjacent maximal runs.
using CriteriaSegments = std::vector<Segment>;

inline CriteriaSegments segments_from_mask(const std::vector<bool>& mask) {
  CriteriaSegments out;
  std::size_t t = 0;
  while (t < mask.size()) {
    if (!mask[t]) {
      ++t;
      continue;
    }
    const std::size_t start = t;
    while (t < mask.size() && mask[t]) ++t;
    out.push_back({start, t});
  }
  return out;
}

inline std::vector<bool> mask_from_segments(const CriteriaSegments& segments, std::size_t length) {
  std::vector<bool> mask(length, false);
  for (const auto& s : segments) {
    if (s.end > length || s.start >= s.end) throw std::out_of_range("segment outside [0, T)");
    for (std::size_t t = s.start; t < s.end; ++t) mask[t] = true;
  }
  return mask;
}

inline CriteriaSegments criteria_segments(const PatientEpisode& episode, Criterion which) {
  std::vector<bool> mask;
  mask.reserve(episode.length());
  for (const auto& x : episode.intervals)
    mask.push_back(which == Criterion::Sepsis1 ? sepsis1_met(x) : qsofa_met(x));
  return segments_from_mask(mask);
}

}  // namespace sepsis_hmm
