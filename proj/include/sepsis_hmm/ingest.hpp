#pragma once

// Raw timestamped vitals -> six-hour interval episodes.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sepsis_hmm/io.hpp"
#include "sepsis_hmm/model.hpp"

namespace sepsis_hmm {

inline constexpr std::uint64_t kIntervalMinutes = 360;
inline constexpr std::size_t kMaxForwardFill = 2;

struct RawObservation {
  std::string episode_id;
  std::uint64_t minute = 0;  // from admission
  Vital vital = Vital::SystolicBp;
  double value = 0.0;
  bool operator==(const RawObservation&) const = default;
};

enum class RejectionReason { NoObservations, UnfillableCell, ImplausibleVitals };

constexpr std::string_view name(RejectionReason r) {
  switch (r) {
    case RejectionReason::NoObservations: return "no_observations";
    case RejectionReason::UnfillableCell: return "unfillable_cell";
    case RejectionReason::ImplausibleVitals: return "implausible_vitals";
  }
  return "?";
}

struct BinningRejection {
  std::string episode_id;
  RejectionReason reason = RejectionReason::NoObservations;
  std::size_t interval = 0;
  std::optional<Vital> vital;  // set for UnfillableCell
  std::string detail;
  bool operator==(const BinningRejection&) const = default;
};

using BinningResult = std::variant<PatientEpisode, BinningRejection>;

inline std::size_t interval_of(std::uint64_t minute) {
  return static_cast<std::size_t>(minute / kIntervalMinutes);
}

// Mean per (interval, vital); empty cells take the last observed value for
// at most kMaxForwardFill consecutive intervals. The episode spans up to the
// last interval holding any observation.
inline BinningResult bin_observations(const std::string& episode_id,
                                      std::span<const RawObservation> observations,
                                      Outcome outcome, const Covariates& covariates) {
  for (const auto& o : observations) {
    if (o.episode_id != episode_id)
      throw ValidationError("bin_observations: observation for '" + o.episode_id +
                            "' passed with episode '" + episode_id + "'");
    if (!std::isfinite(o.value))
      throw ValidationError("bin_observations: non-finite value in episode '" + episode_id + "'");
  }
  if (observations.empty())
    return BinningRejection{episode_id, RejectionReason::NoObservations, 0, std::nullopt,
                            "no observations"};

  std::size_t length = 0;
  for (const auto& o : observations) length = std::max(length, interval_of(o.minute) + 1);

  std::vector<std::array<double, kNumVitals>> sum(length);
  std::vector<std::array<std::size_t, kNumVitals>> count(length);
  for (const auto& o : observations) {
    const std::size_t t = interval_of(o.minute);
    sum[t][index(o.vital)] += o.value;
    ++count[t][index(o.vital)];
  }

  PatientEpisode e{episode_id, covariates, std::vector<VitalSigns>(length), outcome};
  for (std::size_t d = 0; d < kNumVitals; ++d) {
    std::optional<double> last;
    std::size_t gap = 0;
    for (std::size_t t = 0; t < length; ++t) {
      if (count[t][d] > 0) {
        last = sum[t][d] / static_cast<double>(count[t][d]);
        gap = 0;
      } else if (last && gap < kMaxForwardFill) {
        ++gap;
      } else {
        return BinningRejection{episode_id, RejectionReason::UnfillableCell, t,
                                static_cast<Vital>(d),
                                "no " + std::string(kVitalNames[d]) + " value to carry into interval " +
                                    std::to_string(t)};
      }
      e.intervals[t].values[d] = *last;
    }
  }
  for (std::size_t t = 0; t < length; ++t) {
    const auto problems = check_vital_ranges(e.intervals[t]);
    if (!problems.empty())
      return BinningRejection{episode_id, RejectionReason::ImplausibleVitals, t, std::nullopt,
                              problems.front()};
  }
  return e;
}

namespace io {

inline constexpr std::string_view kObservationHeader = "episode_id,minute,vital,value";
inline constexpr std::string_view kEpisodeMetaHeader = "episode_id,age_z,laps2_z,cops2_z,outcome";
inline constexpr std::string_view kRejectionHeader = "episode_id,reason,interval_index,vital,detail";

inline std::optional<Vital> parse_vital(std::string_view s) {
  for (std::size_t d = 0; d < kNumVitals; ++d)
    if (kVitalNames[d] == s) return static_cast<Vital>(d);
  return std::nullopt;
}

inline std::vector<RawObservation> read_observations(std::istream& in) {
  std::vector<RawObservation> out;
  read_csv(in, kObservationHeader, [&](const std::vector<std::string_view>& f, std::size_t line) {
    if (f[0].empty()) throw InputError("empty episode_id", line);
    const auto vital = parse_vital(f[2]);
    if (!vital) throw InputError("unknown vital '" + std::string(f[2]) + "'", line);
    out.push_back({std::string(f[0]), parse_index(f[1], line, "minute"), *vital,
                   parse_double(f[3], line, "value")});
  });
  return out;
}

struct EpisodeMeta {
  Covariates covariates;
  Outcome outcome = Outcome::Censored;
};

// Keeps file order so output episodes follow the metadata file.
inline std::vector<std::pair<std::string, EpisodeMeta>> read_episode_meta(std::istream& in) {
  std::vector<std::pair<std::string, EpisodeMeta>> out;
  std::set<std::string> seen;
  read_csv(in, kEpisodeMetaHeader, [&](const std::vector<std::string_view>& f, std::size_t line) {
    if (f[0].empty()) throw InputError("empty episode_id", line);
    if (!seen.insert(std::string(f[0])).second)
      throw InputError("duplicate episode '" + std::string(f[0]) + "'", line);
    EpisodeMeta m;
    for (std::size_t j = 0; j < kNumCovariates; ++j)
      m.covariates.values[j] = parse_double(f[1 + j], line, kCovariateNames[j]);
    const auto outcome = parse_outcome(f[4]);
    if (!outcome) throw InputError("invalid outcome '" + std::string(f[4]) + "'", line);
    m.outcome = *outcome;
    out.emplace_back(std::string(f[0]), m);
  });
  return out;
}

inline void write_rejections(std::ostream& out, std::span<const BinningRejection> rejections) {
  out << kRejectionHeader << '\n';
  for (const auto& r : rejections) {
    out << r.episode_id << ',' << name(r.reason) << ',' << r.interval << ','
        << (r.vital ? kVitalNames[index(*r.vital)] : std::string_view{}) << ',';
    for (char ch : r.detail) out << (ch == ',' ? ';' : ch);
    out << '\n';
  }
}

struct IngestResult {
  std::vector<PatientEpisode> episodes;
  std::vector<BinningRejection> rejections;
};

// Observations for episodes missing from the metadata are an input error.
inline IngestResult ingest(std::span<const RawObservation> observations,
                           std::span<const std::pair<std::string, EpisodeMeta>> meta) {
  std::map<std::string, std::vector<RawObservation>> by_episode;
  for (const auto& o : observations) by_episode[o.episode_id].push_back(o);
  for (const auto& [id, _] : by_episode) {
    const bool known = std::any_of(meta.begin(), meta.end(), [&](const auto& m) { return m.first == id; });
    if (!known) throw InputError("observations for episode '" + id + "' without metadata");
  }
  IngestResult out;
  for (const auto& [id, m] : meta) {
    const auto it = by_episode.find(id);
    const std::span<const RawObservation> obs =
        it == by_episode.end() ? std::span<const RawObservation>{} : std::span<const RawObservation>(it->second);
    auto result = bin_observations(id, obs, m.outcome, m.covariates);
    if (auto* e = std::get_if<PatientEpisode>(&result))
      out.episodes.push_back(std::move(*e));
    else
      out.rejections.push_back(std::get<BinningRejection>(std::move(result)));
  }
  return out;
}

// Optional sidecar recording how the _z covariates were standardized.
inline Json standardization_to_json(const CovariateStandardization& s) {
  Json j;
  j["schema_version"] = 1;
  j["mean"] = detail::named_values(s.mean, kCovariateNames);
  j["sd"] = detail::named_values(s.sd, kCovariateNames);
  return j;
}

inline CovariateStandardization standardization_from_json(const Json& j) {
  detail::reject_unknown(j, {"schema_version", "mean", "sd"}, "standardization");
  if (j.value("schema_version", 0) != 1)
    throw ValidationError("standardization: unsupported schema_version");
  CovariateStandardization s;
  s.mean = detail::read_named_values(j, "mean", kCovariateNames, "standardization");
  s.sd = detail::read_named_values(j, "sd", kCovariateNames, "standardization");
  for (std::size_t i = 0; i < kNumCovariates; ++i)
    if (!(s.sd[i] > 0.0))
      throw ValidationError("standardization[sd][" + std::string(kCovariateNames[i]) + "] not > 0");
  return s;
}

}  // namespace io
}  // namespace sepsis_hmm
