#pragma once

// Domain types and the pure kernel of the five-state progression model:
// per-patient transition matrices and diagonal-Gaussian emission densities.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sepsis_hmm/errors.hpp"

namespace sepsis_hmm {

inline constexpr std::size_t kNumVitals = 5;
inline constexpr std::size_t kNumTransient = 3;
inline constexpr std::size_t kNumCovariates = 3;
inline constexpr std::size_t kNumStates = 5;

// Full state space in matrix order. G and D are absorbing and observed.
enum class LatentState : std::uint8_t { G = 0, S1 = 1, S2 = 2, S3 = 3, D = 4 };

// Transient (hidden) states, ordered by severity.
enum class TransientState : std::uint8_t { S1 = 0, S2 = 1, S3 = 2 };

constexpr std::size_t index(TransientState s) { return static_cast<std::size_t>(s); }
constexpr std::size_t index(LatentState s) { return static_cast<std::size_t>(s); }

constexpr LatentState to_latent(TransientState s) {
  return static_cast<LatentState>(index(s) + 1);
}

constexpr TransientState transient_from_index(std::size_t k) {
  return static_cast<TransientState>(k);
}

inline constexpr std::array<std::string_view, kNumTransient> kTransientNames{"S1", "S2", "S3"};
inline constexpr std::array<std::string_view, kNumStates> kStateNames{"G", "S1", "S2", "S3", "D"};

constexpr std::string_view name(TransientState s) { return kTransientNames[index(s)]; }
constexpr std::string_view name(LatentState s) { return kStateNames[index(s)]; }

inline std::optional<TransientState> parse_transient(std::string_view s) {
  for (std::size_t k = 0; k < kNumTransient; ++k)
    if (kTransientNames[k] == s) return transient_from_index(k);
  return std::nullopt;
}

// Fixed vital order everywhere, file formats included.
enum class Vital : std::uint8_t {
  SystolicBp = 0,
  DiastolicBp = 1,
  HeartRate = 2,
  RespiratoryRate = 3,
  Temperature = 4
};
constexpr std::size_t index(Vital v) { return static_cast<std::size_t>(v); }

inline constexpr std::array<std::string_view, kNumVitals> kVitalNames{
    "systolic_bp", "diastolic_bp", "heart_rate", "respiratory_rate", "temperature"};
// Column names used in the episode file.
inline constexpr std::array<std::string_view, kNumVitals> kVitalColumns{"sbp", "dbp", "hr", "rr",
                                                                        "temp"};

struct VitalSigns {
  // mm Hg, mm Hg, 1/min, 1/min, deg F
  std::array<double, kNumVitals> values{};

  double operator[](Vital v) const { return values[static_cast<std::size_t>(v)]; }
  double& operator[](Vital v) { return values[static_cast<std::size_t>(v)]; }

  double systolic_bp() const { return (*this)[Vital::SystolicBp]; }
  double diastolic_bp() const { return (*this)[Vital::DiastolicBp]; }
  double heart_rate() const { return (*this)[Vital::HeartRate]; }
  double respiratory_rate() const { return (*this)[Vital::RespiratoryRate]; }
  double temperature() const { return (*this)[Vital::Temperature]; }

  bool operator==(const VitalSigns&) const = default;
};

inline VitalSigns make_vitals(double sbp, double dbp, double hr, double rr, double temp) {
  return VitalSigns{{sbp, dbp, hr, rr, temp}};
}

// Physiological plausibility of a preprocessed interval. Gaussian emissions
// can stray outside these ranges, so only ingestion enforces them.
inline std::vector<std::string> check_vital_ranges(const VitalSigns& x) {
  std::vector<std::string> out;
  for (std::size_t d = 0; d < kNumVitals; ++d)
    if (!std::isfinite(x.values[d])) out.push_back(std::string(kVitalNames[d]) + " not finite");
  if (!out.empty()) return out;
  if (!(x.systolic_bp() > x.diastolic_bp())) out.emplace_back("systolic_bp not > diastolic_bp");
  if (!(x.diastolic_bp() > 0)) out.emplace_back("diastolic_bp not > 0");
  if (!(x.heart_rate() > 0)) out.emplace_back("heart_rate not > 0");
  if (!(x.respiratory_rate() > 0)) out.emplace_back("respiratory_rate not > 0");
  if (!(x.temperature() > 80 && x.temperature() < 115))
    out.emplace_back("temperature not in (80, 115)");
  return out;
}

enum class CovariateKind : std::uint8_t { Age = 0, Laps2 = 1, Cops2 = 2 };
inline constexpr std::array<std::string_view, kNumCovariates> kCovariateNames{"age", "laps2",
                                                                              "cops2"};

// Standardized (z-scored) covariates.
struct Covariates {
  std::array<double, kNumCovariates> values{};

  double operator[](CovariateKind c) const { return values[static_cast<std::size_t>(c)]; }
  bool operator==(const Covariates&) const = default;
};

// Per-covariate raw-scale statistics used for z-scoring.
struct CovariateStandardization {
  std::array<double, kNumCovariates> mean{};
  std::array<double, kNumCovariates> sd{1.0, 1.0, 1.0};

  Covariates standardize(const std::array<double, kNumCovariates>& raw) const {
    Covariates c;
    for (std::size_t j = 0; j < kNumCovariates; ++j) c.values[j] = (raw[j] - mean[j]) / sd[j];
    return c;
  }
  std::array<double, kNumCovariates> to_raw(const Covariates& c) const {
    std::array<double, kNumCovariates> raw{};
    for (std::size_t j = 0; j < kNumCovariates; ++j) raw[j] = c.values[j] * sd[j] + mean[j];
    return raw;
  }
  bool operator==(const CovariateStandardization&) const = default;
};

struct TransitionParams {
  std::array<double, kNumCovariates> beta{};   // > 0
  std::array<double, kNumTransient> lambda{};  // (0, 1)
  std::array<double, kNumTransient> gamma{};   // (0, 1)
  bool operator==(const TransitionParams&) const = default;
};

struct EmissionParams {
  using Table = std::array<std::array<double, kNumVitals>, kNumTransient>;
  Table mu{};
  Table sigma{};  // per-dimension standard deviations
  bool operator==(const EmissionParams&) const = default;
};

struct ModelParams {
  TransitionParams transition;
  EmissionParams emission;
  bool operator==(const ModelParams&) const = default;
};

enum class Outcome : std::uint8_t { Discharged, Died, Censored };

constexpr std::string_view name(Outcome o) {
  switch (o) {
    case Outcome::Discharged: return "Discharged";
    case Outcome::Died: return "Died";
    case Outcome::Censored: return "Censored";
  }
  return "?";
}

inline std::optional<Outcome> parse_outcome(std::string_view s) {
  if (s == "Discharged") return Outcome::Discharged;
  if (s == "Died") return Outcome::Died;
  if (s == "Censored") return Outcome::Censored;
  return std::nullopt;
}

struct PatientEpisode {
  std::string episode_id;
  Covariates covariates;
  std::vector<VitalSigns> intervals;  // one per six-hour interval
  Outcome outcome = Outcome::Censored;

  std::size_t length() const { return intervals.size(); }
  bool operator==(const PatientEpisode&) const = default;
};

// Transient state sequence aligned with an episode's intervals.
using LatentPath = std::vector<TransientState>;
using LatentAssignments = std::vector<LatentPath>;

using TransitionMatrix = std::array<std::array<double, kNumStates>, kNumStates>;

inline double hazard_exponent(const std::array<double, kNumCovariates>& beta, const Covariates& c) {
  double s = 0.0;
  for (std::size_t j = 0; j < kNumCovariates; ++j) s += beta[j] * c.values[j];
  return s;
}

// exp(-beta'c), the proportional-hazards multiplier.
inline double hazard_scale(const std::array<double, kNumCovariates>& beta, const Covariates& c) {
  const double r = std::exp(-hazard_exponent(beta, c));
  if (!std::isfinite(r) || r <= 0.0) {
    std::size_t worst = 0;
    for (std::size_t j = 1; j < kNumCovariates; ++j)
      if (std::abs(beta[j] * c.values[j]) > std::abs(beta[worst] * c.values[worst])) worst = j;
    throw DomainError("hazard scale exp(-beta'c) not representable; covariate " +
                      std::string(kCovariateNames[worst]) + " = " +
                      std::to_string(c.values[worst]) + " (beta = " +
                      std::to_string(beta[worst]) + ")");
  }
  return r;
}

// P_k = lambda_k * exp(-s) for a precomputed hazard exponent s = beta'c.
// Returns nullopt when any P_k leaves (0, 1].
inline std::optional<std::array<double, kNumTransient>> persistence(
    const std::array<double, kNumTransient>& lambda, double exponent) {
  const double scale = std::exp(-exponent);
  std::array<double, kNumTransient> p{};
  for (std::size_t k = 0; k < kNumTransient; ++k) {
    p[k] = lambda[k] * scale;
    if (!(p[k] > 0.0 && p[k] <= 1.0)) return std::nullopt;
  }
  return p;
}

inline TransitionMatrix transition_matrix_from_persistence(
    const std::array<double, kNumTransient>& gamma, const std::array<double, kNumTransient>& p) {
  TransitionMatrix a{};
  a[index(LatentState::G)][index(LatentState::G)] = 1.0;
  a[index(LatentState::D)][index(LatentState::D)] = 1.0;
  for (std::size_t k = 0; k < kNumTransient; ++k) {
    const std::size_t row = k + 1;
    a[row][row - 1] = gamma[k] * p[k];
    a[row][row] = (1.0 - gamma[k]) * p[k];
    a[row][row + 1] = 1.0 - p[k];
  }
  return a;
}

// Banded 5x5 matrix in (G, S1, S2, S3, D) order. Throws InfeasibleParameters
// when any P_k is outside (0, 1]; never returns a matrix in that case.
inline TransitionMatrix transition_matrix(const TransitionParams& tp, const Covariates& c) {
  const double scale = hazard_scale(tp.beta, c);
  std::array<double, kNumTransient> p{};
  for (std::size_t k = 0; k < kNumTransient; ++k) {
    p[k] = tp.lambda[k] * scale;
    if (!(p[k] > 0.0 && p[k] <= 1.0)) throw InfeasibleParameters(static_cast<int>(k), p[k]);
  }
  return transition_matrix_from_persistence(tp.gamma, p);
}

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2 pi)

inline double log_emission_density(const VitalSigns& x, TransientState k, const EmissionParams& ep) {
  const auto& mu = ep.mu[index(k)];
  const auto& sigma = ep.sigma[index(k)];
  double total = 0.0;
  for (std::size_t d = 0; d < kNumVitals; ++d) {
    const double z = (x.values[d] - mu[d]) / sigma[d];
    total += -kHalfLog2Pi - std::log(sigma[d]) - 0.5 * z * z;
  }
  return total;
}

struct Violation {
  std::string path;
  std::string message;

  std::string to_string() const { return path + " " + message; }
};

inline std::vector<Violation> validate_params(const ModelParams& mp) {
  std::vector<Violation> out;
  const auto& tp = mp.transition;
  for (std::size_t j = 0; j < kNumCovariates; ++j) {
    const double b = tp.beta[j];
    if (!(std::isfinite(b) && b > 0.0))
      out.push_back({"transition.beta[" + std::string(kCovariateNames[j]) + "]", "not > 0"});
  }
  auto unit_open = [&](const std::array<double, kNumTransient>& v, std::string_view field) {
    for (std::size_t k = 0; k < kNumTransient; ++k)
      if (!(v[k] > 0.0 && v[k] < 1.0))
        out.push_back({"transition." + std::string(field) + "[" + std::string(kTransientNames[k]) +
                           "]",
                       "not in (0, 1)"});
  };
  unit_open(tp.lambda, "lambda");
  unit_open(tp.gamma, "gamma");
  for (std::size_t k = 0; k < kNumTransient; ++k) {
    for (std::size_t d = 0; d < kNumVitals; ++d) {
      const std::string cell =
          "[" + std::string(kTransientNames[k]) + "][" + std::string(kVitalNames[d]) + "]";
      if (!std::isfinite(mp.emission.mu[k][d]))
        out.push_back({"emission.mu" + cell, "not finite"});
      const double s = mp.emission.sigma[k][d];
      if (!(std::isfinite(s) && s > 0.0)) out.push_back({"emission.sigma" + cell, "not > 0"});
    }
  }
  return out;
}

inline void require_valid(const ModelParams& mp) {
  const auto violations = validate_params(mp);
  if (violations.empty()) return;
  std::string msg = "invalid model parameters:";
  for (const auto& v : violations) msg += "\n  " + v.to_string();
  throw ValidationError(msg);
}

// Lowest hazard exponent over a cohort; feasibility of every patient reduces
// to max_k lambda_k * exp(-min_exponent) <= 1.
inline double min_hazard_exponent(const std::array<double, kNumCovariates>& beta,
                                  std::span<const PatientEpisode> cohort) {
  double lo = INFINITY;
  for (const auto& e : cohort) lo = std::min(lo, hazard_exponent(beta, e.covariates));
  return lo;
}

}  // namespace sepsis_hmm
