#pragma once

// Forward simulation of synthetic cohorts from known parameters.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sepsis_hmm/model.hpp"
#include "sepsis_hmm/parallel.hpp"
#include "sepsis_hmm/random.hpp"

namespace sepsis_hmm {

inline constexpr std::size_t kDefaultHorizon = 60;  // 15 days of six-hour intervals

struct CohortSpec {
  std::size_t n_patients = 2000;
  std::size_t max_intervals = kDefaultHorizon;
  // Independent normals in standardized covariate space.
  std::array<double, kNumCovariates> covariate_mean{0.0, 0.0, 0.0};
  std::array<double, kNumCovariates> covariate_sd{1.0, 1.0, 1.0};
  std::uint64_t seed = 1;

  void validate() const {
    if (n_patients < 1) throw ValidationError("cohort spec: n_patients must be >= 1");
    if (max_intervals < 2) throw ValidationError("cohort spec: max_intervals must be >= 2");
    for (std::size_t j = 0; j < kNumCovariates; ++j) {
      if (!std::isfinite(covariate_mean[j]))
        throw ValidationError("cohort spec: covariate mean " + std::string(kCovariateNames[j]) +
                              " not finite");
      if (!(covariate_sd[j] > 0.0 && std::isfinite(covariate_sd[j])))
        throw ValidationError("cohort spec: covariate sd " + std::string(kCovariateNames[j]) +
                              " must be > 0");
    }
  }
};

struct SimulatedEpisode {
  PatientEpisode episode;
  LatentPath true_states;
};

// Emission parameters are marginal MAP estimates from a real inpatient cohort; the transition
// parameters are synthetic and chosen so that every patient stays feasible
// under standard-normal covariates (see tests/test_cohort_sim.cpp).
inline ModelParams default_ground_truth() {
  ModelParams mp;
  mp.emission.mu = {{
      {118.6, 63.4, 76.7, 18.7, 98.0},
      {143.4, 77.2, 83.3, 19.1, 98.1},
      {116.4, 62.7, 95.6, 21.1, 98.6},
  }};
  mp.emission.sigma = {{
      {15.1, 9.3, 12.1, 1.6, 0.8},
      {16.3, 10.0, 14.5, 1.9, 0.8},
      {17.5, 11.2, 16.4, 4.9, 1.3},
  }};
  mp.transition.lambda = {0.86, 0.85, 0.84};
  mp.transition.gamma = {0.06, 0.50, 0.70};
  mp.transition.beta = {0.015, 0.020, 0.015};
  return mp;
}

inline VitalSigns draw_vitals(const EmissionParams& ep, TransientState k, Engine& eng) {
  VitalSigns x;
  for (std::size_t d = 0; d < kNumVitals; ++d)
    x.values[d] = draw_normal(eng, ep.mu[index(k)][d], ep.sigma[index(k)][d]);
  return x;
}

// Emit, then transition; stop on absorption (the absorbing step itself is not
// an interval) or at the horizon with a Censored outcome.
inline SimulatedEpisode simulate_episode(const ModelParams& mp, const Covariates& c,
                                         TransientState initial_state, std::size_t horizon,
                                         Engine& eng) {
  if (horizon < 1) throw ValidationError("simulate_episode: horizon must be >= 1");
  const TransitionMatrix a = transition_matrix(mp.transition, c);
  SimulatedEpisode out;
  out.episode.covariates = c;
  out.episode.outcome = Outcome::Censored;
  std::size_t state = index(to_latent(initial_state));
  while (true) {
    const auto k = transient_from_index(state - 1);
    out.true_states.push_back(k);
    out.episode.intervals.push_back(draw_vitals(mp.emission, k, eng));

    const double u = draw_uniform(eng);
    double cum = 0.0;
    std::size_t next = state + 1;  // fall through to the last nonzero entry
    for (std::size_t j = state - 1; j <= state + 1; ++j) {
      cum += a[state][j];
      if (u < cum) {
        next = j;
        break;
      }
    }
    if (next == index(LatentState::G)) {
      out.episode.outcome = Outcome::Discharged;
      break;
    }
    if (next == index(LatentState::D)) {
      out.episode.outcome = Outcome::Died;
      break;
    }
    if (out.episode.intervals.size() >= horizon) break;
    state = next;
  }
  return out;
}

inline std::string simulated_episode_id(std::size_t i) {
  std::string digits = std::to_string(i);
  if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
  return "sim-" + digits;
}

// Deterministic in (mp, spec): patient i uses its own substream, so the result
// does not depend on `threads`.
inline std::vector<SimulatedEpisode> simulate_cohort(const ModelParams& mp, const CohortSpec& spec,
                                                     std::size_t threads = 1) {
  spec.validate();
  require_valid(mp);
  std::vector<SimulatedEpisode> cohort(spec.n_patients);
  parallel_for(spec.n_patients, threads, [&](std::size_t i) {
    Engine eng = make_stream(spec.seed, Stream::CohortPatient, {i});
    Covariates c;
    for (std::size_t j = 0; j < kNumCovariates; ++j)
      c.values[j] = draw_normal(eng, spec.covariate_mean[j], spec.covariate_sd[j]);
    const auto initial =
        transient_from_index(std::uniform_int_distribution<std::size_t>(0, kNumTransient - 1)(eng));
    try {
      cohort[i] = simulate_episode(mp, c, initial, spec.max_intervals, eng);
    } catch (const InfeasibleParameters& e) {
      throw InfeasiblePatient(i, e);
    }
    cohort[i].episode.episode_id = simulated_episode_id(i);
  });
  return cohort;
}

inline std::vector<PatientEpisode> episodes_of(const std::vector<SimulatedEpisode>& sims) {
  std::vector<PatientEpisode> out;
  out.reserve(sims.size());
  for (const auto& s : sims) out.push_back(s.episode);
  return out;
}

}  // namespace sepsis_hmm
