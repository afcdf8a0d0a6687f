#pragma once

// Exact per-interval state marginals for one episode with fixed globals.
// Serves as the reference the Gibbs decoder is checked against.

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "sepsis_hmm/model.hpp"

namespace sepsis_hmm {

using StateProbabilities = std::array<double, kNumTransient>;

struct ForwardBackwardResult {
  std::vector<StateProbabilities> marginals;
  double log_likelihood = 0.0;
};

namespace detail {

inline double log_sum_exp(const double* v, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

inline double safe_log(double p) {
  return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
}

}  // namespace detail

// Log of the probability of the terminal absorbing transition out of each
// transient state, or zeros when the outcome is not used or censored.
inline std::array<double, kNumTransient> log_terminal_factor(const TransitionMatrix& a,
                                                             Outcome outcome, bool use_outcome) {
  std::array<double, kNumTransient> f{0.0, 0.0, 0.0};
  if (!use_outcome || outcome == Outcome::Censored) return f;
  const std::size_t target =
      outcome == Outcome::Discharged ? index(LatentState::G) : index(LatentState::D);
  for (std::size_t k = 0; k < kNumTransient; ++k) f[k] = detail::safe_log(a[k + 1][target]);
  return f;
}

inline ForwardBackwardResult forward_backward(const PatientEpisode& episode, const ModelParams& mp,
                                              bool use_outcome) {
  const std::size_t n = episode.length();
  if (n == 0) throw ValidationError("forward_backward: empty episode");
  const TransitionMatrix a = transition_matrix(mp.transition, episode.covariates);
  std::array<std::array<double, kNumTransient>, kNumTransient> log_a{};
  for (std::size_t i = 0; i < kNumTransient; ++i)
    for (std::size_t j = 0; j < kNumTransient; ++j) log_a[i][j] = detail::safe_log(a[i + 1][j + 1]);
  const auto terminal = log_terminal_factor(a, episode.outcome, use_outcome);

  std::vector<std::array<double, kNumTransient>> log_e(n), alpha(n), beta(n);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t k = 0; k < kNumTransient; ++k)
      log_e[t][k] = log_emission_density(episode.intervals[t], transient_from_index(k), mp.emission);

  const double log_init = -std::log(static_cast<double>(kNumTransient));
  for (std::size_t k = 0; k < kNumTransient; ++k) alpha[0][k] = log_init + log_e[0][k];
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t k = 0; k < kNumTransient; ++k) {
      double terms[kNumTransient];
      for (std::size_t j = 0; j < kNumTransient; ++j) terms[j] = alpha[t - 1][j] + log_a[j][k];
      alpha[t][k] = detail::log_sum_exp(terms, kNumTransient) + log_e[t][k];
    }
  }
  beta[n - 1] = terminal;
  for (std::size_t t = n - 1; t-- > 0;) {
    for (std::size_t j = 0; j < kNumTransient; ++j) {
      double terms[kNumTransient];
      for (std::size_t k = 0; k < kNumTransient; ++k)
        terms[k] = log_a[j][k] + log_e[t + 1][k] + beta[t + 1][k];
      beta[t][j] = detail::log_sum_exp(terms, kNumTransient);
    }
  }

  ForwardBackwardResult out;
  double last[kNumTransient];
  for (std::size_t k = 0; k < kNumTransient; ++k) last[k] = alpha[n - 1][k] + terminal[k];
  out.log_likelihood = detail::log_sum_exp(last, kNumTransient);
  if (!std::isfinite(out.log_likelihood))
    throw ImpossiblePathError("forward_backward: episode has zero probability under parameters");
  out.marginals.resize(n);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t k = 0; k < kNumTransient; ++k)
      out.marginals[t][k] = std::exp(alpha[t][k] + beta[t][k] - out.log_likelihood);
  return out;
}

}  // namespace sepsis_hmm
