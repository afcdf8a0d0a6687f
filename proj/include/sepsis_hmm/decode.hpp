#pragma once

// Held-out trajectory decoding: latent-only Gibbs with the global parameters
// frozen, summarised as per-interval state frequencies and their argmax.

#include <cstdint>
#include <span>
#include <vector>

#include "sepsis_hmm/sampler.hpp"

namespace sepsis_hmm {

struct DecodeConfig {
  std::size_t n_sweeps = 3000;
  std::size_t n_keep = 2000;  // last n_keep sweeps are tallied
  std::uint64_t seed = 1;
  bool use_outcome = false;

  void validate() const {
    if (n_keep < 1 || n_keep > n_sweeps)
      throw ValidationError("decode config: need 1 <= n_keep <= n_sweeps");
  }
};

struct DecodeResult {
  LatentPath map_states;
  std::vector<StateProbabilities> probabilities;
  bool operator==(const DecodeResult&) const = default;
};

// Argmax per interval; ties go to the less severe state.
inline LatentPath marginal_map_states(const std::vector<StateProbabilities>& probs) {
  LatentPath out;
  out.reserve(probs.size());
  for (const auto& p : probs) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < kNumTransient; ++k)
      if (p[k] > p[best]) best = k;
    out.push_back(transient_from_index(best));
  }
  return out;
}

// `stream` distinguishes episodes decoded under the same seed.
inline DecodeResult decode(const PatientEpisode& episode, const ModelParams& mp,
                           const DecodeConfig& config, std::uint64_t stream = 0) {
  config.validate();
  if (episode.length() == 0) throw ValidationError("decode: empty episode " + episode.episode_id);
  const PathModel model = make_path_model(episode, mp, config.use_outcome);
  Engine eng = make_stream(config.seed, Stream::Decode, {stream});
  LatentPath z = random_feasible_path(episode.length(), episode.outcome, config.use_outcome, eng);

  std::vector<std::array<std::uint64_t, kNumTransient>> tally(episode.length());
  const std::size_t first_kept = config.n_sweeps - config.n_keep;
  for (std::size_t sweep = 0; sweep < config.n_sweeps; ++sweep) {
    gibbs_sweep_path(model, episode, z, eng);
    if (sweep >= first_kept)
      for (std::size_t t = 0; t < z.size(); ++t) ++tally[t][index(z[t])];
  }

  DecodeResult out;
  out.probabilities.resize(episode.length());
  for (std::size_t t = 0; t < tally.size(); ++t)
    for (std::size_t k = 0; k < kNumTransient; ++k)
      out.probabilities[t][k] =
          static_cast<double>(tally[t][k]) / static_cast<double>(config.n_keep);
  out.map_states = marginal_map_states(out.probabilities);
  return out;
}

inline std::vector<DecodeResult> decode_cohort(std::span<const PatientEpisode> episodes,
                                               const ModelParams& mp, const DecodeConfig& config,
                                               std::size_t threads = 1) {
  std::vector<DecodeResult> out(episodes.size());
  parallel_for(episodes.size(), threads, [&](std::size_t i) {
    try {
      out[i] = decode(episodes[i], mp, config, i);
    } catch (const InfeasibleParameters& e) {
      throw InfeasiblePatient(i, e);
    }
  });
  return out;
}

}  // namespace sepsis_hmm
