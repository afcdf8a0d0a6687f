#pragma once

// Seeded random streams. Every stream is keyed by (seed, purpose, indices...)
// so results never depend on generation order or thread scheduling, and a
// resumed run only needs the sweep counter to regenerate its streams.

#include <cstdint>
#include <initializer_list>
#include <random>

namespace sepsis_hmm {

using Engine = std::mt19937_64;

// Purpose tags for stream derivation.
enum class Stream : std::uint64_t {
  CohortPatient = 1,
  ChainInit = 2,
  Latents = 3,
  Gamma = 4,
  Mu = 5,
  Sigma = 6,
  Beta = 7,
  Lambda = 8,
  Decode = 9,
};

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, Stream purpose,
                                 std::initializer_list<std::uint64_t> keys = {}) {
  std::uint64_t h = mix64(seed ^ mix64(static_cast<std::uint64_t>(purpose)));
  for (auto k : keys) h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

inline Engine make_stream(std::uint64_t seed, Stream purpose,
                          std::initializer_list<std::uint64_t> keys = {}) {
  return Engine(derive_seed(seed, purpose, keys));
}

// Distribution objects are constructed per draw: std::normal_distribution
// caches a spare variate, which would make the engine state alone an
// incomplete description of the stream.
inline double draw_uniform(Engine& eng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(eng);
}

inline double draw_normal(Engine& eng, double mean = 0.0, double sd = 1.0) {
  return std::normal_distribution<double>(mean, sd)(eng);
}

inline double draw_gamma(Engine& eng, double shape, double scale = 1.0) {
  return std::gamma_distribution<double>(shape, scale)(eng);
}

inline double draw_beta(Engine& eng, double a, double b) {
  const double x = draw_gamma(eng, a);
  const double y = draw_gamma(eng, b);
  return x / (x + y);
}

// Inverse-gamma with shape a and scale b: density prop. to v^{-a-1} exp(-b/v).
inline double draw_inverse_gamma(Engine& eng, double shape, double scale) {
  return scale / draw_gamma(eng, shape);
}

}  // namespace sepsis_hmm
