#pragma once

// Metropolis-Hastings-within-Gibbs sampler for the progression model.
//
// One sweep updates, in order: latent states (single-site Gibbs), gamma
// (conjugate Beta), emission means (conjugate normal), emission variances
// (conjugate inverse-gamma), beta (random walk in log space) and lambda
// (random walk in logit space). Every kernel draws from a stream keyed by
// (seed, kernel, sweep[, patient]) so a run is reproducible from its seed and
// can be resumed from any completed sweep.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sepsis_hmm/forward_backward.hpp"
#include "sepsis_hmm/kde.hpp"
#include "sepsis_hmm/model.hpp"
#include "sepsis_hmm/parallel.hpp"
#include "sepsis_hmm/random.hpp"

namespace sepsis_hmm {

// Normal prior on every emission mean, per state and vital.
struct MuPrior {
  EmissionParams::Table mean{};
  EmissionParams::Table sd{};
  bool operator==(const MuPrior&) const = default;
};

struct SamplerConfig {
  std::size_t n_sweeps = 10000;
  std::size_t n_keep = 2000;  // taken from the end of the run
  // Step sizes adapt toward target_acceptance every adapt_interval sweeps
  // during the first min(adapt_burnin, n_sweeps - n_keep) sweeps, then freeze.
  std::size_t adapt_burnin = 2000;
  std::size_t adapt_interval = 50;
  double target_acceptance = 0.3;
  double beta_log_step = 0.3;
  double lambda_logit_step = 0.3;
  std::uint64_t seed = 1;
  // Unset: per-vital cohort mean and 10x the cohort sd, shared by all states.
  std::optional<MuPrior> mu_prior;
  // Inverse-gamma (shape, scale) on each emission variance. The default is
  // the vague pairing: precision ~ Gamma(shape 0.001, scale 1000), i.e.
  // variance ~ Inv-Gamma(0.001, 0.001).
  double sigma_prior_shape = 0.001;
  double sigma_prior_scale = 0.001;
  // Gamma(shape, rate) on each beta_j; (0, 0) is the improper 1/beta prior.
  double beta_prior_shape = 0.0;
  double beta_prior_rate = 0.0;
  double lambda_prior_a = 100.0;
  double lambda_prior_b = 2.0;
  bool use_outcomes = true;
  bool keep_latents = false;
  std::size_t threads = 1;  // does not affect results

  std::size_t adapt_end() const { return std::min(adapt_burnin, n_sweeps - n_keep); }

  void validate() const {
    if (n_sweeps < 1) throw ValidationError("sampler config: n_sweeps must be >= 1");
    if (n_keep < 1 || n_keep > n_sweeps)
      throw ValidationError("sampler config: need 1 <= n_keep <= n_sweeps");
    if (!(beta_log_step > 0.0) || !(lambda_logit_step > 0.0))
      throw ValidationError("sampler config: step sizes must be > 0");
    if (adapt_interval < 1) throw ValidationError("sampler config: adapt_interval must be >= 1");
    if (!(target_acceptance > 0.0 && target_acceptance < 1.0))
      throw ValidationError("sampler config: target_acceptance must be in (0, 1)");
    if (!(sigma_prior_shape > 0.0 && sigma_prior_scale > 0.0))
      throw ValidationError("sampler config: sigma prior shape and scale must be > 0");
    if (beta_prior_shape < 0.0 || beta_prior_rate < 0.0)
      throw ValidationError("sampler config: beta prior hyperparameters must be >= 0");
    if (!(lambda_prior_a > 0.0 && lambda_prior_b > 0.0))
      throw ValidationError("sampler config: lambda prior hyperparameters must be > 0");
    if (mu_prior) {
      for (const auto& row : mu_prior->sd)
        for (double s : row)
          if (!(s > 0.0)) throw ValidationError("sampler config: mu prior sd must be > 0");
    }
  }
};

// Per-element MH proposal/acceptance counts.
struct AcceptanceCounter {
  std::array<std::uint64_t, 3> proposed{};
  std::array<std::uint64_t, 3> accepted{};

  double rate(std::size_t i) const {
    return proposed[i] == 0 ? 0.0
                            : static_cast<double>(accepted[i]) / static_cast<double>(proposed[i]);
  }
  void record(std::size_t i, bool ok) {
    ++proposed[i];
    if (ok) ++accepted[i];
  }
  bool operator==(const AcceptanceCounter&) const = default;
};

struct ChainState {
  std::size_t sweep = 0;  // completed sweeps
  ModelParams params;
  LatentAssignments latents;
  std::array<double, kNumCovariates> beta_step{};
  std::array<double, kNumTransient> lambda_step{};
  AcceptanceCounter beta_window, lambda_window;  // current adaptation window
  AcceptanceCounter beta_total, lambda_total;    // after adaptation
  bool operator==(const ChainState&) const = default;
};

struct ChainSample {
  std::size_t sweep = 0;
  ModelParams params;
  std::optional<LatentAssignments> latents;
  bool operator==(const ChainSample&) const = default;
};

struct PosteriorChain {
  std::vector<ChainSample> samples;
  std::uint64_t seed = 0;
  SamplerConfig config;
  AcceptanceCounter beta_acceptance, lambda_acceptance;
  std::vector<std::string> warnings;

  std::size_t size() const { return samples.size(); }
};

// Move counts out of each transient state.
struct TransitionCounts {
  std::array<std::uint32_t, kNumTransient> improve{};
  std::array<std::uint32_t, kNumTransient> stay{};
  std::array<std::uint32_t, kNumTransient> worsen{};

  TransitionCounts& operator+=(const TransitionCounts& o) {
    for (std::size_t k = 0; k < kNumTransient; ++k) {
      improve[k] += o.improve[k];
      stay[k] += o.stay[k];
      worsen[k] += o.worsen[k];
    }
    return *this;
  }
  bool operator==(const TransitionCounts&) const = default;
};

// Counts every move along the path; with outcomes in use, the terminal move
// into G (an improvement from S1) or D (a worsening from S3) is included.
inline TransitionCounts count_transitions(const LatentPath& z, Outcome outcome, bool use_outcomes) {
  TransitionCounts c;
  for (std::size_t t = 0; t + 1 < z.size(); ++t) {
    const std::size_t from = index(z[t]);
    const std::size_t to = index(z[t + 1]);
    if (to < from) ++c.improve[from];
    else if (to == from) ++c.stay[from];
    else ++c.worsen[from];
  }
  if (use_outcomes && !z.empty()) {
    if (outcome == Outcome::Discharged) ++c.improve[index(z.back())];
    if (outcome == Outcome::Died) ++c.worsen[index(z.back())];
  }
  return c;
}

// Immutable inputs shared by all kernels: the cohort, the configuration and
// the resolved emission-mean prior.
class SamplerContext {
 public:
  SamplerContext(std::span<const PatientEpisode> cohort, SamplerConfig config)
      : cohort_(cohort), config_(std::move(config)) {
    config_.validate();
    if (cohort_.empty()) throw ValidationError("sampler: cohort is empty");
    for (const auto& e : cohort_)
      if (e.length() == 0) throw ValidationError("sampler: episode " + e.episode_id + " is empty");
    mu_prior_ = config_.mu_prior ? *config_.mu_prior : default_mu_prior(cohort_);
  }

  std::span<const PatientEpisode> cohort() const { return cohort_; }
  const SamplerConfig& config() const { return config_; }
  const MuPrior& mu_prior() const { return mu_prior_; }

  // Per-vital mean and sd over every interval of the cohort (sd falls back
  // to 1 with fewer than two intervals or no spread).
  static std::pair<std::array<double, kNumVitals>, std::array<double, kNumVitals>> vital_moments(
      std::span<const PatientEpisode> cohort) {
    std::array<double, kNumVitals> mean{}, sd{};
    std::size_t n = 0;
    for (const auto& e : cohort)
      for (const auto& x : e.intervals) {
        ++n;
        for (std::size_t d = 0; d < kNumVitals; ++d) mean[d] += x.values[d];
      }
    for (auto& m : mean) m /= static_cast<double>(n);
    for (const auto& e : cohort)
      for (const auto& x : e.intervals)
        for (std::size_t d = 0; d < kNumVitals; ++d)
          sd[d] += (x.values[d] - mean[d]) * (x.values[d] - mean[d]);
    for (auto& s : sd) {
      s = n > 1 ? std::sqrt(s / static_cast<double>(n - 1)) : 0.0;
      if (!(s > 0.0)) s = 1.0;
    }
    return {mean, sd};
  }

  static MuPrior default_mu_prior(std::span<const PatientEpisode> cohort) {
    const auto [mean, sd] = vital_moments(cohort);
    MuPrior p;
    for (std::size_t k = 0; k < kNumTransient; ++k)
      for (std::size_t d = 0; d < kNumVitals; ++d) {
        p.mean[k][d] = mean[d];
        p.sd[k][d] = 10.0 * sd[d];
      }
    return p;
  }

 private:
  std::span<const PatientEpisode> cohort_;
  SamplerConfig config_;
  MuPrior mu_prior_;
};

// ---------------------------------------------------------------------------
// Latent states

// Everything the single-site update needs for one patient with globals fixed.
struct PathModel {
  std::array<std::array<double, kNumTransient>, kNumTransient> log_a{};  // among S1..S3
  std::array<double, kNumTransient> log_terminal{};
  std::array<double, kNumTransient> log_norm{};  // sum_d -0.5 ln(2 pi) - ln sigma
  EmissionParams::Table inv_var{};
  EmissionParams::Table mu{};

  double log_emission(const VitalSigns& x, std::size_t k) const {
    double q = 0.0;
    for (std::size_t d = 0; d < kNumVitals; ++d) {
      const double r = x.values[d] - mu[k][d];
      q += r * r * inv_var[k][d];
    }
    return log_norm[k] - 0.5 * q;
  }
};

inline PathModel make_path_model(const TransitionMatrix& a, const EmissionParams& ep,
                                 Outcome outcome, bool use_outcome) {
  PathModel m;
  for (std::size_t i = 0; i < kNumTransient; ++i)
    for (std::size_t j = 0; j < kNumTransient; ++j) m.log_a[i][j] = detail::safe_log(a[i + 1][j + 1]);
  m.log_terminal = log_terminal_factor(a, outcome, use_outcome);
  for (std::size_t k = 0; k < kNumTransient; ++k) {
    m.log_norm[k] = 0.0;
    for (std::size_t d = 0; d < kNumVitals; ++d) {
      m.log_norm[k] += -kHalfLog2Pi - std::log(ep.sigma[k][d]);
      m.inv_var[k][d] = 1.0 / (ep.sigma[k][d] * ep.sigma[k][d]);
      m.mu[k][d] = ep.mu[k][d];
    }
  }
  return m;
}

inline PathModel make_path_model(const PatientEpisode& e, const ModelParams& mp, bool use_outcome) {
  return make_path_model(transition_matrix(mp.transition, e.covariates), mp.emission, e.outcome,
                         use_outcome);
}

// p(z_t = k | z_{t-1}, z_{t+1}, x_t) for one site. The first interval uses
// the uniform initial distribution; the last uses the terminal factor.
inline StateProbabilities latent_conditional(const PathModel& m, const PatientEpisode& e,
                                             const LatentPath& z, std::size_t t) {
  const std::size_t n = e.length();
  std::array<double, kNumTransient> w{};
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < kNumTransient; ++k) {
    double v = m.log_emission(e.intervals[t], k);
    if (t > 0) v += m.log_a[index(z[t - 1])][k];
    v += (t + 1 < n) ? m.log_a[k][index(z[t + 1])] : m.log_terminal[k];
    w[k] = v;
    hi = std::max(hi, v);
  }
  if (!std::isfinite(hi))
    throw ImpossiblePathError("latent update: no feasible state for episode " + e.episode_id +
                              " at interval " + std::to_string(t));
  StateProbabilities p{};
  double total = 0.0;
  for (std::size_t k = 0; k < kNumTransient; ++k) {
    p[k] = std::exp(w[k] - hi);
    total += p[k];
  }
  for (auto& v : p) v /= total;
  return p;
}

inline TransientState draw_state(const StateProbabilities& p, Engine& eng) {
  const double u = draw_uniform(eng);
  double cum = 0.0;
  for (std::size_t k = 0; k + 1 < kNumTransient; ++k) {
    cum += p[k];
    if (u < cum && p[k] > 0.0) return transient_from_index(k);
  }
  // Last state with positive mass.
  for (std::size_t k = kNumTransient; k-- > 0;)
    if (p[k] > 0.0) return transient_from_index(k);
  return TransientState::S1;
}

// One left-to-right single-site Gibbs pass over a path.
inline void gibbs_sweep_path(const PathModel& m, const PatientEpisode& e, LatentPath& z,
                             Engine& eng) {
  for (std::size_t t = 0; t < e.length(); ++t) z[t] = draw_state(latent_conditional(m, e, z, t), eng);
}

// A path drawn uniformly from all banded paths (|z_t - z_{t+1}| <= 1) that
// satisfy the endpoint constraint implied by the outcome.
inline LatentPath random_feasible_path(std::size_t length, Outcome outcome, bool use_outcome,
                                       Engine& eng) {
  std::vector<std::array<double, kNumTransient>> completions(length);
  auto& last = completions[length - 1];
  last = {1.0, 1.0, 1.0};
  if (use_outcome && outcome == Outcome::Discharged) last = {1.0, 0.0, 0.0};
  if (use_outcome && outcome == Outcome::Died) last = {0.0, 0.0, 1.0};
  for (std::size_t t = length - 1; t-- > 0;) {
    double total = 0.0;
    for (std::size_t k = 0; k < kNumTransient; ++k) {
      double c = 0.0;
      for (std::size_t j = (k == 0 ? 0 : k - 1); j <= std::min(k + 1, kNumTransient - 1); ++j)
        c += completions[t + 1][j];
      completions[t][k] = c;
      total += c;
    }
    for (auto& c : completions[t]) c /= total;  // rescale; only ratios matter
  }
  LatentPath z(length);
  for (std::size_t t = 0; t < length; ++t) {
    StateProbabilities p{};
    double total = 0.0;
    for (std::size_t k = 0; k < kNumTransient; ++k) {
      const bool reachable = t == 0 || (k + 1 >= index(z[t - 1]) && k <= index(z[t - 1]) + 1);
      p[k] = reachable ? completions[t][k] : 0.0;
      total += p[k];
    }
    for (auto& v : p) v /= total;
    z[t] = draw_state(p, eng);
  }
  return z;
}

inline void update_latents(const SamplerContext& ctx, ChainState& state, std::uint64_t sweep) {
  const auto cohort = ctx.cohort();
  const auto& cfg = ctx.config();
  parallel_for(cohort.size(), cfg.threads, [&](std::size_t i) {
    Engine eng = make_stream(cfg.seed, Stream::Latents, {sweep, i});
    PathModel m;
    try {
      m = make_path_model(cohort[i], state.params, cfg.use_outcomes);
    } catch (const InfeasibleParameters& e) {
      throw InfeasiblePatient(i, e);
    }
    gibbs_sweep_path(m, cohort[i], state.latents[i], eng);
  });
}

// ---------------------------------------------------------------------------
// Healing probabilities gamma

struct BetaPosterior {
  double a = 1.0;
  double b = 1.0;
};

// Uniform prior times gamma^improve (1 - gamma)^stay; the worsening
// probability 1 - P_k does not involve gamma.
inline BetaPosterior gamma_posterior(std::uint64_t improve, std::uint64_t stay) {
  return {static_cast<double>(improve) + 1.0, static_cast<double>(stay) + 1.0};
}

inline TransitionCounts total_transition_counts(const SamplerContext& ctx, const ChainState& state) {
  TransitionCounts total;
  const auto cohort = ctx.cohort();
  for (std::size_t i = 0; i < cohort.size(); ++i)
    total += count_transitions(state.latents[i], cohort[i].outcome, ctx.config().use_outcomes);
  return total;
}

inline void update_gamma(const SamplerContext& ctx, ChainState& state, Engine& eng) {
  const TransitionCounts total = total_transition_counts(ctx, state);
  for (std::size_t k = 0; k < kNumTransient; ++k) {
    const auto post = gamma_posterior(total.improve[k], total.stay[k]);
    double g = draw_beta(eng, post.a, post.b);
    // Keep the draw strictly inside (0, 1).
    g = std::clamp(g, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
    state.params.transition.gamma[k] = g;
  }
}

// ---------------------------------------------------------------------------
// Emission parameters

struct EmissionStats {
  std::array<std::size_t, kNumTransient> count{};
  EmissionParams::Table sum{};
};

inline EmissionStats emission_stats(const SamplerContext& ctx, const LatentAssignments& latents) {
  EmissionStats s;
  const auto cohort = ctx.cohort();
  for (std::size_t i = 0; i < cohort.size(); ++i)
    for (std::size_t t = 0; t < cohort[i].length(); ++t) {
      const std::size_t k = index(latents[i][t]);
      ++s.count[k];
      for (std::size_t d = 0; d < kNumVitals; ++d) s.sum[k][d] += cohort[i].intervals[t].values[d];
    }
  return s;
}

struct NormalPosterior {
  double mean = 0.0;
  double sd = 1.0;
};

// Normal prior N(prior_mean, prior_sd^2) on a mean with n observations of
// known sd summing to `sum`.
inline NormalPosterior normal_mean_posterior(double prior_mean, double prior_sd, std::size_t n,
                                             double sum, double sigma) {
  const double prior_prec = 1.0 / (prior_sd * prior_sd);
  const double data_prec = static_cast<double>(n) / (sigma * sigma);
  const double prec = prior_prec + data_prec;
  const double mean = (prior_mean * prior_prec + sum / (sigma * sigma)) / prec;
  return {mean, 1.0 / std::sqrt(prec)};
}

inline void update_mu(const SamplerContext& ctx, ChainState& state, const EmissionStats& stats,
                      Engine& eng) {
  const auto& prior = ctx.mu_prior();
  auto& ep = state.params.emission;
  for (std::size_t k = 0; k < kNumTransient; ++k)
    for (std::size_t d = 0; d < kNumVitals; ++d) {
      const auto post = normal_mean_posterior(prior.mean[k][d], prior.sd[k][d], stats.count[k],
                                              stats.sum[k][d], ep.sigma[k][d]);
      ep.mu[k][d] = draw_normal(eng, post.mean, post.sd);
    }
}

struct InverseGammaPosterior {
  double shape = 1.0;
  double scale = 1.0;
};

inline InverseGammaPosterior inverse_gamma_posterior(double prior_shape, double prior_scale,
                                                     std::size_t n, double sum_sq) {
  return {prior_shape + 0.5 * static_cast<double>(n), prior_scale + 0.5 * sum_sq};
}

inline EmissionParams::Table sum_squared_deviations(const SamplerContext& ctx,
                                                    const LatentAssignments& latents,
                                                    const EmissionParams::Table& mu) {
  EmissionParams::Table ss{};
  const auto cohort = ctx.cohort();
  for (std::size_t i = 0; i < cohort.size(); ++i)
    for (std::size_t t = 0; t < cohort[i].length(); ++t) {
      const std::size_t k = index(latents[i][t]);
      for (std::size_t d = 0; d < kNumVitals; ++d) {
        const double r = cohort[i].intervals[t].values[d] - mu[k][d];
        ss[k][d] += r * r;
      }
    }
  return ss;
}

// Deviations are taken about the current (just updated) means. A draw that is
// not a positive finite variance (possible only for an empty state under the
// very diffuse prior) leaves sigma unchanged.
inline void update_sigma(const SamplerContext& ctx, ChainState& state, const EmissionStats& stats,
                         Engine& eng) {
  const auto& cfg = ctx.config();
  auto& ep = state.params.emission;
  const auto ss = sum_squared_deviations(ctx, state.latents, ep.mu);
  for (std::size_t k = 0; k < kNumTransient; ++k)
    for (std::size_t d = 0; d < kNumVitals; ++d) {
      const auto post =
          inverse_gamma_posterior(cfg.sigma_prior_shape, cfg.sigma_prior_scale, stats.count[k], ss[k][d]);
      const double var = draw_inverse_gamma(eng, post.shape, post.scale);
      const double s = std::sqrt(var);
      if (std::isfinite(s) && s > 0.0) ep.sigma[k][d] = s;
    }
}

// ---------------------------------------------------------------------------
// Transition parameters beta and lambda (Metropolis-Hastings)

// Per-patient move counts in the form the beta/lambda likelihood needs:
// non-worsening moves (improve + stay) and worsening moves per state.
struct PersistenceCounts {
  std::vector<std::array<std::uint32_t, kNumTransient>> persist;
  std::vector<std::array<std::uint32_t, kNumTransient>> worsen;
};

inline PersistenceCounts persistence_counts(const SamplerContext& ctx, const ChainState& state) {
  const auto cohort = ctx.cohort();
  PersistenceCounts pc;
  pc.persist.resize(cohort.size());
  pc.worsen.resize(cohort.size());
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto c = count_transitions(state.latents[i], cohort[i].outcome, ctx.config().use_outcomes);
    for (std::size_t k = 0; k < kNumTransient; ++k) {
      pc.persist[i][k] = c.improve[k] + c.stay[k];
      pc.worsen[i][k] = c.worsen[k];
    }
  }
  return pc;
}

// Transition log-likelihood terms that depend on (beta, lambda):
//   sum_i sum_k persist_ik * log P_ik + worsen_ik * log(1 - P_ik),
// with P_ik = lambda_k exp(-beta'c_i). Returns -inf if any patient of the
// cohort has some P_ik outside (0, 1].
inline double persistence_log_likelihood(std::span<const PatientEpisode> cohort,
                                         const PersistenceCounts& counts,
                                         const std::array<double, kNumCovariates>& beta,
                                         const std::array<double, kNumTransient>& lambda) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  double total = 0.0;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const double s = hazard_exponent(beta, cohort[i].covariates);
    if (!std::isfinite(s)) return kNegInf;
    for (std::size_t k = 0; k < kNumTransient; ++k) {
      const double log_p = std::log(lambda[k]) - s;
      const double p = std::exp(log_p);
      if (!(p > 0.0 && p <= 1.0)) return kNegInf;
      if (counts.persist[i][k] > 0) total += counts.persist[i][k] * log_p;
      if (counts.worsen[i][k] > 0) total += counts.worsen[i][k] * std::log1p(-p);
    }
  }
  return std::isnan(total) ? kNegInf : total;
}

// Log prior of u = ln(beta_j) including the Jacobian d(beta)/du = beta:
// Gamma(shape, rate) gives shape * u - rate * e^u. Under the default
// Gamma(0, 0) the 1/beta density and the Jacobian cancel exactly.
inline double beta_log_prior(double beta_j) { return -std::log(beta_j); }
inline double log_jacobian_log_transform(double beta_j) { return std::log(beta_j); }
inline double beta_log_target_prior(double beta_j, double shape, double rate) {
  if (shape == 0.0 && rate == 0.0) return 0.0;
  return shape * std::log(beta_j) - rate * beta_j;
}

// Log prior of v = logit(lambda_k) including the Jacobian lambda (1 - lambda).
inline double lambda_log_target_prior(double lambda_k, double a, double b) {
  return a * std::log(lambda_k) + b * std::log1p(-lambda_k);
}

inline void update_beta(const SamplerContext& ctx, ChainState& state,
                        const PersistenceCounts& counts, Engine& eng, AcceptanceCounter& counter) {
  const auto& cfg = ctx.config();
  auto& tp = state.params.transition;
  double current = persistence_log_likelihood(ctx.cohort(), counts, tp.beta, tp.lambda);
  for (std::size_t j = 0; j < kNumCovariates; ++j) {
    const double step = state.beta_step[j];
    const double u_new = std::log(tp.beta[j]) + draw_normal(eng, 0.0, step);
    const double log_u = std::log(draw_uniform(eng));
    auto proposal = tp.beta;
    proposal[j] = std::exp(u_new);
    bool accept = false;
    if (std::isfinite(proposal[j]) && proposal[j] > 0.0) {
      const double proposed = persistence_log_likelihood(ctx.cohort(), counts, proposal, tp.lambda);
      if (std::isfinite(proposed)) {
        const double log_ratio =
            proposed - current +
            beta_log_target_prior(proposal[j], cfg.beta_prior_shape, cfg.beta_prior_rate) -
            beta_log_target_prior(tp.beta[j], cfg.beta_prior_shape, cfg.beta_prior_rate);
        if (log_u < log_ratio) {
          accept = true;
          tp.beta = proposal;
          current = proposed;
        }
      }
    }
    counter.record(j, accept);
  }
}

inline void update_lambda(const SamplerContext& ctx, ChainState& state,
                          const PersistenceCounts& counts, Engine& eng,
                          AcceptanceCounter& counter) {
  const auto& cfg = ctx.config();
  auto& tp = state.params.transition;
  double current = persistence_log_likelihood(ctx.cohort(), counts, tp.beta, tp.lambda);
  for (std::size_t k = 0; k < kNumTransient; ++k) {
    const double step = state.lambda_step[k];
    const double logit = std::log(tp.lambda[k]) - std::log1p(-tp.lambda[k]);
    const double v_new = logit + draw_normal(eng, 0.0, step);
    const double log_u = std::log(draw_uniform(eng));
    auto proposal = tp.lambda;
    proposal[k] = 1.0 / (1.0 + std::exp(-v_new));
    bool accept = false;
    if (proposal[k] > 0.0 && proposal[k] < 1.0) {
      const double proposed = persistence_log_likelihood(ctx.cohort(), counts, tp.beta, proposal);
      if (std::isfinite(proposed)) {
        const double log_ratio =
            proposed - current +
            lambda_log_target_prior(proposal[k], cfg.lambda_prior_a, cfg.lambda_prior_b) -
            lambda_log_target_prior(tp.lambda[k], cfg.lambda_prior_a, cfg.lambda_prior_b);
        if (log_u < log_ratio) {
          accept = true;
          tp.lambda = proposal;
          current = proposed;
        }
      }
    }
    counter.record(k, accept);
  }
}

// ---------------------------------------------------------------------------
// Initialization and driver

inline bool cohort_feasible(std::span<const PatientEpisode> cohort, const TransitionParams& tp) {
  const double lo = min_hazard_exponent(tp.beta, cohort);
  if (!std::isfinite(lo)) return false;
  return persistence(tp.lambda, lo).has_value();
}

// Initial emission-mean offsets, in cohort standard deviations.
inline constexpr double kInitSeveritySpread = 0.5;
inline constexpr double kInitJitter = 0.1;

inline ChainState init_chain(const SamplerContext& ctx) {
  const auto& cfg = ctx.config();
  const auto cohort = ctx.cohort();
  Engine eng = make_stream(cfg.seed, Stream::ChainInit);
  ChainState state;

  auto& tp = state.params.transition;
  tp.lambda.fill(cfg.lambda_prior_a / (cfg.lambda_prior_a + cfg.lambda_prior_b));
  tp.gamma.fill(0.5);
  tp.beta.fill(0.1);
  int halvings = 0;
  while (!cohort_feasible(cohort, tp)) {
    if (++halvings > 200)
      throw ValidationError("sampler init: no feasible beta for this cohort's covariates");
    for (auto& b : tp.beta) b *= 0.5;
  }

  // Emission means start at the cohort moments, spread by severity on the
  // vitals that define it (heart rate, respiratory rate, temperature) plus a
  // small jitter. A symmetric random start lets the first latent sweeps
  // settle on a permuted labelling the single-site sampler cannot leave.
  const auto [mean, sd] = SamplerContext::vital_moments(cohort);
  for (std::size_t k = 0; k < kNumTransient; ++k)
    for (std::size_t d = 0; d < kNumVitals; ++d) {
      const bool severity_marker = d == index(Vital::HeartRate) ||
                                   d == index(Vital::RespiratoryRate) ||
                                   d == index(Vital::Temperature);
      const double offset = severity_marker ? kInitSeveritySpread * (static_cast<double>(k) - 1.0) : 0.0;
      state.params.emission.mu[k][d] = mean[d] + sd[d] * (offset + kInitJitter * draw_normal(eng));
      state.params.emission.sigma[k][d] = sd[d];
    }

  state.latents.reserve(cohort.size());
  for (const auto& e : cohort)
    state.latents.push_back(random_feasible_path(e.length(), e.outcome, cfg.use_outcomes, eng));

  state.beta_step.fill(cfg.beta_log_step);
  state.lambda_step.fill(cfg.lambda_logit_step);
  require_valid(state.params);
  return state;
}

inline constexpr double kMinStep = 1e-4;
inline constexpr double kMaxStep = 10.0;

// Multiplicative step adjustment toward the target acceptance rate.
template <std::size_t N>
void adapt_steps(std::array<double, N>& steps, AcceptanceCounter& window, double target) {
  for (std::size_t i = 0; i < N; ++i) {
    if (window.proposed[i] == 0) continue;
    steps[i] = std::clamp(steps[i] * std::exp(2.0 * (window.rate(i) - target)), kMinStep, kMaxStep);
  }
  window = {};
}

inline void sweep_once(const SamplerContext& ctx, ChainState& state) {
  const auto& cfg = ctx.config();
  const std::uint64_t sweep = state.sweep;
  const bool adapting = state.sweep < cfg.adapt_end();

  update_latents(ctx, state, sweep);
  {
    Engine eng = make_stream(cfg.seed, Stream::Gamma, {sweep});
    update_gamma(ctx, state, eng);
  }
  const EmissionStats stats = emission_stats(ctx, state.latents);
  {
    Engine eng = make_stream(cfg.seed, Stream::Mu, {sweep});
    update_mu(ctx, state, stats, eng);
  }
  {
    Engine eng = make_stream(cfg.seed, Stream::Sigma, {sweep});
    update_sigma(ctx, state, stats, eng);
  }
  const PersistenceCounts counts = persistence_counts(ctx, state);
  {
    Engine eng = make_stream(cfg.seed, Stream::Beta, {sweep});
    update_beta(ctx, state, counts, eng, adapting ? state.beta_window : state.beta_total);
  }
  {
    Engine eng = make_stream(cfg.seed, Stream::Lambda, {sweep});
    update_lambda(ctx, state, counts, eng, adapting ? state.lambda_window : state.lambda_total);
  }

  ++state.sweep;
  if (adapting && state.sweep % cfg.adapt_interval == 0) {
    adapt_steps(state.beta_step, state.beta_window, cfg.target_acceptance);
    adapt_steps(state.lambda_step, state.lambda_window, cfg.target_acceptance);
  }
}

struct RunHooks {
  std::function<void(const ChainSample&)> on_sample;
  // Called after every `checkpoint_every` completed sweeps (0 disables).
  std::function<void(const ChainState&, const PosteriorChain&)> on_checkpoint;
  std::size_t checkpoint_every = 0;
  // Stop (resumably) once this many sweeps are complete.
  std::optional<std::size_t> stop_after;
};

inline constexpr double kAcceptanceLow = 0.1;
inline constexpr double kAcceptanceHigh = 0.6;

inline std::vector<std::string> acceptance_warnings(const AcceptanceCounter& beta,
                                                    const AcceptanceCounter& lambda) {
  std::vector<std::string> out;
  auto check = [&](const AcceptanceCounter& c, std::string_view kernel, auto names) {
    for (std::size_t i = 0; i < 3; ++i) {
      if (c.proposed[i] == 0) continue;
      const double r = c.rate(i);
      if (r < kAcceptanceLow || r > kAcceptanceHigh)
        out.push_back(std::string(kernel) + "[" + std::string(names[i]) + "] acceptance rate " +
                      std::to_string(r) + " outside [0.1, 0.6]");
    }
  };
  check(beta, "beta", kCovariateNames);
  check(lambda, "lambda", kTransientNames);
  return out;
}

class Sampler {
 public:
  Sampler(std::span<const PatientEpisode> cohort, SamplerConfig config)
      : ctx_(cohort, std::move(config)), state_(init_chain(ctx_)) {
    chain_.seed = ctx_.config().seed;
    chain_.config = ctx_.config();
  }

  // Resume from a checkpointed state and the samples kept so far.
  Sampler(std::span<const PatientEpisode> cohort, SamplerConfig config, ChainState state,
          PosteriorChain partial)
      : ctx_(cohort, std::move(config)), state_(std::move(state)), chain_(std::move(partial)) {
    if (state_.latents.size() != cohort.size())
      throw ValidationError("resume: checkpoint has " + std::to_string(state_.latents.size()) +
                            " latent paths for a cohort of " + std::to_string(cohort.size()));
    for (std::size_t i = 0; i < cohort.size(); ++i)
      if (state_.latents[i].size() != cohort[i].length())
        throw ValidationError("resume: latent path length mismatch for episode " +
                              cohort[i].episode_id);
    chain_.seed = ctx_.config().seed;
    chain_.config = ctx_.config();
  }

  const SamplerContext& context() const { return ctx_; }
  const ChainState& state() const { return state_; }
  const PosteriorChain& chain() const { return chain_; }
  bool finished() const { return state_.sweep >= ctx_.config().n_sweeps; }

  void run(const RunHooks& hooks = {}) {
    const auto& cfg = ctx_.config();
    const std::size_t first_kept = cfg.n_sweeps - cfg.n_keep;
    while (state_.sweep < cfg.n_sweeps) {
      if (hooks.stop_after && state_.sweep >= *hooks.stop_after) return;
      sweep_once(ctx_, state_);
      if (state_.sweep > first_kept) {
        ChainSample s{state_.sweep, state_.params, std::nullopt};
        if (cfg.keep_latents) s.latents = state_.latents;
        chain_.samples.push_back(std::move(s));
        if (hooks.on_sample) hooks.on_sample(chain_.samples.back());
      }
      if (hooks.checkpoint_every > 0 && hooks.on_checkpoint &&
          state_.sweep % hooks.checkpoint_every == 0 && state_.sweep < cfg.n_sweeps)
        hooks.on_checkpoint(state_, chain_);
    }
    chain_.beta_acceptance = state_.beta_total;
    chain_.lambda_acceptance = state_.lambda_total;
    chain_.warnings = acceptance_warnings(chain_.beta_acceptance, chain_.lambda_acceptance);
  }

  PosteriorChain take_chain() { return std::move(chain_); }

 private:
  SamplerContext ctx_;
  ChainState state_;
  PosteriorChain chain_;
};

inline PosteriorChain run_sampler(std::span<const PatientEpisode> cohort, SamplerConfig config) {
  Sampler sampler(cohort, std::move(config));
  sampler.run();
  return sampler.take_chain();
}

// ---------------------------------------------------------------------------
// Marginal MAP

// Applies `fn(params) -> double&`-style accessors to every continuous scalar.
template <typename Fn>
void for_each_scalar(ModelParams& mp, Fn&& fn) {
  for (auto& v : mp.transition.beta) fn(v);
  for (auto& v : mp.transition.lambda) fn(v);
  for (auto& v : mp.transition.gamma) fn(v);
  for (auto& row : mp.emission.mu)
    for (auto& v : row) fn(v);
  for (auto& row : mp.emission.sigma)
    for (auto& v : row) fn(v);
}

inline constexpr std::size_t kNumScalarParams = 3 + 3 + 3 + 15 + 15;

inline std::array<double, kNumScalarParams> flatten(const ModelParams& mp) {
  std::array<double, kNumScalarParams> out{};
  std::size_t i = 0;
  ModelParams copy = mp;
  for_each_scalar(copy, [&](double& v) { out[i++] = v; });
  return out;
}

inline ModelParams unflatten(const std::array<double, kNumScalarParams>& flat) {
  ModelParams mp;
  std::size_t i = 0;
  for_each_scalar(mp, [&](double& v) { v = flat[i++]; });
  return mp;
}

// Names of the flattened scalars, in flatten() order.
inline std::array<std::string, kNumScalarParams> scalar_names() {
  std::array<std::string, kNumScalarParams> out;
  std::size_t i = 0;
  for (auto c : kCovariateNames) out[i++] = "beta_" + std::string(c);
  for (auto s : kTransientNames) out[i++] = "lambda_" + std::string(s);
  for (auto s : kTransientNames) out[i++] = "gamma_" + std::string(s);
  for (auto s : kTransientNames)
    for (auto v : kVitalColumns) out[i++] = "mu_" + std::string(s) + "_" + std::string(v);
  for (auto s : kTransientNames)
    for (auto v : kVitalColumns) out[i++] = "sigma_" + std::string(s) + "_" + std::string(v);
  return out;
}

inline ModelParams map_params(std::span<const ChainSample> samples) {
  if (samples.size() < kKdeMinSamples)
    throw ValidationError("map_params: chain needs at least " + std::to_string(kKdeMinSamples) +
                          " samples");
  std::array<std::vector<double>, kNumScalarParams> columns;
  for (const auto& s : samples) {
    const auto flat = flatten(s.params);
    for (std::size_t j = 0; j < kNumScalarParams; ++j) columns[j].push_back(flat[j]);
  }
  std::array<double, kNumScalarParams> modes{};
  for (std::size_t j = 0; j < kNumScalarParams; ++j) modes[j] = kde_map(columns[j]);
  ModelParams out = unflatten(modes);
  require_valid(out);
  return out;
}

inline ModelParams map_params(const PosteriorChain& chain) { return map_params(chain.samples); }

// Equal-tailed credible interval of one flattened scalar.
inline std::pair<double, double> credible_interval(std::span<const ChainSample> samples,
                                                   std::size_t scalar, double mass = 0.95) {
  std::vector<double> v;
  v.reserve(samples.size());
  for (const auto& s : samples) v.push_back(flatten(s.params)[scalar]);
  std::sort(v.begin(), v.end());
  const double tail = 0.5 * (1.0 - mass);
  return {detail::sorted_quantile(v, tail), detail::sorted_quantile(v, 1.0 - tail)};
}

// Heart-rate emission means should increase with severity; labels that break
// this ordering indicate a label-switched fit.
inline bool severity_order_consistent(const ModelParams& mp) {
  const auto hr = static_cast<std::size_t>(Vital::HeartRate);
  return mp.emission.mu[0][hr] < mp.emission.mu[1][hr] && mp.emission.mu[1][hr] < mp.emission.mu[2][hr];
}

}  // namespace sepsis_hmm
