#pragma once

// File formats: episode CSV, true-state CSV, criteria-flag CSV, trajectory
// CSV, parameter JSON, posterior sample file and sampler checkpoints.
//
// Every floating-point value is written in its shortest round-trip decimal
// form, so write -> read is value-exact.

#include <charconv>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <istream>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"
#include "sepsis_hmm/analysis.hpp"
#include "sepsis_hmm/cohort_sim.hpp"
#include "sepsis_hmm/criteria.hpp"
#include "sepsis_hmm/model.hpp"
#include "sepsis_hmm/sampler.hpp"

namespace sepsis_hmm::io {

using Json = nlohmann::ordered_json;

inline constexpr int kParamsSchemaVersion = 1;
inline constexpr int kPosteriorSchemaVersion = 1;
inline constexpr int kCheckpointSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Scalars and CSV fields

inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, std::size_t line, std::string_view what) {
  double v = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last || s.empty())
    throw InputError("invalid number '" + std::string(s) + "' for " + std::string(what), line);
  if (!std::isfinite(v)) throw InputError("non-finite " + std::string(what), line);
  return v;
}

inline std::size_t parse_index(std::string_view s, std::size_t line, std::string_view what) {
  std::size_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty())
    throw InputError("invalid integer '" + std::string(s) + "' for " + std::string(what), line);
  return v;
}

inline bool parse_flag(std::string_view s, std::size_t line, std::string_view what) {
  if (s == "1") return true;
  if (s == "0") return false;
  throw InputError("invalid flag '" + std::string(s) + "' for " + std::string(what) +
                       " (expected 0 or 1)",
                   line);
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string_view strip_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

inline void check_episode_id(std::string_view id) {
  if (id.empty() || id.find_first_of(",\n\r") != std::string_view::npos)
    throw ValidationError("episode id '" + std::string(id) +
                          "' must be non-empty without commas or newlines");
}

// Reads a CSV with an exact header and fixed field count. Calls
// row(fields, line_number) for every data row.
template <typename Row>
void read_csv(std::istream& in, std::string_view header, Row&& row) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw InputError("empty file: missing header '" + std::string(header) + "'");
  ++line_no;
  if (strip_cr(line) != header)
    throw InputError("schema mismatch: expected header '" + std::string(header) + "'", line_no);
  const std::size_t n_fields = split_csv(header).size();
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = strip_cr(line);
    if (view.empty()) continue;
    const auto fields = split_csv(view);
    if (fields.size() != n_fields)
      throw InputError("expected " + std::to_string(n_fields) + " fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    row(fields, line_no);
  }
}

template <typename Fn>
auto with_input_file(const std::string& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "' for reading");
  try {
    return fn(in);
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

template <typename Fn>
void with_output_file(const std::string& path, Fn&& fn, std::ios::openmode mode = std::ios::trunc) {
  std::ofstream out(path, std::ios::binary | std::ios::out | mode);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  fn(out);
  out.flush();
  if (!out) throw InputError("write to '" + path + "' failed");
}

// Groups rows into episodes; rows of one episode must be contiguous with
// interval indices 0, 1, 2, ...
class EpisodeAssembler {
 public:
  // Returns true when the row starts a new episode.
  bool accept(std::string_view id, std::size_t interval, std::size_t line) {
    if (current_ && *current_ == id) {
      if (interval != next_)
        throw InputError("non-contiguous interval_index " + std::to_string(interval) +
                             " for episode '" + std::string(id) + "' (expected " +
                             std::to_string(next_) + ")",
                         line);
      ++next_;
      return false;
    }
    if (seen_.contains(std::string(id)))
      throw InputError("rows of episode '" + std::string(id) + "' are not contiguous", line);
    if (interval != 0)
      throw InputError("episode '" + std::string(id) + "' starts at interval_index " +
                           std::to_string(interval) + " (expected 0)",
                       line);
    seen_.insert(std::string(id));
    current_ = std::string(id);
    next_ = 1;
    return true;
  }

 private:
  std::optional<std::string> current_;
  std::size_t next_ = 0;
  std::set<std::string> seen_;
};

// ---------------------------------------------------------------------------
// Episode file

inline constexpr std::string_view kEpisodeHeader =
    "episode_id,interval_index,sbp,dbp,hr,rr,temp,age_z,laps2_z,cops2_z,outcome";

inline void write_episodes(std::ostream& out, std::span<const PatientEpisode> cohort) {
  out << kEpisodeHeader << '\n';
  for (const auto& e : cohort) {
    check_episode_id(e.episode_id);
    for (std::size_t t = 0; t < e.length(); ++t) {
      out << e.episode_id << ',' << t;
      for (double v : e.intervals[t].values) out << ',' << format_double(v);
      for (double c : e.covariates.values) out << ',' << format_double(c);
      out << ',' << name(e.outcome) << '\n';
    }
  }
}

inline std::vector<PatientEpisode> read_episodes(std::istream& in) {
  std::vector<PatientEpisode> cohort;
  EpisodeAssembler assembler;
  read_csv(in, kEpisodeHeader, [&](const std::vector<std::string_view>& f, std::size_t line) {
    const std::size_t t = parse_index(f[1], line, "interval_index");
    VitalSigns x;
    for (std::size_t d = 0; d < kNumVitals; ++d) x.values[d] = parse_double(f[2 + d], line, kVitalColumns[d]);
    Covariates c;
    for (std::size_t j = 0; j < kNumCovariates; ++j)
      c.values[j] = parse_double(f[7 + j], line, kCovariateNames[j]);
    const auto outcome = parse_outcome(f[10]);
    if (!outcome) throw InputError("invalid outcome '" + std::string(f[10]) + "'", line);
    if (f[0].empty()) throw InputError("empty episode_id", line);
    if (assembler.accept(f[0], t, line)) {
      cohort.push_back({std::string(f[0]), c, {}, *outcome});
    } else {
      const auto& e = cohort.back();
      if (!(e.covariates == c))
        throw InputError("covariates differ within episode '" + e.episode_id + "'", line);
      if (e.outcome != *outcome)
        throw InputError("outcome differs within episode '" + e.episode_id + "'", line);
    }
    cohort.back().intervals.push_back(x);
  });
  return cohort;
}

inline void write_episodes(const std::string& path, std::span<const PatientEpisode> cohort) {
  with_output_file(path, [&](std::ostream& out) { write_episodes(out, cohort); });
}

inline std::vector<PatientEpisode> read_episodes(const std::string& path) {
  return with_input_file(path, [](std::istream& in) { return read_episodes(in); });
}

// ---------------------------------------------------------------------------
// True latent states (simulator ground truth, or any per-interval labelling)

inline constexpr std::string_view kStatesHeader = "episode_id,interval_index,state";

struct LabelledPath {
  std::string episode_id;
  LatentPath states;
  bool operator==(const LabelledPath&) const = default;
};

inline void write_states(std::ostream& out, std::span<const LabelledPath> paths) {
  out << kStatesHeader << '\n';
  for (const auto& p : paths) {
    check_episode_id(p.episode_id);
    for (std::size_t t = 0; t < p.states.size(); ++t)
      out << p.episode_id << ',' << t << ',' << name(p.states[t]) << '\n';
  }
}

inline std::vector<LabelledPath> read_states(std::istream& in) {
  std::vector<LabelledPath> out;
  EpisodeAssembler assembler;
  read_csv(in, kStatesHeader, [&](const std::vector<std::string_view>& f, std::size_t line) {
    const std::size_t t = parse_index(f[1], line, "interval_index");
    const auto s = parse_transient(f[2]);
    if (!s) throw InputError("invalid state '" + std::string(f[2]) + "'", line);
    if (assembler.accept(f[0], t, line)) out.push_back({std::string(f[0]), {}});
    out.back().states.push_back(*s);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Criteria flags

inline constexpr std::string_view kFlagsHeader =
    "episode_id,interval_index,sirs_hr,sirs_rr,sirs_temp,sepsis1_met,qsofa_sbp,qsofa_rr,qsofa_met";

struct EpisodeFlags {
  std::string episode_id;
  std::vector<CriteriaFlags> flags;
  bool operator==(const EpisodeFlags&) const = default;
};

inline void write_flags(std::ostream& out, std::span<const EpisodeFlags> cohort) {
  out << kFlagsHeader << '\n';
  for (const auto& e : cohort) {
    check_episode_id(e.episode_id);
    for (std::size_t t = 0; t < e.flags.size(); ++t) {
      const auto& f = e.flags[t];
      out << e.episode_id << ',' << t << ',' << f.sirs_hr << ',' << f.sirs_rr << ',' << f.sirs_temp
          << ',' << f.sepsis1_met << ',' << f.qsofa_sbp << ',' << f.qsofa_rr << ',' << f.qsofa_met
          << '\n';
    }
  }
}

inline std::vector<EpisodeFlags> read_flags(std::istream& in) {
  std::vector<EpisodeFlags> out;
  EpisodeAssembler assembler;
  read_csv(in, kFlagsHeader, [&](const std::vector<std::string_view>& f, std::size_t line) {
    const std::size_t t = parse_index(f[1], line, "interval_index");
    CriteriaFlags c;
    c.sirs_hr = parse_flag(f[2], line, "sirs_hr");
    c.sirs_rr = parse_flag(f[3], line, "sirs_rr");
    c.sirs_temp = parse_flag(f[4], line, "sirs_temp");
    c.sepsis1_met = parse_flag(f[5], line, "sepsis1_met");
    c.qsofa_sbp = parse_flag(f[6], line, "qsofa_sbp");
    c.qsofa_rr = parse_flag(f[7], line, "qsofa_rr");
    c.qsofa_met = parse_flag(f[8], line, "qsofa_met");
    const int sirs = int(c.sirs_hr) + int(c.sirs_rr) + int(c.sirs_temp);
    if (c.sepsis1_met != (sirs >= 2) || c.qsofa_met != (c.qsofa_sbp && c.qsofa_rr))
      throw InputError("inconsistent criteria flags", line);
    if (assembler.accept(f[0], t, line)) out.push_back({std::string(f[0]), {}});
    out.back().flags.push_back(c);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Trajectory export

inline constexpr std::string_view kTrajectoryHeader =
    "episode_id,interval_index,sbp,dbp,hr,rr,temp,state,p_s1,p_s2,p_s3,sepsis1_met,qsofa_met,"
    "age_z,laps2_z,cops2_z,outcome";

inline void write_trajectories(std::ostream& out, std::span<const TrajectoryRecord> records) {
  out << kTrajectoryHeader << '\n';
  for (const auto& r : records) {
    check_episode_id(r.episode_id);
    for (const auto& p : r.points) {
      out << r.episode_id << ',' << p.interval;
      for (double v : p.vitals.values) out << ',' << format_double(v);
      out << ',' << name(p.state);
      for (double v : p.probabilities) out << ',' << format_double(v);
      out << ',' << p.sepsis1_met << ',' << p.qsofa_met;
      for (double c : r.covariates.values) out << ',' << format_double(c);
      out << ',' << name(r.outcome) << '\n';
    }
  }
}

inline std::vector<TrajectoryRecord> read_trajectories(std::istream& in) {
  std::vector<TrajectoryRecord> out;
  EpisodeAssembler assembler;
  read_csv(in, kTrajectoryHeader, [&](const std::vector<std::string_view>& f, std::size_t line) {
    TrajectoryPoint p;
    p.interval = parse_index(f[1], line, "interval_index");
    for (std::size_t d = 0; d < kNumVitals; ++d)
      p.vitals.values[d] = parse_double(f[2 + d], line, kVitalColumns[d]);
    const auto s = parse_transient(f[7]);
    if (!s) throw InputError("invalid state '" + std::string(f[7]) + "'", line);
    p.state = *s;
    for (std::size_t k = 0; k < kNumTransient; ++k)
      p.probabilities[k] = parse_double(f[8 + k], line, "state probability");
    p.sepsis1_met = parse_flag(f[11], line, "sepsis1_met");
    p.qsofa_met = parse_flag(f[12], line, "qsofa_met");
    Covariates c;
    for (std::size_t j = 0; j < kNumCovariates; ++j)
      c.values[j] = parse_double(f[13 + j], line, kCovariateNames[j]);
    const auto outcome = parse_outcome(f[16]);
    if (!outcome) throw InputError("invalid outcome '" + std::string(f[16]) + "'", line);
    if (assembler.accept(f[0], p.interval, line)) {
      out.push_back({std::string(f[0]), *outcome, c, {}});
    } else if (!(out.back().covariates == c) || out.back().outcome != *outcome) {
      throw InputError("episode-level fields differ within episode '" + out.back().episode_id + "'",
                       line);
    }
    out.back().points.push_back(p);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Parameter file (JSON)

namespace detail {

inline void reject_unknown(const Json& obj, std::initializer_list<std::string_view> allowed,
                           const std::string& path) {
  if (!obj.is_object()) throw ValidationError(path + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == key;
    if (!ok) throw ValidationError(path + ": unknown field '" + key + "'");
  }
}

template <std::size_t N>
Json named_values(const std::array<double, N>& v, const std::array<std::string_view, N>& names) {
  Json out = Json::object();
  for (std::size_t i = 0; i < N; ++i) out[std::string(names[i])] = v[i];
  return out;
}

template <std::size_t N>
std::array<double, N> read_named_values(const Json& parent, std::string_view key,
                                        const std::array<std::string_view, N>& names,
                                        const std::string& path) {
  const std::string here = path + "[" + std::string(key) + "]";
  if (!parent.contains(std::string(key))) throw ValidationError("missing " + here);
  const Json& obj = parent.at(std::string(key));
  if (!obj.is_object()) throw ValidationError(here + ": expected an object");
  for (const auto& [k, _] : obj.items()) {
    bool ok = false;
    for (auto n : names) ok = ok || n == k;
    if (!ok) throw ValidationError(here + ": unknown field '" + k + "'");
  }
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    const std::string name(names[i]);
    if (!obj.contains(name)) throw ValidationError("missing " + here + "[" + name + "]");
    if (!obj.at(name).is_number())
      throw ValidationError(here + "[" + name + "]: expected a number");
    out[i] = obj.at(name).get<double>();
  }
  return out;
}

}  // namespace detail

inline Json params_to_json(const ModelParams& mp) {
  Json j;
  j["schema_version"] = kParamsSchemaVersion;
  j["transition"]["beta"] = detail::named_values(mp.transition.beta, kCovariateNames);
  j["transition"]["lambda"] = detail::named_values(mp.transition.lambda, kTransientNames);
  j["transition"]["gamma"] = detail::named_values(mp.transition.gamma, kTransientNames);
  for (std::size_t k = 0; k < kNumTransient; ++k) {
    j["emission"]["mu"][std::string(kTransientNames[k])] =
        detail::named_values(mp.emission.mu[k], kVitalNames);
  }
  for (std::size_t k = 0; k < kNumTransient; ++k) {
    j["emission"]["sigma"][std::string(kTransientNames[k])] =
        detail::named_values(mp.emission.sigma[k], kVitalNames);
  }
  return j;
}

// Structural problems throw ValidationError naming the path; a well-formed
// file that breaks parameter invariants throws with every violation listed.
inline ModelParams params_from_json(const Json& j) {
  detail::reject_unknown(j, {"schema_version", "transition", "emission"}, "params");
  if (!j.contains("schema_version") || !j.at("schema_version").is_number_integer())
    throw ValidationError("params: missing schema_version");
  const int version = j.at("schema_version").get<int>();
  if (version != kParamsSchemaVersion)
    throw ValidationError("params: unsupported schema_version " + std::to_string(version) +
                          " (expected " + std::to_string(kParamsSchemaVersion) + ")");
  if (!j.contains("transition")) throw ValidationError("missing transition");
  if (!j.contains("emission")) throw ValidationError("missing emission");
  const Json& tj = j.at("transition");
  detail::reject_unknown(tj, {"beta", "lambda", "gamma"}, "transition");
  const Json& ej = j.at("emission");
  detail::reject_unknown(ej, {"mu", "sigma"}, "emission");

  ModelParams mp;
  mp.transition.beta = detail::read_named_values(tj, "beta", kCovariateNames, "transition");
  mp.transition.lambda = detail::read_named_values(tj, "lambda", kTransientNames, "transition");
  mp.transition.gamma = detail::read_named_values(tj, "gamma", kTransientNames, "transition");
  for (std::string_view table : {"mu", "sigma"}) {
    const std::string path = "emission." + std::string(table);
    if (!ej.contains(std::string(table))) throw ValidationError("missing " + path);
    const Json& tab = ej.at(std::string(table));
    detail::reject_unknown(tab, {"S1", "S2", "S3"}, path);
    auto& dest = table == "mu" ? mp.emission.mu : mp.emission.sigma;
    for (std::size_t k = 0; k < kNumTransient; ++k)
      dest[k] = detail::read_named_values(tab, kTransientNames[k], kVitalNames, path);
  }
  require_valid(mp);
  return mp;
}

inline void write_params(std::ostream& out, const ModelParams& mp) {
  out << params_to_json(mp).dump(2) << '\n';
}

inline Json parse_json(std::istream& in, std::string_view what) {
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw InputError(std::string(what) + ": malformed JSON: " + e.what());
  }
}

inline ModelParams read_params(std::istream& in) { return params_from_json(parse_json(in, "params")); }

inline void write_params(const std::string& path, const ModelParams& mp) {
  with_output_file(path, [&](std::ostream& out) { write_params(out, mp); });
}

inline ModelParams read_params(const std::string& path) {
  return with_input_file(path, [](std::istream& in) { return read_params(in); });
}

// ---------------------------------------------------------------------------
// Sampler configuration and cohort spec (JSON, every field optional)

namespace detail {

template <typename T>
void maybe_get(const Json& j, const char* key, T& dest) {
  if (!j.contains(key)) return;
  try {
    dest = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("config field '") + key + "': " + e.what());
  }
}

inline Json table_to_json(const EmissionParams::Table& t) {
  Json out = Json::array();
  for (const auto& row : t) out.push_back(row);
  return out;
}

inline EmissionParams::Table table_from_json(const Json& j, const std::string& path) {
  EmissionParams::Table t{};
  try {
    t = j.get<EmissionParams::Table>();
  } catch (const Json::exception&) {
    throw ValidationError(path + ": expected a 3x5 array of numbers");
  }
  return t;
}

}  // namespace detail

// Result-affecting fields only; `threads` is left out so the echo is
// identical for every thread count.
inline Json config_to_json(const SamplerConfig& c) {
  Json j;
  j["n_sweeps"] = c.n_sweeps;
  j["n_keep"] = c.n_keep;
  j["adapt_burnin"] = c.adapt_burnin;
  j["adapt_interval"] = c.adapt_interval;
  j["target_acceptance"] = c.target_acceptance;
  j["beta_log_step"] = c.beta_log_step;
  j["lambda_logit_step"] = c.lambda_logit_step;
  j["seed"] = c.seed;
  if (c.mu_prior) {
    j["mu_prior"]["mean"] = detail::table_to_json(c.mu_prior->mean);
    j["mu_prior"]["sd"] = detail::table_to_json(c.mu_prior->sd);
  }
  j["sigma_prior_shape"] = c.sigma_prior_shape;
  j["sigma_prior_scale"] = c.sigma_prior_scale;
  j["beta_prior_shape"] = c.beta_prior_shape;
  j["beta_prior_rate"] = c.beta_prior_rate;
  j["lambda_prior_a"] = c.lambda_prior_a;
  j["lambda_prior_b"] = c.lambda_prior_b;
  j["use_outcomes"] = c.use_outcomes;
  j["keep_latents"] = c.keep_latents;
  return j;
}

inline void apply_config_json(const Json& j, SamplerConfig& c) {
  detail::reject_unknown(j,
                         {"n_sweeps", "n_keep", "adapt_burnin", "adapt_interval",
                          "target_acceptance", "beta_log_step", "lambda_logit_step", "seed",
                          "mu_prior", "sigma_prior_shape", "sigma_prior_scale", "beta_prior_shape",
                          "beta_prior_rate", "lambda_prior_a", "lambda_prior_b", "use_outcomes",
                          "keep_latents", "threads"},
                         "sampler config");
  detail::maybe_get(j, "n_sweeps", c.n_sweeps);
  detail::maybe_get(j, "n_keep", c.n_keep);
  detail::maybe_get(j, "adapt_burnin", c.adapt_burnin);
  detail::maybe_get(j, "adapt_interval", c.adapt_interval);
  detail::maybe_get(j, "target_acceptance", c.target_acceptance);
  detail::maybe_get(j, "beta_log_step", c.beta_log_step);
  detail::maybe_get(j, "lambda_logit_step", c.lambda_logit_step);
  detail::maybe_get(j, "seed", c.seed);
  if (j.contains("mu_prior")) {
    const Json& mp = j.at("mu_prior");
    detail::reject_unknown(mp, {"mean", "sd"}, "sampler config.mu_prior");
    if (!mp.contains("mean") || !mp.contains("sd"))
      throw ValidationError("sampler config.mu_prior: needs mean and sd");
    c.mu_prior = MuPrior{detail::table_from_json(mp.at("mean"), "mu_prior.mean"),
                         detail::table_from_json(mp.at("sd"), "mu_prior.sd")};
  }
  detail::maybe_get(j, "sigma_prior_shape", c.sigma_prior_shape);
  detail::maybe_get(j, "sigma_prior_scale", c.sigma_prior_scale);
  detail::maybe_get(j, "beta_prior_shape", c.beta_prior_shape);
  detail::maybe_get(j, "beta_prior_rate", c.beta_prior_rate);
  detail::maybe_get(j, "lambda_prior_a", c.lambda_prior_a);
  detail::maybe_get(j, "lambda_prior_b", c.lambda_prior_b);
  detail::maybe_get(j, "use_outcomes", c.use_outcomes);
  detail::maybe_get(j, "keep_latents", c.keep_latents);
  detail::maybe_get(j, "threads", c.threads);
}

inline SamplerConfig config_from_json(const Json& j) {
  SamplerConfig c;
  apply_config_json(j, c);
  return c;
}

inline Json cohort_spec_to_json(const CohortSpec& s) {
  Json j;
  j["n_patients"] = s.n_patients;
  j["max_intervals"] = s.max_intervals;
  j["covariate_mean"] = s.covariate_mean;
  j["covariate_sd"] = s.covariate_sd;
  j["seed"] = s.seed;
  return j;
}

inline void apply_cohort_spec_json(const Json& j, CohortSpec& s) {
  detail::reject_unknown(j, {"n_patients", "max_intervals", "covariate_mean", "covariate_sd", "seed"},
                         "cohort spec");
  detail::maybe_get(j, "n_patients", s.n_patients);
  detail::maybe_get(j, "max_intervals", s.max_intervals);
  detail::maybe_get(j, "covariate_mean", s.covariate_mean);
  detail::maybe_get(j, "covariate_sd", s.covariate_sd);
  detail::maybe_get(j, "seed", s.seed);
}

// ---------------------------------------------------------------------------
// Posterior file: one '#'-prefixed JSON header line, then one CSV line per
// kept sample (sweep index followed by every scalar in flatten() order).
// Lines are only ever appended, so a checkpointed run can truncate back to
// its last checkpoint and continue.

inline std::string iso8601_utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string posterior_header_line(const SamplerConfig& config, bool timestamp) {
  Json h;
  h["format"] = "sepsis-hmm-posterior";
  h["schema_version"] = kPosteriorSchemaVersion;
  h["seed"] = config.seed;
  h["config"] = config_to_json(config);
  Json cols = Json::array();
  cols.push_back("sweep");
  for (const auto& n : scalar_names()) cols.push_back(n);
  h["columns"] = cols;
  if (timestamp) h["created"] = iso8601_utc_now();
  return "#" + h.dump();
}

inline std::string posterior_sample_line(const ChainSample& s) {
  std::string line = std::to_string(s.sweep);
  for (double v : flatten(s.params)) {
    line += ',';
    line += format_double(v);
  }
  return line;
}

inline void write_posterior(std::ostream& out, const PosteriorChain& chain, bool timestamp = false) {
  out << posterior_header_line(chain.config, timestamp) << '\n';
  for (const auto& s : chain.samples) out << posterior_sample_line(s) << '\n';
}

inline PosteriorChain read_posterior(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line.empty() || line[0] != '#')
    throw InputError("posterior file: missing '#' header line", 1);
  Json h;
  try {
    h = Json::parse(std::string_view(line).substr(1));
  } catch (const Json::parse_error& e) {
    throw InputError(std::string("posterior header: malformed JSON: ") + e.what(), 1);
  }
  if (h.value("format", "") != "sepsis-hmm-posterior")
    throw InputError("posterior header: not a posterior file", 1);
  if (h.value("schema_version", 0) != kPosteriorSchemaVersion)
    throw InputError("posterior header: unsupported schema_version", 1);
  PosteriorChain chain;
  chain.config = config_from_json(h.at("config"));
  chain.seed = h.at("seed").get<std::uint64_t>();
  std::size_t last_sweep = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = strip_cr(line);
    if (view.empty()) continue;
    const auto f = split_csv(view);
    if (f.size() != kNumScalarParams + 1)
      throw InputError("truncated or malformed sample: expected " +
                           std::to_string(kNumScalarParams + 1) + " fields, got " +
                           std::to_string(f.size()),
                       line_no);
    ChainSample s;
    s.sweep = parse_index(f[0], line_no, "sweep");
    if (!chain.samples.empty() && s.sweep <= last_sweep)
      throw InputError("sweep indices must increase", line_no);
    last_sweep = s.sweep;
    std::array<double, kNumScalarParams> flat{};
    for (std::size_t i = 0; i < kNumScalarParams; ++i)
      flat[i] = parse_double(f[i + 1], line_no, "parameter value");
    s.params = unflatten(flat);
    chain.samples.push_back(std::move(s));
  }
  return chain;
}

inline void write_posterior(const std::string& path, const PosteriorChain& chain, bool timestamp = false) {
  with_output_file(path, [&](std::ostream& out) { write_posterior(out, chain, timestamp); });
}

inline PosteriorChain read_posterior(const std::string& path) {
  return with_input_file(path, [](std::istream& in) { return read_posterior(in); });
}

// ---------------------------------------------------------------------------
// Checkpoints (JSON): complete chain state plus the samples kept so far.

inline std::uint64_t cohort_fingerprint(std::span<const PatientEpisode> cohort) {
  std::uint64_t h = mix64(cohort.size());
  auto feed = [&](std::uint64_t v) { h = mix64(h ^ v); };
  auto feed_double = [&](double d) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &d, sizeof bits);
    feed(bits);
  };
  for (const auto& e : cohort) {
    for (unsigned char ch : e.episode_id) feed(ch);
    feed(e.length());
    feed(static_cast<std::uint64_t>(e.outcome));
    for (double c : e.covariates.values) feed_double(c);
    for (const auto& x : e.intervals)
      for (double v : x.values) feed_double(v);
  }
  return h;
}

namespace detail {

inline std::string encode_path(const LatentPath& z) {
  std::string s(z.size(), '1');
  for (std::size_t t = 0; t < z.size(); ++t) s[t] = static_cast<char>('1' + index(z[t]));
  return s;
}

inline LatentPath decode_path(const std::string& s) {
  LatentPath z(s.size());
  for (std::size_t t = 0; t < s.size(); ++t) {
    if (s[t] < '1' || s[t] > '3') throw InputError("checkpoint: invalid latent state code");
    z[t] = transient_from_index(static_cast<std::size_t>(s[t] - '1'));
  }
  return z;
}

inline Json counter_to_json(const AcceptanceCounter& c) {
  return Json{{"proposed", c.proposed}, {"accepted", c.accepted}};
}

inline AcceptanceCounter counter_from_json(const Json& j) {
  AcceptanceCounter c;
  c.proposed = j.at("proposed").get<std::array<std::uint64_t, 3>>();
  c.accepted = j.at("accepted").get<std::array<std::uint64_t, 3>>();
  return c;
}

}  // namespace detail

inline Json checkpoint_to_json(const ChainState& state, const PosteriorChain& chain,
                               std::span<const PatientEpisode> cohort) {
  Json j;
  j["format"] = "sepsis-hmm-checkpoint";
  j["schema_version"] = kCheckpointSchemaVersion;
  j["cohort_fingerprint"] = cohort_fingerprint(cohort);
  j["config"] = config_to_json(chain.config);
  Json s;
  s["sweep"] = state.sweep;
  s["params"] = flatten(state.params);
  Json latents = Json::array();
  for (const auto& z : state.latents) latents.push_back(detail::encode_path(z));
  s["latents"] = latents;
  s["beta_step"] = state.beta_step;
  s["lambda_step"] = state.lambda_step;
  s["beta_window"] = detail::counter_to_json(state.beta_window);
  s["lambda_window"] = detail::counter_to_json(state.lambda_window);
  s["beta_total"] = detail::counter_to_json(state.beta_total);
  s["lambda_total"] = detail::counter_to_json(state.lambda_total);
  j["state"] = s;
  Json samples = Json::array();
  for (const auto& cs : chain.samples) {
    Json row;
    row["sweep"] = cs.sweep;
    row["params"] = flatten(cs.params);
    if (cs.latents) {
      Json lat = Json::array();
      for (const auto& z : *cs.latents) lat.push_back(detail::encode_path(z));
      row["latents"] = lat;
    }
    samples.push_back(row);
  }
  j["samples"] = samples;
  return j;
}

struct Checkpoint {
  SamplerConfig config;
  ChainState state;
  PosteriorChain chain;
};

inline Checkpoint checkpoint_from_json(const Json& j, std::span<const PatientEpisode> cohort) {
  if (j.value("format", "") != "sepsis-hmm-checkpoint")
    throw InputError("checkpoint: not a checkpoint file");
  if (j.value("schema_version", 0) != kCheckpointSchemaVersion)
    throw InputError("checkpoint: unsupported schema_version");
  if (j.at("cohort_fingerprint").get<std::uint64_t>() != cohort_fingerprint(cohort))
    throw InputError("checkpoint: episode file differs from the one the checkpoint was made with");
  Checkpoint cp;
  try {
    cp.config = config_from_json(j.at("config"));
    const Json& s = j.at("state");
    cp.state.sweep = s.at("sweep").get<std::size_t>();
    cp.state.params = unflatten(s.at("params").get<std::array<double, kNumScalarParams>>());
    for (const auto& z : s.at("latents")) cp.state.latents.push_back(detail::decode_path(z.get<std::string>()));
    cp.state.beta_step = s.at("beta_step").get<std::array<double, kNumCovariates>>();
    cp.state.lambda_step = s.at("lambda_step").get<std::array<double, kNumTransient>>();
    cp.state.beta_window = detail::counter_from_json(s.at("beta_window"));
    cp.state.lambda_window = detail::counter_from_json(s.at("lambda_window"));
    cp.state.beta_total = detail::counter_from_json(s.at("beta_total"));
    cp.state.lambda_total = detail::counter_from_json(s.at("lambda_total"));
    cp.chain.config = cp.config;
    cp.chain.seed = cp.config.seed;
    for (const auto& row : j.at("samples")) {
      ChainSample cs;
      cs.sweep = row.at("sweep").get<std::size_t>();
      cs.params = unflatten(row.at("params").get<std::array<double, kNumScalarParams>>());
      if (row.contains("latents")) {
        LatentAssignments lat;
        for (const auto& z : row.at("latents")) lat.push_back(detail::decode_path(z.get<std::string>()));
        cs.latents = std::move(lat);
      }
      cp.chain.samples.push_back(std::move(cs));
    }
  } catch (const Json::exception& e) {
    throw InputError(std::string("checkpoint: malformed content: ") + e.what());
  }
  return cp;
}

inline void write_checkpoint(const std::string& path, const ChainState& state,
                             const PosteriorChain& chain, std::span<const PatientEpisode> cohort) {
  // Write-then-rename so an interrupted write never clobbers the previous checkpoint.
  const std::string tmp = path + ".tmp";
  with_output_file(tmp, [&](std::ostream& out) { out << checkpoint_to_json(state, chain, cohort).dump() << '\n'; });
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw InputError("cannot move checkpoint into place at '" + path + "'");
}

inline Checkpoint read_checkpoint(const std::string& path, std::span<const PatientEpisode> cohort) {
  return with_input_file(path, [&](std::istream& in) {
    return checkpoint_from_json(parse_json(in, "checkpoint"), cohort);
  });
}

// ---------------------------------------------------------------------------
// Discrimination report (JSON)

inline Json report_to_json(const DiscriminationReport& rep, bool timestamp) {
  Json j;
  j["format"] = "sepsis-hmm-report";
  if (timestamp) j["created"] = iso8601_utc_now();
  j["n_bins"] = rep.n_bins;
  j["jsd_log_base"] = "e";
  j["n_excluded_censored"] = rep.n_excluded_censored;
  Json jsd = Json::object();
  for (const auto& m : rep.metrics) jsd[std::string(name(m.kind))] = m.jsd;
  j["jsd"] = jsd;
  Json metrics = Json::object();
  for (const auto& m : rep.metrics) {
    Json mj;
    mj["n_discharged"] = m.histograms.n_discharged;
    mj["n_died"] = m.histograms.n_died;
    mj["edges"] = m.histograms.edges;
    mj["density_discharged"] = m.histograms.discharged;
    mj["density_died"] = m.histograms.died;
    Json fr = Json::array();
    for (const auto& f : m.fractions)
      fr.push_back(Json{{"episode_id", f.episode_id}, {"value", f.value}, {"outcome", name(f.outcome)}});
    mj["fractions"] = fr;
    metrics[std::string(name(m.kind))] = mj;
  }
  j["metrics"] = metrics;
  Json overlaps = Json::object();
  for (const auto& ov : rep.overlaps) {
    overlaps["s3_vs_" + std::string(name(ov.criterion))] =
        Json{{"mean_jaccard", ov.mean.jaccard},
             {"mean_s3_covered", ov.mean.covered_a_by_b},
             {"mean_criterion_covered", ov.mean.covered_b_by_a}};
  }
  j["overlap"] = overlaps;
  Json sev;
  for (std::size_t k = 0; k < kNumTransient; ++k) {
    Json row;
    row["intervals"] = rep.severity.intervals[k];
    row["sepsis1_rate"] = rep.severity.sepsis1[k] ? Json(*rep.severity.sepsis1[k]) : Json(nullptr);
    row["qsofa_rate"] = rep.severity.qsofa[k] ? Json(*rep.severity.qsofa[k]) : Json(nullptr);
    sev[std::string(kTransientNames[k])] = row;
  }
  j["criteria_rate_by_state"] = sev;
  return j;
}

}  // namespace sepsis_hmm::io
