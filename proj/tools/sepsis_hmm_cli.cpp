// sepsis-hmm: simulate, fit, summarise, decode and analyse vital-sign
// trajectories with the five-state sepsis HMM.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "sepsis_hmm/sepsis_hmm.hpp"

namespace {

using namespace sepsis_hmm;
using io::Json;

enum ExitCode : int { kOk = 0, kUsage = 2, kInput = 3, kModel = 4, kInternal = 5 };

int report_error(std::string_view category, const std::string& message, int code) {
  Json j;
  j["error"] = category;
  j["message"] = message;
  std::cerr << j.dump() << '\n';
  return code;
}

void warn(const std::string& message) {
  Json j;
  j["warning"] = message;
  std::cerr << j.dump() << '\n';
}

// Shared config file: {"sampler": {...}, "cohort": {...}, "decode": {...},
// "analyze": {...}}; every section and field optional.
struct ConfigFile {
  Json root = Json::object();

  static ConfigFile load(const std::string& explicit_path) {
    std::string path = explicit_path;
    if (path.empty())
      if (const char* env = std::getenv("SEPSIS_HMM_CONFIG")) path = env;
    ConfigFile cf;
    if (path.empty()) return cf;
    cf.root = io::with_input_file(path, [](std::istream& in) { return io::parse_json(in, "config"); });
    io::detail::reject_unknown(cf.root, {"sampler", "cohort", "decode", "analyze"}, "config");
    return cf;
  }

  const Json* section(const char* key) const {
    return root.contains(key) ? &root.at(key) : nullptr;
  }
};

void apply_decode_json(const Json& j, DecodeConfig& c) {
  io::detail::reject_unknown(j, {"n_sweeps", "n_keep", "seed", "use_outcome"}, "decode config");
  io::detail::maybe_get(j, "n_sweeps", c.n_sweeps);
  io::detail::maybe_get(j, "n_keep", c.n_keep);
  io::detail::maybe_get(j, "seed", c.seed);
  io::detail::maybe_get(j, "use_outcome", c.use_outcome);
}

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  bool no_timestamp = false;

  // simulate
  std::string params_in, episodes_out, states_out;
  std::optional<std::size_t> patients, max_intervals;

  // fit
  std::string episodes_in, posterior_out, checkpoint_path;
  std::optional<std::size_t> sweeps, keep, stop_after;
  std::size_t checkpoint_every = 0;
  bool resume = false, no_outcomes = false;

  // map-estimate
  std::string posterior_in, params_out;

  // decode
  std::string trajectories_out;
  bool use_outcome = false;

  // criteria
  std::string flags_out;

  // analyze
  std::string trajectories_in, report_out;
  std::optional<std::size_t> bins;

  // ingest
  std::string observations_in, meta_in, rejections_out, standardization_in;
};

int run_simulate(const Options& o) {
  const auto cf = ConfigFile::load(o.config_path);
  CohortSpec spec;
  if (const auto* s = cf.section("cohort")) io::apply_cohort_spec_json(*s, spec);
  if (o.seed) spec.seed = *o.seed;
  if (o.patients) spec.n_patients = *o.patients;
  if (o.max_intervals) spec.max_intervals = *o.max_intervals;
  const ModelParams mp = o.params_in.empty() ? default_ground_truth() : io::read_params(o.params_in);
  const auto sims = simulate_cohort(mp, spec, o.threads.value_or(1));
  io::write_episodes(o.episodes_out, episodes_of(sims));
  if (!o.states_out.empty()) {
    std::vector<io::LabelledPath> paths;
    for (const auto& s : sims) paths.push_back({s.episode.episode_id, s.true_states});
    io::with_output_file(o.states_out, [&](std::ostream& out) { io::write_states(out, paths); });
  }
  return kOk;
}

int run_fit(const Options& o) {
  const auto cohort = io::read_episodes(o.episodes_in);
  if (cohort.empty()) throw InputError(o.episodes_in + ": no episodes");
  if (o.stop_after && o.checkpoint_path.empty())
    throw CLI::ValidationError("--stop-after", "needs --checkpoint");
  if (o.resume && o.checkpoint_path.empty())
    throw CLI::ValidationError("--resume", "needs --checkpoint");

  std::optional<Sampler> sampler;
  if (o.resume) {
    auto cp = io::read_checkpoint(o.checkpoint_path, cohort);
    cp.config.threads = o.threads.value_or(cp.config.threads);
    sampler.emplace(cohort, cp.config, std::move(cp.state), std::move(cp.chain));
  } else {
    const auto cf = ConfigFile::load(o.config_path);
    SamplerConfig config;
    if (const auto* s = cf.section("sampler")) io::apply_config_json(*s, config);
    if (o.seed) config.seed = *o.seed;
    if (o.sweeps) config.n_sweeps = *o.sweeps;
    if (o.keep) config.n_keep = *o.keep;
    if (o.threads) config.threads = *o.threads;
    if (o.no_outcomes) config.use_outcomes = false;
    sampler.emplace(cohort, config);
  }

  RunHooks hooks;
  hooks.stop_after = o.stop_after;
  if (!o.checkpoint_path.empty() && o.checkpoint_every > 0) {
    hooks.checkpoint_every = o.checkpoint_every;
    hooks.on_checkpoint = [&](const ChainState& st, const PosteriorChain& ch) {
      io::write_checkpoint(o.checkpoint_path, st, ch, cohort);
    };
  }
  sampler->run(hooks);
  if (!sampler->finished()) {
    io::write_checkpoint(o.checkpoint_path, sampler->state(), sampler->chain(), cohort);
    std::cerr << "stopped after sweep " << sampler->state().sweep << "; resume with --resume\n";
    return kOk;
  }
  const PosteriorChain chain = sampler->take_chain();
  for (const auto& w : chain.warnings) warn(w);
  io::write_posterior(o.posterior_out, chain, !o.no_timestamp);
  if (!o.checkpoint_path.empty()) std::filesystem::remove(o.checkpoint_path);
  return kOk;
}

int run_map_estimate(const Options& o) {
  const auto chain = io::read_posterior(o.posterior_in);
  if (chain.samples.size() < kKdeMinSamples)
    throw InputError(o.posterior_in + ": need at least " + std::to_string(kKdeMinSamples) +
                     " samples, found " + std::to_string(chain.samples.size()));
  const ModelParams mp = map_params(chain);
  if (!severity_order_consistent(mp))
    warn("estimated heart-rate means are not increasing from S1 to S3; state labels may be permuted");
  io::write_params(o.params_out, mp);
  return kOk;
}

int run_decode(const Options& o) {
  const auto cohort = io::read_episodes(o.episodes_in);
  const ModelParams mp = io::read_params(o.params_in);
  const auto cf = ConfigFile::load(o.config_path);
  DecodeConfig config;
  if (const auto* s = cf.section("decode")) apply_decode_json(*s, config);
  if (o.seed) config.seed = *o.seed;
  if (o.sweeps) config.n_sweeps = *o.sweeps;
  if (o.keep) config.n_keep = *o.keep;
  if (o.use_outcome) config.use_outcome = true;
  const auto decoded = decode_cohort(cohort, mp, config, o.threads.value_or(1));
  std::vector<TrajectoryRecord> records;
  records.reserve(cohort.size());
  for (std::size_t i = 0; i < cohort.size(); ++i)
    records.push_back(trajectory_export(cohort[i], decoded[i], criteria_flags(cohort[i])));
  io::with_output_file(o.trajectories_out,
                       [&](std::ostream& out) { io::write_trajectories(out, records); });
  return kOk;
}

int run_criteria(const Options& o) {
  const auto cohort = io::read_episodes(o.episodes_in);
  std::vector<io::EpisodeFlags> flags;
  for (const auto& e : cohort) flags.push_back({e.episode_id, criteria_flags(e)});
  io::with_output_file(o.flags_out, [&](std::ostream& out) { io::write_flags(out, flags); });
  return kOk;
}

int run_analyze(const Options& o) {
  const auto records = io::with_input_file(
      o.trajectories_in, [](std::istream& in) { return io::read_trajectories(in); });
  const auto cf = ConfigFile::load(o.config_path);
  std::size_t bins = kDefaultHistogramBins;
  if (const auto* s = cf.section("analyze")) {
    io::detail::reject_unknown(*s, {"n_bins"}, "analyze config");
    io::detail::maybe_get(*s, "n_bins", bins);
  }
  if (o.bins) bins = *o.bins;
  const auto rep = analyze_trajectories(records, bins);
  const auto j = io::report_to_json(rep, !o.no_timestamp);
  io::with_output_file(o.report_out, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
  for (const auto& m : rep.metrics)
    std::cout << "jsd_" << name(m.kind) << ' ' << io::format_double(m.jsd) << '\n';
  return kOk;
}

int run_ingest(const Options& o) {
  const auto obs = io::with_input_file(o.observations_in,
                                       [](std::istream& in) { return io::read_observations(in); });
  const auto meta = io::with_input_file(o.meta_in,
                                        [](std::istream& in) { return io::read_episode_meta(in); });
  if (!o.standardization_in.empty()) {
    io::with_input_file(o.standardization_in, [](std::istream& in) {
      return io::standardization_from_json(io::parse_json(in, "standardization"));
    });
  }
  const auto result = io::ingest(obs, meta);
  io::write_episodes(o.episodes_out, result.episodes);
  if (!o.rejections_out.empty())
    io::with_output_file(o.rejections_out,
                         [&](std::ostream& out) { io::write_rejections(out, result.rejections); });
  if (!result.rejections.empty())
    warn(std::to_string(result.rejections.size()) + " episode(s) rejected during binning");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Five-state sepsis hidden Markov model toolkit"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path,
                    "JSON config file (default: $SEPSIS_HMM_CONFIG if set)")
        ->check(CLI::ExistingFile);
  };
  auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", o.seed, "Random seed"); };
  auto add_threads = [&](CLI::App* sub) {
    sub->add_option("--threads", o.threads, "Worker threads (results do not depend on this)")
        ->check(CLI::PositiveNumber);
  };

  auto* sim = app.add_subcommand("simulate", "Simulate a cohort from model parameters");
  add_common(sim);
  add_seed(sim);
  add_threads(sim);
  sim->add_option("--params", o.params_in, "Parameter file (default: built-in ground truth)")
      ->check(CLI::ExistingFile);
  sim->add_option("--out", o.episodes_out, "Episode file to write")->required();
  sim->add_option("--states", o.states_out, "True latent state file to write");
  sim->add_option("--patients", o.patients, "Number of episodes")->check(CLI::PositiveNumber);
  sim->add_option("--max-intervals", o.max_intervals, "Horizon in six-hour intervals");

  auto* fit = app.add_subcommand("fit", "Run the MH-within-Gibbs sampler on an episode file");
  add_common(fit);
  add_seed(fit);
  add_threads(fit);
  fit->add_option("--episodes", o.episodes_in, "Episode file")->required()->check(CLI::ExistingFile);
  fit->add_option("--out", o.posterior_out, "Posterior file to write")->required();
  fit->add_option("--sweeps", o.sweeps, "Total sweeps");
  fit->add_option("--keep", o.keep, "Sweeps kept from the end");
  fit->add_flag("--no-outcomes", o.no_outcomes, "Ignore observed discharge/death outcomes");
  fit->add_option("--checkpoint", o.checkpoint_path, "Checkpoint file");
  fit->add_option("--checkpoint-every", o.checkpoint_every, "Write a checkpoint every N sweeps");
  fit->add_flag("--resume", o.resume, "Continue from --checkpoint");
  fit->add_option("--stop-after", o.stop_after, "Stop after N sweeps and write --checkpoint");
  fit->add_flag("--no-timestamp", o.no_timestamp, "Omit the creation time from the header");

  auto* map = app.add_subcommand("map-estimate", "Marginal MAP parameters from a posterior file");
  map->add_option("--posterior", o.posterior_in, "Posterior file")->required()->check(CLI::ExistingFile);
  map->add_option("--out", o.params_out, "Parameter file to write")->required();

  auto* dec = app.add_subcommand("decode", "Decode latent trajectories with fixed parameters");
  add_common(dec);
  add_seed(dec);
  add_threads(dec);
  dec->add_option("--episodes", o.episodes_in, "Episode file")->required()->check(CLI::ExistingFile);
  dec->add_option("--params", o.params_in, "Parameter file")->required()->check(CLI::ExistingFile);
  dec->add_option("--out", o.trajectories_out, "Trajectory file to write")->required();
  dec->add_option("--sweeps", o.sweeps, "Gibbs sweeps per episode");
  dec->add_option("--keep", o.keep, "Sweeps tallied from the end");
  dec->add_flag("--use-outcome", o.use_outcome, "Condition on the recorded outcome");

  auto* crit = app.add_subcommand("criteria", "Per-interval SIRS/sepsis-1 and qSOFA flags");
  crit->add_option("--episodes", o.episodes_in, "Episode file")->required()->check(CLI::ExistingFile);
  crit->add_option("--out", o.flags_out, "Flags file to write")->required();

  auto* ana = app.add_subcommand("analyze", "Outcome discrimination and overlap report");
  add_common(ana);
  ana->add_option("--trajectories", o.trajectories_in, "Trajectory file from decode")
      ->required()
      ->check(CLI::ExistingFile);
  ana->add_option("--out", o.report_out, "Report file (JSON)")->required();
  ana->add_option("--bins", o.bins, "Histogram bins on [0, 1]")->check(CLI::PositiveNumber);
  ana->add_flag("--no-timestamp", o.no_timestamp, "Omit the creation time from the report");

  auto* ing = app.add_subcommand("ingest", "Bin raw timestamped vitals into six-hour intervals");
  ing->add_option("--observations", o.observations_in, "episode_id,minute,vital,value file")
      ->required()
      ->check(CLI::ExistingFile);
  ing->add_option("--meta", o.meta_in, "episode_id,age_z,laps2_z,cops2_z,outcome file")
      ->required()
      ->check(CLI::ExistingFile);
  ing->add_option("--out", o.episodes_out, "Episode file to write")->required();
  ing->add_option("--rejections", o.rejections_out, "Rejected episodes with reasons");
  ing->add_option("--standardization", o.standardization_in, "Covariate standardization sidecar")
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), kUsage);
  }

  try {
    if (*sim) return run_simulate(o);
    if (*fit) return run_fit(o);
    if (*map) return run_map_estimate(o);
    if (*dec) return run_decode(o);
    if (*crit) return run_criteria(o);
    if (*ana) return run_analyze(o);
    if (*ing) return run_ingest(o);
  } catch (const CLI::Error& e) {
    return report_error("usage", e.what(), kUsage);
  } catch (const InputError& e) {
    return report_error("input", e.what(), kInput);
  } catch (const InfeasiblePatient& e) {
    return report_error("infeasible", e.what(), kModel);
  } catch (const InfeasibleParameters& e) {
    return report_error("infeasible", e.what(), kModel);
  } catch (const ValidationError& e) {
    return report_error("validation", e.what(), kModel);
  } catch (const DomainError& e) {
    return report_error("domain", e.what(), kModel);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), kInternal);
  }
  return kInternal;
}
