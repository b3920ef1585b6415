#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adaplan/bench/config.hpp"
#include "adaplan/data/dataset.hpp"
#include "adaplan/diffusion/planner.hpp"
#include "adaplan/ensemble/ensemble.hpp"
#include "adaplan/policy/policy.hpp"

namespace adaplan::bench {

// Stream ids under the master seed. Episode i of an evaluation uses seed
// master + i on kEpisodeStream, so every mode and delta sees the same starts.
inline constexpr std::uint64_t kDataStream = 1;
inline constexpr std::uint64_t kDiffusionStream = 2;
inline constexpr std::uint64_t kEnsembleStream = 3;
inline constexpr std::uint64_t kEpisodeStream = 100;
inline constexpr std::uint64_t kReferenceStream = 200;
inline constexpr int kReferenceEpisodes = 200;

struct ReferenceReturns {
  double random = 0.0;
  double expert = 0.0;
};

/// Mean returns of the uniform-random policy and the expert controller over
/// 200 seeded episodes. Cached per process for each distinct EnvSpec.
ReferenceReturns reference_returns(const env::EnvSpec& spec);

/// 100 (R - R_random) / (R_expert - R_random). Throws ConfigError unless R_expert > R_random.
double normalized_return(double R, double R_random, double R_expert);

struct MetricsRow {
  std::string env;
  std::string tier;
  std::string mode;
  double delta = 0.0;  // NaN when the mode has no threshold (static)
  int M = 0;
  std::string loss;
  int seeds = 0;
  double return_mean = 0.0;
  double return_std = 0.0;  // population std over seeds
  double saved_nfe = 0.0;
  double plans_mean = 0.0;
  double secs_per_100_steps = 0.0;  // NaN unless timing was requested
};

struct Models {
  diffusion::DiffusionModel diffusion;
  ensemble::Ensemble ensemble;
};

/// Pipeline stages. Each reads its inputs from and writes its outputs to the
/// paths named in cfg, and returns what it wrote.
data::OfflineDataset gen_data(const RunConfig& cfg);
diffusion::DiffusionModel train_diffusion_stage(const RunConfig& cfg);
ensemble::Ensemble train_ensemble_stage(const RunConfig& cfg);

/// Loads both checkpoints named in cfg (FileError/FormatError propagate) and
/// applies the configured uncertainty reduction to the ensemble.
Models load_models(const RunConfig& cfg);

/// Worker count for episode batches: ADAPLAN_THREADS if set (>= 1), else the
/// hardware concurrency.
int episode_threads();

/// Runs episodes with seeds cfg.seed .. cfg.seed + n - 1 under `pcfg`.
/// Results are in seed order regardless of thread count.
std::vector<policy::EpisodeTrace> run_seeds(const RunConfig& cfg, const Models& models,
                                            const policy::PolicyConfig& pcfg, int n_seeds, int threads);

/// Aggregates traces into one row. Timing is filled only when `timed`.
MetricsRow summarize(const RunConfig& cfg, const Models& models, const policy::PolicyConfig& pcfg,
                     const std::vector<policy::EpisodeTrace>& traces, bool timed);

/// cfg.policy over n_seeds episodes.
MetricsRow evaluate(const RunConfig& cfg, const Models& models, int n_seeds);

/// One adaptive row per delta on shared seeds. Throws ConfigError for an empty list.
std::vector<MetricsRow> sweep_delta(const RunConfig& cfg, const Models& models, const std::vector<double>& deltas);

/// Rows for prefixes of the ensemble pool. M = 1 runs always_replan. Throws
/// ConfigError when an entry exceeds the pool size or the list is empty.
std::vector<MetricsRow> ablate_members(const RunConfig& cfg, const Models& models, const std::vector<int>& m_list);

struct TimingReport {
  int steps = 0;
  int repetitions = 0;
  double delta = 0.0;
  // Medians over repetitions of wall-clock seconds for `steps` control steps.
  double always_replan_seconds = 0.0;
  double adaptive_seconds = 0.0;
  double ratio = 0.0;
  // Plans sampled in the window (median repetition).
  int always_replan_plans = 0;
  int adaptive_plans = 0;
  std::vector<double> always_replan_samples;
  std::vector<double> adaptive_samples;
};

/// Times cfg.eval.bench_steps control steps under always_replan and under
/// adaptive with cfg.policy.delta. One warmup window is run first and
/// discarded; each repetition r uses episodes seeded from cfg.seed + 1000 r.
TimingReport bench_time(const RunConfig& cfg, const Models& models);

}  // namespace adaplan::bench
