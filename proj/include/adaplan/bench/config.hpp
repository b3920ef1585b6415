#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adaplan/data/dataset.hpp"
#include "adaplan/diffusion/planner.hpp"
#include "adaplan/ensemble/ensemble.hpp"
#include "adaplan/env/env.hpp"
#include "adaplan/policy/policy.hpp"

namespace adaplan::bench {

struct DatasetSection {
  data::DatasetTier tier = data::DatasetTier::medium_expert;
  int episodes = 200;
  std::filesystem::path path = "artifacts/dataset.adpd";
  data::TierRecipe recipe;
};

struct DiffusionSection {
  int horizon = 32;
  int K = 50;
  diffusion::ScheduleKind schedule = diffusion::ScheduleKind::cosine;
  diffusion::DiffusionTrainConfig train;
  std::filesystem::path checkpoint = "artifacts/diffusion.adpl";
};

struct EnsembleSection {
  int members = 5;
  ensemble::ActionLoss loss = ensemble::ActionLoss::nll;
  ensemble::Reduction reduction = ensemble::Reduction::mean;
  ensemble::MemberTrainConfig train;
  std::filesystem::path checkpoint = "artifacts/ensemble.adpl";
};

struct EvalSection {
  int seeds = 50;
  /// CSV written by eval, sweep-delta and ablate-members.
  std::filesystem::path output = "artifacts/eval.csv";
  /// Plot-data JSON written by sweep-delta.
  std::filesystem::path plot = "artifacts/plot.json";
  /// Timing report written by bench-time.
  std::filesystem::path bench_output = "artifacts/bench_time.json";
  /// When set, eval writes one JSONL trace per seed into this directory.
  std::optional<std::filesystem::path> traces;
  std::vector<double> deltas{0.0, 0.03, 0.1, 0.3, 1.0};
  std::vector<int> members{1, 2, 3, 4, 5};
  /// Fill secs_per_100_steps from wall clock. Off by default so reports are
  /// byte-reproducible; timed evaluations run single-threaded.
  bool timing = false;
  int bench_steps = 100;
  int bench_repetitions = 5;
};

struct RunConfig {
  std::uint64_t seed = 0;
  env::EnvSpec env = env::EnvSpec::double_integrator_2d();
  DatasetSection dataset;
  DiffusionSection diffusion;
  EnsembleSection ensemble;
  policy::PolicyConfig policy;
  EvalSection eval;
};

/// Parses TOML text with sections [env] [dataset] [diffusion] [ensemble]
/// [policy] [eval] and a top-level `seed`. Overrides have the form
/// "section.key=value" (value in TOML syntax; a bare word is taken as a
/// string). Throws ConfigError for syntax errors, unknown sections or keys,
/// wrongly typed or out-of-range values.
RunConfig parse_config(std::string_view toml_text, const std::vector<std::string>& overrides = {},
                       std::optional<std::uint64_t> seed = std::nullopt);

/// Reads and parses a config file. A missing or unreadable file is a ConfigError naming the path.
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {},
                      std::optional<std::uint64_t> seed = std::nullopt);

enum class Stage { gen_data, train_diffusion, train_ensemble, evaluate };

/// Checks that every file the stage reads exists. Throws ConfigError naming the first missing one.
void require_inputs(const RunConfig& cfg, Stage stage);

}  // namespace adaplan::bench
