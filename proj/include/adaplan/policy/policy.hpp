#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "adaplan/diffusion/planner.hpp"
#include "adaplan/ensemble/ensemble.hpp"
#include "adaplan/env/env.hpp"
#include "adaplan/rng.hpp"

namespace adaplan::policy {

enum class PolicyMode { adaptive, always_replan, static_plan };

std::string to_string(PolicyMode m);
/// Accepts "adaptive", "always_replan", "static".
PolicyMode mode_from_string(const std::string& name);

struct PolicyConfig {
  PolicyMode mode = PolicyMode::adaptive;
  /// Replanning threshold; only read in adaptive mode. May be +infinity.
  double delta = std::numeric_limits<double>::infinity();
  /// Expected plan horizon and diffusion steps; 0 accepts whatever the model has.
  int horizon = 0;
  int K = 0;
  /// Episode cap; 0 keeps the environment's max_steps.
  int max_steps = 0;
};

struct EpisodeTrace {
  // Per executed step. states[i] is the observation the action was taken from.
  std::vector<std::vector<double>> states;
  std::vector<std::vector<double>> actions;
  std::vector<double> rewards;
  std::vector<double> u;  // NaN where no uncertainty was computed for that action
  std::vector<bool> replanned;

  /// Executed actions per sampled plan, in order.
  std::vector<int> plan_lengths;
  /// Largest |plan.states[0] - observation| over all plans (0 when pinning is exact).
  double max_pin_error = 0.0;

  int steps = 0;
  int plans = 0;
  std::int64_t nfe_total = 0;
  double episode_return = 0.0;
  env::DoneReason done_reason = env::DoneReason::none;

  double seconds_total = 0.0;
  double seconds_diffusion = 0.0;
  double seconds_ensemble = 0.0;

  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;

  /// Equality of everything except wall-clock fields, bitwise on reals
  /// (NaN entries of u compare equal to NaN).
  bool same_behaviour(const EpisodeTrace& other) const;
};

/// Receding-horizon control with a diffusion planner and an action ensemble.
///
/// adaptive: sample a plan from the observation, predict (a, u) from
/// (s_t, plan[1]) and execute. Then, while fewer than H - 1 actions of this
/// plan have run: write the new observation into the plan slot just reached,
/// predict (a, u) from (observation, next planned state), and execute only if
/// u < delta; otherwise drop that action and replan. always_replan is
/// adaptive with delta = 0. static_plan computes all H - 1 actions from
/// consecutive predicted states and executes them open loop.
///
/// The reset draws from rng.split(0) and plan sampling from rng.split(1), so
/// runs that share `rng` start from the same state.
/// Throws ConfigError on model/env dimension mismatch; SamplingDiverged propagates.
EpisodeTrace run_episode(const env::EnvSpec& spec, const diffusion::DiffusionModel& diffusion,
                         const ensemble::Ensemble& ensemble, const PolicyConfig& cfg, RngStream& rng);

/// 1 - plans / steps; 0 for an empty trace.
double saved_nfe_fraction(const EpisodeTrace& trace);

/// One JSON object per executed step, then a summary object with a "summary" key.
void write_trace_jsonl(std::ostream& out, const EpisodeTrace& trace);

}  // namespace adaplan::policy
