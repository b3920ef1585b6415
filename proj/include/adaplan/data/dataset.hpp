#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "adaplan/env/env.hpp"
#include "adaplan/rng.hpp"

namespace adaplan::data {

enum class DatasetTier { medium, medium_replay, medium_expert };

std::string to_string(DatasetTier t);
/// Throws ConfigError for an unknown tier name.
DatasetTier tier_from_string(const std::string& name);

/// One episode. states has L rows, actions and rewards L - 1 rows.
struct TrajectoryRecord {
  Eigen::MatrixXd states;   // L x state_dim
  Eigen::MatrixXd actions;  // (L-1) x action_dim
  Eigen::VectorXd rewards;  // L-1
  env::DoneReason done_reason = env::DoneReason::none;

  Eigen::Index length() const { return states.rows(); }
  double episode_return() const { return rewards.sum(); }
  bool operator==(const TrajectoryRecord& other) const;
};

/// Per-dimension min/max of states and actions.
struct NormStats {
  Eigen::VectorXd state_min, state_max;
  Eigen::VectorXd action_min, action_max;

  bool operator==(const NormStats& other) const;

  /// min = -1, max = 1 in every dimension: normalize is the identity.
  static NormStats identity(int state_dim, int action_dim);
};

struct OfflineDataset {
  std::string env_name;
  DatasetTier tier = DatasetTier::medium;
  int state_dim = 0;
  int action_dim = 0;
  std::uint64_t seed = 0;
  std::vector<TrajectoryRecord> records;
  NormStats norm;
  std::int64_t total_steps = 0;

  bool operator==(const OfflineDataset& other) const;
};

/// Behaviour recipes for the three tiers.
struct TierRecipe {
  env::MediumParams medium{};
  double replay_noise_start = 0.6;
  double replay_noise_end = 0.3;
  double replay_gain_start = 0.2;
  double replay_gain_end = 0.4;
};

/// Rolls out n_episodes with the tier's scripted controllers. Episode i uses
/// rng.split(i). Stored states, actions and rewards are rounded to 32-bit
/// floats (the on-disk precision); the initial state and the applied actions
/// are rounded before simulation so stored actions replay the stored states.
///   medium:        every episode from the medium controller;
///   medium_replay: noise annealed replay_noise_start -> end and gain
///                  replay_gain_start -> end linearly over episodes;
///   medium_expert: first half medium, second half expert.
OfflineDataset generate_dataset(const env::EnvSpec& spec, DatasetTier tier, int n_episodes, RngStream& rng,
                                const TierRecipe& recipe = {});

/// Min/max over every record. Throws Error for an empty dataset.
NormStats fit_norm(const std::vector<TrajectoryRecord>& records);
NormStats fit_norm(const OfflineDataset& dataset);

/// Maps [min, max] to [-1, 1] per dimension; constant dimensions map to 0.
Eigen::VectorXd normalize(std::span<const double> x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);
Eigen::VectorXd denormalize(std::span<const double> x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);

Eigen::VectorXd normalize_state(std::span<const double> s, const NormStats& n);
Eigen::VectorXd denormalize_state(std::span<const double> s, const NormStats& n);
Eigen::VectorXd normalize_action(std::span<const double> a, const NormStats& n);
Eigen::VectorXd denormalize_action(std::span<const double> a, const NormStats& n);

/// H consecutive normalized states from one record.
struct SequenceWindow {
  Eigen::MatrixXd states;  // H x state_dim
  std::size_t record = 0;
  Eigen::Index offset = 0;
  bool padded = false;
};

/// Records with L >= H give L - H + 1 windows; shorter records give one
/// window padded by repeating the final state. Throws ConfigError for H < 2.
std::vector<SequenceWindow> extract_windows(const OfflineDataset& dataset, int horizon);

/// Action-model training pairs, columns are samples:
/// inputs (normalize(s_t), normalize(s_t+1)), targets normalize(a_t).
struct TransitionPairs {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;
};

TransitionPairs transition_pairs(const OfflineDataset& dataset);

inline constexpr char kDatasetMagic[4] = {'A', 'D', 'P', 'D'};
inline constexpr std::uint16_t kDatasetVersion = 1;

// Layout:
//   "ADPD" | u16 version | u32 header length | UTF-8 JSON header |
//   per record: u32 L | f32 states (L x state_dim, row-major) |
//               f32 actions ((L-1) x action_dim) | f32 rewards (L-1) | u8 done_reason
void save_dataset(const std::filesystem::path& path, const OfflineDataset& dataset);

/// Throws FileError when the file cannot be read, FormatError on bad magic,
/// version, header or truncation.
OfflineDataset load_dataset(const std::filesystem::path& path);

/// Replays stored actions from each record's first state and checks the
/// float-rounded result against the stored states bitwise.
bool replay_matches(const env::EnvSpec& spec, const OfflineDataset& dataset);

}  // namespace adaplan::data
