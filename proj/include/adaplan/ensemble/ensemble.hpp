#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "adaplan/data/dataset.hpp"
#include "adaplan/nn/mlp.hpp"
#include "adaplan/rng.hpp"

namespace adaplan::ensemble {

enum class ActionLoss { nll, mse };

std::string to_string(ActionLoss k);
ActionLoss action_loss_from_string(const std::string& name);

/// How the per-dimension uncertainty vector is reduced to the scalar u.
enum class Reduction { mean, max };

std::string to_string(Reduction r);
Reduction reduction_from_string(const std::string& name);

/// Inverse-dynamics model f(s_t, s_t+1) = a_t on normalized inputs.
/// Output layout: [mu (action_dim)] for mse, [mu, raw variance] for nll.
struct ActionModel {
  nn::MlpParams params;
  ActionLoss loss_kind = ActionLoss::mse;
  int state_dim = 0;
  int action_dim = 0;
};

struct Ensemble {
  std::vector<ActionModel> members;
  data::NormStats norm;
  Reduction reduction = Reduction::mean;

  std::size_t size() const { return members.size(); }
  ActionLoss loss_kind() const { return members.front().loss_kind; }
  int state_dim() const { return members.front().state_dim; }
  int action_dim() const { return members.front().action_dim; }

  /// First m members. Throws ConfigError if m is 0 or exceeds the pool.
  Ensemble prefix(std::size_t m) const;
};

struct MemberTrainConfig {
  int steps = 1000;
  int batch_size = 128;
  double learning_rate = 1e-3;
  std::vector<int> hidden{512, 512};
};

/// Trains one member on (normalized input, normalized target) columns.
/// Initialisation draws from rng.split(0), minibatch shuffling from rng.split(1).
/// Throws Error for an empty pair set.
ActionModel train_member(const data::TransitionPairs& pairs, ActionLoss loss_kind, int state_dim,
                         const MemberTrainConfig& cfg, RngStream& rng);

/// Member m trains with rng.split(m) on every transition in the dataset.
Ensemble train_ensemble(const data::OfflineDataset& dataset, ActionLoss loss_kind, int members,
                        const MemberTrainConfig& cfg, RngStream& rng);

/// Per-member predictions for one input, in normalized action units.
/// Columns are members; var is empty for mse ensembles.
struct MemberOutputs {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd var;
};

struct ActionPrediction {
  std::vector<double> action;               // denormalized ensemble mean
  std::vector<double> per_dim_uncertainty;  // normalized action units^2
  double u = 0.0;
};

/// Evaluates every member on x = (normalize(s), normalize(s_next)).
MemberOutputs member_outputs(const Ensemble& ens, std::span<const double> s, std::span<const double> s_next);

/// Per-dimension total uncertainty: mean member variance + population variance
/// of member means (nll), or population variance of member outputs (mse).
/// Sums run over sorted values so the result does not depend on member order.
Eigen::VectorXd total_uncertainty(const MemberOutputs& out);

/// (1/M) sum (var_m + mu_m^2) - ((1/M) sum mu_m)^2 per dimension.
Eigen::VectorXd mixture_second_moment(const MemberOutputs& out);

/// Aggregated prediction in normalized units (action not denormalized).
ActionPrediction aggregate(const MemberOutputs& out, Reduction reduction);

/// Throws ShapeError when s or s_next do not match the state dimension.
ActionPrediction predict(const Ensemble& ens, std::span<const double> s, std::span<const double> s_next);

void save_ensemble(const std::filesystem::path& path, const Ensemble& ens, std::uint64_t seed = 0);
/// Parameters come back at 32-bit precision.
Ensemble load_ensemble(const std::filesystem::path& path);

}  // namespace adaplan::ensemble
