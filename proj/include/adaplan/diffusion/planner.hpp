#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "adaplan/data/dataset.hpp"
#include "adaplan/diffusion/schedule.hpp"
#include "adaplan/nn/mlp.hpp"
#include "adaplan/rng.hpp"

namespace adaplan::diffusion {

struct DiffusionTrainConfig {
  int steps = 2000;
  int batch_size = 64;
  double learning_rate = 1e-3;
  std::vector<int> hidden{512, 512, 512};
  nn::Activation activation = nn::Activation::mish;
  int time_embed_dim = 32;
  /// Exponential moving average of the denoiser weights, updated after every
  /// step; the average is what the model keeps and what held-out loss scores.
  /// 0 keeps the raw weights.
  double ema_decay = 0.995;
  /// Copied into the trained model; see DiffusionModel::clip_denoised.
  bool clip_denoised = true;
  /// Apply the sampler's first-state inpainting to training inputs as well.
  bool condition_first = true;
  double heldout_fraction = 0.1;
  /// Held-out loss is evaluated every `eval_every` steps (and at 0 and the end).
  int eval_every = 250;
  /// Upper bound on held-out windows scored per evaluation.
  int eval_windows = 256;
};

struct LossCurve {
  std::vector<int> step;
  std::vector<double> train;    // mean training batch loss since the previous point
  std::vector<double> heldout;  // held-out epsilon-prediction loss
};

/// Trained denoiser over windows of H normalized states. The denoiser sees the
/// flattened window (row-major, state j then dimension) followed by a
/// sinusoidal embedding of k and predicts the noise for every entry.
struct DiffusionModel {
  nn::MlpParams denoiser;
  NoiseSchedule schedule;
  int horizon = 0;
  int state_dim = 0;
  data::NormStats norm;
  int time_embed_dim = 32;
  /// Clip the implied clean window x0 = (s^k - sqrt(1 - abar) eps) / sqrt(abar)
  /// to [-1, 1] and step with the posterior mean. While no entry is clipped
  /// this is the plain epsilon-form update.
  bool clip_denoised = true;
  /// Trained with the first state of every noised window kept clean (and a
  /// zero noise target there), matching what sample_plan feeds the denoiser.
  bool condition_first = true;
  std::uint64_t seed = 0;
  LossCurve curve;

  int window_size() const { return horizon * state_dim; }
};

/// [sin(k w_0), .., sin(k w_{n-1}), cos(k w_0), .., cos(k w_{n-1})] with
/// w_i = 10000^(-i / n), n = dim / 2.
Eigen::VectorXd time_embedding(int k, int dim);

/// Trains epsilon prediction: k ~ U{1..K}, eps ~ N(0, I), minimise ||eps - eps_theta(s^k, k)||^2.
/// Windows are split 90/10 (heldout_fraction) into train and held-out sets.
/// Throws Error for an empty window set.
DiffusionModel train_diffusion(const std::vector<data::SequenceWindow>& windows, const data::NormStats& norm,
                               int horizon, int K, ScheduleKind schedule, const DiffusionTrainConfig& cfg,
                               RngStream& rng);

/// Extracts horizon-H windows from the dataset and trains on them.
DiffusionModel train_diffusion(const data::OfflineDataset& dataset, int horizon, int K, ScheduleKind schedule,
                               const DiffusionTrainConfig& cfg, RngStream& rng);

/// Mean epsilon-prediction loss over the given windows, one (k, eps) draw each.
double denoising_loss(const DiffusionModel& model, const std::vector<data::SequenceWindow>& windows,
                      RngStream& rng);

struct Plan {
  Eigen::MatrixXd states;  // H x state_dim, denormalized
  int nfe = 0;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
};

/// Ancestral DDPM sampling from s^K ~ N(0, I),
/// s^{k-1} = (s^k - (1 - alpha_k) / sqrt(1 - abar_k) eps) / sqrt(alpha_k) + sigma_k z,
/// or its clipped posterior-mean form when clip_denoised is set. After every denoising step the
/// first state is overwritten with normalize(s_t). Row 0 of the returned plan
/// is s_t itself. Throws ShapeError for a wrong-sized s_t, DomainError for a
/// non-finite one, SamplingDiverged when an intermediate value is non-finite.
Plan sample_plan(const DiffusionModel& model, std::span<const double> s_t, RngStream& rng);

/// Unconditional samples in normalized units; column j is one flattened window.
/// Throws SamplingDiverged on a non-finite intermediate.
Eigen::MatrixXd sample_unconditional(const DiffusionModel& model, int count, RngStream& rng, int* nfe = nullptr);

void save_diffusion(const std::filesystem::path& path, const DiffusionModel& model);
/// Parameters come back at 32-bit precision.
DiffusionModel load_diffusion(const std::filesystem::path& path);

}  // namespace adaplan::diffusion
