#include "adaplan/diffusion/planner.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "adaplan/errors.hpp"
#include "adaplan/nn/adam.hpp"
#include "adaplan/nn/checkpoint.hpp"
#include "adaplan/nn/losses.hpp"

namespace adaplan::diffusion {
namespace {

Eigen::MatrixXd embedding_table(int K, int dim) {
  Eigen::MatrixXd table(dim, K + 1);
  for (int k = 0; k <= K; ++k) table.col(k) = time_embedding(k, dim);
  return table;
}

Eigen::VectorXd flatten(const Eigen::MatrixXd& window) {
  Eigen::VectorXd v(window.size());
  Eigen::Index i = 0;
  for (Eigen::Index r = 0; r < window.rows(); ++r) {
    for (Eigen::Index c = 0; c < window.cols(); ++c) v[i++] = window(r, c);
  }
  return v;
}

// Fills `inputs`/`targets` columns for one batch of (window, k, eps) draws.
void noised_batch(const DiffusionModel& model, const Eigen::MatrixXd& table,
                  const std::vector<Eigen::VectorXd>& flat, std::span<const std::size_t> idx, RngStream& rng,
                  Eigen::MatrixXd& inputs, Eigen::MatrixXd& targets) {
  const int W = model.window_size();
  const auto n = static_cast<Eigen::Index>(idx.size());
  inputs.resize(W + model.time_embed_dim, n);
  targets.resize(W, n);
  for (Eigen::Index b = 0; b < n; ++b) {
    const int k = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(model.schedule.K)));
    Eigen::VectorXd eps(W);
    for (int i = 0; i < W; ++i) eps[i] = rng.normal();
    const Eigen::VectorXd& x0 = flat[idx[static_cast<std::size_t>(b)]];
    inputs.col(b).head(W) = q_sample(model.schedule, x0, k, eps);
    inputs.col(b).tail(model.time_embed_dim) = table.col(k);
    targets.col(b) = eps;
    if (model.condition_first) {
      inputs.col(b).head(model.state_dim) = x0.head(model.state_dim);
      targets.col(b).head(model.state_dim).setZero();
    }
  }
}

// Shared reverse loop. `x` columns are flattened windows in normalized units;
// `pin` (if non-null) is written into the first state of every column.
void reverse_process(const DiffusionModel& model, Eigen::MatrixXd& x, const Eigen::VectorXd* pin, RngStream& rng,
                     int& nfe) {
  const NoiseSchedule& s = model.schedule;
  const int W = model.window_size();
  const int sd = model.state_dim;
  const Eigen::MatrixXd table = embedding_table(s.K, model.time_embed_dim);
  auto apply_pin = [&] {
    if (pin != nullptr) {
      for (Eigen::Index c = 0; c < x.cols(); ++c) x.col(c).head(sd) = *pin;
    }
  };
  apply_pin();
  Eigen::MatrixXd input(W + model.time_embed_dim, x.cols());
  for (int k = s.K; k >= 1; --k) {
    input.topRows(W) = x;
    input.bottomRows(model.time_embed_dim) = table.col(k).replicate(1, x.cols());
    const Eigen::MatrixXd eps = nn::mlp_forward_batch(model.denoiser, input);
    ++nfe;
    if (model.clip_denoised) {
      const double ab = s.alpha_bar[k];
      const double ab_prev = s.alpha_bar[k - 1];
      const Eigen::MatrixXd x0 = ((x - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab)).cwiseMax(-1.0).cwiseMin(1.0);
      x = (std::sqrt(ab_prev) * (1.0 - s.alpha[k]) / (1.0 - ab)) * x0 +
          (std::sqrt(s.alpha[k]) * (1.0 - ab_prev) / (1.0 - ab)) * x;
    } else {
      const double coef = (1.0 - s.alpha[k]) / std::sqrt(1.0 - s.alpha_bar[k]);
      x = (x - coef * eps) / std::sqrt(s.alpha[k]);
    }
    if (k > 1) {
      for (Eigen::Index c = 0; c < x.cols(); ++c) {
        for (Eigen::Index i = 0; i < W; ++i) x(i, c) += s.sigma[k] * rng.normal();
      }
    }
    apply_pin();
    if (!x.allFinite()) throw SamplingDiverged(k);
  }
}

nlohmann::json norm_json(const data::NormStats& n) {
  auto v = [](const Eigen::VectorXd& x) { return std::vector<double>(x.data(), x.data() + x.size()); };
  return {{"state_min", v(n.state_min)},
          {"state_max", v(n.state_max)},
          {"action_min", v(n.action_min)},
          {"action_max", v(n.action_max)}};
}

}  // namespace

Eigen::VectorXd time_embedding(int k, int dim) {
  const int half = dim / 2;
  Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
    e[i] = std::sin(k * freq);
    e[half + i] = std::cos(k * freq);
  }
  return e;
}

DiffusionModel train_diffusion(const std::vector<data::SequenceWindow>& windows, const data::NormStats& norm,
                               int horizon, int K, ScheduleKind schedule, const DiffusionTrainConfig& cfg,
                               RngStream& rng) {
  if (windows.empty()) throw Error("cannot train diffusion model: no windows");
  if (horizon < 1) throw ConfigError("horizon must be positive");
  if (cfg.batch_size < 1 || cfg.steps < 0) throw ConfigError("invalid diffusion training config");
  const int sd = static_cast<int>(windows.front().states.cols());
  for (const auto& w : windows) {
    if (w.states.rows() != horizon || w.states.cols() != sd) throw ShapeError("window shape disagrees with horizon");
  }

  DiffusionModel model;
  model.schedule = build_schedule(K, schedule);
  model.horizon = horizon;
  model.state_dim = sd;
  model.norm = norm;
  model.time_embed_dim = cfg.time_embed_dim;
  model.clip_denoised = cfg.clip_denoised;
  model.condition_first = cfg.condition_first;
  model.seed = rng.seed();
  const int W = model.window_size();

  RngStream init_rng = rng.split(0);
  RngStream split_rng = rng.split(1);
  RngStream shuffle_rng = rng.split(2);
  RngStream noise_rng = rng.split(3);
  RngStream eval_rng_base = rng.split(4);

  std::vector<int> sizes{W + cfg.time_embed_dim};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(W);
  model.denoiser = nn::mlp_init(sizes, cfg.activation, init_rng);

  std::vector<Eigen::VectorXd> flat;
  flat.reserve(windows.size());
  for (const auto& w : windows) flat.push_back(flatten(w.states));

  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), split_rng.engine());
  auto n_heldout = static_cast<std::size_t>(std::floor(cfg.heldout_fraction * static_cast<double>(order.size())));
  if (order.size() < 2) n_heldout = 0;
  std::vector<std::size_t> heldout(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_heldout));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_heldout), order.end());
  if (heldout.size() > static_cast<std::size_t>(cfg.eval_windows)) heldout.resize(static_cast<std::size_t>(cfg.eval_windows));

  const Eigen::MatrixXd table = embedding_table(K, cfg.time_embed_dim);
  const nn::SampleLoss loss = nn::squared_error_loss();

  if (cfg.ema_decay < 0.0 || cfg.ema_decay >= 1.0) throw ConfigError("ema_decay must lie in [0, 1)");
  const bool use_ema = cfg.ema_decay > 0.0;
  nn::MlpParams ema = model.denoiser;
  auto scored = [&]() -> const nn::MlpParams& { return use_ema ? ema : model.denoiser; };

  auto heldout_loss = [&] {
    if (heldout.empty()) return std::nan("");
    RngStream eval_rng = eval_rng_base;  // same draws at every evaluation
    Eigen::MatrixXd in, tgt;
    noised_batch(model, table, flat, heldout, eval_rng, in, tgt);
    const Eigen::MatrixXd out = nn::mlp_forward_batch(scored(), in);
    return (out - tgt).colwise().squaredNorm().mean();
  };

  nn::AdamState adam = nn::AdamState::fresh(model.denoiser, {cfg.learning_rate, 0.9, 0.999, 1e-8});
  model.curve.step.push_back(0);
  model.curve.train.push_back(std::nan(""));
  model.curve.heldout.push_back(heldout_loss());

  std::vector<std::size_t> batch(static_cast<std::size_t>(cfg.batch_size));
  std::size_t cursor = train.size();
  double running = 0.0;
  int running_n = 0;
  Eigen::MatrixXd in, tgt;
  for (int step = 1; step <= cfg.steps; ++step) {
    for (std::size_t& b : batch) {
      if (cursor == train.size()) {
        std::shuffle(train.begin(), train.end(), shuffle_rng.engine());
        cursor = 0;
      }
      b = train[cursor++];
    }
    noised_batch(model, table, flat, batch, noise_rng, in, tgt);
    nn::GradResult g = nn::grad(model.denoiser, in, tgt, loss);
    nn::adam_step(adam, model.denoiser, g.grads);
    if (use_ema) {
      for (std::size_t l = 0; l < ema.weights.size(); ++l) {
        ema.weights[l] = cfg.ema_decay * ema.weights[l] + (1.0 - cfg.ema_decay) * model.denoiser.weights[l];
        ema.biases[l] = cfg.ema_decay * ema.biases[l] + (1.0 - cfg.ema_decay) * model.denoiser.biases[l];
      }
    }
    running += g.loss;
    ++running_n;
    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      model.curve.step.push_back(step);
      model.curve.train.push_back(running / running_n);
      model.curve.heldout.push_back(heldout_loss());
      running = 0.0;
      running_n = 0;
    }
  }
  if (use_ema) model.denoiser = std::move(ema);
  return model;
}

DiffusionModel train_diffusion(const data::OfflineDataset& dataset, int horizon, int K, ScheduleKind schedule,
                               const DiffusionTrainConfig& cfg, RngStream& rng) {
  return train_diffusion(data::extract_windows(dataset, horizon), dataset.norm, horizon, K, schedule, cfg, rng);
}

double denoising_loss(const DiffusionModel& model, const std::vector<data::SequenceWindow>& windows,
                      RngStream& rng) {
  if (windows.empty()) throw Error("denoising_loss over no windows");
  std::vector<Eigen::VectorXd> flat;
  for (const auto& w : windows) flat.push_back(flatten(w.states));
  std::vector<std::size_t> idx(flat.size());
  std::iota(idx.begin(), idx.end(), 0);
  const Eigen::MatrixXd table = embedding_table(model.schedule.K, model.time_embed_dim);
  Eigen::MatrixXd in, tgt;
  noised_batch(model, table, flat, idx, rng, in, tgt);
  const Eigen::MatrixXd out = nn::mlp_forward_batch(model.denoiser, in);
  return (out - tgt).colwise().squaredNorm().mean();
}

Plan sample_plan(const DiffusionModel& model, std::span<const double> s_t, RngStream& rng) {
  if (static_cast<int>(s_t.size()) != model.state_dim) {
    throw ShapeError("conditioning state has " + std::to_string(s_t.size()) + " entries, expected " +
                     std::to_string(model.state_dim));
  }
  for (double v : s_t) {
    if (!std::isfinite(v)) throw DomainError("conditioning state is not finite");
  }
  Plan plan;
  plan.seed = rng.seed();
  plan.stream_id = rng.stream_id();
  const int W = model.window_size();
  const Eigen::VectorXd pin = data::normalize_state(s_t, model.norm);

  Eigen::MatrixXd x(W, 1);
  for (int i = 0; i < W; ++i) x(i, 0) = rng.normal();
  int nfe = 0;
  reverse_process(model, x, &pin, rng, nfe);
  if (nfe != model.schedule.K) throw Error("denoiser evaluation count does not match K");
  plan.nfe = nfe;

  plan.states.resize(model.horizon, model.state_dim);
  for (int j = 0; j < model.horizon; ++j) {
    if (j == 0) {
      for (int d = 0; d < model.state_dim; ++d) plan.states(0, d) = s_t[d];
      continue;
    }
    const Eigen::VectorXd row = x.col(0).segment(j * model.state_dim, model.state_dim);
    plan.states.row(j) = data::denormalize_state(std::span<const double>(row.data(), row.size()), model.norm);
  }
  return plan;
}

Eigen::MatrixXd sample_unconditional(const DiffusionModel& model, int count, RngStream& rng, int* nfe) {
  const int W = model.window_size();
  Eigen::MatrixXd x(W, count);
  for (int c = 0; c < count; ++c) {
    for (int i = 0; i < W; ++i) x(i, c) = rng.normal();
  }
  int evals = 0;
  reverse_process(model, x, nullptr, rng, evals);
  if (nfe != nullptr) *nfe = evals;
  return x;
}

void save_diffusion(const std::filesystem::path& path, const DiffusionModel& model) {
  nlohmann::json header = {
      {"model_kind", "diffusion"},
      {"horizon", model.horizon},
      {"K", model.schedule.K},
      {"schedule", to_string(model.schedule.kind)},
      {"state_dim", model.state_dim},
      {"time_embed_dim", model.time_embed_dim},
      {"clip_denoised", model.clip_denoised},
      {"condition_first", model.condition_first},
      {"activation", nn::to_string(model.denoiser.activation)},
      {"architecture", model.denoiser.layer_sizes},
      {"loss_kind", "epsilon_mse"},
      {"seed", model.seed},
      {"norm", norm_json(model.norm)},
  };
  nn::write_checkpoint(path, header, std::span<const nn::MlpParams>(&model.denoiser, 1));
}

DiffusionModel load_diffusion(const std::filesystem::path& path) {
  nn::Checkpoint ck = nn::read_checkpoint(path);
  const auto& h = ck.header;
  if (h.value("model_kind", "") != "diffusion") throw FormatError("checkpoint is not a diffusion model", 0);
  if (ck.networks.size() != 1) throw FormatError("diffusion checkpoint must hold one network", 0);
  DiffusionModel m;
  try {
    m.horizon = h.at("horizon").get<int>();
    m.state_dim = h.at("state_dim").get<int>();
    m.time_embed_dim = h.at("time_embed_dim").get<int>();
    m.clip_denoised = h.at("clip_denoised").get<bool>();
    m.condition_first = h.at("condition_first").get<bool>();
    m.seed = h.at("seed").get<std::uint64_t>();
    m.schedule = build_schedule(h.at("K").get<int>(), schedule_from_string(h.at("schedule").get<std::string>()));
    auto vec = [](const nlohmann::json& j) {
      const auto v = j.get<std::vector<double>>();
      return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    const auto& n = h.at("norm");
    m.norm.state_min = vec(n.at("state_min"));
    m.norm.state_max = vec(n.at("state_max"));
    m.norm.action_min = vec(n.at("action_min"));
    m.norm.action_max = vec(n.at("action_max"));
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("malformed diffusion header: ") + e.what(), 0);
  }
  m.denoiser = std::move(ck.networks.front());
  if (m.denoiser.input_size() != m.window_size() + m.time_embed_dim || m.denoiser.output_size() != m.window_size()) {
    throw FormatError("denoiser shape disagrees with horizon and state_dim", 0);
  }
  return m;
}

}  // namespace adaplan::diffusion
