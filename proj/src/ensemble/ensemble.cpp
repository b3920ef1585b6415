#include "adaplan/ensemble/ensemble.hpp"

#include <json.hpp>

#include <algorithm>
#include <numeric>

#include "adaplan/errors.hpp"
#include "adaplan/nn/adam.hpp"
#include "adaplan/nn/checkpoint.hpp"
#include "adaplan/nn/losses.hpp"

namespace adaplan::ensemble {
namespace {

// Order-independent mean: sum the sorted values.
double sorted_mean(std::vector<double>& values) {
  std::sort(values.begin(), values.end());
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double population_variance(std::vector<double> values) {
  // Identical members must give exactly zero, which the rounded mean would not.
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*lo == *hi) return 0.0;
  const double mu = sorted_mean(values);
  std::vector<double> sq;
  sq.reserve(values.size());
  for (double v : values) sq.push_back((v - mu) * (v - mu));
  return sorted_mean(sq);
}

std::vector<double> row_values(const Eigen::MatrixXd& m, Eigen::Index r) {
  std::vector<double> v(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) v[static_cast<std::size_t>(c)] = m(r, c);
  return v;
}

}  // namespace

std::string to_string(ActionLoss k) { return k == ActionLoss::nll ? "nll" : "mse"; }

ActionLoss action_loss_from_string(const std::string& name) {
  if (name == "nll") return ActionLoss::nll;
  if (name == "mse") return ActionLoss::mse;
  throw ConfigError("unknown action loss '" + name + "'");
}

std::string to_string(Reduction r) { return r == Reduction::mean ? "mean" : "max"; }

Reduction reduction_from_string(const std::string& name) {
  if (name == "mean") return Reduction::mean;
  if (name == "max") return Reduction::max;
  throw ConfigError("unknown uncertainty reduction '" + name + "'");
}

Ensemble Ensemble::prefix(std::size_t m) const {
  if (m == 0 || m > members.size()) {
    throw ConfigError("ensemble prefix of " + std::to_string(m) + " members from a pool of " +
                      std::to_string(members.size()));
  }
  Ensemble e;
  e.members.assign(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(m));
  e.norm = norm;
  e.reduction = reduction;
  return e;
}

ActionModel train_member(const data::TransitionPairs& pairs, ActionLoss loss_kind, int state_dim,
                         const MemberTrainConfig& cfg, RngStream& rng) {
  const Eigen::Index n = pairs.inputs.cols();
  if (n == 0) throw Error("cannot train an action model on an empty dataset");
  if (pairs.inputs.rows() != 2 * state_dim) throw ShapeError("action-model inputs must be state pairs");
  if (cfg.batch_size < 1 || cfg.steps < 0) throw ConfigError("invalid action-model training config");

  ActionModel model;
  model.loss_kind = loss_kind;
  model.state_dim = state_dim;
  model.action_dim = static_cast<int>(pairs.targets.rows());

  RngStream init_rng = rng.split(0);
  RngStream shuffle_rng = rng.split(1);

  std::vector<int> sizes{2 * state_dim};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(loss_kind == ActionLoss::nll ? 2 * model.action_dim : model.action_dim);
  model.params = nn::mlp_init(sizes, nn::Activation::relu, init_rng);

  const nn::SampleLoss loss = loss_kind == ActionLoss::nll ? nn::gaussian_nll_loss() : nn::squared_error_loss();
  nn::AdamState adam = nn::AdamState::fresh(model.params, {cfg.learning_rate, 0.9, 0.999, 1e-8});

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  const auto batch = static_cast<Eigen::Index>(std::min<Eigen::Index>(cfg.batch_size, n));
  Eigen::MatrixXd in(pairs.inputs.rows(), batch);
  Eigen::MatrixXd tgt(pairs.targets.rows(), batch);
  for (int step = 0; step < cfg.steps; ++step) {
    for (Eigen::Index b = 0; b < batch; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
        cursor = 0;
      }
      const Eigen::Index i = order[cursor++];
      in.col(b) = pairs.inputs.col(i);
      tgt.col(b) = pairs.targets.col(i);
    }
    nn::GradResult g = nn::grad(model.params, in, tgt, loss);
    nn::adam_step(adam, model.params, g.grads);
  }
  return model;
}

Ensemble train_ensemble(const data::OfflineDataset& dataset, ActionLoss loss_kind, int members,
                        const MemberTrainConfig& cfg, RngStream& rng) {
  if (members < 1) throw ConfigError("an ensemble needs at least one member");
  const data::TransitionPairs pairs = data::transition_pairs(dataset);
  Ensemble ens;
  ens.norm = dataset.norm;
  for (int m = 0; m < members; ++m) {
    RngStream member_rng = rng.split(static_cast<std::uint64_t>(m));
    ens.members.push_back(train_member(pairs, loss_kind, dataset.state_dim, cfg, member_rng));
  }
  return ens;
}

MemberOutputs member_outputs(const Ensemble& ens, std::span<const double> s, std::span<const double> s_next) {
  const int sd = ens.state_dim();
  if (static_cast<int>(s.size()) != sd || static_cast<int>(s_next.size()) != sd) {
    throw ShapeError("ensemble expects states of dimension " + std::to_string(sd));
  }
  Eigen::VectorXd x(2 * sd);
  x.head(sd) = data::normalize_state(s, ens.norm);
  x.tail(sd) = data::normalize_state(s_next, ens.norm);
  const int ad = ens.action_dim();
  const auto M = static_cast<Eigen::Index>(ens.size());
  MemberOutputs out;
  out.mean.resize(ad, M);
  if (ens.loss_kind() == ActionLoss::nll) out.var.resize(ad, M);
  for (Eigen::Index m = 0; m < M; ++m) {
    const Eigen::VectorXd y = nn::mlp_forward(ens.members[static_cast<std::size_t>(m)].params,
                                              std::span<const double>(x.data(), x.size()));
    out.mean.col(m) = y.head(ad);
    if (ens.loss_kind() == ActionLoss::nll) {
      for (int d = 0; d < ad; ++d) out.var(d, m) = nn::softplus_var(y[ad + d]);
    }
  }
  return out;
}

Eigen::VectorXd total_uncertainty(const MemberOutputs& out) {
  const Eigen::Index ad = out.mean.rows();
  Eigen::VectorXd u(ad);
  for (Eigen::Index d = 0; d < ad; ++d) {
    double value = population_variance(row_values(out.mean, d));
    if (out.var.size() > 0) {
      std::vector<double> v = row_values(out.var, d);
      value += sorted_mean(v);
    }
    u[d] = value;
  }
  return u;
}

Eigen::VectorXd mixture_second_moment(const MemberOutputs& out) {
  const Eigen::Index ad = out.mean.rows();
  const auto M = static_cast<double>(out.mean.cols());
  Eigen::VectorXd r(ad);
  for (Eigen::Index d = 0; d < ad; ++d) {
    double second = 0.0;
    double first = 0.0;
    for (Eigen::Index m = 0; m < out.mean.cols(); ++m) {
      const double mu = out.mean(d, m);
      const double var = out.var.size() > 0 ? out.var(d, m) : 0.0;
      second += var + mu * mu;
      first += mu;
    }
    first /= M;
    r[d] = second / M - first * first;
  }
  return r;
}

ActionPrediction aggregate(const MemberOutputs& out, Reduction reduction) {
  const Eigen::Index ad = out.mean.rows();
  ActionPrediction p;
  p.action.resize(static_cast<std::size_t>(ad));
  for (Eigen::Index d = 0; d < ad; ++d) {
    std::vector<double> v = row_values(out.mean, d);
    p.action[static_cast<std::size_t>(d)] = sorted_mean(v);
  }
  const Eigen::VectorXd u = total_uncertainty(out);
  p.per_dim_uncertainty.assign(u.data(), u.data() + u.size());
  if (reduction == Reduction::max) {
    p.u = u.maxCoeff();
  } else {
    std::vector<double> v = p.per_dim_uncertainty;
    p.u = sorted_mean(v);
  }
  return p;
}

ActionPrediction predict(const Ensemble& ens, std::span<const double> s, std::span<const double> s_next) {
  ActionPrediction p = aggregate(member_outputs(ens, s, s_next), ens.reduction);
  const Eigen::VectorXd a = data::denormalize_action(p.action, ens.norm);
  p.action.assign(a.data(), a.data() + a.size());
  return p;
}

void save_ensemble(const std::filesystem::path& path, const Ensemble& ens, std::uint64_t seed) {
  auto v = [](const Eigen::VectorXd& x) { return std::vector<double>(x.data(), x.data() + x.size()); };
  nlohmann::json header = {
      {"model_kind", "ensemble"},
      {"M", ens.size()},
      {"loss_kind", to_string(ens.loss_kind())},
      {"reduction", to_string(ens.reduction)},
      {"state_dim", ens.state_dim()},
      {"action_dim", ens.action_dim()},
      {"activation", nn::to_string(ens.members.front().params.activation)},
      {"architecture", ens.members.front().params.layer_sizes},
      {"seed", seed},
      {"norm",
       {{"state_min", v(ens.norm.state_min)},
        {"state_max", v(ens.norm.state_max)},
        {"action_min", v(ens.norm.action_min)},
        {"action_max", v(ens.norm.action_max)}}},
  };
  std::vector<nn::MlpParams> nets;
  for (const ActionModel& m : ens.members) nets.push_back(m.params);
  nn::write_checkpoint(path, header, nets);
}

Ensemble load_ensemble(const std::filesystem::path& path) {
  nn::Checkpoint ck = nn::read_checkpoint(path);
  const auto& h = ck.header;
  if (h.value("model_kind", "") != "ensemble") throw FormatError("checkpoint is not an action ensemble", 0);
  Ensemble ens;
  ActionLoss kind;
  int sd = 0;
  int ad = 0;
  try {
    kind = action_loss_from_string(h.at("loss_kind").get<std::string>());
    ens.reduction = reduction_from_string(h.at("reduction").get<std::string>());
    sd = h.at("state_dim").get<int>();
    ad = h.at("action_dim").get<int>();
    if (h.at("M").get<std::size_t>() != ck.networks.size()) throw FormatError("member count mismatch", 0);
    auto vec = [](const nlohmann::json& j) {
      const auto v = j.get<std::vector<double>>();
      return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    const auto& n = h.at("norm");
    ens.norm.state_min = vec(n.at("state_min"));
    ens.norm.state_max = vec(n.at("state_max"));
    ens.norm.action_min = vec(n.at("action_min"));
    ens.norm.action_max = vec(n.at("action_max"));
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("malformed ensemble header: ") + e.what(), 0);
  }
  if (ck.networks.empty()) throw FormatError("ensemble checkpoint holds no members", 0);
  for (nn::MlpParams& p : ck.networks) {
    const int out = kind == ActionLoss::nll ? 2 * ad : ad;
    if (p.input_size() != 2 * sd || p.output_size() != out) throw FormatError("member shape mismatch", 0);
    ens.members.push_back({std::move(p), kind, sd, ad});
  }
  return ens;
}

}  // namespace adaplan::ensemble
