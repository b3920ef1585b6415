#include "adaplan/data/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstring>

#include "../binary_io.hpp"
#include "adaplan/errors.hpp"

namespace adaplan::data {
namespace {

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

std::vector<double> round_f32(std::vector<double> v) {
  for (double& x : v) x = round_f32(x);
  return v;
}

template <typename Derived>
std::span<const double> row_span(const Eigen::MatrixBase<Derived>& m, Eigen::Index r, std::vector<double>& buf) {
  buf.resize(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) buf[static_cast<std::size_t>(c)] = m(r, c);
  return buf;
}

TrajectoryRecord rollout(const env::EnvSpec& spec, env::Tier tier, const env::MediumParams& medium,
                         RngStream& rng) {
  env::EnvState s = env::reset(spec, rng);
  s.values = round_f32(s.values);
  std::vector<std::vector<double>> states{s.values};
  std::vector<std::vector<double>> actions;
  std::vector<double> rewards;
  env::DoneReason reason = env::DoneReason::none;
  while (true) {
    std::vector<double> a = round_f32(env::scripted_controller(tier, spec, s, rng, medium));
    env::StepResult r = env::step(spec, s, a);
    actions.push_back(std::move(a));
    rewards.push_back(round_f32(r.reward));
    states.push_back(round_f32(r.next_state.values));
    s = std::move(r.next_state);
    if (r.done) {
      reason = r.done_reason;
      break;
    }
  }
  TrajectoryRecord rec;
  const auto L = static_cast<Eigen::Index>(states.size());
  rec.states.resize(L, spec.state_dim);
  rec.actions.resize(L - 1, spec.action_dim);
  rec.rewards.resize(L - 1);
  for (Eigen::Index i = 0; i < L; ++i) {
    for (int d = 0; d < spec.state_dim; ++d) rec.states(i, d) = states[i][d];
  }
  for (Eigen::Index i = 0; i + 1 < L; ++i) {
    for (int d = 0; d < spec.action_dim; ++d) rec.actions(i, d) = actions[i][d];
    rec.rewards[i] = rewards[i];
  }
  rec.done_reason = reason;
  return rec;
}

nlohmann::json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string to_string(DatasetTier t) {
  switch (t) {
    case DatasetTier::medium:
      return "medium";
    case DatasetTier::medium_replay:
      return "medium_replay";
    case DatasetTier::medium_expert:
      return "medium_expert";
  }
  return "unknown";
}

DatasetTier tier_from_string(const std::string& name) {
  if (name == "medium") return DatasetTier::medium;
  if (name == "medium_replay") return DatasetTier::medium_replay;
  if (name == "medium_expert") return DatasetTier::medium_expert;
  throw ConfigError("unknown dataset tier '" + name + "'");
}

bool TrajectoryRecord::operator==(const TrajectoryRecord& o) const {
  return states.rows() == o.states.rows() && states.cols() == o.states.cols() && states == o.states &&
         actions.rows() == o.actions.rows() && actions.cols() == o.actions.cols() && actions == o.actions &&
         rewards.size() == o.rewards.size() && rewards == o.rewards && done_reason == o.done_reason;
}

bool NormStats::operator==(const NormStats& o) const {
  auto same = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return a.size() == b.size() && a == b; };
  return same(state_min, o.state_min) && same(state_max, o.state_max) && same(action_min, o.action_min) &&
         same(action_max, o.action_max);
}

NormStats NormStats::identity(int state_dim, int action_dim) {
  NormStats n;
  n.state_min = Eigen::VectorXd::Constant(state_dim, -1.0);
  n.state_max = Eigen::VectorXd::Constant(state_dim, 1.0);
  n.action_min = Eigen::VectorXd::Constant(action_dim, -1.0);
  n.action_max = Eigen::VectorXd::Constant(action_dim, 1.0);
  return n;
}

bool OfflineDataset::operator==(const OfflineDataset& o) const {
  return env_name == o.env_name && tier == o.tier && state_dim == o.state_dim && action_dim == o.action_dim &&
         seed == o.seed && records == o.records && norm == o.norm && total_steps == o.total_steps;
}

OfflineDataset generate_dataset(const env::EnvSpec& spec, DatasetTier tier, int n_episodes, RngStream& rng,
                                const TierRecipe& recipe) {
  if (n_episodes < 1) throw ConfigError("n_episodes must be at least 1");
  spec.validate();
  OfflineDataset ds;
  ds.env_name = spec.name;
  ds.tier = tier;
  ds.state_dim = spec.state_dim;
  ds.action_dim = spec.action_dim;
  ds.seed = rng.seed();
  ds.records.reserve(static_cast<std::size_t>(n_episodes));
  for (int i = 0; i < n_episodes; ++i) {
    RngStream episode_rng = rng.split(static_cast<std::uint64_t>(i));
    env::Tier controller = env::Tier::medium;
    env::MediumParams medium = recipe.medium;
    switch (tier) {
      case DatasetTier::medium:
        break;
      case DatasetTier::medium_replay: {
        const double frac = n_episodes > 1 ? static_cast<double>(i) / (n_episodes - 1) : 0.0;
        medium.noise_std = recipe.replay_noise_start + frac * (recipe.replay_noise_end - recipe.replay_noise_start);
        medium.gain = recipe.replay_gain_start + frac * (recipe.replay_gain_end - recipe.replay_gain_start);
        break;
      }
      case DatasetTier::medium_expert:
        if (i >= n_episodes / 2) controller = env::Tier::expert;
        break;
    }
    ds.records.push_back(rollout(spec, controller, medium, episode_rng));
    ds.total_steps += ds.records.back().length() - 1;
  }
  ds.norm = fit_norm(ds);
  return ds;
}

NormStats fit_norm(const std::vector<TrajectoryRecord>& records) {
  if (records.empty()) throw Error("cannot fit normalization on an empty dataset");
  NormStats n;
  n.state_min = records.front().states.colwise().minCoeff();
  n.state_max = records.front().states.colwise().maxCoeff();
  const auto ad = records.front().actions.cols();
  n.action_min = Eigen::VectorXd::Constant(ad, std::numeric_limits<double>::infinity());
  n.action_max = Eigen::VectorXd::Constant(ad, -std::numeric_limits<double>::infinity());
  for (const TrajectoryRecord& r : records) {
    n.state_min = n.state_min.cwiseMin(r.states.colwise().minCoeff().transpose());
    n.state_max = n.state_max.cwiseMax(r.states.colwise().maxCoeff().transpose());
    if (r.actions.rows() > 0) {
      n.action_min = n.action_min.cwiseMin(r.actions.colwise().minCoeff().transpose());
      n.action_max = n.action_max.cwiseMax(r.actions.colwise().maxCoeff().transpose());
    }
  }
  if (!n.action_min.allFinite()) throw Error("cannot fit normalization: dataset has no transitions");
  return n;
}

NormStats fit_norm(const OfflineDataset& dataset) { return fit_norm(dataset.records); }

Eigen::VectorXd normalize(std::span<const double> x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  if (static_cast<Eigen::Index>(x.size()) != lo.size()) throw ShapeError("normalize: dimension mismatch");
  Eigen::VectorXd out(lo.size());
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    const double range = hi[i] - lo[i];
    out[i] = range > 0.0 ? 2.0 * (x[i] - lo[i]) / range - 1.0 : 0.0;
  }
  return out;
}

Eigen::VectorXd denormalize(std::span<const double> x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  if (static_cast<Eigen::Index>(x.size()) != lo.size()) throw ShapeError("denormalize: dimension mismatch");
  Eigen::VectorXd out(lo.size());
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    const double range = hi[i] - lo[i];
    out[i] = range > 0.0 ? lo[i] + (x[i] + 1.0) * 0.5 * range : lo[i];
  }
  return out;
}

Eigen::VectorXd normalize_state(std::span<const double> s, const NormStats& n) {
  return normalize(s, n.state_min, n.state_max);
}
Eigen::VectorXd denormalize_state(std::span<const double> s, const NormStats& n) {
  return denormalize(s, n.state_min, n.state_max);
}
Eigen::VectorXd normalize_action(std::span<const double> a, const NormStats& n) {
  return normalize(a, n.action_min, n.action_max);
}
Eigen::VectorXd denormalize_action(std::span<const double> a, const NormStats& n) {
  return denormalize(a, n.action_min, n.action_max);
}

std::vector<SequenceWindow> extract_windows(const OfflineDataset& dataset, int horizon) {
  if (horizon < 2) throw ConfigError("horizon must be at least 2, got " + std::to_string(horizon));
  std::vector<SequenceWindow> windows;
  std::vector<double> buf;
  for (std::size_t ri = 0; ri < dataset.records.size(); ++ri) {
    const TrajectoryRecord& rec = dataset.records[ri];
    const Eigen::Index L = rec.length();
    Eigen::MatrixXd normalized(L, dataset.state_dim);
    for (Eigen::Index i = 0; i < L; ++i) {
      normalized.row(i) = normalize_state(row_span(rec.states, i, buf), dataset.norm).transpose();
    }
    if (L >= horizon) {
      for (Eigen::Index off = 0; off + horizon <= L; ++off) {
        windows.push_back({normalized.middleRows(off, horizon), ri, off, false});
      }
    } else {
      SequenceWindow w;
      w.states.resize(horizon, dataset.state_dim);
      w.states.topRows(L) = normalized;
      for (Eigen::Index i = L; i < horizon; ++i) w.states.row(i) = normalized.row(L - 1);
      w.record = ri;
      w.padded = true;
      windows.push_back(std::move(w));
    }
  }
  return windows;
}

TransitionPairs transition_pairs(const OfflineDataset& dataset) {
  const int sd = dataset.state_dim;
  const int ad = dataset.action_dim;
  TransitionPairs p;
  p.inputs.resize(2 * sd, dataset.total_steps);
  p.targets.resize(ad, dataset.total_steps);
  Eigen::Index col = 0;
  std::vector<double> buf;
  for (const TrajectoryRecord& rec : dataset.records) {
    for (Eigen::Index t = 0; t + 1 < rec.length(); ++t) {
      p.inputs.col(col).head(sd) = normalize_state(row_span(rec.states, t, buf), dataset.norm);
      p.inputs.col(col).tail(sd) = normalize_state(row_span(rec.states, t + 1, buf), dataset.norm);
      p.targets.col(col) = normalize_action(row_span(rec.actions, t, buf), dataset.norm);
      ++col;
    }
  }
  if (col != dataset.total_steps) throw Error("dataset total_steps disagrees with its records");
  return p;
}

void save_dataset(const std::filesystem::path& path, const OfflineDataset& ds) {
  nlohmann::json header = {
      {"env", ds.env_name},
      {"tier", to_string(ds.tier)},
      {"state_dim", ds.state_dim},
      {"action_dim", ds.action_dim},
      {"n_records", ds.records.size()},
      {"total_steps", ds.total_steps},
      {"seed", ds.seed},
      {"norm",
       {{"state_min", vec_json(ds.norm.state_min)},
        {"state_max", vec_json(ds.norm.state_max)},
        {"action_min", vec_json(ds.norm.action_min)},
        {"action_max", vec_json(ds.norm.action_max)}}},
  };
  const std::string text = header.dump();
  detail::ByteWriter w;
  w.bytes(kDatasetMagic, 4);
  w.u16(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.str(text);
  for (const TrajectoryRecord& r : ds.records) {
    w.u32(static_cast<std::uint32_t>(r.length()));
    for (Eigen::Index i = 0; i < r.states.rows(); ++i) {
      for (Eigen::Index d = 0; d < r.states.cols(); ++d) w.f32(static_cast<float>(r.states(i, d)));
    }
    for (Eigen::Index i = 0; i < r.actions.rows(); ++i) {
      for (Eigen::Index d = 0; d < r.actions.cols(); ++d) w.f32(static_cast<float>(r.actions(i, d)));
    }
    for (Eigen::Index i = 0; i < r.rewards.size(); ++i) w.f32(static_cast<float>(r.rewards[i]));
    w.u8(static_cast<std::uint8_t>(r.done_reason));
  }
  detail::write_file(path.string(), w.buffer());
}

OfflineDataset load_dataset(const std::filesystem::path& path) {
  detail::ByteReader r(detail::read_file(path.string()));
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kDatasetMagic, 4) != 0) throw FormatError("not an ADPD dataset", 0);
  const std::uint16_t version = r.u16("version");
  if (version != kDatasetVersion) throw FormatError("unsupported dataset version " + std::to_string(version), 4);
  const std::uint32_t header_len = r.u32("header length");
  const std::size_t header_at = r.offset();
  OfflineDataset ds;
  std::size_t n_records = 0;
  try {
    const nlohmann::json h = nlohmann::json::parse(r.str(header_len, "header"));
    ds.env_name = h.at("env").get<std::string>();
    ds.tier = tier_from_string(h.at("tier").get<std::string>());
    ds.state_dim = h.at("state_dim").get<int>();
    ds.action_dim = h.at("action_dim").get<int>();
    n_records = h.at("n_records").get<std::size_t>();
    ds.total_steps = h.at("total_steps").get<std::int64_t>();
    ds.seed = h.at("seed").get<std::uint64_t>();
    const auto& n = h.at("norm");
    ds.norm.state_min = json_vec(n.at("state_min"));
    ds.norm.state_max = json_vec(n.at("state_max"));
    ds.norm.action_min = json_vec(n.at("action_min"));
    ds.norm.action_max = json_vec(n.at("action_max"));
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("malformed dataset header: ") + e.what(), header_at);
  }
  if (ds.state_dim < 1 || ds.action_dim < 1) throw FormatError("non-positive dimensions in header", header_at);

  std::int64_t steps = 0;
  for (std::size_t k = 0; k < n_records; ++k) {
    const std::size_t at = r.offset();
    const std::uint32_t L = r.u32("record length");
    if (L < 2) throw FormatError("record shorter than two states", at);
    TrajectoryRecord rec;
    rec.states.resize(L, ds.state_dim);
    rec.actions.resize(L - 1, ds.action_dim);
    rec.rewards.resize(L - 1);
    for (Eigen::Index i = 0; i < rec.states.rows(); ++i) {
      for (Eigen::Index d = 0; d < rec.states.cols(); ++d) rec.states(i, d) = r.f32("states");
    }
    for (Eigen::Index i = 0; i < rec.actions.rows(); ++i) {
      for (Eigen::Index d = 0; d < rec.actions.cols(); ++d) rec.actions(i, d) = r.f32("actions");
    }
    for (Eigen::Index i = 0; i < rec.rewards.size(); ++i) rec.rewards[i] = r.f32("rewards");
    const std::size_t reason_at = r.offset();
    const std::uint8_t reason = r.u8("done reason");
    if (reason > 2) throw FormatError("invalid done reason", reason_at);
    rec.done_reason = static_cast<env::DoneReason>(reason);
    steps += L - 1;
    ds.records.push_back(std::move(rec));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after last record", r.offset());
  if (steps != ds.total_steps) throw FormatError("total_steps does not match records", header_at);
  return ds;
}

bool replay_matches(const env::EnvSpec& spec, const OfflineDataset& dataset) {
  std::vector<double> buf;
  std::vector<double> abuf;
  for (const TrajectoryRecord& rec : dataset.records) {
    env::EnvState s;
    const auto first = row_span(rec.states, 0, buf);
    s.values.assign(first.begin(), first.end());
    for (Eigen::Index t = 0; t + 1 < rec.length(); ++t) {
      env::StepResult r = env::step(spec, s, row_span(rec.actions, t, abuf));
      for (int d = 0; d < spec.state_dim; ++d) {
        if (round_f32(r.next_state.values[d]) != rec.states(t + 1, d)) return false;
      }
      if (round_f32(r.reward) != rec.rewards[t]) return false;
      s = std::move(r.next_state);
    }
  }
  return true;
}

}  // namespace adaplan::data
