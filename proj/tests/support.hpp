#pragma once

// Shared fixtures for the unit tests and the acceptance runner.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "adaplan/data/dataset.hpp"
#include "adaplan/ensemble/ensemble.hpp"
#include "adaplan/nn/losses.hpp"
#include "adaplan/nn/mlp.hpp"
#include "adaplan/rng.hpp"

namespace adaplan::testing {

/// Fresh scratch directory under the system temp dir, emptied on creation.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("adaplan_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({1e-6, std::abs(analytic), std::abs(numeric)});
}

/// Max relative error of nn::grad against central differences (h = 1e-4) for a
/// random [3, 8, 2]-shaped net (nll doubles the output layer) on a batch of 4.
inline double grad_check(std::uint64_t seed, bool nll, nn::Activation act) {
  RngStream rng(seed, 7);
  const int out = nll ? 4 : 2;
  const std::vector<int> sizes{3, 8, out};
  nn::MlpParams p = nn::mlp_init(sizes, act, rng);
  for (auto& b : p.biases) {
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = rng.uniform(-0.5, 0.5);
  }
  Eigen::MatrixXd x(3, 4), y(2, 4);
  // Central differences are meaningless across a relu kink, so inputs whose
  // hidden pre-activations sit within 1e-2 of zero are redrawn.
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    for (;;) {
      for (Eigen::Index r = 0; r < x.rows(); ++r) x(r, c) = rng.uniform(-1.0, 1.0);
      const Eigen::VectorXd z = p.weights[0] * x.col(c) + p.biases[0];
      if (act != nn::Activation::relu || z.cwiseAbs().minCoeff() > 1e-2) break;
    }
  }
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = rng.uniform(-1.0, 1.0);
  const nn::SampleLoss loss = nll ? nn::gaussian_nll_loss() : nn::squared_error_loss();
  const nn::GradResult g = nn::grad(p, x, y, loss);

  const double h = 1e-4;
  auto value = [&](const nn::MlpParams& q) { return nn::grad(q, x, y, loss).loss; };
  double worst = 0.0;
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    for (Eigen::Index i = 0; i < p.weights[l].size(); ++i) {
      nn::MlpParams hi = p, lo = p;
      hi.weights[l].data()[i] += h;
      lo.weights[l].data()[i] -= h;
      worst = std::max(worst, rel_error(g.grads.weights[l].data()[i], (value(hi) - value(lo)) / (2 * h)));
    }
    for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) {
      nn::MlpParams hi = p, lo = p;
      hi.biases[l][i] += h;
      lo.biases[l][i] -= h;
      worst = std::max(worst, rel_error(g.grads.biases[l][i], (value(hi) - value(lo)) / (2 * h)));
    }
  }
  return worst;
}

/// Dataset shell with the given records; norm is fitted over them.
inline data::OfflineDataset dataset_from(std::vector<data::TrajectoryRecord> records, int state_dim, int action_dim) {
  data::OfflineDataset ds;
  ds.env_name = "synthetic";
  ds.state_dim = state_dim;
  ds.action_dim = action_dim;
  ds.records = std::move(records);
  for (const auto& r : ds.records) ds.total_steps += r.length() - 1;
  ds.norm = data::fit_norm(ds);
  return ds;
}

/// Windows of H = 2 one-dimensional states, each a constant +-0.5 pair. Norm is
/// the identity so normalized values are the raw ones.
inline std::vector<data::SequenceWindow> two_mode_windows(int n, RngStream& rng) {
  std::vector<data::SequenceWindow> out;
  for (int i = 0; i < n; ++i) {
    data::SequenceWindow w;
    const double mode = (i % 2 == 0) ? 0.5 : -0.5;
    w.states = Eigen::MatrixXd::Constant(2, 1, mode + 0.02 * rng.normal());
    w.record = static_cast<std::size_t>(i);
    out.push_back(std::move(w));
  }
  return out;
}

/// Straight lines s_j = s_0 + j d in two dimensions, stored as 64-step records.
inline data::OfflineDataset straight_line_dataset(const Eigen::Vector2d& d, int n_records, RngStream& rng) {
  std::vector<data::TrajectoryRecord> recs;
  const int L = 64;
  for (int r = 0; r < n_records; ++r) {
    data::TrajectoryRecord rec;
    rec.states.resize(L, 2);
    const Eigen::Vector2d s0(rng.uniform(-1.0, 0.0), rng.uniform(-1.0, 0.0));
    for (int j = 0; j < L; ++j) rec.states.row(j) = (s0 + j * d).transpose();
    rec.actions = Eigen::MatrixXd::Constant(L - 1, 1, 0.0);
    rec.rewards = Eigen::VectorXd::Zero(L - 1);
    recs.push_back(std::move(rec));
  }
  return dataset_from(std::move(recs), 2, 1);
}

/// Spearman rank correlation (no tie handling needed for continuous data).
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t k = 0; k < idx.size(); ++k) r[idx[k]] = static_cast<double>(k);
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n - 1) / 2.0;
  double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (ra[i] - mean) * (rb[i] - mean);
    da += (ra[i] - mean) * (ra[i] - mean);
    db += (rb[i] - mean) * (rb[i] - mean);
  }
  return num / std::sqrt(da * db);
}

/// Heteroscedastic pairs: 1-D input x in [-1, 1] (as a "state pair" of width
/// 2 whose second half is zero), target mu(x) = 0.5 x plus noise of std
/// 0.05 + 0.3 |x|. Returns training pairs; `true_var` evaluates sigma^2(x).
inline data::TransitionPairs heteroscedastic_pairs(int n, RngStream& rng) {
  data::TransitionPairs p;
  p.inputs = Eigen::MatrixXd::Zero(2, n);
  p.targets.resize(1, n);
  for (int i = 0; i < n; ++i) {
    const double x = rng.uniform(-1.0, 1.0);
    p.inputs(0, i) = x;
    p.targets(0, i) = 0.5 * x + (0.05 + 0.3 * std::abs(x)) * rng.normal();
  }
  return p;
}

inline double heteroscedastic_true_var(double x) {
  const double s = 0.05 + 0.3 * std::abs(x);
  return s * s;
}

}  // namespace adaplan::testing
