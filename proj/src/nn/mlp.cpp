#include "adaplan/nn/mlp.hpp"

#include <cmath>

#include "adaplan/errors.hpp"

namespace adaplan::nn {
namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double mish(double x) { return x * std::tanh(softplus(x)); }

double mish_derivative(double x) {
  const double sp = softplus(x);
  const double t = std::tanh(sp);
  const double sigmoid = 1.0 / (1.0 + std::exp(-x));
  return t + x * (1.0 - t * t) * sigmoid;
}

void apply_activation(Activation a, Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::relu:
      z = z.cwiseMax(0.0);
      break;
    case Activation::mish:
      z = z.unaryExpr(&mish);
      break;
  }
}

void check_input_rows(const MlpParams& params, Eigen::Index rows) {
  if (rows != params.input_size()) {
    throw ShapeError("mlp input has " + std::to_string(rows) + " entries, expected " +
                     std::to_string(params.input_size()));
  }
}

}  // namespace

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "mish"; }

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "mish") return Activation::mish;
  throw ConfigError("unknown activation '" + name + "'");
}

std::size_t parameter_count(std::span<const int> layer_sizes) {
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    total += static_cast<std::size_t>(layer_sizes[l]) * layer_sizes[l + 1] + layer_sizes[l + 1];
  }
  return total;
}

std::size_t MlpParams::parameter_count() const { return nn::parameter_count(layer_sizes); }

bool MlpParams::all_finite() const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
  }
  return true;
}

bool MlpParams::operator==(const MlpParams& other) const {
  if (layer_sizes != other.layer_sizes || activation != other.activation) return false;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l] != other.weights[l] || biases[l] != other.biases[l]) return false;
  }
  return true;
}

MlpGrads MlpGrads::zeros_like(const MlpParams& params) {
  MlpGrads g;
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    g.weights.push_back(Eigen::MatrixXd::Zero(params.weights[l].rows(), params.weights[l].cols()));
    g.biases.push_back(Eigen::VectorXd::Zero(params.biases[l].size()));
  }
  return g;
}

bool MlpGrads::all_finite() const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
  }
  return true;
}

MlpParams mlp_init(std::span<const int> layer_sizes, Activation activation, RngStream& rng) {
  if (layer_sizes.size() < 2) {
    throw InvalidArchitecture("an mlp needs at least an input and an output size");
  }
  for (int n : layer_sizes) {
    if (n < 1) throw InvalidArchitecture("layer sizes must be positive, got " + std::to_string(n));
  }
  MlpParams p;
  p.layer_sizes.assign(layer_sizes.begin(), layer_sizes.end());
  p.activation = activation;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l];
    const int fan_out = layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / fan_in);
    Eigen::MatrixXd w(fan_out, fan_in);
    // Row-major fill order so the draw sequence matches the checkpoint layout.
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) w(r, c) = rng.uniform(-bound, bound);
    }
    p.weights.push_back(std::move(w));
    p.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return p;
}

Eigen::VectorXd mlp_forward(const MlpParams& params, std::span<const double> x) {
  check_input_rows(params, static_cast<Eigen::Index>(x.size()));
  Eigen::VectorXd h = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  const std::size_t n = params.num_layers();
  for (std::size_t l = 0; l < n; ++l) {
    Eigen::VectorXd z = params.weights[l] * h + params.biases[l];
    if (l + 1 < n) {
      if (params.activation == Activation::relu) {
        z = z.cwiseMax(0.0);
      } else {
        z = z.unaryExpr(&mish);
      }
    }
    h = std::move(z);
  }
  return h;
}

Eigen::MatrixXd mlp_forward_batch(const MlpParams& params, const Eigen::MatrixXd& inputs) {
  check_input_rows(params, inputs.rows());
  Eigen::MatrixXd h = inputs;
  const std::size_t n = params.num_layers();
  for (std::size_t l = 0; l < n; ++l) {
    Eigen::MatrixXd z = params.weights[l] * h;
    z.colwise() += params.biases[l];
    if (l + 1 < n) apply_activation(params.activation, z);
    h = std::move(z);
  }
  return h;
}

GradResult grad(const MlpParams& params, const Eigen::MatrixXd& inputs,
                const Eigen::MatrixXd& targets, const SampleLoss& loss) {
  check_input_rows(params, inputs.rows());
  const Eigen::Index batch = inputs.cols();
  if (batch == 0) throw ShapeError("gradient requested for an empty batch");
  if (targets.cols() != batch) throw ShapeError("targets and inputs disagree on batch size");

  const std::size_t n = params.num_layers();
  // acts[l] is the input to layer l; pre[l] its pre-activation output.
  std::vector<Eigen::MatrixXd> acts(n + 1);
  std::vector<Eigen::MatrixXd> pre(n);
  acts[0] = inputs;
  for (std::size_t l = 0; l < n; ++l) {
    pre[l] = params.weights[l] * acts[l];
    pre[l].colwise() += params.biases[l];
    acts[l + 1] = pre[l];
    if (l + 1 < n) apply_activation(params.activation, acts[l + 1]);
  }

  const Eigen::MatrixXd& out = acts[n];
  Eigen::MatrixXd delta(out.rows(), batch);
  double total = 0.0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    Eigen::VectorXd d(out.rows());
    const double value = loss(out.col(b), targets.col(b), d);
    if (!std::isfinite(value)) {
      throw NumericError("non-finite loss at batch index " + std::to_string(b),
                         static_cast<std::size_t>(b));
    }
    total += value;
    delta.col(b) = d;
  }
  const double inv_batch = 1.0 / static_cast<double>(batch);
  delta *= inv_batch;

  GradResult result;
  result.loss = total * inv_batch;
  result.grads.weights.resize(n);
  result.grads.biases.resize(n);
  for (std::size_t l = n; l-- > 0;) {
    result.grads.weights[l].noalias() = delta * acts[l].transpose();
    result.grads.biases[l] = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd back = params.weights[l].transpose() * delta;
    const Eigen::MatrixXd& z = pre[l - 1];
    if (params.activation == Activation::relu) {
      delta = back.array() * (z.array() > 0.0).cast<double>();
    } else {
      delta = back.array() * z.unaryExpr(&mish_derivative).array();
    }
  }
  return result;
}

}  // namespace adaplan::nn
