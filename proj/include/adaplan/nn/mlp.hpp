#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "adaplan/rng.hpp"

namespace adaplan::nn {

/// Hidden-layer nonlinearity. The output layer is always the identity.
enum class Activation { relu, mish };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Dense multilayer perceptron. Layer l maps layer_sizes[l] -> layer_sizes[l+1]
/// with weights[l] of shape (layer_sizes[l+1] x layer_sizes[l]).
struct MlpParams {
  std::vector<int> layer_sizes;
  Activation activation = Activation::relu;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  std::size_t num_layers() const { return weights.size(); }
  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }
  std::size_t parameter_count() const;
  bool all_finite() const;
  bool operator==(const MlpParams& other) const;
};

/// Gradient (or optimizer moment) with the same shapes as an MlpParams.
struct MlpGrads {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  static MlpGrads zeros_like(const MlpParams& params);
  bool all_finite() const;
};

std::size_t parameter_count(std::span<const int> layer_sizes);

/// Kaiming-uniform weights (bound sqrt(6 / fan_in)) and zero biases.
/// Throws InvalidArchitecture for fewer than two sizes or a size below 1.
MlpParams mlp_init(std::span<const int> layer_sizes, Activation activation, RngStream& rng);

/// Single-sample evaluation. Throws ShapeError if x has the wrong length.
Eigen::VectorXd mlp_forward(const MlpParams& params, std::span<const double> x);

/// Batched evaluation; each column of `inputs` is one sample.
Eigen::MatrixXd mlp_forward_batch(const MlpParams& params, const Eigen::MatrixXd& inputs);

/// Per-sample loss. Writes dL/d(output) into `d_output` (already sized) and
/// returns the loss value.
using SampleLoss = std::function<double(const Eigen::Ref<const Eigen::VectorXd>& output,
                                        const Eigen::Ref<const Eigen::VectorXd>& target,
                                        Eigen::Ref<Eigen::VectorXd> d_output)>;

struct GradResult {
  double loss = 0.0;  // mean over the batch
  MlpGrads grads;
};

/// Exact reverse-mode gradient of the batch-mean loss. Columns of `inputs`
/// and `targets` are samples. Throws NumericError naming the first sample
/// whose loss is non-finite.
GradResult grad(const MlpParams& params, const Eigen::MatrixXd& inputs,
                const Eigen::MatrixXd& targets, const SampleLoss& loss);

}  // namespace adaplan::nn
