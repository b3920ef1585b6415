#pragma once

#include <Eigen/Dense>

#include <span>

#include "adaplan/nn/mlp.hpp"

namespace adaplan::nn {

/// Smallest variance a variance head can report.
inline constexpr double kVarianceFloor = 1e-6;

/// log(1 + exp(raw)) + 1e-6, using `raw` directly above 30 to avoid overflow.
double softplus_var(double raw);
Eigen::VectorXd softplus_var(std::span<const double> raw);

/// Gaussian negative log-likelihood of one sample, summed over dimensions:
/// sum_d 0.5 * log(var_d) + (y_d - mu_d)^2 / (2 var_d).
/// Throws DomainError for var <= 0 and ShapeError on length mismatch.
double nll_loss(std::span<const double> y, std::span<const double> mu, std::span<const double> var);

/// Batch form: columns are samples, result is the mean over the batch.
double nll_loss(const Eigen::MatrixXd& y, const Eigen::MatrixXd& mu, const Eigen::MatrixXd& var);

/// sum_d (output_d - target_d)^2.
SampleLoss squared_error_loss();

/// Output layout [mean (n), raw variance (n)]; the raw half goes through
/// softplus_var. Targets have n entries.
SampleLoss gaussian_nll_loss();

}  // namespace adaplan::nn
