#include "adaplan/nn/losses.hpp"

#include <cmath>
#include <string>

#include "adaplan/errors.hpp"

namespace adaplan::nn {
namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double nll_term(double y, double mu, double var) {
  if (!(var > 0.0)) throw DomainError("variance must be strictly positive, got " + std::to_string(var));
  const double r = y - mu;
  return 0.5 * std::log(var) + r * r / (2.0 * var);
}

}  // namespace

double softplus_var(double raw) {
  const double sp = raw > 30.0 ? raw : std::log1p(std::exp(raw));
  return sp + kVarianceFloor;
}

Eigen::VectorXd softplus_var(std::span<const double> raw) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(raw.size()));
  for (std::size_t i = 0; i < raw.size(); ++i) out[static_cast<Eigen::Index>(i)] = softplus_var(raw[i]);
  return out;
}

double nll_loss(std::span<const double> y, std::span<const double> mu, std::span<const double> var) {
  if (y.size() != mu.size() || y.size() != var.size()) {
    throw ShapeError("nll_loss arguments have different lengths");
  }
  double total = 0.0;
  for (std::size_t d = 0; d < y.size(); ++d) total += nll_term(y[d], mu[d], var[d]);
  return total;
}

double nll_loss(const Eigen::MatrixXd& y, const Eigen::MatrixXd& mu, const Eigen::MatrixXd& var) {
  if (y.rows() != mu.rows() || y.cols() != mu.cols() || y.rows() != var.rows() ||
      y.cols() != var.cols()) {
    throw ShapeError("nll_loss arguments have different shapes");
  }
  if (y.cols() == 0) throw ShapeError("nll_loss over an empty batch");
  double total = 0.0;
  for (Eigen::Index b = 0; b < y.cols(); ++b) {
    for (Eigen::Index d = 0; d < y.rows(); ++d) total += nll_term(y(d, b), mu(d, b), var(d, b));
  }
  return total / static_cast<double>(y.cols());
}

SampleLoss squared_error_loss() {
  return [](const Eigen::Ref<const Eigen::VectorXd>& out, const Eigen::Ref<const Eigen::VectorXd>& target,
            Eigen::Ref<Eigen::VectorXd> d_out) {
    if (out.size() != target.size()) throw ShapeError("squared error: output and target differ in size");
    const Eigen::VectorXd r = out - target;
    d_out = 2.0 * r;
    return r.squaredNorm();
  };
}

SampleLoss gaussian_nll_loss() {
  return [](const Eigen::Ref<const Eigen::VectorXd>& out, const Eigen::Ref<const Eigen::VectorXd>& target,
            Eigen::Ref<Eigen::VectorXd> d_out) {
    const Eigen::Index n = target.size();
    if (out.size() != 2 * n) throw ShapeError("gaussian nll: output must hold mean and variance halves");
    double total = 0.0;
    for (Eigen::Index d = 0; d < n; ++d) {
      const double mu = out[d];
      const double raw = out[n + d];
      const double var = softplus_var(raw);
      const double r = target[d] - mu;
      total += 0.5 * std::log(var) + r * r / (2.0 * var);
      d_out[d] = -r / var;
      // d softplus / d raw is the logistic function (exactly 1 on the linear branch).
      const double dvar_draw = raw > 30.0 ? 1.0 : sigmoid(raw);
      d_out[n + d] = (0.5 / var - r * r / (2.0 * var * var)) * dvar_draw;
    }
    return total;
  };
}

}  // namespace adaplan::nn
