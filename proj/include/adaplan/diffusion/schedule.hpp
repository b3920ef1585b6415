#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace adaplan::diffusion {

enum class ScheduleKind { cosine, linear };

std::string to_string(ScheduleKind k);
ScheduleKind schedule_from_string(const std::string& name);

/// DDPM noise tables indexed 0..K. Index 0 is the clean-data convention:
/// alpha[0] = alpha_bar[0] = 1, sigma[0] = 0.
struct NoiseSchedule {
  int K = 0;
  ScheduleKind kind = ScheduleKind::cosine;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> sigma;
};

/// cosine: alpha_bar(k) = f(k) / f(0), f(k) = cos^2(((k/K) + 0.008) / 1.008 * pi/2),
///         alpha[k] = max(alpha_bar(k) / alpha_bar(k-1), 0.001), alpha_bar the running product.
/// linear: beta evenly spaced from 1e-4 to 0.02, alpha = 1 - beta.
/// sigma[k]^2 = (1 - alpha_bar[k-1]) / (1 - alpha_bar[k]) * (1 - alpha[k]).
/// Throws ConfigError for K < 1.
NoiseSchedule build_schedule(int K, ScheduleKind kind);

/// Closed-form forward marginal sqrt(alpha_bar[k]) s0 + sqrt(1 - alpha_bar[k]) eps.
/// k = 0 returns s0. Throws IndexError outside [0, K] and ShapeError on size mismatch.
Eigen::VectorXd q_sample(const NoiseSchedule& schedule, const Eigen::VectorXd& s0, int k,
                         const Eigen::VectorXd& eps);

/// One forward kernel step q(s^k | s^{k-1}) = N(sqrt(alpha[k]) s^{k-1}, (1 - alpha[k]) I).
Eigen::VectorXd q_step(const NoiseSchedule& schedule, const Eigen::VectorXd& prev, int k,
                       const Eigen::VectorXd& eps);

}  // namespace adaplan::diffusion
