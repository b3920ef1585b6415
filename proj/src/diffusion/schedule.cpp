#include "adaplan/diffusion/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "adaplan/errors.hpp"

namespace adaplan::diffusion {

std::string to_string(ScheduleKind k) { return k == ScheduleKind::cosine ? "cosine" : "linear"; }

ScheduleKind schedule_from_string(const std::string& name) {
  if (name == "cosine") return ScheduleKind::cosine;
  if (name == "linear") return ScheduleKind::linear;
  throw ConfigError("unknown noise schedule '" + name + "'");
}

NoiseSchedule build_schedule(int K, ScheduleKind kind) {
  if (K < 1) throw ConfigError("diffusion steps K must be at least 1, got " + std::to_string(K));
  NoiseSchedule s;
  s.K = K;
  s.kind = kind;
  s.alpha.assign(K + 1, 1.0);
  s.alpha_bar.assign(K + 1, 1.0);
  s.sigma.assign(K + 1, 0.0);

  if (kind == ScheduleKind::cosine) {
    constexpr double offset = 0.008;
    auto f = [&](int k) {
      const double c = std::cos((static_cast<double>(k) / K + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
      return c * c;
    };
    const double f0 = f(0);
    double prev = 1.0;
    for (int k = 1; k <= K; ++k) {
      const double target = f(k) / f0;
      s.alpha[k] = std::max(target / prev, 0.001);
      prev = target;
    }
  } else {
    for (int k = 1; k <= K; ++k) {
      const double beta = K == 1 ? 1e-4 : 1e-4 + (0.02 - 1e-4) * static_cast<double>(k - 1) / (K - 1);
      s.alpha[k] = 1.0 - beta;
    }
  }

  for (int k = 1; k <= K; ++k) s.alpha_bar[k] = s.alpha_bar[k - 1] * s.alpha[k];
  for (int k = 1; k <= K; ++k) {
    const double posterior = (1.0 - s.alpha_bar[k - 1]) / (1.0 - s.alpha_bar[k]) * (1.0 - s.alpha[k]);
    s.sigma[k] = std::sqrt(posterior);
  }
  return s;
}

Eigen::VectorXd q_sample(const NoiseSchedule& schedule, const Eigen::VectorXd& s0, int k,
                         const Eigen::VectorXd& eps) {
  if (k < 0 || k > schedule.K) {
    throw IndexError("diffusion step " + std::to_string(k) + " outside [0, " + std::to_string(schedule.K) + "]");
  }
  if (s0.size() != eps.size()) throw ShapeError("q_sample: noise and data differ in size");
  const double ab = schedule.alpha_bar[k];
  return std::sqrt(ab) * s0 + std::sqrt(1.0 - ab) * eps;
}

Eigen::VectorXd q_step(const NoiseSchedule& schedule, const Eigen::VectorXd& prev, int k,
                       const Eigen::VectorXd& eps) {
  if (k < 1 || k > schedule.K) {
    throw IndexError("diffusion step " + std::to_string(k) + " outside [1, " + std::to_string(schedule.K) + "]");
  }
  if (prev.size() != eps.size()) throw ShapeError("q_step: noise and data differ in size");
  const double a = schedule.alpha[k];
  return std::sqrt(a) * prev + std::sqrt(1.0 - a) * eps;
}

}  // namespace adaplan::diffusion
