#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "adaplan/rng.hpp"

namespace adaplan::env {

enum class EnvKind { double_integrator_2d, pendulum_swingup };

enum class DoneReason : std::uint8_t { none = 0, out_of_bounds = 1, time_limit = 2 };

std::string to_string(DoneReason r);

/// Environment constants. Every field may be overridden from config.
///
/// double_integrator_2d: state (px, py, vx, vy); p' = p + v dt, v' = v + a dt;
///   reward -||p' - goal||; episode ends out_of_bounds when any |p'_i| > position_bound.
///   With absorbing_terminal the out-of-bounds step also pays that reward for every
///   step left before max_steps, as if the system stayed where it left the box.
///   Initial positions uniform in [-init_position_range, init_position_range]^2, velocity 0.
///
/// pendulum_swingup: state (cos th, sin th, w) with th = 0 upright;
///   w' = clip(w + dt (3 g / (2 l) sin th + 3 u / (m l^2)), +-max_speed), th' = th + w' dt;
///   reward -(wrap(th)^2 + 0.1 w^2 + 0.001 u^2) evaluated at the pre-step state.
///   Initial th uniform in [-pi, pi], w uniform in [-1, 1]. No early termination.
struct EnvSpec {
  std::string name;
  EnvKind kind = EnvKind::double_integrator_2d;
  int state_dim = 4;
  int action_dim = 2;
  std::vector<double> action_low;
  std::vector<double> action_high;
  double dt = 0.05;
  int max_steps = 200;
  std::string termination;

  // double integrator
  std::array<double, 2> goal{1.0, 1.0};
  double position_bound = 2.0;
  bool absorbing_terminal = true;
  double init_position_range = 0.2;
  double expert_kp = 4.0;
  double expert_kd = 3.0;

  // pendulum
  double gravity = 10.0;
  double length = 1.0;
  double mass = 1.0;
  double max_speed = 8.0;
  double catch_cos = 0.9;
  double catch_kp = 12.0;
  double catch_kd = 3.0;
  double swing_gain = 1.0;

  static EnvSpec double_integrator_2d();
  static EnvSpec pendulum_swingup();
  /// Throws ConfigError for an unknown name.
  static EnvSpec by_name(const std::string& name);

  /// Throws ConfigError if bounds, dt or max_steps are invalid.
  void validate() const;
};

struct EnvState {
  std::vector<double> values;
  int step_index = 0;

  bool operator==(const EnvState&) const = default;
};

struct StepResult {
  EnvState next_state;
  double reward = 0.0;
  bool done = false;
  DoneReason done_reason = DoneReason::none;
};

EnvState reset(const EnvSpec& spec, RngStream& rng);

/// Deterministic transition. The action is clipped to the bounds first.
/// Throws InvalidAction for a non-finite action or wrong length.
StepResult step(const EnvSpec& spec, const EnvState& s, std::span<const double> action);

std::vector<double> clip_action(const EnvSpec& spec, std::span<const double> action);

enum class Tier { expert, medium };

/// Behaviour of the "medium" scripted controller: gain * expert + N(0, noise_std^2).
struct MediumParams {
  double gain = 0.4;
  double noise_std = 0.3;
};

/// Deterministic stabilising controller (already clipped).
std::vector<double> expert_action(const EnvSpec& spec, const EnvState& s);

/// expert: expert_action. medium: clip(gain * expert_action + noise).
std::vector<double> scripted_controller(Tier tier, const EnvSpec& spec, const EnvState& s, RngStream& rng,
                                        const MediumParams& medium = {});

/// Uniform over the action box.
std::vector<double> random_action(const EnvSpec& spec, RngStream& rng);

/// Pendulum angle from a (cos, sin, w) state, wrapped to (-pi, pi].
double pendulum_angle(std::span<const double> state);

}  // namespace adaplan::env
