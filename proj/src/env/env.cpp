#include "adaplan/env/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "adaplan/errors.hpp"

namespace adaplan::env {
namespace {

double wrap_angle(double th) {
  th = std::fmod(th + std::numbers::pi, 2.0 * std::numbers::pi);
  if (th < 0.0) th += 2.0 * std::numbers::pi;
  return th - std::numbers::pi;
}

StepResult step_double_integrator(const EnvSpec& spec, const EnvState& s, const std::vector<double>& a) {
  StepResult r;
  r.next_state.values.resize(4);
  auto& n = r.next_state.values;
  n[0] = s.values[0] + s.values[2] * spec.dt;
  n[1] = s.values[1] + s.values[3] * spec.dt;
  n[2] = s.values[2] + a[0] * spec.dt;
  n[3] = s.values[3] + a[1] * spec.dt;
  r.reward = -std::hypot(n[0] - spec.goal[0], n[1] - spec.goal[1]);
  if (std::abs(n[0]) > spec.position_bound || std::abs(n[1]) > spec.position_bound) {
    r.done_reason = DoneReason::out_of_bounds;
    if (spec.absorbing_terminal) r.reward *= static_cast<double>(std::max(1, spec.max_steps - s.step_index));
  }
  return r;
}

StepResult step_pendulum(const EnvSpec& spec, const EnvState& s, const std::vector<double>& a) {
  StepResult r;
  const double th = pendulum_angle(s.values);
  const double w = s.values[2];
  const double u = a[0];
  const double wrapped = wrap_angle(th);
  r.reward = -(wrapped * wrapped + 0.1 * w * w + 0.001 * u * u);
  const double accel = 3.0 * spec.gravity / (2.0 * spec.length) * std::sin(th) +
                       3.0 * u / (spec.mass * spec.length * spec.length);
  const double w_next = std::clamp(w + spec.dt * accel, -spec.max_speed, spec.max_speed);
  const double th_next = th + w_next * spec.dt;
  r.next_state.values = {std::cos(th_next), std::sin(th_next), w_next};
  return r;
}

std::vector<double> expert_double_integrator(const EnvSpec& spec, const EnvState& s) {
  std::vector<double> a(2);
  for (int i = 0; i < 2; ++i) {
    a[i] = spec.expert_kp * (spec.goal[i] - s.values[i]) - spec.expert_kd * s.values[2 + i];
  }
  return clip_action(spec, a);
}

// Energy pumping away from the top, PD catch near it. E is zero upright at rest.
std::vector<double> expert_pendulum(const EnvSpec& spec, const EnvState& s) {
  const double th = pendulum_angle(s.values);
  const double w = s.values[2];
  const double stiffness = 3.0 * spec.gravity / (2.0 * spec.length);
  double u;
  if (std::cos(th) > spec.catch_cos) {
    u = -(spec.catch_kp * th + spec.catch_kd * w);
  } else {
    const double energy = 0.5 * w * w + stiffness * (std::cos(th) - 1.0);
    if (std::abs(w) < 1e-3) {
      u = spec.action_high[0];
    } else {
      u = spec.swing_gain * (-energy) * (w > 0.0 ? 1.0 : -1.0);
    }
  }
  return clip_action(spec, std::vector<double>{u});
}

}  // namespace

std::string to_string(DoneReason r) {
  switch (r) {
    case DoneReason::none:
      return "none";
    case DoneReason::out_of_bounds:
      return "out_of_bounds";
    case DoneReason::time_limit:
      return "time_limit";
  }
  return "unknown";
}

EnvSpec EnvSpec::double_integrator_2d() {
  EnvSpec s;
  s.name = "double_integrator_2d";
  s.kind = EnvKind::double_integrator_2d;
  s.state_dim = 4;
  s.action_dim = 2;
  s.action_low = {-1.0, -1.0};
  s.action_high = {1.0, 1.0};
  s.dt = 0.05;
  s.max_steps = 200;
  s.termination = "position_bound";
  return s;
}

EnvSpec EnvSpec::pendulum_swingup() {
  EnvSpec s;
  s.name = "pendulum_swingup";
  s.kind = EnvKind::pendulum_swingup;
  s.state_dim = 3;
  s.action_dim = 1;
  s.action_low = {-2.0};
  s.action_high = {2.0};
  s.dt = 0.05;
  s.max_steps = 200;
  s.termination = "time_limit";
  return s;
}

EnvSpec EnvSpec::by_name(const std::string& name) {
  if (name == "double_integrator_2d") return double_integrator_2d();
  if (name == "pendulum_swingup") return pendulum_swingup();
  throw ConfigError("unknown environment '" + name + "'");
}

void EnvSpec::validate() const {
  if (state_dim < 1 || action_dim < 1) throw ConfigError("environment dimensions must be positive");
  if (static_cast<int>(action_low.size()) != action_dim || static_cast<int>(action_high.size()) != action_dim) {
    throw ConfigError("action bounds must have action_dim entries");
  }
  for (int i = 0; i < action_dim; ++i) {
    if (!(action_low[i] < action_high[i])) throw ConfigError("action low must be below action high");
  }
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (max_steps < 1) throw ConfigError("max_steps must be at least 1");
}

std::vector<double> clip_action(const EnvSpec& spec, std::span<const double> action) {
  std::vector<double> a(action.begin(), action.end());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::clamp(a[i], spec.action_low[i], spec.action_high[i]);
  return a;
}

double pendulum_angle(std::span<const double> state) { return std::atan2(state[1], state[0]); }

EnvState reset(const EnvSpec& spec, RngStream& rng) {
  EnvState s;
  if (spec.kind == EnvKind::double_integrator_2d) {
    const double r = spec.init_position_range;
    const double px = rng.uniform(-r, r);
    const double py = rng.uniform(-r, r);
    s.values = {px, py, 0.0, 0.0};
  } else {
    const double th = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const double w = rng.uniform(-1.0, 1.0);
    s.values = {std::cos(th), std::sin(th), w};
  }
  return s;
}

StepResult step(const EnvSpec& spec, const EnvState& s, std::span<const double> action) {
  if (static_cast<int>(action.size()) != spec.action_dim) {
    throw InvalidAction("action has " + std::to_string(action.size()) + " entries, expected " +
                        std::to_string(spec.action_dim));
  }
  for (double v : action) {
    if (!std::isfinite(v)) throw InvalidAction("non-finite action");
  }
  const std::vector<double> a = clip_action(spec, action);
  StepResult r = spec.kind == EnvKind::double_integrator_2d ? step_double_integrator(spec, s, a)
                                                            : step_pendulum(spec, s, a);
  r.next_state.step_index = s.step_index + 1;
  if (r.done_reason == DoneReason::none && r.next_state.step_index >= spec.max_steps) {
    r.done_reason = DoneReason::time_limit;
  }
  r.done = r.done_reason != DoneReason::none;
  return r;
}

std::vector<double> expert_action(const EnvSpec& spec, const EnvState& s) {
  return spec.kind == EnvKind::double_integrator_2d ? expert_double_integrator(spec, s)
                                                    : expert_pendulum(spec, s);
}

std::vector<double> scripted_controller(Tier tier, const EnvSpec& spec, const EnvState& s, RngStream& rng,
                                        const MediumParams& medium) {
  std::vector<double> a = expert_action(spec, s);
  if (tier == Tier::expert) return a;
  for (double& v : a) {
    v *= medium.gain;
    if (medium.noise_std > 0.0) v += medium.noise_std * rng.normal();
  }
  return clip_action(spec, a);
}

std::vector<double> random_action(const EnvSpec& spec, RngStream& rng) {
  std::vector<double> a(static_cast<std::size_t>(spec.action_dim));
  for (int i = 0; i < spec.action_dim; ++i) a[i] = rng.uniform(spec.action_low[i], spec.action_high[i]);
  return a;
}

}  // namespace adaplan::env
