#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "adaplan/env/env.hpp"
#include "adaplan/errors.hpp"

using namespace adaplan;
using env::EnvSpec;
using env::EnvState;

namespace {

EnvState at(std::vector<double> v, int step = 0) { return EnvState{std::move(v), step}; }

// Return of one scripted-controller episode.
double rollout(const EnvSpec& spec, env::Tier tier, RngStream rng, double* final_dist = nullptr) {
  RngStream reset_rng = rng.split(0), act_rng = rng.split(1);
  EnvState s = env::reset(spec, reset_rng);
  double ret = 0.0;
  for (;;) {
    const auto a = env::scripted_controller(tier, spec, s, act_rng);
    const auto r = env::step(spec, s, a);
    ret += r.reward;
    s = r.next_state;
    if (r.done) break;
  }
  if (final_dist) *final_dist = std::hypot(s.values[0] - spec.goal[0], s.values[1] - spec.goal[1]);
  return ret;
}

}  // namespace

TEST_CASE("double integrator hand steps") {
  const EnvSpec spec = EnvSpec::double_integrator_2d();
  auto r = env::step(spec, at({0, 0, 0, 0}), std::vector<double>{0, 0});
  CHECK(r.next_state.values == std::vector<double>{0, 0, 0, 0});
  CHECK(r.reward == doctest::Approx(-std::sqrt(2.0)).epsilon(1e-12));
  CHECK(r.next_state.step_index == 1);
  CHECK_FALSE(r.done);

  r = env::step(spec, at({0, 0, 0, 0}), std::vector<double>{1, 0});
  CHECK(r.next_state.values == std::vector<double>{0, 0, 0.05, 0});

  r = env::step(spec, at({1, 1, 0, 0}), std::vector<double>{0, 0});
  CHECK(r.reward == 0.0);
}

TEST_CASE("actions are clipped, not rejected") {
  const EnvSpec spec = EnvSpec::double_integrator_2d();
  const auto big = env::step(spec, at({0, 0, 0, 0}), std::vector<double>{5, -7});
  const auto clipped = env::step(spec, at({0, 0, 0, 0}), std::vector<double>{1, -1});
  CHECK(big.next_state == clipped.next_state);
  CHECK(big.reward == clipped.reward);
}

TEST_CASE("invalid actions") {
  const EnvSpec spec = EnvSpec::double_integrator_2d();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(env::step(spec, at({0, 0, 0, 0}), std::vector<double>{nan, 0}), InvalidAction);
  CHECK_THROWS_AS(env::step(spec, at({0, 0, 0, 0}), std::vector<double>{0}), InvalidAction);
}

TEST_CASE("out of bounds terminates and absorbs the remaining steps") {
  EnvSpec spec = EnvSpec::double_integrator_2d();
  const auto r = env::step(spec, at({1.99, 0, 1.0, 0}, 150), std::vector<double>{0, 0});
  CHECK(r.done);
  CHECK(r.done_reason == env::DoneReason::out_of_bounds);
  const double d = std::hypot(2.04 - 1.0, 0.0 - 1.0);
  CHECK(r.reward == doctest::Approx(-d * 50).epsilon(1e-12));

  spec.absorbing_terminal = false;
  CHECK(env::step(spec, at({1.99, 0, 1.0, 0}, 150), std::vector<double>{0, 0}).reward ==
        doctest::Approx(-d).epsilon(1e-12));
}

TEST_CASE("time limit fires exactly at max_steps") {
  const EnvSpec spec = EnvSpec::pendulum_swingup();
  RngStream rng(3, 0);
  EnvState s = env::reset(spec, rng);
  int steps = 0;
  for (;;) {
    const auto r = env::step(spec, s, std::vector<double>{0.3});
    ++steps;
    s = r.next_state;
    if (r.done) {
      CHECK(r.done_reason == env::DoneReason::time_limit);
      break;
    }
    REQUIRE(r.done_reason == env::DoneReason::none);
  }
  CHECK(steps == spec.max_steps);
}

TEST_CASE("pendulum upright equilibrium") {
  const EnvSpec spec = EnvSpec::pendulum_swingup();
  const auto r = env::step(spec, at({1, 0, 0}), std::vector<double>{0});
  CHECK(r.reward == 0.0);
  CHECK(r.next_state.values == std::vector<double>{1, 0, 0});
}

TEST_CASE("pendulum falls away from upright and respects max_speed") {
  const EnvSpec spec = EnvSpec::pendulum_swingup();
  const double th = 0.1;
  auto r = env::step(spec, at({std::cos(th), std::sin(th), 0}), std::vector<double>{0});
  CHECK(r.next_state.values[2] > 0.0);
  r = env::step(spec, at({std::cos(th), std::sin(th), 7.99}), std::vector<double>{2});
  CHECK(r.next_state.values[2] == spec.max_speed);
}

TEST_CASE("reset distribution") {
  const EnvSpec spec = EnvSpec::double_integrator_2d();
  RngStream a(4, 0), b(4, 0);
  CHECK(env::reset(spec, a) == env::reset(spec, b));

  RngStream rng(5, 0);
  double mx = 0, my = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto s = env::reset(spec, rng);
    CHECK(std::abs(s.values[0]) <= 0.2);
    CHECK(std::abs(s.values[1]) <= 0.2);
    CHECK(s.values[2] == 0.0);
    CHECK(s.values[3] == 0.0);
    CHECK(s.step_index == 0);
    mx += s.values[0];
    my += s.values[1];
  }
  CHECK(std::abs(mx / n) < 0.02);
  CHECK(std::abs(my / n) < 0.02);
}

TEST_CASE("steps are bitwise deterministic") {
  RngStream rng(6, 0);
  for (const EnvSpec& spec : {EnvSpec::double_integrator_2d(), EnvSpec::pendulum_swingup()}) {
    for (int i = 0; i < 200; ++i) {
      EnvState s = env::reset(spec, rng);
      const auto a = env::random_action(spec, rng);
      const auto r1 = env::step(spec, s, a);
      const auto r2 = env::step(spec, s, a);
      CHECK(r1.next_state == r2.next_state);
      CHECK(r1.reward == r2.reward);
    }
  }
}

TEST_CASE("rewards are non-positive") {
  RngStream rng(7, 0);
  for (const EnvSpec& spec : {EnvSpec::double_integrator_2d(), EnvSpec::pendulum_swingup()}) {
    for (int i = 0; i < 2000; ++i) {
      std::vector<double> v;
      if (spec.kind == env::EnvKind::double_integrator_2d) {
        v = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      } else {
        const double th = rng.uniform(-std::numbers::pi, std::numbers::pi);
        v = {std::cos(th), std::sin(th), rng.uniform(-8, 8)};
      }
      CHECK(env::step(spec, at(v), env::random_action(spec, rng)).reward <= 0.0);
    }
  }
}

TEST_CASE("scripted controllers") {
  const EnvSpec spec = EnvSpec::double_integrator_2d();
  CHECK(env::expert_action(spec, at({1, 1, 0, 0})) == std::vector<double>{0, 0});
  RngStream rng(8, 0);
  const auto a = env::scripted_controller(env::Tier::medium, spec, at({0, 0, 0, 0}), rng, {0.4, 0.0});
  CHECK(a[0] == doctest::Approx(0.4));
  CHECK(a[1] == doctest::Approx(0.4));
  for (int i = 0; i < 100; ++i) {
    const auto m = env::scripted_controller(env::Tier::medium, spec, at({-2, 2, 1, -1}), rng);
    CHECK(std::abs(m[0]) <= 1.0);
    CHECK(std::abs(m[1]) <= 1.0);
  }
}

TEST_CASE("double integrator expert reaches the goal from every start") {
  const EnvSpec spec = EnvSpec::double_integrator_2d();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    RngStream rng(seed, 0);
    RngStream reset_rng = rng.split(0);
    EnvState s = env::reset(spec, reset_rng);
    bool reached = false;
    for (int t = 0; t < spec.max_steps && !reached; ++t) {
      s = env::step(spec, s, env::expert_action(spec, s)).next_state;
      reached = std::hypot(s.values[0] - 1.0, s.values[1] - 1.0) < 0.1;
    }
    CHECK(reached);
  }
}

TEST_CASE("pendulum expert swings up") {
  const EnvSpec spec = EnvSpec::pendulum_swingup();
  int upright = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    RngStream rng(seed, 0);
    EnvState s = env::reset(spec, rng);
    for (int t = 0; t < spec.max_steps; ++t) s = env::step(spec, s, env::expert_action(spec, s)).next_state;
    upright += std::cos(env::pendulum_angle(s.values)) > 0.95 ? 1 : 0;
  }
  CHECK(upright >= 95);
}

TEST_CASE("expert outscores medium") {
  for (const EnvSpec& spec : {EnvSpec::double_integrator_2d(), EnvSpec::pendulum_swingup()}) {
    double expert = 0.0, medium = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      expert += rollout(spec, env::Tier::expert, RngStream(seed, 1));
      medium += rollout(spec, env::Tier::medium, RngStream(seed, 1));
    }
    CAPTURE(spec.name);
    CHECK(expert > medium);
  }
}

TEST_CASE("EnvSpec validation and lookup") {
  CHECK(EnvSpec::by_name("pendulum_swingup").state_dim == 3);
  CHECK_THROWS_AS(EnvSpec::by_name("hopper"), ConfigError);
  EnvSpec bad = EnvSpec::double_integrator_2d();
  CHECK_NOTHROW(bad.validate());
  bad.dt = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = EnvSpec::double_integrator_2d();
  bad.action_low[0] = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = EnvSpec::double_integrator_2d();
  bad.max_steps = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
