#include "adaplan/policy/policy.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstring>
#include <ostream>

#include "adaplan/errors.hpp"

namespace adaplan::policy {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::vector<double> row(const Eigen::MatrixXd& m, Eigen::Index r) {
  std::vector<double> v(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) v[static_cast<std::size_t>(c)] = m(r, c);
  return v;
}

bool same_bits(double a, double b) {
  if (std::isnan(a) && std::isnan(b)) return true;
  return std::memcmp(&a, &b, sizeof(double)) == 0;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!same_bits(a[i], b[i])) return false;
  }
  return true;
}

class EpisodeRunner {
 public:
  EpisodeRunner(const env::EnvSpec& spec, const diffusion::DiffusionModel& diffusion,
                const ensemble::Ensemble& ensemble, RngStream& rng)
      : spec_(spec), diffusion_(diffusion), ensemble_(ensemble), plan_rng_(rng.split(1)) {
    RngStream reset_rng = rng.split(0);
    state_ = env::reset(spec_, reset_rng);
    trace_.seed = rng.seed();
    trace_.stream_id = rng.stream_id();
  }

  bool done() const { return done_; }
  const env::EnvState& state() const { return state_; }

  diffusion::Plan sample() {
    const auto t0 = Clock::now();
    diffusion::Plan plan = diffusion::sample_plan(diffusion_, state_.values, plan_rng_);
    trace_.seconds_diffusion += seconds_since(t0);
    trace_.plans += 1;
    trace_.nfe_total += plan.nfe;
    trace_.plan_lengths.push_back(0);
    for (int d = 0; d < spec_.state_dim; ++d) {
      trace_.max_pin_error = std::max(trace_.max_pin_error, std::abs(plan.states(0, d) - state_.values[d]));
    }
    return plan;
  }

  ensemble::ActionPrediction predict(const std::vector<double>& s, const std::vector<double>& s_next) {
    const auto t0 = Clock::now();
    ensemble::ActionPrediction p = ensemble::predict(ensemble_, s, s_next);
    trace_.seconds_ensemble += seconds_since(t0);
    return p;
  }

  void execute(const std::vector<double>& action, double u, bool replanned) {
    env::StepResult r = env::step(spec_, state_, action);
    trace_.states.push_back(state_.values);
    trace_.actions.push_back(env::clip_action(spec_, action));
    trace_.rewards.push_back(r.reward);
    trace_.u.push_back(u);
    trace_.replanned.push_back(replanned);
    trace_.steps += 1;
    trace_.episode_return += r.reward;
    trace_.plan_lengths.back() += 1;
    state_ = std::move(r.next_state);
    if (r.done) {
      done_ = true;
      trace_.done_reason = r.done_reason;
    }
  }

  EpisodeTrace finish(Clock::time_point started) {
    trace_.seconds_total = seconds_since(started);
    return std::move(trace_);
  }

 private:
  const env::EnvSpec& spec_;
  const diffusion::DiffusionModel& diffusion_;
  const ensemble::Ensemble& ensemble_;
  RngStream plan_rng_;
  env::EnvState state_;
  bool done_ = false;
  EpisodeTrace trace_;
};

void run_gated(EpisodeRunner& runner, int horizon, double delta) {
  while (!runner.done()) {
    diffusion::Plan plan = runner.sample();
    ensemble::ActionPrediction pred = runner.predict(row(plan.states, 0), row(plan.states, 1));
    int executed = 0;
    while (true) {
      runner.execute(pred.action, pred.u, executed == 0);
      ++executed;
      if (runner.done() || executed >= horizon - 1) break;
      // The observation replaces the plan slot just reached.
      plan.states.row(executed) =
          Eigen::Map<const Eigen::RowVectorXd>(runner.state().values.data(), plan.states.cols());
      pred = runner.predict(runner.state().values, row(plan.states, executed + 1));
      if (!(pred.u < delta)) break;
    }
  }
}

void run_static(EpisodeRunner& runner, int horizon) {
  while (!runner.done()) {
    const diffusion::Plan plan = runner.sample();
    std::vector<ensemble::ActionPrediction> preds;
    preds.reserve(static_cast<std::size_t>(horizon - 1));
    for (int i = 0; i + 1 < horizon; ++i) preds.push_back(runner.predict(row(plan.states, i), row(plan.states, i + 1)));
    for (int i = 0; i + 1 < horizon && !runner.done(); ++i) {
      const double u = i == 0 ? preds[0].u : std::nan("");
      runner.execute(preds[static_cast<std::size_t>(i)].action, u, i == 0);
    }
  }
}

nlohmann::json nullable(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

std::string to_string(PolicyMode m) {
  switch (m) {
    case PolicyMode::adaptive:
      return "adaptive";
    case PolicyMode::always_replan:
      return "always_replan";
    case PolicyMode::static_plan:
      return "static";
  }
  return "unknown";
}

PolicyMode mode_from_string(const std::string& name) {
  if (name == "adaptive") return PolicyMode::adaptive;
  if (name == "always_replan") return PolicyMode::always_replan;
  if (name == "static") return PolicyMode::static_plan;
  throw ConfigError("unknown policy mode '" + name + "'");
}

bool EpisodeTrace::same_behaviour(const EpisodeTrace& o) const {
  if (states.size() != o.states.size() || actions.size() != o.actions.size()) return false;
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (!same_bits(states[i], o.states[i]) || !same_bits(actions[i], o.actions[i])) return false;
  }
  return same_bits(rewards, o.rewards) && same_bits(u, o.u) && replanned == o.replanned &&
         plan_lengths == o.plan_lengths && steps == o.steps && plans == o.plans && nfe_total == o.nfe_total &&
         same_bits(episode_return, o.episode_return) && done_reason == o.done_reason && seed == o.seed &&
         stream_id == o.stream_id;
}

EpisodeTrace run_episode(const env::EnvSpec& spec, const diffusion::DiffusionModel& diffusion,
                         const ensemble::Ensemble& ensemble, const PolicyConfig& cfg, RngStream& rng) {
  const auto started = Clock::now();
  if (diffusion.state_dim != spec.state_dim || ensemble.state_dim() != spec.state_dim) {
    throw ConfigError("model state dimension does not match environment '" + spec.name + "'");
  }
  if (ensemble.action_dim() != spec.action_dim) {
    throw ConfigError("ensemble action dimension does not match environment '" + spec.name + "'");
  }
  if (diffusion.horizon < 2) throw ConfigError("plan horizon must be at least 2");
  if (cfg.horizon != 0 && cfg.horizon != diffusion.horizon) {
    throw ConfigError("policy horizon " + std::to_string(cfg.horizon) + " differs from the model's " +
                      std::to_string(diffusion.horizon));
  }
  if (cfg.K != 0 && cfg.K != diffusion.schedule.K) {
    throw ConfigError("policy K " + std::to_string(cfg.K) + " differs from the model's " +
                      std::to_string(diffusion.schedule.K));
  }
  if (cfg.mode == PolicyMode::adaptive && (std::isnan(cfg.delta) || cfg.delta < 0.0)) {
    throw ConfigError("delta must be non-negative");
  }

  env::EnvSpec episode_spec = spec;
  if (cfg.max_steps > 0) episode_spec.max_steps = cfg.max_steps;
  EpisodeRunner runner(episode_spec, diffusion, ensemble, rng);
  switch (cfg.mode) {
    case PolicyMode::adaptive:
      run_gated(runner, diffusion.horizon, cfg.delta);
      break;
    case PolicyMode::always_replan:
      run_gated(runner, diffusion.horizon, 0.0);
      break;
    case PolicyMode::static_plan:
      run_static(runner, diffusion.horizon);
      break;
  }
  return runner.finish(started);
}

double saved_nfe_fraction(const EpisodeTrace& trace) {
  if (trace.steps == 0) return 0.0;
  return 1.0 - static_cast<double>(trace.plans) / static_cast<double>(trace.steps);
}

void write_trace_jsonl(std::ostream& out, const EpisodeTrace& trace) {
  for (int i = 0; i < trace.steps; ++i) {
    const auto k = static_cast<std::size_t>(i);
    nlohmann::json line = {{"t", i},
                           {"state", trace.states[k]},
                           {"action", trace.actions[k]},
                           {"reward", trace.rewards[k]},
                           {"u", nullable(trace.u[k])},
                           {"replanned", static_cast<bool>(trace.replanned[k])}};
    out << line.dump() << '\n';
  }
  nlohmann::json summary = {{"summary",
                             {{"steps", trace.steps},
                              {"plans", trace.plans},
                              {"nfe_total", trace.nfe_total},
                              {"return", trace.episode_return},
                              {"saved_nfe", saved_nfe_fraction(trace)},
                              {"done_reason", env::to_string(trace.done_reason)},
                              {"plan_lengths", trace.plan_lengths},
                              {"seed", trace.seed},
                              {"stream_id", trace.stream_id},
                              {"seconds_total", trace.seconds_total},
                              {"seconds_diffusion", trace.seconds_diffusion},
                              {"seconds_ensemble", trace.seconds_ensemble}}}};
  out << summary.dump() << '\n';
}

}  // namespace adaplan::policy
