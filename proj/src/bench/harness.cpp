#include "adaplan/bench/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "adaplan/errors.hpp"

namespace adaplan::bench {
namespace {

using Clock = std::chrono::steady_clock;

std::string spec_key(const env::EnvSpec& s) {
  std::ostringstream k;
  k.precision(17);
  k << s.name << '|' << s.dt << '|' << s.max_steps << '|' << s.goal[0] << ',' << s.goal[1] << '|' << s.position_bound
    << '|' << s.absorbing_terminal << '|' << s.init_position_range << '|' << s.expert_kp << '|' << s.expert_kd << '|'
    << s.gravity << '|' << s.length << '|' << s.mass << '|' << s.max_speed << '|' << s.catch_cos << '|' << s.catch_kp
    << '|' << s.catch_kd << '|' << s.swing_gain;
  for (double v : s.action_low) k << '|' << v;
  for (double v : s.action_high) k << '|' << v;
  return k.str();
}

template <typename Policy>
double rollout_return(const env::EnvSpec& spec, RngStream& rng, Policy&& act) {
  RngStream reset_rng = rng.split(0);
  RngStream action_rng = rng.split(1);
  env::EnvState s = env::reset(spec, reset_rng);
  double total = 0.0;
  while (true) {
    env::StepResult r = env::step(spec, s, act(s, action_rng));
    total += r.reward;
    s = std::move(r.next_state);
    if (r.done) return total;
  }
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n == 0) return std::nan("");
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void check_env(const RunConfig& cfg, const std::string& dataset_env) {
  if (dataset_env != cfg.env.name) {
    throw ConfigError("dataset was generated for '" + dataset_env + "' but the config selects '" + cfg.env.name + "'");
  }
}

struct Window {
  double seconds = 0.0;
  int plans = 0;
};

// Executes exactly `steps` control steps, chaining episodes from `first_seed`.
Window timed_window(const RunConfig& cfg, const Models& models, policy::PolicyConfig pcfg, std::uint64_t first_seed,
                    int steps) {
  Window w;
  int done = 0;
  std::uint64_t seed = first_seed;
  while (done < steps) {
    pcfg.max_steps = std::min(cfg.env.max_steps, steps - done);
    RngStream rng(seed++, kEpisodeStream);
    const auto t0 = Clock::now();
    const policy::EpisodeTrace tr = policy::run_episode(cfg.env, models.diffusion, models.ensemble, pcfg, rng);
    w.seconds += std::chrono::duration<double>(Clock::now() - t0).count();
    w.plans += tr.plans;
    done += tr.steps;
  }
  return w;
}

}  // namespace

ReferenceReturns reference_returns(const env::EnvSpec& spec) {
  static std::mutex mu;
  static std::map<std::string, ReferenceReturns> cache;
  const std::string key = spec_key(spec);
  {
    std::lock_guard<std::mutex> lock(mu);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  std::vector<double> random_returns;
  std::vector<double> expert_returns;
  for (int i = 0; i < kReferenceEpisodes; ++i) {
    RngStream a(static_cast<std::uint64_t>(i), kReferenceStream);
    random_returns.push_back(
        rollout_return(spec, a, [&](const env::EnvState&, RngStream& r) { return env::random_action(spec, r); }));
    RngStream b(static_cast<std::uint64_t>(i), kReferenceStream);
    expert_returns.push_back(
        rollout_return(spec, b, [&](const env::EnvState& s, RngStream&) { return env::expert_action(spec, s); }));
  }
  const ReferenceReturns ref{mean(random_returns), mean(expert_returns)};
  std::lock_guard<std::mutex> lock(mu);
  cache.emplace(key, ref);
  return ref;
}

double normalized_return(double R, double R_random, double R_expert) {
  if (!(R_expert > R_random)) throw ConfigError("reference returns are degenerate (expert does not beat random)");
  return 100.0 * (R - R_random) / (R_expert - R_random);
}

data::OfflineDataset gen_data(const RunConfig& cfg) {
  RngStream rng(cfg.seed, kDataStream);
  data::OfflineDataset ds =
      data::generate_dataset(cfg.env, cfg.dataset.tier, cfg.dataset.episodes, rng, cfg.dataset.recipe);
  std::filesystem::create_directories(std::filesystem::absolute(cfg.dataset.path).parent_path());
  data::save_dataset(cfg.dataset.path, ds);
  return ds;
}

diffusion::DiffusionModel train_diffusion_stage(const RunConfig& cfg) {
  const data::OfflineDataset ds = data::load_dataset(cfg.dataset.path);
  check_env(cfg, ds.env_name);
  RngStream rng(cfg.seed, kDiffusionStream);
  diffusion::DiffusionModel model = diffusion::train_diffusion(ds, cfg.diffusion.horizon, cfg.diffusion.K,
                                                               cfg.diffusion.schedule, cfg.diffusion.train, rng);
  std::filesystem::create_directories(std::filesystem::absolute(cfg.diffusion.checkpoint).parent_path());
  diffusion::save_diffusion(cfg.diffusion.checkpoint, model);
  return model;
}

ensemble::Ensemble train_ensemble_stage(const RunConfig& cfg) {
  const data::OfflineDataset ds = data::load_dataset(cfg.dataset.path);
  check_env(cfg, ds.env_name);
  RngStream rng(cfg.seed, kEnsembleStream);
  ensemble::Ensemble ens =
      ensemble::train_ensemble(ds, cfg.ensemble.loss, cfg.ensemble.members, cfg.ensemble.train, rng);
  ens.reduction = cfg.ensemble.reduction;
  std::filesystem::create_directories(std::filesystem::absolute(cfg.ensemble.checkpoint).parent_path());
  ensemble::save_ensemble(cfg.ensemble.checkpoint, ens, cfg.seed);
  return ens;
}

Models load_models(const RunConfig& cfg) {
  Models m{diffusion::load_diffusion(cfg.diffusion.checkpoint), ensemble::load_ensemble(cfg.ensemble.checkpoint)};
  m.ensemble.reduction = cfg.ensemble.reduction;
  return m;
}

int episode_threads() {
  if (const char* v = std::getenv("ADAPLAN_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (end == v || *end != '\0' || n < 1) throw ConfigError("ADAPLAN_THREADS must be a positive integer");
    return static_cast<int>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<policy::EpisodeTrace> run_seeds(const RunConfig& cfg, const Models& models,
                                            const policy::PolicyConfig& pcfg, int n_seeds, int threads) {
  if (n_seeds < 1) throw ConfigError("at least one seed is required");
  std::vector<policy::EpisodeTrace> traces(static_cast<std::size_t>(n_seeds));
  auto run_one = [&](int i) {
    RngStream rng(cfg.seed + static_cast<std::uint64_t>(i), kEpisodeStream);
    traces[static_cast<std::size_t>(i)] = policy::run_episode(cfg.env, models.diffusion, models.ensemble, pcfg, rng);
  };
  const int workers = std::clamp(threads, 1, n_seeds);
  if (workers == 1) {
    for (int i = 0; i < n_seeds; ++i) run_one(i);
    return traces;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n_seeds; i = next++) {
        try {
          run_one(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return traces;
}

MetricsRow summarize(const RunConfig& cfg, const Models& models, const policy::PolicyConfig& pcfg,
                     const std::vector<policy::EpisodeTrace>& traces, bool timed) {
  if (traces.empty()) throw ConfigError("cannot summarise zero episodes");
  const ReferenceReturns ref = reference_returns(cfg.env);
  MetricsRow row;
  row.env = cfg.env.name;
  row.tier = data::to_string(cfg.dataset.tier);
  row.mode = policy::to_string(pcfg.mode);
  switch (pcfg.mode) {
    case policy::PolicyMode::adaptive:
      row.delta = pcfg.delta;
      break;
    case policy::PolicyMode::always_replan:
      row.delta = 0.0;
      break;
    case policy::PolicyMode::static_plan:
      row.delta = std::nan("");
      break;
  }
  row.M = static_cast<int>(models.ensemble.size());
  row.loss = ensemble::to_string(models.ensemble.loss_kind());
  row.seeds = static_cast<int>(traces.size());

  std::vector<double> returns, saved, plans, secs;
  for (const policy::EpisodeTrace& tr : traces) {
    returns.push_back(normalized_return(tr.episode_return, ref.random, ref.expert));
    saved.push_back(policy::saved_nfe_fraction(tr));
    plans.push_back(static_cast<double>(tr.plans));
    if (tr.steps > 0) secs.push_back(100.0 * tr.seconds_total / tr.steps);
  }
  row.return_mean = mean(returns);
  double var = 0.0;
  for (double r : returns) var += (r - row.return_mean) * (r - row.return_mean);
  row.return_std = std::sqrt(var / static_cast<double>(returns.size()));
  row.saved_nfe = mean(saved);
  row.plans_mean = mean(plans);
  row.secs_per_100_steps = timed ? mean(secs) : std::nan("");
  return row;
}

MetricsRow evaluate(const RunConfig& cfg, const Models& models, int n_seeds) {
  const int threads = cfg.eval.timing ? 1 : episode_threads();
  const auto traces = run_seeds(cfg, models, cfg.policy, n_seeds, threads);
  return summarize(cfg, models, cfg.policy, traces, cfg.eval.timing);
}

std::vector<MetricsRow> sweep_delta(const RunConfig& cfg, const Models& models, const std::vector<double>& deltas) {
  if (deltas.empty()) throw ConfigError("the delta list is empty");
  std::vector<MetricsRow> rows;
  for (double d : deltas) {
    RunConfig c = cfg;
    c.policy.mode = policy::PolicyMode::adaptive;
    c.policy.delta = d;
    rows.push_back(evaluate(c, models, cfg.eval.seeds));
  }
  return rows;
}

std::vector<MetricsRow> ablate_members(const RunConfig& cfg, const Models& models, const std::vector<int>& m_list) {
  if (m_list.empty()) throw ConfigError("the member list is empty");
  for (int m : m_list) {
    if (m < 1 || static_cast<std::size_t>(m) > models.ensemble.size()) {
      throw ConfigError("cannot evaluate " + std::to_string(m) + " members from a pool of " +
                        std::to_string(models.ensemble.size()));
    }
  }
  std::vector<MetricsRow> rows;
  for (int m : m_list) {
    Models sub{models.diffusion, models.ensemble.prefix(static_cast<std::size_t>(m))};
    RunConfig c = cfg;
    if (m == 1) c.policy.mode = policy::PolicyMode::always_replan;
    rows.push_back(evaluate(c, sub, cfg.eval.seeds));
  }
  return rows;
}

TimingReport bench_time(const RunConfig& cfg, const Models& models) {
  TimingReport rep;
  rep.steps = cfg.eval.bench_steps;
  rep.repetitions = cfg.eval.bench_repetitions;
  rep.delta = cfg.policy.delta;

  policy::PolicyConfig always = cfg.policy;
  always.mode = policy::PolicyMode::always_replan;
  policy::PolicyConfig adaptive = cfg.policy;
  adaptive.mode = policy::PolicyMode::adaptive;

  timed_window(cfg, models, always, cfg.seed, rep.steps);
  timed_window(cfg, models, adaptive, cfg.seed, rep.steps);

  std::vector<int> always_plans, adaptive_plans;
  for (int r = 1; r <= rep.repetitions; ++r) {
    const std::uint64_t first = cfg.seed + 1000 * static_cast<std::uint64_t>(r);
    const Window a = timed_window(cfg, models, always, first, rep.steps);
    const Window b = timed_window(cfg, models, adaptive, first, rep.steps);
    rep.always_replan_samples.push_back(a.seconds);
    rep.adaptive_samples.push_back(b.seconds);
    always_plans.push_back(a.plans);
    adaptive_plans.push_back(b.plans);
  }
  rep.always_replan_seconds = median(rep.always_replan_samples);
  rep.adaptive_seconds = median(rep.adaptive_samples);
  rep.ratio = rep.always_replan_seconds / rep.adaptive_seconds;
  std::sort(always_plans.begin(), always_plans.end());
  std::sort(adaptive_plans.begin(), adaptive_plans.end());
  rep.always_replan_plans = always_plans[always_plans.size() / 2];
  rep.adaptive_plans = adaptive_plans[adaptive_plans.size() / 2];
  return rep;
}

}  // namespace adaplan::bench
