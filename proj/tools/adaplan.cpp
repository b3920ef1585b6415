// adaplan: data generation, training and evaluation front end.
//
// Exit status: 0 success, 1 usage or configuration error, 2 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "adaplan/bench/config.hpp"
#include "adaplan/bench/harness.hpp"
#include "adaplan/bench/report.hpp"
#include "adaplan/errors.hpp"

namespace {

using namespace adaplan;

struct Invocation {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

CLI::App* add_command(CLI::App& app, const std::string& name, const std::string& help, Invocation& inv) {
  CLI::App* sub = app.add_subcommand(name, help);
  sub->add_option("--config", inv.config, "TOML run configuration")->required();
  sub->add_option("--seed", inv.seed, "master seed (overrides the config)");
  sub->add_option("overrides", inv.overrides, "section.key=value overrides");
  return sub;
}

bench::RunConfig configure(const Invocation& inv, bench::Stage stage) {
  bench::RunConfig cfg = bench::load_config(inv.config, inv.overrides, inv.seed);
  bench::require_inputs(cfg, stage);
  return cfg;
}

int cmd_gen_data(const Invocation& inv) {
  const bench::RunConfig cfg = configure(inv, bench::Stage::gen_data);
  const data::OfflineDataset ds = bench::gen_data(cfg);
  std::printf("wrote %s: %s %s, %zu episodes, %lld transitions\n", cfg.dataset.path.string().c_str(),
              ds.env_name.c_str(), data::to_string(ds.tier).c_str(), ds.records.size(),
              static_cast<long long>(ds.total_steps));
  return 0;
}

int cmd_train_diffusion(const Invocation& inv) {
  const bench::RunConfig cfg = configure(inv, bench::Stage::train_diffusion);
  const diffusion::DiffusionModel model = bench::train_diffusion_stage(cfg);
  std::printf("step,train_loss,heldout_loss\n");
  for (std::size_t i = 0; i < model.curve.step.size(); ++i) {
    std::printf("%d,%.6f,%.6f\n", model.curve.step[i], model.curve.train[i], model.curve.heldout[i]);
  }
  std::printf("wrote %s\n", cfg.diffusion.checkpoint.string().c_str());
  return 0;
}

int cmd_train_ensemble(const Invocation& inv) {
  const bench::RunConfig cfg = configure(inv, bench::Stage::train_ensemble);
  const ensemble::Ensemble ens = bench::train_ensemble_stage(cfg);
  std::printf("wrote %s: %zu %s members\n", cfg.ensemble.checkpoint.string().c_str(), ens.size(),
              ensemble::to_string(ens.loss_kind()).c_str());
  return 0;
}

void emit(const std::filesystem::path& path, const std::vector<bench::MetricsRow>& rows) {
  bench::write_csv(path, rows);
  bench::write_csv(std::cout, rows);
}

int cmd_eval(const Invocation& inv) {
  const bench::RunConfig cfg = configure(inv, bench::Stage::evaluate);
  const bench::Models models = bench::load_models(cfg);
  const int threads = cfg.eval.timing ? 1 : bench::episode_threads();
  const auto traces = bench::run_seeds(cfg, models, cfg.policy, cfg.eval.seeds, threads);
  if (cfg.eval.traces) {
    std::filesystem::create_directories(*cfg.eval.traces);
    for (const policy::EpisodeTrace& tr : traces) {
      const auto path = *cfg.eval.traces / ("seed_" + std::to_string(tr.seed) + ".jsonl");
      std::ofstream out(path);
      if (!out) throw FileError("cannot write '" + path.string() + "'");
      policy::write_trace_jsonl(out, tr);
    }
  }
  emit(cfg.eval.output, {bench::summarize(cfg, models, cfg.policy, traces, cfg.eval.timing)});
  return 0;
}

int cmd_sweep_delta(const Invocation& inv) {
  const bench::RunConfig cfg = configure(inv, bench::Stage::evaluate);
  const bench::Models models = bench::load_models(cfg);
  const auto rows = bench::sweep_delta(cfg, models, cfg.eval.deltas);
  bench::write_text(cfg.eval.plot, bench::plot_json(rows));
  emit(cfg.eval.output, rows);
  return 0;
}

int cmd_ablate_members(const Invocation& inv) {
  const bench::RunConfig cfg = configure(inv, bench::Stage::evaluate);
  const bench::Models models = bench::load_models(cfg);
  emit(cfg.eval.output, bench::ablate_members(cfg, models, cfg.eval.members));
  return 0;
}

int cmd_bench_time(const Invocation& inv) {
  const bench::RunConfig cfg = configure(inv, bench::Stage::evaluate);
  const bench::Models models = bench::load_models(cfg);
  const bench::TimingReport rep = bench::bench_time(cfg, models);
  const std::string text = bench::timing_json(rep);
  bench::write_text(cfg.eval.bench_output, text);
  std::cout << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive replanning with a diffusion planner and an action ensemble"};
  app.require_subcommand(1);
  Invocation inv;
  struct Command {
    CLI::App* sub;
    int (*run)(const Invocation&);
  };
  const std::vector<Command> commands{
      {add_command(app, "gen-data", "generate an offline dataset", inv), cmd_gen_data},
      {add_command(app, "train-diffusion", "train the diffusion planner", inv), cmd_train_diffusion},
      {add_command(app, "train-ensemble", "train the action ensemble", inv), cmd_train_ensemble},
      {add_command(app, "eval", "evaluate the configured policy over seeds", inv), cmd_eval},
      {add_command(app, "sweep-delta", "evaluate adaptive replanning over eval.deltas", inv), cmd_sweep_delta},
      {add_command(app, "ablate-members", "evaluate ensemble prefixes of sizes eval.members", inv), cmd_ablate_members},
      {add_command(app, "bench-time", "time always-replan against adaptive control", inv), cmd_bench_time},
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    for (const Command& c : commands) {
      if (c.sub->parsed()) return c.run(inv);
    }
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
