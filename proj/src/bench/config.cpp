#include "adaplan/bench/config.hpp"

#include <toml.hpp>

#include <cmath>
#include <limits>
#include <fstream>
#include <set>
#include <sstream>

#include "adaplan/errors.hpp"

namespace adaplan::bench {
namespace {

// Reads the keys of one TOML table, remembering which were consumed so that
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

  bool has(const std::string& key) const { return table_ != nullptr && table_->contains(key); }

  std::string qualified(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  void get(const std::string& key, double& out) {
    if (const toml::node* n = take(key)) {
      if (auto v = n->value<double>()) {
        out = *v;
      } else {
        fail(key, "a number");
      }
    }
  }

  void get(const std::string& key, int& out) {
    if (const toml::node* n = take(key)) {
      auto v = n->as_integer();
      if (v == nullptr) fail(key, "an integer");
      const std::int64_t x = v->get();
      if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) fail(key, "a 32-bit integer");
      out = static_cast<int>(x);
    }
  }

  void get(const std::string& key, std::uint64_t& out) {
    if (const toml::node* n = take(key)) {
      auto v = n->as_integer();
      if (v == nullptr || v->get() < 0) fail(key, "a non-negative integer");
      out = static_cast<std::uint64_t>(v->get());
    }
  }

  void get(const std::string& key, bool& out) {
    if (const toml::node* n = take(key)) {
      auto v = n->as_boolean();
      if (v == nullptr) fail(key, "true or false");
      out = v->get();
    }
  }

  void get(const std::string& key, std::string& out) {
    if (const toml::node* n = take(key)) {
      auto v = n->as_string();
      if (v == nullptr) fail(key, "a string");
      out = v->get();
    }
  }

  void get(const std::string& key, std::filesystem::path& out) {
    std::string s;
    if (has(key)) {
      get(key, s);
      out = s;
    }
  }

  template <typename T>
  void get(const std::string& key, std::vector<T>& out) {
    if (const toml::node* n = take(key)) {
      auto arr = n->as_array();
      if (arr == nullptr) fail(key, "an array");
      std::vector<T> values;
      for (const toml::node& item : *arr) {
        std::optional<T> v;
        if constexpr (std::is_same_v<T, int>) {
          if (auto i = item.as_integer()) v = static_cast<int>(i->get());
        } else {
          v = item.value<T>();
        }
        if (!v) fail(key, "an array of numbers");
        values.push_back(*v);
      }
      out = std::move(values);
    }
  }

  // Enumerations are read as strings and converted by the module's own parser.
  template <typename Fn>
  void get_enum(const std::string& key, Fn&& apply) {
    if (has(key)) {
      std::string s;
      get(key, s);
      apply(s);
    }
  }

  void check_consumed() const {
    if (table_ == nullptr) return;
    for (const auto& [k, v] : *table_) {
      const std::string key(k.str());
      if (!consumed_.contains(key)) throw ConfigError("unknown config key '" + qualified(key) + "'");
    }
  }

 private:
  const toml::node* take(const std::string& key) {
    if (table_ == nullptr) return nullptr;
    const toml::node* n = table_->get(key);
    if (n != nullptr) consumed_.insert(key);
    return n;
  }

  [[noreturn]] void fail(const std::string& key, const std::string& expected) const {
    throw ConfigError("config key '" + qualified(key) + "' must be " + expected);
  }

  const toml::table* table_;
  std::string name_;
  std::set<std::string> consumed_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

toml::table parse_toml(std::string_view text, const std::string& origin) {
  try {
    return toml::parse(text, origin);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "cannot parse " << origin << ": " << e.description() << " (line " << e.source().begin.line << ")";
    throw ConfigError(msg.str());
  }
}

// "section.key=value" -> table[section][key] = value.
void apply_override(toml::table& root, const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + text + "' is not of the form key=value");
  const std::string path = text.substr(0, eq);
  const std::string value = text.substr(eq + 1);

  toml::table parsed;
  try {
    parsed = toml::parse("v = " + value);
  } catch (const toml::parse_error&) {
    parsed.insert_or_assign("v", value);
  }
  toml::node& node = *parsed.get("v");

  const auto dot = path.find('.');
  if (dot == std::string::npos) {
    root.insert_or_assign(path, std::move(node));
    return;
  }
  const std::string section = path.substr(0, dot);
  const std::string key = path.substr(dot + 1);
  if (key.empty() || key.find('.') != std::string::npos) throw ConfigError("override key '" + path + "' is malformed");
  if (!root.contains(section)) root.insert(section, toml::table{});
  toml::table* t = root.get_as<toml::table>(section);
  if (t == nullptr) throw ConfigError("override target '" + section + "' is not a section");
  t->insert_or_assign(key, std::move(node));
}

const toml::table* section_table(const toml::table& root, const std::string& name) {
  const toml::node* n = root.get(name);
  if (n == nullptr) return nullptr;
  const toml::table* t = n->as_table();
  if (t == nullptr) throw ConfigError("config entry '" + name + "' must be a section");
  return t;
}

void read_env(Section& s, RunConfig& cfg) {
  std::string name = cfg.env.name;
  s.get("name", name);
  cfg.env = env::EnvSpec::by_name(name);
  env::EnvSpec& e = cfg.env;
  s.get("dt", e.dt);
  s.get("max_steps", e.max_steps);
  s.get("action_low", e.action_low);
  s.get("action_high", e.action_high);
  if (s.has("goal")) {
    std::vector<double> goal;
    s.get("goal", goal);
    require(goal.size() == 2, "env.goal must have two entries");
    e.goal = {goal[0], goal[1]};
  }
  s.get("position_bound", e.position_bound);
  s.get("absorbing_terminal", e.absorbing_terminal);
  s.get("init_position_range", e.init_position_range);
  s.get("expert_kp", e.expert_kp);
  s.get("expert_kd", e.expert_kd);
  s.get("gravity", e.gravity);
  s.get("length", e.length);
  s.get("mass", e.mass);
  s.get("max_speed", e.max_speed);
  s.get("catch_cos", e.catch_cos);
  s.get("catch_kp", e.catch_kp);
  s.get("catch_kd", e.catch_kd);
  s.get("swing_gain", e.swing_gain);
  e.validate();
}

void read_dataset(Section& s, DatasetSection& d) {
  s.get_enum("tier", [&](const std::string& v) { d.tier = data::tier_from_string(v); });
  s.get("episodes", d.episodes);
  s.get("path", d.path);
  s.get("medium_gain", d.recipe.medium.gain);
  s.get("medium_noise", d.recipe.medium.noise_std);
  s.get("replay_noise_start", d.recipe.replay_noise_start);
  s.get("replay_noise_end", d.recipe.replay_noise_end);
  s.get("replay_gain_start", d.recipe.replay_gain_start);
  s.get("replay_gain_end", d.recipe.replay_gain_end);
  require(d.episodes >= 1, "dataset.episodes must be at least 1");
  require(d.recipe.medium.noise_std >= 0.0 && d.recipe.replay_noise_start >= 0.0 && d.recipe.replay_noise_end >= 0.0,
          "dataset noise levels must be non-negative");
}

void read_diffusion(Section& s, DiffusionSection& d) {
  auto& t = d.train;
  s.get("horizon", d.horizon);
  s.get("K", d.K);
  s.get_enum("schedule", [&](const std::string& v) { d.schedule = diffusion::schedule_from_string(v); });
  s.get("steps", t.steps);
  s.get("batch_size", t.batch_size);
  s.get("learning_rate", t.learning_rate);
  s.get("ema_decay", t.ema_decay);
  s.get("hidden", t.hidden);
  s.get_enum("activation", [&](const std::string& v) { t.activation = nn::activation_from_string(v); });
  s.get("time_embed_dim", t.time_embed_dim);
  s.get("clip_denoised", t.clip_denoised);
  s.get("condition_first", t.condition_first);
  s.get("heldout_fraction", t.heldout_fraction);
  s.get("eval_every", t.eval_every);
  s.get("eval_windows", t.eval_windows);
  s.get("checkpoint", d.checkpoint);
  require(d.horizon >= 2, "diffusion.horizon must be at least 2");
  require(d.K >= 1, "diffusion.K must be at least 1");
  require(t.steps >= 0 && t.batch_size >= 1 && t.learning_rate > 0.0, "diffusion training settings out of range");
  require(t.ema_decay >= 0.0 && t.ema_decay < 1.0, "diffusion.ema_decay must lie in [0, 1)");
  require(t.time_embed_dim >= 2 && t.time_embed_dim % 2 == 0, "diffusion.time_embed_dim must be even and positive");
  require(t.heldout_fraction >= 0.0 && t.heldout_fraction < 1.0, "diffusion.heldout_fraction must lie in [0, 1)");
  require(t.eval_every >= 1 && t.eval_windows >= 1, "diffusion evaluation settings must be positive");
}

void read_ensemble(Section& s, EnsembleSection& e) {
  s.get("members", e.members);
  s.get_enum("loss", [&](const std::string& v) { e.loss = ensemble::action_loss_from_string(v); });
  s.get_enum("reduction", [&](const std::string& v) { e.reduction = ensemble::reduction_from_string(v); });
  s.get("steps", e.train.steps);
  s.get("batch_size", e.train.batch_size);
  s.get("learning_rate", e.train.learning_rate);
  s.get("hidden", e.train.hidden);
  s.get("checkpoint", e.checkpoint);
  require(e.members >= 1, "ensemble.members must be at least 1");
  require(e.train.steps >= 0 && e.train.batch_size >= 1 && e.train.learning_rate > 0.0,
          "ensemble training settings out of range");
}

void read_policy(Section& s, policy::PolicyConfig& p) {
  s.get_enum("mode", [&](const std::string& v) { p.mode = policy::mode_from_string(v); });
  s.get("delta", p.delta);
  s.get("max_steps", p.max_steps);
  require(!std::isnan(p.delta) && p.delta >= 0.0, "policy.delta must be non-negative");
  require(p.max_steps >= 0, "policy.max_steps must be non-negative");
}

void read_eval(Section& s, EvalSection& e) {
  s.get("seeds", e.seeds);
  s.get("output", e.output);
  s.get("plot", e.plot);
  s.get("bench_output", e.bench_output);
  if (s.has("traces")) {
    std::filesystem::path p;
    s.get("traces", p);
    e.traces = p;
  }
  s.get("deltas", e.deltas);
  s.get("members", e.members);
  s.get("timing", e.timing);
  s.get("bench_steps", e.bench_steps);
  s.get("bench_repetitions", e.bench_repetitions);
  require(e.seeds >= 1, "eval.seeds must be at least 1");
  for (double d : e.deltas) require(!std::isnan(d) && d >= 0.0, "eval.deltas must be non-negative");
  for (int m : e.members) require(m >= 1, "eval.members entries must be at least 1");
  require(e.bench_steps >= 1 && e.bench_repetitions >= 1, "bench settings must be positive");
}

}  // namespace

RunConfig parse_config(std::string_view toml_text, const std::vector<std::string>& overrides,
                       std::optional<std::uint64_t> seed) {
  toml::table root = parse_toml(toml_text, "config");
  for (const std::string& o : overrides) apply_override(root, o);

  static const std::set<std::string> kSections{"env", "dataset", "diffusion", "ensemble", "policy", "eval"};
  for (const auto& [k, v] : root) {
    const std::string key(k.str());
    if (key != "seed" && !kSections.contains(key)) throw ConfigError("unknown config section '" + key + "'");
  }

  RunConfig cfg;
  if (const toml::node* n = root.get("seed")) {
    auto v = n->as_integer();
    if (v == nullptr || v->get() < 0) throw ConfigError("config key 'seed' must be a non-negative integer");
    cfg.seed = static_cast<std::uint64_t>(v->get());
  }
  if (seed) cfg.seed = *seed;

  Section env_s(section_table(root, "env"), "env");
  Section data_s(section_table(root, "dataset"), "dataset");
  Section diff_s(section_table(root, "diffusion"), "diffusion");
  Section ens_s(section_table(root, "ensemble"), "ensemble");
  Section pol_s(section_table(root, "policy"), "policy");
  Section eval_s(section_table(root, "eval"), "eval");
  read_env(env_s, cfg);
  read_dataset(data_s, cfg.dataset);
  read_diffusion(diff_s, cfg.diffusion);
  read_ensemble(ens_s, cfg.ensemble);
  read_policy(pol_s, cfg.policy);
  read_eval(eval_s, cfg.eval);
  for (const Section* s : {&env_s, &data_s, &diff_s, &ens_s, &pol_s, &eval_s}) s->check_consumed();

  cfg.policy.horizon = cfg.diffusion.horizon;
  cfg.policy.K = cfg.diffusion.K;
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides,
                      std::optional<std::uint64_t> seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_config(text.str(), overrides, seed);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void require_inputs(const RunConfig& cfg, Stage stage) {
  auto need = [](const std::filesystem::path& p, const char* what) {
    if (!std::filesystem::is_regular_file(p)) {
      throw ConfigError(std::string(what) + " '" + p.string() + "' does not exist");
    }
  };
  switch (stage) {
    case Stage::gen_data:
      break;
    case Stage::train_diffusion:
    case Stage::train_ensemble:
      need(cfg.dataset.path, "dataset");
      break;
    case Stage::evaluate:
      need(cfg.diffusion.checkpoint, "diffusion checkpoint");
      need(cfg.ensemble.checkpoint, "ensemble checkpoint");
      break;
  }
}

}  // namespace adaplan::bench
