#include "mbmpc/config.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "mbmpc/csv.hpp"

namespace mbmpc::config {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  std::size_t e = s.find_last_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: " + key + ": expected a number, got '" + value + "'");
  }
}

long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    long v = std::stol(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: " + key + ": expected an integer, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  throw std::invalid_argument("config: " + key + ": expected true or false, got '" + value + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string tok;
  while (ss >> tok) out.push_back(static_cast<int>(parse_int(key, tok)));
  if (out.empty()) throw std::invalid_argument("config: " + key + ": expected a list of integers");
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(v[i]);
  }
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key,
                                  const std::string& value)>;

const std::map<std::string, Setter>& key_registry() {
  static const std::map<std::string, Setter> registry = [] {
    std::map<std::string, Setter> r;
    auto dbl = [](double ExperimentConfig::*field) {
      return Setter([field](ExperimentConfig& c, const std::string& k, const std::string& v) {
        c.*field = parse_double(k, v);
      });
    };
    auto num = [](auto setter) {
      return Setter([setter](ExperimentConfig& c, const std::string& k, const std::string& v) {
        setter(c, parse_double(k, v));
      });
    };
    auto integer = [](auto setter) {
      return Setter([setter](ExperimentConfig& c, const std::string& k, const std::string& v) {
        setter(c, parse_int(k, v));
      });
    };

    // env is applied first (see config_from_text); here it is a no-op.
    r["env"] = [](ExperimentConfig&, const std::string&, const std::string&) {};
    r["env.dt"] = num([](ExperimentConfig& c, double v) { c.env.dt = v; });
    r["env.accel_gain"] = num([](ExperimentConfig& c, double v) { c.env.accel_gain = v; });
    r["env.drag"] = num([](ExperimentConfig& c, double v) { c.env.drag = v; });
    r["env.turn_gain"] = num([](ExperimentConfig& c, double v) { c.env.turn_gain = v; });
    r["env.gravity"] = num([](ExperimentConfig& c, double v) { c.env.gravity = v; });
    r["env.length"] = num([](ExperimentConfig& c, double v) { c.env.length = v; });
    r["env.mass"] = num([](ExperimentConfig& c, double v) { c.env.mass = v; });
    r["env.damping"] = num([](ExperimentConfig& c, double v) { c.env.damping = v; });
    r["env.torque_gain"] = num([](ExperimentConfig& c, double v) { c.env.torque_gain = v; });
    r["env.reward_c"] = num([](ExperimentConfig& c, double v) { c.env.reward_c = v; });
    r["env.reward_d"] = num([](ExperimentConfig& c, double v) { c.env.reward_d = v; });
    r["env.init_noise_var"] = num([](ExperimentConfig& c, double v) { c.env.init_noise_var = v; });

    r["dynamics.hidden"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.agg.hidden_sizes = parse_int_list(k, v);
    };
    r["dynamics.activation"] = [](ExperimentConfig& c, const std::string& k,
                                  const std::string& v) {
      try {
        c.agg.activation = nn::activation_from_name(v);
      } catch (const std::exception&) {
        throw std::invalid_argument("config: " + k + ": unknown activation '" + v + "'");
      }
    };
    r["dynamics.lr"] = num([](ExperimentConfig& c, double v) { c.agg.learning_rate = v; });
    r["dynamics.batch"] =
        integer([](ExperimentConfig& c, long v) { c.agg.batch_size = static_cast<int>(v); });
    r["dynamics.noise_sigma"] = num([](ExperimentConfig& c, double v) { c.agg.noise_sigma = v; });
    r["dynamics.noise_after_norm"] = [](ExperimentConfig& c, const std::string& k,
                                        const std::string& v) {
      c.agg.noise_after_norm = parse_bool(k, v);
    };

    r["mpc.horizon"] =
        integer([](ExperimentConfig& c, long v) { c.agg.mpc.horizon = static_cast<int>(v); });
    r["mpc.candidates"] = integer(
        [](ExperimentConfig& c, long v) { c.agg.mpc.num_candidates = static_cast<int>(v); });
    r["mpc.discount"] = num([](ExperimentConfig& c, double v) { c.agg.mpc.discount = v; });

    r["agg.max_iter"] =
        integer([](ExperimentConfig& c, long v) { c.agg.max_iter = static_cast<int>(v); });
    r["agg.rollouts_per_iter"] =
        integer([](ExperimentConfig& c, long v) { c.agg.rollouts_per_iter = static_cast<int>(v); });
    r["agg.rollout_length"] =
        integer([](ExperimentConfig& c, long v) { c.agg.rollout_length = static_cast<int>(v); });
    r["agg.epochs_per_iter"] =
        integer([](ExperimentConfig& c, long v) { c.agg.epochs_per_iter = static_cast<int>(v); });
    r["agg.init_rollouts"] =
        integer([](ExperimentConfig& c, long v) { c.agg.init_rollouts = static_cast<int>(v); });
    r["agg.init_rollout_length"] = integer(
        [](ExperimentConfig& c, long v) { c.agg.init_rollout_length = static_cast<int>(v); });
    r["agg.split_rand"] = num([](ExperimentConfig& c, double v) { c.agg.split_rand = v; });
    r["agg.split_rl"] = num([](ExperimentConfig& c, double v) { c.agg.split_rl = v; });
    r["agg.val_fraction"] = num([](ExperimentConfig& c, double v) { c.agg.val_fraction = v; });
    r["agg.exploration"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      try {
        c.exploration = envs::exploration_from_name(v);
      } catch (const std::exception&) {
        throw std::invalid_argument("config: " + k + ": unknown exploration mode '" + v + "'");
      }
    };

    r["imitate.hidden"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.policy_hidden = parse_int_list(k, v);
    };
    r["imitate.std"] = dbl(&ExperimentConfig::policy_std);
    r["imitate.expert_rollouts"] =
        integer([](ExperimentConfig& c, long v) { c.expert_rollouts = static_cast<int>(v); });
    r["imitate.rollout_length"] =
        integer([](ExperimentConfig& c, long v) { c.expert_rollout_length = static_cast<int>(v); });
    r["imitate.action_noise_sigma"] = dbl(&ExperimentConfig::action_noise_sigma);
    r["imitate.bc_epochs"] =
        integer([](ExperimentConfig& c, long v) { c.bc_epochs = static_cast<int>(v); });
    r["imitate.bc_batch"] =
        integer([](ExperimentConfig& c, long v) { c.bc_batch = static_cast<int>(v); });
    r["imitate.bc_lr"] = dbl(&ExperimentConfig::bc_lr);
    r["imitate.dagger_iters"] =
        integer([](ExperimentConfig& c, long v) { c.dagger_iters = static_cast<int>(v); });
    r["imitate.dagger_rollouts_per_iter"] = integer(
        [](ExperimentConfig& c, long v) { c.dagger_rollouts_per_iter = static_cast<int>(v); });
    r["imitate.dagger_epochs_per_iter"] = integer(
        [](ExperimentConfig& c, long v) { c.dagger_epochs_per_iter = static_cast<int>(v); });

    r["finetune.iterations"] =
        integer([](ExperimentConfig& c, long v) { c.finetune.iterations = static_cast<int>(v); });
    r["finetune.batch_episodes"] = integer(
        [](ExperimentConfig& c, long v) { c.finetune.batch_episodes = static_cast<int>(v); });
    r["finetune.lr"] = num([](ExperimentConfig& c, double v) { c.finetune.learning_rate = v; });
    r["finetune.episode_length"] = integer(
        [](ExperimentConfig& c, long v) { c.finetune_episode_length = static_cast<int>(v); });
    r["finetune.init"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      if (v != "policy" && v != "random")
        throw std::invalid_argument("config: " + k + ": expected policy or random, got '" + v +
                                    "'");
      c.finetune_init = v;
    };

    r["path.file"] = [](ExperimentConfig& c, const std::string&, const std::string& v) {
      c.path_file = v;
    };
    r["path.alpha"] = dbl(&ExperimentConfig::path_alpha);
    r["path.beta"] = dbl(&ExperimentConfig::path_beta);

    r["eval.episodes"] =
        integer([](ExperimentConfig& c, long v) { c.eval_episodes = static_cast<int>(v); });
    r["eval.episode_length"] =
        integer([](ExperimentConfig& c, long v) { c.eval_episode_length = static_cast<int>(v); });

    r["model.file"] = [](ExperimentConfig& c, const std::string&, const std::string& v) {
      c.model_file = v;
    };
    r["model.oracle"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.oracle = parse_bool(k, v);
    };
    r["policy.file"] = [](ExperimentConfig& c, const std::string&, const std::string& v) {
      c.policy_file = v;
    };

    r["validate.horizons"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.validate_horizons = parse_int_list(k, v);
    };
    r["validate.rollouts"] =
        integer([](ExperimentConfig& c, long v) { c.validate_rollouts = static_cast<int>(v); });
    r["validate.rollout_length"] = integer(
        [](ExperimentConfig& c, long v) { c.validate_rollout_length = static_cast<int>(v); });

    r["seed"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.seed = static_cast<std::uint64_t>(parse_int(k, v));
    };
    r["out"] = [](ExperimentConfig& c, const std::string&, const std::string& v) {
      c.out_dir = v;
    };
    return r;
  }();
  return registry;
}

std::vector<std::pair<std::string, std::string>> parse_pairs(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: parse error at line " + std::to_string(line_no) +
                                  ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument("config: parse error at line " + std::to_string(line_no) +
                                  ": empty key");
    pairs.emplace_back(key, value);
  }
  return pairs;
}

void check_positive_list(const std::string& key, const std::vector<int>& v) {
  for (int x : v)
    if (x <= 0) throw std::invalid_argument("config: " + key + ": entries must be positive");
}

}  // namespace

ExperimentConfig config_from_text(const std::string& text,
                                  const std::vector<std::string>& overrides) {
  auto pairs = parse_pairs(text);
  for (const std::string& ov : overrides) {
    std::size_t eq = ov.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: override '" + ov + "': expected key=value");
    pairs.emplace_back(trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)));
  }

  ExperimentConfig cfg;
  // The env key resets environment defaults, so apply it before the rest.
  for (const auto& [key, value] : pairs) {
    if (key == "env") {
      try {
        cfg.env = envs::make_env(value);
      } catch (const std::exception&) {
        throw std::invalid_argument("config: env: unknown environment '" + value + "'");
      }
    }
  }
  const auto& registry = key_registry();
  for (const auto& [key, value] : pairs) {
    auto it = registry.find(key);
    if (it == registry.end()) throw std::invalid_argument("config: unknown key '" + key + "'");
    it->second(cfg, key, value);
  }
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_text(ss.str());
}

void validate(const ExperimentConfig& cfg) {
  auto require = [](bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw std::invalid_argument("config: " + field + ": " + what);
  };

  require(cfg.env.dt > 0.0, "env.dt", "must be > 0");
  require(cfg.env.reward_d != 0.0, "env.reward_d", "must be nonzero");
  require(cfg.env.init_noise_var >= 0.0, "env.init_noise_var", "must be >= 0");

  check_positive_list("dynamics.hidden", cfg.agg.hidden_sizes);
  require(cfg.agg.learning_rate > 0.0, "dynamics.lr", "must be > 0");
  require(cfg.agg.batch_size >= 1, "dynamics.batch", "must be >= 1");
  require(cfg.agg.noise_sigma >= 0.0, "dynamics.noise_sigma", "must be >= 0");

  require(cfg.agg.mpc.horizon >= 1, "mpc.horizon", "must be >= 1");
  require(cfg.agg.mpc.num_candidates >= 1, "mpc.candidates", "must be >= 1");
  require(cfg.agg.mpc.discount >= 0.0 && cfg.agg.mpc.discount <= 1.0, "mpc.discount",
          "must be in [0, 1]");

  require(cfg.agg.max_iter >= 1, "agg.max_iter", "must be >= 1");
  require(cfg.agg.rollouts_per_iter >= 0, "agg.rollouts_per_iter", "must be >= 0");
  require(cfg.agg.rollouts_per_iter == 0 || cfg.agg.rollout_length >= 1, "agg.rollout_length",
          "must be >= 1");
  require(cfg.agg.epochs_per_iter >= 0, "agg.epochs_per_iter", "must be >= 0");
  require(cfg.agg.init_rollouts >= 1, "agg.init_rollouts", "must be >= 1");
  require(cfg.agg.init_rollout_length >= 2, "agg.init_rollout_length", "must be >= 2");
  require(cfg.agg.split_rand >= 0.0 && cfg.agg.split_rand <= 1.0, "agg.split_rand",
          "must be in [0, 1]");
  require(std::abs(cfg.agg.split_rand + cfg.agg.split_rl - 1.0) <= 1e-9, "agg.split_rl",
          "split fractions must sum to 1");
  require(cfg.agg.val_fraction >= 0.0 && cfg.agg.val_fraction < 1.0, "agg.val_fraction",
          "must be in [0, 1)");
  require(cfg.exploration == envs::Exploration::kStandard || cfg.env.heading_index.has_value(),
          "agg.exploration", "heading_sweep requires an environment with a heading element");

  check_positive_list("imitate.hidden", cfg.policy_hidden);
  require(cfg.policy_std > 0.0, "imitate.std", "must be > 0");
  require(cfg.expert_rollouts >= 0, "imitate.expert_rollouts", "must be >= 0");
  require(cfg.expert_rollout_length >= 1, "imitate.rollout_length", "must be >= 1");
  require(cfg.action_noise_sigma >= 0.0, "imitate.action_noise_sigma", "must be >= 0");
  require(cfg.bc_epochs >= 0, "imitate.bc_epochs", "must be >= 0");
  require(cfg.bc_batch >= 1, "imitate.bc_batch", "must be >= 1");
  require(cfg.bc_lr > 0.0, "imitate.bc_lr", "must be > 0");
  require(cfg.dagger_iters >= 0, "imitate.dagger_iters", "must be >= 0");
  require(cfg.dagger_rollouts_per_iter >= 0, "imitate.dagger_rollouts_per_iter", "must be >= 0");
  require(cfg.dagger_epochs_per_iter >= 0, "imitate.dagger_epochs_per_iter", "must be >= 0");

  require(cfg.finetune.iterations >= 0, "finetune.iterations", "must be >= 0");
  require(cfg.finetune.batch_episodes >= 1, "finetune.batch_episodes", "must be >= 1");
  require(cfg.finetune.learning_rate >= 0.0, "finetune.lr", "must be >= 0");
  require(cfg.finetune_episode_length >= 1, "finetune.episode_length", "must be >= 1");

  require(cfg.path_alpha >= 0.0, "path.alpha", "must be >= 0");
  require(cfg.path_beta >= 0.0, "path.beta", "must be >= 0");

  require(cfg.eval_episodes >= 0, "eval.episodes", "must be >= 0");
  require(cfg.eval_episode_length >= 1, "eval.episode_length", "must be >= 1");

  for (int h : cfg.validate_horizons)
    require(h >= 1, "validate.horizons", "entries must be >= 1");
  require(cfg.validate_rollouts >= 1, "validate.rollouts", "must be >= 1");
  require(cfg.validate_rollout_length >= 2, "validate.rollout_length", "must be >= 2");

  for (const auto& [field, file] :
       {std::pair<std::string, std::string>{"path.file", cfg.path_file},
        {"model.file", cfg.model_file},
        {"policy.file", cfg.policy_file}}) {
    if (!file.empty() && !std::filesystem::exists(file))
      throw std::invalid_argument("config: " + field + ": file not found: " + file +
                                  " (generate it first or fix the path)");
  }
}

std::string config_to_text(const ExperimentConfig& cfg) {
  std::ostringstream out;
  auto d = [](double v) { return csv::format_double(v); };
  out << "env = " << cfg.env.name << "\n";
  out << "env.dt = " << d(cfg.env.dt) << "\n";
  out << "env.accel_gain = " << d(cfg.env.accel_gain) << "\n";
  out << "env.drag = " << d(cfg.env.drag) << "\n";
  out << "env.turn_gain = " << d(cfg.env.turn_gain) << "\n";
  out << "env.gravity = " << d(cfg.env.gravity) << "\n";
  out << "env.length = " << d(cfg.env.length) << "\n";
  out << "env.mass = " << d(cfg.env.mass) << "\n";
  out << "env.damping = " << d(cfg.env.damping) << "\n";
  out << "env.torque_gain = " << d(cfg.env.torque_gain) << "\n";
  out << "env.reward_c = " << d(cfg.env.reward_c) << "\n";
  out << "env.reward_d = " << d(cfg.env.reward_d) << "\n";
  out << "env.init_noise_var = " << d(cfg.env.init_noise_var) << "\n";
  out << "dynamics.hidden = " << join_ints(cfg.agg.hidden_sizes) << "\n";
  out << "dynamics.activation = " << nn::activation_name(cfg.agg.activation) << "\n";
  out << "dynamics.lr = " << d(cfg.agg.learning_rate) << "\n";
  out << "dynamics.batch = " << cfg.agg.batch_size << "\n";
  out << "dynamics.noise_sigma = " << d(cfg.agg.noise_sigma) << "\n";
  out << "dynamics.noise_after_norm = " << (cfg.agg.noise_after_norm ? "true" : "false") << "\n";
  out << "mpc.horizon = " << cfg.agg.mpc.horizon << "\n";
  out << "mpc.candidates = " << cfg.agg.mpc.num_candidates << "\n";
  out << "mpc.discount = " << d(cfg.agg.mpc.discount) << "\n";
  out << "agg.max_iter = " << cfg.agg.max_iter << "\n";
  out << "agg.rollouts_per_iter = " << cfg.agg.rollouts_per_iter << "\n";
  out << "agg.rollout_length = " << cfg.agg.rollout_length << "\n";
  out << "agg.epochs_per_iter = " << cfg.agg.epochs_per_iter << "\n";
  out << "agg.init_rollouts = " << cfg.agg.init_rollouts << "\n";
  out << "agg.init_rollout_length = " << cfg.agg.init_rollout_length << "\n";
  out << "agg.split_rand = " << d(cfg.agg.split_rand) << "\n";
  out << "agg.split_rl = " << d(cfg.agg.split_rl) << "\n";
  out << "agg.val_fraction = " << d(cfg.agg.val_fraction) << "\n";
  out << "agg.exploration = " << envs::exploration_name(cfg.exploration) << "\n";
  out << "imitate.hidden = " << join_ints(cfg.policy_hidden) << "\n";
  out << "imitate.std = " << d(cfg.policy_std) << "\n";
  out << "imitate.expert_rollouts = " << cfg.expert_rollouts << "\n";
  out << "imitate.rollout_length = " << cfg.expert_rollout_length << "\n";
  out << "imitate.action_noise_sigma = " << d(cfg.action_noise_sigma) << "\n";
  out << "imitate.bc_epochs = " << cfg.bc_epochs << "\n";
  out << "imitate.bc_batch = " << cfg.bc_batch << "\n";
  out << "imitate.bc_lr = " << d(cfg.bc_lr) << "\n";
  out << "imitate.dagger_iters = " << cfg.dagger_iters << "\n";
  out << "imitate.dagger_rollouts_per_iter = " << cfg.dagger_rollouts_per_iter << "\n";
  out << "imitate.dagger_epochs_per_iter = " << cfg.dagger_epochs_per_iter << "\n";
  out << "finetune.iterations = " << cfg.finetune.iterations << "\n";
  out << "finetune.batch_episodes = " << cfg.finetune.batch_episodes << "\n";
  out << "finetune.lr = " << d(cfg.finetune.learning_rate) << "\n";
  out << "finetune.episode_length = " << cfg.finetune_episode_length << "\n";
  out << "finetune.init = " << cfg.finetune_init << "\n";
  if (!cfg.path_file.empty()) out << "path.file = " << cfg.path_file << "\n";
  out << "path.alpha = " << d(cfg.path_alpha) << "\n";
  out << "path.beta = " << d(cfg.path_beta) << "\n";
  out << "eval.episodes = " << cfg.eval_episodes << "\n";
  out << "eval.episode_length = " << cfg.eval_episode_length << "\n";
  if (!cfg.model_file.empty()) out << "model.file = " << cfg.model_file << "\n";
  out << "model.oracle = " << (cfg.oracle ? "true" : "false") << "\n";
  if (!cfg.policy_file.empty()) out << "policy.file = " << cfg.policy_file << "\n";
  out << "validate.horizons = " << join_ints(cfg.validate_horizons) << "\n";
  out << "validate.rollouts = " << cfg.validate_rollouts << "\n";
  out << "validate.rollout_length = " << cfg.validate_rollout_length << "\n";
  out << "seed = " << cfg.seed << "\n";
  if (!cfg.out_dir.empty()) out << "out = " << cfg.out_dir << "\n";
  return out.str();
}

}  // namespace mbmpc::config
