#include "mbmpc/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "mbmpc/csv.hpp"
#include "mbmpc/rng.hpp"

namespace mbmpc::cli {

namespace fs = std::filesystem;
using config::ExperimentConfig;

loop::TaskSpec task_from_config(const ExperimentConfig& cfg) {
  if (!cfg.path_file.empty()) {
    control::PathSpec path = control::path_to_segments(control::read_waypoints_csv(cfg.path_file),
                                                       cfg.path_alpha, cfg.path_beta);
    return loop::make_path_task(cfg.env, path, cfg.exploration);
  }
  loop::TaskSpec task = loop::make_forward_task(cfg.env, cfg.agg.mpc.discount);
  task.exploration = cfg.exploration;
  return task;
}

dynamics::StepFn planning_model(const ExperimentConfig& cfg) {
  if (cfg.oracle) return envs::oracle_step_fn(cfg.env);
  if (cfg.model_file.empty())
    throw std::runtime_error(
        "no planning model: set model.file to a trained checkpoint (run train-dynamics or "
        "aggregate first) or set model.oracle = true");
  return dynamics::as_step_fn(dynamics::load_model(cfg.model_file));
}

EvalSummary evaluate(const ExperimentConfig& cfg, const dynamics::StepFn& model) {
  loop::TaskSpec task = task_from_config(cfg);
  control::SequenceScorer scorer = task.make_scorer(model);
  EvalSummary summary;
  for (int e = 0; e < cfg.eval_episodes; ++e) {
    // Exploration modes shape the training data; evaluation always starts
    // from the nominal state.
    Vec s0 = envs::sample_initial_state(
        cfg.env, derive_seed(cfg.seed, "eval-init", static_cast<std::uint64_t>(e)),
        envs::Exploration::kStandard);
    control::MpcConfig mpc = cfg.agg.mpc;
    mpc.rng_seed = derive_seed(cfg.seed, "eval-mpc", static_cast<std::uint64_t>(e));
    summary.episodes.push_back(control::mpc_run(cfg.env, scorer, task.make_realized_reward(s0), s0,
                                                cfg.eval_episode_length, mpc));
    summary.mean_return += summary.episodes.back().realized_return;
  }
  if (cfg.eval_episodes > 0) summary.mean_return /= cfg.eval_episodes;
  return summary;
}

PipelineResult run_aggregate_pipeline(const ExperimentConfig& cfg, bool with_eval) {
  PipelineResult result;
  result.mbrl = loop::run_mbrl(cfg.env, cfg.agg, task_from_config(cfg), cfg.seed);
  if (with_eval)
    result.eval_return = evaluate(cfg, dynamics::as_step_fn(result.mbrl.model)).mean_return;
  return result;
}

void write_manifest(const std::string& dir, const std::string& command,
                    const ExperimentConfig& cfg) {
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "manifest.txt");
    out << "version: " << config::kVersion << "\n";
    out << "command: " << command << "\n";
    out << "seed: " << cfg.seed << "\n";
  }
  std::ofstream out(fs::path(dir) / "config.cfg");
  out << config::config_to_text(cfg);
}

namespace {

std::string resolve_out_dir(const ExperimentConfig& cfg, const std::string& command) {
  if (!cfg.out_dir.empty()) return cfg.out_dir;
  const char* root = std::getenv(config::kOutputRootEnvVar);
  return (root ? std::string(root) : std::string("runs")) + "/" + command;
}

void write_summary_csv(const std::string& path, const std::vector<std::string>& header,
                       const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  out << csv::join(header) << "\n";
  for (const auto& row : rows) out << csv::join(row) << "\n";
}

int cmd_train_dynamics(ExperimentConfig cfg, const std::string& out) {
  cfg.agg.max_iter = 1;
  cfg.agg.rollouts_per_iter = 0;
  PipelineResult result = run_aggregate_pipeline(cfg, false);
  dynamics::save_model(out + "/model.json", result.mbrl.model);
  loop::write_metrics_csv(out + "/metrics.csv", result.mbrl.metrics);
  dynamics::write_dataset_csv(out + "/dataset.csv", result.mbrl.d_rand);
  std::cout << "trained model on " << result.mbrl.d_rand.size()
            << " random transitions; val H1 = " << result.mbrl.metrics.back().val_err_h1 << "\n";
  return 0;
}

int cmd_aggregate(const ExperimentConfig& cfg, const std::string& out) {
  loop::TaskSpec task = task_from_config(cfg);
  loop::MbrlResult result =
      loop::run_mbrl(cfg.env, cfg.agg, task, cfg.seed, [&](int iter, const dynamics::DynamicsModel& m) {
        dynamics::save_model(out + "/model_iter_" + std::to_string(iter) + ".json", m);
      });
  dynamics::save_model(out + "/model.json", result.model);
  loop::write_metrics_csv(out + "/metrics.csv", result.metrics);
  dynamics::write_dataset_csv(out + "/dataset.csv", result.d_rand);
  if (!result.d_rl.empty()) dynamics::write_dataset_csv(out + "/dataset.csv", result.d_rl, true);
  for (const auto& m : result.metrics)
    std::cout << "iter " << m.iter << ": mean_return = " << m.mean_return
              << ", val H1 = " << m.val_err_h1 << "\n";
  return 0;
}

int cmd_run_mpc(const ExperimentConfig& cfg, const std::string& out) {
  EvalSummary summary = evaluate(cfg, planning_model(cfg));
  std::vector<std::vector<std::string>> rows;
  for (std::size_t e = 0; e < summary.episodes.size(); ++e) {
    control::write_episode_csv(out + "/episode_" + std::to_string(e) + ".csv",
                               summary.episodes[e]);
    rows.push_back({std::to_string(e), csv::format_double(summary.episodes[e].realized_return)});
  }
  write_summary_csv(out + "/summary.csv", {"episode", "realized_return"}, rows);
  std::cout << "mean realized return over " << summary.episodes.size()
            << " episodes: " << summary.mean_return << "\n";
  return 0;
}

int cmd_follow_path(const ExperimentConfig& cfg, const std::string& out) {
  if (cfg.path_file.empty())
    throw std::runtime_error("follow-path: set path.file to a waypoint CSV");
  control::PathSpec path = control::path_to_segments(control::read_waypoints_csv(cfg.path_file),
                                                     cfg.path_alpha, cfg.path_beta);
  EvalSummary summary = evaluate(cfg, planning_model(cfg));

  std::vector<std::vector<std::string>> rows;
  for (std::size_t e = 0; e < summary.episodes.size(); ++e) {
    const auto& episode = summary.episodes[e];
    control::write_episode_csv(out + "/episode_" + std::to_string(e) + ".csv", episode);
    double perp_sum = 0.0;
    for (const auto& tr : episode.trajectory.transitions) {
      const auto& seg = path.segments[control::closest_segment(path, tr.next_state[0],
                                                               tr.next_state[1])];
      perp_sum += control::project_point(seg, tr.next_state[0], tr.next_state[1]).perp;
    }
    double mean_perp = perp_sum / episode.trajectory.transitions.size();
    const Vec& last = episode.trajectory.transitions.back().next_state;
    const auto& goal = path.waypoints.back();
    double final_dist = std::hypot(last[0] - goal[0], last[1] - goal[1]);
    rows.push_back({std::to_string(e), csv::format_double(episode.realized_return),
                    csv::format_double(mean_perp), csv::format_double(final_dist)});
    std::cout << "episode " << e << ": return = " << episode.realized_return
              << ", mean_perp = " << mean_perp << ", final_dist = " << final_dist << "\n";
  }
  write_summary_csv(out + "/summary.csv",
                    {"episode", "realized_return", "mean_perp", "final_dist"}, rows);
  return 0;
}

int cmd_imitate(const ExperimentConfig& cfg, const std::string& out) {
  dynamics::StepFn model = planning_model(cfg);
  loop::TaskSpec task = task_from_config(cfg);

  loop::ExpertRollouts expert = loop::collect_expert_rollouts(
      cfg.env, model, task, cfg.agg.mpc, cfg.expert_rollouts, cfg.expert_rollout_length,
      cfg.action_noise_sigma, derive_seed(cfg.seed, "expert"));

  loop::GaussianPolicy policy =
      loop::make_policy(cfg.env.state_dim, cfg.env.action_dim, cfg.policy_hidden, cfg.policy_std,
                        derive_seed(cfg.seed, "policy-init"));
  loop::ExpertDataset aggregate = expert.dataset;
  loop::CloneReport clone = loop::behavioral_clone(policy, aggregate, cfg.bc_epochs, cfg.bc_batch,
                                                   cfg.bc_lr, derive_seed(cfg.seed, "bc"));
  loop::DaggerReport dagger = loop::dagger_iterate(
      policy, aggregate, cfg.env, model, task, cfg.agg.mpc, cfg.dagger_iters,
      cfg.dagger_rollouts_per_iter, cfg.expert_rollout_length, cfg.dagger_epochs_per_iter,
      cfg.bc_batch, cfg.bc_lr, derive_seed(cfg.seed, "dagger"));

  loop::save_policy(out + "/policy.json", policy);
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"expert_mean_return", "0", csv::format_double(expert.mean_return)});
  rows.push_back({"bc_held_out_mse", "0", csv::format_double(clone.held_out_mse)});
  for (std::size_t i = 0; i < dagger.on_policy_mse.size(); ++i)
    rows.push_back({"dagger_on_policy_mse", std::to_string(i + 1),
                    csv::format_double(dagger.on_policy_mse[i])});
  write_summary_csv(out + "/imitate_log.csv", {"stage", "iter", "value"}, rows);
  std::cout << "cloned policy from " << expert.dataset.size()
            << " expert pairs; bc held-out mse = " << clone.held_out_mse << "\n";
  return 0;
}

int cmd_finetune(const ExperimentConfig& cfg, const std::string& out) {
  if (cfg.finetune_init == "policy" && cfg.policy_file.empty())
    throw std::runtime_error(
        "finetune: finetune.init = policy needs policy.file (run imitate first) or set "
        "finetune.init = random");
  loop::GaussianPolicy policy =
      cfg.finetune_init == "policy"
          ? loop::load_policy(cfg.policy_file)
          : loop::make_policy(cfg.env.state_dim, cfg.env.action_dim, cfg.policy_hidden,
                              cfg.policy_std, derive_seed(cfg.seed, "policy-init"));

  loop::RewardFn reward = [env = cfg.env](const Vec& s_next, const Vec& a) {
    return envs::reward_forward(env, s_next, a);
  };
  loop::EpisodeTask task =
      loop::make_episode_task(cfg.env, reward, cfg.finetune_episode_length, cfg.exploration);
  loop::FinetuneMetrics metrics =
      loop::policy_gradient_finetune(policy, task, cfg.finetune, derive_seed(cfg.seed, "finetune"));

  loop::save_policy(out + "/policy_final.json", policy);
  loop::write_finetune_csv(out + "/finetune_log.csv", metrics);
  if (!metrics.mean_return.empty())
    std::cout << "finetune: first return = " << metrics.mean_return.front()
              << ", final return = " << metrics.mean_return.back() << "\n";
  return 0;
}

int cmd_validate(const ExperimentConfig& cfg, const std::string& out) {
  dynamics::StepFn model = planning_model(cfg);
  std::vector<envs::Trajectory> trajs =
      envs::collect_random_rollouts(cfg.env, cfg.validate_rollouts, cfg.validate_rollout_length,
                                    derive_seed(cfg.seed, "validate-data"), cfg.exploration);
  std::vector<std::vector<std::string>> rows;
  for (int h : cfg.validate_horizons) {
    double err = dynamics::h_step_validation(model, trajs, h);
    rows.push_back({std::to_string(h), csv::format_double(err)});
    std::cout << "H = " << h << ": error = " << err << "\n";
  }
  write_summary_csv(out + "/validation.csv", {"H", "error"}, rows);
  return 0;
}

struct AblateArgs {
  std::string axis;
  std::string values;
  int num_seeds = 1;
};

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, sep)) out.push_back(tok);
  return out;
}

ExperimentConfig apply_axis_value(const ExperimentConfig& base, const std::string& axis,
                                  const std::string& value) {
  ExperimentConfig cfg = base;
  if (axis == "epochs") {
    cfg.agg.epochs_per_iter = static_cast<int>(std::stol(value));
  } else if (axis == "split") {
    auto parts = split_on(value, '/');
    if (parts.size() != 2) throw std::runtime_error("ablate: split values look like 0.1/0.9");
    cfg.agg.split_rand = std::stod(parts[0]);
    cfg.agg.split_rl = std::stod(parts[1]);
  } else if (axis == "horizon_k") {
    auto parts = split_on(value, ':');
    if (parts.size() != 2) throw std::runtime_error("ablate: horizon_k values look like H:K");
    cfg.agg.mpc.horizon = static_cast<int>(std::stol(parts[0]));
    cfg.agg.mpc.num_candidates = static_cast<int>(std::stol(parts[1]));
  } else if (axis == "init_rollouts") {
    cfg.agg.init_rollouts = static_cast<int>(std::stol(value));
  } else {
    throw std::runtime_error("ablate: unknown axis " + axis);
  }
  config::validate(cfg);
  return cfg;
}

int cmd_ablate(const ExperimentConfig& cfg, const AblateArgs& args, const std::string& out) {
  std::vector<std::vector<std::string>> rows;
  for (const std::string& value : split_on(args.values, ',')) {
    for (int i = 0; i < args.num_seeds; ++i) {
      std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(i);
      std::string status = "ok";
      double final_return = std::numeric_limits<double>::quiet_NaN();
      try {
        ExperimentConfig run_cfg = apply_axis_value(cfg, args.axis, value);
        run_cfg.seed = seed;
        final_return = run_aggregate_pipeline(run_cfg, true).eval_return;
      } catch (const std::exception& e) {
        status = "error";
        std::cerr << "ablate: " << args.axis << " = " << value << ", seed " << seed
                  << " failed: " << e.what() << "\n";
      }
      rows.push_back({args.axis, value, std::to_string(seed), csv::format_double(final_return),
                      status});
      std::cout << args.axis << " = " << value << ", seed " << seed << ": " << final_return
                << " (" << status << ")\n";
    }
  }
  write_summary_csv(out + "/sweep.csv", {"axis", "value", "seed", "final_return", "status"}, rows);
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"model-based RL with learned dynamics and random-shooting MPC"};
  app.require_subcommand(1);

  struct Shared {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out;
    std::int64_t seed = -1;
    bool parallel_shooting = false;
  };
  Shared shared;
  AblateArgs ablate_args;

  auto add_shared = [&shared](CLI::App* cmd) {
    cmd->add_option("--config", shared.config_path, "experiment config file")->required();
    cmd->add_option("--override", shared.overrides, "key=value config overrides");
    cmd->add_option("--out", shared.out, "output directory");
    cmd->add_option("--seed", shared.seed, "override the config seed");
    cmd->add_flag("--parallel-shooting", shared.parallel_shooting,
                  "evaluate shooting candidates on all hardware threads");
  };

  const std::vector<std::string> commands = {"train-dynamics", "run-mpc", "aggregate",
                                             "follow-path",    "imitate", "finetune",
                                             "validate",       "ablate"};
  for (const std::string& name : commands) add_shared(app.add_subcommand(name));
  CLI::App* ablate_cmd = app.get_subcommand("ablate");
  ablate_cmd->add_option("--axis", ablate_args.axis, "epochs | split | horizon_k | init_rollouts")
      ->required();
  ablate_cmd->add_option("--values", ablate_args.values, "comma-separated axis values")
      ->required();
  ablate_cmd->add_option("--seeds", ablate_args.num_seeds, "seeds per value (config.seed + i)");

  try {
    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    ExperimentConfig cfg = [&] {
      std::ifstream in(shared.config_path);
      if (!in) throw std::invalid_argument("config: cannot open " + shared.config_path);
      std::stringstream ss;
      ss << in.rdbuf();
      return config::config_from_text(ss.str(), shared.overrides);
    }();
    if (shared.seed >= 0) cfg.seed = static_cast<std::uint64_t>(shared.seed);
    if (!shared.out.empty()) cfg.out_dir = shared.out;
    if (shared.parallel_shooting)
      cfg.agg.mpc.num_threads = static_cast<int>(std::thread::hardware_concurrency());

    std::string out = resolve_out_dir(cfg, command);
    write_manifest(out, command, cfg);

    if (command == "train-dynamics") return cmd_train_dynamics(cfg, out);
    if (command == "aggregate") return cmd_aggregate(cfg, out);
    if (command == "run-mpc") return cmd_run_mpc(cfg, out);
    if (command == "follow-path") return cmd_follow_path(cfg, out);
    if (command == "imitate") return cmd_imitate(cfg, out);
    if (command == "finetune") return cmd_finetune(cfg, out);
    if (command == "validate") return cmd_validate(cfg, out);
    if (command == "ablate") return cmd_ablate(cfg, ablate_args, out);
    std::cerr << "unknown command: " << command << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace mbmpc::cli
