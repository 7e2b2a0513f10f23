#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mbmpc/envs.hpp"
#include "mbmpc/loop.hpp"

namespace mbmpc::config {

inline constexpr const char* kVersion = "mbmpc 0.1.0";
inline constexpr const char* kOutputRootEnvVar = "MBMPC_OUT_ROOT";

// Every knob of an experiment, filled with documented defaults and validated
// before any compute starts. Loaded from a `key = value` text file; unknown
// keys are rejected.
struct ExperimentConfig {
  envs::EnvSpec env;

  loop::AggregationConfig agg;
  envs::Exploration exploration = envs::Exploration::kStandard;

  // imitation
  std::vector<int> policy_hidden{64, 64};
  double policy_std = 1.0;
  int expert_rollouts = 30;
  int expert_rollout_length = 50;
  double action_noise_sigma = 0.07071067811865475;  // sqrt(0.005)
  int bc_epochs = 70;
  int bc_batch = 500;
  double bc_lr = 1e-4;
  int dagger_iters = 3;
  int dagger_rollouts_per_iter = 5;
  int dagger_epochs_per_iter = 70;

  loop::FinetuneConfig finetune;
  int finetune_episode_length = 50;
  std::string finetune_init = "policy";  // policy | random

  // path following
  std::string path_file;
  double path_alpha = 1.0;
  double path_beta = 1.0;

  // evaluation episodes (run-mpc, follow-path, ablation scoring)
  int eval_episodes = 3;
  int eval_episode_length = 100;

  // model source for planning commands
  std::string model_file;
  bool oracle = false;
  std::string policy_file;

  std::vector<int> validate_horizons{1, 5, 10, 20};
  int validate_rollouts = 10;
  int validate_rollout_length = 60;

  std::uint64_t seed = 0;
  std::string out_dir;
  bool parallel_shooting = false;
};

// Parses and fully validates; throws std::invalid_argument with the file line
// number on parse errors and the field name on validation errors.
ExperimentConfig load_config(const std::string& path);

// Same, from in-memory text (line numbers refer to the text). `overrides`
// are key=value pairs applied after the file content.
ExperimentConfig config_from_text(const std::string& text,
                                  const std::vector<std::string>& overrides = {});

// Normalized full dump, reloadable by load_config.
std::string config_to_text(const ExperimentConfig& cfg);

void validate(const ExperimentConfig& cfg);

}  // namespace mbmpc::config
