#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mbmpc/control.hpp"
#include "mbmpc/dynamics.hpp"
#include "mbmpc/envs.hpp"
#include "mbmpc/nn.hpp"

namespace mbmpc::loop {

using control::ActionSequence;
using control::MpcConfig;
using control::RewardFn;
using control::SequenceScorer;
using dynamics::DynamicsModel;
using dynamics::StepFn;
using dynamics::Trajectory;
using dynamics::TransitionDataset;
using envs::EnvSpec;
using envs::Exploration;

// What the controller plans for and how executed steps are rewarded.
// make_scorer builds the planning objective around a (learned or oracle)
// one-step model; make_realized_reward builds a fresh per-episode reward,
// which may carry state (path progress).
struct TaskSpec {
  std::function<SequenceScorer(const StepFn&)> make_scorer;
  std::function<RewardFn(const Vec& s0)> make_realized_reward;
  Exploration exploration = Exploration::kStandard;
};

TaskSpec make_forward_task(const EnvSpec& env, double discount);
TaskSpec make_path_task(const EnvSpec& env, const control::PathSpec& path,
                        Exploration exploration = Exploration::kHeadingSweep);

struct AggregationConfig {
  int max_iter = 3;
  int rollouts_per_iter = 5;
  int rollout_length = 100;  // executed MPC steps per aggregated rollout
  int epochs_per_iter = 30;
  double split_rand = 0.1;
  double split_rl = 0.9;
  MpcConfig mpc;

  int init_rollouts = 20;
  int init_rollout_length = 100;  // states per random rollout
  double val_fraction = 0.1;

  // dynamics net + training
  std::vector<int> hidden_sizes{500, 500};
  nn::Activation activation = nn::Activation::kRelu;
  double learning_rate = 1e-3;
  int batch_size = 512;
  double noise_sigma = 0.001;
  bool noise_after_norm = true;
};

void validate(const AggregationConfig& cfg);

// One row per aggregation iteration; the metrics CSV mirrors these fields.
struct IterationMetrics {
  int iter = 0;
  long env_steps_cumulative = 0;
  double mean_return = 0.0;
  double val_err_h1 = 0.0;
  double val_err_h5 = 0.0;
  double val_err_h10 = 0.0;
  double train_loss = 0.0;
};

struct MbrlResult {
  DynamicsModel model;
  std::vector<IterationMetrics> metrics;
  TransitionDataset d_rand;
  TransitionDataset d_rl;
  std::vector<Trajectory> val_trajs;
};

// Called after each iteration's training pass with the freshly trained model.
using IterCallback = std::function<void(int iter, const DynamicsModel& model)>;

// Alternates dynamics training (warm-started weights, split mini-batch
// sampling over d_rand/d_rl) with on-policy MPC data collection.
MbrlResult run_mbrl(const EnvSpec& env, const AggregationConfig& cfg, const TaskSpec& task,
                    std::uint64_t seed, const IterCallback& on_iter = {});

void write_metrics_csv(const std::string& path, const std::vector<IterationMetrics>& metrics);

// --- imitation ---

// Mean network with a fixed diagonal standard deviation.
struct GaussianPolicy {
  nn::MlpParams mean_net;
  Vec std_dev;
  int state_dim = 0;
  int action_dim = 0;
};

GaussianPolicy make_policy(int state_dim, int action_dim, const std::vector<int>& hidden_sizes,
                           double std_dev, std::uint64_t seed);

Vec policy_mean(const GaussianPolicy& policy, const Vec& state);
// Raw draw mean + std * xi; callers clip to [-1, 1] before execution.
Vec policy_sample(const GaussianPolicy& policy, const Vec& state, Rng& rng);

std::string policy_to_json(const GaussianPolicy& policy);
GaussianPolicy policy_from_json(const std::string& text);
void save_policy(const std::string& path, const GaussianPolicy& policy);
GaussianPolicy load_policy(const std::string& path);

struct ExpertDataset {
  int state_dim = 0;
  int action_dim = 0;
  std::vector<Vec> states;
  std::vector<Vec> actions;  // noiseless MPC actions

  std::size_t size() const { return states.size(); }
  bool empty() const { return states.empty(); }
  void append(const ExpertDataset& other);
};

struct ExpertRollouts {
  ExpertDataset dataset;
  std::vector<Trajectory> rollouts;  // executed (noisy) actions
  double mean_return = 0.0;
};

// MPC rollouts with N(0, sigma^2) exploration noise on the executed action;
// the stored labels are the noiseless optimal actions.
ExpertRollouts collect_expert_rollouts(const EnvSpec& env, const StepFn& model,
                                       const TaskSpec& task, const MpcConfig& mpc,
                                       int num_rollouts, int rollout_length,
                                       double action_noise_sigma, std::uint64_t seed);

// 1/2 sum ||a - mean(s)||^2 over the dataset.
double imitation_objective(const GaussianPolicy& policy, const ExpertDataset& expert);

struct CloneReport {
  std::vector<double> epoch_loss;
  double held_out_mse = 0.0;  // mean ||a - mean(s)||^2 on the held-out split
};

CloneReport behavioral_clone(GaussianPolicy& policy, const ExpertDataset& expert, int epochs,
                             int batch_size, double learning_rate, std::uint64_t seed);

// The label the DAgger loop queries for a visited state.
Vec expert_label(const StepFn& model, const TaskSpec& task, const MpcConfig& mpc,
                 const Vec& state, int action_dim, std::uint64_t seed);

struct DaggerReport {
  std::vector<double> on_policy_mse;  // policy-vs-expert MSE on visited states, per iteration
};

// Roll out the policy mean, relabel visited states with the MPC expert,
// aggregate, retrain. The aggregate dataset grows in place.
DaggerReport dagger_iterate(GaussianPolicy& policy, ExpertDataset& aggregate, const EnvSpec& env,
                            const StepFn& model, const TaskSpec& task, const MpcConfig& mpc,
                            int iters, int rollouts_per_iter, int rollout_length,
                            int epochs_per_iter, int batch_size, double learning_rate,
                            std::uint64_t seed);

// --- model-free fine-tuning ---

// Environment episodes expressed as plain functions so tests can substitute
// toy problems.
struct EpisodeTask {
  StepFn step;
  RewardFn reward;
  std::function<Vec(Rng&)> sample_initial;
  int episode_length = 100;
  int state_dim = 0;
  int action_dim = 0;
};

EpisodeTask make_episode_task(const EnvSpec& env, const RewardFn& reward, int episode_length,
                              Exploration exploration = Exploration::kStandard);

struct FinetuneConfig {
  int iterations = 200;
  int batch_episodes = 10;
  double learning_rate = 0.01;
};

struct FinetuneMetrics {
  std::vector<double> mean_return;     // per iteration
  std::vector<long> env_steps;         // cumulative, per iteration
};

// Score-function policy gradient on episode returns with a mean-return
// baseline; the fixed std is not optimized.
FinetuneMetrics policy_gradient_finetune(GaussianPolicy& policy, const EpisodeTask& task,
                                         const FinetuneConfig& cfg, std::uint64_t seed);

void write_finetune_csv(const std::string& path, const FinetuneMetrics& metrics);

}  // namespace mbmpc::loop
