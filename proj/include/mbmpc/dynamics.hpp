#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mbmpc/nn.hpp"
#include "mbmpc/vec.hpp"

namespace mbmpc::dynamics {

// One recorded environment step. Actions are expected in [-1, 1] per
// dimension; state and next_state share the same length and units.
struct Transition {
  Vec state;
  Vec action;
  Vec next_state;
  double dt = 0.0;
};

// Ordered rollout; next_state of record i equals state of record i+1 exactly
// for recorded rollouts. length() counts states, not transitions.
struct Trajectory {
  std::vector<Transition> transitions;
  double dt = 0.0;

  int length() const { return static_cast<int>(transitions.size()) + 1; }
};

enum class DataTag { kRand, kRl };

std::string data_tag_name(DataTag tag);
DataTag data_tag_from_name(const std::string& name);

// Inputs are concatenated (state, action); labels are next_state - state.
struct TransitionDataset {
  int state_dim = 0;
  int action_dim = 0;
  std::vector<Vec> inputs;
  std::vector<Vec> labels;
  std::vector<double> dt;
  DataTag tag = DataTag::kRand;

  std::size_t size() const { return inputs.size(); }
  bool empty() const { return inputs.empty(); }
  void append(const TransitionDataset& other);
};

// Per-dimension statistics over dataset inputs and labels. Stds are floored
// at kStdFloor so degenerate dimensions stay usable.
struct NormStats {
  Vec input_mean, input_std;
  Vec label_mean, label_std;
};

inline constexpr double kStdFloor = 1e-8;

struct DynamicsModel {
  nn::MlpParams net;  // input dim |S|+|A|, output dim |S|
  NormStats stats;
  int state_dim = 0;
  int action_dim = 0;
};

DynamicsModel make_dynamics_model(int state_dim, int action_dim,
                                  const std::vector<int>& hidden_sizes, nn::Activation activation,
                                  std::uint64_t seed);

TransitionDataset slice_trajectories(const std::vector<Trajectory>& trajs,
                                     DataTag tag = DataTag::kRand);

NormStats compute_norm_stats(const TransitionDataset& dataset);

Vec normalize(const Vec& x, const Vec& mean, const Vec& std);
Vec denormalize(const Vec& z, const Vec& mean, const Vec& std);

// Independent N(0, sigma^2) on every input and label component; the source
// dataset is left untouched.
TransitionDataset augment_noise(const TransitionDataset& dataset, double sigma,
                                std::uint64_t seed);

struct TrainConfig {
  double split_rand = 1.0;  // fraction of each mini-batch drawn from d_rand
  double split_rl = 0.0;
  int epochs = 60;
  int batch_size = 512;
  double learning_rate = 1e-3;
  double noise_sigma = 0.0;
  bool noise_after_norm = true;
  std::uint64_t rng_seed = 0;
};

struct TrainReport {
  std::vector<double> epoch_loss;  // mean 1/2 ||.||^2 on normalized labels
};

// How many samples a mini-batch takes from each pool. The d_rand quota is
// ceil(split_rand * batch); an empty pool forfeits its quota to the other.
std::pair<int, int> batch_split_counts(double split_rand, int batch_size, bool rand_empty,
                                       bool rl_empty);

// Refreshes the model's normalization stats over the union of both pools,
// then trains with per-batch split sampling (with replacement per pool).
TrainReport train_dynamics(DynamicsModel& model, const TransitionDataset& d_rand,
                           const TransitionDataset& d_rl, const TrainConfig& cfg,
                           nn::AdamState& adam);

// Denormalized net prediction on the normalized (s, a); depends on the state
// only through the network input.
Vec predict_delta(const DynamicsModel& model, const Vec& state, const Vec& action);

// s_next = s + predict_delta(model, s, a).
Vec predict_next(const DynamicsModel& model, const Vec& state, const Vec& action);

// Generic one-step predictor; learned models and analytic oracles both fit.
// Must be pure: shooting calls it concurrently.
using StepFn = std::function<Vec(const Vec& state, const Vec& action)>;

StepFn as_step_fn(const DynamicsModel& model);

// Iterated predict_next, feeding predictions back in; aborts with the step
// index once any component exceeds 1e9 in magnitude.
std::vector<Vec> rollout_open_loop(const StepFn& step, const Vec& s0,
                                   const std::vector<Vec>& actions);
std::vector<Vec> rollout_open_loop(const DynamicsModel& model, const Vec& s0,
                                   const std::vector<Vec>& actions);

// Mean over trajectories and start offsets of (1/H) sum_h 1/2 ||s_(t+h) -
// s_hat_(t+h)||^2, propagating the model forward under recorded actions.
// Raw (denormalized) units.
double h_step_validation(const StepFn& step, const std::vector<Trajectory>& val_trajs, int horizon);
double h_step_validation(const DynamicsModel& model, const std::vector<Trajectory>& val_trajs,
                         int horizon);

// Training objective evaluated in raw units: mean 1/2 ||label - (predict_next
// - s)||^2 over the dataset.
double objective_raw(const DynamicsModel& model, const TransitionDataset& dataset);

// CSV schema: s_0..s_{n-1}, a_0..a_{m-1}, sn_0..sn_{n-1}, dt, tag.
void write_dataset_csv(const std::string& path, const TransitionDataset& dataset, bool append = false);
std::pair<TransitionDataset, TransitionDataset> read_dataset_csv(const std::string& path);

std::string model_to_json(const DynamicsModel& model);
DynamicsModel model_from_json(const std::string& text);
void save_model(const std::string& path, const DynamicsModel& model);
DynamicsModel load_model(const std::string& path);

}  // namespace mbmpc::dynamics
