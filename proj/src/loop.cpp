#include "mbmpc/loop.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "mbmpc/csv.hpp"
#include "mbmpc/rng.hpp"

namespace mbmpc::loop {

TaskSpec make_forward_task(const EnvSpec& env, double discount) {
  TaskSpec task;
  task.exploration = Exploration::kStandard;
  task.make_scorer = [env, discount](const StepFn& model) {
    RewardFn reward = [env](const Vec& s_next, const Vec& a) {
      return envs::reward_forward(env, s_next, a);
    };
    return control::make_return_scorer(model, reward, discount);
  };
  task.make_realized_reward = [env](const Vec&) {
    return RewardFn([env](const Vec& s_next, const Vec& a) {
      return envs::reward_forward(env, s_next, a);
    });
  };
  return task;
}

TaskSpec make_path_task(const EnvSpec& env, const control::PathSpec& path,
                        Exploration exploration) {
  TaskSpec task;
  task.exploration = env.heading_index ? exploration : Exploration::kStandard;
  task.make_scorer = [path](const StepFn& model) { return control::make_path_scorer(model, path); };
  task.make_realized_reward = [path](const Vec& s0) {
    // The reward closure owns the path: it must outlive the TaskSpec that
    // created it.
    auto owned = std::make_shared<const control::PathSpec>(path);
    auto tracker = std::make_shared<control::PathProgressTracker>(*owned, s0[0], s0[1]);
    return RewardFn([owned, tracker](const Vec& s_next, const Vec&) {
      return tracker->step_reward(s_next[0], s_next[1]);
    });
  };
  return task;
}

void validate(const AggregationConfig& cfg) {
  if (cfg.max_iter < 1) throw std::invalid_argument("aggregation: max_iter must be >= 1");
  if (cfg.rollouts_per_iter < 0)
    throw std::invalid_argument("aggregation: rollouts_per_iter must be >= 0");
  if (cfg.rollouts_per_iter > 0 && cfg.rollout_length < 1)
    throw std::invalid_argument("aggregation: rollout_length must be >= 1");
  if (cfg.epochs_per_iter < 0)
    throw std::invalid_argument("aggregation: epochs_per_iter must be >= 0");
  if (cfg.split_rand < 0.0 || cfg.split_rl < 0.0 ||
      std::abs(cfg.split_rand + cfg.split_rl - 1.0) > 1e-9)
    throw std::invalid_argument("aggregation: split fractions must be in [0,1] and sum to 1");
  if (cfg.init_rollouts < 1) throw std::invalid_argument("aggregation: init_rollouts must be >= 1");
  if (cfg.init_rollout_length < 2)
    throw std::invalid_argument("aggregation: init_rollout_length must be >= 2");
  if (cfg.val_fraction < 0.0 || cfg.val_fraction >= 1.0)
    throw std::invalid_argument("aggregation: val_fraction must be in [0,1)");
  if (cfg.hidden_sizes.empty())
    throw std::invalid_argument("aggregation: need at least one hidden layer");
}

namespace {

double validation_error_or_nan(const DynamicsModel& model,
                               const std::vector<Trajectory>& val_trajs, int horizon) {
  for (const Trajectory& traj : val_trajs)
    if (static_cast<int>(traj.transitions.size()) >= horizon)
      return dynamics::h_step_validation(model, val_trajs, horizon);
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

MbrlResult run_mbrl(const EnvSpec& env, const AggregationConfig& cfg, const TaskSpec& task,
                    std::uint64_t seed, const IterCallback& on_iter) {
  validate(cfg);

  MbrlResult result;

  // Initial off-policy data, with a held-out validation share.
  std::vector<Trajectory> init_trajs =
      envs::collect_random_rollouts(env, cfg.init_rollouts, cfg.init_rollout_length,
                                    derive_seed(seed, "init-data"), task.exploration);
  int num_val = 0;
  if (cfg.val_fraction > 0.0)
    num_val = std::min<int>(static_cast<int>(init_trajs.size()) - 1,
                            std::max(1, static_cast<int>(std::lround(
                                            cfg.val_fraction * init_trajs.size()))));
  if (num_val < 0) num_val = 0;
  {
    Rng shuffle_rng(derive_seed(seed, "val-split"));
    std::vector<int> order(init_trajs.size());
    std::iota(order.begin(), order.end(), 0);
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.uniform_int(i + 1)]);
    std::vector<Trajectory> train_trajs;
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (static_cast<int>(i) < num_val)
        result.val_trajs.push_back(init_trajs[order[i]]);
      else
        train_trajs.push_back(init_trajs[order[i]]);
    }
    result.d_rand = dynamics::slice_trajectories(train_trajs, dynamics::DataTag::kRand);
  }
  result.d_rl.state_dim = env.state_dim;
  result.d_rl.action_dim = env.action_dim;
  result.d_rl.tag = dynamics::DataTag::kRl;

  long env_steps =
      static_cast<long>(cfg.init_rollouts) * (cfg.init_rollout_length - 1);

  result.model = dynamics::make_dynamics_model(env.state_dim, env.action_dim, cfg.hidden_sizes,
                                               cfg.activation, derive_seed(seed, "net-init"));

  for (int iter = 1; iter <= cfg.max_iter; ++iter) {
    // Train with weights warm-started from the previous iteration.
    dynamics::TrainConfig train_cfg;
    train_cfg.split_rand = cfg.split_rand;
    train_cfg.split_rl = cfg.split_rl;
    train_cfg.epochs = cfg.epochs_per_iter;
    train_cfg.batch_size = cfg.batch_size;
    train_cfg.learning_rate = cfg.learning_rate;
    train_cfg.noise_sigma = cfg.noise_sigma;
    train_cfg.noise_after_norm = cfg.noise_after_norm;
    train_cfg.rng_seed = derive_seed(seed, "train", static_cast<std::uint64_t>(iter));

    nn::AdamState adam = nn::make_adam_state(result.model.net, cfg.learning_rate);
    dynamics::TrainReport report =
        dynamics::train_dynamics(result.model, result.d_rand, result.d_rl, train_cfg, adam);

    if (on_iter) on_iter(iter, result.model);

    IterationMetrics m;
    m.iter = iter;
    m.train_loss = report.epoch_loss.empty() ? std::numeric_limits<double>::quiet_NaN()
                                             : report.epoch_loss.back();
    m.val_err_h1 = validation_error_or_nan(result.model, result.val_trajs, 1);
    m.val_err_h5 = validation_error_or_nan(result.model, result.val_trajs, 5);
    m.val_err_h10 = validation_error_or_nan(result.model, result.val_trajs, 10);

    // On-policy rollouts with the fresh model.
    SequenceScorer scorer = task.make_scorer(dynamics::as_step_fn(result.model));
    double return_sum = 0.0;
    for (int r = 0; r < cfg.rollouts_per_iter; ++r) {
      Vec s0 = envs::sample_initial_state(
          env, derive_seed(seed, "mpc-init", static_cast<std::uint64_t>(iter), r),
          task.exploration);
      MpcConfig mpc = cfg.mpc;
      mpc.rng_seed = derive_seed(seed, "mpc", static_cast<std::uint64_t>(iter), r);
      control::EpisodeResult episode = control::mpc_run(
          env, scorer, task.make_realized_reward(s0), s0, cfg.rollout_length, mpc);
      return_sum += episode.realized_return;
      result.d_rl.append(
          dynamics::slice_trajectories({episode.trajectory}, dynamics::DataTag::kRl));
      env_steps += cfg.rollout_length;
    }
    m.mean_return = cfg.rollouts_per_iter > 0
                        ? return_sum / cfg.rollouts_per_iter
                        : std::numeric_limits<double>::quiet_NaN();
    m.env_steps_cumulative = env_steps;
    result.metrics.push_back(m);
  }
  return result;
}

void write_metrics_csv(const std::string& path, const std::vector<IterationMetrics>& metrics) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_metrics_csv: cannot open " + path);
  out << "iter,env_steps_cumulative,mean_return,val_err_H1,val_err_H5,val_err_H10,train_loss\n";
  for (const IterationMetrics& m : metrics) {
    std::vector<std::string> row{std::to_string(m.iter), std::to_string(m.env_steps_cumulative),
                                 csv::format_double(m.mean_return),
                                 csv::format_double(m.val_err_h1),
                                 csv::format_double(m.val_err_h5),
                                 csv::format_double(m.val_err_h10),
                                 csv::format_double(m.train_loss)};
    out << csv::join(row) << "\n";
  }
}

GaussianPolicy make_policy(int state_dim, int action_dim, const std::vector<int>& hidden_sizes,
                           double std_dev, std::uint64_t seed) {
  if (std_dev <= 0.0) throw std::invalid_argument("make_policy: std must be > 0");
  std::vector<int> sizes;
  sizes.push_back(state_dim);
  sizes.insert(sizes.end(), hidden_sizes.begin(), hidden_sizes.end());
  sizes.push_back(action_dim);
  GaussianPolicy policy;
  policy.mean_net = nn::init_params(sizes, nn::Activation::kTanh, seed);
  policy.std_dev.assign(action_dim, std_dev);
  policy.state_dim = state_dim;
  policy.action_dim = action_dim;
  return policy;
}

Vec policy_mean(const GaussianPolicy& policy, const Vec& state) {
  return nn::mlp_forward(policy.mean_net, state);
}

Vec policy_sample(const GaussianPolicy& policy, const Vec& state, Rng& rng) {
  Vec a = policy_mean(policy, state);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += policy.std_dev[i] * rng.gaussian(0.0, 1.0);
  return a;
}

std::string policy_to_json(const GaussianPolicy& policy) {
  nlohmann::json j;
  j["mean_net"] = nlohmann::json::parse(nn::params_to_json(policy.mean_net));
  j["std"] = policy.std_dev;
  j["state_dim"] = policy.state_dim;
  j["action_dim"] = policy.action_dim;
  return j.dump();
}

GaussianPolicy policy_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  GaussianPolicy policy;
  policy.mean_net = nn::params_from_json(j.at("mean_net").dump());
  policy.std_dev = j.at("std").get<Vec>();
  policy.state_dim = j.at("state_dim").get<int>();
  policy.action_dim = j.at("action_dim").get<int>();
  return policy;
}

void save_policy(const std::string& path, const GaussianPolicy& policy) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_policy: cannot open " + path);
  out << policy_to_json(policy) << "\n";
}

GaussianPolicy load_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_policy: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return policy_from_json(ss.str());
}

void ExpertDataset::append(const ExpertDataset& other) {
  if (other.empty()) return;
  if (empty()) {
    state_dim = other.state_dim;
    action_dim = other.action_dim;
  }
  if (other.state_dim != state_dim || other.action_dim != action_dim)
    throw std::invalid_argument("ExpertDataset::append: dimension mismatch");
  states.insert(states.end(), other.states.begin(), other.states.end());
  actions.insert(actions.end(), other.actions.begin(), other.actions.end());
}

ExpertRollouts collect_expert_rollouts(const EnvSpec& env, const StepFn& model,
                                       const TaskSpec& task, const MpcConfig& mpc,
                                       int num_rollouts, int rollout_length,
                                       double action_noise_sigma, std::uint64_t seed) {
  if (action_noise_sigma < 0.0)
    throw std::invalid_argument("collect_expert_rollouts: negative noise sigma");
  ExpertRollouts out;
  out.dataset.state_dim = env.state_dim;
  out.dataset.action_dim = env.action_dim;

  SequenceScorer scorer = task.make_scorer(model);
  double return_sum = 0.0;
  for (int r = 0; r < num_rollouts; ++r) {
    Rng noise(derive_seed(seed, "expert-noise", static_cast<std::uint64_t>(r)));
    Vec s = envs::sample_initial_state(
        env, derive_seed(seed, "expert-init", static_cast<std::uint64_t>(r)), task.exploration);
    RewardFn realized = task.make_realized_reward(s);
    Trajectory traj;
    traj.dt = env.dt;
    for (int t = 0; t < rollout_length; ++t) {
      MpcConfig step_cfg = mpc;
      step_cfg.rng_seed = derive_seed(seed, "expert-plan", static_cast<std::uint64_t>(r), t);
      control::ShootingResult plan = control::random_shooting(s, env.action_dim, step_cfg, scorer);
      const Vec& optimal = plan.best.front();

      Vec executed = optimal;
      for (double& v : executed) v += noise.gaussian(0.0, action_noise_sigma);
      executed = clipped(executed, -1.0, 1.0);

      Vec s_next = env_step(env, s, executed);
      return_sum += realized(s_next, executed);

      out.dataset.states.push_back(s);
      out.dataset.actions.push_back(optimal);
      traj.transitions.push_back({s, executed, s_next, env.dt});
      s = std::move(s_next);
    }
    out.rollouts.push_back(std::move(traj));
  }
  out.mean_return = num_rollouts > 0 ? return_sum / num_rollouts : 0.0;
  return out;
}

double imitation_objective(const GaussianPolicy& policy, const ExpertDataset& expert) {
  double total = 0.0;
  for (std::size_t k = 0; k < expert.size(); ++k)
    total += 0.5 * squared_norm(expert.actions[k] - policy_mean(policy, expert.states[k]));
  return total;
}

namespace {

// Adam training of the policy mean on (state, action) pairs; indices choose
// the training rows.
std::vector<double> train_mean_net(GaussianPolicy& policy, const ExpertDataset& data,
                                   const std::vector<int>& train_idx, int epochs, int batch_size,
                                   double learning_rate, Rng& rng) {
  std::vector<double> epoch_loss;
  if (train_idx.empty() || epochs == 0) return epoch_loss;
  nn::AdamState adam = nn::make_adam_state(policy.mean_net, learning_rate);
  int batch = std::min<int>(batch_size, static_cast<int>(train_idx.size()));
  int steps_per_epoch =
      std::max<int>(1, static_cast<int>(train_idx.size()) / batch);
  std::vector<const Vec*> in(batch), tgt(batch);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    double last = 0.0;
    for (int step = 0; step < steps_per_epoch; ++step) {
      for (int b = 0; b < batch; ++b) {
        int idx = train_idx[rng.uniform_int(static_cast<int>(train_idx.size()))];
        in[b] = &data.states[idx];
        tgt[b] = &data.actions[idx];
      }
      last = nn::mse_batch_step(policy.mean_net, adam, in, tgt);
      if (!std::isfinite(last))
        throw std::runtime_error("imitation training: non-finite loss at epoch " +
                                 std::to_string(epoch));
    }
    epoch_loss.push_back(last);
  }
  return epoch_loss;
}

double action_mse(const GaussianPolicy& policy, const ExpertDataset& data,
                  const std::vector<int>& idx) {
  if (idx.empty()) return 0.0;
  double total = 0.0;
  for (int k : idx) total += squared_norm(data.actions[k] - policy_mean(policy, data.states[k]));
  return total / static_cast<double>(idx.size());
}

}  // namespace

CloneReport behavioral_clone(GaussianPolicy& policy, const ExpertDataset& expert, int epochs,
                             int batch_size, double learning_rate, std::uint64_t seed) {
  if (expert.empty()) throw std::invalid_argument("behavioral_clone: empty expert dataset");

  // Seeded shuffle; 10% (at least one pair when possible) held out.
  Rng rng(derive_seed(seed, "clone"));
  std::vector<int> order(expert.size());
  std::iota(order.begin(), order.end(), 0);
  for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_int(i + 1)]);
  int num_held = expert.size() > 1 ? std::max(1, static_cast<int>(expert.size() / 10)) : 0;
  std::vector<int> held(order.begin(), order.begin() + num_held);
  std::vector<int> train(order.begin() + num_held, order.end());

  CloneReport report;
  report.epoch_loss = train_mean_net(policy, expert, train, epochs, batch_size, learning_rate, rng);
  report.held_out_mse = action_mse(policy, expert, held.empty() ? train : held);
  return report;
}

Vec expert_label(const StepFn& model, const TaskSpec& task, const MpcConfig& mpc,
                 const Vec& state, int action_dim, std::uint64_t seed) {
  MpcConfig cfg = mpc;
  cfg.rng_seed = seed;
  return control::random_shooting(state, action_dim, cfg, task.make_scorer(model)).best.front();
}

DaggerReport dagger_iterate(GaussianPolicy& policy, ExpertDataset& aggregate, const EnvSpec& env,
                            const StepFn& model, const TaskSpec& task, const MpcConfig& mpc,
                            int iters, int rollouts_per_iter, int rollout_length,
                            int epochs_per_iter, int batch_size, double learning_rate,
                            std::uint64_t seed) {
  DaggerReport report;
  for (int iter = 0; iter < iters; ++iter) {
    ExpertDataset visited;
    visited.state_dim = env.state_dim;
    visited.action_dim = env.action_dim;
    for (int r = 0; r < rollouts_per_iter; ++r) {
      Vec s = envs::sample_initial_state(
          env, derive_seed(seed, "dagger-init", static_cast<std::uint64_t>(iter), r),
          task.exploration);
      for (int t = 0; t < rollout_length; ++t) {
        Vec label = expert_label(model, task, mpc, s, env.action_dim,
                                 derive_seed(seed, "dagger-label", iter, r, t));
        visited.states.push_back(s);
        visited.actions.push_back(label);
        // State visitation follows the policy mean.
        Vec a = clipped(policy_mean(policy, s), -1.0, 1.0);
        s = env_step(env, s, a);
      }
    }
    std::vector<int> all(visited.size());
    std::iota(all.begin(), all.end(), 0);
    report.on_policy_mse.push_back(action_mse(policy, visited, all));

    aggregate.append(visited);
    Rng rng(derive_seed(seed, "dagger-train", static_cast<std::uint64_t>(iter)));
    std::vector<int> train_idx(aggregate.size());
    std::iota(train_idx.begin(), train_idx.end(), 0);
    train_mean_net(policy, aggregate, train_idx, epochs_per_iter, batch_size, learning_rate, rng);
  }
  return report;
}

EpisodeTask make_episode_task(const EnvSpec& env, const RewardFn& reward, int episode_length,
                              Exploration exploration) {
  EpisodeTask task;
  task.step = envs::oracle_step_fn(env);
  task.reward = reward;
  task.sample_initial = [env, exploration](Rng& rng) {
    return envs::sample_initial_state(env, rng, exploration);
  };
  task.episode_length = episode_length;
  task.state_dim = env.state_dim;
  task.action_dim = env.action_dim;
  return task;
}

FinetuneMetrics policy_gradient_finetune(GaussianPolicy& policy, const EpisodeTask& task,
                                         const FinetuneConfig& cfg, std::uint64_t seed) {
  if (cfg.batch_episodes < 1)
    throw std::invalid_argument("policy_gradient_finetune: batch_episodes must be >= 1");

  FinetuneMetrics metrics;
  nn::AdamState adam = nn::make_adam_state(policy.mean_net, cfg.learning_rate);
  long steps = 0;

  struct StepRecord {
    Vec state;
    Vec raw_action;  // pre-clip sample; the score function is defined on it
    Vec mean;
  };

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    std::vector<std::vector<StepRecord>> episodes(cfg.batch_episodes);
    std::vector<double> returns(cfg.batch_episodes, 0.0);

    for (int e = 0; e < cfg.batch_episodes; ++e) {
      Rng rng(derive_seed(seed, "episode", static_cast<std::uint64_t>(iter), e));
      Vec s = task.sample_initial(rng);
      for (int t = 0; t < task.episode_length; ++t) {
        Vec mean = policy_mean(policy, s);
        Vec raw = mean;
        for (std::size_t i = 0; i < raw.size(); ++i)
          raw[i] += policy.std_dev[i] * rng.gaussian(0.0, 1.0);
        Vec executed = clipped(raw, -1.0, 1.0);
        Vec s_next = task.step(s, executed);
        returns[e] += task.reward(s_next, executed);
        episodes[e].push_back({std::move(s), std::move(raw), std::move(mean)});
        s = std::move(s_next);
      }
      steps += task.episode_length;
    }

    double baseline = 0.0;
    for (double g : returns) baseline += g;
    baseline /= cfg.batch_episodes;

    // Gradient of -J; episodes reduce in index order.
    nn::Gradients total = nn::zero_gradients(policy.mean_net);
    double inv_batch = 1.0 / static_cast<double>(cfg.batch_episodes);
    for (int e = 0; e < cfg.batch_episodes; ++e) {
      double advantage = returns[e] - baseline;
      if (advantage == 0.0) continue;
      for (const StepRecord& rec : episodes[e]) {
        Vec out_grad(policy.action_dim);
        for (int i = 0; i < policy.action_dim; ++i) {
          double var = policy.std_dev[i] * policy.std_dev[i];
          out_grad[i] = -advantage * (rec.raw_action[i] - rec.mean[i]) / var;
        }
        nn::BackwardResult back = nn::mlp_backward(policy.mean_net, rec.state, out_grad);
        total.add_scaled(back.grads, inv_batch);
      }
    }
    for (const auto& w : total.weights)
      for (double v : w.data)
        if (!std::isfinite(v))
          throw std::runtime_error("policy_gradient_finetune: non-finite gradient at iteration " +
                                   std::to_string(iter));
    nn::adam_step(policy.mean_net, total, adam);

    metrics.mean_return.push_back(baseline);
    metrics.env_steps.push_back(steps);
  }
  return metrics;
}

void write_finetune_csv(const std::string& path, const FinetuneMetrics& metrics) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_finetune_csv: cannot open " + path);
  out << "iter,env_steps_cumulative,mean_return\n";
  for (std::size_t i = 0; i < metrics.mean_return.size(); ++i) {
    out << i + 1 << "," << metrics.env_steps[i] << ","
        << csv::format_double(metrics.mean_return[i]) << "\n";
  }
}

}  // namespace mbmpc::loop
