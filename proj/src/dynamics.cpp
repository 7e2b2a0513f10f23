#include "mbmpc/dynamics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "mbmpc/csv.hpp"
#include "mbmpc/rng.hpp"

namespace mbmpc::dynamics {

std::string data_tag_name(DataTag tag) { return tag == DataTag::kRand ? "rand" : "rl"; }

DataTag data_tag_from_name(const std::string& name) {
  if (name == "rand") return DataTag::kRand;
  if (name == "rl") return DataTag::kRl;
  throw std::invalid_argument("unknown dataset tag: " + name);
}

void TransitionDataset::append(const TransitionDataset& other) {
  if (other.empty()) return;
  if (empty()) {
    state_dim = other.state_dim;
    action_dim = other.action_dim;
  }
  if (other.state_dim != state_dim || other.action_dim != action_dim)
    throw std::invalid_argument("TransitionDataset::append: dimension mismatch");
  inputs.insert(inputs.end(), other.inputs.begin(), other.inputs.end());
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
  dt.insert(dt.end(), other.dt.begin(), other.dt.end());
}

DynamicsModel make_dynamics_model(int state_dim, int action_dim,
                                  const std::vector<int>& hidden_sizes, nn::Activation activation,
                                  std::uint64_t seed) {
  std::vector<int> sizes;
  sizes.push_back(state_dim + action_dim);
  sizes.insert(sizes.end(), hidden_sizes.begin(), hidden_sizes.end());
  sizes.push_back(state_dim);

  DynamicsModel model;
  model.net = nn::init_params(sizes, activation, seed);
  model.state_dim = state_dim;
  model.action_dim = action_dim;
  // Identity stats until the first training pass refreshes them.
  model.stats.input_mean.assign(state_dim + action_dim, 0.0);
  model.stats.input_std.assign(state_dim + action_dim, 1.0);
  model.stats.label_mean.assign(state_dim, 0.0);
  model.stats.label_std.assign(state_dim, 1.0);
  return model;
}

TransitionDataset slice_trajectories(const std::vector<Trajectory>& trajs, DataTag tag) {
  TransitionDataset ds;
  ds.tag = tag;
  for (const Trajectory& traj : trajs) {
    for (const Transition& tr : traj.transitions) {
      if (ds.empty()) {
        ds.state_dim = static_cast<int>(tr.state.size());
        ds.action_dim = static_cast<int>(tr.action.size());
      }
      if (static_cast<int>(tr.state.size()) != ds.state_dim ||
          static_cast<int>(tr.action.size()) != ds.action_dim ||
          tr.next_state.size() != tr.state.size())
        throw std::invalid_argument("slice_trajectories: inconsistent dimensions");
      ds.inputs.push_back(concat(tr.state, tr.action));
      ds.labels.push_back(tr.next_state - tr.state);
      ds.dt.push_back(tr.dt);
    }
  }
  return ds;
}

namespace {

void mean_std(const std::vector<Vec>& rows, Vec& mean, Vec& std) {
  std::size_t dim = rows.front().size();
  mean.assign(dim, 0.0);
  std.assign(dim, 0.0);
  for (const Vec& r : rows)
    for (std::size_t i = 0; i < dim; ++i) mean[i] += r[i];
  for (std::size_t i = 0; i < dim; ++i) mean[i] /= static_cast<double>(rows.size());
  for (const Vec& r : rows)
    for (std::size_t i = 0; i < dim; ++i) {
      double d = r[i] - mean[i];
      std[i] += d * d;
    }
  for (std::size_t i = 0; i < dim; ++i) {
    // Population standard deviation, floored.
    std[i] = std::sqrt(std[i] / static_cast<double>(rows.size()));
    if (std[i] < kStdFloor) std[i] = kStdFloor;
  }
}

}  // namespace

NormStats compute_norm_stats(const TransitionDataset& dataset) {
  if (dataset.empty()) throw std::invalid_argument("compute_norm_stats: empty dataset");
  NormStats stats;
  mean_std(dataset.inputs, stats.input_mean, stats.input_std);
  mean_std(dataset.labels, stats.label_mean, stats.label_std);
  return stats;
}

Vec normalize(const Vec& x, const Vec& mean, const Vec& std) {
  Vec z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = (x[i] - mean[i]) / std[i];
  return z;
}

Vec denormalize(const Vec& z, const Vec& mean, const Vec& std) {
  Vec x(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) x[i] = z[i] * std[i] + mean[i];
  return x;
}

TransitionDataset augment_noise(const TransitionDataset& dataset, double sigma,
                                std::uint64_t seed) {
  if (sigma < 0.0) throw std::invalid_argument("augment_noise: negative sigma");
  TransitionDataset out = dataset;
  if (sigma == 0.0) return out;
  Rng rng(seed);
  for (Vec& row : out.inputs)
    for (double& v : row) v += rng.gaussian(0.0, sigma);
  for (Vec& row : out.labels)
    for (double& v : row) v += rng.gaussian(0.0, sigma);
  return out;
}

std::pair<int, int> batch_split_counts(double split_rand, int batch_size, bool rand_empty,
                                       bool rl_empty) {
  if (rand_empty && rl_empty) throw std::invalid_argument("batch_split_counts: both pools empty");
  if (rl_empty) return {batch_size, 0};
  if (rand_empty) return {0, batch_size};
  int n_rand = static_cast<int>(std::ceil(split_rand * batch_size));
  if (n_rand > batch_size) n_rand = batch_size;
  return {n_rand, batch_size - n_rand};
}

TrainReport train_dynamics(DynamicsModel& model, const TransitionDataset& d_rand,
                           const TransitionDataset& d_rl, const TrainConfig& cfg,
                           nn::AdamState& adam) {
  if (d_rand.empty() && d_rl.empty())
    throw std::invalid_argument("train_dynamics: both datasets empty");
  if (cfg.epochs < 0 || cfg.batch_size < 1)
    throw std::invalid_argument("train_dynamics: bad epochs/batch_size");
  if (std::abs(cfg.split_rand + cfg.split_rl - 1.0) > 1e-9)
    throw std::invalid_argument("train_dynamics: split fractions must sum to 1");

  TransitionDataset union_ds = d_rand;
  union_ds.append(d_rl);
  model.stats = compute_norm_stats(union_ds);

  TrainReport report;
  if (cfg.epochs == 0) return report;

  Rng rng(cfg.rng_seed);

  // Normalized copies of each pool; noise lands here (after normalization) or
  // on raw values first, per cfg.noise_after_norm.
  auto build_pool = [&](const TransitionDataset& src, std::vector<Vec>& in,
                        std::vector<Vec>& lab) {
    TransitionDataset raw = src;
    if (!cfg.noise_after_norm && cfg.noise_sigma > 0.0)
      raw = augment_noise(raw, cfg.noise_sigma, rng.next_u64());
    in.reserve(raw.size());
    lab.reserve(raw.size());
    for (std::size_t k = 0; k < raw.size(); ++k) {
      in.push_back(normalize(raw.inputs[k], model.stats.input_mean, model.stats.input_std));
      lab.push_back(normalize(raw.labels[k], model.stats.label_mean, model.stats.label_std));
    }
    if (cfg.noise_after_norm && cfg.noise_sigma > 0.0) {
      std::uint64_t noise_seed = rng.next_u64();
      Rng noise(noise_seed);
      for (Vec& row : in)
        for (double& v : row) v += noise.gaussian(0.0, cfg.noise_sigma);
      for (Vec& row : lab)
        for (double& v : row) v += noise.gaussian(0.0, cfg.noise_sigma);
    }
  };

  std::vector<Vec> rand_in, rand_lab, rl_in, rl_lab;
  build_pool(d_rand, rand_in, rand_lab);
  build_pool(d_rl, rl_in, rl_lab);

  std::vector<const Vec*> all_in, all_lab;
  for (std::size_t k = 0; k < rand_in.size(); ++k) {
    all_in.push_back(&rand_in[k]);
    all_lab.push_back(&rand_lab[k]);
  }
  for (std::size_t k = 0; k < rl_in.size(); ++k) {
    all_in.push_back(&rl_in[k]);
    all_lab.push_back(&rl_lab[k]);
  }

  long total = static_cast<long>(all_in.size());
  int steps_per_epoch = static_cast<int>(std::max<long>(1, total / cfg.batch_size));
  auto [quota_rand, quota_rl] =
      batch_split_counts(cfg.split_rand, cfg.batch_size, rand_in.empty(), rl_in.empty());

  std::vector<const Vec*> batch_in(cfg.batch_size), batch_lab(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int step = 0; step < steps_per_epoch; ++step) {
      int b = 0;
      for (int k = 0; k < quota_rand; ++k, ++b) {
        int idx = rng.uniform_int(static_cast<int>(rand_in.size()));
        batch_in[b] = &rand_in[idx];
        batch_lab[b] = &rand_lab[idx];
      }
      for (int k = 0; k < quota_rl; ++k, ++b) {
        int idx = rng.uniform_int(static_cast<int>(rl_in.size()));
        batch_in[b] = &rl_in[idx];
        batch_lab[b] = &rl_lab[idx];
      }
      double loss = nn::mse_batch_step(model.net, adam, batch_in, batch_lab);
      if (!std::isfinite(loss))
        throw std::runtime_error("train_dynamics: non-finite loss at epoch " +
                                 std::to_string(epoch) + " step " + std::to_string(step));
    }
    report.epoch_loss.push_back(nn::mse_objective(model.net, all_in, all_lab));
  }
  return report;
}

Vec predict_delta(const DynamicsModel& model, const Vec& state, const Vec& action) {
  if (static_cast<int>(state.size()) != model.state_dim ||
      static_cast<int>(action.size()) != model.action_dim)
    throw std::invalid_argument("predict_delta: dimension mismatch");
  Vec input = normalize(concat(state, action), model.stats.input_mean, model.stats.input_std);
  return denormalize(nn::mlp_forward(model.net, input), model.stats.label_mean,
                     model.stats.label_std);
}

Vec predict_next(const DynamicsModel& model, const Vec& state, const Vec& action) {
  Vec next = state + predict_delta(model, state, action);
  if (!all_finite(next)) throw std::runtime_error("predict_next: non-finite prediction");
  return next;
}

StepFn as_step_fn(const DynamicsModel& model) {
  auto snapshot = std::make_shared<const DynamicsModel>(model);
  return [snapshot](const Vec& s, const Vec& a) { return predict_next(*snapshot, s, a); };
}

std::vector<Vec> rollout_open_loop(const StepFn& step, const Vec& s0,
                                   const std::vector<Vec>& actions) {
  if (actions.empty()) throw std::invalid_argument("rollout_open_loop: need at least one action");
  std::vector<Vec> states;
  states.reserve(actions.size());
  Vec s = s0;
  for (std::size_t h = 0; h < actions.size(); ++h) {
    s = step(s, actions[h]);
    for (double v : s)
      if (!std::isfinite(v) || std::abs(v) > 1e9)
        throw std::runtime_error("rollout_open_loop: diverged at step " + std::to_string(h));
    states.push_back(s);
  }
  return states;
}

std::vector<Vec> rollout_open_loop(const DynamicsModel& model, const Vec& s0,
                                   const std::vector<Vec>& actions) {
  return rollout_open_loop(as_step_fn(model), s0, actions);
}

double h_step_validation(const StepFn& step, const std::vector<Trajectory>& val_trajs,
                         int horizon) {
  if (horizon < 1) throw std::invalid_argument("h_step_validation: horizon must be >= 1");
  double total = 0.0;
  long count = 0;
  for (const Trajectory& traj : val_trajs) {
    int num_transitions = static_cast<int>(traj.transitions.size());
    for (int t = 0; t + horizon <= num_transitions; ++t) {
      Vec s_hat = traj.transitions[t].state;
      double acc = 0.0;
      for (int h = 0; h < horizon; ++h) {
        const Transition& tr = traj.transitions[t + h];
        s_hat = step(s_hat, tr.action);
        acc += 0.5 * squared_norm(tr.next_state - s_hat);
      }
      total += acc / static_cast<double>(horizon);
      ++count;
    }
  }
  if (count == 0)
    throw std::invalid_argument("h_step_validation: horizon exceeds every trajectory");
  return total / static_cast<double>(count);
}

double h_step_validation(const DynamicsModel& model, const std::vector<Trajectory>& val_trajs,
                         int horizon) {
  return h_step_validation(as_step_fn(model), val_trajs, horizon);
}

double objective_raw(const DynamicsModel& model, const TransitionDataset& dataset) {
  if (dataset.empty()) throw std::invalid_argument("objective_raw: empty dataset");
  double total = 0.0;
  for (std::size_t k = 0; k < dataset.size(); ++k) {
    Vec s(dataset.inputs[k].begin(), dataset.inputs[k].begin() + model.state_dim);
    Vec a(dataset.inputs[k].begin() + model.state_dim, dataset.inputs[k].end());
    Vec delta = predict_next(model, s, a) - s;
    total += 0.5 * squared_norm(dataset.labels[k] - delta);
  }
  return total / static_cast<double>(dataset.size());
}

void write_dataset_csv(const std::string& path, const TransitionDataset& dataset, bool append) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw std::runtime_error("write_dataset_csv: cannot open " + path);
  if (!append) {
    std::vector<std::string> header;
    for (int i = 0; i < dataset.state_dim; ++i) header.push_back("s_" + std::to_string(i));
    for (int i = 0; i < dataset.action_dim; ++i) header.push_back("a_" + std::to_string(i));
    for (int i = 0; i < dataset.state_dim; ++i) header.push_back("sn_" + std::to_string(i));
    header.push_back("dt");
    header.push_back("tag");
    out << csv::join(header) << "\n";
  }
  for (std::size_t k = 0; k < dataset.size(); ++k) {
    std::vector<std::string> row;
    for (int i = 0; i < dataset.state_dim + dataset.action_dim; ++i)
      row.push_back(csv::format_double(dataset.inputs[k][i]));
    for (int i = 0; i < dataset.state_dim; ++i)
      row.push_back(csv::format_double(dataset.inputs[k][i] + dataset.labels[k][i]));
    row.push_back(csv::format_double(dataset.dt[k]));
    row.push_back(data_tag_name(dataset.tag));
    out << csv::join(row) << "\n";
  }
}

std::pair<TransitionDataset, TransitionDataset> read_dataset_csv(const std::string& path) {
  auto table = csv::read_table(path);
  if (table.header.empty()) throw std::runtime_error("read_dataset_csv: missing header in " + path);

  int state_dim = 0, action_dim = 0;
  for (const std::string& col : table.header) {
    if (col.rfind("s_", 0) == 0 && col.rfind("sn_", 0) != 0) ++state_dim;
    if (col.rfind("a_", 0) == 0) ++action_dim;
  }
  if (state_dim == 0) throw std::runtime_error("read_dataset_csv: no state columns in " + path);

  TransitionDataset rand_ds, rl_ds;
  for (auto& ds : {&rand_ds, &rl_ds}) {
    ds->state_dim = state_dim;
    ds->action_dim = action_dim;
  }
  rl_ds.tag = DataTag::kRl;

  for (const auto& row : table.rows) {
    if (static_cast<int>(row.size()) != 2 * state_dim + action_dim + 2)
      throw std::runtime_error("read_dataset_csv: bad row width in " + path);
    Vec input(state_dim + action_dim), label(state_dim);
    for (int i = 0; i < state_dim + action_dim; ++i) input[i] = std::stod(row[i]);
    for (int i = 0; i < state_dim; ++i)
      label[i] = std::stod(row[state_dim + action_dim + i]) - input[i];
    double dt = std::stod(row[2 * state_dim + action_dim]);
    DataTag tag = data_tag_from_name(row[2 * state_dim + action_dim + 1]);
    TransitionDataset& ds = (tag == DataTag::kRand) ? rand_ds : rl_ds;
    ds.inputs.push_back(std::move(input));
    ds.labels.push_back(std::move(label));
    ds.dt.push_back(dt);
  }
  return {std::move(rand_ds), std::move(rl_ds)};
}

std::string model_to_json(const DynamicsModel& model) {
  nlohmann::json j;
  j["net"] = nlohmann::json::parse(nn::params_to_json(model.net));
  j["stats"] = {{"input_mean", model.stats.input_mean},
                {"input_std", model.stats.input_std},
                {"label_mean", model.stats.label_mean},
                {"label_std", model.stats.label_std}};
  j["state_dim"] = model.state_dim;
  j["action_dim"] = model.action_dim;
  return j.dump();
}

DynamicsModel model_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  DynamicsModel model;
  model.net = nn::params_from_json(j.at("net").dump());
  model.stats.input_mean = j.at("stats").at("input_mean").get<Vec>();
  model.stats.input_std = j.at("stats").at("input_std").get<Vec>();
  model.stats.label_mean = j.at("stats").at("label_mean").get<Vec>();
  model.stats.label_std = j.at("stats").at("label_std").get<Vec>();
  model.state_dim = j.at("state_dim").get<int>();
  model.action_dim = j.at("action_dim").get<int>();
  return model;
}

void save_model(const std::string& path, const DynamicsModel& model) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_model: cannot open " + path);
  out << model_to_json(model) << "\n";
}

DynamicsModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_model: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace mbmpc::dynamics
