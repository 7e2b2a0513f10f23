#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "mbmpc/dynamics.hpp"
#include "mbmpc/rng.hpp"
#include "test_util.hpp"

using namespace mbmpc;
using namespace mbmpc::dynamics;

namespace {

Trajectory make_traj(const std::vector<double>& states, double dt = 1.0) {
  Trajectory traj;
  traj.dt = dt;
  for (std::size_t i = 0; i + 1 < states.size(); ++i)
    traj.transitions.push_back({{states[i]}, {0.0}, {states[i + 1]}, dt});
  return traj;
}

// Model wrapper that ignores its inputs and predicts a constant raw delta.
DynamicsModel constant_delta_model(double delta) {
  DynamicsModel m = make_dynamics_model(1, 1, {4}, nn::Activation::kRelu, 0);
  for (auto& w : m.net.weights) std::fill(w.data.begin(), w.data.end(), 0.0);
  for (auto& b : m.net.biases) std::fill(b.begin(), b.end(), 0.0);
  m.stats.label_mean = {delta};
  m.stats.label_std = {1.0};
  return m;
}

}  // namespace

TEST_CASE("slice: single 2-step trajectory yields 2 pairs") {
  TransitionDataset ds = slice_trajectories({make_traj({0.0, 1.0, 2.5})});
  CHECK(ds.size() == 2);
  CHECK(ds.state_dim == 1);
  CHECK(ds.action_dim == 1);
}

TEST_CASE("slice: constant-state trajectory has all-zero labels") {
  TransitionDataset ds = slice_trajectories({make_traj({0.7, 0.7, 0.7, 0.7})});
  for (const Vec& label : ds.labels) CHECK(label[0] == 0.0);
}

TEST_CASE("slice: states (0),(1),(3) give labels (1),(2)") {
  TransitionDataset ds = slice_trajectories({make_traj({0.0, 1.0, 3.0})});
  CHECK(ds.labels[0][0] == 1.0);
  CHECK(ds.labels[1][0] == 2.0);
}

TEST_CASE("slice: inconsistent dimensions rejected") {
  Trajectory a = make_traj({0.0, 1.0});
  Trajectory b;
  b.dt = 1.0;
  b.transitions.push_back({{0.0, 0.0}, {0.0}, {1.0, 1.0}, 1.0});
  CHECK_THROWS_AS(slice_trajectories({a, b}), std::invalid_argument);
}

TEST_CASE("norm stats: identical rows floor the std") {
  TransitionDataset ds;
  ds.state_dim = 1;
  ds.action_dim = 1;
  for (int i = 0; i < 5; ++i) {
    ds.inputs.push_back({2.0, -0.5});
    ds.labels.push_back({1.25});
    ds.dt.push_back(1.0);
  }
  NormStats stats = compute_norm_stats(ds);
  for (double s : stats.input_std) CHECK(s == kStdFloor);
  CHECK(stats.label_std[0] == kStdFloor);
}

TEST_CASE("norm stats: rows (0) and (2) give mean 1, population std 1") {
  TransitionDataset ds;
  ds.state_dim = 1;
  ds.action_dim = 0;
  ds.inputs = {{0.0}, {2.0}};
  ds.labels = {{0.0}, {2.0}};
  ds.dt = {1.0, 1.0};
  NormStats stats = compute_norm_stats(ds);
  CHECK(stats.input_mean[0] == doctest::Approx(1.0));
  CHECK(stats.input_std[0] == doctest::Approx(1.0));
}

TEST_CASE("norm stats: empty dataset rejected") {
  CHECK_THROWS_AS(compute_norm_stats(TransitionDataset{}), std::invalid_argument);
}

TEST_CASE("norm stats: normalized dataset re-measures to mean 0, std 1") {
  Rng rng(5);
  TransitionDataset ds;
  ds.state_dim = 2;
  ds.action_dim = 1;
  for (int i = 0; i < 200; ++i) {
    ds.inputs.push_back({rng.gaussian(3.0, 2.0), rng.uniform(-5.0, 1.0), rng.gaussian(0.0, 0.1)});
    ds.labels.push_back({rng.gaussian(-1.0, 0.5), rng.uniform(0.0, 2.0)});
    ds.dt.push_back(1.0);
  }
  NormStats stats = compute_norm_stats(ds);
  TransitionDataset normed = ds;
  for (auto& row : normed.inputs) row = normalize(row, stats.input_mean, stats.input_std);
  for (auto& row : normed.labels) row = normalize(row, stats.label_mean, stats.label_std);
  NormStats re = compute_norm_stats(normed);
  for (double m : re.input_mean) CHECK(std::abs(m) < 1e-9);
  for (double s : re.input_std) CHECK(std::abs(s - 1.0) < 1e-9);
  for (double m : re.label_mean) CHECK(std::abs(m) < 1e-9);
  for (double s : re.label_std) CHECK(std::abs(s - 1.0) < 1e-9);

  SUBCASE("normalize then denormalize is the identity to 1e-12 relative") {
    for (const auto& row : ds.inputs) {
      Vec back = denormalize(normalize(row, stats.input_mean, stats.input_std), stats.input_mean,
                             stats.input_std);
      for (std::size_t i = 0; i < row.size(); ++i)
        CHECK(std::abs(back[i] - row[i]) <= 1e-12 * std::max(1.0, std::abs(row[i])));
    }
  }
}

TEST_CASE("augment: sigma 0 returns the dataset unchanged") {
  TransitionDataset ds = slice_trajectories({make_traj({0.0, 1.0, 3.0})});
  TransitionDataset out = augment_noise(ds, 0.0, 9);
  CHECK(out.inputs == ds.inputs);
  CHECK(out.labels == ds.labels);
}

TEST_CASE("augment: negative sigma rejected") {
  TransitionDataset ds = slice_trajectories({make_traj({0.0, 1.0})});
  CHECK_THROWS_AS(augment_noise(ds, -0.1, 9), std::invalid_argument);
}

TEST_CASE("augment: same seed twice gives identical datasets, source untouched") {
  TransitionDataset ds = slice_trajectories({make_traj({0.0, 1.0, 3.0, 2.0})});
  TransitionDataset copy = ds;
  TransitionDataset a = augment_noise(ds, 0.05, 17);
  TransitionDataset b = augment_noise(ds, 0.05, 17);
  CHECK(a.inputs == b.inputs);
  CHECK(a.labels == b.labels);
  CHECK(ds.inputs == copy.inputs);
  CHECK(a.inputs != ds.inputs);
}

TEST_CASE("augment: empirical perturbation std within 5% of sigma") {
  TransitionDataset ds;
  ds.state_dim = 1;
  ds.action_dim = 0;
  for (int i = 0; i < 100000; ++i) {
    ds.inputs.push_back({0.0});
    ds.labels.push_back({0.0});
    ds.dt.push_back(1.0);
  }
  TransitionDataset out = augment_noise(ds, 0.01, 23);
  double sq = 0.0;
  for (const Vec& row : out.inputs) sq += row[0] * row[0];
  double std = std::sqrt(sq / out.size());
  CHECK(std == doctest::Approx(0.01).epsilon(0.05));
}

TEST_CASE("batch split: 10-90 of 512 is 52/460") {
  auto [n_rand, n_rl] = batch_split_counts(0.1, 512, false, false);
  CHECK(n_rand == 52);
  CHECK(n_rl == 460);
  // within one sample of the exact 10%
  CHECK(std::abs(n_rand - 0.1 * 512) <= 1.0);
}

TEST_CASE("batch split: an empty pool forfeits its quota") {
  CHECK(batch_split_counts(0.1, 512, false, true) == std::pair<int, int>{512, 0});
  CHECK(batch_split_counts(0.9, 512, true, false) == std::pair<int, int>{0, 512});
  CHECK_THROWS_AS(batch_split_counts(0.5, 64, true, true), std::invalid_argument);
}

TEST_CASE("train: learns the damped linear system to held-out MSE < 1e-4") {
  auto trajs = testutil::linear_system_trajs(10, 100, 1);  // 1000 transitions
  auto held_out = testutil::linear_system_trajs(2, 50, 2);
  TransitionDataset d_rand = slice_trajectories(trajs);
  TransitionDataset d_rl;

  DynamicsModel model = make_dynamics_model(1, 1, {32, 32}, nn::Activation::kRelu, 3);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 128;
  cfg.noise_sigma = 0.0;
  cfg.rng_seed = 4;
  nn::AdamState adam = nn::make_adam_state(model.net, cfg.learning_rate);
  TrainReport report = train_dynamics(model, d_rand, d_rl, cfg, adam);
  REQUIRE(report.epoch_loss.size() == 200);

  TransitionDataset held_ds = slice_trajectories(held_out);
  double mse = 0.0;
  double max_err = 0.0;
  int count = 0;
  for (const auto& traj : held_out)
    for (const auto& tr : traj.transitions) {
      Vec pred = predict_next(model, tr.state, tr.action);
      double err = pred[0] - tr.next_state[0];
      mse += err * err;
      max_err = std::max(max_err, std::abs(err));
      ++count;
    }
  mse /= count;
  CHECK(mse < 1e-4);

  SUBCASE("held-out predictions within 1e-2 of the true next states") {
    CHECK(count >= 100);
    CHECK(max_err < 1e-2);
  }

  SUBCASE("H=1 validation equals the raw-unit training objective") {
    double h1 = h_step_validation(model, held_out, 1);
    double eq2 = objective_raw(model, held_ds);
    CHECK(std::abs(h1 - eq2) < 1e-9);
  }
}

TEST_CASE("train: epochs 0 leaves parameters unchanged but refreshes stats") {
  TransitionDataset d_rand = slice_trajectories(testutil::linear_system_trajs(2, 20, 7));
  DynamicsModel model = make_dynamics_model(1, 1, {8}, nn::Activation::kRelu, 11);
  nn::MlpParams before = model.net;
  TrainConfig cfg;
  cfg.epochs = 0;
  nn::AdamState adam = nn::make_adam_state(model.net, cfg.learning_rate);
  train_dynamics(model, d_rand, TransitionDataset{}, cfg, adam);
  CHECK(model.net.weights[0].data == before.weights[0].data);
  CHECK(model.stats.input_std[0] > kStdFloor);  // refreshed from data
}

TEST_CASE("train: both datasets empty rejected") {
  DynamicsModel model = make_dynamics_model(1, 1, {8}, nn::Activation::kRelu, 11);
  nn::AdamState adam = nn::make_adam_state(model.net, 1e-3);
  CHECK_THROWS_AS(train_dynamics(model, TransitionDataset{}, TransitionDataset{}, TrainConfig{},
                                 adam),
                  std::invalid_argument);
}

TEST_CASE("train: loss trend over 10 seeded runs, epoch 100 below epoch 1") {
  auto trajs = testutil::linear_system_trajs(5, 60, 31);  // 300 transitions
  TransitionDataset d_rand = slice_trajectories(trajs);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    DynamicsModel model = make_dynamics_model(1, 1, {16, 16}, nn::Activation::kRelu, seed);
    TrainConfig cfg;
    cfg.epochs = 100;
    cfg.batch_size = 64;
    cfg.rng_seed = seed + 100;
    nn::AdamState adam = nn::make_adam_state(model.net, cfg.learning_rate);
    TrainReport report = train_dynamics(model, d_rand, TransitionDataset{}, cfg, adam);
    CAPTURE(seed);
    CHECK(report.epoch_loss[99] < report.epoch_loss[0]);
  }
}

TEST_CASE("predict_next: zero net output lands on s + label_mean") {
  DynamicsModel m = constant_delta_model(0.75);
  Vec next = predict_next(m, {2.0}, {0.3});
  CHECK(next[0] == doctest::Approx(2.75).epsilon(1e-15));
}

TEST_CASE("predict_next: all-zero net with zero label mean is the identity") {
  DynamicsModel m = constant_delta_model(0.0);
  Vec next = predict_next(m, {-1.5}, {0.9});
  CHECK(next[0] == -1.5);
}

TEST_CASE("predict_next: dimension mismatch rejected") {
  DynamicsModel m = constant_delta_model(0.0);
  CHECK_THROWS_AS(predict_next(m, {1.0, 2.0}, {0.0}), std::invalid_argument);
}

TEST_CASE("delta parameterization: a net ignoring state gives state-independent deltas") {
  DynamicsModel m = make_dynamics_model(1, 1, {6}, nn::Activation::kTanh, 21);
  // Zero every weight column that reads the state input.
  for (int i = 0; i < m.net.weights[0].rows; ++i) m.net.weights[0].at(i, 0) = 0.0;
  Vec a = {0.4};
  CHECK(predict_delta(m, {0.0}, a) == predict_delta(m, {5.0}, a));
  CHECK(predict_delta(m, {-123.75}, a) == predict_delta(m, {1e6}, a));

  // The subtraction route is exact wherever the state addition is exact.
  DynamicsModel c = constant_delta_model(0.25);
  double d1 = predict_next(c, {0.5}, a)[0] - 0.5;
  double d2 = predict_next(c, {128.0}, a)[0] - 128.0;
  CHECK(d1 == d2);
}

TEST_CASE("rollout: H=1 equals predict_next") {
  DynamicsModel m = constant_delta_model(0.5);
  auto states = rollout_open_loop(m, {1.0}, {{0.2}});
  CHECK(states.size() == 1);
  CHECK(states[0] == predict_next(m, {1.0}, {0.2}));
}

TEST_CASE("rollout: an exact oracle reproduces the true rollout") {
  auto trajs = testutil::linear_system_trajs(1, 10, 3);
  std::vector<Vec> actions;
  for (const auto& tr : trajs[0].transitions) actions.push_back(tr.action);
  auto states = rollout_open_loop(testutil::linear_system_fn(), trajs[0].transitions[0].state,
                                  actions);
  for (std::size_t h = 0; h < states.size(); ++h)
    CHECK(states[h][0] == trajs[0].transitions[h].next_state[0]);
}

TEST_CASE("rollout: constant bias drifts by h * delta") {
  const double delta = 0.01;
  DynamicsModel m = constant_delta_model(delta);
  std::vector<Vec> actions(20, Vec{0.0});
  auto states = rollout_open_loop(m, {0.0}, actions);
  for (std::size_t h = 0; h < states.size(); ++h)
    CHECK(states[h][0] == doctest::Approx((h + 1) * delta).epsilon(1e-12));
}

TEST_CASE("rollout: divergence beyond 1e9 aborts with the step index") {
  StepFn doubling = [](const Vec& s, const Vec&) { return Vec{s[0] * 10.0}; };
  std::vector<Vec> actions(20, Vec{0.0});
  CHECK_THROWS_WITH_AS(rollout_open_loop(doubling, {1.0}, actions),
                       doctest::Contains("step 9"), std::runtime_error);
}

TEST_CASE("rollout: empty action list rejected") {
  CHECK_THROWS_AS(rollout_open_loop(testutil::linear_system_fn(), {0.0}, {}),
                  std::invalid_argument);
}

TEST_CASE("h-step validation: exact oracle scores zero for all horizons") {
  auto trajs = testutil::linear_system_trajs(3, 30, 13);
  for (int h : {1, 5, 10}) CHECK(h_step_validation(testutil::linear_system_fn(), trajs, h) == 0.0);
}

TEST_CASE("h-step validation: biased model follows the closed-form drift") {
  // Constant-state truth, model drifting by delta per step:
  // error(H) = (1/H) sum_h 0.5 (h*delta)^2 = 0.5 delta^2 (H+1)(2H+1)/6.
  const double delta = 0.02;
  StepFn biased = [delta](const Vec& s, const Vec&) { return Vec{s[0] + delta}; };
  std::vector<Trajectory> trajs = {make_traj(std::vector<double>(31, 1.0))};
  for (int H : {1, 2, 5, 10}) {
    double expected = 0.5 * delta * delta * (H + 1.0) * (2.0 * H + 1.0) / 6.0;
    CHECK(h_step_validation(biased, trajs, H) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("h-step validation: horizon beyond every trajectory rejected") {
  auto trajs = testutil::linear_system_trajs(2, 5, 13);
  CHECK_THROWS_AS(h_step_validation(testutil::linear_system_fn(), trajs, 6),
                  std::invalid_argument);
}

TEST_CASE("dataset csv: round trip preserves values and tags") {
  auto trajs = testutil::linear_system_trajs(2, 8, 41);
  TransitionDataset rand_ds = slice_trajectories(trajs, DataTag::kRand);
  TransitionDataset rl_ds = slice_trajectories({trajs[0]}, DataTag::kRl);

  std::string path = (std::filesystem::temp_directory_path() / "mbmpc_dataset_test.csv").string();
  write_dataset_csv(path, rand_ds);
  write_dataset_csv(path, rl_ds, true);
  auto [rand_back, rl_back] = read_dataset_csv(path);

  REQUIRE(rand_back.size() == rand_ds.size());
  REQUIRE(rl_back.size() == rl_ds.size());
  CHECK(rand_back.inputs == rand_ds.inputs);
  for (std::size_t k = 0; k < rand_ds.size(); ++k)
    for (std::size_t i = 0; i < rand_ds.labels[k].size(); ++i)
      CHECK(rand_back.labels[k][i] ==
            doctest::Approx(rand_ds.labels[k][i]).epsilon(1e-15));
  std::filesystem::remove(path);
}

TEST_CASE("model json: round trip is exact") {
  DynamicsModel m = make_dynamics_model(3, 2, {8, 8}, nn::Activation::kRelu, 77);
  m.stats.input_mean = {0.1, 0.2, 0.3, 0.4, 0.5};
  m.stats.input_std = {1.0, 2.0, 3.0, 4.0, 5.0};
  m.stats.label_mean = {-0.1, -0.2, -0.3};
  m.stats.label_std = {0.5, 0.25, 0.125};
  DynamicsModel back = model_from_json(model_to_json(m));
  CHECK(back.net.weights[1].data == m.net.weights[1].data);
  CHECK(back.stats.input_mean == m.stats.input_mean);
  CHECK(back.state_dim == 3);
  CHECK(back.action_dim == 2);
}
