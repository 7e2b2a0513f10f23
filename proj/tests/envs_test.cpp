#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "mbmpc/envs.hpp"

using namespace mbmpc;
using namespace mbmpc::envs;

TEST_CASE("pointmass: zero velocity and zero action is an equilibrium") {
  EnvSpec spec = make_pointmass2d();
  Vec s = {1.0, -2.0, 0.0, 0.0};
  CHECK(env_step(spec, s, {0.0, 0.0}) == s);
}

TEST_CASE("pendulum: hanging at rest with zero torque stays at rest") {
  EnvSpec spec = make_pendulum();
  Vec s = {0.0, 0.0};
  CHECK(env_step(spec, s, {0.0}) == s);
}

TEST_CASE("pointmass: hand-evaluated semi-implicit Euler step") {
  EnvSpec spec = make_pointmass2d();
  spec.dt = 0.05;
  spec.drag = 0.0;
  Vec next = env_step(spec, {0.0, 0.0, 0.0, 0.0}, {1.0, 0.0});
  CHECK(next[2] == doctest::Approx(0.05).epsilon(1e-15));   // vx = dt * a
  CHECK(next[0] == doctest::Approx(0.0025).epsilon(1e-15)); // x = dt * vx'
  CHECK(next[1] == 0.0);
  CHECK(next[3] == 0.0);
}

TEST_CASE("reward: zero action with unit forward velocity scores 1") {
  EnvSpec spec = make_pointmass2d();
  CHECK(reward_forward(spec, {0.0, 0.0, 1.0, 0.5}, {0.0, 0.0}) == 1.0);
}

TEST_CASE("reward: template with c=0.5, d=50, action (50,50), zero xvel scores -1") {
  EnvSpec spec = make_pointmass2d();
  spec.reward_c = 0.5;
  spec.reward_d = 50.0;
  CHECK(reward_forward(spec, {0.0, 0.0, 0.0, 0.0}, {50.0, 50.0}) ==
        doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("reward: pointmass constants c=0.05, d=1 with a=(1,0), xvel=2") {
  EnvSpec spec = make_pointmass2d();
  CHECK(reward_forward(spec, {0.0, 0.0, 2.0, 0.0}, {1.0, 0.0}) ==
        doctest::Approx(2.0 - 0.05).epsilon(1e-15));
}

TEST_CASE("initial state: zero-noise override returns the exact nominal state") {
  EnvSpec spec = make_unicycle();
  spec.init_noise_var = 0.0;
  Vec s = sample_initial_state(spec, 123u, Exploration::kStandard);
  CHECK(s == spec.nominal_initial_state);
}

TEST_CASE("initial state: per-component std within 5% of sqrt(0.001)") {
  EnvSpec spec = make_pointmass2d();
  Rng rng(7);
  const int n = 100000;
  Vec sq(spec.state_dim, 0.0);
  for (int i = 0; i < n; ++i) {
    Vec s = sample_initial_state(spec, rng, Exploration::kStandard);
    for (int d = 0; d < spec.state_dim; ++d) sq[d] += s[d] * s[d];
  }
  double expected = std::sqrt(0.001);
  for (int d = 0; d < spec.state_dim; ++d)
    CHECK(std::sqrt(sq[d] / n) == doctest::Approx(expected).epsilon(0.05));
}

TEST_CASE("initial state: heading sweep is roughly uniform over (-pi, pi)") {
  EnvSpec spec = make_unicycle();
  Rng rng(11);
  const int n = 10000, bins = 8;
  std::vector<int> counts(bins, 0);
  for (int i = 0; i < n; ++i) {
    Vec s = sample_initial_state(spec, rng, Exploration::kHeadingSweep);
    double heading = std::remainder(s[*spec.heading_index], 2.0 * M_PI);  // wrap to (-pi, pi]
    int bin = std::min(bins - 1, static_cast<int>((heading + M_PI) / (2.0 * M_PI) * bins));
    ++counts[bin];
  }
  double expected = static_cast<double>(n) / bins;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 24.3);  // 99.9% quantile of chi-square with 7 dof
}

TEST_CASE("initial state: heading sweep rejected without a heading element") {
  EnvSpec spec = make_pointmass2d();
  CHECK_THROWS_AS(sample_initial_state(spec, 3u, Exploration::kHeadingSweep),
                  std::invalid_argument);
}

TEST_CASE("collect: 25 rollouts of length 333 give 332 transitions each") {
  EnvSpec spec = make_pointmass2d();
  auto trajs = collect_random_rollouts(spec, 25, 333, 5);
  REQUIRE(trajs.size() == 25);
  for (const auto& traj : trajs) {
    CHECK(traj.transitions.size() == 332);
    CHECK(traj.length() == 333);
  }
}

TEST_CASE("collect: same seed reproduces identical trajectories") {
  EnvSpec spec = make_unicycle();
  auto a = collect_random_rollouts(spec, 3, 20, 99);
  auto b = collect_random_rollouts(spec, 3, 20, 99);
  for (std::size_t r = 0; r < a.size(); ++r)
    for (std::size_t t = 0; t < a[r].transitions.size(); ++t) {
      CHECK(a[r].transitions[t].state == b[r].transitions[t].state);
      CHECK(a[r].transitions[t].action == b[r].transitions[t].action);
    }
}

TEST_CASE("collect: actions follow the uniform law on [-1, 1]") {
  EnvSpec spec = make_pointmass2d();
  auto trajs = collect_random_rollouts(spec, 160, 314, 21);
  double sum = 0.0;
  long n = 0;
  for (const auto& traj : trajs)
    for (const auto& tr : traj.transitions)
      for (double a : tr.action) {
        CHECK(a >= -1.0);
        CHECK(a <= 1.0);
        sum += a;
        ++n;
      }
  CHECK(n >= 100000);
  CHECK(std::abs(sum / n) < 0.01);
}

TEST_CASE("collect: trajectories chain exactly") {
  EnvSpec spec = make_unicycle();
  auto trajs = collect_random_rollouts(spec, 4, 30, 13);
  for (const auto& traj : trajs)
    for (std::size_t t = 0; t + 1 < traj.transitions.size(); ++t)
      CHECK(traj.transitions[t].next_state == traj.transitions[t + 1].state);
}

TEST_CASE("collect: rollout_length below 2 rejected") {
  CHECK_THROWS_AS(collect_random_rollouts(make_pointmass2d(), 1, 1, 0), std::invalid_argument);
}

TEST_CASE("env_step: pure function, identical inputs give identical outputs") {
  for (const EnvSpec& spec : {make_pointmass2d(), make_unicycle(), make_pendulum()}) {
    Rng rng(3);
    Vec s(spec.state_dim), a(spec.action_dim);
    for (double& v : s) v = rng.uniform(-1.0, 1.0);
    for (double& v : a) v = rng.uniform(-1.0, 1.0);
    CHECK(env_step(spec, s, a) == env_step(spec, s, a));
  }
}

TEST_CASE("env_step: clipping makes out-of-range actions equivalent") {
  for (const EnvSpec& spec : {make_pointmass2d(), make_unicycle(), make_pendulum()}) {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
      Vec s(spec.state_dim), a(spec.action_dim);
      for (double& v : s) v = rng.uniform(-2.0, 2.0);
      for (double& v : a) v = rng.uniform(-3.0, 3.0);
      CHECK(env_step(spec, s, a) == env_step(spec, s, clipped(a, -1.0, 1.0)));
    }
  }
}

TEST_CASE("env_step: dimension mismatch rejected") {
  CHECK_THROWS_AS(env_step(make_pendulum(), {0.0}, {0.0}), std::invalid_argument);
}

TEST_CASE("pendulum: undamped energy stays within 1% over 1000 steps") {
  EnvSpec spec = make_pendulum();
  spec.damping = 0.0;
  Vec s = {1.0, 0.0};
  double e0 = pendulum_energy(spec, s);
  for (int t = 0; t < 1000; ++t) {
    s = env_step(spec, s, {0.0});
    CHECK(std::abs(pendulum_energy(spec, s) - e0) / e0 < 0.01);
  }
}

TEST_CASE("unicycle: forward velocity is speed times cos(heading)") {
  EnvSpec spec = make_unicycle();
  CHECK(forward_velocity(spec, {0.0, 0.0, 0.0, 2.0}) == 2.0);
  CHECK(forward_velocity(spec, {0.0, 0.0, M_PI / 2.0, 2.0}) ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK(forward_velocity(spec, {0.0, 0.0, M_PI, 1.5}) == doctest::Approx(-1.5).epsilon(1e-12));
}

TEST_CASE("make_env: names resolve, unknown rejected") {
  CHECK(make_env("pointmass").kind == EnvKind::kPointMass2D);
  CHECK(make_env("unicycle").kind == EnvKind::kUnicycle);
  CHECK(make_env("pendulum").kind == EnvKind::kPendulum);
  CHECK_THROWS_AS(make_env("cartpole"), std::invalid_argument);
}
