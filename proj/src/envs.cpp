#include "mbmpc/envs.hpp"

#include <cmath>
#include <stdexcept>

namespace mbmpc::envs {

EnvSpec make_pointmass2d() {
  EnvSpec spec;
  spec.kind = EnvKind::kPointMass2D;
  spec.name = "pointmass";
  spec.state_dim = 4;
  spec.action_dim = 2;
  spec.dt = 0.05;
  spec.accel_gain = 1.0;
  spec.drag = 0.5;
  spec.reward_c = 0.05;
  spec.reward_d = 1.0;
  spec.nominal_initial_state = {0.0, 0.0, 0.0, 0.0};
  return spec;
}

EnvSpec make_unicycle() {
  EnvSpec spec;
  spec.kind = EnvKind::kUnicycle;
  spec.name = "unicycle";
  spec.state_dim = 4;
  spec.action_dim = 2;
  spec.dt = 0.1;
  spec.accel_gain = 1.0;
  spec.drag = 0.5;
  spec.turn_gain = 3.0;
  spec.reward_c = 0.05;
  spec.reward_d = 1.0;
  spec.nominal_initial_state = {0.0, 0.0, 0.0, 0.0};
  spec.heading_index = 2;
  return spec;
}

EnvSpec make_pendulum() {
  EnvSpec spec;
  spec.kind = EnvKind::kPendulum;
  spec.name = "pendulum";
  spec.state_dim = 2;
  spec.action_dim = 1;
  spec.dt = 0.005;
  spec.gravity = 9.81;
  spec.length = 1.0;
  spec.mass = 1.0;
  spec.damping = 0.05;
  spec.torque_gain = 2.0;
  spec.reward_c = 0.05;
  spec.reward_d = 1.0;
  spec.nominal_initial_state = {0.0, 0.0};
  return spec;
}

EnvSpec make_env(const std::string& name) {
  if (name == "pointmass") return make_pointmass2d();
  if (name == "unicycle") return make_unicycle();
  if (name == "pendulum") return make_pendulum();
  throw std::invalid_argument("unknown environment: " + name);
}

Vec env_step(const EnvSpec& spec, const Vec& state, const Vec& action) {
  if (static_cast<int>(state.size()) != spec.state_dim ||
      static_cast<int>(action.size()) != spec.action_dim)
    throw std::invalid_argument("env_step: dimension mismatch");
  Vec a = clipped(action, -1.0, 1.0);
  double dt = spec.dt;

  switch (spec.kind) {
    case EnvKind::kPointMass2D: {
      double vx = state[2] + dt * (spec.accel_gain * a[0] - spec.drag * state[2]);
      double vy = state[3] + dt * (spec.accel_gain * a[1] - spec.drag * state[3]);
      return {state[0] + dt * vx, state[1] + dt * vy, vx, vy};
    }
    case EnvKind::kUnicycle: {
      double speed = state[3] + dt * (spec.accel_gain * a[0] - spec.drag * state[3]);
      double heading = state[2] + dt * spec.turn_gain * a[1];
      return {state[0] + dt * speed * std::cos(heading),
              state[1] + dt * speed * std::sin(heading), heading, speed};
    }
    case EnvKind::kPendulum: {
      double theta = state[0];
      double omega = state[1];
      double accel = -(spec.gravity / spec.length) * std::sin(theta) - spec.damping * omega +
                     spec.torque_gain * a[0] / (spec.mass * spec.length * spec.length);
      double omega_next = omega + dt * accel;
      return {theta + dt * omega_next, omega_next};
    }
  }
  throw std::logic_error("env_step: unknown environment kind");
}

StepFn oracle_step_fn(const EnvSpec& spec) {
  return [spec](const Vec& s, const Vec& a) { return env_step(spec, s, a); };
}

double forward_velocity(const EnvSpec& spec, const Vec& state) {
  switch (spec.kind) {
    case EnvKind::kPointMass2D: return state[2];
    case EnvKind::kUnicycle: return state[3] * std::cos(state[2]);
    case EnvKind::kPendulum: return state[1];
  }
  throw std::logic_error("forward_velocity: unknown environment kind");
}

double reward_forward(const EnvSpec& spec, const Vec& next_state, const Vec& action) {
  double penalty = 0.0;
  for (double ai : action) {
    double scaled = ai / spec.reward_d;
    penalty += scaled * scaled;
  }
  return forward_velocity(spec, next_state) - spec.reward_c * penalty;
}

std::string exploration_name(Exploration e) {
  return e == Exploration::kStandard ? "standard" : "heading_sweep";
}

Exploration exploration_from_name(const std::string& name) {
  if (name == "standard") return Exploration::kStandard;
  if (name == "heading_sweep") return Exploration::kHeadingSweep;
  throw std::invalid_argument("unknown exploration mode: " + name);
}

Vec sample_initial_state(const EnvSpec& spec, Rng& rng, Exploration exploration) {
  if (exploration == Exploration::kHeadingSweep && !spec.heading_index)
    throw std::invalid_argument("sample_initial_state: " + spec.name + " has no heading element");
  Vec s = spec.nominal_initial_state;
  double stddev = std::sqrt(spec.init_noise_var);
  for (double& v : s) v += rng.gaussian(0.0, stddev);
  if (exploration == Exploration::kHeadingSweep)
    s[*spec.heading_index] += rng.uniform(-M_PI, M_PI);
  return s;
}

Vec sample_initial_state(const EnvSpec& spec, std::uint64_t seed, Exploration exploration) {
  Rng rng(seed);
  return sample_initial_state(spec, rng, exploration);
}

std::vector<Trajectory> collect_random_rollouts(const EnvSpec& spec, int num_rollouts,
                                                int rollout_length, std::uint64_t seed,
                                                Exploration exploration) {
  if (rollout_length < 2)
    throw std::invalid_argument("collect_random_rollouts: rollout_length must be >= 2");
  std::vector<Trajectory> trajs;
  trajs.reserve(num_rollouts);
  for (int r = 0; r < num_rollouts; ++r) {
    Rng rng(derive_seed(seed, "rollout", static_cast<std::uint64_t>(r)));
    Trajectory traj;
    traj.dt = spec.dt;
    Vec s = sample_initial_state(spec, rng, exploration);
    for (int t = 0; t + 1 < rollout_length; ++t) {
      Vec a(spec.action_dim);
      for (double& v : a) v = rng.uniform(-1.0, 1.0);
      Vec s_next = env_step(spec, s, a);
      traj.transitions.push_back({s, a, s_next, spec.dt});
      s = std::move(s_next);
    }
    trajs.push_back(std::move(traj));
  }
  return trajs;
}

double pendulum_energy(const EnvSpec& spec, const Vec& state) {
  double kinetic = 0.5 * spec.mass * spec.length * spec.length * state[1] * state[1];
  double potential = spec.mass * spec.gravity * spec.length * (1.0 - std::cos(state[0]));
  return kinetic + potential;
}

}  // namespace mbmpc::envs
