#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mbmpc/dynamics.hpp"
#include "mbmpc/rng.hpp"
#include "mbmpc/vec.hpp"

namespace mbmpc::envs {

using dynamics::StepFn;
using dynamics::Trajectory;
using dynamics::Transition;

enum class EnvKind { kPointMass2D, kUnicycle, kPendulum };

// Analytic environment description. env_step is a pure function of
// (spec, state, action); all integration is semi-implicit Euler.
//
//  PointMass2D  state (x, y, vx, vy), actions = accelerations, linear drag
//  Unicycle     state (x, y, heading, speed), actions (accel, turn rate)
//  Pendulum     state (theta, theta_dot), action = torque; theta = 0 hangs down
struct EnvSpec {
  EnvKind kind = EnvKind::kPointMass2D;
  std::string name = "pointmass";
  int state_dim = 4;
  int action_dim = 2;
  double dt = 0.05;

  // constants (unused ones ignored per environment)
  double accel_gain = 1.0;
  double drag = 0.5;
  double turn_gain = 3.0;
  double gravity = 9.81;
  double length = 1.0;
  double mass = 1.0;
  double damping = 0.05;
  double torque_gain = 2.0;

  // reward template: forward_velocity(s_next) - reward_c * ||a / reward_d||^2
  double reward_c = 0.05;
  double reward_d = 1.0;

  // initial-state noise variance on position/velocity elements
  double init_noise_var = 0.001;

  Vec nominal_initial_state;
  std::optional<int> heading_index;
};

EnvSpec make_pointmass2d();
EnvSpec make_unicycle();
EnvSpec make_pendulum();
EnvSpec make_env(const std::string& name);

// Actions are clipped to [-1, 1] before integration.
Vec env_step(const EnvSpec& spec, const Vec& state, const Vec& action);

StepFn oracle_step_fn(const EnvSpec& spec);

// Velocity along +x: vx for the point mass, speed*cos(heading) for the
// unicycle, angular velocity for the pendulum.
double forward_velocity(const EnvSpec& spec, const Vec& state);

double reward_forward(const EnvSpec& spec, const Vec& next_state, const Vec& action);

enum class Exploration { kStandard, kHeadingSweep };

std::string exploration_name(Exploration e);
Exploration exploration_from_name(const std::string& name);

// Nominal state plus N(0, init_noise_var) on every element; heading_sweep
// additionally draws the heading from Uniform(-pi, pi).
Vec sample_initial_state(const EnvSpec& spec, Rng& rng, Exploration exploration);
Vec sample_initial_state(const EnvSpec& spec, std::uint64_t seed, Exploration exploration);

// Rollouts of i.i.d. Uniform[-1,1] actions; rollout_length counts states, so
// each trajectory carries rollout_length - 1 transitions.
std::vector<Trajectory> collect_random_rollouts(const EnvSpec& spec, int num_rollouts,
                                                int rollout_length, std::uint64_t seed,
                                                Exploration exploration = Exploration::kStandard);

// Total mechanical energy of the pendulum (test aid for integrator checks).
double pendulum_energy(const EnvSpec& spec, const Vec& state);

}  // namespace mbmpc::envs
