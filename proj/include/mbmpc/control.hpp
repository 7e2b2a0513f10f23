#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mbmpc/dynamics.hpp"
#include "mbmpc/envs.hpp"
#include "mbmpc/vec.hpp"

namespace mbmpc::control {

using dynamics::StepFn;
using dynamics::Trajectory;

struct MpcConfig {
  int horizon = 10;
  int num_candidates = 1000;
  double discount = 1.0;
  std::uint64_t rng_seed = 0;
  int num_threads = 0;  // <= 1 evaluates serially
};

// Exactly horizon action vectors, each within [-1, 1] per dimension.
using ActionSequence = std::vector<Vec>;

// Per-step reward evaluated on the resulting state and the action taken.
using RewardFn = std::function<double(const Vec& next_state, const Vec& action)>;

// Scores a whole candidate sequence from a start state. Must be re-entrant:
// candidates are evaluated concurrently when num_threads > 1.
using SequenceScorer = std::function<double(const Vec& s0, const ActionSequence& actions)>;

// Discounted reward sum along the model rollout. A non-finite state or reward
// (or any component beyond 1e9) yields NaN, which shooting scores as -inf.
SequenceScorer make_return_scorer(StepFn step, RewardFn reward, double discount);

struct ShootingResult {
  ActionSequence best;
  double predicted_return = 0.0;
  int nonfinite_candidates = 0;
};

// Samples num_candidates action sequences i.i.d. Uniform[-1,1], scores each,
// and returns the argmax (ties to the lowest candidate index). Candidates are
// drawn serially from the seed before any parallel evaluation, so the first
// K1 candidates of a K2 > K1 run are identical.
ShootingResult random_shooting(const Vec& state, int action_dim, const MpcConfig& cfg,
                               const SequenceScorer& scorer);
ShootingResult random_shooting(const Vec& state, int action_dim, const MpcConfig& cfg,
                               const StepFn& model, const RewardFn& reward);

// --- waypoint paths ---

struct Segment {
  double ax = 0.0, ay = 0.0;  // start
  double bx = 0.0, by = 0.0;  // end
  double length = 0.0;
  double tx = 0.0, ty = 0.0;  // unit tangent
  double cum_start = 0.0;     // arc length of the path before this segment
};

struct PathSpec {
  std::vector<std::array<double, 2>> waypoints;
  std::vector<Segment> segments;
  double alpha = 1.0;  // perpendicular-distance penalty
  double beta = 1.0;   // parallel-progress bonus
  double total_length = 0.0;
};

PathSpec path_to_segments(const std::vector<std::array<double, 2>>& waypoints, double alpha = 1.0,
                          double beta = 1.0);

struct Projection {
  double parallel = 0.0;  // arc-length coordinate along the segment, clamped to [0, length]
  double perp = 0.0;      // distance from the point to the clamped projection
};

Projection project_point(const Segment& segment, double px, double py);

// Index minimizing point-to-segment distance; ties go to the lower index.
int closest_segment(const PathSpec& path, double px, double py);

// Cumulative arc-length coordinate of the projection onto the closest
// segment, so progress across a corner is measured continuously.
double path_progress(const PathSpec& path, double px, double py);

// Carries the previous parallel coordinate between steps of one rollout.
// Holds a reference: the path must outlive the tracker.
class PathProgressTracker {
 public:
  PathProgressTracker(const PathSpec& path, double px, double py)
      : path_(&path), prev_parallel_(path_progress(path, px, py)) {}

  // -alpha * perp + beta * (progress - previous progress) for the new point.
  double step_reward(double px, double py);

 private:
  const PathSpec* path_;
  double prev_parallel_;
};

// Rolls the model forward over the action sequence and accumulates the
// per-step path reward; the previous parallel coordinate is initialized from
// the true current state. State components 0 and 1 are taken as (x, y).
double trajectory_reward(const StepFn& model, const Vec& state, const ActionSequence& actions,
                         const PathSpec& path);

SequenceScorer make_path_scorer(StepFn model, const PathSpec& path);

// --- closed-loop MPC ---

struct EpisodeLogRow {
  int t = 0;
  Vec state;  // state after the step
  Vec action;
  double reward = 0.0;
  double predicted_return = 0.0;
};

struct EpisodeResult {
  Trajectory trajectory;
  double realized_return = 0.0;
  std::vector<EpisodeLogRow> log;
  int nonfinite_candidates = 0;
};

// Plan with random shooting, execute the first action in the true
// environment, replan. realized_reward may be stateful (path progress); it is
// called once per executed step in order.
EpisodeResult mpc_run(const StepFn& true_step, int action_dim, double dt,
                      const SequenceScorer& scorer, const RewardFn& realized_reward, const Vec& s0,
                      int num_steps, const MpcConfig& cfg);
EpisodeResult mpc_run(const envs::EnvSpec& env, const SequenceScorer& scorer,
                      const RewardFn& realized_reward, const Vec& s0, int num_steps,
                      const MpcConfig& cfg);

// Episode log schema: t, s_0.., a_0.., reward, predicted_return.
void write_episode_csv(const std::string& path, const EpisodeResult& episode);

std::vector<std::array<double, 2>> read_waypoints_csv(const std::string& path);
void write_waypoints_csv(const std::string& path,
                         const std::vector<std::array<double, 2>>& waypoints);

}  // namespace mbmpc::control
