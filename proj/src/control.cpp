#include "mbmpc/control.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <thread>

#include "mbmpc/csv.hpp"
#include "mbmpc/rng.hpp"

namespace mbmpc::control {

SequenceScorer make_return_scorer(StepFn step, RewardFn reward, double discount) {
  return [step = std::move(step), reward = std::move(reward), discount](
             const Vec& s0, const ActionSequence& actions) {
    Vec s = s0;
    double total = 0.0;
    double gamma = 1.0;
    for (const Vec& a : actions) {
      s = step(s, a);
      for (double v : s)
        if (!std::isfinite(v) || std::abs(v) > 1e9) return std::numeric_limits<double>::quiet_NaN();
      total += gamma * reward(s, a);
      gamma *= discount;
    }
    return total;
  };
}

ShootingResult random_shooting(const Vec& state, int action_dim, const MpcConfig& cfg,
                               const SequenceScorer& scorer) {
  if (cfg.horizon < 1 || cfg.num_candidates < 1)
    throw std::invalid_argument("random_shooting: horizon and num_candidates must be >= 1");

  // Sample every candidate up front so the stream prefix is independent of
  // how evaluation is scheduled.
  Rng rng(cfg.rng_seed);
  std::vector<ActionSequence> candidates(cfg.num_candidates);
  for (ActionSequence& seq : candidates) {
    seq.resize(cfg.horizon);
    for (Vec& a : seq) {
      a.resize(action_dim);
      for (double& v : a) v = rng.uniform(-1.0, 1.0);
    }
  }

  std::vector<double> scores(cfg.num_candidates);
  auto evaluate_range = [&](int begin, int end) {
    for (int k = begin; k < end; ++k) scores[k] = scorer(state, candidates[k]);
  };

  if (cfg.num_threads > 1 && cfg.num_candidates > 1) {
    int num_threads = std::min(cfg.num_threads, cfg.num_candidates);
    std::vector<std::thread> workers;
    int chunk = (cfg.num_candidates + num_threads - 1) / num_threads;
    for (int w = 0; w < num_threads; ++w) {
      int begin = w * chunk;
      int end = std::min(cfg.num_candidates, begin + chunk);
      if (begin >= end) break;
      workers.emplace_back(evaluate_range, begin, end);
    }
    for (auto& t : workers) t.join();
  } else {
    evaluate_range(0, cfg.num_candidates);
  }

  ShootingResult result;
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < cfg.num_candidates; ++k) {
    double s = scores[k];
    if (!std::isfinite(s)) {
      ++result.nonfinite_candidates;
      s = -std::numeric_limits<double>::infinity();
    }
    if (s > best_score) {
      best_score = s;
      best = k;
    }
  }
  if (!std::isfinite(best_score)) {
    // Every candidate diverged; fall back to the first with score -inf.
    best = 0;
  }
  result.best = candidates[best];
  result.predicted_return = std::isfinite(scores[best]) ? scores[best] : best_score;
  return result;
}

ShootingResult random_shooting(const Vec& state, int action_dim, const MpcConfig& cfg,
                               const StepFn& model, const RewardFn& reward) {
  return random_shooting(state, action_dim, cfg, make_return_scorer(model, reward, cfg.discount));
}

PathSpec path_to_segments(const std::vector<std::array<double, 2>>& waypoints, double alpha,
                          double beta) {
  if (waypoints.size() < 2) throw std::invalid_argument("path_to_segments: need >= 2 waypoints");
  PathSpec path;
  path.waypoints = waypoints;
  path.alpha = alpha;
  path.beta = beta;
  double cum = 0.0;
  for (std::size_t i = 0; i + 1 < waypoints.size(); ++i) {
    Segment seg;
    seg.ax = waypoints[i][0];
    seg.ay = waypoints[i][1];
    seg.bx = waypoints[i + 1][0];
    seg.by = waypoints[i + 1][1];
    double dx = seg.bx - seg.ax;
    double dy = seg.by - seg.ay;
    seg.length = std::hypot(dx, dy);
    if (seg.length == 0.0)
      throw std::invalid_argument("path_to_segments: duplicate consecutive waypoint at index " +
                                  std::to_string(i));
    seg.tx = dx / seg.length;
    seg.ty = dy / seg.length;
    seg.cum_start = cum;
    cum += seg.length;
    path.segments.push_back(seg);
  }
  path.total_length = cum;
  return path;
}

Projection project_point(const Segment& segment, double px, double py) {
  double along = (px - segment.ax) * segment.tx + (py - segment.ay) * segment.ty;
  Projection proj;
  proj.parallel = std::clamp(along, 0.0, segment.length);
  double cx = segment.ax + proj.parallel * segment.tx;
  double cy = segment.ay + proj.parallel * segment.ty;
  proj.perp = std::hypot(px - cx, py - cy);
  return proj;
}

int closest_segment(const PathSpec& path, double px, double py) {
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < path.segments.size(); ++i) {
    double d = project_point(path.segments[i], px, py).perp;
    if (d < best_dist) {
      best_dist = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

double path_progress(const PathSpec& path, double px, double py) {
  const Segment& seg = path.segments[closest_segment(path, px, py)];
  return seg.cum_start + project_point(seg, px, py).parallel;
}

double PathProgressTracker::step_reward(double px, double py) {
  const Segment& seg = path_->segments[closest_segment(*path_, px, py)];
  Projection proj = project_point(seg, px, py);
  double parallel = seg.cum_start + proj.parallel;
  double reward = -path_->alpha * proj.perp + path_->beta * (parallel - prev_parallel_);
  prev_parallel_ = parallel;
  return reward;
}

double trajectory_reward(const StepFn& model, const Vec& state, const ActionSequence& actions,
                         const PathSpec& path) {
  PathProgressTracker tracker(path, state[0], state[1]);
  Vec s = state;
  double total = 0.0;
  for (const Vec& a : actions) {
    s = model(s, a);
    for (double v : s)
      if (!std::isfinite(v) || std::abs(v) > 1e9) return std::numeric_limits<double>::quiet_NaN();
    total += tracker.step_reward(s[0], s[1]);
  }
  return total;
}

SequenceScorer make_path_scorer(StepFn model, const PathSpec& path) {
  return [model = std::move(model), path](const Vec& s0, const ActionSequence& actions) {
    return trajectory_reward(model, s0, actions, path);
  };
}

EpisodeResult mpc_run(const StepFn& true_step, int action_dim, double dt,
                      const SequenceScorer& scorer, const RewardFn& realized_reward, const Vec& s0,
                      int num_steps, const MpcConfig& cfg) {
  if (num_steps < 1) throw std::invalid_argument("mpc_run: num_steps must be >= 1");
  EpisodeResult episode;
  episode.trajectory.dt = dt;
  Vec s = s0;
  for (int t = 0; t < num_steps; ++t) {
    MpcConfig step_cfg = cfg;
    step_cfg.rng_seed = derive_seed(cfg.rng_seed, "mpc-step", static_cast<std::uint64_t>(t));
    ShootingResult plan = random_shooting(s, action_dim, step_cfg, scorer);
    episode.nonfinite_candidates += plan.nonfinite_candidates;

    const Vec& a = plan.best.front();
    Vec s_next = true_step(s, a);
    double r = realized_reward(s_next, a);

    episode.trajectory.transitions.push_back({s, a, s_next, dt});
    episode.realized_return += r;
    episode.log.push_back({t, s_next, a, r, plan.predicted_return});
    s = std::move(s_next);
  }
  return episode;
}

EpisodeResult mpc_run(const envs::EnvSpec& env, const SequenceScorer& scorer,
                      const RewardFn& realized_reward, const Vec& s0, int num_steps,
                      const MpcConfig& cfg) {
  return mpc_run(envs::oracle_step_fn(env), env.action_dim, env.dt, scorer, realized_reward, s0,
                 num_steps, cfg);
}

void write_episode_csv(const std::string& path, const EpisodeResult& episode) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_episode_csv: cannot open " + path);
  if (episode.log.empty()) return;
  std::vector<std::string> header{"t"};
  for (std::size_t i = 0; i < episode.log.front().state.size(); ++i)
    header.push_back("s_" + std::to_string(i));
  for (std::size_t i = 0; i < episode.log.front().action.size(); ++i)
    header.push_back("a_" + std::to_string(i));
  header.push_back("reward");
  header.push_back("predicted_return");
  out << csv::join(header) << "\n";
  for (const EpisodeLogRow& row : episode.log) {
    std::vector<std::string> fields{std::to_string(row.t)};
    for (double v : row.state) fields.push_back(csv::format_double(v));
    for (double v : row.action) fields.push_back(csv::format_double(v));
    fields.push_back(csv::format_double(row.reward));
    fields.push_back(csv::format_double(row.predicted_return));
    out << csv::join(fields) << "\n";
  }
}

std::vector<std::array<double, 2>> read_waypoints_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_waypoints_csv: cannot open " + path);
  std::vector<std::array<double, 2>> waypoints;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = csv::split_line(line);
    if (fields.size() != 2) throw std::runtime_error("read_waypoints_csv: expected x,y rows");
    if (fields[0] == "x") continue;  // header
    waypoints.push_back({std::stod(fields[0]), std::stod(fields[1])});
  }
  return waypoints;
}

void write_waypoints_csv(const std::string& path,
                         const std::vector<std::array<double, 2>>& waypoints) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_waypoints_csv: cannot open " + path);
  out << "x,y\n";
  for (const auto& wp : waypoints)
    out << csv::format_double(wp[0]) << "," << csv::format_double(wp[1]) << "\n";
}

}  // namespace mbmpc::control
