#pragma once

#include <string>
#include <vector>

#include "mbmpc/config.hpp"
#include "mbmpc/loop.hpp"

namespace mbmpc::cli {

// Full command-line entry point (argv without the program name); returns the
// process exit code. Never calls exit(), so tests can drive it in-process.
int run(const std::vector<std::string>& args);

// --- pieces the commands are built from, callable directly ---

loop::TaskSpec task_from_config(const config::ExperimentConfig& cfg);

// Planning model per config: the true dynamics when model.oracle, otherwise
// the model checkpoint named by model.file.
dynamics::StepFn planning_model(const config::ExperimentConfig& cfg);

struct EvalSummary {
  double mean_return = 0.0;
  std::vector<control::EpisodeResult> episodes;
};

// Fixed evaluation protocol: eval.episodes MPC episodes from seeded initial
// states, scored by the task's realized reward.
EvalSummary evaluate(const config::ExperimentConfig& cfg, const dynamics::StepFn& model);

struct PipelineResult {
  loop::MbrlResult mbrl;
  double eval_return = 0.0;
};

// Aggregation loop plus the evaluation protocol (ablation's scalar outcome).
PipelineResult run_aggregate_pipeline(const config::ExperimentConfig& cfg, bool with_eval);

// Writes manifest.txt and config.cfg (the exact normalized config) into dir.
void write_manifest(const std::string& dir, const std::string& command,
                    const config::ExperimentConfig& cfg);

}  // namespace mbmpc::cli
