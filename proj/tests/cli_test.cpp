#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mbmpc/cli.hpp"
#include "mbmpc/config.hpp"
#include "mbmpc/csv.hpp"

using namespace mbmpc;
using config::ExperimentConfig;

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("mbmpc_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_file(const fs::path& dir, const std::string& name, const std::string& text) {
  fs::path path = dir / name;
  std::ofstream out(path);
  out << text;
  return path;
}

// A configuration every command finishes quickly on.
std::string tiny_config() {
  return "env = pointmass\n"
         "dynamics.hidden = 8 8\n"
         "dynamics.batch = 32\n"
         "mpc.horizon = 3\n"
         "mpc.candidates = 16\n"
         "agg.init_rollouts = 4\n"
         "agg.init_rollout_length = 12\n"
         "agg.max_iter = 2\n"
         "agg.rollouts_per_iter = 1\n"
         "agg.rollout_length = 8\n"
         "agg.epochs_per_iter = 2\n"
         "imitate.expert_rollouts = 2\n"
         "imitate.rollout_length = 6\n"
         "imitate.bc_epochs = 3\n"
         "imitate.bc_batch = 16\n"
         "imitate.dagger_iters = 1\n"
         "imitate.dagger_rollouts_per_iter = 1\n"
         "imitate.dagger_epochs_per_iter = 2\n"
         "finetune.iterations = 2\n"
         "finetune.batch_episodes = 2\n"
         "finetune.episode_length = 6\n"
         "eval.episodes = 1\n"
         "eval.episode_length = 8\n"
         "validate.rollouts = 3\n"
         "validate.rollout_length = 12\n"
         "validate.horizons = 1 5 10\n";
}

}  // namespace

TEST_CASE("config: minimal file fills the documented defaults") {
  ExperimentConfig cfg = config::config_from_text("env = pointmass\n");
  CHECK(cfg.agg.mpc.horizon == 10);
  CHECK(cfg.agg.mpc.num_candidates == 1000);
  CHECK(cfg.agg.mpc.discount == 1.0);
  CHECK(cfg.agg.hidden_sizes == std::vector<int>{500, 500});
  CHECK(cfg.policy_std == 1.0);
  CHECK(cfg.seed == 0);
}

TEST_CASE("config: the swimmer-analog preset carries the reference values") {
  ExperimentConfig cfg = config::load_config(std::string(MBMPC_SOURCE_DIR) +
                                             "/configs/swimmer_analog.cfg");
  CHECK(cfg.env.kind == envs::EnvKind::kUnicycle);
  CHECK(cfg.agg.epochs_per_iter == 30);
  CHECK(cfg.agg.max_iter == 6);
  CHECK(cfg.agg.rollouts_per_iter == 9);
  CHECK(cfg.agg.init_rollouts == 25);
  CHECK(cfg.agg.init_rollout_length == 333);
  CHECK(cfg.agg.split_rand == 0.1);
  CHECK(cfg.agg.mpc.horizon == 20);
  CHECK(cfg.agg.mpc.num_candidates == 5000);
  CHECK(cfg.env.dt == 0.15);
  CHECK(cfg.expert_rollouts == 30);
  CHECK(cfg.dagger_iters == 3);
  CHECK(cfg.dagger_rollouts_per_iter == 5);
  CHECK(cfg.bc_lr == 0.0001);
  CHECK(cfg.bc_batch == 500);
  CHECK(cfg.policy_hidden == std::vector<int>{64, 64});
  CHECK(cfg.policy_std == 1.0);
}

TEST_CASE("config: negative candidate count rejected with the field name") {
  CHECK_THROWS_WITH_AS(config::config_from_text("env = pointmass\nmpc.candidates = -5\n"),
                       doctest::Contains("mpc.candidates"), std::invalid_argument);
}

TEST_CASE("config: unknown key rejected") {
  CHECK_THROWS_WITH_AS(config::config_from_text("env = pointmass\nfoo = 1\n"),
                       doctest::Contains("unknown key 'foo'"), std::invalid_argument);
}

TEST_CASE("config: parse error reports the line number") {
  CHECK_THROWS_WITH_AS(config::config_from_text("env = pointmass\nthis is not a pair\n"),
                       doctest::Contains("line 2"), std::invalid_argument);
}

TEST_CASE("config: heading sweep on an env without heading rejected") {
  CHECK_THROWS_WITH_AS(
      config::config_from_text("env = pointmass\nagg.exploration = heading_sweep\n"),
      doctest::Contains("agg.exploration"), std::invalid_argument);
}

TEST_CASE("config: missing referenced file rejected with a hint") {
  CHECK_THROWS_WITH_AS(
      config::config_from_text("env = pointmass\nmodel.file = /nonexistent/model.json\n"),
      doctest::Contains("model.file"), std::invalid_argument);
}

TEST_CASE("config: overrides apply after the file content") {
  ExperimentConfig cfg =
      config::config_from_text("env = pointmass\nmpc.horizon = 4\n", {"mpc.horizon=7"});
  CHECK(cfg.agg.mpc.horizon == 7);
}

TEST_CASE("config: normalized dump reloads to the same dump") {
  ExperimentConfig cfg = config::config_from_text(tiny_config());
  std::string dump = config::config_to_text(cfg);
  ExperimentConfig reloaded = config::config_from_text(dump);
  CHECK(config::config_to_text(reloaded) == dump);
}

TEST_CASE("cli: validate with an oracle model reports zero error at every horizon") {
  fs::path dir = fresh_dir("validate");
  fs::path cfg = write_file(dir, "exp.cfg", tiny_config() + "model.oracle = true\n");
  int rc = cli::run({"validate", "--config", cfg.string(), "--out", (dir / "out").string()});
  REQUIRE(rc == 0);
  csv::Table table = csv::read_table((dir / "out" / "validation.csv").string());
  REQUIRE(table.rows.size() == 3);
  for (const auto& row : table.rows) CHECK(std::stod(row[1]) == 0.0);
}

TEST_CASE("cli: train-dynamics writes a loadable model that run-mpc consumes") {
  fs::path dir = fresh_dir("train_then_mpc");
  fs::path cfg = write_file(dir, "exp.cfg", tiny_config());
  fs::path train_out = dir / "train";
  REQUIRE(cli::run({"train-dynamics", "--config", cfg.string(), "--out", train_out.string()}) ==
          0);
  CHECK(fs::exists(train_out / "model.json"));
  CHECK(fs::exists(train_out / "metrics.csv"));
  CHECK(fs::exists(train_out / "dataset.csv"));

  fs::path mpc_out = dir / "mpc";
  int rc = cli::run({"run-mpc", "--config", cfg.string(), "--out", mpc_out.string(), "--override",
                     "model.file=" + (train_out / "model.json").string()});
  CHECK(rc == 0);
  CHECK(fs::exists(mpc_out / "episode_0.csv"));
  CHECK(fs::exists(mpc_out / "summary.csv"));
}

TEST_CASE("cli: run-mpc without a model fails with a remediation hint") {
  fs::path dir = fresh_dir("missing_model");
  fs::path cfg = write_file(dir, "exp.cfg", tiny_config());
  CHECK(cli::run({"run-mpc", "--config", cfg.string(), "--out", (dir / "out").string()}) != 0);
}

TEST_CASE("cli: aggregate rerun with the same seed produces byte-identical metrics") {
  fs::path dir = fresh_dir("determinism");
  fs::path cfg = write_file(dir, "exp.cfg", tiny_config());
  std::string before = slurp(cfg);
  REQUIRE(cli::run({"aggregate", "--config", cfg.string(), "--out", (dir / "a").string()}) == 0);
  REQUIRE(cli::run({"aggregate", "--config", cfg.string(), "--out", (dir / "b").string()}) == 0);
  CHECK(slurp(dir / "a" / "metrics.csv") == slurp(dir / "b" / "metrics.csv"));
  CHECK(slurp(dir / "a" / "model.json") == slurp(dir / "b" / "model.json"));

  SUBCASE("the input config file is never mutated") { CHECK(slurp(cfg) == before); }

  SUBCASE("checkpoints exist for every iteration") {
    CHECK(fs::exists(dir / "a" / "model_iter_1.json"));
    CHECK(fs::exists(dir / "a" / "model_iter_2.json"));
  }

  SUBCASE("the manifest snapshot reproduces the exact config") {
    ExperimentConfig cfg_obj = config::load_config(cfg.string());
    cfg_obj.out_dir = (dir / "a").string();
    CHECK(slurp(dir / "a" / "config.cfg") == config::config_to_text(cfg_obj));
    ExperimentConfig reloaded = config::load_config((dir / "a" / "config.cfg").string());
    CHECK(config::config_to_text(reloaded) == config::config_to_text(cfg_obj));
  }

  SUBCASE("parallel shooting reproduces the serial artifacts byte for byte") {
    REQUIRE(cli::run({"aggregate", "--config", cfg.string(), "--out", (dir / "par").string(),
                      "--parallel-shooting"}) == 0);
    CHECK(slurp(dir / "par" / "metrics.csv") == slurp(dir / "a" / "metrics.csv"));
    CHECK(slurp(dir / "par" / "model.json") == slurp(dir / "a" / "model.json"));
  }
}

TEST_CASE("cli: follow-path runs with an oracle model on an L-shaped path") {
  fs::path dir = fresh_dir("follow");
  fs::path waypoints = write_file(dir, "path.csv", "x,y\n0,0\n2,0\n2,2\n");
  fs::path cfg = write_file(dir, "exp.cfg",
                            tiny_config() + "model.oracle = true\npath.file = " +
                                waypoints.string() + "\nmpc.horizon = 8\nmpc.candidates = 200\n" +
                                "eval.episode_length = 150\n");
  REQUIRE(cli::run({"follow-path", "--config", cfg.string(), "--out", (dir / "out").string()}) ==
          0);
  csv::Table summary = csv::read_table((dir / "out" / "summary.csv").string());
  REQUIRE(summary.rows.size() == 1);
  double mean_perp = std::stod(summary.rows[0][2]);
  double final_dist = std::stod(summary.rows[0][3]);
  CHECK(mean_perp < 0.5);
  CHECK(final_dist < 1.0);
}

TEST_CASE("cli: imitate then finetune consume each other's artifacts") {
  fs::path dir = fresh_dir("imitate_finetune");
  fs::path cfg = write_file(dir, "exp.cfg", tiny_config() + "model.oracle = true\n");
  fs::path imitate_out = dir / "imitate";
  REQUIRE(cli::run({"imitate", "--config", cfg.string(), "--out", imitate_out.string()}) == 0);
  REQUIRE(fs::exists(imitate_out / "policy.json"));
  REQUIRE(fs::exists(imitate_out / "imitate_log.csv"));

  fs::path finetune_out = dir / "finetune";
  int rc = cli::run({"finetune", "--config", cfg.string(), "--out", finetune_out.string(),
                     "--override", "policy.file=" + (imitate_out / "policy.json").string()});
  CHECK(rc == 0);
  CHECK(fs::exists(finetune_out / "finetune_log.csv"));
  CHECK(fs::exists(finetune_out / "policy_final.json"));
}

TEST_CASE("cli: finetune with random init needs no policy file") {
  fs::path dir = fresh_dir("finetune_random");
  fs::path cfg = write_file(dir, "exp.cfg", tiny_config() + "finetune.init = random\n");
  CHECK(cli::run({"finetune", "--config", cfg.string(), "--out", (dir / "out").string()}) == 0);
}

TEST_CASE("cli: ablate writes one row per value per seed and survives failures") {
  fs::path dir = fresh_dir("ablate");
  fs::path cfg = write_file(dir, "exp.cfg", tiny_config());

  SUBCASE("single value, single seed") {
    REQUIRE(cli::run({"ablate", "--config", cfg.string(), "--out", (dir / "one").string(),
                      "--axis", "epochs", "--values", "2"}) == 0);
    csv::Table sweep = csv::read_table((dir / "one" / "sweep.csv").string());
    REQUIRE(sweep.rows.size() == 1);
    CHECK(sweep.rows[0][0] == "epochs");
    CHECK(sweep.rows[0][4] == "ok");
  }

  SUBCASE("an invalid value is marked and the sweep continues") {
    REQUIRE(cli::run({"ablate", "--config", cfg.string(), "--out", (dir / "bad").string(),
                      "--axis", "horizon_k", "--values", "0:16,3:16", "--seeds", "2"}) == 0);
    csv::Table sweep = csv::read_table((dir / "bad" / "sweep.csv").string());
    REQUIRE(sweep.rows.size() == 4);
    CHECK(sweep.rows[0][4] == "error");
    CHECK(sweep.rows[1][4] == "error");
    CHECK(sweep.rows[2][4] == "ok");
    CHECK(sweep.rows[3][4] == "ok");
  }
}

TEST_CASE("cli: unknown subcommand or missing config is a parse failure") {
  CHECK(cli::run({"frobnicate"}) != 0);
  CHECK(cli::run({"run-mpc"}) != 0);
  CHECK(cli::run({"validate", "--config", "/nonexistent/exp.cfg"}) != 0);
}
