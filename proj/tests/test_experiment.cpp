#include <filesystem>

#include <doctest.h>

#include "corrbalance/experiment.hpp"

using namespace corrbalance;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("experiment");

namespace {

Json tiny_generator_json() {
  Json classes = Json::array();
  const double offsets[3] = {0.0, 5.0, -5.0};
  const double shares[3] = {0.5, 0.3, 0.2};
  for (int c = 0; c < 3; ++c) {
    Vector prototype(8, 0.0);
    prototype[0] = offsets[c];
    prototype[4] = offsets[c];
    classes.push_back({{"class_id", c},
                       {"prototype", prototype},
                       {"sigma", 0.8},
                       {"share", shares[c]}});
  }
  return {{"num_scenes", 60}, {"min_nodes", 4}, {"max_nodes", 6},
          {"min_pairs", 1},   {"max_pairs", 2}, {"raw_dim", 8},
          {"classes", classes}, {"seed", 5}};
}

Json tiny_experiment_json(const std::string& out_dir) {
  return {{"generator", tiny_generator_json()},
          {"train",
           {{"epochs", 2},
            {"batch_size", 32},
            {"lr", 0.1},
            {"lr_c", 0.5},
            {"loss", {{"variant", "pcpl"}}},
            {"seed", 1},
            {"feature_dim", 8},
            {"pair_hidden_dim", 16},
            {"encoder", nullptr}}},
          {"losses", Json::array({{{"variant", "pcpl"}}, {{"variant", "plain_ce"}}})},
          {"seeds", {1, 2}},
          {"out_dir", out_dir}};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("experiment config validation names the failing field") {
  Json config = tiny_experiment_json("/tmp/x");
  config.erase("train");
  CHECK_THROWS_WITH_AS(experiment_config_from_json(config),
                       doctest::Contains("train"), ConfigError);

  config = tiny_experiment_json("/tmp/x");
  config["train"]["epochs"] = 0;
  try {
    experiment_config_from_json(config);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("train") != std::string::npos);
    CHECK(std::string(e.what()).find("epochs") != std::string::npos);
  }

  config = tiny_experiment_json("/tmp/x");
  config["generator"]["classes"][0]["share"] = 0.9;
  try {
    experiment_config_from_json(config);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("generator") != std::string::npos);
    CHECK(std::string(e.what()).find("share") != std::string::npos);
  }

  config = tiny_experiment_json("/tmp/x");
  config.erase("generator");
  CHECK_THROWS_AS(experiment_config_from_json(config), ConfigError);
}

TEST_CASE("cmd_train writes per-run artifacts deterministically") {
  const fs::path dir = fresh_dir("corrbalance_train_test");
  ExperimentConfig config = experiment_config_from_json(tiny_experiment_json(dir.string()));

  const auto summaries = cmd_train(config);
  CHECK(summaries.size() == 4);  // 2 losses x 2 seeds
  for (const RunSummary& summary : summaries) {
    CHECK(summary.ok);
    const fs::path run = dir / ("run_" + summary.name + "_s" + std::to_string(summary.seed));
    CHECK(fs::exists(run / "checkpoint.json"));
    CHECK(fs::exists(run / "train_log.csv"));
    CHECK(fs::exists(run / "eval_constrained.json"));
    CHECK(fs::exists(run / "eval_unconstrained.csv"));
    CHECK(fs::exists(run / "run.json"));
    CHECK(summary.constrained->config_hash == summary.config_hash);
  }

  // PCPL keeps tau strictly positive at every logged step.
  const std::string log = read_text_file((dir / "run_pcpl_s1" / "train_log.csv").string());
  CHECK(log.find("tau_min") != std::string::npos);

  // Byte-identical on re-run.
  const std::string checkpoint_before =
      read_text_file((dir / "run_pcpl_s1" / "checkpoint.json").string());
  cmd_train(config);
  const std::string checkpoint_after =
      read_text_file((dir / "run_pcpl_s1" / "checkpoint.json").string());
  CHECK(checkpoint_before == checkpoint_after);

  // Report assembly over the finished runs.
  cmd_report(dir.string());
  CHECK(fs::exists(dir / "report.md"));
  CHECK(fs::exists(dir / "per_class_recall.svg"));
  const std::string report = read_text_file((dir / "report.md").string());
  CHECK(report.find("pcpl") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("cmd_sweep emits frontier table and plot") {
  const fs::path dir = fresh_dir("corrbalance_sweep_test");
  Json spec_json = {{"parameter", "reweight_n"},
                    {"grid", {0.0, 1.0}},
                    {"base", tiny_experiment_json(dir.string())}};
  spec_json["base"]["seeds"] = {1};
  SweepSpec spec = sweep_spec_from_json(spec_json);
  const auto summaries = cmd_sweep(spec);
  CHECK(summaries.size() == 3);  // 2 grid points + pcpl reference
  CHECK(fs::exists(dir / "sweep.csv"));
  CHECK(fs::exists(dir / "sweep.svg"));

  const std::string csv = read_text_file((dir / "sweep.csv").string());
  CHECK(csv.find("pcpl") != std::string::npos);
  CHECK(csv.find("mr100") != std::string::npos);

  // Plot points come from the same numbers as the CSV.
  const std::string svg = read_text_file((dir / "sweep.svg").string());
  CHECK(svg.find("data-y=") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("cmd_report on an empty directory") {
  const fs::path dir = fresh_dir("corrbalance_empty_report");
  cmd_report(dir.string());
  const std::string report = read_text_file((dir / "report.md").string());
  CHECK(report.find("no runs") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("sweep spec validation") {
  Json bad = {{"parameter", "gamma"}, {"grid", {0.0}}, {"base", tiny_experiment_json("/tmp/x")}};
  CHECK_THROWS_AS(sweep_spec_from_json(bad), ConfigError);
  Json empty_grid = {{"parameter", "reweight_n"}, {"grid", Json::array()},
                     {"base", tiny_experiment_json("/tmp/x")}};
  CHECK_THROWS_AS(sweep_spec_from_json(empty_grid), ConfigError);
}

TEST_SUITE_END();
