#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "corrbalance/experiment.hpp"

namespace {

using corrbalance::ConfigError;
using corrbalance::Json;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

Json load_config(const std::string& path) {
  try {
    return Json::parse(corrbalance::read_text_file(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

corrbalance::ProtocolSelection parse_protocols(const std::string& protocol) {
  corrbalance::ProtocolSelection selection;
  if (protocol == "constrained") {
    selection.unconstrained = false;
  } else if (protocol == "unconstrained") {
    selection.constrained = false;
  } else if (protocol != "both") {
    throw ConfigError("--protocol must be constrained, unconstrained or both");
  }
  return selection;
}

void apply_overrides(corrbalance::ExperimentConfig& config, const std::string& out_dir,
                     const std::vector<std::uint64_t>& seeds) {
  if (!out_dir.empty()) config.out_dir = out_dir;
  if (!seeds.empty()) config.seeds = seeds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Correlation-aware long-tailed classification workbench"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  std::string protocol = "both";
  std::vector<std::uint64_t> seeds;

  auto* generate = app.add_subcommand("generate", "Generate a synthetic dataset (JSON Lines)");
  generate->add_option("--config", config_path, "Generator config JSON")->required();
  generate->add_option("--out", out_path, "Output dataset path")->required();

  auto* train = app.add_subcommand("train", "Train and evaluate the configured loss variants");
  train->add_option("--config", config_path, "Experiment config JSON")->required();
  train->add_option("--out", out_path, "Override output directory");
  train->add_option("--seeds", seeds, "Override seeds")->delimiter(',');
  train->add_option("--protocol", protocol, "constrained | unconstrained | both");

  auto* sweep = app.add_subcommand("sweep", "Re-weighting exponent sweep with reference run");
  sweep->add_option("--config", config_path, "Sweep spec JSON")->required();
  sweep->add_option("--out", out_path, "Override output directory");
  sweep->add_option("--seeds", seeds, "Override seeds")->delimiter(',');

  auto* observe = app.add_subcommand("observe", "Two-group correlation observation experiment");
  observe->add_option("--config", config_path, "Observation spec JSON")->required();
  observe->add_option("--out", out_path, "Override output directory");
  observe->add_option("--seeds", seeds, "Override seeds")->delimiter(',');

  auto* ablate = app.add_subcommand("ablate", "Center/normalization composition grid");
  ablate->add_option("--config", config_path, "Ablation spec JSON")->required();
  ablate->add_option("--out", out_path, "Override output directory");
  ablate->add_option("--seeds", seeds, "Override seeds")->delimiter(',');

  auto* report = app.add_subcommand("report", "Consolidated markdown + SVG report for a run dir");
  report->add_option("--out", out_path, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (generate->parsed()) {
      corrbalance::cmd_generate(
          corrbalance::generator_config_from_json(load_config(config_path)), out_path);
    } else if (train->parsed()) {
      auto config = corrbalance::experiment_config_from_json(load_config(config_path));
      apply_overrides(config, out_path, seeds);
      corrbalance::cmd_train(config, parse_protocols(protocol));
    } else if (sweep->parsed()) {
      auto spec = corrbalance::sweep_spec_from_json(load_config(config_path));
      apply_overrides(spec.base, out_path, seeds);
      corrbalance::cmd_sweep(spec);
    } else if (observe->parsed()) {
      auto spec = corrbalance::observe_spec_from_json(load_config(config_path));
      if (!out_path.empty()) spec.out_dir = out_path;
      if (!seeds.empty()) spec.seeds = seeds;
      corrbalance::cmd_observe(spec);
    } else if (ablate->parsed()) {
      auto spec = corrbalance::ablate_spec_from_json(load_config(config_path));
      apply_overrides(spec.base, out_path, seeds);
      corrbalance::cmd_ablate(spec);
    } else if (report->parsed()) {
      corrbalance::cmd_report(out_path);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitValidation;
  } catch (const corrbalance::Json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}
