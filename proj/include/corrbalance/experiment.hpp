#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "corrbalance/metrics.hpp"
#include "corrbalance/model.hpp"
#include "corrbalance/serialize.hpp"
#include "corrbalance/synthdata.hpp"

namespace corrbalance {

struct ExperimentConfig {
  std::optional<GeneratorConfig> generator;
  std::string dataset_path;  // used when no inline generator is given
  TrainConfig train;
  std::vector<LossConfig> losses;  // variants to compare; defaults to {train.loss}
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string out_dir;
};

ExperimentConfig experiment_config_from_json(const Json& j);
Json to_json(const ExperimentConfig& config);

struct SweepSpec {
  std::string parameter = "reweight_n";
  Vector grid;  // exponents in [0,1]
  ExperimentConfig base;
};

SweepSpec sweep_spec_from_json(const Json& j);

struct ObserveSpec {
  ClassSpec primary;
  ClassSpec strong;
  ClassSpec weak;
  ObservationOptions options;
  TrainConfig train;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string out_dir;
};

ObserveSpec observe_spec_from_json(const Json& j);

struct AblateSpec {
  ExperimentConfig base;
  std::vector<CenterMode> center_modes;
  std::vector<NormalizationMode> normalizations;
};

AblateSpec ablate_spec_from_json(const Json& j);

struct RunSummary {
  std::string name;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::optional<EvalReport> constrained;
  std::optional<EvalReport> unconstrained;
  Vector class_frequencies;
  std::string config_hash;
};

/// One full training run; writes checkpoint, training-log CSV and the
/// requested evaluation reports under <out_dir>/run_<name>_s<seed>/ when
/// out_dir is nonempty. Training failures are captured in the summary.
RunSummary run_single(const Dataset& dataset, TrainConfig train, const LossConfig& loss,
                      std::uint64_t seed, const std::string& out_dir,
                      bool eval_constrained = true, bool eval_unconstrained = true);

Dataset load_or_generate(const ExperimentConfig& config);

/// Executes jobs on up to CORRBALANCE_THREADS workers (hardware concurrency
/// by default). Each job must be independent; results land by index.
void run_parallel(const std::vector<std::function<void()>>& jobs);

struct ProtocolSelection {
  bool constrained = true;
  bool unconstrained = true;
};

void cmd_generate(const GeneratorConfig& config, const std::string& out_path);
std::vector<RunSummary> cmd_train(const ExperimentConfig& config,
                                  const ProtocolSelection& protocols = {});
std::vector<RunSummary> cmd_sweep(const SweepSpec& spec);
void cmd_observe(const ObserveSpec& spec);
std::vector<RunSummary> cmd_ablate(const AblateSpec& spec);
void cmd_report(const std::string& run_dir);

/// Aggregated observation deltas (re-weighting minus cross entropy), mean
/// over seeds, exposed for tests and the acceptance suite.
struct ObservationDeltas {
  // [group][class][protocol] -> delta in recall@100 percentage points,
  // group 0 = strong, group 1 = weak; class 0 = primary, 1 = companion.
  double delta[2][2][2] = {};
};

ObservationDeltas observe_deltas(const ObserveSpec& spec);

}  // namespace corrbalance
