#include "corrbalance/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <sstream>
#include <thread>

#include "corrbalance/report.hpp"
#include "corrbalance/rng.hpp"

namespace fs = std::filesystem;

namespace corrbalance {

namespace {

const Json& require_field(const Json& j, const char* key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) {
    throw ConfigError(path.empty() ? std::string(key) + ": missing required field"
                                   : path + "." + key + ": missing required field");
  }
  return j.at(key);
}

template <typename Fn>
auto parse_section(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  } catch (const Json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string run_dir_name(const std::string& loss_name, std::uint64_t seed) {
  return "run_" + loss_name + "_s" + std::to_string(seed);
}

std::string train_log_csv(const TrainedModel& model, const std::string& hash) {
  std::vector<std::vector<std::string>> rows;
  for (const EpochLog& entry : model.log) {
    rows.push_back({std::to_string(entry.epoch), format_double(entry.mean_loss),
                    format_double(entry.mr50), format_double(entry.mr100),
                    format_double(entry.tau_min), format_double(entry.tau_max),
                    std::to_string(entry.dropped)});
  }
  return csv_table({{"config_hash", hash}, {"seed", std::to_string(model.config.seed)}},
                   {"epoch", "loss", "mr50", "mr100", "tau_min", "tau_max", "dropped"}, rows);
}

std::string eval_report_csv(const EvalReport& report) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& [cls, by_k] : report.per_class) {
    std::vector<std::string> row{std::to_string(cls),
                                 std::to_string(report.gt_counts.at(cls))};
    for (std::size_t k : report.ks) {
      row.push_back(format_double(by_k.count(k) ? by_k.at(k) : 0.0));
    }
    rows.push_back(std::move(row));
  }
  std::vector<std::string> header{"class", "gt_count"};
  for (std::size_t k : report.ks) header.push_back("recall@" + std::to_string(k));
  return csv_table({{"protocol", to_string(report.protocol)},
                    {"config_hash", report.config_hash},
                    {"seed", std::to_string(report.seed)},
                    {"saturated", report.saturated ? "true" : "false"}},
                   header, rows);
}

Json run_summary_to_json(const RunSummary& summary) {
  Json j = {{"name", summary.name},
            {"seed", summary.seed},
            {"ok", summary.ok},
            {"error", summary.error},
            {"config_hash", summary.config_hash},
            {"class_frequencies", summary.class_frequencies}};
  j["constrained"] = summary.constrained ? to_json(*summary.constrained) : Json(nullptr);
  j["unconstrained"] = summary.unconstrained ? to_json(*summary.unconstrained) : Json(nullptr);
  return j;
}

EvalReport eval_report_from_json(const Json& j) {
  EvalReport report;
  report.protocol = protocol_from_string(j.at("protocol").get<std::string>());
  report.ks = j.at("ks").get<std::vector<std::size_t>>();
  for (const auto& [key, value] : j.at("recall").items()) {
    report.recall[std::stoul(key)] = value.get<double>();
  }
  for (const auto& [key, value] : j.at("mean_recall").items()) {
    report.mean_recall[std::stoul(key)] = value.get<double>();
  }
  for (const auto& [key, value] : j.at("per_class").items()) {
    const int cls = std::stoi(key);
    for (const auto& [inner, v] : value.items()) {
      if (inner == "gt_count") {
        report.gt_counts[cls] = v.get<std::size_t>();
      } else {
        report.per_class[cls][std::stoul(inner)] = v.get<double>();
      }
    }
  }
  report.saturated = j.at("saturated").get<bool>();
  report.config_hash = j.at("config_hash").get<std::string>();
  report.seed = j.at("seed").get<std::uint64_t>();
  return report;
}

RunSummary run_summary_from_json(const Json& j) {
  RunSummary summary;
  summary.name = j.at("name").get<std::string>();
  summary.seed = j.at("seed").get<std::uint64_t>();
  summary.ok = j.at("ok").get<bool>();
  summary.error = j.at("error").get<std::string>();
  summary.config_hash = j.at("config_hash").get<std::string>();
  summary.class_frequencies = j.at("class_frequencies").get<Vector>();
  if (!j.at("constrained").is_null()) {
    summary.constrained = eval_report_from_json(j.at("constrained"));
  }
  if (!j.at("unconstrained").is_null()) {
    summary.unconstrained = eval_report_from_json(j.at("unconstrained"));
  }
  return summary;
}

const std::vector<std::size_t> kReportKs = {20, 50, 100};

}  // namespace

ExperimentConfig experiment_config_from_json(const Json& j) {
  ExperimentConfig config;
  if (j.contains("generator") && !j.at("generator").is_null()) {
    config.generator = parse_section(
        "generator", [&] { return generator_config_from_json(j.at("generator")); });
    parse_section("generator", [&] {
      validate_generator_config(*config.generator);
      return 0;
    });
  } else if (j.contains("dataset")) {
    config.dataset_path = j.at("dataset").get<std::string>();
  } else {
    throw ConfigError("generator/dataset: exactly one data source is required");
  }
  config.train =
      parse_section("train", [&] { return train_config_from_json(require_field(j, "train", "")); });
  parse_section("train", [&] {
    validate_train_config(config.train);
    return 0;
  });
  if (j.contains("losses")) {
    for (std::size_t i = 0; i < j.at("losses").size(); ++i) {
      config.losses.push_back(parse_section("losses[" + std::to_string(i) + "]", [&] {
        return loss_config_from_json(j.at("losses")[i]);
      }));
    }
  }
  if (config.losses.empty()) config.losses.push_back(config.train.loss);
  if (j.contains("seeds")) {
    config.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  }
  if (config.seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  config.out_dir = require_field(j, "out_dir", "").get<std::string>();
  return config;
}

Json to_json(const ExperimentConfig& config) {
  Json losses = Json::array();
  for (const LossConfig& loss : config.losses) losses.push_back(to_json(loss));
  Json j = {{"train", to_json(config.train)},
            {"losses", losses},
            {"seeds", config.seeds},
            {"out_dir", config.out_dir}};
  if (config.generator) {
    j["generator"] = to_json(*config.generator);
  } else {
    j["dataset"] = config.dataset_path;
  }
  return j;
}

SweepSpec sweep_spec_from_json(const Json& j) {
  SweepSpec spec;
  spec.parameter = j.value("parameter", spec.parameter);
  if (spec.parameter != "reweight_n") {
    throw ConfigError("parameter: only reweight_n sweeps are supported");
  }
  spec.grid = require_field(j, "grid", "").get<Vector>();
  if (spec.grid.empty()) throw ConfigError("grid: must be nonempty");
  for (double n : spec.grid) {
    if (n < 0.0 || n > 1.0) throw ConfigError("grid: exponents must lie in [0,1]");
  }
  spec.base = experiment_config_from_json(require_field(j, "base", ""));
  return spec;
}

ObserveSpec observe_spec_from_json(const Json& j) {
  ObserveSpec spec;
  spec.primary = parse_section("primary",
                               [&] { return class_spec_from_json(require_field(j, "primary", "")); });
  spec.strong = parse_section("strong",
                              [&] { return class_spec_from_json(require_field(j, "strong", "")); });
  spec.weak = parse_section("weak",
                            [&] { return class_spec_from_json(require_field(j, "weak", "")); });
  if (j.contains("num_scenes")) spec.options.num_scenes = j.at("num_scenes").get<std::size_t>();
  if (j.contains("raw_dim")) spec.options.raw_dim = j.at("raw_dim").get<std::size_t>();
  if (j.contains("primary_share")) spec.options.primary_share = j.at("primary_share").get<double>();
  spec.train =
      parse_section("train", [&] { return train_config_from_json(require_field(j, "train", "")); });
  parse_section("train", [&] {
    validate_train_config(spec.train);
    return 0;
  });
  if (j.contains("seeds")) spec.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (spec.seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  spec.out_dir = require_field(j, "out_dir", "").get<std::string>();
  return spec;
}

AblateSpec ablate_spec_from_json(const Json& j) {
  AblateSpec spec;
  spec.base = experiment_config_from_json(require_field(j, "base", ""));
  if (j.contains("center_modes")) {
    for (const Json& m : j.at("center_modes")) {
      spec.center_modes.push_back(center_mode_from_string(m.get<std::string>()));
    }
  } else {
    spec.center_modes = {CenterMode::Learnt, CenterMode::Average};
  }
  if (j.contains("normalizations")) {
    for (const Json& m : j.at("normalizations")) {
      spec.normalizations.push_back(normalization_mode_from_string(m.get<std::string>()));
    }
  } else {
    spec.normalizations = {NormalizationMode::MinMax, NormalizationMode::Softmax,
                           NormalizationMode::Scaling};
  }
  if (spec.center_modes.empty() || spec.normalizations.empty()) {
    throw ConfigError("ablation axes must be nonempty");
  }
  return spec;
}

Dataset load_or_generate(const ExperimentConfig& config) {
  if (config.generator) return generate(*config.generator);
  return read_dataset_jsonl(config.dataset_path);
}

void run_parallel(const std::vector<std::function<void()>>& jobs) {
  std::size_t max_threads = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("CORRBALANCE_THREADS")) {
    const long parsed = std::strtol(env, nullptr, 10);
    if (parsed >= 1) max_threads = static_cast<std::size_t>(parsed);
  }
  max_threads = std::min(max_threads, jobs.size());
  if (max_threads <= 1) {
    for (const auto& job : jobs) job();
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  workers.reserve(max_threads);
  for (std::size_t t = 0; t < max_threads; ++t) {
    workers.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= jobs.size()) return;
        jobs[i]();
      }
    });
  }
  for (std::thread& w : workers) w.join();
}

RunSummary run_single(const Dataset& dataset, TrainConfig train, const LossConfig& loss,
                      std::uint64_t seed, const std::string& out_dir, bool eval_constrained,
                      bool eval_unconstrained) {
  train.loss = loss;
  train.seed = seed;
  RunSummary summary;
  summary.name = loss.run_name();
  summary.seed = seed;
  summary.config_hash =
      config_hash(Json{{"train", to_json(train)}, {"generator", to_json(dataset.config)}});

  try {
    TrainedModel model = fit(dataset, train);
    summary.class_frequencies = model.class_frequencies;

    std::vector<Scene> val;
    std::vector<ScenePredictions> preds;
    for (std::size_t s : model.val_scenes) {
      if (dataset.scenes[s].pairs.empty()) continue;
      val.push_back(dataset.scenes[s]);
      preds.push_back({dataset.scenes[s].id, predict(model.model, dataset.scenes[s])});
    }
    if (eval_constrained) {
      summary.constrained =
          evaluate(val, preds, kReportKs, Protocol::Constrained, summary.config_hash, seed);
    }
    if (eval_unconstrained) {
      summary.unconstrained =
          evaluate(val, preds, kReportKs, Protocol::Unconstrained, summary.config_hash, seed);
    }
    summary.ok = true;

    if (!out_dir.empty()) {
      const fs::path dir = fs::path(out_dir) / run_dir_name(summary.name, seed);
      fs::create_directories(dir);
      write_text_file((dir / "checkpoint.json").string(), checkpoint_to_json(model).dump(2) + "\n");
      write_text_file((dir / "train_log.csv").string(),
                      train_log_csv(model, summary.config_hash));
      if (summary.constrained) {
        write_text_file((dir / "eval_constrained.json").string(),
                        to_json(*summary.constrained).dump(2) + "\n");
        write_text_file((dir / "eval_constrained.csv").string(),
                        eval_report_csv(*summary.constrained));
      }
      if (summary.unconstrained) {
        write_text_file((dir / "eval_unconstrained.json").string(),
                        to_json(*summary.unconstrained).dump(2) + "\n");
        write_text_file((dir / "eval_unconstrained.csv").string(),
                        eval_report_csv(*summary.unconstrained));
      }
    }
  } catch (const Error& e) {
    summary.ok = false;
    summary.error = e.what();
  }
  if (!out_dir.empty()) {
    const fs::path dir = fs::path(out_dir) / run_dir_name(summary.name, seed);
    fs::create_directories(dir);
    write_text_file((dir / "run.json").string(), run_summary_to_json(summary).dump(2) + "\n");
  }
  return summary;
}

void cmd_generate(const GeneratorConfig& config, const std::string& out_path) {
  validate_generator_config(config);
  const Dataset dataset = generate(config);
  if (const fs::path parent = fs::path(out_path).parent_path(); !parent.empty()) {
    fs::create_directories(parent);
  }
  write_dataset_jsonl(dataset, out_path);
}

std::vector<RunSummary> cmd_train(const ExperimentConfig& config,
                                  const ProtocolSelection& protocols) {
  const Dataset dataset = load_or_generate(config);
  fs::create_directories(config.out_dir);

  std::vector<RunSummary> summaries(config.losses.size() * config.seeds.size());
  std::vector<std::function<void()>> jobs;
  for (std::size_t li = 0; li < config.losses.size(); ++li) {
    for (std::size_t si = 0; si < config.seeds.size(); ++si) {
      const std::size_t slot = li * config.seeds.size() + si;
      jobs.push_back([&, li, si, slot] {
        summaries[slot] = run_single(dataset, config.train, config.losses[li], config.seeds[si],
                                     config.out_dir, protocols.constrained,
                                     protocols.unconstrained);
      });
    }
  }
  run_parallel(jobs);
  return summaries;
}

std::vector<RunSummary> cmd_sweep(const SweepSpec& spec) {
  const Dataset dataset = load_or_generate(spec.base);
  fs::create_directories(spec.base.out_dir);
  const std::size_t num_classes = dataset.num_classes();

  std::vector<LossConfig> variants;
  for (double n : spec.grid) {
    LossConfig loss;
    loss.variant = LossVariant::ReweightPow;
    loss.reweight_n = n;
    variants.push_back(loss);
  }
  LossConfig pcpl;
  pcpl.variant = LossVariant::PCPL;
  variants.push_back(pcpl);

  std::vector<RunSummary> summaries(variants.size() * spec.base.seeds.size());
  std::vector<std::function<void()>> jobs;
  for (std::size_t vi = 0; vi < variants.size(); ++vi) {
    for (std::size_t si = 0; si < spec.base.seeds.size(); ++si) {
      const std::size_t slot = vi * spec.base.seeds.size() + si;
      jobs.push_back([&, vi, si, slot] {
        summaries[slot] = run_single(dataset, spec.base.train, variants[vi],
                                     spec.base.seeds[si], spec.base.out_dir);
      });
    }
  }
  run_parallel(jobs);

  // Frontier table: one row per (seed, grid point) plus the reference rows.
  const std::string hash = config_hash(Json{{"train", to_json(spec.base.train)},
                                            {"generator", to_json(dataset.config)},
                                            {"grid", spec.grid}});
  std::vector<std::string> header{"seed", "variant", "n"};
  for (std::size_t c = 0; c < num_classes; ++c) {
    header.push_back("recall100_class" + std::to_string(c));
  }
  header.push_back("mr100");
  std::vector<std::vector<std::string>> rows;
  for (std::size_t vi = 0; vi < variants.size(); ++vi) {
    for (std::size_t si = 0; si < spec.base.seeds.size(); ++si) {
      const RunSummary& summary = summaries[vi * spec.base.seeds.size() + si];
      if (!summary.ok || !summary.constrained) continue;
      const bool is_pcpl = variants[vi].variant == LossVariant::PCPL;
      std::vector<std::string> row{std::to_string(summary.seed),
                                   is_pcpl ? "pcpl" : "reweight_pow",
                                   is_pcpl ? "" : format_double(variants[vi].reweight_n)};
      for (std::size_t c = 0; c < num_classes; ++c) {
        const auto it = summary.constrained->per_class.find(static_cast<int>(c));
        row.push_back(format_double(
            it != summary.constrained->per_class.end() && it->second.count(100)
                ? it->second.at(100)
                : 0.0));
      }
      row.push_back(format_double(summary.constrained->mean_recall.at(100)));
      rows.push_back(std::move(row));
    }
  }
  write_text_file((fs::path(spec.base.out_dir) / "sweep.csv").string(),
                  csv_table({{"config_hash", hash}}, header, rows));

  // mR@100 vs n, mean over seeds, with the adaptive-loss reference line.
  SvgSeries curve{"reweight mean mR@100", "steelblue", {}};
  for (std::size_t vi = 0; vi < spec.grid.size(); ++vi) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t si = 0; si < spec.base.seeds.size(); ++si) {
      const RunSummary& summary = summaries[vi * spec.base.seeds.size() + si];
      if (summary.ok && summary.constrained) {
        sum += summary.constrained->mean_recall.at(100);
        ++count;
      }
    }
    if (count > 0) curve.points.emplace_back(spec.grid[vi], sum / count);
  }
  double pcpl_sum = 0.0;
  std::size_t pcpl_count = 0;
  for (std::size_t si = 0; si < spec.base.seeds.size(); ++si) {
    const RunSummary& summary = summaries[spec.grid.size() * spec.base.seeds.size() + si];
    if (summary.ok && summary.constrained) {
      pcpl_sum += summary.constrained->mean_recall.at(100);
      ++pcpl_count;
    }
  }
  std::vector<std::pair<std::string, double>> h_lines;
  if (pcpl_count > 0) h_lines.emplace_back("pcpl mean mR@100", pcpl_sum / pcpl_count);
  write_text_file((fs::path(spec.base.out_dir) / "sweep.svg").string(),
                  svg_line_chart("mean recall@100 vs re-weighting exponent", "n", "mR@100",
                                 {curve}, h_lines));
  return summaries;
}

ObservationDeltas observe_deltas(const ObserveSpec& spec) {
  ObservationDeltas deltas;
  double sums[2][2][2] = {};
  std::size_t counts[2][2][2] = {};
  std::mutex mu;

  std::vector<std::function<void()>> jobs;
  for (std::uint64_t seed : spec.seeds) {
    jobs.push_back([&, seed] {
      const ObservationGroups groups =
          build_observation_groups(spec.primary, spec.strong, spec.weak, seed, spec.options);
      for (int g = 0; g < 2; ++g) {
        const Dataset& dataset = g == 0 ? groups.strong : groups.weak;
        LossConfig ce;
        LossConfig rw;
        rw.variant = LossVariant::ReweightPow;
        rw.reweight_n = 1.0;
        const RunSummary ce_run = run_single(dataset, spec.train, ce, seed, "");
        const RunSummary rw_run = run_single(dataset, spec.train, rw, seed, "");
        if (!ce_run.ok || !rw_run.ok) return;
        std::lock_guard<std::mutex> lock(mu);
        for (int cls = 0; cls < 2; ++cls) {
          for (int p = 0; p < 2; ++p) {
            const EvalReport& ce_rep = p == 0 ? *ce_run.constrained : *ce_run.unconstrained;
            const EvalReport& rw_rep = p == 0 ? *rw_run.constrained : *rw_run.unconstrained;
            const double ce_r = ce_rep.per_class.count(cls) ? ce_rep.per_class.at(cls).at(100) : 0.0;
            const double rw_r = rw_rep.per_class.count(cls) ? rw_rep.per_class.at(cls).at(100) : 0.0;
            sums[g][cls][p] += (rw_r - ce_r) * 100.0;  // percentage points
            ++counts[g][cls][p];
          }
        }
      }
    });
  }
  run_parallel(jobs);
  for (int g = 0; g < 2; ++g) {
    for (int cls = 0; cls < 2; ++cls) {
      for (int p = 0; p < 2; ++p) {
        deltas.delta[g][cls][p] = counts[g][cls][p] ? sums[g][cls][p] / counts[g][cls][p] : 0.0;
      }
    }
  }
  return deltas;
}

void cmd_observe(const ObserveSpec& spec) {
  fs::create_directories(spec.out_dir);
  const ObservationDeltas deltas = observe_deltas(spec);
  const std::string hash = config_hash(Json{{"primary", to_json(spec.primary)},
                                            {"strong", to_json(spec.strong)},
                                            {"weak", to_json(spec.weak)},
                                            {"train", to_json(spec.train)},
                                            {"seeds", spec.seeds}});
  static const char* kGroups[] = {"strong", "weak"};
  static const char* kClasses[] = {"primary", "companion"};
  static const char* kProtocols[] = {"constrained", "unconstrained"};
  std::vector<std::vector<std::string>> rows;
  for (int g = 0; g < 2; ++g) {
    for (int cls = 0; cls < 2; ++cls) {
      for (int p = 0; p < 2; ++p) {
        rows.push_back({kGroups[g], kClasses[cls], kProtocols[p],
                        format_double(deltas.delta[g][cls][p])});
      }
    }
  }
  write_text_file((fs::path(spec.out_dir) / "observe.csv").string(),
                  csv_table({{"config_hash", hash}},
                            {"group", "class", "protocol", "delta_recall100_points"}, rows));

  std::ostringstream md;
  md << "# Observation groups: re-weighting (n=1) minus cross entropy\n\n";
  md << "Mean recall@100 deltas in percentage points over " << spec.seeds.size() << " seeds.\n\n";
  md << "| group | class | constrained | unconstrained |\n";
  md << "|---|---|---|---|\n";
  for (int g = 0; g < 2; ++g) {
    for (int cls = 0; cls < 2; ++cls) {
      md << "| " << kGroups[g] << " | " << kClasses[cls] << " | "
         << format_double(deltas.delta[g][cls][0]) << " | "
         << format_double(deltas.delta[g][cls][1]) << " |\n";
    }
  }
  md << "\nconfig_hash: " << hash << "\n";
  write_text_file((fs::path(spec.out_dir) / "observe.md").string(), md.str());
}

std::vector<RunSummary> cmd_ablate(const AblateSpec& spec) {
  const Dataset dataset = load_or_generate(spec.base);
  fs::create_directories(spec.base.out_dir);

  struct Combo {
    CenterMode center;
    NormalizationMode norm;
  };
  std::vector<Combo> combos;
  for (CenterMode c : spec.center_modes) {
    for (NormalizationMode n : spec.normalizations) combos.push_back({c, n});
  }

  LossConfig pcpl;
  pcpl.variant = LossVariant::PCPL;
  std::vector<RunSummary> summaries(combos.size() * spec.base.seeds.size());
  std::vector<std::function<void()>> jobs;
  for (std::size_t ci = 0; ci < combos.size(); ++ci) {
    for (std::size_t si = 0; si < spec.base.seeds.size(); ++si) {
      const std::size_t slot = ci * spec.base.seeds.size() + si;
      jobs.push_back([&, ci, si, slot] {
        TrainConfig train = spec.base.train;
        train.center_mode = combos[ci].center;
        train.normalization = combos[ci].norm;
        summaries[slot] = run_single(dataset, train, pcpl, spec.base.seeds[si], "");
      });
    }
  }
  run_parallel(jobs);

  const std::string hash = config_hash(Json{{"train", to_json(spec.base.train)},
                                            {"generator", to_json(dataset.config)}});
  std::vector<std::vector<std::string>> rows;
  struct Ordered {
    std::string name;
    double mr100 = 0.0;
  };
  std::vector<Ordered> ordering;
  for (std::size_t ci = 0; ci < combos.size(); ++ci) {
    double sums[2][2] = {};  // [protocol][k index: 50,100]
    std::size_t count = 0;
    for (std::size_t si = 0; si < spec.base.seeds.size(); ++si) {
      const RunSummary& summary = summaries[ci * spec.base.seeds.size() + si];
      if (!summary.ok) continue;
      sums[0][0] += summary.constrained->mean_recall.at(50);
      sums[0][1] += summary.constrained->mean_recall.at(100);
      sums[1][0] += summary.unconstrained->mean_recall.at(50);
      sums[1][1] += summary.unconstrained->mean_recall.at(100);
      ++count;
    }
    const std::string name =
        to_string(combos[ci].center) + "_center+" + to_string(combos[ci].norm) + "_norm";
    for (int p = 0; p < 2; ++p) {
      rows.push_back({name, p == 0 ? "constrained" : "unconstrained",
                      format_double(count ? sums[p][0] / count : 0.0),
                      format_double(count ? sums[p][1] / count : 0.0)});
    }
    ordering.push_back({name, count ? sums[0][1] / count : 0.0});
  }
  write_text_file((fs::path(spec.base.out_dir) / "ablate.csv").string(),
                  csv_table({{"config_hash", hash}},
                            {"composition", "protocol", "mr50", "mr100"}, rows));

  std::sort(ordering.begin(), ordering.end(),
            [](const Ordered& a, const Ordered& b) { return a.mr100 > b.mr100; });
  std::ostringstream md;
  md << "# Composition ablation (constrained mR@100, mean over seeds)\n\n";
  for (const Ordered& o : ordering) {
    md << "- " << o.name << ": " << format_double(o.mr100) << "\n";
  }
  md << "\nconfig_hash: " << hash << "\n";
  write_text_file((fs::path(spec.base.out_dir) / "ablate.md").string(), md.str());
  return summaries;
}

void cmd_report(const std::string& run_dir) {
  const fs::path dir(run_dir);
  std::ostringstream md;
  md << "# Experiment report\n\n";
  if (!fs::exists(dir)) {
    md << "no runs\n";
    fs::create_directories(dir);
    write_text_file((dir / "report.md").string(), md.str());
    return;
  }

  std::vector<RunSummary> runs;
  std::vector<std::string> missing;
  std::vector<fs::path> run_dirs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() && entry.path().filename().string().rfind("run_", 0) == 0) {
      run_dirs.push_back(entry.path());
    }
  }
  std::sort(run_dirs.begin(), run_dirs.end());
  for (const fs::path& rd : run_dirs) {
    const fs::path summary_path = rd / "run.json";
    if (!fs::exists(summary_path)) {
      missing.push_back(rd.filename().string());
      continue;
    }
    runs.push_back(run_summary_from_json(Json::parse(read_text_file(summary_path.string()))));
  }

  if (runs.empty() && !fs::exists(dir / "sweep.csv") && !fs::exists(dir / "observe.csv")) {
    md << "no runs\n";
    write_text_file((dir / "report.md").string(), md.str());
    return;
  }

  if (!missing.empty()) {
    md << "## Missing runs\n\n";
    for (const std::string& name : missing) md << "- " << name << " (no run.json)\n";
    md << "\n";
  }

  if (!runs.empty()) {
    md << "## Runs\n\n";
    md << "| run | seed | status | constrained mR@100 | unconstrained mR@100 | config hash |\n";
    md << "|---|---|---|---|---|---|\n";
    for (const RunSummary& run : runs) {
      md << "| " << run.name << " | " << run.seed << " | " << (run.ok ? "ok" : run.error)
         << " | "
         << (run.constrained ? format_double(run.constrained->mean_recall.at(100)) : "-")
         << " | "
         << (run.unconstrained ? format_double(run.unconstrained->mean_recall.at(100)) : "-")
         << " | " << run.config_hash << " |\n";
    }
    md << "\n";

    // Per-class recall@100 for each run family, classes ordered by frequency.
    std::map<std::string, std::vector<const RunSummary*>> by_name;
    for (const RunSummary& run : runs) {
      if (run.ok && run.constrained) by_name[run.name].push_back(&run);
    }
    if (!by_name.empty()) {
      const Vector& freq = by_name.begin()->second.front()->class_frequencies;
      std::vector<std::size_t> class_order(freq.size());
      for (std::size_t c = 0; c < freq.size(); ++c) class_order[c] = c;
      std::sort(class_order.begin(), class_order.end(),
                [&](std::size_t a, std::size_t b) { return freq[a] > freq[b]; });

      std::vector<std::string> series_names;
      std::vector<SvgBarGroup> groups;
      for (std::size_t c : class_order) {
        groups.push_back({"c" + std::to_string(c), {}});
      }
      for (const auto& [name, family] : by_name) {
        series_names.push_back(name);
        for (std::size_t gi = 0; gi < class_order.size(); ++gi) {
          const int cls = static_cast<int>(class_order[gi]);
          double sum = 0.0;
          std::size_t count = 0;
          for (const RunSummary* run : family) {
            if (run->constrained->per_class.count(cls)) {
              sum += run->constrained->per_class.at(cls).at(100);
              ++count;
            }
          }
          groups[gi].values.push_back(count ? sum / count : 0.0);
        }
      }
      write_text_file((dir / "per_class_recall.svg").string(),
                      svg_bar_chart("per-class recall@100 (classes by frequency)", series_names,
                                    groups));
      md << "![per-class recall](per_class_recall.svg)\n\n";
    }
  }

  if (fs::exists(dir / "sweep.csv")) {
    md << "## Re-weighting sweep\n\nSee sweep.csv and sweep.svg.\n\n";
  }
  if (fs::exists(dir / "observe.csv")) {
    md << "## Observation groups\n\n";
    md << read_text_file((dir / "observe.csv").string()) << "\n";

    // Fig-2 style bar chart of the deltas.
    std::vector<std::string> lines;
    std::istringstream in(read_text_file((dir / "observe.csv").string()));
    std::string line;
    std::vector<SvgBarGroup> groups;
    std::vector<std::string> names{"constrained", "unconstrained"};
    std::map<std::string, SvgBarGroup> grouped;
    std::vector<std::string> order;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#' || line.rfind("group,", 0) == 0) continue;
      std::istringstream row(line);
      std::string group, cls, protocol, value;
      std::getline(row, group, ',');
      std::getline(row, cls, ',');
      std::getline(row, protocol, ',');
      std::getline(row, value, ',');
      const std::string key = group + "/" + cls;
      if (!grouped.count(key)) {
        grouped[key] = {key, {}};
        order.push_back(key);
      }
      grouped[key].values.push_back(std::stod(value));
    }
    for (const std::string& key : order) groups.push_back(grouped[key]);
    write_text_file((dir / "observe_deltas.svg").string(),
                    svg_bar_chart("recall@100 delta: re-weighting minus CE (points)", names,
                                  groups));
    md << "![observation deltas](observe_deltas.svg)\n\n";
  }
  if (fs::exists(dir / "ablate.csv")) {
    md << "## Ablation\n\n";
    md << read_text_file((dir / "ablate.csv").string()) << "\n";
  }
  write_text_file((dir / "report.md").string(), md.str());
}

}  // namespace corrbalance
