#pragma once

#include <string>

#include <json.hpp>

#include "corrbalance/class_graph.hpp"
#include "corrbalance/encoder.hpp"
#include "corrbalance/metrics.hpp"
#include "corrbalance/model.hpp"
#include "corrbalance/synthdata.hpp"

namespace corrbalance {

using Json = nlohmann::json;

Json to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);

Json to_json(const ClassSpec& spec);
ClassSpec class_spec_from_json(const Json& j);

Json to_json(const GeneratorConfig& config);
GeneratorConfig generator_config_from_json(const Json& j);

Json to_json(const Scene& scene);
Scene scene_from_json(const Json& j);

/// JSON Lines: a header object carrying the generator config and seed,
/// followed by one scene per line.
void write_dataset_jsonl(const Dataset& dataset, const std::string& path);
Dataset read_dataset_jsonl(const std::string& path);

Json to_json(const ClassGraph& graph);
ClassGraph class_graph_from_json(const Json& j);

Json to_json(const EncoderConfig& config);
EncoderConfig encoder_config_from_json(const Json& j);

Json to_json(const EncoderStack& stack);
EncoderStack encoder_stack_from_json(const Json& j);

Json to_json(const LossConfig& config);
LossConfig loss_config_from_json(const Json& j);

Json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const Json& j);

Json to_json(const RelHead& head);
RelHead rel_head_from_json(const Json& j);

Json to_json(const EvalReport& report);

/// Full checkpoint: config, parameters, class graph and the training log.
Json checkpoint_to_json(const TrainedModel& model);
TrainedModel checkpoint_from_json(const Json& j);

/// FNV-1a over the canonical dump; ties every emitted number to its config.
std::string config_hash(const Json& j);

/// Shortest round-trip double formatting shared by CSV and SVG emitters.
std::string format_double(double v);

void write_text_file(const std::string& path, const std::string& contents);
std::string read_text_file(const std::string& path);

}  // namespace corrbalance
