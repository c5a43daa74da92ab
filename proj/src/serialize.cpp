#include "corrbalance/serialize.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace corrbalance {

namespace {

Vector vector_from_json(const Json& j) { return j.get<Vector>(); }

Json optional_int(int v) {
  if (v < 0) return nullptr;
  return v;
}

}  // namespace

Json to_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

Matrix matrix_from_json(const Json& j) {
  return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                j.at("data").get<Vector>());
}

Json to_json(const ClassSpec& spec) {
  return {{"class_id", spec.class_id},
          {"prototype", spec.prototype},
          {"sigma", spec.sigma},
          {"share", spec.share}};
}

ClassSpec class_spec_from_json(const Json& j) {
  ClassSpec spec;
  spec.class_id = j.at("class_id").get<int>();
  spec.prototype = vector_from_json(j.at("prototype"));
  spec.sigma = j.at("sigma").get<double>();
  spec.share = j.at("share").get<double>();
  return spec;
}

Json to_json(const GeneratorConfig& config) {
  Json classes = Json::array();
  for (const ClassSpec& spec : config.classes) classes.push_back(to_json(spec));
  return {{"num_scenes", config.num_scenes}, {"min_nodes", config.min_nodes},
          {"max_nodes", config.max_nodes},   {"min_pairs", config.min_pairs},
          {"max_pairs", config.max_pairs},   {"raw_dim", config.raw_dim},
          {"classes", classes},              {"seed", config.seed}};
}

GeneratorConfig generator_config_from_json(const Json& j) {
  GeneratorConfig config;
  config.num_scenes = j.at("num_scenes").get<std::size_t>();
  config.min_nodes = j.at("min_nodes").get<std::size_t>();
  config.max_nodes = j.at("max_nodes").get<std::size_t>();
  config.min_pairs = j.at("min_pairs").get<std::size_t>();
  config.max_pairs = j.at("max_pairs").get<std::size_t>();
  config.raw_dim = j.at("raw_dim").get<std::size_t>();
  for (const Json& spec : j.at("classes")) config.classes.push_back(class_spec_from_json(spec));
  config.seed = j.at("seed").get<std::uint64_t>();
  return config;
}

Json to_json(const Scene& scene) {
  Json nodes = Json::array();
  for (const SceneNode& node : scene.nodes) {
    nodes.push_back({{"feature", node.feature}, {"box", node.box}, {"label", node.label}});
  }
  Json pairs = Json::array();
  for (const PairAnnotation& pair : scene.pairs) {
    pairs.push_back({{"subject", pair.subject},
                     {"object", pair.object},
                     {"predicate", pair.predicate},
                     {"noise_original", optional_int(pair.noise_original)}});
  }
  return {{"id", scene.id}, {"nodes", nodes}, {"pairs", pairs}};
}

Scene scene_from_json(const Json& j) {
  Scene scene;
  scene.id = j.at("id").get<std::size_t>();
  for (const Json& n : j.at("nodes")) {
    SceneNode node;
    node.feature = vector_from_json(n.at("feature"));
    node.box = vector_from_json(n.at("box"));
    node.label = n.at("label").get<int>();
    scene.nodes.push_back(std::move(node));
  }
  for (const Json& p : j.at("pairs")) {
    PairAnnotation pair;
    pair.subject = p.at("subject").get<std::size_t>();
    pair.object = p.at("object").get<std::size_t>();
    pair.predicate = p.at("predicate").get<int>();
    pair.noise_original = p.at("noise_original").is_null() ? -1 : p.at("noise_original").get<int>();
    scene.pairs.push_back(pair);
  }
  return scene;
}

void write_dataset_jsonl(const Dataset& dataset, const std::string& path) {
  std::ostringstream out;
  Json header = {{"type", "header"}, {"config", to_json(dataset.config)},
                 {"seed", dataset.config.seed}};
  out << header.dump() << "\n";
  for (const Scene& scene : dataset.scenes) out << to_json(scene).dump() << "\n";
  write_text_file(path, out.str());
}

Dataset read_dataset_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset file: " + path);
  Dataset dataset;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Json j = Json::parse(line);
    if (!have_header) {
      if (j.value("type", "") != "header") {
        throw InputError("dataset file missing header line: " + path);
      }
      dataset.config = generator_config_from_json(j.at("config"));
      have_header = true;
      continue;
    }
    dataset.scenes.push_back(scene_from_json(j));
  }
  if (!have_header) throw InputError("dataset file is empty: " + path);
  return dataset;
}

Json to_json(const ClassGraph& graph) {
  return {{"num_classes", graph.num_classes()},
          {"dim", graph.dim()},
          {"normalization", to_string(graph.normalization())},
          {"epsilon", graph.epsilon()},
          {"update_count", graph.update_count()},
          {"centers", to_json(graph.centers())},
          {"edges", to_json(graph.edges())},
          {"global_correlation", graph.global_correlation()},
          {"tau", graph.tau()}};
}

ClassGraph class_graph_from_json(const Json& j) {
  return ClassGraph::restore(
      normalization_mode_from_string(j.at("normalization").get<std::string>()),
      j.at("epsilon").get<double>(), matrix_from_json(j.at("centers")),
      j.at("update_count").get<std::uint64_t>());
}

Json to_json(const EncoderConfig& config) {
  return {{"num_layers", config.num_layers},
          {"num_heads", config.num_heads},
          {"model_dim", config.model_dim},
          {"ff_hidden_dim", config.ff_hidden_dim},
          {"use_layer_norm", config.use_layer_norm}};
}

EncoderConfig encoder_config_from_json(const Json& j) {
  EncoderConfig config;
  config.num_layers = j.at("num_layers").get<std::size_t>();
  config.num_heads = j.at("num_heads").get<std::size_t>();
  config.model_dim = j.at("model_dim").get<std::size_t>();
  config.ff_hidden_dim = j.at("ff_hidden_dim").get<std::size_t>();
  config.use_layer_norm = j.at("use_layer_norm").get<bool>();
  return config;
}

Json to_json(const EncoderStack& stack) {
  return {{"config", to_json(stack.config)},
          {"raw_dim", stack.raw_dim},
          {"params", flatten_params(stack)}};
}

EncoderStack encoder_stack_from_json(const Json& j) {
  EncoderStack stack = make_encoder_stack(encoder_config_from_json(j.at("config")),
                                          j.at("raw_dim").get<std::size_t>(), 0);
  const Vector flat = vector_from_json(j.at("params"));
  unflatten_params(stack, flat);
  return stack;
}

Json to_json(const LossConfig& config) {
  Json j = {{"variant", to_string(config.variant)}};
  switch (config.variant) {
    case LossVariant::ReweightPow: j["n"] = config.reweight_n; break;
    case LossVariant::ClassBalanced: j["beta"] = config.beta; break;
    case LossVariant::Focal: j["gamma"] = config.gamma; break;
    case LossVariant::PCPL: j["per_sample_denominator"] = config.pcpl_per_sample_denominator; break;
    case LossVariant::PlainCE: break;
  }
  if (!config.class_frequencies.empty()) j["class_frequencies"] = config.class_frequencies;
  return j;
}

LossConfig loss_config_from_json(const Json& j) {
  LossConfig config;
  config.variant = loss_variant_from_string(j.at("variant").get<std::string>());
  config.reweight_n = j.value("n", config.reweight_n);
  config.beta = j.value("beta", config.beta);
  config.gamma = j.value("gamma", config.gamma);
  config.pcpl_per_sample_denominator =
      j.value("per_sample_denominator", config.pcpl_per_sample_denominator);
  if (j.contains("class_frequencies")) {
    config.class_frequencies = vector_from_json(j.at("class_frequencies"));
  }
  return config;
}

Json to_json(const TrainConfig& config) {
  Json j = {{"epochs", config.epochs},
            {"batch_size", config.batch_size},
            {"lr", config.lr},
            {"lr_c", config.lr_c},
            {"loss", to_json(config.loss)},
            {"warmup_batches", config.warmup_batches},
            {"drop_lambda", config.drop_lambda},
            {"drop_enabled", config.drop_enabled},
            {"seed", config.seed},
            {"normalization", to_string(config.normalization)},
            {"center_mode", to_string(config.center_mode)},
            {"feature_dim", config.feature_dim},
            {"pair_hidden_dim", config.pair_hidden_dim},
            {"validation_fraction", config.validation_fraction},
            {"graph_epsilon", config.graph_epsilon}};
  j["encoder"] = config.encoder ? to_json(*config.encoder) : Json(nullptr);
  return j;
}

TrainConfig train_config_from_json(const Json& j) {
  TrainConfig config;
  config.epochs = j.at("epochs").get<std::size_t>();
  config.batch_size = j.at("batch_size").get<std::size_t>();
  config.lr = j.at("lr").get<double>();
  config.lr_c = j.at("lr_c").get<double>();
  config.loss = loss_config_from_json(j.at("loss"));
  config.warmup_batches = j.value("warmup_batches", config.warmup_batches);
  config.drop_lambda = j.value("drop_lambda", config.drop_lambda);
  config.drop_enabled = j.value("drop_enabled", config.drop_enabled);
  config.seed = j.at("seed").get<std::uint64_t>();
  config.normalization =
      normalization_mode_from_string(j.value("normalization", std::string("minmax")));
  config.center_mode = center_mode_from_string(j.value("center_mode", std::string("learnt")));
  if (j.contains("encoder") && !j.at("encoder").is_null()) {
    config.encoder = encoder_config_from_json(j.at("encoder"));
  }
  config.feature_dim = j.value("feature_dim", config.feature_dim);
  config.pair_hidden_dim = j.value("pair_hidden_dim", config.pair_hidden_dim);
  config.validation_fraction = j.value("validation_fraction", config.validation_fraction);
  config.graph_epsilon = j.value("graph_epsilon", config.graph_epsilon);
  return config;
}

Json to_json(const RelHead& head) {
  return {{"context_dim", head.config.context_dim},
          {"hidden_dim", head.config.hidden_dim},
          {"feature_dim", head.config.feature_dim},
          {"num_classes", head.config.num_classes},
          {"params", flatten_params(head)}};
}

RelHead rel_head_from_json(const Json& j) {
  RelHeadConfig config;
  config.context_dim = j.at("context_dim").get<std::size_t>();
  config.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  config.feature_dim = j.at("feature_dim").get<std::size_t>();
  config.num_classes = j.at("num_classes").get<std::size_t>();
  RelHead head = make_rel_head(config, 0);
  const Vector flat = vector_from_json(j.at("params"));
  unflatten_params(head, flat);
  return head;
}

Json to_json(const EvalReport& report) {
  Json per_class = Json::object();
  for (const auto& [cls, by_k] : report.per_class) {
    Json entry = Json::object();
    for (const auto& [k, value] : by_k) entry[std::to_string(k)] = value;
    entry["gt_count"] = report.gt_counts.at(cls);
    per_class[std::to_string(cls)] = entry;
  }
  Json recall = Json::object();
  Json mean_recall = Json::object();
  for (const auto& [k, value] : report.recall) recall[std::to_string(k)] = value;
  for (const auto& [k, value] : report.mean_recall) mean_recall[std::to_string(k)] = value;
  return {{"protocol", to_string(report.protocol)},
          {"ks", report.ks},
          {"recall", recall},
          {"mean_recall", mean_recall},
          {"per_class", per_class},
          {"saturated", report.saturated},
          {"config_hash", report.config_hash},
          {"seed", report.seed}};
}

Json checkpoint_to_json(const TrainedModel& model) {
  Json log = Json::array();
  for (const EpochLog& entry : model.log) {
    Json per_class = Json::object();
    for (const auto& [cls, value] : entry.val_recall100) per_class[std::to_string(cls)] = value;
    log.push_back({{"epoch", entry.epoch},
                   {"loss", entry.mean_loss},
                   {"mr50", entry.mr50},
                   {"mr100", entry.mr100},
                   {"tau_min", entry.tau_min},
                   {"tau_max", entry.tau_max},
                   {"dropped", entry.dropped},
                   {"tau", entry.tau},
                   {"val_recall100", per_class}});
  }
  Json j = {{"config", to_json(model.config)},
            {"head", to_json(model.model.head)},
            {"graph", to_json(model.graph)},
            {"log", log},
            {"class_frequencies", model.class_frequencies},
            {"train_scenes", model.train_scenes},
            {"val_scenes", model.val_scenes}};
  j["encoder"] = model.model.encoder ? to_json(*model.model.encoder) : Json(nullptr);
  return j;
}

TrainedModel checkpoint_from_json(const Json& j) {
  TrainedModel model{train_config_from_json(j.at("config")),
                     Model{},
                     class_graph_from_json(j.at("graph")),
                     {},
                     vector_from_json(j.at("class_frequencies")),
                     j.at("train_scenes").get<std::vector<std::size_t>>(),
                     j.at("val_scenes").get<std::vector<std::size_t>>()};
  model.model.head = rel_head_from_json(j.at("head"));
  if (!j.at("encoder").is_null()) {
    model.model.encoder = encoder_stack_from_json(j.at("encoder"));
  }
  for (const Json& entry : j.at("log")) {
    EpochLog log_entry;
    log_entry.epoch = entry.at("epoch").get<std::size_t>();
    log_entry.mean_loss = entry.at("loss").get<double>();
    log_entry.mr50 = entry.at("mr50").get<double>();
    log_entry.mr100 = entry.at("mr100").get<double>();
    log_entry.tau_min = entry.at("tau_min").get<double>();
    log_entry.tau_max = entry.at("tau_max").get<double>();
    log_entry.dropped = entry.at("dropped").get<std::size_t>();
    log_entry.tau = vector_from_json(entry.at("tau"));
    for (const auto& [key, value] : entry.at("val_recall100").items()) {
      log_entry.val_recall100[std::stoi(key)] = value.get<double>();
    }
    model.log.push_back(std::move(log_entry));
  }
  return model;
}

std::string config_hash(const Json& j) {
  const std::string dump = j.dump();
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : dump) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

std::string format_double(double v) {
  char buf[64];
  // %.17g round-trips; trim to the shortest representation that still does.
  for (int precision = 1; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    double parsed = 0.0;
    std::sscanf(buf, "%lf", &parsed);
    if (parsed == v) break;
  }
  return buf;
}

void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open for writing: " + path);
  out << contents;
  if (!out) throw InputError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace corrbalance
