#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "corrbalance/class_graph.hpp"
#include "corrbalance/encoder.hpp"
#include "corrbalance/losses.hpp"
#include "corrbalance/synthdata.hpp"

namespace corrbalance {

struct RelHeadConfig {
  std::size_t context_dim = 32;  // per-node contextual feature width
  std::size_t hidden_dim = 32;
  std::size_t feature_dim = 16;  // relationship feature width == graph dim
  std::size_t num_classes = 0;
};

/// Pair head: two affine layers with ReLU from concat(subject, object,
/// union-box code) to the relationship feature, then the final classifier.
struct RelHead {
  RelHeadConfig config;
  Matrix w1;  // (2*context_dim + 4) x hidden
  Vector b1;
  Matrix w2;  // hidden x feature_dim
  Vector b2;
  Matrix wc;  // feature_dim x num_classes
  Vector bc;
};

RelHead make_rel_head(const RelHeadConfig& config, std::uint64_t seed);
RelHead zeros_like(const RelHead& head);
std::vector<Vector*> param_arrays(RelHead& head);
std::vector<const Vector*> param_arrays(const RelHead& head);
Vector flatten_params(const RelHead& head);
void unflatten_params(RelHead& head, std::span<const double> flat);
void axpy_params(RelHead& dst, double alpha, const RelHead& src);

struct PairIndex {
  std::size_t subject = 0;
  std::size_t object = 0;
};

/// Concatenated pair inputs: subject row, object row, union-box code.
Matrix pair_inputs(const Matrix& context, const std::vector<PairIndex>& pairs,
                   const Matrix& boxes);

struct HeadCache {
  Matrix inputs;
  Matrix pre_act;
  Matrix hidden;
  Matrix features;  // relationship features f, P x feature_dim
};

/// Relationship features for the given ordered pairs.
Matrix build_pair_features(const Matrix& context, const std::vector<PairIndex>& pairs,
                           const Matrix& boxes, const RelHead& head, HeadCache* cache = nullptr);

Matrix head_logits(const Matrix& features, const RelHead& head);

struct HeadGradients {
  RelHead params;
  Matrix dcontext;  // N x context_dim, accumulated over pairs
};

HeadGradients head_backward(const Matrix& context, const std::vector<PairIndex>& pairs,
                            const RelHead& head, const HeadCache& cache, const Matrix& dlogits);

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double lr = 0.1;
  double lr_c = 0.5;
  LossConfig loss;
  long warmup_batches = -1;  // negative: one epoch
  double drop_lambda = 2.0;
  bool drop_enabled = false;
  std::uint64_t seed = 1;
  NormalizationMode normalization = NormalizationMode::MinMax;
  CenterMode center_mode = CenterMode::Learnt;
  std::optional<EncoderConfig> encoder;  // absent: plain-MLP ablation
  std::size_t feature_dim = 16;
  std::size_t pair_hidden_dim = 32;
  double validation_fraction = 0.2;
  double graph_epsilon = 1e-6;
};

void validate_train_config(const TrainConfig& config);

struct Model {
  std::optional<EncoderStack> encoder;
  RelHead head;
};

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double mr50 = 0.0;   // constrained, validation split
  double mr100 = 0.0;
  double tau_min = 0.0;
  double tau_max = 0.0;
  std::size_t dropped = 0;
  Vector tau;  // tau snapshot at epoch end
  std::map<int, double> val_recall100;  // constrained per-class recall@100
};

struct TrainedModel {
  TrainConfig config;
  Model model;
  ClassGraph graph;
  std::vector<EpochLog> log;
  Vector class_frequencies;            // train-split pair counts per class
  std::vector<std::size_t> train_scenes;  // indices into the dataset
  std::vector<std::size_t> val_scenes;
};

/// One (scene, pair) work item; batches group items by scene so each scene
/// runs the encoder once.
struct BatchItem {
  std::size_t scene_index = 0;
  std::size_t pair_index = 0;
};

struct StepMetrics {
  double loss = 0.0;
  std::size_t dropped = 0;
  std::size_t batch_pairs = 0;
  Vector tau_used;
  Matrix features;          // detached relationship features of the batch
  std::vector<int> labels;
};

struct BatchGradients {
  std::optional<EncoderStack> encoder;
  RelHead head;
  BatchLossResult loss;
  Matrix features;
  std::vector<int> labels;
};

/// Forward + analytic backward for the classification loss only, with tau and
/// the drop mask frozen. The class graph does not participate.
BatchGradients classification_gradients(const Model& model, const std::vector<Scene>& scenes,
                                        const std::vector<BatchItem>& items,
                                        const LossConfig& loss_config, const Vector& tau,
                                        const std::vector<bool>& dropped);

/// One optimization step: forward, optional noise drop, weighted loss,
/// SGD on encoder+head, then center update and edge refresh (Learnt mode).
StepMetrics train_step(Model& model, const std::vector<Scene>& scenes,
                       const std::vector<BatchItem>& items, const TrainConfig& config,
                       ClassGraph& graph, bool warmed_up, std::uint64_t edges_token);

TrainedModel fit(const Dataset& dataset, const TrainConfig& config);

/// Per-pair predicate probabilities for one scene.
Matrix predict(const Model& model, const Scene& scene);

/// Relationship features f for all pairs of one scene (the vectors the class
/// graph and drop filter operate on).
Matrix scene_pair_features(const Model& model, const Scene& scene);

}  // namespace corrbalance
