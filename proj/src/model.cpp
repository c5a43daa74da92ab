#include "corrbalance/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "corrbalance/metrics.hpp"
#include "corrbalance/rng.hpp"

namespace corrbalance {

namespace {

Matrix init_weight(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(rows)));
  Matrix m(rows, cols);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

Vector union_box(std::span<const double> a, std::span<const double> b) {
  return {std::min(a[0], b[0]), std::min(a[1], b[1]), std::max(a[2], b[2]),
          std::max(a[3], b[3])};
}

Matrix node_features(const Scene& scene) {
  const std::size_t raw = scene.nodes.empty() ? 0 : scene.nodes.front().feature.size();
  Matrix features(scene.nodes.size(), raw);
  for (std::size_t i = 0; i < scene.nodes.size(); ++i) {
    std::copy(scene.nodes[i].feature.begin(), scene.nodes[i].feature.end(),
              features.row(i).begin());
  }
  return features;
}

Matrix node_boxes(const Scene& scene) {
  Matrix boxes(scene.nodes.size(), 4);
  for (std::size_t i = 0; i < scene.nodes.size(); ++i) {
    std::copy(scene.nodes[i].box.begin(), scene.nodes[i].box.end(), boxes.row(i).begin());
  }
  return boxes;
}

NodeSet scene_nodes(const Scene& scene) {
  return {node_features(scene), node_boxes(scene)};
}

/// Per-scene slice of a batch, pairs listed in canonical order.
struct SceneGroup {
  std::size_t scene_index = 0;
  std::vector<std::size_t> pair_indices;
  std::vector<std::size_t> rows;  // rows of the batch matrices owned by this group
};

std::vector<SceneGroup> group_items(const std::vector<BatchItem>& items) {
  std::vector<BatchItem> sorted = items;
  std::sort(sorted.begin(), sorted.end(), [](const BatchItem& a, const BatchItem& b) {
    if (a.scene_index != b.scene_index) return a.scene_index < b.scene_index;
    return a.pair_index < b.pair_index;
  });
  std::vector<SceneGroup> groups;
  for (std::size_t row = 0; row < sorted.size(); ++row) {
    if (groups.empty() || groups.back().scene_index != sorted[row].scene_index) {
      groups.push_back({sorted[row].scene_index, {}, {}});
    }
    groups.back().pair_indices.push_back(sorted[row].pair_index);
    groups.back().rows.push_back(row);
  }
  return groups;
}

struct ForwardState {
  std::vector<SceneGroup> groups;
  // Per group intermediates, aligned with groups.
  std::vector<NodeSet> nodes;
  std::vector<StackCache> encoder_caches;
  std::vector<Matrix> contexts;
  std::vector<std::vector<PairIndex>> pairs;
  std::vector<HeadCache> head_caches;
  Matrix features;  // batch rows x feature_dim
  Matrix logits;    // batch rows x C
  std::vector<int> labels;
};

ForwardState forward_batch(const Model& model, const std::vector<Scene>& scenes,
                           const std::vector<BatchItem>& items) {
  if (items.empty()) throw InputError("batch must be nonempty");
  ForwardState state;
  state.groups = group_items(items);
  state.labels.resize(items.size());
  const std::size_t feature_dim = model.head.config.feature_dim;
  const std::size_t num_classes = model.head.config.num_classes;
  state.features = Matrix(items.size(), feature_dim);
  state.logits = Matrix(items.size(), num_classes);

  for (const SceneGroup& group : state.groups) {
    if (group.scene_index >= scenes.size()) throw InputError("batch references unknown scene");
    const Scene& scene = scenes[group.scene_index];
    NodeSet nodes = scene_nodes(scene);

    Matrix context;
    StackCache cache;
    if (model.encoder) {
      context = stack_forward(nodes, *model.encoder, &cache);
    } else {
      context = nodes.features;
    }

    std::vector<PairIndex> pairs;
    for (std::size_t pi : group.pair_indices) {
      if (pi >= scene.pairs.size()) throw InputError("batch references unknown pair");
      pairs.push_back({scene.pairs[pi].subject, scene.pairs[pi].object});
    }

    HeadCache head_cache;
    Matrix f = build_pair_features(context, pairs, nodes.boxes, model.head, &head_cache);
    Matrix logits = head_logits(f, model.head);

    for (std::size_t local = 0; local < group.rows.size(); ++local) {
      const std::size_t row = group.rows[local];
      state.labels[row] = scene.pairs[group.pair_indices[local]].predicate;
      std::copy(f.row(local).begin(), f.row(local).end(), state.features.row(row).begin());
      std::copy(logits.row(local).begin(), logits.row(local).end(),
                state.logits.row(row).begin());
    }

    state.nodes.push_back(std::move(nodes));
    state.encoder_caches.push_back(std::move(cache));
    state.contexts.push_back(std::move(context));
    state.pairs.push_back(std::move(pairs));
    state.head_caches.push_back(std::move(head_cache));
  }
  return state;
}

}  // namespace

RelHead make_rel_head(const RelHeadConfig& config, std::uint64_t seed) {
  if (config.num_classes == 0) throw ConfigError("rel head needs at least one class");
  if (config.context_dim == 0 || config.hidden_dim == 0 || config.feature_dim == 0) {
    throw ConfigError("rel head dims must be positive");
  }
  std::mt19937_64 rng(seed);
  RelHead head;
  head.config = config;
  const std::size_t in = 2 * config.context_dim + 4;
  head.w1 = init_weight(in, config.hidden_dim, rng);
  head.b1.assign(config.hidden_dim, 0.0);
  head.w2 = init_weight(config.hidden_dim, config.feature_dim, rng);
  head.b2.assign(config.feature_dim, 0.0);
  head.wc = init_weight(config.feature_dim, config.num_classes, rng);
  head.bc.assign(config.num_classes, 0.0);
  return head;
}

RelHead zeros_like(const RelHead& head) {
  RelHead z = head;
  for (Vector* arr : param_arrays(z)) std::fill(arr->begin(), arr->end(), 0.0);
  return z;
}

std::vector<Vector*> param_arrays(RelHead& head) {
  return {&head.w1.data(), &head.b1, &head.w2.data(), &head.b2, &head.wc.data(), &head.bc};
}

std::vector<const Vector*> param_arrays(const RelHead& head) {
  auto mut = param_arrays(const_cast<RelHead&>(head));
  return {mut.begin(), mut.end()};
}

Vector flatten_params(const RelHead& head) {
  Vector flat;
  for (const Vector* arr : param_arrays(head)) flat.insert(flat.end(), arr->begin(), arr->end());
  return flat;
}

void unflatten_params(RelHead& head, std::span<const double> flat) {
  std::size_t pos = 0;
  for (Vector* arr : param_arrays(head)) {
    if (pos + arr->size() > flat.size()) throw DimensionError("unflatten_params: too few values");
    std::copy(flat.begin() + pos, flat.begin() + pos + arr->size(), arr->begin());
    pos += arr->size();
  }
  if (pos != flat.size()) throw DimensionError("unflatten_params: too many values");
}

void axpy_params(RelHead& dst, double alpha, const RelHead& src) {
  auto d = param_arrays(dst);
  auto s = param_arrays(src);
  for (std::size_t a = 0; a < d.size(); ++a) {
    for (std::size_t i = 0; i < d[a]->size(); ++i) (*d[a])[i] += alpha * (*s[a])[i];
  }
}

Matrix pair_inputs(const Matrix& context, const std::vector<PairIndex>& pairs,
                   const Matrix& boxes) {
  if (context.rows() != boxes.rows()) {
    throw DimensionError("pair_inputs: context/box node counts differ");
  }
  const std::size_t d = context.cols();
  Matrix inputs(pairs.size(), 2 * d + 4);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [subject, object] = pairs[p];
    if (subject >= context.rows() || object >= context.rows()) {
      throw InputError("pair_inputs: node index out of range");
    }
    if (subject == object) throw InputError("pair_inputs: subject equals object");
    auto row = inputs.row(p);
    std::copy(context.row(subject).begin(), context.row(subject).end(), row.begin());
    std::copy(context.row(object).begin(), context.row(object).end(), row.begin() + d);
    const Vector u = union_box(boxes.row(subject), boxes.row(object));
    std::copy(u.begin(), u.end(), row.begin() + 2 * d);
  }
  return inputs;
}

Matrix build_pair_features(const Matrix& context, const std::vector<PairIndex>& pairs,
                           const Matrix& boxes, const RelHead& head, HeadCache* cache) {
  Matrix inputs = pair_inputs(context, pairs, boxes);
  if (inputs.cols() != head.w1.rows()) {
    throw DimensionError("build_pair_features: input width " + std::to_string(inputs.cols()) +
                         " does not match head (" + std::to_string(head.w1.rows()) + ")");
  }
  Matrix pre = affine_forward(inputs, head.w1, head.b1);
  Matrix hidden = pre;
  for (double& v : hidden.data()) v = v > 0.0 ? v : 0.0;
  Matrix features = affine_forward(hidden, head.w2, head.b2);
  if (cache) {
    cache->inputs = std::move(inputs);
    cache->pre_act = std::move(pre);
    cache->hidden = std::move(hidden);
    cache->features = features;
  }
  return features;
}

Matrix head_logits(const Matrix& features, const RelHead& head) {
  return affine_forward(features, head.wc, head.bc);
}

HeadGradients head_backward(const Matrix& context, const std::vector<PairIndex>& pairs,
                            const RelHead& head, const HeadCache& cache, const Matrix& dlogits) {
  if (cache.inputs.rows() != pairs.size()) {
    throw UsageError("head_backward: cache does not match the pair list");
  }
  HeadGradients out;
  out.params = zeros_like(head);
  out.dcontext = Matrix(context.rows(), context.cols());

  AffineGrads gc = affine_backward(cache.features, head.wc, dlogits);
  out.params.wc = gc.dw;
  out.params.bc = gc.db;
  AffineGrads g2 = affine_backward(cache.hidden, head.w2, gc.dx);
  out.params.w2 = g2.dw;
  out.params.b2 = g2.db;
  Matrix dpre = g2.dx;
  for (std::size_t i = 0; i < dpre.size(); ++i) {
    if (cache.pre_act.data()[i] <= 0.0) dpre.data()[i] = 0.0;
  }
  AffineGrads g1 = affine_backward(cache.inputs, head.w1, dpre);
  out.params.w1 = g1.dw;
  out.params.b1 = g1.db;

  const std::size_t d = context.cols();
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    for (std::size_t j = 0; j < d; ++j) {
      out.dcontext(pairs[p].subject, j) += g1.dx(p, j);
      out.dcontext(pairs[p].object, j) += g1.dx(p, d + j);
    }
    // Union-box coordinates are data, not parameters: no gradient.
  }
  return out;
}

void validate_train_config(const TrainConfig& config) {
  if (config.epochs == 0) throw ConfigError("train: epochs must be positive");
  if (config.batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (config.lr < 0.0) throw ConfigError("train: lr must be nonnegative");
  if (config.lr_c < 0.0) throw ConfigError("train: lr_c must be nonnegative");
  if (config.drop_lambda <= 0.0) throw ConfigError("train: drop_lambda must be positive");
  if (config.feature_dim == 0 || config.pair_hidden_dim == 0) {
    throw ConfigError("train: head dims must be positive");
  }
  if (config.validation_fraction < 0.0 || config.validation_fraction >= 1.0) {
    throw ConfigError("train: validation_fraction must lie in [0,1)");
  }
  if (config.graph_epsilon <= 0.0) throw ConfigError("train: graph_epsilon must be positive");
  if (config.encoder) {
    if (config.encoder->num_layers < 1) throw ConfigError("train: encoder needs layers");
    if (config.encoder->num_heads == 0 ||
        config.encoder->model_dim % config.encoder->num_heads != 0) {
      throw ConfigError("train: encoder model_dim must divide by num_heads");
    }
  }
}

BatchGradients classification_gradients(const Model& model, const std::vector<Scene>& scenes,
                                        const std::vector<BatchItem>& items,
                                        const LossConfig& loss_config, const Vector& tau,
                                        const std::vector<bool>& dropped) {
  ForwardState state = forward_batch(model, scenes, items);
  BatchGradients out;
  out.loss = compute_loss(state.logits, state.labels, loss_config, tau, dropped);
  out.features = state.features;
  out.labels = state.labels;
  out.head = zeros_like(model.head);
  if (model.encoder) out.encoder = zeros_like(*model.encoder);

  for (std::size_t g = 0; g < state.groups.size(); ++g) {
    const SceneGroup& group = state.groups[g];
    Matrix dlogits(group.rows.size(), state.logits.cols());
    for (std::size_t local = 0; local < group.rows.size(); ++local) {
      std::copy(out.loss.logit_gradient.row(group.rows[local]).begin(),
                out.loss.logit_gradient.row(group.rows[local]).end(), dlogits.row(local).begin());
    }
    HeadGradients hg = head_backward(state.contexts[g], state.pairs[g], model.head,
                                     state.head_caches[g], dlogits);
    axpy_params(out.head, 1.0, hg.params);
    if (model.encoder) {
      StackGradients sg =
          stack_backward(state.nodes[g], *model.encoder, state.encoder_caches[g], hg.dcontext);
      axpy_params(*out.encoder, 1.0, sg.params);
    }
  }
  return out;
}

StepMetrics train_step(Model& model, const std::vector<Scene>& scenes,
                       const std::vector<BatchItem>& items, const TrainConfig& config,
                       ClassGraph& graph, bool warmed_up, std::uint64_t edges_token) {
  // (1) forward to relationship features and logits
  ForwardState state = forward_batch(model, scenes, items);

  // (2) noise filter on detached features, only after warm-up
  std::vector<bool> dropped;
  if (config.drop_enabled && warmed_up) {
    dropped = drop_mask(state.features, state.labels, graph, config.drop_lambda, edges_token);
  }

  // (3) correlation factors are a constant of the step; uniform during warm-up
  Vector tau = warmed_up ? graph.tau() : Vector(graph.num_classes(), 1.0);
  BatchLossResult loss = compute_loss(state.logits, state.labels, config.loss, tau, dropped);
  if (!std::isfinite(loss.loss)) {
    throw NumericError("training aborted: non-finite loss");
  }

  // (4) SGD step on encoder+head parameters only
  if (config.lr > 0.0) {
    RelHead head_grads = zeros_like(model.head);
    std::optional<EncoderStack> encoder_grads;
    if (model.encoder) encoder_grads = zeros_like(*model.encoder);
    for (std::size_t g = 0; g < state.groups.size(); ++g) {
      const SceneGroup& group = state.groups[g];
      Matrix dlogits(group.rows.size(), state.logits.cols());
      for (std::size_t local = 0; local < group.rows.size(); ++local) {
        std::copy(loss.logit_gradient.row(group.rows[local]).begin(),
                  loss.logit_gradient.row(group.rows[local]).end(), dlogits.row(local).begin());
      }
      HeadGradients hg = head_backward(state.contexts[g], state.pairs[g], model.head,
                                       state.head_caches[g], dlogits);
      axpy_params(head_grads, 1.0, hg.params);
      if (model.encoder) {
        StackGradients sg =
            stack_backward(state.nodes[g], *model.encoder, state.encoder_caches[g], hg.dcontext);
        axpy_params(*encoder_grads, 1.0, sg.params);
      }
    }
    axpy_params(model.head, -config.lr, head_grads);
    if (model.encoder) axpy_params(*model.encoder, -config.lr, *encoder_grads);
  }

  // (5)+(6) center update on the detached features of the full batch, then
  // refresh; Average mode defers both to the epoch boundary.
  if (config.center_mode == CenterMode::Learnt && config.lr_c > 0.0) {
    graph.update_centers_learnt(state.features, state.labels, config.lr_c);
    graph.refresh_edges();
  }

  StepMetrics metrics;
  metrics.loss = loss.loss;
  for (bool d : loss.dropped_mask) metrics.dropped += d ? 1 : 0;
  metrics.batch_pairs = items.size();
  metrics.tau_used = tau;
  metrics.features = std::move(state.features);
  metrics.labels = std::move(state.labels);
  return metrics;
}

TrainedModel fit(const Dataset& dataset, const TrainConfig& config) {
  validate_train_config(config);
  if (dataset.scenes.empty()) throw InputError("fit: dataset is empty");
  const std::size_t num_classes = dataset.num_classes();
  const std::size_t raw_dim = dataset.config.raw_dim;

  // Validation split fixed by seed.
  std::vector<std::size_t> order(dataset.scenes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 split_rng(derive_seed(config.seed, 0x5eedULL));
  std::shuffle(order.begin(), order.end(), split_rng);
  const auto val_count = static_cast<std::size_t>(
      std::floor(config.validation_fraction * static_cast<double>(order.size())));
  TrainedModel trained{config,
                       Model{},
                       ClassGraph(num_classes, config.feature_dim, config.normalization,
                                  config.graph_epsilon, derive_seed(config.seed, 0x6772ULL)),
                       {},
                       Vector(num_classes, 0.0),
                       {},
                       {}};
  trained.val_scenes.assign(order.begin(), order.begin() + val_count);
  trained.train_scenes.assign(order.begin() + val_count, order.end());
  std::sort(trained.val_scenes.begin(), trained.val_scenes.end());
  std::sort(trained.train_scenes.begin(), trained.train_scenes.end());
  if (trained.train_scenes.empty()) throw InputError("fit: no training scenes after split");

  // Train-split class counts feed the frequency-based baselines.
  for (std::size_t s : trained.train_scenes) {
    for (const PairAnnotation& p : dataset.scenes[s].pairs) {
      trained.class_frequencies[static_cast<std::size_t>(p.predicate)] += 1.0;
    }
  }
  TrainConfig effective = config;
  if ((effective.loss.variant == LossVariant::ReweightPow ||
       effective.loss.variant == LossVariant::ClassBalanced) &&
      effective.loss.class_frequencies.empty()) {
    effective.loss.class_frequencies = trained.class_frequencies;
  }

  const std::size_t context_dim = config.encoder ? config.encoder->model_dim : raw_dim;
  trained.model.head = make_rel_head({context_dim, config.pair_hidden_dim, config.feature_dim,
                                      num_classes},
                                     derive_seed(config.seed, 0x48454144ULL));
  if (config.encoder) {
    trained.model.encoder =
        make_encoder_stack(*config.encoder, raw_dim, derive_seed(config.seed, 0x454E43ULL));
  }

  std::vector<BatchItem> all_items;
  for (std::size_t s : trained.train_scenes) {
    for (std::size_t p = 0; p < dataset.scenes[s].pairs.size(); ++p) {
      all_items.push_back({s, p});
    }
  }
  if (all_items.empty()) throw InputError("fit: training split has no pairs");
  const std::size_t batches_per_epoch =
      (all_items.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t warmup = config.warmup_batches < 0
                                 ? batches_per_epoch
                                 : static_cast<std::size_t>(config.warmup_batches);

  std::size_t step = 0;
  std::uint64_t edges_token = trained.graph.update_count();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::mt19937_64 epoch_rng(derive_seed(config.seed, 0xE0000ULL + epoch));
    std::shuffle(all_items.begin(), all_items.end(), epoch_rng);

    double loss_sum = 0.0;
    std::size_t dropped = 0;
    std::vector<Matrix> epoch_features;
    std::vector<int> epoch_labels;
    for (std::size_t start = 0; start < all_items.size(); start += config.batch_size) {
      const std::size_t stop = std::min(start + config.batch_size, all_items.size());
      std::vector<BatchItem> batch(all_items.begin() + start, all_items.begin() + stop);
      const bool warmed_up = step >= warmup;
      StepMetrics metrics =
          train_step(trained.model, dataset.scenes, batch, effective, trained.graph, warmed_up,
                     edges_token);
      edges_token = trained.graph.update_count();
      loss_sum += metrics.loss;
      dropped += metrics.dropped;
      if (config.center_mode == CenterMode::Average) {
        epoch_features.push_back(std::move(metrics.features));
        for (int l : metrics.labels) epoch_labels.push_back(l);
      }
      ++step;
    }

    if (config.center_mode == CenterMode::Average && !epoch_labels.empty()) {
      Matrix stacked(epoch_labels.size(), config.feature_dim);
      std::size_t row = 0;
      for (const Matrix& block : epoch_features) {
        for (std::size_t i = 0; i < block.rows(); ++i, ++row) {
          std::copy(block.row(i).begin(), block.row(i).end(), stacked.row(row).begin());
        }
      }
      trained.graph.update_centers_average(stacked, epoch_labels);
      trained.graph.refresh_edges();
      edges_token = trained.graph.update_count();
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.mean_loss = loss_sum / static_cast<double>(batches_per_epoch);
    entry.dropped = dropped;
    entry.tau = trained.graph.tau();
    entry.tau_min = *std::min_element(entry.tau.begin(), entry.tau.end());
    entry.tau_max = *std::max_element(entry.tau.begin(), entry.tau.end());

    // Constrained validation recall; falls back to the train split when the
    // validation fraction is zero.
    const std::vector<std::size_t>& eval_scenes =
        trained.val_scenes.empty() ? trained.train_scenes : trained.val_scenes;
    std::vector<Scene> val;
    std::vector<ScenePredictions> preds;
    for (std::size_t s : eval_scenes) {
      if (dataset.scenes[s].pairs.empty()) continue;
      val.push_back(dataset.scenes[s]);
      preds.push_back({dataset.scenes[s].id, predict(trained.model, dataset.scenes[s])});
    }
    if (!val.empty()) {
      RecallResult r50 = recall_at_k(val, preds, 50, Protocol::Constrained);
      RecallResult r100 = recall_at_k(val, preds, 100, Protocol::Constrained);
      entry.mr50 = mean_recall_at_k(r50.per_class);
      entry.mr100 = mean_recall_at_k(r100.per_class);
      for (const auto& [cls, tally] : r100.per_class) {
        entry.val_recall100[cls] =
            tally.total > 0 ? static_cast<double>(tally.matched) / tally.total : 0.0;
      }
    }
    trained.log.push_back(std::move(entry));
  }
  return trained;
}

Matrix predict(const Model& model, const Scene& scene) {
  if (scene.pairs.empty()) {
    return Matrix(0, model.head.config.num_classes);
  }
  return softmax_rows(head_logits(scene_pair_features(model, scene), model.head));
}

Matrix scene_pair_features(const Model& model, const Scene& scene) {
  if (scene.pairs.empty()) {
    return Matrix(0, model.head.config.feature_dim);
  }
  NodeSet nodes = scene_nodes(scene);
  Matrix context = model.encoder ? stack_forward(nodes, *model.encoder) : nodes.features;
  std::vector<PairIndex> pairs;
  for (const PairAnnotation& p : scene.pairs) pairs.push_back({p.subject, p.object});
  return build_pair_features(context, pairs, nodes.boxes, model.head);
}

}  // namespace corrbalance
