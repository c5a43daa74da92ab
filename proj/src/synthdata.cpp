#include "corrbalance/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "corrbalance/rng.hpp"

namespace corrbalance {

namespace {

Vector random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> corner(0.0, 0.72);
  std::uniform_real_distribution<double> extent(0.1, 0.25);
  const double x1 = corner(rng);
  const double y1 = corner(rng);
  return {x1, y1, x1 + extent(rng), y1 + extent(rng)};
}

/// Object box biased to overlap the subject box.
Vector nearby_box(const Vector& subject, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> jitter(-0.08, 0.08);
  std::uniform_real_distribution<double> extent(0.1, 0.25);
  const double x1 = std::clamp(subject[0] + jitter(rng), 0.0, 0.72);
  const double y1 = std::clamp(subject[1] + jitter(rng), 0.0, 0.72);
  return {x1, y1, x1 + extent(rng), y1 + extent(rng)};
}

Scene generate_scene(const GeneratorConfig& config, std::size_t scene_index) {
  std::mt19937_64 rng(derive_seed(config.seed, scene_index));
  std::uniform_int_distribution<std::size_t> node_dist(config.min_nodes, config.max_nodes);
  std::uniform_int_distribution<std::size_t> pair_dist(config.min_pairs, config.max_pairs);
  std::uniform_int_distribution<int> object_label(0, 9);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  const std::size_t n = node_dist(rng);
  const std::size_t p = pair_dist(rng);
  const std::size_t half = config.raw_dim / 2;

  Scene scene;
  scene.id = scene_index;
  scene.nodes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    scene.nodes[i].feature.assign(config.raw_dim, 0.0);
    scene.nodes[i].box = random_box(rng);
    scene.nodes[i].label = object_label(rng);
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);

  for (std::size_t k = 0; k < p; ++k) {
    const std::size_t subj = order[2 * k];
    const std::size_t obj = order[2 * k + 1];

    double roll = coin(rng);
    std::size_t cls = config.classes.size() - 1;
    for (std::size_t c = 0; c < config.classes.size(); ++c) {
      if (roll < config.classes[c].share) {
        cls = c;
        break;
      }
      roll -= config.classes[c].share;
    }
    const ClassSpec& spec = config.classes[cls];

    // The class signal is one draw at the prototype, its first half carried
    // by the subject feature and the second half by the object feature.
    for (std::size_t j = 0; j < config.raw_dim; ++j) {
      const double z = spec.prototype[j] + spec.sigma * unit(rng);
      if (j < half) {
        scene.nodes[subj].feature[j] = z;
      } else {
        scene.nodes[obj].feature[j] = z;
      }
    }
    scene.nodes[obj].box = nearby_box(scene.nodes[subj].box, rng);

    PairAnnotation pair;
    pair.subject = subj;
    pair.object = obj;
    pair.predicate = spec.class_id;
    scene.pairs.push_back(pair);
  }

  // Background nodes get uninformative full-dimensional noise.
  std::vector<bool> involved(n, false);
  for (const PairAnnotation& pair : scene.pairs) {
    involved[pair.subject] = true;
    involved[pair.object] = true;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (involved[i]) continue;
    for (double& v : scene.nodes[i].feature) v = unit(rng);
  }
  return scene;
}

}  // namespace

std::size_t Dataset::total_pairs() const {
  std::size_t total = 0;
  for (const Scene& s : scenes) total += s.pairs.size();
  return total;
}

Vector Dataset::class_counts() const {
  Vector counts(config.classes.size(), 0.0);
  for (const Scene& s : scenes) {
    for (const PairAnnotation& p : s.pairs) {
      counts[static_cast<std::size_t>(p.predicate)] += 1.0;
    }
  }
  return counts;
}

void validate_generator_config(const GeneratorConfig& config) {
  if (config.num_scenes == 0) throw ConfigError("generator: num_scenes must be positive");
  if (config.min_nodes < 2 || config.min_nodes > config.max_nodes) {
    throw ConfigError("generator: node range must be nonempty with at least 2 nodes");
  }
  if (config.min_pairs < 1 || config.min_pairs > config.max_pairs) {
    throw ConfigError("generator: pair range must be nonempty");
  }
  if (2 * config.max_pairs > config.min_nodes) {
    throw ConfigError("generator: max_pairs pairs need at least " +
                      std::to_string(2 * config.max_pairs) + " nodes per scene");
  }
  if (config.raw_dim < 2 || config.raw_dim % 2 != 0) {
    throw ConfigError("generator: raw_dim must be even and at least 2");
  }
  if (config.classes.empty()) throw ConfigError("generator: at least one class required");
  double share_sum = 0.0;
  for (std::size_t c = 0; c < config.classes.size(); ++c) {
    const ClassSpec& spec = config.classes[c];
    if (spec.class_id != static_cast<int>(c)) {
      throw ConfigError("generator: class_id of class " + std::to_string(c) +
                        " must equal its position");
    }
    if (spec.prototype.size() != config.raw_dim) {
      throw ConfigError("generator: prototype of class " + std::to_string(c) +
                        " must have raw_dim entries");
    }
    if (!(spec.sigma > 0.0)) throw ConfigError("generator: sigma must be positive");
    if (!(spec.share > 0.0 && spec.share <= 1.0)) {
      throw ConfigError("generator: share of class " + std::to_string(c) + " must lie in (0,1]");
    }
    share_sum += spec.share;
  }
  if (std::abs(share_sum - 1.0) > 1e-9) {
    throw ConfigError("generator: class shares must sum to 1 (got " + std::to_string(share_sum) +
                      ")");
  }
}

Dataset generate(const GeneratorConfig& config) {
  validate_generator_config(config);
  Dataset dataset;
  dataset.config = config;
  dataset.scenes.reserve(config.num_scenes);
  for (std::size_t i = 0; i < config.num_scenes; ++i) {
    dataset.scenes.push_back(generate_scene(config, i));
  }
  return dataset;
}

ObservationGroups build_observation_groups(const ClassSpec& primary, const ClassSpec& strong,
                                           const ClassSpec& weak, std::uint64_t seed,
                                           const ObservationOptions& options) {
  if (primary.prototype.size() != options.raw_dim || strong.prototype.size() != options.raw_dim ||
      weak.prototype.size() != options.raw_dim) {
    throw ConfigError("observation groups: prototypes must have raw_dim entries");
  }
  const double d_strong = l2_distance(primary.prototype, strong.prototype);
  const double d_weak = l2_distance(primary.prototype, weak.prototype);
  if (!(d_strong < d_weak)) {
    throw ConfigError("observation groups: strong companion must be closer to the primary "
                      "prototype than the weak one");
  }
  if (std::abs(strong.share - weak.share) > 1e-12) {
    throw ConfigError("observation groups: companions must share the same target frequency");
  }
  if (!(options.primary_share > 0.0 && options.primary_share < 1.0)) {
    throw ConfigError("observation groups: primary share must lie in (0,1)");
  }

  auto make_config = [&](const ClassSpec& companion, std::uint64_t group_seed) {
    GeneratorConfig config;
    config.num_scenes = options.num_scenes;
    config.raw_dim = options.raw_dim;
    config.seed = group_seed;
    ClassSpec head = primary;
    head.class_id = 0;
    head.share = options.primary_share;
    ClassSpec tail = companion;
    tail.class_id = 1;
    tail.share = 1.0 - options.primary_share;
    config.classes = {head, tail};
    return config;
  };

  ObservationGroups groups;
  groups.strong = generate(make_config(strong, derive_seed(seed, 1)));
  groups.weak = generate(make_config(weak, derive_seed(seed, 2)));

  // Equalize companion frequencies by randomly down-sampling the larger group.
  auto companion_pairs = [](const Dataset& d) {
    std::vector<std::pair<std::size_t, std::size_t>> found;
    for (std::size_t s = 0; s < d.scenes.size(); ++s) {
      for (std::size_t p = 0; p < d.scenes[s].pairs.size(); ++p) {
        if (d.scenes[s].pairs[p].predicate == 1) found.emplace_back(s, p);
      }
    }
    return found;
  };
  auto strong_pairs = companion_pairs(groups.strong);
  auto weak_pairs = companion_pairs(groups.weak);
  const std::size_t target = std::min(strong_pairs.size(), weak_pairs.size());

  auto downsample = [&](Dataset& d, std::vector<std::pair<std::size_t, std::size_t>> found,
                        std::uint64_t sub_seed) {
    if (found.size() <= target) return;
    std::mt19937_64 rng(derive_seed(seed, sub_seed));
    std::shuffle(found.begin(), found.end(), rng);
    found.resize(found.size() - target);  // pairs to remove
    std::sort(found.begin(), found.end());
    for (auto it = found.rbegin(); it != found.rend(); ++it) {
      auto& pairs = d.scenes[it->first].pairs;
      pairs.erase(pairs.begin() + static_cast<std::ptrdiff_t>(it->second));
    }
    std::erase_if(d.scenes, [](const Scene& s) { return s.pairs.empty(); });
  };
  downsample(groups.strong, std::move(strong_pairs), 3);
  downsample(groups.weak, std::move(weak_pairs), 4);
  return groups;
}

Dataset inject_label_noise(Dataset dataset, double flip_rate, std::uint64_t seed) {
  if (flip_rate < 0.0 || flip_rate >= 0.5) {
    throw ConfigError("inject_label_noise: flip_rate must lie in [0, 0.5)");
  }
  if (flip_rate == 0.0) return dataset;
  const int num_classes = static_cast<int>(dataset.num_classes());
  if (num_classes < 2) throw ConfigError("inject_label_noise: need at least two classes");
  std::mt19937_64 rng(derive_seed(seed, 0x6e6f697365ULL));
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> other(0, num_classes - 2);
  for (Scene& scene : dataset.scenes) {
    for (PairAnnotation& pair : scene.pairs) {
      if (coin(rng) >= flip_rate) continue;
      int flipped = other(rng);
      if (flipped >= pair.predicate) ++flipped;  // never equal to the original
      pair.noise_original = pair.predicate;
      pair.predicate = flipped;
    }
  }
  return dataset;
}

}  // namespace corrbalance
