#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "corrbalance/numeric.hpp"

namespace corrbalance {

/// One predicate class of the synthetic benchmark: an isotropic Gaussian
/// around a prototype, plus its target share of all generated pairs.
struct ClassSpec {
  int class_id = 0;
  Vector prototype;    // raw_dim
  double sigma = 1.0;
  double share = 0.0;  // in (0,1], shares sum to 1
};

struct PairAnnotation {
  std::size_t subject = 0;
  std::size_t object = 0;
  int predicate = 0;
  int noise_original = -1;  // pre-flip label when noise was injected, else -1
};

struct SceneNode {
  Vector feature;  // raw_dim
  Vector box;      // x1,y1,x2,y2 normalized
  int label = 0;   // object label
};

/// A synthetic "image": object nodes plus ordered ground-truth pairs.
struct Scene {
  std::size_t id = 0;
  std::vector<SceneNode> nodes;
  std::vector<PairAnnotation> pairs;
};

struct GeneratorConfig {
  std::size_t num_scenes = 1000;
  std::size_t min_nodes = 4;
  std::size_t max_nodes = 6;
  std::size_t min_pairs = 1;
  std::size_t max_pairs = 2;
  std::size_t raw_dim = 16;
  std::vector<ClassSpec> classes;
  std::uint64_t seed = 1;
};

struct Dataset {
  GeneratorConfig config;
  std::vector<Scene> scenes;

  std::size_t num_classes() const { return config.classes.size(); }
  std::size_t total_pairs() const;
  /// Pair counts per predicate class.
  Vector class_counts() const;
};

void validate_generator_config(const GeneratorConfig& config);

/// Deterministic per (seed, scene index): a pair's class signal is drawn at
/// the class prototype and split across the subject and object features.
Dataset generate(const GeneratorConfig& config);

struct ObservationGroups {
  Dataset strong;  // primary + strongly correlated companion
  Dataset weak;    // primary + weakly correlated companion
};

struct ObservationOptions {
  std::size_t num_scenes = 1500;
  std::size_t raw_dim = 16;
  double primary_share = 0.9;
};

/// The two comparison datasets with equalized companion frequencies
/// (random down-sampling, seeded). The strong companion prototype must be
/// closer to the primary prototype than the weak one.
ObservationGroups build_observation_groups(const ClassSpec& primary, const ClassSpec& strong,
                                           const ClassSpec& weak, std::uint64_t seed,
                                           const ObservationOptions& options = {});

/// Reassigns a flip_rate fraction of pair labels uniformly to a different
/// class, recording the original in noise_original.
Dataset inject_label_noise(Dataset dataset, double flip_rate, std::uint64_t seed);

}  // namespace corrbalance
