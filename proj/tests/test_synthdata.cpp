#include <cmath>
#include <cstdio>
#include <filesystem>

#include <doctest.h>

#include "corrbalance/serialize.hpp"
#include "corrbalance/synthdata.hpp"

using namespace corrbalance;

TEST_SUITE_BEGIN("synthdata");

namespace {

ClassSpec make_spec(int id, double share, double offset, double sigma = 1.0,
                    std::size_t raw_dim = 16) {
  ClassSpec spec;
  spec.class_id = id;
  spec.prototype.assign(raw_dim, 0.0);
  spec.prototype[0] = offset;
  spec.sigma = sigma;
  spec.share = share;
  return spec;
}

GeneratorConfig three_class_config(std::size_t num_scenes = 200, std::uint64_t seed = 1) {
  GeneratorConfig config;
  config.num_scenes = num_scenes;
  config.seed = seed;
  config.classes = {make_spec(0, 0.7, 0.0), make_spec(1, 0.2, 4.0), make_spec(2, 0.1, 8.0)};
  return config;
}

/// Recover the full class draw from the split subject/object halves.
Vector pair_feature(const Scene& scene, const PairAnnotation& pair, std::size_t raw_dim) {
  Vector z(raw_dim);
  const std::size_t half = raw_dim / 2;
  for (std::size_t j = 0; j < half; ++j) z[j] = scene.nodes[pair.subject].feature[j];
  for (std::size_t j = half; j < raw_dim; ++j) z[j] = scene.nodes[pair.object].feature[j];
  return z;
}

}  // namespace

TEST_CASE("generate determinism and share contract") {
  GeneratorConfig config = three_class_config(4000, 9);
  const Dataset a = generate(config);
  const Dataset b = generate(config);
  REQUIRE(a.scenes.size() == b.scenes.size());
  CHECK(to_json(a.scenes[17]) == to_json(b.scenes[17]));
  CHECK(to_json(a.scenes.back()) == to_json(b.scenes.back()));

  const std::size_t total = a.total_pairs();
  CHECK(total >= 4000);
  const Vector counts = a.class_counts();
  CHECK(counts[0] / total == doctest::Approx(0.7).epsilon(0.03));
  CHECK(counts[1] / total == doctest::Approx(0.2).epsilon(0.1));
  CHECK(std::abs(counts[2] / total - 0.1) <= 0.02);

  // Disjoint seeds differ in at least one pair.
  GeneratorConfig other = config;
  other.seed = 10;
  const Dataset c = generate(other);
  bool differs = false;
  for (std::size_t s = 0; s < a.scenes.size() && !differs; ++s) {
    differs = to_json(a.scenes[s]) != to_json(c.scenes[s]);
  }
  CHECK(differs);
}

TEST_CASE("generate validates config") {
  GeneratorConfig config = three_class_config();
  config.classes[0].share = 0.9;  // shares now sum to 1.2
  CHECK_THROWS_AS(generate(config), ConfigError);

  config = three_class_config();
  config.min_nodes = 2;
  config.max_pairs = 2;  // needs 4 nodes
  CHECK_THROWS_AS(generate(config), ConfigError);

  config = three_class_config();
  config.classes[1].sigma = 0.0;
  CHECK_THROWS_AS(generate(config), ConfigError);
}

TEST_CASE("scene structure invariants") {
  const Dataset dataset = generate(three_class_config(300, 11));
  for (const Scene& scene : dataset.scenes) {
    CHECK(scene.nodes.size() >= 2);
    for (const SceneNode& node : scene.nodes) {
      CHECK(node.box.size() == 4);
      CHECK(node.box[0] >= 0.0);
      CHECK(node.box[0] < node.box[2]);
      CHECK(node.box[1] < node.box[3]);
      CHECK(node.box[2] <= 1.0);
      CHECK(node.box[3] <= 1.0);
    }
    for (const PairAnnotation& pair : scene.pairs) {
      CHECK(pair.subject < scene.nodes.size());
      CHECK(pair.object < scene.nodes.size());
      CHECK(pair.subject != pair.object);
      CHECK(pair.predicate >= 0);
      CHECK(pair.predicate < 3);
    }
  }
}

TEST_CASE("geometry contract for well-separated specs") {
  GeneratorConfig config;
  config.num_scenes = 500;
  config.seed = 13;
  config.classes = {make_spec(0, 0.5, 0.0, 0.5), make_spec(1, 0.5, 8.0, 0.5)};
  const Dataset dataset = generate(config);

  double within = 0.0;
  std::size_t within_count = 0;
  std::vector<Vector> first_by_class[2];
  for (const Scene& scene : dataset.scenes) {
    for (const PairAnnotation& pair : scene.pairs) {
      first_by_class[pair.predicate].push_back(pair_feature(scene, pair, config.raw_dim));
    }
  }
  for (int cls = 0; cls < 2; ++cls) {
    const auto& fs = first_by_class[cls];
    for (std::size_t i = 0; i + 1 < fs.size() && i < 200; i += 2) {
      within += l2_distance(fs[i], fs[i + 1]);
      ++within_count;
    }
  }
  const double between = l2_distance(config.classes[0].prototype, config.classes[1].prototype);
  CHECK(within / within_count < between);
}

TEST_CASE("identical prototypes are indistinguishable") {
  GeneratorConfig config;
  config.num_scenes = 1200;
  config.seed = 17;
  config.classes = {make_spec(0, 0.5, 2.0), make_spec(1, 0.5, 2.0)};
  const Dataset dataset = generate(config);

  // Nearest-class-mean on a held-out half cannot beat chance by much.
  std::vector<Vector> features;
  std::vector<int> labels;
  for (const Scene& scene : dataset.scenes) {
    for (const PairAnnotation& pair : scene.pairs) {
      features.push_back(pair_feature(scene, pair, config.raw_dim));
      labels.push_back(pair.predicate);
    }
  }
  const std::size_t half = features.size() / 2;
  Vector means[2];
  std::size_t counts[2] = {0, 0};
  means[0].assign(config.raw_dim, 0.0);
  means[1].assign(config.raw_dim, 0.0);
  for (std::size_t i = 0; i < half; ++i) {
    for (std::size_t j = 0; j < config.raw_dim; ++j) means[labels[i]][j] += features[i][j];
    ++counts[labels[i]];
  }
  for (int cls = 0; cls < 2; ++cls) {
    for (double& v : means[cls]) v /= static_cast<double>(counts[cls]);
  }
  std::size_t correct = 0;
  for (std::size_t i = half; i < features.size(); ++i) {
    const int guess =
        l2_distance(features[i], means[0]) <= l2_distance(features[i], means[1]) ? 0 : 1;
    correct += guess == labels[i] ? 1 : 0;
  }
  const double accuracy = static_cast<double>(correct) / (features.size() - half);
  CHECK(accuracy < 0.58);
  CHECK(accuracy > 0.42);
}

TEST_CASE("observation groups contract") {
  const ClassSpec primary = make_spec(0, 0.9, 0.0);
  ClassSpec strong = make_spec(1, 0.1, 1.0);
  ClassSpec weak = make_spec(2, 0.1, 6.0);

  const ObservationGroups groups = build_observation_groups(primary, strong, weak, 21, {});
  auto count_class = [](const Dataset& d, int cls) {
    std::size_t total = 0;
    for (const Scene& s : d.scenes) {
      for (const PairAnnotation& p : s.pairs) total += p.predicate == cls ? 1 : 0;
    }
    return total;
  };
  CHECK(count_class(groups.strong, 1) == count_class(groups.weak, 1));
  CHECK(count_class(groups.strong, 1) > 0);
  // Only the two classes are present; the 9:1 ratio is approximate.
  const double primary_share = static_cast<double>(count_class(groups.strong, 0)) /
                               groups.strong.total_pairs();
  CHECK(primary_share == doctest::Approx(0.9).epsilon(0.05));

  // Swapped distances violate the spec.
  CHECK_THROWS_AS(build_observation_groups(primary, weak, strong, 21, {}), ConfigError);

  ClassSpec mismatched = weak;
  mismatched.share = 0.2;
  CHECK_THROWS_AS(build_observation_groups(primary, strong, mismatched, 21, {}), ConfigError);
}

TEST_CASE("inject_label_noise") {
  const Dataset dataset = generate(three_class_config(4000, 23));

  const Dataset unchanged = inject_label_noise(dataset, 0.0, 31);
  CHECK(to_json(unchanged.scenes[5]) == to_json(dataset.scenes[5]));

  const Dataset noisy = inject_label_noise(dataset, 0.1, 31);
  std::size_t flipped = 0;
  std::size_t total = 0;
  for (const Scene& scene : noisy.scenes) {
    for (const PairAnnotation& pair : scene.pairs) {
      ++total;
      if (pair.noise_original >= 0) {
        ++flipped;
        CHECK(pair.noise_original != pair.predicate);
      }
    }
  }
  CHECK(total >= 4000);
  const double expectation = 0.1 * static_cast<double>(total);
  CHECK(std::abs(static_cast<double>(flipped) - expectation) <= 60.0 * expectation / 1000.0);

  CHECK_THROWS_AS(inject_label_noise(dataset, 0.5, 31), ConfigError);
  CHECK_THROWS_AS(inject_label_noise(dataset, -0.1, 31), ConfigError);
}

TEST_CASE("dataset jsonl round trip") {
  const Dataset dataset = generate(three_class_config(40, 29));
  const auto path = std::filesystem::temp_directory_path() / "corrbalance_roundtrip.jsonl";
  write_dataset_jsonl(dataset, path.string());
  const Dataset loaded = read_dataset_jsonl(path.string());
  REQUIRE(loaded.scenes.size() == dataset.scenes.size());
  CHECK(to_json(loaded.config) == to_json(dataset.config));
  for (std::size_t s = 0; s < dataset.scenes.size(); ++s) {
    CHECK(to_json(loaded.scenes[s]) == to_json(dataset.scenes[s]));
  }
  std::filesystem::remove(path);
}

TEST_SUITE_END();
