#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "corrbalance/numeric.hpp"
#include "corrbalance/synthdata.hpp"

namespace corrbalance {

enum class Protocol { Constrained, Unconstrained };

std::string to_string(Protocol protocol);
Protocol protocol_from_string(const std::string& s);

struct RankedCandidate {
  std::size_t pair = 0;
  int predicate = 0;
  double score = 0.0;
};

/// Constrained keeps each pair's argmax predicate only; unconstrained keeps
/// all P x C candidates. Sorted by score descending, ties broken by
/// (pair index, class index) ascending.
std::vector<RankedCandidate> rank_predictions(const Matrix& scores, Protocol protocol);

struct ClassTally {
  std::size_t matched = 0;
  std::size_t total = 0;
};

struct ScenePredictions {
  std::size_t scene_id = 0;
  Matrix scores;  // P x C, rows aligned with the scene's pairs
};

struct RecallResult {
  double recall = 0.0;  // matched / total ground truth over all scenes
  std::map<int, ClassTally> per_class;
};

RecallResult recall_at_k(const std::vector<Scene>& scenes,
                         const std::vector<ScenePredictions>& predictions, std::size_t k,
                         Protocol protocol);

/// Unweighted mean of matched/total over classes with at least one GT pair.
double mean_recall_at_k(const std::map<int, ClassTally>& tallies);

/// Independent enumeration-based recomputation for small scenes
/// (P x C <= 200): ranks each ground-truth candidate by counting the
/// candidates ahead of it instead of sorting.
RecallResult oracle_recall(const std::vector<Scene>& scenes,
                           const std::vector<ScenePredictions>& predictions, std::size_t k,
                           Protocol protocol);

struct EvalReport {
  Protocol protocol = Protocol::Constrained;
  std::vector<std::size_t> ks;
  std::map<std::size_t, double> recall;                       // R@K
  std::map<std::size_t, double> mean_recall;                  // mR@K
  std::map<int, std::map<std::size_t, double>> per_class;     // class -> K -> recall
  std::map<int, std::size_t> gt_counts;
  bool saturated = false;  // largest K covers every candidate in every scene
  std::string config_hash;
  std::uint64_t seed = 0;
};

EvalReport evaluate(const std::vector<Scene>& scenes,
                    const std::vector<ScenePredictions>& predictions,
                    const std::vector<std::size_t>& ks, Protocol protocol,
                    const std::string& config_hash, std::uint64_t seed);

}  // namespace corrbalance
