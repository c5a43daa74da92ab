#include "corrbalance/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace corrbalance {

namespace {

void check_scores(const Matrix& scores) {
  for (double v : scores.data()) {
    if (!std::isfinite(v) || v < -1e-9 || v > 1.0 + 1e-9) {
      throw InputError("prediction scores must be probabilities in [0,1]");
    }
  }
}

/// scene_id -> prediction index, requiring exactly one entry per scene.
std::unordered_map<std::size_t, std::size_t> index_predictions(
    const std::vector<Scene>& scenes, const std::vector<ScenePredictions>& predictions) {
  std::unordered_map<std::size_t, std::size_t> by_id;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (!by_id.emplace(predictions[i].scene_id, i).second) {
      throw InputError("duplicate predictions for scene " +
                       std::to_string(predictions[i].scene_id));
    }
  }
  for (const Scene& scene : scenes) {
    if (by_id.find(scene.id) == by_id.end()) {
      throw InputError("missing predictions for scene " + std::to_string(scene.id));
    }
  }
  return by_id;
}

void check_alignment(const Scene& scene, const Matrix& scores) {
  if (scores.rows() != scene.pairs.size()) {
    throw InputError("scene " + std::to_string(scene.id) + " has " +
                     std::to_string(scene.pairs.size()) + " pairs but " +
                     std::to_string(scores.rows()) + " score rows");
  }
  check_scores(scores);
}

}  // namespace

std::string to_string(Protocol protocol) {
  return protocol == Protocol::Constrained ? "constrained" : "unconstrained";
}

Protocol protocol_from_string(const std::string& s) {
  if (s == "constrained") return Protocol::Constrained;
  if (s == "unconstrained") return Protocol::Unconstrained;
  throw ConfigError("unknown protocol: " + s);
}

std::vector<RankedCandidate> rank_predictions(const Matrix& scores, Protocol protocol) {
  check_scores(scores);
  std::vector<RankedCandidate> candidates;
  if (protocol == Protocol::Constrained) {
    for (std::size_t p = 0; p < scores.rows(); ++p) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < scores.cols(); ++c) {
        if (scores(p, c) > scores(p, best)) best = c;
      }
      candidates.push_back({p, static_cast<int>(best), scores(p, best)});
    }
  } else {
    candidates.reserve(scores.rows() * scores.cols());
    for (std::size_t p = 0; p < scores.rows(); ++p) {
      for (std::size_t c = 0; c < scores.cols(); ++c) {
        candidates.push_back({p, static_cast<int>(c), scores(p, c)});
      }
    }
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const RankedCandidate& a, const RankedCandidate& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.pair != b.pair) return a.pair < b.pair;
              return a.predicate < b.predicate;
            });
  return candidates;
}

RecallResult recall_at_k(const std::vector<Scene>& scenes,
                         const std::vector<ScenePredictions>& predictions, std::size_t k,
                         Protocol protocol) {
  auto by_id = index_predictions(scenes, predictions);
  RecallResult result;
  std::size_t matched_total = 0;
  std::size_t gt_total = 0;
  for (const Scene& scene : scenes) {
    const Matrix& scores = predictions[by_id.at(scene.id)].scores;
    check_alignment(scene, scores);
    std::vector<RankedCandidate> ranked = rank_predictions(scores, protocol);
    const std::size_t top = std::min(k, ranked.size());
    for (std::size_t gi = 0; gi < scene.pairs.size(); ++gi) {
      const PairAnnotation& gt = scene.pairs[gi];
      ClassTally& tally = result.per_class[gt.predicate];
      ++tally.total;
      ++gt_total;
      for (std::size_t r = 0; r < top; ++r) {
        if (ranked[r].pair == gi && ranked[r].predicate == gt.predicate) {
          ++tally.matched;
          ++matched_total;
          break;
        }
      }
    }
  }
  result.recall = gt_total > 0 ? static_cast<double>(matched_total) / gt_total : 0.0;
  return result;
}

double mean_recall_at_k(const std::map<int, ClassTally>& tallies) {
  double sum = 0.0;
  std::size_t classes = 0;
  for (const auto& [cls, tally] : tallies) {
    if (tally.total == 0) continue;
    sum += static_cast<double>(tally.matched) / tally.total;
    ++classes;
  }
  if (classes == 0) throw InputError("mean_recall_at_k: no class has ground truth");
  return sum / static_cast<double>(classes);
}

RecallResult oracle_recall(const std::vector<Scene>& scenes,
                           const std::vector<ScenePredictions>& predictions, std::size_t k,
                           Protocol protocol) {
  auto by_id = index_predictions(scenes, predictions);
  RecallResult result;
  std::size_t matched_total = 0;
  std::size_t gt_total = 0;
  for (const Scene& scene : scenes) {
    const Matrix& scores = predictions[by_id.at(scene.id)].scores;
    check_alignment(scene, scores);
    const std::size_t pair_count = scores.rows();
    const std::size_t class_count = scores.cols();
    if (pair_count * class_count > 200) {
      throw InputError("oracle_recall: scene " + std::to_string(scene.id) +
                       " exceeds the P*C <= 200 size limit");
    }

    // Constrained candidate of a pair: highest score, lowest class on ties.
    std::vector<std::size_t> argmax(pair_count, 0);
    for (std::size_t p = 0; p < pair_count; ++p) {
      for (std::size_t c = 1; c < class_count; ++c) {
        if (scores(p, c) > scores(p, argmax[p])) argmax[p] = c;
      }
    }

    // A candidate is in the top k iff fewer than k candidates rank ahead of
    // it: higher score, or equal score with smaller (pair, class).
    auto ranks_ahead = [&](std::size_t pair, std::size_t cls, double score,
                           std::size_t other_pair, std::size_t other_cls) {
      const double other = scores(other_pair, other_cls);
      if (other != score) return other > score;
      if (other_pair != pair) return other_pair < pair;
      return other_cls < cls;
    };

    for (std::size_t gi = 0; gi < scene.pairs.size(); ++gi) {
      const PairAnnotation& gt = scene.pairs[gi];
      ClassTally& tally = result.per_class[gt.predicate];
      ++tally.total;
      ++gt_total;

      const auto cls = static_cast<std::size_t>(gt.predicate);
      bool matched = false;
      if (protocol == Protocol::Constrained) {
        if (argmax[gi] == cls) {
          std::size_t ahead = 0;
          for (std::size_t p = 0; p < pair_count; ++p) {
            if (p == gi) continue;
            if (ranks_ahead(gi, cls, scores(gi, cls), p, argmax[p])) ++ahead;
          }
          matched = ahead < k;
        }
      } else {
        std::size_t ahead = 0;
        for (std::size_t p = 0; p < pair_count; ++p) {
          for (std::size_t c = 0; c < class_count; ++c) {
            if (p == gi && c == cls) continue;
            if (ranks_ahead(gi, cls, scores(gi, cls), p, c)) ++ahead;
          }
        }
        matched = ahead < k;
      }
      if (matched) {
        ++tally.matched;
        ++matched_total;
      }
    }
  }
  result.recall = gt_total > 0 ? static_cast<double>(matched_total) / gt_total : 0.0;
  return result;
}

EvalReport evaluate(const std::vector<Scene>& scenes,
                    const std::vector<ScenePredictions>& predictions,
                    const std::vector<std::size_t>& ks, Protocol protocol,
                    const std::string& config_hash, std::uint64_t seed) {
  EvalReport report;
  report.protocol = protocol;
  report.ks = ks;
  report.config_hash = config_hash;
  report.seed = seed;
  for (std::size_t k : ks) {
    RecallResult result = recall_at_k(scenes, predictions, k, protocol);
    report.recall[k] = result.recall;
    report.mean_recall[k] = mean_recall_at_k(result.per_class);
    for (const auto& [cls, tally] : result.per_class) {
      report.per_class[cls][k] =
          tally.total > 0 ? static_cast<double>(tally.matched) / tally.total : 0.0;
      report.gt_counts[cls] = tally.total;
    }
  }
  if (!ks.empty()) {
    const std::size_t k_max = *std::max_element(ks.begin(), ks.end());
    report.saturated = true;
    for (const ScenePredictions& pred : predictions) {
      const std::size_t candidates = protocol == Protocol::Constrained
                                         ? pred.scores.rows()
                                         : pred.scores.rows() * pred.scores.cols();
      if (candidates > k_max) {
        report.saturated = false;
        break;
      }
    }
  }
  return report;
}

}  // namespace corrbalance
