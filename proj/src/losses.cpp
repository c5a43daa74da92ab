#include "corrbalance/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

namespace corrbalance {

namespace {

void check_labels(const std::vector<int>& labels, std::size_t num_classes) {
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes) {
      throw LabelError("label " + std::to_string(l) + " outside [0, " +
                       std::to_string(num_classes) + ")");
    }
  }
}

std::vector<bool> resolve_mask(const std::vector<bool>& dropped, std::size_t n) {
  if (dropped.empty()) return std::vector<bool>(n, false);
  if (dropped.size() != n) throw DimensionError("drop mask length does not match batch size");
  return dropped;
}

std::size_t kept_count(const std::vector<bool>& mask) {
  std::size_t kept = 0;
  for (bool d : mask) kept += d ? 0 : 1;
  return kept;
}

/// Shared core for every plain/weighted cross-entropy variant:
/// loss = sum_i w_i * (-log p'_{l_i}), gradient row i = w_i * (p'_i - onehot).
BatchLossResult weighted_ce(const Matrix& logits, const std::vector<int>& labels,
                            const Vector& sample_weights, std::vector<bool> mask) {
  const std::size_t n = logits.rows();
  const std::size_t c = logits.cols();
  BatchLossResult result;
  result.per_sample_weights = sample_weights;
  result.logit_gradient = Matrix(n, c);
  result.dropped_mask = std::move(mask);
  const Matrix p = softmax_rows(logits);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = sample_weights[i];
    if (w == 0.0) continue;
    const auto a = static_cast<std::size_t>(labels[i]);
    result.loss += w * -std::log(p(i, a));
    for (std::size_t j = 0; j < c; ++j) {
      result.logit_gradient(i, j) = w * (p(i, j) - (j == a ? 1.0 : 0.0));
    }
  }
  if (!std::isfinite(result.loss)) throw NumericError("loss is not finite");
  return result;
}

/// Mean-over-kept cross entropy with per-class weights rescaled so the
/// frequency-weighted mean weight is 1.
BatchLossResult rescaled_class_weight_ce(const Matrix& logits, const std::vector<int>& labels,
                                         const Vector& frequencies, Vector class_weights,
                                         const std::vector<bool>& dropped) {
  double weighted = 0.0;
  double total = 0.0;
  for (std::size_t cls = 0; cls < frequencies.size(); ++cls) {
    weighted += frequencies[cls] * class_weights[cls];
    total += frequencies[cls];
  }
  const double rescale = total / weighted;
  for (double& w : class_weights) w *= rescale;

  std::vector<bool> mask = resolve_mask(dropped, logits.rows());
  const std::size_t kept = kept_count(mask);
  const double inv = kept > 0 ? 1.0 / static_cast<double>(kept) : 0.0;
  Vector sample_weights(logits.rows(), 0.0);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (!mask[i]) sample_weights[i] = class_weights[static_cast<std::size_t>(labels[i])] * inv;
  }
  return weighted_ce(logits, labels, sample_weights, std::move(mask));
}

void check_frequencies(const Vector& frequencies, std::size_t num_classes) {
  if (frequencies.size() != num_classes) {
    throw ConfigError("class_frequencies length " + std::to_string(frequencies.size()) +
                      " does not match class count " + std::to_string(num_classes));
  }
  for (double f : frequencies) {
    if (!(f > 0.0)) throw ConfigError("class_frequencies must be strictly positive");
  }
}

}  // namespace

std::string to_string(LossVariant v) {
  switch (v) {
    case LossVariant::PlainCE: return "plain_ce";
    case LossVariant::PCPL: return "pcpl";
    case LossVariant::ReweightPow: return "reweight_pow";
    case LossVariant::ClassBalanced: return "class_balanced";
    case LossVariant::Focal: return "focal";
  }
  return "plain_ce";
}

LossVariant loss_variant_from_string(const std::string& s) {
  if (s == "plain_ce") return LossVariant::PlainCE;
  if (s == "pcpl") return LossVariant::PCPL;
  if (s == "reweight_pow") return LossVariant::ReweightPow;
  if (s == "class_balanced") return LossVariant::ClassBalanced;
  if (s == "focal") return LossVariant::Focal;
  throw ConfigError("unknown loss variant: " + s);
}

std::string LossConfig::run_name() const {
  char buf[64];
  switch (variant) {
    case LossVariant::PlainCE: return "plain_ce";
    case LossVariant::PCPL: return "pcpl";
    case LossVariant::ReweightPow:
      std::snprintf(buf, sizeof(buf), "reweight_pow_n%g", reweight_n);
      return buf;
    case LossVariant::ClassBalanced:
      std::snprintf(buf, sizeof(buf), "class_balanced_b%g", beta);
      return buf;
    case LossVariant::Focal:
      std::snprintf(buf, sizeof(buf), "focal_g%g", gamma);
      return buf;
  }
  return "plain_ce";
}

BatchLossResult pcpl_loss(const Matrix& logits, const std::vector<int>& labels, const Vector& tau,
                          bool per_sample_denominator, const std::vector<bool>& dropped) {
  if (logits.rows() != labels.size()) throw DimensionError("pcpl_loss: logit/label mismatch");
  if (tau.size() != logits.cols()) {
    throw DimensionError("pcpl_loss: tau length does not match class count");
  }
  check_labels(labels, logits.cols());
  for (double t : tau) {
    if (!(t > 0.0)) throw ConfigError("pcpl_loss: tau entries must be strictly positive");
  }
  std::vector<bool> mask = resolve_mask(dropped, logits.rows());

  double denom = 0.0;
  if (per_sample_denominator) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (!mask[i]) denom += tau[static_cast<std::size_t>(labels[i])];
    }
  } else {
    std::set<int> present;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (!mask[i]) present.insert(labels[i]);
    }
    for (int cls : present) denom += tau[static_cast<std::size_t>(cls)];
  }

  Vector sample_weights(logits.rows(), 0.0);
  if (denom > 0.0) {
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      if (!mask[i]) sample_weights[i] = tau[static_cast<std::size_t>(labels[i])] / denom;
    }
  }
  return weighted_ce(logits, labels, sample_weights, std::move(mask));
}

BatchLossResult plain_ce(const Matrix& logits, const std::vector<int>& labels,
                         const std::vector<bool>& dropped) {
  if (logits.rows() != labels.size()) throw DimensionError("plain_ce: logit/label mismatch");
  check_labels(labels, logits.cols());
  return rescaled_class_weight_ce(logits, labels, Vector(logits.cols(), 1.0),
                                  Vector(logits.cols(), 1.0), dropped);
}

BatchLossResult reweight_pow_loss(const Matrix& logits, const std::vector<int>& labels,
                                  const Vector& frequencies, double n,
                                  const std::vector<bool>& dropped) {
  if (logits.rows() != labels.size()) throw DimensionError("reweight_pow_loss: logit/label mismatch");
  if (n < 0.0 || n > 1.0) throw ConfigError("reweight_pow_loss: n must lie in [0,1]");
  check_labels(labels, logits.cols());
  check_frequencies(frequencies, logits.cols());
  Vector weights(frequencies.size());
  for (std::size_t cls = 0; cls < frequencies.size(); ++cls) {
    weights[cls] = std::pow(1.0 / frequencies[cls], n);
  }
  return rescaled_class_weight_ce(logits, labels, frequencies, std::move(weights), dropped);
}

BatchLossResult class_balanced_loss(const Matrix& logits, const std::vector<int>& labels,
                                    const Vector& frequencies, double beta,
                                    const std::vector<bool>& dropped) {
  if (logits.rows() != labels.size()) {
    throw DimensionError("class_balanced_loss: logit/label mismatch");
  }
  if (beta <= 0.0 || beta >= 1.0) throw ConfigError("class_balanced_loss: beta must lie in (0,1)");
  check_labels(labels, logits.cols());
  check_frequencies(frequencies, logits.cols());
  Vector weights(frequencies.size());
  for (std::size_t cls = 0; cls < frequencies.size(); ++cls) {
    const double effective = (1.0 - std::pow(beta, frequencies[cls])) / (1.0 - beta);
    weights[cls] = 1.0 / effective;
  }
  return rescaled_class_weight_ce(logits, labels, frequencies, std::move(weights), dropped);
}

BatchLossResult focal_loss(const Matrix& logits, const std::vector<int>& labels, double gamma,
                           const std::vector<bool>& dropped) {
  if (logits.rows() != labels.size()) throw DimensionError("focal_loss: logit/label mismatch");
  if (gamma < 0.0) throw ConfigError("focal_loss: gamma must be nonnegative");
  check_labels(labels, logits.cols());
  std::vector<bool> mask = resolve_mask(dropped, logits.rows());
  const std::size_t n = logits.rows();
  const std::size_t c = logits.cols();
  const std::size_t kept = kept_count(mask);
  const double inv = kept > 0 ? 1.0 / static_cast<double>(kept) : 0.0;

  BatchLossResult result;
  result.per_sample_weights.assign(n, 0.0);
  result.logit_gradient = Matrix(n, c);
  result.dropped_mask = mask;
  const Matrix p = softmax_rows(logits);
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i]) continue;
    const auto a = static_cast<std::size_t>(labels[i]);
    const double pa = p(i, a);
    const double miss = 1.0 - pa;
    const double modulator = std::pow(miss, gamma);
    result.per_sample_weights[i] = modulator * inv;
    result.loss += result.per_sample_weights[i] * -std::log(pa);
    // d/dz_j of -(1-p_a)^g log p_a is factor * (onehot_j - p_j) with
    // factor = g (1-p_a)^{g-1} p_a log p_a - (1-p_a)^g. The gamma == 0 and
    // p_a == 1 branches keep the limit values free of 0 * inf.
    double factor;
    if (gamma == 0.0) {
      factor = -1.0;
    } else if (miss == 0.0) {
      factor = 0.0;
    } else {
      factor = gamma * std::pow(miss, gamma - 1.0) * pa * std::log(pa) - modulator;
    }
    for (std::size_t j = 0; j < c; ++j) {
      result.logit_gradient(i, j) = inv * factor * ((j == a ? 1.0 : 0.0) - p(i, j));
    }
  }
  if (!std::isfinite(result.loss)) throw NumericError("loss is not finite");
  return result;
}

BatchLossResult compute_loss(const Matrix& logits, const std::vector<int>& labels,
                             const LossConfig& config, const Vector& tau,
                             const std::vector<bool>& dropped) {
  switch (config.variant) {
    case LossVariant::PlainCE:
      return plain_ce(logits, labels, dropped);
    case LossVariant::PCPL:
      return pcpl_loss(logits, labels, tau, config.pcpl_per_sample_denominator, dropped);
    case LossVariant::ReweightPow:
      return reweight_pow_loss(logits, labels, config.class_frequencies, config.reweight_n,
                               dropped);
    case LossVariant::ClassBalanced:
      return class_balanced_loss(logits, labels, config.class_frequencies, config.beta, dropped);
    case LossVariant::Focal:
      return focal_loss(logits, labels, config.gamma, dropped);
  }
  throw ConfigError("compute_loss: unknown variant");
}

std::vector<bool> drop_mask(const Matrix& features, const std::vector<int>& labels,
                            const ClassGraph& graph, double lambda, std::uint64_t graph_token) {
  if (lambda <= 0.0) throw ConfigError("drop_mask: lambda must be positive");
  if (graph_token != graph.update_count()) {
    throw StalenessError("drop_mask: graph changed since the caller's snapshot (token " +
                         std::to_string(graph_token) + ", current " +
                         std::to_string(graph.update_count()) + ")");
  }
  if (features.rows() != labels.size()) throw DimensionError("drop_mask: feature/label mismatch");
  if (features.cols() != graph.dim()) throw DimensionError("drop_mask: feature dim mismatch");
  check_labels(labels, graph.num_classes());

  const Matrix& centers = graph.centers();
  const Matrix& edges = graph.edges();
  std::vector<bool> mask(features.rows(), false);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto a = static_cast<std::size_t>(labels[i]);
    const double own = l2_distance(features.row(i), centers.row(a));
    for (std::size_t j = 0; j < graph.num_classes(); ++j) {
      if (j == a) continue;
      const double score = own - l2_distance(features.row(i), centers.row(j)) - edges(a, j) / lambda;
      if (score > 0.0) {
        mask[i] = true;
        break;
      }
    }
  }
  return mask;
}

}  // namespace corrbalance
