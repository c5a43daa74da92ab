#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "corrbalance/class_graph.hpp"
#include "corrbalance/numeric.hpp"

namespace corrbalance {

enum class LossVariant { PlainCE, PCPL, ReweightPow, ClassBalanced, Focal };

std::string to_string(LossVariant v);
LossVariant loss_variant_from_string(const std::string& s);

struct LossConfig {
  LossVariant variant = LossVariant::PlainCE;
  double reweight_n = 1.0;   // ReweightPow exponent in [0,1]
  double beta = 0.999;       // ClassBalanced
  double gamma = 2.0;        // Focal
  // When true, the correlation-weight denominator sums tau over samples
  // instead of over the distinct classes present (ablation switch).
  bool pcpl_per_sample_denominator = false;
  Vector class_frequencies;  // counts, required by ReweightPow/ClassBalanced

  /// Stable name used for run directories, e.g. "reweight_pow_n0.5".
  std::string run_name() const;
};

struct BatchLossResult {
  double loss = 0.0;
  Vector per_sample_weights;  // multiplier on -log p' per sample; 0 when dropped
  Matrix logit_gradient;      // N x C analytic gradient of the loss
  std::vector<bool> dropped_mask;
};

/// Correlation-weighted cross entropy. tau must be strictly positive.
BatchLossResult pcpl_loss(const Matrix& logits, const std::vector<int>& labels, const Vector& tau,
                          bool per_sample_denominator = false,
                          const std::vector<bool>& dropped = {});

/// Mean cross entropy over kept samples.
BatchLossResult plain_ce(const Matrix& logits, const std::vector<int>& labels,
                         const std::vector<bool>& dropped = {});

/// Inverse-frequency^n class weights, rescaled to mean sample weight 1.
BatchLossResult reweight_pow_loss(const Matrix& logits, const std::vector<int>& labels,
                                  const Vector& frequencies, double n,
                                  const std::vector<bool>& dropped = {});

/// Weights proportional to the inverse effective number (1-beta^freq)/(1-beta),
/// rescaled to mean sample weight 1.
BatchLossResult class_balanced_loss(const Matrix& logits, const std::vector<int>& labels,
                                    const Vector& frequencies, double beta,
                                    const std::vector<bool>& dropped = {});

BatchLossResult focal_loss(const Matrix& logits, const std::vector<int>& labels, double gamma,
                           const std::vector<bool>& dropped = {});

/// Dispatch on config.variant. tau is consulted only by the correlation loss.
BatchLossResult compute_loss(const Matrix& logits, const std::vector<int>& labels,
                             const LossConfig& config, const Vector& tau,
                             const std::vector<bool>& dropped = {});

/// Noisy-sample filter: sample i with label a is marked for dropping iff for
/// some other class j, (|f_i - v_a| - |f_i - v_j|) - e_aj/lambda > 0 strictly.
/// graph_token must equal graph.update_count() from when the caller last
/// refreshed edges; a mismatch raises StalenessError.
std::vector<bool> drop_mask(const Matrix& features, const std::vector<int>& labels,
                            const ClassGraph& graph, double lambda, std::uint64_t graph_token);

}  // namespace corrbalance
