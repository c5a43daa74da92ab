#pragma once

#include <cstdint>
#include <string>

#include "corrbalance/numeric.hpp"

namespace corrbalance {

enum class NormalizationMode { MinMax, Softmax, Scaling };
enum class CenterMode { Learnt, Average };

std::string to_string(NormalizationMode mode);
std::string to_string(CenterMode mode);
NormalizationMode normalization_mode_from_string(const std::string& s);
CenterMode center_mode_from_string(const std::string& s);

/// Mean squared distance between features and their class centers.
double center_loss(const Matrix& features, const std::vector<int>& labels, const Matrix& centers);

/// Gradient of center_loss with respect to the centers only. Features are
/// treated as constants: no feature gradient exists on this path.
Matrix center_loss_grad(const Matrix& features, const std::vector<int>& labels,
                        const Matrix& centers);

/// Correlation factors from global correlations. Degenerate input
/// (max(u) == min(u), or a zero maximum under Scaling) yields uniform 1s.
Vector normalize_correlation(const Vector& u, NormalizationMode mode, double epsilon);

/// Learnable per-class center graph: centers, pairwise Euclidean edges,
/// per-class edge sums and their normalization into loss-weight factors.
/// Single writer; readers take value snapshots.
class ClassGraph {
 public:
  ClassGraph(std::size_t num_classes, std::size_t dim, NormalizationMode mode,
             double epsilon = 1e-6, std::uint64_t seed = 0);

  /// Rebuild from checkpointed state; edges/u/tau are recomputed.
  static ClassGraph restore(NormalizationMode mode, double epsilon, Matrix centers,
                            std::uint64_t update_count);

  std::size_t num_classes() const { return centers_.rows(); }
  std::size_t dim() const { return centers_.cols(); }
  NormalizationMode normalization() const { return mode_; }
  double epsilon() const { return epsilon_; }
  std::uint64_t update_count() const { return update_count_; }

  const Matrix& centers() const { return centers_; }
  const Matrix& edges() const { return edges_; }
  const Vector& global_correlation() const { return u_; }
  const Vector& tau() const { return tau_; }

  void set_centers(Matrix centers);

  /// One SGD step on the center loss. Edges/u/tau are left stale until
  /// refresh_edges is called.
  void update_centers_learnt(const Matrix& features, const std::vector<int>& labels, double lr_c);

  /// Replace each center present in the epoch by its class feature mean;
  /// absent classes keep their previous center.
  void update_centers_average(const Matrix& epoch_features, const std::vector<int>& epoch_labels);

  /// Recompute edges, global correlations and tau from the current centers.
  void refresh_edges();

 private:
  Matrix centers_;
  Matrix edges_;
  Vector u_;
  Vector tau_;
  NormalizationMode mode_;
  double epsilon_;
  std::uint64_t update_count_ = 0;
};

}  // namespace corrbalance
