#include "corrbalance/class_graph.hpp"

#include <algorithm>
#include <cmath>
#include <random>

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

}  // namespace

std::string to_string(NormalizationMode mode) {
  switch (mode) {
    case NormalizationMode::MinMax: return "minmax";
    case NormalizationMode::Softmax: return "softmax";
    case NormalizationMode::Scaling: return "scaling";
  }
  return "minmax";
}

std::string to_string(CenterMode mode) {
  return mode == CenterMode::Learnt ? "learnt" : "average";
}

NormalizationMode normalization_mode_from_string(const std::string& s) {
  if (s == "minmax") return NormalizationMode::MinMax;
  if (s == "softmax") return NormalizationMode::Softmax;
  if (s == "scaling") return NormalizationMode::Scaling;
  throw ConfigError("unknown normalization mode: " + s);
}

CenterMode center_mode_from_string(const std::string& s) {
  if (s == "learnt") return CenterMode::Learnt;
  if (s == "average") return CenterMode::Average;
  throw ConfigError("unknown center mode: " + s);
}

double center_loss(const Matrix& features, const std::vector<int>& labels, const Matrix& centers) {
  if (features.rows() == 0) throw InputError("center_loss: empty batch");
  if (features.rows() != labels.size()) {
    throw DimensionError("center_loss: feature/label count mismatch");
  }
  if (features.cols() != centers.cols()) {
    throw DimensionError("center_loss: feature dim " + std::to_string(features.cols()) +
                         " vs center dim " + std::to_string(centers.cols()));
  }
  check_labels(labels, centers.rows());
  double total = 0.0;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto f = features.row(i);
    const auto v = centers.row(static_cast<std::size_t>(labels[i]));
    for (std::size_t j = 0; j < f.size(); ++j) {
      const double d = f[j] - v[j];
      total += d * d;
    }
  }
  return total / static_cast<double>(features.rows());
}

Matrix center_loss_grad(const Matrix& features, const std::vector<int>& labels,
                        const Matrix& centers) {
  if (features.rows() == 0) throw InputError("center_loss_grad: empty batch");
  if (features.rows() != labels.size()) {
    throw DimensionError("center_loss_grad: feature/label count mismatch");
  }
  if (features.cols() != centers.cols()) {
    throw DimensionError("center_loss_grad: feature dim mismatch");
  }
  check_labels(labels, centers.rows());
  Matrix grad(centers.rows(), centers.cols());
  const double scale = 2.0 / static_cast<double>(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto f = features.row(i);
    const auto k = static_cast<std::size_t>(labels[i]);
    for (std::size_t j = 0; j < features.cols(); ++j) {
      grad(k, j) -= scale * (f[j] - centers(k, j));
    }
  }
  return grad;
}

Vector normalize_correlation(const Vector& u, NormalizationMode mode, double epsilon) {
  if (u.empty()) throw DimensionError("normalize_correlation: empty input");
  if (epsilon <= 0.0) throw ConfigError("normalize_correlation: epsilon must be positive");
  const auto [mn_it, mx_it] = std::minmax_element(u.begin(), u.end());
  const double mn = *mn_it;
  const double mx = *mx_it;
  // No spread means no correlation information yet: fall back to uniform.
  if (mx == mn || (mode == NormalizationMode::Scaling && mx == 0.0)) {
    return Vector(u.size(), 1.0);
  }
  Vector tau(u.size());
  switch (mode) {
    case NormalizationMode::MinMax:
      for (std::size_t i = 0; i < u.size(); ++i) tau[i] = (u[i] - mn + epsilon) / (mx - mn);
      break;
    case NormalizationMode::Softmax:
      tau = stable_softmax(u);
      break;
    case NormalizationMode::Scaling:
      for (std::size_t i = 0; i < u.size(); ++i) tau[i] = u[i] / mx;
      break;
  }
  return tau;
}

ClassGraph::ClassGraph(std::size_t num_classes, std::size_t dim, NormalizationMode mode,
                       double epsilon, std::uint64_t seed)
    : centers_(num_classes, dim),
      edges_(num_classes, num_classes),
      u_(num_classes, 0.0),
      tau_(num_classes, 1.0),
      mode_(mode),
      epsilon_(epsilon) {
  if (num_classes == 0 || dim == 0) throw ConfigError("ClassGraph: empty shape");
  if (epsilon <= 0.0) throw ConfigError("ClassGraph: epsilon must be positive");
  // Tiny seeded noise breaks center ties without biasing the geometry.
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.01);
  for (double& v : centers_.data()) v = noise(rng);
  refresh_edges();
}

ClassGraph ClassGraph::restore(NormalizationMode mode, double epsilon, Matrix centers,
                               std::uint64_t update_count) {
  ClassGraph graph(centers.rows(), centers.cols(), mode, epsilon, 0);
  graph.centers_ = std::move(centers);
  graph.refresh_edges();
  graph.update_count_ = update_count;
  return graph;
}

void ClassGraph::set_centers(Matrix centers) {
  if (centers.rows() != centers_.rows() || centers.cols() != centers_.cols()) {
    throw DimensionError("set_centers: shape mismatch");
  }
  centers_ = std::move(centers);
  ++update_count_;
}

void ClassGraph::update_centers_learnt(const Matrix& features, const std::vector<int>& labels,
                                       double lr_c) {
  if (lr_c <= 0.0) throw ConfigError("update_centers_learnt: lr_c must be positive");
  const Matrix grad = center_loss_grad(features, labels, centers_);
  for (std::size_t i = 0; i < centers_.size(); ++i) {
    centers_.data()[i] -= lr_c * grad.data()[i];
  }
  ++update_count_;
}

void ClassGraph::update_centers_average(const Matrix& epoch_features,
                                        const std::vector<int>& epoch_labels) {
  if (epoch_features.rows() == 0) throw InputError("update_centers_average: empty epoch");
  if (epoch_features.rows() != epoch_labels.size()) {
    throw DimensionError("update_centers_average: feature/label count mismatch");
  }
  if (epoch_features.cols() != centers_.cols()) {
    throw DimensionError("update_centers_average: feature dim mismatch");
  }
  check_labels(epoch_labels, num_classes());
  Matrix sums(num_classes(), dim());
  std::vector<std::size_t> counts(num_classes(), 0);
  for (std::size_t i = 0; i < epoch_features.rows(); ++i) {
    const auto k = static_cast<std::size_t>(epoch_labels[i]);
    ++counts[k];
    for (std::size_t j = 0; j < dim(); ++j) sums(k, j) += epoch_features(i, j);
  }
  for (std::size_t k = 0; k < num_classes(); ++k) {
    if (counts[k] == 0) continue;
    for (std::size_t j = 0; j < dim(); ++j) {
      centers_(k, j) = sums(k, j) / static_cast<double>(counts[k]);
    }
  }
  ++update_count_;
}

void ClassGraph::refresh_edges() {
  const std::size_t c = num_classes();
  for (std::size_t k = 0; k < c; ++k) {
    edges_(k, k) = 0.0;
    for (std::size_t j = k + 1; j < c; ++j) {
      const double d = l2_distance(centers_.row(j), centers_.row(k));
      edges_(k, j) = d;
      edges_(j, k) = d;
    }
  }
  for (std::size_t i = 0; i < c; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += edges_(i, j);
    u_[i] = s;
  }
  tau_ = normalize_correlation(u_, mode_, epsilon_);
}

}  // namespace corrbalance
