#include "corrbalance/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace corrbalance {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, Vector values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul shape mismatch: " + shape_str(a) + " * " + shape_str(b));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) {
        out(i, j) += aik * b(k, j);
      }
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("add shape mismatch: " + shape_str(a) + " + " + shape_str(b));
  }
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("subtract shape mismatch: " + shape_str(a) + " - " + shape_str(b));
  }
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
  return out;
}

Matrix scale(const Matrix& a, double s) {
  Matrix out = a;
  for (double& v : out.data()) v *= s;
  return out;
}

Matrix affine_forward(const Matrix& x, const Matrix& w, const Vector& b) {
  if (x.cols() != w.rows()) {
    throw DimensionError("affine_forward: x is " + shape_str(x) + " but W is " + shape_str(w));
  }
  if (b.size() != w.cols()) {
    throw DimensionError("affine_forward: bias length " + std::to_string(b.size()) +
                         " does not match W cols " + std::to_string(w.cols()));
  }
  Matrix y = matmul(x, w);
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += b[j];
  return y;
}

AffineGrads affine_backward(const Matrix& x, const Matrix& w, const Matrix& dy) {
  if (dy.rows() != x.rows() || dy.cols() != w.cols() || x.cols() != w.rows()) {
    throw DimensionError("affine_backward: x " + shape_str(x) + ", W " + shape_str(w) +
                         ", dy " + shape_str(dy));
  }
  AffineGrads g;
  g.dx = matmul(dy, transpose(w));
  g.dw = matmul(transpose(x), dy);
  g.db.assign(dy.cols(), 0.0);
  for (std::size_t i = 0; i < dy.rows(); ++i)
    for (std::size_t j = 0; j < dy.cols(); ++j) g.db[j] += dy(i, j);
  return g;
}

Vector stable_softmax(std::span<const double> logits) {
  if (logits.empty()) throw DimensionError("stable_softmax: empty input");
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) {
    if (std::isnan(v)) throw NumericError("stable_softmax: NaN input");
    mx = std::max(mx, v);
  }
  if (!std::isfinite(mx)) throw NumericError("stable_softmax: non-finite input");
  Vector out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  // Clamp keeps log(p) finite even when exp underflows to zero.
  constexpr double kFloor = 1e-300;
  for (double& v : out) v = std::max(v / sum, kFloor);
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    Vector p = stable_softmax(logits.row(i));
    std::copy(p.begin(), p.end(), out.row(i).begin());
  }
  return out;
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("l2_distance: lengths " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

GradCheckReport finite_diff_check(const std::function<double(std::span<const double>)>& f,
                                  std::span<const double> x,
                                  std::span<const double> analytic_grad,
                                  double h, double tol) {
  if (h <= 0.0) throw ConfigError("finite_diff_check: h must be positive");
  if (x.size() != analytic_grad.size()) {
    throw DimensionError("finite_diff_check: point and gradient lengths differ");
  }
  Vector point(x.begin(), x.end());
  GradCheckReport report;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + h;
    const double up = f(point);
    point[i] = saved - h;
    const double down = f(point);
    point[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_check: non-finite function value at coordinate " +
                         std::to_string(i));
    }
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic_grad[i]), std::abs(numeric), 1e-12});
    const double rel = std::abs(numeric - analytic_grad[i]) / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace corrbalance
