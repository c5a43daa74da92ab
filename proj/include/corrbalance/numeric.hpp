#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "corrbalance/errors.hpp"

namespace corrbalance {

using Vector = std::vector<double>;

/// Dense row-major matrix of 64-bit reals. Desk-scale only: no sparsity,
/// no views, value semantics throughout.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, Vector values);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  Vector& data() { return data_; }
  const Vector& data() const { return data_; }

  bool all_finite() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);

/// y = x W + b, b broadcast across rows.
Matrix affine_forward(const Matrix& x, const Matrix& w, const Vector& b);

struct AffineGrads {
  Matrix dx;
  Matrix dw;
  Vector db;
};

/// dx = dy Wᵀ, dW = xᵀ dy, db = column sums of dy.
AffineGrads affine_backward(const Matrix& x, const Matrix& w, const Matrix& dy);

/// Max-subtracted softmax. Entries are clamped away from exact zero so a
/// downstream log stays finite. Throws NumericError on non-finite input.
Vector stable_softmax(std::span<const double> logits);

/// Row-wise stable_softmax.
Matrix softmax_rows(const Matrix& logits);

double l2_distance(std::span<const double> a, std::span<const double> b);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  bool passed = false;
};

/// Central-difference check of an analytic gradient. Relative error uses
/// denominator max(|analytic|, |numeric|, 1e-12).
GradCheckReport finite_diff_check(const std::function<double(std::span<const double>)>& f,
                                  std::span<const double> x,
                                  std::span<const double> analytic_grad,
                                  double h, double tol);

}  // namespace corrbalance
