#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace vcfl {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix from_data(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  std::string shape_string() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ · b without materializing the transpose.
Matrix matmul_at_b(const Matrix& a, const Matrix& b);
/// a · bᵀ without materializing the transpose.
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

/// Max-shifted softmax.
std::vector<double> softmax(std::span<const double> logits);
Matrix softmax_rows(const Matrix& logits);

/// Squared Euclidean distances between the rows of x (n×d) and y (m×d),
/// summed per coordinate difference so the diagonal of (x, x) is exactly 0.
Matrix pairwise_sq_dist(const Matrix& x, const Matrix& y);
/// Elementwise square root of pairwise_sq_dist.
Matrix pairwise_dist(const Matrix& x, const Matrix& y);

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);

bool all_finite(std::span<const double> values);
/// Throws NumericError naming `what` when any entry is NaN or infinite.
void require_finite(std::span<const double> values, const std::string& what);

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central finite differences (f(x + h e_i) - f(x - h e_i)) / 2h per coordinate.
std::vector<double> finite_diff_grad(const ScalarFunction& f, std::span<const double> x,
                                     double h);

/// Largest elementwise |a - b| / max(|a|, |b|, floor).
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                          double floor = 1e-6);

}  // namespace vcfl
