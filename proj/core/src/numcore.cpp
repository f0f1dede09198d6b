#include "vcfl/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "vcfl/error.hpp"
#include "vcfl/parallel.hpp"

namespace vcfl {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ValidationError("Matrix: ragged initializer list");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_data(std::size_t rows, std::size_t cols, std::vector<double> data) {
  if (data.size() != rows * cols) {
    std::ostringstream os;
    os << "Matrix: data length " << data.size() << " does not match " << rows << "x" << cols;
    throw ValidationError(os.str());
  }
  Matrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.data_ = std::move(data);
  return m;
}

std::string Matrix::shape_string() const {
  std::ostringstream os;
  os << rows_ << "x" << cols_;
  return os.str();
}

namespace {

void check_product(const char* op, const Matrix& a, const Matrix& b, std::size_t lhs,
                   std::size_t rhs) {
  if (lhs != rhs) {
    std::ostringstream os;
    os << op << ": dimension mismatch between " << a.shape_string() << " and "
       << b.shape_string();
    throw ValidationError(os.str());
  }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_product("matmul", a, b, a.cols(), b.rows());
  Matrix c(a.rows(), b.cols());
  parallel_for(a.rows(), a.cols() * b.cols(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto out = c.row(i);
      for (std::size_t k = 0; k < a.cols(); ++k) {
        const double aik = a(i, k);
        if (aik == 0.0) continue;
        auto brow = b.row(k);
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += aik * brow[j];
      }
    }
  });
  return c;
}

Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
  check_product("matmul_at_b", a, b, a.rows(), b.rows());
  Matrix c(a.cols(), b.cols());
  parallel_for(a.cols(), a.rows() * b.cols(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t n = 0; n < a.rows(); ++n) {
      auto brow = b.row(n);
      for (std::size_t i = begin; i < end; ++i) {
        const double ani = a(n, i);
        if (ani == 0.0) continue;
        auto out = c.row(i);
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += ani * brow[j];
      }
    }
  });
  return c;
}

Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
  check_product("matmul_a_bt", a, b, a.cols(), b.cols());
  Matrix c(a.rows(), b.rows());
  parallel_for(a.rows(), a.cols() * b.rows(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto arow = a.row(i);
      for (std::size_t j = 0; j < b.rows(); ++j) c(i, j) = dot(arow, b.row(j));
    }
  });
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double shift = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - shift);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix probs(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto p = softmax(logits.row(i));
    std::copy(p.begin(), p.end(), probs.row(i).begin());
  }
  return probs;
}

Matrix pairwise_sq_dist(const Matrix& x, const Matrix& y) {
  if (x.cols() != y.cols()) {
    throw ValidationError("pairwise_sq_dist: feature dimension mismatch between " +
                          x.shape_string() + " and " + y.shape_string());
  }
  Matrix d(x.rows(), y.rows());
  parallel_for(x.rows(), y.rows() * x.cols(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto xi = x.row(i);
      for (std::size_t j = 0; j < y.rows(); ++j) {
        auto yj = y.row(j);
        double s = 0.0;
        for (std::size_t k = 0; k < xi.size(); ++k) {
          const double diff = xi[k] - yj[k];
          s += diff * diff;
        }
        d(i, j) = s;
      }
    }
  });
  return d;
}

Matrix pairwise_dist(const Matrix& x, const Matrix& y) {
  Matrix d = pairwise_sq_dist(x, y);
  for (double& v : d.values()) v = std::sqrt(v);
  return d;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void require_finite(std::span<const double> values, const std::string& what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      std::ostringstream os;
      os << what << ": non-finite value " << values[i] << " at flat index " << i;
      throw NumericError(os.str());
    }
  }
}

std::vector<double> finite_diff_grad(const ScalarFunction& f, std::span<const double> x,
                                     double h) {
  if (!(h > 0.0)) throw ValidationError("finite_diff_grad: step h must be positive");
  std::vector<double> point(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + h;
    const double plus = f(point);
    point[i] = saved - h;
    const double minus = f(point);
    point[i] = saved;
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      std::ostringstream os;
      os << "finite_diff_grad: non-finite function value at coordinate " << i;
      throw NumericError(os.str());
    }
    grad[i] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                          double floor) {
  if (analytic.size() != numeric.size())
    throw ValidationError("max_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

}  // namespace vcfl
