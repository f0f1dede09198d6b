#pragma once

// Straight-line reference implementations used as test oracles.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vcfl/numcore.hpp"
#include "vcfl/rng.hpp"

namespace vcfl::testing {

inline Matrix random_matrix(std::uint64_t seed, std::size_t rows, std::size_t cols,
                            double scale = 1.0) {
  RngStream rng(seed, 999);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = scale * rng.normal();
  return m;
}

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

inline double pair_dist(const Matrix& x, std::size_t i, const Matrix& y, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < x.cols(); ++c) s += (x(i, c) - y(j, c)) * (x(i, c) - y(j, c));
  return std::sqrt(s);
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("vcfl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace vcfl::testing
