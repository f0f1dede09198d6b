#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "vcfl/error.hpp"
#include "vcfl/numcore.hpp"
#include "vcfl/parallel.hpp"

using namespace vcfl;
using vcfl::testing::random_matrix;

TEST_CASE("matmul: identity and hand-sized products") {
  const Matrix a = random_matrix(1, 3, 4);
  CHECK(matmul(Matrix::identity(3), a) == a);
  CHECK(matmul(Matrix{{1, 2}, {3, 4}}, Matrix{{0}, {1}}) == Matrix{{2}, {4}});
}

TEST_CASE("matmul agrees with a naive triple loop") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Matrix a = random_matrix(seed, 5, 7);
    const Matrix b = random_matrix(seed + 100, 7, 3);
    CHECK(vcfl::testing::max_abs_diff(matmul(a, b), vcfl::testing::naive_matmul(a, b)) <= 1e-12);
    CHECK(vcfl::testing::max_abs_diff(matmul_at_b(transpose(a), b),
                                      vcfl::testing::naive_matmul(a, b)) <= 1e-12);
    CHECK(vcfl::testing::max_abs_diff(matmul_a_bt(a, transpose(b)),
                                      vcfl::testing::naive_matmul(a, b)) <= 1e-12);
  }
}

TEST_CASE("matmul dimension mismatch names both shapes") {
  try {
    (void)matmul(Matrix(2, 3), Matrix(4, 5));
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("4x5") != std::string::npos);
  }
}

TEST_CASE("matmul results do not depend on the worker count") {
  const Matrix a = random_matrix(3, 200, 150);
  const Matrix b = random_matrix(4, 150, 90);
  set_worker_count(1);
  const Matrix one = matmul(a, b);
  set_worker_count(4);
  const Matrix four = matmul(a, b);
  const Matrix four_bt = matmul_a_bt(a, transpose(b));
  set_worker_count(1);
  CHECK(one == four);
  CHECK(matmul_a_bt(a, transpose(b)) == four_bt);
}

TEST_CASE("softmax examples") {
  const auto u = softmax(std::vector<double>(5, 0.0));
  for (double p : u) CHECK(p == doctest::Approx(0.2).epsilon(1e-15));

  const auto p = softmax(std::vector<double>{std::log(1.0), std::log(2.0), std::log(3.0)});
  CHECK(std::abs(p[0] - 1.0 / 6) < 1e-12);
  CHECK(std::abs(p[1] - 2.0 / 6) < 1e-12);
  CHECK(std::abs(p[2] - 3.0 / 6) < 1e-12);
}

TEST_CASE("softmax sums to one and ignores constant shifts") {
  RngStream rng(5, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(5);
    for (double& v : x) v = 20.0 * rng.normal();
    const double c = 100.0 * rng.normal();
    std::vector<double> shifted = x;
    for (double& v : shifted) v += c;
    const auto p = softmax(x);
    const auto q = softmax(shifted);
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      sum += p[i];
      CHECK(p[i] >= 0.0);
      CHECK(std::abs(p[i] - q[i]) <= 1e-12);
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("softmax is finite for extreme logits") {
  const auto p = softmax(std::vector<double>{1000.0, -1000.0, 0.0});
  CHECK(p[0] == doctest::Approx(1.0));
  CHECK(all_finite(p));
}

TEST_CASE("pairwise_sq_dist examples") {
  const Matrix x{{1.5, -2.0}};
  CHECK(pairwise_sq_dist(x, x) == Matrix{{0.0}});
  CHECK(pairwise_sq_dist(Matrix{{0, 0}}, Matrix{{3, 4}}) == Matrix{{25.0}});
  CHECK(pairwise_dist(Matrix{{0, 0}}, Matrix{{3, 4}}) == Matrix{{5.0}});
  CHECK_THROWS_AS((void)pairwise_sq_dist(Matrix(2, 3), Matrix(2, 4)), ValidationError);
}

TEST_CASE("pairwise_sq_dist matches a per-pair loop and is symmetric with zero diagonal") {
  const Matrix x = random_matrix(8, 6, 4);
  const Matrix y = random_matrix(9, 5, 4);
  const Matrix d = pairwise_sq_dist(x, y);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      const double ref = vcfl::testing::pair_dist(x, i, y, j);
      CHECK(std::abs(d(i, j) - ref * ref) <= 1e-10);
      CHECK(d(i, j) >= 0.0);
    }
  const Matrix s = pairwise_sq_dist(x, x);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(s(i, i) == 0.0);
    for (std::size_t j = 0; j < 6; ++j) CHECK(s(i, j) == s(j, i));
  }
}

TEST_CASE("finite_diff_grad examples") {
  const std::vector<double> x{1.0, 2.0};
  const auto g = finite_diff_grad([](std::span<const double> v) { return v[0] * v[0] + v[1] * v[1]; },
                                  x, 1e-5);
  CHECK(std::abs(g[0] - 2.0) < 1e-6);
  CHECK(std::abs(g[1] - 4.0) < 1e-6);

  const auto z = finite_diff_grad([](std::span<const double>) { return 3.0; }, x, 1e-5);
  CHECK(z == std::vector<double>{0.0, 0.0});

  const auto p = finite_diff_grad([](std::span<const double> v) { return v[0] * v[1]; },
                                  std::vector<double>{3.0, 5.0}, 1e-5);
  CHECK(std::abs(p[0] - 5.0) < 1e-8);
  CHECK(std::abs(p[1] - 3.0) < 1e-8);
}

TEST_CASE("finite_diff_grad error paths") {
  const std::vector<double> x{0.0};
  CHECK_THROWS_AS((void)finite_diff_grad([](std::span<const double>) { return 0.0; }, x, 0.0),
                  ValidationError);
  CHECK_THROWS_AS(
      (void)finite_diff_grad([](std::span<const double> v) { return 1.0 / (v[0] - 1e-6); }, x,
                             1e-6),
      NumericError);
}

TEST_CASE("max_relative_error uses the floor for tiny values") {
  CHECK(max_relative_error(std::vector<double>{1.0, 0.0}, std::vector<double>{1.0, 1e-12}) ==
        doctest::Approx(1e-6));
  CHECK(max_relative_error(std::vector<double>{2.0}, std::vector<double>{1.0}) == 0.5);
}

TEST_CASE("require_finite rejects NaN and infinity") {
  CHECK_NOTHROW(require_finite(std::vector<double>{1.0, 2.0}, "x"));
  CHECK_THROWS_AS(require_finite(std::vector<double>{1.0, std::nan("")}, "x"), NumericError);
  CHECK_THROWS_AS(require_finite(std::vector<double>{INFINITY}, "x"), NumericError);
}

TEST_CASE("Matrix construction checks") {
  CHECK_THROWS_AS((Matrix{{1, 2}, {3}}), ValidationError);
  CHECK_THROWS_AS((void)Matrix::from_data(2, 2, {1, 2, 3}), ValidationError);
  CHECK(Matrix(2, 3).shape_string() == "2x3");
}
