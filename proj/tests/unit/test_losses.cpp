#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "triplet_oracle.hpp"
#include "vcfl/error.hpp"
#include "vcfl/losses.hpp"
#include "vcfl/rng.hpp"

using namespace vcfl;
using vcfl::testing::random_matrix;

namespace {

std::vector<std::uint32_t> pk_ids(std::size_t p, std::size_t k) {
  std::vector<std::uint32_t> ids;
  for (std::size_t i = 0; i < p; ++i) ids.insert(ids.end(), k, static_cast<std::uint32_t>(10 + 7 * i));
  return ids;
}

std::vector<double> grad_of(const LossResult& r) {
  return {r.feature_grad.values().begin(), r.feature_grad.values().end()};
}

Matrix reshape(std::span<const double> x, std::size_t rows, std::size_t cols) {
  return Matrix::from_data(rows, cols, {x.begin(), x.end()});
}

CenterTable table(const Matrix& centers, std::vector<std::uint32_t> ids, double alpha = 0.5) {
  CenterTable t;
  t.centers = centers;
  t.identities = std::move(ids);
  t.alpha = alpha;
  return t;
}

}  // namespace

TEST_CASE("batch_hard_select: 1-d worked example") {
  const Matrix f{{0}, {1}, {10}, {12}};
  const std::vector<std::uint32_t> ids{0, 0, 1, 1};
  const auto s = batch_hard_select(f, ids);
  CHECK(s.positive[0] == 1u);
  CHECK(s.positive_dist[0] == 1.0);
  CHECK(s.negative[0] == 2u);
  CHECK(s.negative_dist[0] == 10.0);
  CHECK(s.positive[3] == 2u);
  CHECK(s.negative_dist[3] == 11.0);
}

TEST_CASE("batch_hard_select: identical features") {
  const Matrix f(6, 3, 0.7);
  const auto s = batch_hard_select(f, pk_ids(3, 2));
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(s.positive_dist[i] == 0.0);
    CHECK(s.negative_dist[i] == 0.0);
  }
  // ties go to the lowest index
  CHECK(s.positive[0] == 1u);
  CHECK(s.positive[1] == 0u);
  CHECK(s.negative[0] == 2u);
  CHECK(s.negative[2] == 0u);
}

TEST_CASE("batch_hard_select matches exhaustive enumeration") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Matrix f = random_matrix(seed, 12, 5);
    const auto ids = pk_ids(4, 3);
    const auto got = batch_hard_select(f, ids);
    const auto want = vcfl::testing::exhaustive_select(f, ids);
    CHECK(got.positive == want.positive);
    CHECK(got.negative == want.negative);
    for (std::size_t i = 0; i < 12; ++i) {
      CHECK(std::abs(got.positive_dist[i] - want.positive_dist[i]) <= 1e-12);
      CHECK(std::abs(got.negative_dist[i] - want.negative_dist[i]) <= 1e-12);
    }
  }
}

TEST_CASE("batch_hard_select is invariant to batch order") {
  const Matrix f = random_matrix(3, 12, 4);
  const auto ids = pk_ids(4, 3);
  const auto base = batch_hard_select(f, ids);
  std::vector<std::size_t> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  RngStream rng(1, 1);
  for (std::size_t i = 11; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  Matrix g(12, 4);
  std::vector<std::uint32_t> gid(12);
  for (std::size_t i = 0; i < 12; ++i) {
    std::copy(f.row(perm[i]).begin(), f.row(perm[i]).end(), g.row(i).begin());
    gid[i] = ids[perm[i]];
  }
  const auto shuffled = batch_hard_select(g, gid);
  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(shuffled.positive_dist[i] == doctest::Approx(base.positive_dist[perm[i]]).epsilon(1e-14));
    CHECK(shuffled.negative_dist[i] == doctest::Approx(base.negative_dist[perm[i]]).epsilon(1e-14));
    CHECK(perm[shuffled.negative[i]] == base.negative[perm[i]]);
  }
}

TEST_CASE("batch_hard_select errors") {
  try {
    (void)batch_hard_select(Matrix(3, 2), std::vector<std::uint32_t>{1, 1, 42});
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("42") != std::string::npos);
  }
  CHECK_THROWS_AS((void)batch_hard_select(Matrix(2, 2), std::vector<std::uint32_t>{1, 1}),
                  ValidationError);
}

TEST_CASE("triplet_loss: clamped and active hinge terms") {
  // anchor 0 at origin; positive at 5, negative at 10 on one axis
  TripletSelection s;
  s.positive = {1};
  s.positive_dist = {5};
  s.negative = {2};
  s.negative_dist = {10};
  CHECK(triplet_loss(Matrix{{0, 0}, {5, 0}, {10, 0}}, s, 0.3).loss == 0.0);

  TripletSelection t;
  t.positive = {1};
  t.positive_dist = {2};
  t.negative = {2};
  t.negative_dist = {1};
  const auto r = triplet_loss(Matrix{{0, 0}, {2, 0}, {1, 0}}, t, 0.3);
  CHECK(r.loss == doctest::Approx(1.3).epsilon(1e-15));
  // d(dp - dn)/d anchor = -(p - a)/dp + (n - a)/dn = (-1, 0) + (1, 0) = (0, 0)
  CHECK(r.feature_grad(1, 0) == doctest::Approx(1.0));
  CHECK(r.feature_grad(2, 0) == doctest::Approx(-1.0));
  CHECK(r.feature_grad(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("triplet_loss is non-negative and zero exactly when every margin holds") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Matrix f = random_matrix(seed, 8, 3);
    const auto ids = pk_ids(4, 2);
    const auto sel = batch_hard_select(f, ids);
    for (const double m : {0.0, 0.3, 2.0}) {
      const double loss = triplet_loss(f, sel, m).loss;
      CHECK(loss >= 0.0);
      bool all_hold = true;
      for (std::size_t i = 0; i < 8; ++i)
        all_hold = all_hold && sel.negative_dist[i] >= sel.positive_dist[i] + m;
      CHECK((loss == 0.0) == all_hold);
    }
  }
}

TEST_CASE("triplet_loss gradient vs finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix f = random_matrix(seed + 40, 6, 4);
    const auto ids = pk_ids(3, 2);
    const auto analytic = triplet_loss(f, batch_hard_select(f, ids), 1.0);
    const auto numeric = finite_diff_grad(
        [&](std::span<const double> x) {
          const Matrix g = reshape(x, 6, 4);
          return triplet_loss(g, batch_hard_select(g, ids), 1.0).loss;
        },
        f.values(), 1e-5);
    CHECK(max_relative_error(grad_of(analytic), numeric) < 1e-4);
  }
}

TEST_CASE("triplet_loss: zero-distance pairs use a zero subgradient") {
  const Matrix f(4, 2, 1.0);
  const auto r = triplet_loss(f, batch_hard_select(f, pk_ids(2, 2)), 0.3);
  CHECK(r.loss == doctest::Approx(0.3));
  CHECK(all_finite(r.feature_grad.values()));
  for (double v : r.feature_grad.values()) CHECK(v == 0.0);
}

TEST_CASE("center_loss: examples and gradient") {
  const CenterTable t = table(Matrix{{0, 0}}, {3});
  const auto single = center_loss(Matrix{{1, 0}}, std::vector<std::uint32_t>{3}, t);
  CHECK(single.loss == 0.5);
  CHECK(single.feature_grad == Matrix{{1, 0}});

  const auto zero = center_loss(Matrix{{0, 0}}, std::vector<std::uint32_t>{3}, t);
  CHECK(zero.loss == 0.0);
  CHECK(zero.feature_grad == Matrix{{0, 0}});

  CHECK_THROWS_AS((void)center_loss(Matrix{{0, 0}}, std::vector<std::uint32_t>{4}, t),
                  ValidationError);

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix f = random_matrix(seed, 6, 3);
    const std::vector<std::uint32_t> ids{1, 1, 2, 2, 5, 5};
    const CenterTable c = table(random_matrix(seed + 9, 3, 3), {1, 2, 5});
    const auto analytic = center_loss(f, ids, c);
    const auto numeric = finite_diff_grad(
        [&](std::span<const double> x) { return center_loss(reshape(x, 6, 3), ids, c).loss; },
        f.values(), 1e-5);
    CHECK(max_relative_error(grad_of(analytic), numeric) < 1e-4);

    // descent: a small gradient step strictly lowers the loss
    Matrix stepped = f;
    for (std::size_t i = 0; i < f.size(); ++i)
      stepped.values()[i] -= 1e-3 * analytic.feature_grad.values()[i];
    CHECK(center_loss(stepped, ids, c).loss < analytic.loss);
  }
}

TEST_CASE("update_centers: worked examples") {
  CenterTable full = table(Matrix{{0, 0}, {9, 9}}, {1, 2}, 1.0);
  update_centers(full, Matrix{{3, -1}}, std::vector<std::uint32_t>{1});
  CHECK(full.centers == Matrix{{3, -1}, {9, 9}});

  CenterTable frozen = table(Matrix{{0, 0}}, {1}, 0.0);
  update_centers(frozen, Matrix{{3, -1}}, std::vector<std::uint32_t>{1});
  CHECK(frozen.centers == Matrix{{0, 0}});

  CenterTable half = table(Matrix{{0, 0}}, {1}, 0.5);
  update_centers(half, Matrix{{2, 0}, {4, 0}}, std::vector<std::uint32_t>{1, 1});
  CHECK(half.centers == Matrix{{1.5, 0}});
}

TEST_CASE("update_centers contracts toward the batch mean by (1 - alpha)") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const double alpha = 0.05 * double(seed);
    CenterTable t = table(random_matrix(seed, 2, 4), {1, 2}, alpha);
    const Matrix before = t.centers;
    const Matrix f = random_matrix(seed + 50, 3, 4);
    update_centers(t, f, std::vector<std::uint32_t>{1, 1, 1});
    double old_dist = 0, new_dist = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      const double mean = (f(0, j) + f(1, j) + f(2, j)) / 3.0;
      old_dist += (before(0, j) - mean) * (before(0, j) - mean);
      new_dist += (t.centers(0, j) - mean) * (t.centers(0, j) - mean);
      CHECK(t.centers(1, j) == before(1, j));  // absent identity untouched
    }
    CHECK(std::sqrt(new_dist) == doctest::Approx((1 - alpha) * std::sqrt(old_dist)).epsilon(1e-12));
  }
}

TEST_CASE("make_center_table averages each identity") {
  const auto t = make_center_table(Matrix{{1, 1}, {3, 5}, {10, 0}}, std::vector<std::uint32_t>{7, 7, 2}, 0.5);
  CHECK(t.identities == std::vector<std::uint32_t>{2, 7});
  CHECK(t.centers == Matrix{{10, 0}, {2, 3}});
  CHECK(t.row_of(7) == 1u);
  CHECK_FALSE(t.contains(3));
}

TEST_CASE("sift_guided_loss: examples") {
  const Matrix g{{1, 0}, {0, 1}};
  CHECK(sift_guided_loss(Matrix{{3, 0}, {0, 0.5}}, g).loss == 0.0);
  CHECK(sift_guided_loss(Matrix{{0, 2}, {5, 0}}, g).loss == doctest::Approx(2.0));
  CHECK_THROWS_AS((void)sift_guided_loss(Matrix(2, 3), g), ValidationError);
}

TEST_CASE("sift_guided_loss: gradient through the normalization") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix f = random_matrix(seed, 5, 6);
    Matrix g = random_matrix(seed + 20, 5, 6);
    for (std::size_t i = 0; i < 5; ++i) {
      const double n = std::sqrt(squared_norm(g.row(i)));
      for (double& v : g.row(i)) v = std::abs(v) / n;
    }
    const auto analytic = sift_guided_loss(f, g);
    const auto numeric = finite_diff_grad(
        [&](std::span<const double> x) { return sift_guided_loss(reshape(x, 5, 6), g).loss; },
        f.values(), 1e-5);
    CHECK(max_relative_error(grad_of(analytic), numeric) < 1e-4);
    CHECK(analytic.zero_norm_rows == 0u);
  }
}

TEST_CASE("sift_guided_loss: zero-norm rows get a zero subgradient and are counted") {
  const auto r = sift_guided_loss(Matrix{{0, 0}, {1, 0}}, Matrix{{1, 0}, {0, 1}});
  CHECK(r.zero_norm_rows == 1u);
  CHECK(r.feature_grad(0, 0) == 0.0);
  CHECK(r.feature_grad(0, 1) == 0.0);
  CHECK(all_finite(r.feature_grad.values()));
}

TEST_CASE("view_ce: examples") {
  const Matrix uniform(3, 5, 0.2);
  CHECK(view_ce(uniform, std::vector<int>{0, 2, 3}, ViewMode::kPlus) == doctest::Approx(std::log(5.0)));
  CHECK(view_ce(uniform, {}, ViewMode::kMinus) == doctest::Approx(std::log(5.0)));
  CHECK(view_ce(uniform, {}, ViewMode::kUniform) == doctest::Approx(std::log(5.0)));
  const Matrix onehot{{0, 1, 0, 0, 0}};
  CHECK(view_ce(onehot, std::vector<int>{1}, ViewMode::kPlus) == 0.0);

  const Matrix two{{0.1, 0.2, 0.3, 0.1, 0.3}, {0.05, 0.05, 0.1, 0.6, 0.2}};
  CHECK(view_ce(two, std::vector<int>{2, 3}, ViewMode::kPlus) ==
        doctest::Approx(-(std::log(0.3) + std::log(0.6)) / 2).epsilon(1e-15));
  CHECK(view_ce(two, {}, ViewMode::kMinus) ==
        doctest::Approx(-(std::log(0.3) + std::log(0.2)) / 2).epsilon(1e-15));
  const double u0 = std::log(0.1) + std::log(0.2) + std::log(0.3) + std::log(0.1);
  const double u1 = std::log(0.05) + std::log(0.05) + std::log(0.1) + std::log(0.6);
  CHECK(view_ce(two, {}, ViewMode::kUniform) == doctest::Approx(-(u0 + u1) / 8).epsilon(1e-15));
  CHECK_THROWS_AS((void)view_ce(two, std::vector<int>{4, 4}, ViewMode::kPlus), ValidationError);
}

TEST_CASE("combined_feature_loss: zero weights, single head and full gradient") {
  const Matrix f = random_matrix(5, 6, 4);
  const auto ids = pk_ids(3, 2);
  const LossResult trip = triplet_loss(f, batch_hard_select(f, ids), 0.3);
  const CenterTable c = table(random_matrix(6, 3, 4), {10, 17, 24});
  const LossResult cen = center_loss(f, ids, c);

  LossWeights zero{0, 0, 0, 0, 0.3};
  const auto z = combined_feature_loss({&trip, &cen, nullptr, nullptr}, zero, 6, 4);
  CHECK(z.loss == 0.0);
  for (double v : z.feature_grad.values()) CHECK(v == 0.0);

  LossWeights only_trip{0, 0, 0, 1.0, 0.3};
  const auto t = combined_feature_loss({&trip, &cen, nullptr, nullptr}, only_trip, 6, 4);
  CHECK(t.loss == trip.loss);
  CHECK(t.feature_grad == trip.feature_grad);

  Matrix g(6, 4);
  for (std::size_t i = 0; i < 6; ++i) g(i, i % 4) = 1.0;
  const LossWeights weights;  // defaults
  auto total = [&](const Matrix& x) {
    const LossResult a = triplet_loss(x, batch_hard_select(x, ids), weights.margin);
    const LossResult b = center_loss(x, ids, c);
    const SiftGuidedResult s = sift_guided_loss(x, g);
    // a fixed quadratic stands in for the frozen-classifier term
    LossResult m{0.5 * squared_norm(x.values()), x};
    return combined_feature_loss({&a, &b, &s, &m}, weights, 6, 4);
  };
  const auto analytic = total(f);
  const auto numeric = finite_diff_grad(
      [&](std::span<const double> x) { return total(reshape(x, 6, 4)).loss; }, f.values(), 1e-5);
  CHECK(max_relative_error(grad_of(analytic), numeric) < 1e-4);
}

TEST_CASE("LossWeights defaults and validation") {
  const LossWeights w;
  CHECK(w.adversarial == 0.5);
  CHECK(w.center == 1e-4);
  CHECK(w.sift == 0.1);
  CHECK(w.triplet == 1.0);
  CHECK(w.margin == 0.3);
  LossWeights bad = w;
  bad.center = -1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}
