#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "ranking_oracle.hpp"
#include "vcfl/error.hpp"
#include "vcfl/evalkit.hpp"
#include "vcfl/trainer.hpp"

using namespace vcfl;
using namespace vcfl::testing;

namespace {

const EvalProtocol kExclude{true, false};
const EvalProtocol kKeepAll{false, false};

const SynthDataset& desk_dataset() {
  static const SynthDataset ds = [] {
    RngStream rng(1, streams::kSplit);
    return split(generate(GenConfig{}), rng);
  }();
  return ds;
}

std::string read_all(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("rank_gallery: examples") {
  const auto r = rank_gallery(Matrix{{0}}, Matrix{{5}, {1}, {3}});
  CHECK(r[0] == std::vector<std::size_t>{1, 2, 0});

  const Matrix g = random_matrix(1, 6, 4);
  Matrix q(1, 4);
  std::copy(g.row(4).begin(), g.row(4).end(), q.row(0).begin());
  CHECK(rank_gallery(q, g)[0].front() == 4u);

  // ties keep the lower index first
  CHECK(rank_gallery(Matrix{{0}}, Matrix{{1}, {-1}, {1}})[0] == std::vector<std::size_t>{0, 1, 2});
  CHECK_THROWS_AS((void)rank_gallery(Matrix{{0}}, Matrix(0, 1)), ValidationError);
}

TEST_CASE("rank_gallery matches a full-sort oracle") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Matrix q = random_matrix(seed, 4, 8);
    const Matrix g = random_matrix(seed + 100, 9, 8);
    const auto got = rank_gallery(q, g);
    for (std::size_t i = 0; i < 4; ++i) {
      std::vector<std::pair<double, std::size_t>> keyed;
      for (std::size_t j = 0; j < 9; ++j) keyed.emplace_back(pair_dist(q, i, g, j), j);
      std::sort(keyed.begin(), keyed.end());
      for (std::size_t j = 0; j < 9; ++j) CHECK(got[i][j] == keyed[j].second);
    }
  }
}

TEST_CASE("ranking is invariant under a random orthogonal transform") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::size_t d = 6;
    // Gram-Schmidt on a random square matrix
    Matrix basis = random_matrix(seed + 7, d, d);
    for (std::size_t i = 0; i < d; ++i) {
      auto ri = basis.row(i);
      for (std::size_t j = 0; j < i; ++j) {
        const double proj = dot(ri, basis.row(j));
        for (std::size_t c = 0; c < d; ++c) ri[c] -= proj * basis(j, c);
      }
      const double n = std::sqrt(squared_norm(ri));
      for (double& v : ri) v /= n;
    }
    const Matrix q = random_matrix(seed, 3, d);
    const Matrix g = random_matrix(seed + 50, 12, d);
    CHECK(rank_gallery(matmul(q, basis), matmul(g, basis)) == rank_gallery(q, g));
  }
}

TEST_CASE("cmc: examples and errors") {
  const std::vector<RankLabel> gallery{{2, 0}, {1, 1}, {3, 0}};
  const std::vector<RankLabel> one{{1, 0}};
  CHECK(cmc({{0, 1, 2}}, one, gallery, kExclude) == std::vector<double>{0, 1, 1});
  CHECK(cmc({{1, 0, 2}}, one, gallery, kExclude) == std::vector<double>{1, 1, 1});

  // the only same-identity item shares the query's camera
  const std::vector<RankLabel> same_cam{{7, 1}};
  const std::vector<RankLabel> g2{{7, 1}, {8, 0}};
  try {
    (void)cmc({{0, 1}}, same_cam, g2, kExclude);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("query 0") != std::string::npos);
  }
  CHECK(cmc({{0, 1}}, same_cam, g2, kKeepAll) == std::vector<double>{1, 1});
  CHECK_THROWS_AS((void)cmc({{0}}, same_cam, g2, kKeepAll), ValidationError);
}

TEST_CASE("average precision: examples") {
  const std::vector<RankLabel> q{{1, 0}};
  const std::vector<RankLabel> g{{1, 1}, {2, 1}, {1, 1}};
  CHECK(average_precisions({{0, 1, 2}}, q, g, kExclude)[0] == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(average_precisions({{0, 2, 1}}, q, g, kExclude)[0] == 1.0);

  std::vector<RankLabel> single(8, RankLabel{4, 1});
  single[5] = {1, 1};
  std::vector<std::size_t> order{0, 1, 2, 3, 4, 5, 6, 7};
  CHECK(average_precisions({order}, q, single, kExclude)[0] == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
  CHECK(map_score({order}, q, single, kExclude) == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("cmc and mAP equal the rational brute-force oracle on every enumerated pattern") {
  const auto patterns = enumerate_patterns();
  std::size_t checked = 0;
  for (const auto& p : patterns) {
    for (const EvalProtocol& proto : {kExclude, kKeepAll}) {
      const Matrix q = column(p.query_pos);
      const Matrix g = column(p.gallery_pos);
      const auto rankings = rank_gallery(q, g);
      CHECK(rankings == oracle_rankings(p));
      if (!oracle_valid(p, proto.exclude_same_view)) {
        CHECK_THROWS_AS((void)cmc(rankings, p.queries, p.gallery, proto), ValidationError);
        continue;
      }
      const auto curve = cmc(rankings, p.queries, p.gallery, proto);
      const auto want = oracle_cmc(p, proto.exclude_same_view);
      REQUIRE(curve.size() == want.size());
      for (std::size_t r = 0; r < curve.size(); ++r) CHECK(denotes(curve[r], want[r]));
      CHECK(curve.back() == 1.0);
      for (std::size_t r = 1; r < curve.size(); ++r) CHECK(curve[r] >= curve[r - 1]);
      const auto aps = average_precisions(rankings, p.queries, p.gallery, proto);
      const auto want_aps = oracle_aps(p, proto.exclude_same_view);
      for (std::size_t i = 0; i < aps.size(); ++i) CHECK(denotes(aps[i], want_aps[i]));
      CHECK(denotes(map_score(rankings, p.queries, p.gallery, proto), oracle_map(p, proto.exclude_same_view)));
      ++checked;
    }
  }
  CHECK(checked >= 500);
}

TEST_CASE("view_probe: uninformative and leaky features") {
  const std::size_t n = 200;
  std::vector<int> views(n);
  for (std::size_t i = 0; i < n; ++i) views[i] = static_cast<int>(i % 4);
  const double flat = view_probe(Matrix(n, 3, 0.5), views, 1);
  CHECK(flat >= 0.15);
  CHECK(flat <= 0.35);

  Matrix onehot(n, 4);
  for (std::size_t i = 0; i < n; ++i) onehot(i, views[i]) = 1.0;
  CHECK(view_probe(onehot, views, 1) == doctest::Approx(1.0));

  CHECK(view_probe(onehot, views, 2) == view_probe(onehot, views, 2));
  CHECK_THROWS_AS((void)view_probe(onehot, std::vector<int>(n, 2), 1), ValidationError);
  CHECK_THROWS_AS((void)view_probe(onehot, std::vector<int>(n - 1, 0), 1), ValidationError);
}

TEST_CASE("view_probe on raw pixel intensities of the desk dataset") {
  const auto& ds = desk_dataset();
  std::vector<int> cams;
  for (const auto& s : ds.samples) cams.push_back(s.camera);
  CHECK(view_probe(ds.all_images(), cams, 1) > 0.4);
}

TEST_CASE("evaluate: determinism, self-match and metric files") {
  const auto& ds = desk_dataset();
  TrainConfig c;
  const Trainer fresh(c, ds, nullptr);
  const auto& params = fresh.state().extractor;
  const EvalReport a = evaluate(params, ds, kExclude, 3);
  CHECK(a == evaluate(params, ds, kExclude, 3));
  CHECK(a.num_queries == ds.indices_with(SplitTag::kQuery).size());
  CHECK(a.cmc.size() == a.num_gallery);
  CHECK(a.map >= 0.0);
  CHECK(a.map <= 1.0);

  // gallery replaced by copies of the queries
  SynthDataset mirror = ds;
  std::erase_if(mirror.samples, [](const Sample& s) { return s.split == SplitTag::kGallery; });
  for (auto i : ds.indices_with(SplitTag::kQuery)) {
    Sample copy = ds.samples[i];
    copy.split = SplitTag::kGallery;
    mirror.samples.push_back(copy);
  }
  CHECK(evaluate(params, mirror, kKeepAll, 3).rank(1) == 1.0);

  const auto dir = scratch_dir("evalkit_csv");
  write_metrics_csv(a, dir / "metrics.csv");
  write_cmc_csv(a, dir / "cmc.csv");
  const std::string metrics = read_all(dir / "metrics.csv");
  CHECK(metrics.rfind("metric,value\nrank1,", 0) == 0);
  for (const char* key : {"\nrank5,", "\nrank10,", "\nmAP,", "\nview_probe_acc,"})
    CHECK(metrics.find(key) != std::string::npos);
  CHECK(read_all(dir / "cmc.csv").rfind("rank,value\n1,", 0) == 0);

  SynthDataset unsplit = ds;
  for (auto& s : unsplit.samples) s.split = SplitTag::kTrain;
  CHECK_THROWS_AS((void)evaluate(params, unsplit, kExclude, 3), ValidationError);
}

TEST_CASE("training raises cross-view rank-1 over the untrained extractor") {
  const auto& ds = desk_dataset();
  for (std::uint64_t seed : {1, 2, 3}) {
    TrainConfig c;
    c.seed = seed;
    c.steps = 200;
    c.flags = AblationFlags::baseline();
    const Trainer fresh(c, ds, nullptr);
    const auto trained = train(c, ds, nullptr);
    const double before = evaluate(fresh.state().extractor, ds, kExclude, seed).rank(1);
    const double after = evaluate(trained.final_state.extractor, ds, kExclude, seed).rank(1);
    CHECK(after > before);
  }
}
