#include "vcfl/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "vcfl/error.hpp"
#include "vcfl/optim.hpp"
#include "vcfl/rng.hpp"

namespace vcfl {

double EvalReport::rank(std::size_t r) const {
  if (cmc.empty() || r == 0) return 0.0;
  return cmc[std::min(r, cmc.size()) - 1];
}

std::vector<std::vector<std::size_t>> rank_gallery(const Matrix& queries, const Matrix& gallery) {
  if (gallery.rows() == 0) throw ValidationError("rank_gallery: empty gallery");
  const Matrix dist = pairwise_sq_dist(queries, gallery);
  std::vector<std::vector<std::size_t>> out(queries.rows());
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    auto& order = out[q];
    order.resize(gallery.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dist(q, a) < dist(q, b); });
  }
  return out;
}

namespace {

bool excluded(const RankLabel& q, const RankLabel& g, const EvalProtocol& p) {
  return p.exclude_same_view && q.identity == g.identity && q.camera == g.camera;
}

void check_inputs(const std::vector<std::vector<std::size_t>>& rankings,
                  std::span<const RankLabel> queries, std::span<const RankLabel> gallery) {
  if (rankings.size() != queries.size())
    throw ValidationError("ranking metrics: one ranking per query required");
  for (const auto& r : rankings)
    if (r.size() != gallery.size())
      throw ValidationError("ranking metrics: ranking length differs from gallery size");
}

[[noreturn]] void no_positive(std::size_t q, const RankLabel& label) {
  std::ostringstream os;
  os << "query " << q << " (identity " << label.identity << ", camera " << int(label.camera)
     << ") has no valid gallery match after exclusions";
  throw ValidationError(os.str());
}

}  // namespace

std::vector<double> cmc(const std::vector<std::vector<std::size_t>>& rankings,
                        std::span<const RankLabel> queries, std::span<const RankLabel> gallery,
                        const EvalProtocol& protocol) {
  check_inputs(rankings, queries, gallery);
  std::vector<std::size_t> hits(gallery.size(), 0);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    std::size_t rank = 0;
    bool found = false;
    for (std::size_t g : rankings[q]) {
      if (excluded(queries[q], gallery[g], protocol)) continue;
      if (gallery[g].identity == queries[q].identity) {
        found = true;
        break;
      }
      ++rank;
    }
    if (!found) no_positive(q, queries[q]);
    ++hits[rank];
  }
  std::vector<double> curve(gallery.size());
  std::size_t cumulative = 0;
  for (std::size_t r = 0; r < curve.size(); ++r) {
    cumulative += hits[r];
    curve[r] = static_cast<double>(cumulative) / static_cast<double>(queries.size());
  }
  return curve;
}

std::vector<double> average_precisions(const std::vector<std::vector<std::size_t>>& rankings,
                                       std::span<const RankLabel> queries,
                                       std::span<const RankLabel> gallery,
                                       const EvalProtocol& protocol) {
  check_inputs(rankings, queries, gallery);
  std::vector<double> aps(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    std::size_t rank = 0, positives = 0;
    double precision_sum = 0.0;
    for (std::size_t g : rankings[q]) {
      if (excluded(queries[q], gallery[g], protocol)) continue;
      ++rank;
      if (gallery[g].identity == queries[q].identity) {
        ++positives;
        precision_sum += static_cast<double>(positives) / static_cast<double>(rank);
      }
    }
    if (positives == 0) no_positive(q, queries[q]);
    aps[q] = precision_sum / static_cast<double>(positives);
  }
  return aps;
}

double map_score(const std::vector<std::vector<std::size_t>>& rankings,
                 std::span<const RankLabel> queries, std::span<const RankLabel> gallery,
                 const EvalProtocol& protocol) {
  const auto aps = average_precisions(rankings, queries, gallery, protocol);
  if (aps.empty()) return 0.0;
  double s = 0.0;
  for (double ap : aps) s += ap;
  return s / static_cast<double>(aps.size());
}

double view_probe(const Matrix& features, std::span<const int> views, std::uint64_t seed,
                  const ProbeConfig& config) {
  const std::size_t n = features.rows();
  if (views.size() != n) throw ValidationError("view_probe: one view label per feature row required");
  const std::set<int> distinct(views.begin(), views.end());
  if (distinct.size() < 2) throw ValidationError("view_probe: at least two views must be present");
  for (int v : distinct)
    if (v < 0 || v >= static_cast<int>(kNumViews)) throw ValidationError("view_probe: view label out of range");

  RngStream rng(seed, streams::kProbe);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const std::size_t n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(config.train_fraction * static_cast<double>(n))), 1,
      n - 1);

  // Standardize with training-split statistics.
  const std::size_t d = features.cols();
  std::vector<double> mean(d, 0.0), stddev(d, 0.0);
  for (std::size_t i = 0; i < n_train; ++i) {
    auto f = features.row(order[i]);
    for (std::size_t j = 0; j < d; ++j) mean[j] += f[j];
  }
  for (double& m : mean) m /= static_cast<double>(n_train);
  for (std::size_t i = 0; i < n_train; ++i) {
    auto f = features.row(order[i]);
    for (std::size_t j = 0; j < d; ++j) stddev[j] += (f[j] - mean[j]) * (f[j] - mean[j]);
  }
  for (double& s : stddev) s = std::sqrt(s / static_cast<double>(n_train));
  auto standardized = [&](std::size_t row) {
    std::vector<double> x(d);
    auto f = features.row(row);
    for (std::size_t j = 0; j < d; ++j) x[j] = stddev[j] > 1e-12 ? (f[j] - mean[j]) / stddev[j] : 0.0;
    return x;
  };
  Matrix x_train(n_train, d), x_test(n - n_train, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = standardized(order[i]);
    auto dst = i < n_train ? x_train.row(i) : x_test.row(i - n_train);
    std::copy(x.begin(), x.end(), dst.begin());
  }

  // Linear softmax over the 4 views, full-batch Adam from zero weights.
  const std::size_t classes = kNumViews;
  std::vector<double> weights(d * classes, 0.0), bias(classes, 0.0);
  std::vector<double> mw(weights.size(), 0.0), vw(weights.size(), 0.0);
  std::vector<double> mb(classes, 0.0), vb(classes, 0.0);
  std::vector<double> gw(weights.size()), gb(classes);
  AdamConfig adam;
  std::vector<double> logits(classes);
  for (std::size_t it = 1; it <= config.iterations; ++it) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (std::size_t i = 0; i < n_train; ++i) {
      auto x = x_train.row(i);
      for (std::size_t c = 0; c < classes; ++c) {
        double z = bias[c];
        for (std::size_t j = 0; j < d; ++j) z += x[j] * weights[j * classes + c];
        logits[c] = z;
      }
      auto p = softmax(logits);
      p[static_cast<std::size_t>(views[order[i]])] -= 1.0;
      for (std::size_t c = 0; c < classes; ++c) {
        const double g = p[c] / static_cast<double>(n_train);
        gb[c] += g;
        for (std::size_t j = 0; j < d; ++j) gw[j * classes + c] += x[j] * g;
      }
    }
    adam_step(weights, gw, config.learning_rate, adam, mw, vw, it);
    adam_step(bias, gb, config.learning_rate, adam, mb, vb, it);
  }

  std::size_t correct = 0;
  for (std::size_t i = 0; i < x_test.rows(); ++i) {
    auto x = x_test.row(i);
    std::size_t best = 0;
    double best_z = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c) {
      double z = bias[c];
      for (std::size_t j = 0; j < d; ++j) z += x[j] * weights[j * classes + c];
      if (z > best_z) {
        best_z = z;
        best = c;
      }
    }
    if (static_cast<int>(best) == views[order[n_train + i]]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(x_test.rows());
}

namespace {

void normalize_rows(Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    const double n = std::sqrt(squared_norm(r));
    if (n > 0.0)
      for (double& v : r) v /= n;
  }
}

}  // namespace

EvalReport evaluate(const ExtractorParams& params, const SynthDataset& dataset,
                    const EvalProtocol& protocol, std::uint64_t seed) {
  const auto query_idx = dataset.indices_with(SplitTag::kQuery);
  const auto gallery_idx = dataset.indices_with(SplitTag::kGallery);
  if (query_idx.empty() || gallery_idx.empty())
    throw ValidationError("evaluate: dataset has no query/gallery split");

  const Matrix all = extractor_forward(params, dataset.all_images()).features;
  auto gather = [&](const std::vector<std::size_t>& idx) {
    Matrix m(idx.size(), all.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
      std::copy(all.row(idx[i]).begin(), all.row(idx[i]).end(), m.row(i).begin());
    if (protocol.normalize_features) normalize_rows(m);
    return m;
  };
  auto labels = [&](const std::vector<std::size_t>& idx) {
    std::vector<RankLabel> out;
    for (auto i : idx) out.push_back({dataset.samples[i].identity, dataset.samples[i].camera});
    return out;
  };

  const Matrix q = gather(query_idx);
  const Matrix g = gather(gallery_idx);
  const auto q_labels = labels(query_idx);
  const auto g_labels = labels(gallery_idx);
  const auto rankings = rank_gallery(q, g);

  EvalReport report;
  report.num_queries = q.rows();
  report.num_gallery = g.rows();
  report.cmc = cmc(rankings, q_labels, g_labels, protocol);
  report.average_precisions = average_precisions(rankings, q_labels, g_labels, protocol);
  report.map = 0.0;
  for (double ap : report.average_precisions) report.map += ap;
  report.map /= static_cast<double>(report.average_precisions.size());

  std::vector<int> cameras;
  for (const auto& s : dataset.samples) cameras.push_back(s.camera);
  report.view_probe_accuracy = view_probe(all, cameras, seed);
  return report;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10f", v);
  return buf;
}

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

void write_metrics_csv(const EvalReport& report, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "metric,value\n";
  out << "rank1," << fmt(report.rank(1)) << '\n';
  out << "rank5," << fmt(report.rank(5)) << '\n';
  out << "rank10," << fmt(report.rank(10)) << '\n';
  out << "mAP," << fmt(report.map) << '\n';
  out << "view_probe_acc," << fmt(report.view_probe_accuracy) << '\n';
  out << "num_queries," << report.num_queries << '\n';
  out << "num_gallery," << report.num_gallery << '\n';
}

void write_cmc_csv(const EvalReport& report, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "rank,value\n";
  for (std::size_t r = 0; r < report.cmc.size(); ++r) out << r + 1 << ',' << fmt(report.cmc[r]) << '\n';
}

}  // namespace vcfl
