#include "vcfl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "vcfl/error.hpp"

namespace vcfl {

std::size_t CenterTable::row_of(std::uint32_t identity) const {
  const auto it = std::lower_bound(identities.begin(), identities.end(), identity);
  if (it == identities.end() || *it != identity) {
    std::ostringstream os;
    os << "center table has no entry for identity " << identity;
    throw ValidationError(os.str());
  }
  return static_cast<std::size_t>(it - identities.begin());
}

bool CenterTable::contains(std::uint32_t identity) const {
  return std::binary_search(identities.begin(), identities.end(), identity);
}

CenterTable make_center_table(const Matrix& features, std::span<const std::uint32_t> identities,
                              double alpha) {
  if (features.rows() != identities.size())
    throw ValidationError("make_center_table: one identity per feature row required");
  std::map<std::uint32_t, std::pair<std::vector<double>, std::size_t>> acc;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    auto& [sum, count] = acc[identities[i]];
    sum.resize(features.cols(), 0.0);
    auto row = features.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) sum[j] += row[j];
    ++count;
  }
  CenterTable table;
  table.alpha = alpha;
  table.centers = Matrix(acc.size(), features.cols());
  std::size_t r = 0;
  for (const auto& [id, entry] : acc) {
    table.identities.push_back(id);
    auto row = table.centers.row(r++);
    for (std::size_t j = 0; j < row.size(); ++j)
      row[j] = entry.first[j] / static_cast<double>(entry.second);
  }
  return table;
}

void LossWeights::validate() const {
  if (!(adversarial >= 0.0 && center >= 0.0 && sift >= 0.0 && triplet >= 0.0 && margin >= 0.0))
    throw ValidationError("loss weights and margin must all be >= 0");
}

TripletSelection batch_hard_select(const Matrix& features,
                                   std::span<const std::uint32_t> identities) {
  const std::size_t n = features.rows();
  if (identities.size() != n)
    throw ValidationError("batch_hard_select: one identity per feature row required");
  std::map<std::uint32_t, std::size_t> counts;
  for (auto id : identities) ++counts[id];
  if (counts.size() < 2) throw ValidationError("batch_hard_select: batch needs >= 2 identities");
  for (const auto& [id, count] : counts) {
    if (count < 2) {
      std::ostringstream os;
      os << "batch_hard_select: identity " << id << " has a single sample in the batch";
      throw ValidationError(os.str());
    }
  }

  const Matrix dist = pairwise_dist(features, features);
  TripletSelection sel;
  sel.positive.resize(n);
  sel.positive_dist.resize(n);
  sel.negative.resize(n);
  sel.negative_dist.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t pos = n, neg = n;
    double dp = -1.0, dn = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = dist(i, j);
      if (identities[j] == identities[i]) {
        if (d > dp) {
          dp = d;
          pos = j;
        }
      } else if (d < dn) {
        dn = d;
        neg = j;
      }
    }
    sel.positive[i] = pos;
    sel.positive_dist[i] = dp;
    sel.negative[i] = neg;
    sel.negative_dist[i] = dn;
  }
  return sel;
}

namespace {

// Adds scale · (f_a - f_b)/‖f_a - f_b‖ to row a and subtracts it from row b.
void add_distance_grad(const Matrix& features, Matrix& grad, std::size_t a, std::size_t b,
                       double distance, double scale) {
  if (distance <= 0.0) return;
  auto fa = features.row(a);
  auto fb = features.row(b);
  auto ga = grad.row(a);
  auto gb = grad.row(b);
  for (std::size_t j = 0; j < fa.size(); ++j) {
    const double unit = (fa[j] - fb[j]) / distance;
    ga[j] += scale * unit;
    gb[j] -= scale * unit;
  }
}

}  // namespace

LossResult triplet_loss(const Matrix& features, const TripletSelection& selection, double margin) {
  const std::size_t n = selection.size();
  LossResult out{0.0, Matrix(features.rows(), features.cols())};
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double hinge = selection.positive_dist[i] - selection.negative_dist[i] + margin;
    if (!(hinge > 0.0)) continue;
    out.loss += hinge;
    add_distance_grad(features, out.feature_grad, i, selection.positive[i],
                      selection.positive_dist[i], inv_n);
    add_distance_grad(features, out.feature_grad, i, selection.negative[i],
                      selection.negative_dist[i], -inv_n);
  }
  out.loss *= inv_n;
  return out;
}

LossResult center_loss(const Matrix& features, std::span<const std::uint32_t> identities,
                       const CenterTable& centers) {
  const std::size_t n = features.rows();
  if (identities.size() != n)
    throw ValidationError("center_loss: one identity per feature row required");
  LossResult out{0.0, Matrix(n, features.cols())};
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto c = centers.centers.row(centers.row_of(identities[i]));
    auto f = features.row(i);
    auto g = out.feature_grad.row(i);
    for (std::size_t j = 0; j < f.size(); ++j) {
      const double diff = f[j] - c[j];
      out.loss += 0.5 * diff * diff;
      g[j] = diff * inv_n;
    }
  }
  out.loss *= inv_n;
  return out;
}

void update_centers(CenterTable& centers, const Matrix& features,
                    std::span<const std::uint32_t> identities) {
  if (identities.size() != features.rows())
    throw ValidationError("update_centers: one identity per feature row required");
  if (!(centers.alpha >= 0.0 && centers.alpha <= 1.0))
    throw ValidationError("update_centers: alpha must lie in [0, 1]");
  std::map<std::uint32_t, std::pair<std::vector<double>, std::size_t>> acc;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    auto& [sum, count] = acc[identities[i]];
    sum.resize(features.cols(), 0.0);
    auto f = features.row(i);
    for (std::size_t j = 0; j < f.size(); ++j) sum[j] += f[j];
    ++count;
  }
  for (const auto& [id, entry] : acc) {
    auto c = centers.centers.row(centers.row_of(id));
    const double count = static_cast<double>(entry.second);
    for (std::size_t j = 0; j < c.size(); ++j) {
      const double mean = entry.first[j] / count;
      c[j] -= centers.alpha * (c[j] - mean);
    }
  }
}

SiftGuidedResult sift_guided_loss(const Matrix& features, const Matrix& bow) {
  if (features.rows() != bow.rows() || features.cols() != bow.cols()) {
    throw ValidationError("sift_guided_loss: features " + features.shape_string() +
                          " and BoW rows " + bow.shape_string() + " differ in shape");
  }
  const std::size_t n = features.rows();
  SiftGuidedResult out;
  out.feature_grad = Matrix(n, features.cols());
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> unit(features.cols());
  for (std::size_t i = 0; i < n; ++i) {
    auto f = features.row(i);
    auto g = bow.row(i);
    const double norm = std::sqrt(squared_norm(f));
    if (!(norm > 0.0)) {
      // f/‖f‖ is undefined; count the row and leave its gradient at zero.
      out.loss += squared_norm(g) * inv_n;
      ++out.zero_norm_rows;
      continue;
    }
    for (std::size_t j = 0; j < f.size(); ++j) unit[j] = f[j] / norm;
    double residual_dot_unit = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j) {
      const double r = unit[j] - g[j];
      out.loss += r * r * inv_n;
      residual_dot_unit += r * unit[j];
    }
    // d/df of ‖u - g‖² with u = f/‖f‖ is 2 (I - u uᵀ)(u - g) / ‖f‖.
    auto grad = out.feature_grad.row(i);
    for (std::size_t j = 0; j < f.size(); ++j) {
      const double r = unit[j] - g[j];
      grad[j] = 2.0 * inv_n * (r - residual_dot_unit * unit[j]) / norm;
    }
  }
  return out;
}

double view_ce(const Matrix& probs, std::span<const int> targets, ViewMode mode) {
  if (probs.cols() != kViewClasses)
    throw ValidationError("view_ce: probabilities must have 5 columns");
  const auto resolved = resolve_view_targets(targets, mode, probs.rows());
  if (probs.rows() == 0) return 0.0;
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    if (mode == ViewMode::kUniform) {
      for (std::size_t c = 0; c < kNumTrueViews; ++c) loss -= std::log(probs(i, c)) / kNumTrueViews;
    } else {
      loss -= std::log(probs(i, static_cast<std::size_t>(resolved[i])));
    }
  }
  return loss / static_cast<double>(probs.rows());
}

LossResult combined_feature_loss(const FeatureLossParts& parts, const LossWeights& weights,
                                 std::size_t rows, std::size_t cols) {
  LossResult out{0.0, Matrix(rows, cols)};
  auto accumulate = [&](const LossResult* part, double weight, const char* name) {
    if (part == nullptr || weight == 0.0) return;
    if (part->feature_grad.rows() != rows || part->feature_grad.cols() != cols) {
      throw ValidationError(std::string("combined_feature_loss: ") + name +
                            " gradient has shape " + part->feature_grad.shape_string());
    }
    out.loss += weight * part->loss;
    auto dst = out.feature_grad.values();
    auto src = part->feature_grad.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += weight * src[i];
  };
  accumulate(parts.triplet, weights.triplet, "triplet");
  accumulate(parts.center, weights.center, "center");
  accumulate(parts.sift, weights.sift, "sift-guided");
  accumulate(parts.view_minus, weights.adversarial, "L_d-");
  return out;
}

}  // namespace vcfl
