#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "vcfl/model.hpp"
#include "vcfl/numcore.hpp"

namespace vcfl {

/// Per-identity feature centers, stored directly in embedding space.
struct CenterTable {
  Matrix centers;                          // num-identities × D
  std::vector<std::uint32_t> identities;   // identity id of each row, ascending
  double alpha = 0.5;

  std::size_t row_of(std::uint32_t identity) const;
  bool contains(std::uint32_t identity) const;

  bool operator==(const CenterTable&) const = default;
};

/// Centers initialized to the mean feature of each identity.
CenterTable make_center_table(const Matrix& features, std::span<const std::uint32_t> identities,
                              double alpha);

struct LossWeights {
  double adversarial = 0.5;  // λ on L_d+ and L_d-
  double center = 1e-4;      // λ_fc
  double sift = 0.1;         // λ_sg
  double triplet = 1.0;      // λ_trip
  double margin = 0.3;       // m

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

struct LossResult {
  double loss = 0.0;
  Matrix feature_grad;  // same shape as the features
};

struct TripletSelection {
  std::vector<std::size_t> positive;
  std::vector<double> positive_dist;
  std::vector<std::size_t> negative;
  std::vector<double> negative_dist;

  std::size_t size() const { return positive.size(); }
};

/// Batch-hard mining on Euclidean distances: farthest same-identity sample and
/// nearest other-identity sample per anchor, ties to the lowest index.
TripletSelection batch_hard_select(const Matrix& features,
                                   std::span<const std::uint32_t> identities);

/// Mean hinge [dp - dn + m]+ with gradients through the selected distances.
LossResult triplet_loss(const Matrix& features, const TripletSelection& selection, double margin);

/// ½·mean ‖f_i - C_{y_i}‖².
LossResult center_loss(const Matrix& features, std::span<const std::uint32_t> identities,
                       const CenterTable& centers);

/// C_y ← C_y - α (C_y - mean of identity y's features in the batch).
void update_centers(CenterTable& centers, const Matrix& features,
                    std::span<const std::uint32_t> identities);

struct SiftGuidedResult : LossResult {
  std::size_t zero_norm_rows = 0;
};

/// mean ‖f/‖f‖ - g‖² against unit-norm BoW rows.
SiftGuidedResult sift_guided_loss(const Matrix& features, const Matrix& bow);

/// Mean cross-entropy of the view probabilities against the mode's targets.
double view_ce(const Matrix& probs, std::span<const int> targets, ViewMode mode);

/// Loss heads that took part in one extractor update. Absent heads contribute
/// nothing.
struct FeatureLossParts {
  const LossResult* triplet = nullptr;
  const LossResult* center = nullptr;
  const LossResult* sift = nullptr;
  // L_d- value and its gradient w.r.t. the features, from the frozen classifier.
  const LossResult* view_minus = nullptr;
};

/// λ_trip·L_trip + λ_fc·L_fc + λ_sg·L_sg + λ·L_d- and the matching gradient.
LossResult combined_feature_loss(const FeatureLossParts& parts, const LossWeights& weights,
                                 std::size_t rows, std::size_t cols);

}  // namespace vcfl
