#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "vcfl/dataset.hpp"
#include "vcfl/model.hpp"
#include "vcfl/numcore.hpp"

namespace vcfl {

struct EvalProtocol {
  bool exclude_same_view = true;     // drop same identity + same camera from each query's list
  bool normalize_features = false;   // L2-normalize embeddings before ranking
};

struct RankLabel {
  std::uint32_t identity = 0;
  std::uint8_t camera = 0;
};

struct EvalReport {
  std::vector<double> cmc;  // cmc[r - 1] for ranks 1..G
  double map = 0.0;
  std::vector<double> average_precisions;
  double view_probe_accuracy = 0.0;
  std::size_t num_queries = 0;
  std::size_t num_gallery = 0;

  double rank(std::size_t r) const;
  bool operator==(const EvalReport&) const = default;
};

/// Per query, gallery indices by ascending Euclidean distance; ties keep the
/// lower gallery index first.
std::vector<std::vector<std::size_t>> rank_gallery(const Matrix& queries, const Matrix& gallery);

std::vector<double> cmc(const std::vector<std::vector<std::size_t>>& rankings,
                        std::span<const RankLabel> queries, std::span<const RankLabel> gallery,
                        const EvalProtocol& protocol);

/// Average precision per query after exclusions.
std::vector<double> average_precisions(const std::vector<std::vector<std::size_t>>& rankings,
                                       std::span<const RankLabel> queries,
                                       std::span<const RankLabel> gallery,
                                       const EvalProtocol& protocol);

double map_score(const std::vector<std::vector<std::size_t>>& rankings,
                 std::span<const RankLabel> queries, std::span<const RankLabel> gallery,
                 const EvalProtocol& protocol);

struct ProbeConfig {
  double train_fraction = 0.7;
  std::size_t iterations = 300;
  double learning_rate = 0.05;
};

/// Held-out accuracy of a fresh linear softmax view classifier trained on the
/// standardized features.
double view_probe(const Matrix& features, std::span<const int> views, std::uint64_t seed,
                  const ProbeConfig& config = {});

/// Features of the query/gallery split, then ranking metrics and the view
/// probe over every sample's embedding.
EvalReport evaluate(const ExtractorParams& params, const SynthDataset& dataset,
                    const EvalProtocol& protocol, std::uint64_t seed);

void write_metrics_csv(const EvalReport& report, const std::filesystem::path& path);
void write_cmc_csv(const EvalReport& report, const std::filesystem::path& path);

}  // namespace vcfl
