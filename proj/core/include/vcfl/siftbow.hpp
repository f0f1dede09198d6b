#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "vcfl/dataset.hpp"
#include "vcfl/numcore.hpp"

namespace vcfl {

inline constexpr std::size_t kDescriptorDim = 128;
inline constexpr std::size_t kWindowSize = 16;
inline constexpr std::size_t kGridStride = 8;
inline constexpr std::size_t kCellSize = 4;
inline constexpr std::size_t kOrientationBins = 8;
inline constexpr double kDescriptorClip = 0.2;
inline constexpr double kMinWindowEnergy = 1e-8;

/// Dense SIFT-style descriptor: 4×4 cells × 8 orientation bins.
struct Descriptor {
  std::array<double, kDescriptorDim> values{};
  std::size_t row = 0;  // top-left corner of the support window
  std::size_t col = 0;
};

/// Descriptors on a stride-8 grid of 16×16 windows. Flat windows are dropped.
std::vector<Descriptor> extract_descriptors(std::span<const double> image, std::size_t height,
                                            std::size_t width);

/// Stacks descriptors into an n×128 matrix.
Matrix descriptor_matrix(std::span<const Descriptor> descriptors);

struct BowVocabulary {
  Matrix centroids;  // k × dim
  std::uint64_t seed = 0;
  std::size_t iterations = 0;
  double inertia = 0.0;
  std::vector<double> inertia_history;  // after each assignment step

  std::size_t k() const { return centroids.rows(); }
};

/// k-means++ seeding followed by Lloyd iterations. Empty clusters are reseeded
/// to the point farthest from its assigned centroid.
BowVocabulary train_vocabulary(const Matrix& points, std::size_t k, std::uint64_t seed,
                               std::size_t max_iters);

/// Index of the nearest centroid (ties to the lowest index).
std::size_t nearest_centroid(const Matrix& centroids, std::span<const double> point);

/// Unit-norm hard-assignment histogram of the descriptors.
std::vector<double> bow_histogram(std::span<const Descriptor> descriptors,
                                  const BowVocabulary& vocab);
std::vector<double> bow_encode(std::span<const double> image, std::size_t height,
                               std::size_t width, const BowVocabulary& vocab);

/// Descriptors of every training image, stacked in dataset order.
Matrix training_descriptors(const SynthDataset& dataset);

/// One BoW row per sample, in dataset order.
Matrix bow_encode_dataset(const SynthDataset& dataset, const BowVocabulary& vocab);

void save_vocabulary(const BowVocabulary& vocab, const std::filesystem::path& path);
BowVocabulary load_vocabulary(const std::filesystem::path& path);

/// BoW cache: one row per dataset sample, in dataset order.
void save_bow_cache(const Matrix& bow, const std::filesystem::path& path);
Matrix load_bow_cache(const std::filesystem::path& path);

}  // namespace vcfl
