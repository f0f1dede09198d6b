#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "vcfl/numcore.hpp"
#include "vcfl/rng.hpp"

namespace vcfl {

inline constexpr std::size_t kNumViews = 4;

enum class View : std::uint8_t { kFront = 0, kRight = 1, kLeft = 2, kBack = 3 };

enum class SplitTag : std::uint8_t { kTrain = 0, kQuery = 1, kGallery = 2 };

const char* view_name(std::uint8_t view);

struct Sample {
  std::vector<double> image;  // row-major H×W, intensities in [0, 1]
  std::uint32_t identity = 0;
  std::uint8_t view = 0;    // stored label, possibly noisy
  std::uint8_t camera = 0;  // generating view; equals the view label after a file load
  SplitTag split = SplitTag::kTrain;
};

/// Geometric and photometric distortion applied by one synthetic camera.
struct ViewDistortion {
  double rotation_deg = 0.0;
  double shear = 0.0;
  double translate_x = 0.0;
  double translate_y = 0.0;
  double gain = 1.0;
};

struct GenConfig {
  std::uint32_t num_identities = 32;
  std::uint32_t samples_per_view = 6;
  std::uint32_t height = 32;
  std::uint32_t width = 32;
  std::uint32_t latent_dim = 8;
  std::uint32_t blob_count = 6;
  std::array<ViewDistortion, kNumViews> views = default_views();
  double pixel_noise = 0.03;
  double jitter_px = 1.0;  // per-sample uniform translation jitter
  double view_label_noise = 0.0;
  std::uint64_t seed = 7;

  static std::array<ViewDistortion, kNumViews> default_views();
  void validate() const;
};

struct SynthDataset {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t num_identities = 0;
  std::vector<Sample> samples;

  std::size_t pixels() const { return std::size_t{height} * width; }
  std::vector<std::size_t> indices_with(SplitTag tag) const;
  /// Rows are the images of the given samples in order.
  Matrix images(std::span<const std::size_t> indices) const;
  Matrix all_images() const;
  /// Identity ids that own at least one training sample, ascending.
  std::vector<std::uint32_t> train_identities() const;
};

bool operator==(const Sample& a, const Sample& b);
bool operator==(const SynthDataset& a, const SynthDataset& b);

/// Renders the multi-view dataset. All samples start tagged as train.
SynthDataset generate(const GenConfig& config);

/// Per identity: one held-out sample per present view; one view (drawn from
/// rng) becomes the query, the others gallery; the rest stay train.
SynthDataset split(SynthDataset ds, RngStream& rng);

struct PkBatch {
  std::size_t p = 0;
  std::size_t k = 0;
  std::vector<std::size_t> indices;       // P·K dataset indices, grouped by identity
  std::vector<std::uint32_t> identities;  // identity of each entry

  std::size_t size() const { return indices.size(); }
};

PkBatch sample_pk_batch(const SynthDataset& ds, std::size_t p, std::size_t k, RngStream& rng);

void save_dataset(const SynthDataset& ds, const std::filesystem::path& path);
SynthDataset load_dataset(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_dataset(const SynthDataset& ds);
SynthDataset decode_dataset(std::span<const std::uint8_t> bytes);

}  // namespace vcfl
