#pragma once

#include <cstdint>

namespace vcfl {

/// Counter-based random stream keyed by (seed, stream id). Draw n of a stream
/// is a pure function of (seed, stream id, n), so streams can be created in any
/// order or on any thread and still reproduce the same values. Distributions
/// are implemented here rather than taken from <random>, whose distribution
/// algorithms differ between standard libraries.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t position() const { return counter_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on [lo, hi).
  double uniform(double lo, double hi);
  /// Unbiased integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (one value per two uniforms).
  double normal();

  /// Independent child stream.
  RngStream split(std::uint64_t child) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Stream ids used across the library. Per-item streams add the item index to
/// a base.
namespace streams {
inline constexpr std::uint64_t kGenProjection = 1;
inline constexpr std::uint64_t kGenLatentBase = 1ull << 32;
inline constexpr std::uint64_t kGenSampleBase = 2ull << 32;
inline constexpr std::uint64_t kSplit = 2;
inline constexpr std::uint64_t kExtractorInit = 10;
inline constexpr std::uint64_t kClassifierInit = 11;
inline constexpr std::uint64_t kBatchBase = 3ull << 32;
inline constexpr std::uint64_t kProbe = 20;
inline constexpr std::uint64_t kVocabulary = 30;
inline constexpr std::uint64_t kGradCheck = 40;
}  // namespace streams

}  // namespace vcfl
