#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "vcfl/losses.hpp"
#include "vcfl/model.hpp"
#include "vcfl/optim.hpp"

namespace vcfl {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to resume training at `step`.
struct Checkpoint {
  std::uint64_t step = 0;
  ExtractorParams extractor;
  ClassifierParams classifier;
  CenterTable centers;
  OptState opt;

  bool operator==(const Checkpoint&) const = default;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Throws ValidationError naming both shapes when the checkpoint's networks do
/// not have the expected layer widths.
void expect_shapes(const Checkpoint& ckpt, const MlpShape& extractor, const MlpShape& classifier);

}  // namespace vcfl
