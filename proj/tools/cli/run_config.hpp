#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vcfl/dataset.hpp"
#include "vcfl/evalkit.hpp"
#include "vcfl/trainer.hpp"

namespace vcfl::cli {

/// Everything a command can be configured with. Keys are dotted paths such as
/// "train.lambda_fc"; see schema_keys().
struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  GenConfig gen;
  std::size_t vocab_k = 64;
  std::size_t vocab_max_iters = 50;
  TrainConfig train;
  EvalProtocol eval;
  std::vector<std::uint64_t> ablate_seeds = {1, 2, 3};

  /// Training config with the global seed applied.
  TrainConfig train_config() const;
};

std::vector<std::string> schema_keys();

/// Applies a JSON object (nested sections or dotted keys). Unknown keys and
/// wrongly typed values throw ValidationError.
void apply_json(RunConfig& config, const nlohmann::json& doc);
/// Applies one "key=value" override; the value is parsed as JSON when
/// possible and as a bare string otherwise.
void apply_override(RunConfig& config, const std::string& assignment);
void apply_preset(RunConfig& config, const std::string& name);

void apply_config_file(RunConfig& config, const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);
void write_effective_config(const RunConfig& config, const std::filesystem::path& dir);

}  // namespace vcfl::cli
