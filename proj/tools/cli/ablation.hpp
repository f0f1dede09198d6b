#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "run_config.hpp"
#include "vcfl/evalkit.hpp"
#include "vcfl/trainer.hpp"

namespace vcfl::cli {

struct AblationRow {
  std::string label;
  AblationFlags flags;
};

/// baseline, the three single mechanisms, then all three together.
const std::vector<AblationRow>& ablation_rows();

struct AblationResult {
  std::vector<std::uint64_t> seeds;
  /// reports[row][seed index]
  std::vector<std::vector<EvalReport>> reports;

  double mean_rank(std::size_t row, std::size_t r) const;
  double mean_map(std::size_t row) const;
  double mean_view_probe(std::size_t row) const;
};

using AblationProgress = std::function<void(const std::string& label, std::uint64_t seed,
                                            const EvalReport& report)>;

/// Trains and evaluates every row for every seed in config.ablate_seeds. The
/// row flags replace config.train.flags; everything else is shared.
AblationResult run_ablation(const RunConfig& config, const SynthDataset& dataset,
                            const Matrix* bow, const AblationProgress& progress = {});

/// label,rank1,rank5,rank10,mAP,view_probe_acc averaged over seeds.
void write_ablation_csv(const AblationResult& result, const std::filesystem::path& path);
/// seed,label,... one row per seed and configuration.
void write_ablation_seed_csv(const AblationResult& result, const std::filesystem::path& path);

}  // namespace vcfl::cli
