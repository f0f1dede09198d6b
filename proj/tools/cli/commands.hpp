#pragma once

#include <filesystem>
#include <optional>
#include <ostream>

#include "run_config.hpp"

namespace vcfl::cli {

namespace fs = std::filesystem;

/// Every command writes config.json into `out` before doing any work and
/// reports progress on `log`. Failures surface as ValidationError (bad input),
/// FormatError or NumericError.

/// Writes out/dataset.bin: the synthetic dataset with its query/gallery split.
void cmd_gen_data(const RunConfig& config, const fs::path& out, std::ostream& log);

/// Writes out/vocab.bin and out/bow.bin (one BoW row per sample).
void cmd_train_vocab(const RunConfig& config, const fs::path& dataset, const fs::path& out,
                     std::ostream& log);

struct TrainInputs {
  fs::path dataset;
  std::optional<fs::path> vocab;
  std::optional<fs::path> resume;
};

/// Writes out/train_log.csv, out/final.ckpt and periodic checkpoints under
/// out/checkpoints/.
void cmd_train(const RunConfig& config, const TrainInputs& inputs, const fs::path& out,
               std::ostream& log);

/// Writes out/metrics.csv and out/cmc.csv.
void cmd_eval(const RunConfig& config, const fs::path& checkpoint, const fs::path& dataset,
              const fs::path& out, std::ostream& log);

/// Writes out/ablation.csv (seed means) and out/ablation_seeds.csv.
void cmd_ablate(const RunConfig& config, const fs::path& dataset,
                const std::optional<fs::path>& vocab, const fs::path& out, std::ostream& log);

/// Prints one line per component and writes out/grad_check.csv. Returns false
/// when any component exceeds the tolerance.
bool cmd_grad_check(const RunConfig& config, const fs::path& out, std::ostream& log,
                    const std::string& perturb_component = {});

}  // namespace vcfl::cli
