#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include "vcfl/checkpoint.hpp"
#include "vcfl/dataset.hpp"
#include "vcfl/losses.hpp"
#include "vcfl/model.hpp"
#include "vcfl/optim.hpp"

namespace vcfl {

/// Which confusion mechanisms join the triplet baseline.
struct AblationFlags {
  bool classifier_confusion = true;
  bool feature_confusion = true;
  bool sift_confusion = true;

  static AblationFlags baseline() { return {false, false, false}; }
  bool operator==(const AblationFlags&) const = default;
};

enum class ExtractorLrPolicy { kStepDecay, kConstant };

struct TrainConfig {
  std::size_t p = 8;
  std::size_t k = 4;
  std::size_t steps = 1000;

  double extractor_lr = 0.01;
  ExtractorLrPolicy extractor_policy = ExtractorLrPolicy::kStepDecay;
  std::vector<double> lr_milestones = {0.5, 0.8};  // fractions of total steps
  double lr_decay = 0.1;

  double classifier_lr = 0.01;
  double schedule_alpha = 10.0;
  double schedule_beta = 0.75;

  SgdConfig sgd;
  AdamConfig adam;
  LossWeights weights;
  double center_alpha = 0.5;

  std::uint64_t seed = 1;
  std::size_t checkpoint_interval = 0;  // 0 disables periodic checkpoints
  double warmup_fraction = 0.1;
  std::size_t classifier_steps = 1;  // classifier phases per extractor phase
  AblationFlags flags;
  ViewMode confusion_target = ViewMode::kMinus;  // kMinus or kUniform

  std::size_t feature_dim = 64;
  std::vector<std::size_t> extractor_hidden = {256, 128};
  std::size_t classifier_hidden = 32;

  /// 30 identities × 10 images per batch.
  static TrainConfig paper_preset();

  void validate() const;
  std::size_t warmup_steps() const;
  MlpShape extractor_shape(std::size_t input_dim) const;
  MlpShape classifier_shape() const;
  double extractor_lr_at(std::size_t step) const;
  double classifier_lr_at(std::size_t step) const;
};

enum class Phase { kWarmup, kExtractor, kClassifier };

const char* phase_name(Phase phase);

struct TrainRecord {
  std::uint64_t step = 0;
  Phase phase = Phase::kExtractor;
  std::optional<double> triplet;
  std::optional<double> center;
  std::optional<double> sift;
  std::optional<double> d_minus;
  std::optional<double> d_plus;
  std::optional<double> mean_p_common;
  double lr_f = 0.0;
  double lr_d = 0.0;
};

using TrainLog = std::vector<TrainRecord>;

void write_train_log_header(std::ostream& out);
void write_train_log_row(std::ostream& out, const TrainRecord& record);

/// Owns the single mutable copy of all training state.
class Trainer {
 public:
  /// Fresh networks from config.seed; centers start at the per-identity mean
  /// training feature of the untrained extractor.
  Trainer(TrainConfig config, const SynthDataset& dataset, const Matrix* bow);
  Trainer(TrainConfig config, const SynthDataset& dataset, const Matrix* bow, Checkpoint resume);

  /// SGD on θ_f with the enabled feature losses (triplet only when warmup is
  /// true) and L_d- through the frozen classifier. Updates centers afterwards.
  TrainRecord extractor_phase(const PkBatch& batch, std::uint64_t step, bool warmup);
  /// Adam on θ_d with λ·L_d+ on features from the frozen extractor.
  TrainRecord classifier_phase(const PkBatch& batch, std::uint64_t step);

  PkBatch batch_for(std::uint64_t step) const;

  const Checkpoint& state() const { return state_; }
  Checkpoint& mutable_state() { return state_; }
  const TrainConfig& config() const { return config_; }

 private:
  Matrix bow_rows(const PkBatch& batch) const;
  std::vector<int> view_targets(const PkBatch& batch) const;

  TrainConfig config_;
  const SynthDataset& dataset_;
  const Matrix* bow_;
  Checkpoint state_;
};

struct TrainOptions {
  std::optional<Checkpoint> resume;
  std::filesystem::path checkpoint_dir;  // empty: no checkpoint files
  bool audit = true;
  std::function<void(const TrainRecord&)> on_record;
};

/// Checksum audit of the alternation contract.
struct AlternationAudit {
  std::size_t extractor_phases = 0;
  std::size_t classifier_phases = 0;
  std::size_t classifier_changed_in_extractor_phase = 0;
  std::size_t extractor_changed_in_classifier_phase = 0;
  std::size_t classifier_updates = 0;  // classifier phases that changed θ_d

  bool clean() const {
    return classifier_changed_in_extractor_phase == 0 && extractor_changed_in_classifier_phase == 0;
  }
};

struct TrainResult {
  Checkpoint final_state;
  TrainLog log;
  AlternationAudit audit;
  std::filesystem::path last_checkpoint;
};

/// Warm-up with triplet-only extractor steps, then alternating extractor and
/// classifier phases. Deterministic given config.seed.
TrainResult train(const TrainConfig& config, const SynthDataset& dataset, const Matrix* bow,
                  const TrainOptions& options = {});

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::uint64_t step);

}  // namespace vcfl
