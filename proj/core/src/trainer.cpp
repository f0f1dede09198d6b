#include "vcfl/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "vcfl/error.hpp"
#include "vcfl/rng.hpp"

namespace vcfl {

TrainConfig TrainConfig::paper_preset() {
  TrainConfig c;
  c.p = 30;
  c.k = 10;
  return c;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError("TrainConfig: " + msg); };
  if (p < 2) fail("P must be >= 2 so every anchor has negatives");
  if (k < 2) fail("K must be >= 2 so every anchor has positives");
  if (!(extractor_lr > 0.0) || !(classifier_lr > 0.0)) fail("learning rates must be > 0");
  if (!(sgd.momentum >= 0.0 && sgd.momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (!(sgd.weight_decay >= 0.0)) fail("weight decay must be >= 0");
  if (!(center_alpha >= 0.0 && center_alpha <= 1.0)) fail("center alpha must lie in [0, 1]");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) fail("warmup fraction must lie in [0, 1]");
  if (!(lr_decay > 0.0)) fail("lr decay factor must be > 0");
  for (double m : lr_milestones)
    if (!(m >= 0.0 && m <= 1.0)) fail("lr milestones must lie in [0, 1]");
  if (confusion_target == ViewMode::kPlus) fail("confusion target must be the common view or uniform");
  if (classifier_steps < 1) fail("classifier steps per iteration must be >= 1");
  if (feature_dim < 1 || classifier_hidden < 1) fail("layer widths must be >= 1");
  for (auto h : extractor_hidden)
    if (h < 1) fail("layer widths must be >= 1");
  weights.validate();
}

std::size_t TrainConfig::warmup_steps() const {
  return static_cast<std::size_t>(std::floor(warmup_fraction * static_cast<double>(steps)));
}

MlpShape TrainConfig::extractor_shape(std::size_t input_dim) const {
  return MlpShape::extractor(input_dim, feature_dim, extractor_hidden);
}

MlpShape TrainConfig::classifier_shape() const {
  return MlpShape::classifier(feature_dim, classifier_hidden);
}

double TrainConfig::extractor_lr_at(std::size_t step) const {
  double lr = extractor_lr;
  if (extractor_policy == ExtractorLrPolicy::kConstant) return lr;
  for (double m : lr_milestones)
    if (static_cast<double>(step) >= std::floor(m * static_cast<double>(steps))) lr *= lr_decay;
  return lr;
}

double TrainConfig::classifier_lr_at(std::size_t step) const {
  const double progress =
      steps == 0 ? 0.0 : std::min(1.0, static_cast<double>(step) / static_cast<double>(steps));
  return lr_schedule(progress, classifier_lr, schedule_alpha, schedule_beta);
}

const char* phase_name(Phase phase) {
  switch (phase) {
    case Phase::kWarmup: return "warmup";
    case Phase::kExtractor: return "extractor";
    case Phase::kClassifier: return "classifier";
  }
  return "?";
}

namespace {

std::string format_value(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  return buf;
}

std::string format_value(double v) { return format_value(std::optional<double>(v)); }

void check_finite(double value, const char* what, std::uint64_t step) {
  if (!std::isfinite(value)) {
    std::ostringstream os;
    os << "non-finite " << what << " at step " << step;
    throw NumericError(os.str());
  }
}

double mean_column(const Matrix& m, std::size_t col) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) s += m(i, col);
  return m.rows() ? s / static_cast<double>(m.rows()) : 0.0;
}

void scale(Mlp& net, double factor) {
  for (auto t : net.tensors())
    for (double& v : t) v *= factor;
}

}  // namespace

void write_train_log_header(std::ostream& out) {
  out << "step,phase,L_trip,L_fc,L_sg,L_d_minus,L_d_plus,mean_p_common,lr_f,lr_d\n";
}

void write_train_log_row(std::ostream& out, const TrainRecord& r) {
  out << r.step << ',' << phase_name(r.phase) << ',' << format_value(r.triplet) << ','
      << format_value(r.center) << ',' << format_value(r.sift) << ',' << format_value(r.d_minus)
      << ',' << format_value(r.d_plus) << ',' << format_value(r.mean_p_common) << ','
      << format_value(r.lr_f) << ',' << format_value(r.lr_d) << '\n';
}

Trainer::Trainer(TrainConfig config, const SynthDataset& dataset, const Matrix* bow)
    : config_(std::move(config)), dataset_(dataset), bow_(bow) {
  config_.validate();
  state_.extractor = init_extractor(config_.extractor_shape(dataset_.pixels()), config_.seed);
  state_.classifier = init_classifier(config_.classifier_shape(), config_.seed);
  state_.opt = make_opt_state(state_.extractor.net, state_.classifier.net);

  const auto train_idx = dataset_.indices_with(SplitTag::kTrain);
  std::vector<std::uint32_t> ids;
  for (auto i : train_idx) ids.push_back(dataset_.samples[i].identity);
  const Matrix features = extractor_forward(state_.extractor, dataset_.images(train_idx)).features;
  state_.centers = make_center_table(features, ids, config_.center_alpha);
}

Trainer::Trainer(TrainConfig config, const SynthDataset& dataset, const Matrix* bow,
                 Checkpoint resume)
    : config_(std::move(config)), dataset_(dataset), bow_(bow), state_(std::move(resume)) {
  config_.validate();
  expect_shapes(state_, config_.extractor_shape(dataset_.pixels()), config_.classifier_shape());
}

PkBatch Trainer::batch_for(std::uint64_t step) const {
  RngStream rng(config_.seed, streams::kBatchBase + step);
  return sample_pk_batch(dataset_, config_.p, config_.k, rng);
}

Matrix Trainer::bow_rows(const PkBatch& batch) const {
  if (bow_ == nullptr) throw ValidationError("sift confusion is enabled but no BoW vectors were given");
  Matrix rows(batch.size(), bow_->cols());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto src = bow_->row(batch.indices[i]);
    std::copy(src.begin(), src.end(), rows.row(i).begin());
  }
  return rows;
}

std::vector<int> Trainer::view_targets(const PkBatch& batch) const {
  std::vector<int> targets;
  targets.reserve(batch.size());
  for (auto i : batch.indices) targets.push_back(dataset_.samples[i].view);
  return targets;
}

TrainRecord Trainer::extractor_phase(const PkBatch& batch, std::uint64_t step, bool warmup) {
  const auto& flags = config_.flags;
  const auto& weights = config_.weights;
  TrainRecord record;
  record.step = step;
  record.phase = warmup ? Phase::kWarmup : Phase::kExtractor;
  record.lr_f = config_.extractor_lr_at(step);
  record.lr_d = config_.classifier_lr_at(step);

  const Matrix images = dataset_.images(batch.indices);
  const ExtractorForward fwd = extractor_forward(state_.extractor, images);
  const Matrix& features = fwd.features;
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();

  const TripletSelection selection = batch_hard_select(features, batch.identities);
  const LossResult trip = triplet_loss(features, selection, weights.margin);
  record.triplet = trip.loss;
  FeatureLossParts parts;
  parts.triplet = &trip;

  LossResult cen, sg, minus;
  if (!warmup && flags.feature_confusion) {
    cen = center_loss(features, batch.identities, state_.centers);
    record.center = cen.loss;
    parts.center = &cen;
  }
  if (!warmup && flags.sift_confusion) {
    sg = sift_guided_loss(features, bow_rows(batch));
    record.sift = sg.loss;
    parts.sift = &sg;
  }
  if (!warmup && flags.classifier_confusion) {
    const ClassifierForward cf = classifier_forward(state_.classifier, features);
    // Only the feature gradient is used; θ_d gradients are discarded here.
    ClassifierBackward back = classifier_backward(state_.classifier, cf, {}, config_.confusion_target);
    minus.loss = view_ce(cf.probs, {}, config_.confusion_target);
    minus.feature_grad = std::move(back.feature_grad);
    record.d_minus = minus.loss;
    record.mean_p_common = mean_column(cf.probs, kCommonViewClass);
    parts.view_minus = &minus;
  }

  const LossResult total = combined_feature_loss(parts, weights, n, d);
  check_finite(total.loss, "feature loss", step);
  const Mlp grads = extractor_backward(state_.extractor, fwd.cache, total.feature_grad);
  sgd_step(state_.extractor.net, grads, record.lr_f, config_.sgd, state_.opt.extractor);

  if (!warmup && flags.feature_confusion) update_centers(state_.centers, features, batch.identities);
  return record;
}

TrainRecord Trainer::classifier_phase(const PkBatch& batch, std::uint64_t step) {
  TrainRecord record;
  record.step = step;
  record.phase = Phase::kClassifier;
  record.lr_f = config_.extractor_lr_at(step);
  record.lr_d = config_.classifier_lr_at(step);

  const Matrix features =
      extractor_forward(state_.extractor, dataset_.images(batch.indices)).features;
  const ClassifierForward cf = classifier_forward(state_.classifier, features);
  const auto targets = view_targets(batch);
  record.d_plus = view_ce(cf.probs, targets, ViewMode::kPlus);
  record.mean_p_common = mean_column(cf.probs, kCommonViewClass);
  check_finite(*record.d_plus, "L_d+", step);

  ClassifierBackward back = classifier_backward(state_.classifier, cf, targets, ViewMode::kPlus);
  scale(back.grads, config_.weights.adversarial);
  adam_step(state_.classifier.net, back.grads, record.lr_d, config_.adam, state_.opt.classifier);
  return record;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::uint64_t step) {
  char name[32];
  std::snprintf(name, sizeof name, "ckpt_%06llu.bin", static_cast<unsigned long long>(step));
  return dir / name;
}

TrainResult train(const TrainConfig& config, const SynthDataset& dataset, const Matrix* bow,
                  const TrainOptions& options) {
  config.validate();
  if (config.flags.sift_confusion) {
    if (bow == nullptr) throw ValidationError("sift confusion is enabled but no vocabulary/BoW was given");
    if (bow->rows() != dataset.samples.size() || bow->cols() != config.feature_dim) {
      std::ostringstream os;
      os << "BoW matrix " << bow->shape_string() << " must be " << dataset.samples.size() << "x"
         << config.feature_dim << " (one row per sample, k = D)";
      throw ValidationError(os.str());
    }
  }

  Trainer trainer = options.resume ? Trainer(config, dataset, bow, *options.resume)
                                   : Trainer(config, dataset, bow);
  TrainResult result;
  const std::size_t warmup = config.warmup_steps();
  auto emit = [&](const TrainRecord& r) {
    if (options.on_record) options.on_record(r);
    result.log.push_back(r);
  };

  for (std::uint64_t step = trainer.state().step; step < config.steps; ++step) {
    const PkBatch batch = trainer.batch_for(step);
    const bool in_warmup = step < warmup;

    const std::uint64_t d_before = options.audit ? checksum(trainer.state().classifier.net) : 0;
    try {
      emit(trainer.extractor_phase(batch, step, in_warmup));
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + "; last good checkpoint: " +
                         (result.last_checkpoint.empty() ? "(none)" : result.last_checkpoint.string()));
    }
    ++result.audit.extractor_phases;
    if (options.audit && checksum(trainer.state().classifier.net) != d_before)
      ++result.audit.classifier_changed_in_extractor_phase;

    if (!in_warmup && config.flags.classifier_confusion) {
      for (std::size_t j = 0; j < config.classifier_steps; ++j) {
        const std::uint64_t f_before = options.audit ? checksum(trainer.state().extractor.net) : 0;
        const std::uint64_t d_prev = options.audit ? checksum(trainer.state().classifier.net) : 0;
        try {
          emit(trainer.classifier_phase(batch, step));
        } catch (const NumericError& e) {
          throw NumericError(std::string(e.what()) + "; last good checkpoint: " +
                             (result.last_checkpoint.empty() ? "(none)"
                                                             : result.last_checkpoint.string()));
        }
        ++result.audit.classifier_phases;
        if (options.audit) {
          if (checksum(trainer.state().extractor.net) != f_before)
            ++result.audit.extractor_changed_in_classifier_phase;
          if (checksum(trainer.state().classifier.net) != d_prev) ++result.audit.classifier_updates;
        }
      }
    }

    trainer.mutable_state().step = step + 1;
    if (!options.checkpoint_dir.empty() && config.checkpoint_interval > 0 &&
        (step + 1) % config.checkpoint_interval == 0) {
      result.last_checkpoint = checkpoint_path(options.checkpoint_dir, step + 1);
      save_checkpoint(trainer.state(), result.last_checkpoint);
    }
  }
  result.final_state = trainer.state();
  return result;
}

}  // namespace vcfl
