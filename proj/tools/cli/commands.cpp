#include "commands.hpp"

#include <cstdio>
#include <fstream>

#include "ablation.hpp"
#include "grad_check.hpp"
#include "vcfl/checkpoint.hpp"
#include "vcfl/error.hpp"
#include "vcfl/evalkit.hpp"
#include "vcfl/parallel.hpp"
#include "vcfl/rng.hpp"
#include "vcfl/siftbow.hpp"
#include "vcfl/trainer.hpp"

namespace vcfl::cli {

namespace {

void prepare(const RunConfig& config, const fs::path& out) {
  set_worker_count(config.workers);
  write_effective_config(config, out);
}

SynthDataset read_dataset(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("dataset file not found: " + path.string());
  return load_dataset(path);
}

Matrix read_bow(const fs::path& vocab_path, const SynthDataset& dataset) {
  if (!fs::exists(vocab_path))
    throw ValidationError("vocabulary file not found: " + vocab_path.string());
  return bow_encode_dataset(dataset, load_vocabulary(vocab_path));
}

std::ofstream open_text(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  return out;
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

void cmd_gen_data(const RunConfig& config, const fs::path& out, std::ostream& log) {
  GenConfig gen = config.gen;
  gen.seed = config.seed;
  gen.validate();
  prepare(config, out);
  RngStream rng(config.seed, streams::kSplit);
  const SynthDataset ds = split(generate(gen), rng);
  const fs::path path = out / "dataset.bin";
  save_dataset(ds, path);
  log << "wrote " << ds.samples.size() << " samples (" << ds.indices_with(SplitTag::kTrain).size()
      << " train, " << ds.indices_with(SplitTag::kQuery).size() << " query, "
      << ds.indices_with(SplitTag::kGallery).size() << " gallery) to " << path.string() << '\n';
}

void cmd_train_vocab(const RunConfig& config, const fs::path& dataset, const fs::path& out,
                     std::ostream& log) {
  const SynthDataset ds = read_dataset(dataset);
  prepare(config, out);
  const Matrix points = training_descriptors(ds);
  if (config.vocab_k > points.rows())
    throw ValidationError("vocab.k=" + std::to_string(config.vocab_k) + " exceeds the " +
                          std::to_string(points.rows()) + " training descriptors");
  const BowVocabulary vocab =
      train_vocabulary(points, config.vocab_k, config.seed, config.vocab_max_iters);
  save_vocabulary(vocab, out / "vocab.bin");
  save_bow_cache(bow_encode_dataset(ds, vocab), out / "bow.bin");
  log << "vocabulary k=" << vocab.k() << " from " << points.rows() << " descriptors, "
      << vocab.iterations << " iterations, inertia " << fixed(vocab.inertia) << '\n';
}

void cmd_train(const RunConfig& config, const TrainInputs& inputs, const fs::path& out,
               std::ostream& log) {
  const TrainConfig train_config = config.train_config();
  train_config.validate();
  const SynthDataset ds = read_dataset(inputs.dataset);
  std::optional<Matrix> bow;
  if (train_config.flags.sift_confusion) {
    if (!inputs.vocab)
      throw ValidationError("sift confusion is enabled but no vocabulary file was given (--vocab)");
    bow = read_bow(*inputs.vocab, ds);
  }
  TrainOptions options;
  if (inputs.resume) {
    if (!fs::exists(*inputs.resume))
      throw ValidationError("checkpoint file not found: " + inputs.resume->string());
    options.resume = load_checkpoint(*inputs.resume);
  }
  prepare(config, out);
  options.checkpoint_dir = out / "checkpoints";
  fs::create_directories(options.checkpoint_dir);

  auto csv = open_text(out / "train_log.csv");
  write_train_log_header(csv);
  options.on_record = [&csv](const TrainRecord& r) { write_train_log_row(csv, r); };

  const TrainResult result = train(train_config, ds, bow ? &*bow : nullptr, options);
  save_checkpoint(result.final_state, out / "final.ckpt");
  log << "trained to step " << result.final_state.step << " (" << result.audit.extractor_phases
      << " extractor, " << result.audit.classifier_phases << " classifier phases)\n";
  if (!result.audit.clean()) throw NumericError("alternation audit failed: a frozen network moved");
}

void cmd_eval(const RunConfig& config, const fs::path& checkpoint, const fs::path& dataset,
              const fs::path& out, std::ostream& log) {
  if (!fs::exists(checkpoint))
    throw ValidationError("checkpoint file not found: " + checkpoint.string());
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const SynthDataset ds = read_dataset(dataset);
  if (ckpt.extractor.net.input_dim() != ds.pixels())
    throw ValidationError("checkpoint expects " + std::to_string(ckpt.extractor.net.input_dim()) +
                          " input pixels, dataset has " + std::to_string(ds.pixels()));
  prepare(config, out);
  const EvalReport report = evaluate(ckpt.extractor, ds, config.eval, config.seed);
  write_metrics_csv(report, out / "metrics.csv");
  write_cmc_csv(report, out / "cmc.csv");
  log << "rank1 " << fixed(report.rank(1)) << "  rank5 " << fixed(report.rank(5)) << "  rank10 "
      << fixed(report.rank(10)) << "  mAP " << fixed(report.map) << "  view_probe "
      << fixed(report.view_probe_accuracy) << '\n';
}

void cmd_ablate(const RunConfig& config, const fs::path& dataset,
                const std::optional<fs::path>& vocab, const fs::path& out, std::ostream& log) {
  config.train.validate();
  const SynthDataset ds = read_dataset(dataset);
  if (!vocab) throw ValidationError("ablate needs a vocabulary file for the sift rows (--vocab)");
  const Matrix bow = read_bow(*vocab, ds);
  prepare(config, out);
  const AblationResult result =
      run_ablation(config, ds, &bow, [&log](const std::string& label, std::uint64_t seed,
                                            const EvalReport& r) {
        log << "seed " << seed << "  " << label << ": rank1 " << fixed(r.rank(1)) << "  mAP "
            << fixed(r.map) << "  view_probe " << fixed(r.view_probe_accuracy) << '\n';
      });
  write_ablation_csv(result, out / "ablation.csv");
  write_ablation_seed_csv(result, out / "ablation_seeds.csv");
}

bool cmd_grad_check(const RunConfig& config, const fs::path& out, std::ostream& log,
                    const std::string& perturb_component) {
  prepare(config, out);
  GradCheckOptions options;
  options.seed = config.seed;
  options.perturb_component = perturb_component;
  const auto report = run_grad_check(options);
  auto csv = open_text(out / "grad_check.csv");
  csv << "component,instances,coordinates,max_rel_error,passed\n";
  bool all = true;
  for (const auto& c : report) {
    char line[160];
    std::snprintf(line, sizeof line, "%-18s %3zu instances %6zu coords  max rel err %.3e  %s\n",
                  c.name.c_str(), c.instances, c.coordinates, c.max_rel_error,
                  c.passed() ? "ok" : "FAIL");
    log << line;
    std::snprintf(line, sizeof line, "%s,%zu,%zu,%.6e,%d\n", c.name.c_str(), c.instances,
                  c.coordinates, c.max_rel_error, c.passed() ? 1 : 0);
    csv << line;
    all = all && c.passed();
  }
  return all;
}

}  // namespace vcfl::cli
