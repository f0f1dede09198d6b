#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "vcfl/error.hpp"

namespace {

enum ExitCode { kOk = 0, kValidation = 1, kRuntime = 2 };

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<std::size_t> workers;
  std::vector<std::string> overrides;
  std::string preset;
};

vcfl::cli::RunConfig resolve(const GlobalOptions& g) {
  vcfl::cli::RunConfig config;
  if (!g.preset.empty()) vcfl::cli::apply_preset(config, g.preset);
  if (!g.config_path.empty()) vcfl::cli::apply_config_file(config, g.config_path);
  for (const auto& o : g.overrides) vcfl::cli::apply_override(config, o);
  if (g.seed) config.seed = *g.seed;
  if (g.workers) config.workers = *g.workers;
  if (config.workers == 0) throw vcfl::ValidationError("--workers must be >= 1");
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"View confusion feature learning on synthetic multi-view data"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config_path, "JSON config file")->option_text("PATH");
  app.add_option("--seed", g.seed, "Global seed");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--workers", g.workers, "Worker threads for data-parallel sections");
  app.add_option("--set", g.overrides, "Override one config key, key=value")->option_text("KEY=VALUE");
  app.add_option("--preset", g.preset, "Named preset applied before the config file")
      ->check(CLI::IsMember({"paper", "desk", "vcfl-desk"}));

  std::string dataset, vocab, resume, checkpoint, perturb;
  bool no_clf = false, no_feat = false, no_sift = false;

  auto* gen = app.add_subcommand("gen-data", "Render the synthetic multi-view dataset");
  auto* voc = app.add_subcommand("train-vocab", "Train the BoW vocabulary on dense descriptors");
  voc->add_option("--data", dataset, "Dataset file")->required();
  auto* trn = app.add_subcommand("train", "Train the extractor and view classifier");
  trn->add_option("--data", dataset, "Dataset file")->required();
  trn->add_option("--vocab", vocab, "Vocabulary file (needed for sift confusion)");
  trn->add_option("--resume", resume, "Checkpoint to resume from");
  trn->add_flag("--no-classifier-confusion", no_clf);
  trn->add_flag("--no-feature-confusion", no_feat);
  trn->add_flag("--no-sift-confusion", no_sift);
  auto* evl = app.add_subcommand("eval", "CMC, mAP and view probe for a checkpoint");
  evl->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  evl->add_option("--data", dataset, "Dataset file")->required();
  auto* abl = app.add_subcommand("ablate", "Run the five ablation configurations");
  abl->add_option("--data", dataset, "Dataset file")->required();
  abl->add_option("--vocab", vocab, "Vocabulary file");
  auto* gck = app.add_subcommand("grad-check", "Finite-difference gradient check");
  gck->add_option("--perturb", perturb, "Test hook: corrupt one component's gradient");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    vcfl::cli::RunConfig config = resolve(g);
    auto opt = [](const std::string& s) -> std::optional<std::filesystem::path> {
      if (s.empty()) return std::nullopt;
      return std::filesystem::path(s);
    };
    if (*gen) {
      vcfl::cli::cmd_gen_data(config, g.out, std::cout);
    } else if (*voc) {
      vcfl::cli::cmd_train_vocab(config, dataset, g.out, std::cout);
    } else if (*trn) {
      if (no_clf) config.train.flags.classifier_confusion = false;
      if (no_feat) config.train.flags.feature_confusion = false;
      if (no_sift) config.train.flags.sift_confusion = false;
      vcfl::cli::cmd_train(config, {dataset, opt(vocab), opt(resume)}, g.out, std::cout);
    } else if (*evl) {
      vcfl::cli::cmd_eval(config, checkpoint, dataset, g.out, std::cout);
    } else if (*abl) {
      vcfl::cli::cmd_ablate(config, dataset, opt(vocab), g.out, std::cout);
    } else if (*gck) {
      if (!vcfl::cli::cmd_grad_check(config, g.out, std::cout, perturb)) {
        std::cerr << "error: gradient check failed\n";
        return kRuntime;
      }
    }
  } catch (const vcfl::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: invalid config: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}
