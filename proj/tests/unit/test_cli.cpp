#include <doctest.h>

#include <nlohmann/json.hpp>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ablation.hpp"
#include "oracles.hpp"
#include "run_config.hpp"
#include "vcfl/error.hpp"

namespace fs = std::filesystem;
using vcfl::testing::scratch_dir;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run vcfl_run(const std::string& args) {
  static int counter = 0;
  const fs::path log = scratch_dir("cli_logs") / ("run" + std::to_string(counter++) + ".txt");
  const std::string cmd = std::string(VCFL_CLI_BINARY) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

// 8 identities, 16x16 images, an 8-d embedding and an 8-word vocabulary.
const std::string kSmall =
    "--set gen.num_identities=8 --set gen.samples_per_view=3 --set gen.height=16 "
    "--set gen.width=16 --set vocab.k=8 --set train.feature_dim=8 "
    "--set train.extractor_hidden=[16] --set train.classifier_hidden=6 --set train.p=4 "
    "--set train.k=2 --set train.steps=12 ";

struct SmallData {
  fs::path dir;
  fs::path dataset;
  fs::path vocab;
};

const SmallData& small_data() {
  static const SmallData data = [] {
    SmallData d;
    d.dir = scratch_dir("cli_small");
    REQUIRE(vcfl_run(kSmall + "--out " + d.dir.string() + " gen-data").code == 0);
    d.dataset = d.dir / "dataset.bin";
    REQUIRE(vcfl_run(kSmall + "--out " + d.dir.string() + " train-vocab --data " +
                     d.dataset.string()).code == 0);
    d.vocab = d.dir / "vocab.bin";
    return d;
  }();
  return data;
}

std::string train_args(const fs::path& out) {
  return kSmall + "--out " + out.string() + " train --data " + small_data().dataset.string() +
         " --vocab " + small_data().vocab.string();
}

}  // namespace

TEST_CASE("gen-data: default counts, determinism and the config echo") {
  const auto a = scratch_dir("cli_gen_a");
  const auto b = scratch_dir("cli_gen_b");
  const Run ra = vcfl_run("--seed 4 --out " + a.string() + " gen-data");
  REQUIRE(ra.code == 0);
  CHECK(ra.output.find("wrote 768 samples") != std::string::npos);
  REQUIRE(vcfl_run("gen-data --out " + b.string() + " --seed 4").code == 0);
  CHECK(slurp(a / "dataset.bin") == slurp(b / "dataset.bin"));

  const auto echo = nlohmann::json::parse(slurp(a / "config.json"));
  CHECK(echo["seed"] == 4);
  CHECK(echo["gen"]["num_identities"] == 32);
  CHECK(echo["vocab"]["k"] == 64);
  CHECK(echo["train"]["lambda"] == 0.5);
}

TEST_CASE("gen-data rejects an image size below the minimum") {
  const Run r = vcfl_run("--out " + scratch_dir("cli_gen_bad").string() + " --set gen.height=4 gen-data");
  CHECK(r.code == 1);
  CHECK(r.output.find("8") != std::string::npos);
}

TEST_CASE("config validation and exit codes") {
  const auto out = scratch_dir("cli_cfg").string();
  CHECK(vcfl_run("--out " + out + " --set train.no_such_key=1 gen-data").code == 1);
  CHECK(vcfl_run("--out " + out + " --set novalue gen-data").code == 1);
  CHECK(vcfl_run("--out " + out + " --bogus-flag gen-data").code == 1);
  CHECK(vcfl_run("--out " + out).code == 1);
  CHECK(vcfl_run("--out " + out + " --set train.momentum=1.5 train --data x --vocab y").code == 1);
  CHECK(vcfl_run("--out " + out + " --preset nope gen-data").code == 1);
  CHECK(vcfl_run("--out " + out + " --config /nonexistent.json gen-data").code == 1);
}

TEST_CASE("config file, preset and overrides apply in order") {
  const auto dir = scratch_dir("cli_precedence");
  {
    std::ofstream cfg(dir / "run.json");
    cfg << R"({"preset": "paper", "train": {"steps": 5, "lambda": 0.25}, "gen": {"pixel_noise": 0.01}})";
  }
  vcfl::cli::RunConfig c;
  vcfl::cli::apply_config_file(c, dir / "run.json");
  vcfl::cli::apply_override(c, "train.lambda=0.75");
  vcfl::cli::apply_override(c, "train.extractor_policy=constant");
  CHECK(c.train.p == 30);
  CHECK(c.train.k == 10);
  CHECK(c.train.steps == 5);
  CHECK(c.train.weights.adversarial == 0.75);
  CHECK(c.gen.pixel_noise == 0.01);
  CHECK(c.train.extractor_policy == vcfl::ExtractorLrPolicy::kConstant);
  CHECK_THROWS_AS(vcfl::cli::apply_override(c, "gen.views.sideways.gain=2"), vcfl::ValidationError);

  vcfl::cli::RunConfig round;
  vcfl::cli::apply_json(round, vcfl::cli::to_json(c));
  CHECK(vcfl::cli::to_json(round) == vcfl::cli::to_json(c));
}

TEST_CASE("train-vocab: determinism and the descriptor-count limit") {
  const auto& d = small_data();
  const auto again = scratch_dir("cli_vocab_again");
  REQUIRE(vcfl_run(kSmall + "--out " + again.string() + " train-vocab --data " + d.dataset.string()).code == 0);
  CHECK(slurp(again / "vocab.bin") == slurp(d.vocab));
  CHECK(slurp(again / "bow.bin") == slurp(d.dir / "bow.bin"));
  const Run big = vcfl_run(kSmall + "--set vocab.k=100000 --out " + again.string() +
                           " train-vocab --data " + d.dataset.string());
  CHECK(big.code != 0);
  CHECK(big.output.find("descriptors") != std::string::npos);
}

TEST_CASE("train: baseline flags, missing vocabulary and resume equivalence") {
  const auto& d = small_data();
  const auto base = scratch_dir("cli_train_base");
  REQUIRE(vcfl_run(kSmall + "--out " + base.string() + " train --data " + d.dataset.string() +
                   " --no-classifier-confusion --no-feature-confusion --no-sift-confusion").code == 0);
  const std::string log = slurp(base / "train_log.csv");
  CHECK(log.rfind("step,phase,L_trip,L_fc,L_sg,L_d_minus,L_d_plus,mean_p_common,lr_f,lr_d\n", 0) == 0);
  CHECK(log.find(",classifier,") == std::string::npos);
  CHECK(log.find(",extractor,") != std::string::npos);

  const Run missing = vcfl_run(kSmall + "--out " + base.string() + " train --data " + d.dataset.string());
  CHECK(missing.code == 1);
  CHECK(missing.output.find("--vocab") != std::string::npos);

  const auto full = scratch_dir("cli_train_full");
  REQUIRE(vcfl_run("--set train.checkpoint_interval=4 " + train_args(full)).code == 0);
  CHECK(fs::exists(full / "checkpoints" / "ckpt_000004.bin"));
  const auto resumed = scratch_dir("cli_train_resumed");
  REQUIRE(vcfl_run(train_args(resumed) + " --resume " + (full / "checkpoints" / "ckpt_000008.bin").string()).code == 0);
  CHECK(slurp(resumed / "final.ckpt") == slurp(full / "final.ckpt"));
}

TEST_CASE("train and eval outputs do not depend on the worker count") {
  const auto one = scratch_dir("cli_workers_1");
  const auto three = scratch_dir("cli_workers_3");
  REQUIRE(vcfl_run("--workers 1 " + train_args(one)).code == 0);
  REQUIRE(vcfl_run("--workers 3 " + train_args(three)).code == 0);
  CHECK(slurp(one / "final.ckpt") == slurp(three / "final.ckpt"));
  CHECK(slurp(one / "train_log.csv") == slurp(three / "train_log.csv"));
}

TEST_CASE("eval: metric rows, byte-identical reruns and a missing checkpoint") {
  const auto& d = small_data();
  const auto trained = scratch_dir("cli_eval_train");
  REQUIRE(vcfl_run(train_args(trained)).code == 0);
  const auto e1 = scratch_dir("cli_eval_1");
  const auto e2 = scratch_dir("cli_eval_2");
  const std::string args = " eval --checkpoint " + (trained / "final.ckpt").string() + " --data " + d.dataset.string();
  REQUIRE(vcfl_run(kSmall + "--out " + e1.string() + args).code == 0);
  REQUIRE(vcfl_run(kSmall + "--out " + e2.string() + args).code == 0);
  const std::string metrics = slurp(e1 / "metrics.csv");
  std::istringstream lines(metrics);
  std::vector<std::string> keys;
  for (std::string line; std::getline(lines, line);) keys.push_back(line.substr(0, line.find(',')));
  REQUIRE(keys.size() >= 6);
  keys.resize(6);
  CHECK(keys == std::vector<std::string>{"metric", "rank1", "rank5", "rank10", "mAP", "view_probe_acc"});
  CHECK(metrics == slurp(e2 / "metrics.csv"));
  CHECK(slurp(e1 / "cmc.csv") == slurp(e2 / "cmc.csv"));

  CHECK(vcfl_run("--out " + e1.string() + " eval --checkpoint /nonexistent.ckpt --data " + d.dataset.string()).code == 1);
}

TEST_CASE("ablate: five labelled rows, identical under zero steps") {
  const auto& d = small_data();
  const auto out = scratch_dir("cli_ablate");
  REQUIRE(vcfl_run(kSmall + "--set train.steps=0 --set ablate.seeds=[1,2] --out " + out.string() +
                   " ablate --data " + d.dataset.string() + " --vocab " + d.vocab.string()).code == 0);
  std::istringstream lines(slurp(out / "ablation.csv"));
  std::string header;
  std::getline(lines, header);
  CHECK(header == "configuration,rank1,rank5,rank10,mAP,view_probe_acc");
  std::vector<std::string> labels, values;
  for (std::string line; std::getline(lines, line);) {
    labels.push_back(line.substr(0, line.find(',')));
    values.push_back(line.substr(line.find(',')));
  }
  const auto& rows = vcfl::cli::ablation_rows();
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].flags == vcfl::AblationFlags::baseline());
  CHECK(rows[4].flags == vcfl::AblationFlags{true, true, true});
  for (std::size_t i = 1; i < 4; ++i) {
    const auto& f = rows[i].flags;
    CHECK(int(f.classifier_confusion) + int(f.feature_confusion) + int(f.sift_confusion) == 1);
  }
  CHECK(labels == std::vector<std::string>{"baseline", "classifier based confusion",
                                           "feature based confusion", "sift based confusion",
                                           "view confusion"});
  for (const auto& v : values) CHECK(v == values.front());
  CHECK(fs::exists(out / "ablation_seeds.csv"));
}

TEST_CASE("grad-check: all components pass, a perturbed one fails") {
  const auto out = scratch_dir("cli_grad");
  const Run ok = vcfl_run("--out " + out.string() + " grad-check");
  CHECK(ok.code == 0);
  for (const char* name : {"triplet", "center", "sift_guided", "view_d_plus", "view_d_minus",
                           "extractor_layers", "classifier_layers"})
    CHECK(ok.output.find(name) != std::string::npos);
  const Run bad = vcfl_run("--out " + out.string() + " grad-check --perturb center");
  CHECK(bad.code == 2);
  CHECK(slurp(out / "grad_check.csv").find("center,") != std::string::npos);
}
