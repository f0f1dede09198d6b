#include "ablation.hpp"

#include <cstdio>
#include <fstream>

#include "vcfl/error.hpp"

namespace vcfl::cli {

const std::vector<AblationRow>& ablation_rows() {
  static const std::vector<AblationRow> rows = {
      {"baseline", {false, false, false}},
      {"classifier based confusion", {true, false, false}},
      {"feature based confusion", {false, true, false}},
      {"sift based confusion", {false, false, true}},
      {"view confusion", {true, true, true}},
  };
  return rows;
}

double AblationResult::mean_rank(std::size_t row, std::size_t r) const {
  double sum = 0.0;
  for (const auto& rep : reports.at(row)) sum += rep.rank(r);
  return sum / static_cast<double>(reports.at(row).size());
}

double AblationResult::mean_map(std::size_t row) const {
  double sum = 0.0;
  for (const auto& rep : reports.at(row)) sum += rep.map;
  return sum / static_cast<double>(reports.at(row).size());
}

double AblationResult::mean_view_probe(std::size_t row) const {
  double sum = 0.0;
  for (const auto& rep : reports.at(row)) sum += rep.view_probe_accuracy;
  return sum / static_cast<double>(reports.at(row).size());
}

AblationResult run_ablation(const RunConfig& config, const SynthDataset& dataset,
                            const Matrix* bow, const AblationProgress& progress) {
  if (config.ablate_seeds.empty()) throw ValidationError("ablate.seeds must not be empty");
  AblationResult result;
  result.seeds = config.ablate_seeds;
  result.reports.resize(ablation_rows().size());
  for (const std::uint64_t seed : config.ablate_seeds) {
    for (std::size_t row = 0; row < ablation_rows().size(); ++row) {
      TrainConfig train = config.train;
      train.seed = seed;
      train.flags = ablation_rows()[row].flags;
      TrainOptions options;
      options.audit = false;
      const TrainResult trained = vcfl::train(train, dataset, bow, options);
      EvalReport report = evaluate(trained.final_state.extractor, dataset, config.eval, seed);
      if (progress) progress(ablation_rows()[row].label, seed, report);
      result.reports[row].push_back(std::move(report));
    }
  }
  return result;
}

namespace {

void write_metric_columns(std::ofstream& out, double r1, double r5, double r10, double map,
                          double probe) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%.10f,%.10f,%.10f,%.10f,%.10f\n", r1, r5, r10, map, probe);
  out << buf;
}

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  return out;
}

}  // namespace

void write_ablation_csv(const AblationResult& result, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "configuration,rank1,rank5,rank10,mAP,view_probe_acc\n";
  for (std::size_t row = 0; row < ablation_rows().size(); ++row) {
    out << ablation_rows()[row].label << ',';
    write_metric_columns(out, result.mean_rank(row, 1), result.mean_rank(row, 5),
                         result.mean_rank(row, 10), result.mean_map(row),
                         result.mean_view_probe(row));
  }
}

void write_ablation_seed_csv(const AblationResult& result, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "seed,configuration,rank1,rank5,rank10,mAP,view_probe_acc\n";
  for (std::size_t s = 0; s < result.seeds.size(); ++s)
    for (std::size_t row = 0; row < ablation_rows().size(); ++row) {
      const EvalReport& rep = result.reports[row][s];
      out << result.seeds[s] << ',' << ablation_rows()[row].label << ',';
      write_metric_columns(out, rep.rank(1), rep.rank(5), rep.rank(10), rep.map,
                           rep.view_probe_accuracy);
    }
}

}  // namespace vcfl::cli
