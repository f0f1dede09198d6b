#include <benchmark/benchmark.h>

#include "vcfl/dataset.hpp"
#include "vcfl/evalkit.hpp"
#include "vcfl/losses.hpp"
#include "vcfl/model.hpp"
#include "vcfl/rng.hpp"
#include "vcfl/siftbow.hpp"
#include "vcfl/trainer.hpp"

namespace {

vcfl::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  vcfl::RngStream rng(seed, 0);
  vcfl::Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

const vcfl::SynthDataset& dataset() {
  static const vcfl::SynthDataset ds = [] {
    vcfl::RngStream rng(1, vcfl::streams::kSplit);
    return vcfl::split(vcfl::generate(vcfl::GenConfig{}), rng);
  }();
  return ds;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 1);
  const auto b = random_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(vcfl::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_BatchHardTriplet(benchmark::State& state) {
  const auto p = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto f = random_matrix(p * k, 64, 3);
  std::vector<std::uint32_t> ids;
  for (std::size_t i = 0; i < p; ++i) ids.insert(ids.end(), k, static_cast<std::uint32_t>(i));
  for (auto _ : state) {
    const auto sel = vcfl::batch_hard_select(f, ids);
    benchmark::DoNotOptimize(vcfl::triplet_loss(f, sel, 0.3));
  }
}
BENCHMARK(BM_BatchHardTriplet)->Args({8, 4})->Args({30, 10});

void BM_DenseDescriptors(benchmark::State& state) {
  const auto& s = dataset().samples.front();
  for (auto _ : state)
    benchmark::DoNotOptimize(vcfl::extract_descriptors(s.image, dataset().height, dataset().width));
}
BENCHMARK(BM_DenseDescriptors);

void BM_ExtractorForwardBackward(benchmark::State& state) {
  vcfl::TrainConfig c;
  const auto params = vcfl::init_extractor(c.extractor_shape(dataset().pixels()), 1);
  std::vector<std::size_t> idx(32);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto images = dataset().images(idx);
  for (auto _ : state) {
    const auto fwd = vcfl::extractor_forward(params, images);
    benchmark::DoNotOptimize(vcfl::extractor_backward(params, fwd.cache, fwd.features));
  }
}
BENCHMARK(BM_ExtractorForwardBackward);

void BM_TrainStep(benchmark::State& state) {
  vcfl::TrainConfig c;
  c.flags = vcfl::AblationFlags{true, true, false};
  vcfl::Trainer trainer(c, dataset(), nullptr);
  std::uint64_t step = 0;
  for (auto _ : state) {
    const auto batch = trainer.batch_for(step);
    benchmark::DoNotOptimize(trainer.extractor_phase(batch, step, false));
    benchmark::DoNotOptimize(trainer.classifier_phase(batch, step));
    ++step;
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_Evaluate(benchmark::State& state) {
  vcfl::TrainConfig c;
  const auto params = vcfl::init_extractor(c.extractor_shape(dataset().pixels()), 1);
  for (auto _ : state) benchmark::DoNotOptimize(vcfl::evaluate(params, dataset(), {}, 1));
}
BENCHMARK(BM_Evaluate)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
