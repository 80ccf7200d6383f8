#include <benchmark/benchmark.h>

#include "mpa/auca.hpp"
#include "mpa/bank.hpp"
#include "mpa/classifier.hpp"
#include "mpa/episodes.hpp"
#include "mpa/hma.hpp"
#include "mpa/rng.hpp"
#include "mpa/synth.hpp"

using namespace mpa;

namespace {

std::vector<LabeledRow> rows(std::uint32_t n, std::uint32_t dim, std::uint32_t classes) {
  RngStream rng(1);
  std::vector<LabeledRow> out;
  for (std::uint32_t i = 0; i < n; ++i) {
    std::vector<double> v(dim);
    for (auto& x : v) x = rng.normal() + (i % classes == 0 ? 1.0 : 0.0);
    out.push_back({EmbeddingVector(std::move(v)), i % classes});
  }
  return out;
}

void BM_LossGradient(benchmark::State& state) {
  const auto dim = static_cast<std::uint32_t>(state.range(0));
  const Dataset data(rows(80, dim, 6));
  const auto model = LogisticModel::zeros(6, dim);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_gradient(model, data, 1.0));
}
BENCHMARK(BM_LossGradient)->Arg(64)->Arg(768);

void BM_Train(benchmark::State& state) {
  const auto dim = static_cast<std::uint32_t>(state.range(0));
  const Dataset data(rows(80, dim, 6));
  for (auto _ : state) benchmark::DoNotOptimize(train(data, TrainConfig{}));
}
BENCHMARK(BM_Train)->Arg(64)->Arg(768)->Unit(benchmark::kMillisecond);

void BM_GenerateViews(benchmark::State& state) {
  Raster img(224, 224);
  RngStream fill(2);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(fill.below(256));
  const ViewPlan plan;
  for (auto _ : state) {
    RngStream rng(3);
    benchmark::DoNotOptimize(generate_views(img, plan, rng));
  }
}
BENCHMARK(BM_GenerateViews)->Unit(benchmark::kMillisecond);

void BM_GaussianSample(benchmark::State& state) {
  RngStream rng(4);
  for (auto _ : state) benchmark::DoNotOptimize(sample_gaussian(768, rng));
}
BENCHMARK(BM_GaussianSample);

void BM_BankRoundTrip(benchmark::State& state) {
  std::vector<LabeledEmbedding> recs;
  RngStream rng(5);
  for (std::uint32_t i = 0; i < 1000; ++i) {
    std::vector<double> v(768);
    for (auto& x : v) x = rng.normal();
    recs.push_back({i % 10, i, 0, Modality::VisualRaw, EmbeddingVector(std::move(v))});
  }
  for (auto _ : state) benchmark::DoNotOptimize(decode_bank(encode_bank(recs)));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * recs.size() * record_bytes(768)));
}
BENCHMARK(BM_BankRoundTrip)->Unit(benchmark::kMillisecond);

void BM_Episode(benchmark::State& state) {
  RegimeBankConfig cfg;
  cfg.regime = Regime::Clustered;
  cfg.dim = 512;
  cfg.views_per_item = 10;
  cfg.semantic_per_class = 5;
  const auto bank = synthesize_regime_bank(cfg);
  PipelineConfig pc;
  pc.flags = {state.range(0) != 0, state.range(0) != 0, state.range(0) != 0};
  const SemanticResolver none;
  std::uint64_t idx = 0;
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_episode(bank, EpisodeSpec{}, idx++, pc, none));
}
BENCHMARK(BM_Episode)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
