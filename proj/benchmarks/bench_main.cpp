#include <benchmark/benchmark.h>

#include "advfilter/attacks.hpp"
#include "advfilter/classifiers.hpp"
#include "advfilter/corruption.hpp"
#include "advfilter/metrics.hpp"
#include "advfilter/sargan.hpp"

using namespace advfilter;

namespace {

ImageBatch uniform_batch(int64_t count, ImageShape shape) {
  auto gen = make_generator(1);
  return ImageBatch(torch::rand({count, shape.channels, shape.height, shape.width}, gen),
                    torch::randint(10, {count}, gen, torch::kInt64));
}

ImageShape shape_of(int64_t arg) { return arg == 0 ? ImageShape{28, 28, 1} : ImageShape{32, 32, 3}; }

void BM_GaussianNoise(benchmark::State& state) {
  const auto batch = uniform_batch(state.range(0), {28, 28, 1});
  uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(add_gaussian_noise(batch, {0.0, 0.5, true}, seed++));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GaussianNoise)->Arg(64)->Arg(1024);

void BM_MeanPsnr(benchmark::State& state) {
  const auto a = uniform_batch(state.range(0), {28, 28, 1});
  const auto b = add_gaussian_noise(a, GaussianNoiseSpec::fixed(0.1), 2);
  for (auto _ : state) benchmark::DoNotOptimize(mean_psnr(a, b));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MeanPsnr)->Arg(64)->Arg(1024);

void BM_GeneratorForward(benchmark::State& state) {
  const auto shape = shape_of(state.range(0));
  const auto g = build_generator(shape, 0);
  const auto batch = uniform_batch(64, shape);
  for (auto _ : state) benchmark::DoNotOptimize(generator_forward(g, batch));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_GeneratorForward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_PgdStep(benchmark::State& state) {
  const auto dataset = state.range(0) == 0 ? DatasetName::mnist : DatasetName::cifar10;
  const auto c = build_classifier(dataset, 0);
  const auto batch = uniform_batch(64, image_shape(dataset));
  const auto cfg = AttackConfig::standard(0.1, 1);
  for (auto _ : state) benchmark::DoNotOptimize(pgd_attack(c, batch, cfg));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_PgdStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
