#include <benchmark/benchmark.h>

#include "dicegrad/synth.hpp"
#include "dicegrad/trainer.hpp"

using namespace dicegrad;

namespace {

void BM_Featurize(benchmark::State& state) {
  GeneratorParams p;
  p.image_size = static_cast<std::size_t>(state.range(0));
  p.count_a = p.count_b = 1;
  const auto ds = generate_binary(p, 1);
  for (auto _ : state) benchmark::DoNotOptimize(featurize(ds.samples[0].image));
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * p.image_size * p.image_size));
}
BENCHMARK(BM_Featurize)->Arg(32)->Arg(64);

void BM_ForwardBackward(benchmark::State& state) {
  GeneratorParams p;
  p.image_size = 48;
  p.count_a = 4;
  p.count_b = 1;
  const auto ds = generate_multiclass(p, 1);
  std::vector<PixelFeatures> batch;
  std::vector<BatchTensor> gts;
  for (std::size_t k = 0; k < 4; ++k) {
    batch.push_back(featurize(ds.samples[k].image));
    gts.push_back(ds.samples[k].gt);
  }
  const auto gt = stack_batch(gts);
  const auto model = LinearPixelModel::zeros(Head::Softmax, 4);
  DiceLossConfig cfg;
  cfg.ignored_class = 0;
  for (auto _ : state) {
    const auto pred = model_forward(model, batch);
    const auto grad = dice_backward(gt, pred, cfg);
    benchmark::DoNotOptimize(model_backward(model, batch, grad));
  }
}
BENCHMARK(BM_ForwardBackward);

void BM_Train(benchmark::State& state) {
  const auto ds = generate_binary({}, 7);
  TrainConfig cfg;
  cfg.iterations = 50;
  cfg.batch_size = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(train(ds, cfg));
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * cfg.iterations));
}
BENCHMARK(BM_Train)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace
