#include <benchmark/benchmark.h>

#include <random>

#include "dicegrad/dice_loss.hpp"
#include "dicegrad/grad_verify.hpp"

using namespace dicegrad;

namespace {

struct Inputs {
  BatchTensor gt;
  BatchTensor pred;
};

Inputs make_inputs(const Shape& s) {
  std::mt19937_64 rng(1);
  std::bernoulli_distribution bit(0.3);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  std::vector<double> y(s.size()), p(s.size());
  for (auto& v : y) v = bit(rng) ? 1.0 : 0.0;
  for (auto& v : p) v = u(rng);
  return {make_batch(s, y, Role::GroundTruth), make_batch(s, p, Role::Prediction)};
}

void BM_DiceEvaluate(benchmark::State& state) {
  const auto scheme = static_cast<ReductionScheme>(state.range(0));
  const Shape s{4, 4, static_cast<std::size_t>(state.range(1))};
  const auto in = make_inputs(s);
  DiceLossConfig cfg;
  cfg.scheme = scheme;
  for (auto _ : state) benchmark::DoNotOptimize(dice_evaluate(in.gt, in.pred, cfg));
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * s.size()));
  state.SetLabel(std::string(to_string(scheme)));
}
BENCHMARK(BM_DiceEvaluate)->ArgsProduct({{0, 1, 2, 3}, {1024, 16384}});

void BM_DiceForward(benchmark::State& state) {
  const Shape s{4, 4, 16384};
  const auto in = make_inputs(s);
  for (auto _ : state) benchmark::DoNotOptimize(dice_forward(in.gt, in.pred, {}));
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * s.size()));
}
BENCHMARK(BM_DiceForward);

void BM_Leaf(benchmark::State& state) {
  const Shape s{4, 4, 16384};
  const auto in = make_inputs(s);
  DiceLossConfig cfg;
  cfg.variant = DiceVariant::Leaf;
  for (auto _ : state) benchmark::DoNotOptimize(dice_evaluate(in.gt, in.pred, cfg));
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * s.size()));
}
BENCHMARK(BM_Leaf);

void BM_FiniteDiff(benchmark::State& state) {
  const Shape s{2, 3, 8};
  const auto in = make_inputs(s);
  for (auto _ : state) benchmark::DoNotOptimize(finite_diff_grad(in.gt, in.pred, {}));
}
BENCHMARK(BM_FiniteDiff);

}  // namespace
BENCHMARK_MAIN();
