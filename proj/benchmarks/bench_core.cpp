#include <benchmark/benchmark.h>

#include "uuconv/losses.hpp"
#include "uuconv/model.hpp"
#include "uuconv/ops.hpp"
#include "uuconv/rng.hpp"

using namespace uuconv;

namespace {

Tensor randn(Shape shape, Rng& rng, double stddev = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.values()) v = rng.normal() * stddev;
  return t;
}

void BM_Conv2dIm2col(benchmark::State& state) {
  const std::size_t c = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  Tensor x = randn({1, c, 28, 28}, rng);
  Tensor w = randn({c, c, 3, 3}, rng, 0.1);
  Tensor b = randn({c}, rng, 0.1);
  for (auto _ : state) {
    Tensor out = conv2d(nullptr, x, w, b, 1, 1, 1);
    benchmark::DoNotOptimize(out.values().data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Conv2dIm2col)->Arg(16)->Arg(32)->Arg(64)->Complexity();

void BM_DepthwiseConv7x7(benchmark::State& state) {
  const std::size_t c = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  Tensor x = randn({1, c, 28, 28}, rng);
  Tensor w = randn({c, 1, 7, 7}, rng, 0.1);
  Tensor b = randn({c}, rng, 0.1);
  for (auto _ : state) {
    Tensor out = conv2d(nullptr, x, w, b, 1, 3, c);
    benchmark::DoNotOptimize(out.values().data());
  }
}
BENCHMARK(BM_DepthwiseConv7x7)->Arg(32)->Arg(96);

void BM_ToyForwardSeg(benchmark::State& state) {
  const ModelConfig cfg = ModelConfig::toy();
  Model model = Model::create(cfg, 5);
  Rng rng(3);
  Tensor image = randn({2, 3, 64, 64}, rng, 0.3);
  const std::vector<PromptSet> prompts{{0, 0, 0, 0}, {1, 3, 1, 1}};
  for (auto _ : state) {
    ForwardResult out = model.forward(nullptr, image, prompts, TaskKind::kSeg);
    benchmark::DoNotOptimize(out.seg_logits.values().data());
  }
}
BENCHMARK(BM_ToyForwardSeg);

void BM_ToyTrainStep(benchmark::State& state) {
  const ModelConfig cfg = ModelConfig::toy();
  Model model = Model::create(cfg, 6);
  Rng rng(4);
  Tensor image = randn({2, 3, 64, 64}, rng, 0.3);
  const std::vector<PromptSet> prompts{{0, 0, 0, 0}, {1, 3, 1, 1}};
  std::vector<int> targets(2 * 64 * 64);
  for (auto& t : targets) t = static_cast<int>(rng.below(2));
  const LossWeights lw;
  for (auto _ : state) {
    model.params().zero_grad();
    Tape tape;
    ForwardResult out = model.forward(&tape, image, prompts, TaskKind::kSeg);
    Tensor loss = seg_loss(&tape, out.seg_logits, targets, lw);
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_ToyTrainStep);

}  // namespace

BENCHMARK_MAIN();
