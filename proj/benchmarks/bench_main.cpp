#include <benchmark/benchmark.h>

#include "csnorm/csnorm_layer.hpp"
#include "csnorm/ops.hpp"
#include "csnorm/spectral.hpp"
#include "csnorm/training.hpp"

using namespace csnorm;

namespace {

Tensor4 noise(const Shape& s, std::uint64_t seed) {
  Rng rng(seed, 0);
  Tensor4 t(s);
  for (double& v : t.data()) v = rng.uniform(0.0, 1.0);
  return t;
}

}  // namespace

// 3x3 conv, forward and backward, at the backbone's widest layer.
static void BM_Conv2dForwardBackward(benchmark::State& state) {
  const std::size_t hw = state.range(0);
  Tensor4 x = noise({4, 16, hw, hw}, 1);
  Tensor4 k = noise({32, 16, 3, 3}, 2);
  for (auto _ : state) {
    Tape t;
    const Value y = conv2d(t, t.parameter(x), t.parameter(k), 1, 1);
    t.backward(mean_square(t, y));
    benchmark::DoNotOptimize(k.grad().data());
  }
  state.SetItemsProcessed(state.iterations() * 4 * 32 * 16 * 9 * hw * hw);
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(8)->Arg(16)->Arg(32);

static void BM_Dft2d(benchmark::State& state) {
  const std::size_t hw = state.range(0);
  const Tensor4 img = noise({1, 3, hw, hw}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(dft2d(img).re.data());
}
BENCHMARK(BM_Dft2d)->Arg(8)->Arg(16)->Arg(32)->Arg(64);

static void BM_PerturbLightness(benchmark::State& state) {
  const std::size_t hw = state.range(0);
  const Tensor4 low = noise({4, 3, hw, hw}, 4), norm = noise({4, 3, hw, hw}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(perturb_lightness(low, norm, 0.5).data().data());
}
BENCHMARK(BM_PerturbLightness)->Arg(16)->Arg(32);

static void BM_CSNormForwardBackward(benchmark::State& state) {
  Rng rng(6, 0);
  CSNormLayer layer(32, 64, kGateEps, rng);
  Tensor4 x = noise({4, 32, 16, 16}, 7);
  for (auto _ : state) {
    Tape t;
    const CSNormBinding b = bind(t, layer, true);
    t.backward(mean_square(t, csnorm_forward(t, t.parameter(x), layer, b)));
    benchmark::DoNotOptimize(layer.gamma.grad().data());
  }
}
BENCHMARK(BM_CSNormForwardBackward);

// One step-1 plus one step-2 update of the full model.
static void BM_AlternatingStep(benchmark::State& state) {
  const std::size_t hw = state.range(0);
  SceneSpec spec = SceneSpec::domain_preset("A");
  spec.count = 4;
  spec.height = spec.width = hw;
  const Dataset d = gen_scene_pairs(spec);
  Tensor4 x, y;
  make_batch(d, {0, 1, 2, 3}, x, y);
  const Tensor4 perturbed = perturb_lightness(x, y, 0.5);
  ToyBackbone model(BackboneConfig{}, 1);
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::adam;
  cfg.lr_out = cfg.lr_in = 1e-4;
  cfg.delta = 1e-3;
  Optimizer opt(cfg.optimizer);
  for (auto _ : state) {
    alternating_update(model, opt, x, y, StepKind::outside, cfg);
    alternating_update(model, opt, perturbed, y, StepKind::inside, cfg);
  }
}
BENCHMARK(BM_AlternatingStep)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
