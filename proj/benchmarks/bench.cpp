#include <benchmark/benchmark.h>

#include "rwpatch/attack.hpp"
#include "rwpatch/rng.hpp"
#include "rwpatch/scene.hpp"
#include "rwpatch/segmodel.hpp"

using namespace rwpatch;

namespace {

Tensor noise(Shape s, std::uint64_t seed) {
  RngStream rng(seed, "bench");
  Tensor t(std::move(s));
  for (float& v : t.vec()) v = rng.uniform();
  return t;
}

std::vector<SceneSample> scenes(std::size_t n) {
  DatasetConfig cfg;
  std::vector<SceneSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto layout = canonical_scene(cfg.scenes[i % 3]);
    float b = 1;
    std::uint64_t ts = 0;
    const auto cam = sample_camera(cfg, layout, 1, "train", i, &b, &ts);
    RenderOptions ro;
    ro.brightness = b;
    ro.texture_seed = ts;
    out.push_back(render_scene(layout, cam, ro));
  }
  return out;
}

}  // namespace

static void BM_Conv3x3(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const Tensor x = noise({c, 64, 128}, 1), k = noise({c, c, 3, 3}, 2);
  for (auto _ : state) {
    ad::Tape<float> t;
    benchmark::DoNotOptimize(ad::conv2d(t.constant(x), t.constant(k), 1, 1).value().data().data());
  }
}
BENCHMARK(BM_Conv3x3)->Arg(3)->Arg(16)->Unit(benchmark::kMillisecond);

static void BM_ConvBackward(benchmark::State& state) {
  const Tensor x = noise({16, 64, 128}, 1), k = noise({16, 16, 3, 3}, 2);
  for (auto _ : state) {
    ad::Tape<float> t;
    const auto xv = t.leaf(x, true);
    t.backward(ad::sum(ad::conv2d(xv, t.constant(k), 1, 1)));
    benchmark::DoNotOptimize(xv.grad().data().data());
  }
}
BENCHMARK(BM_ConvBackward)->Unit(benchmark::kMillisecond);

static void BM_ModelForward(benchmark::State& state) {
  const SegModel model(ModelConfig{});
  const Tensor img = noise({3, 64, 128}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(img).data().data());
}
BENCHMARK(BM_ModelForward)->Unit(benchmark::kMillisecond);

static void BM_RenderScene(benchmark::State& state) {
  DatasetConfig cfg;
  const auto layout = canonical_scene("B");
  const auto cam = sample_camera(cfg, layout, 1, "train", 0, nullptr, nullptr);
  for (auto _ : state) benchmark::DoNotOptimize(render_scene(layout, cam, {}).image.data().data());
}
BENCHMARK(BM_RenderScene)->Unit(benchmark::kMillisecond);

// One epoch over four images, i.e. four patch updates.
static void BM_AttackEpoch(benchmark::State& state) {
  const SegModel model(ModelConfig{});
  const auto data = scenes(4);
  AttackConfig cfg = AttackConfig::defaults_for(state.range(0) ? AttackMode::eot : AttackMode::no_eot);
  cfg.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(optimize_patch(model, data, cfg).patch.delta.data().data());
}
BENCHMARK(BM_AttackEpoch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
