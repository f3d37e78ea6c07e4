#include "snp/rasterizer.hpp"
#include "snp/reference/rasterize_serial.hpp"

#include <benchmark/benchmark.h>

#include <map>
#include <random>

namespace {

using namespace snp;

struct Scene {
  FeaturizedPointCloud cloud;
  Camera camera;
};

// Points in a cube in front of the camera; radius keeps ~2 px footprints.
const Scene& scene(std::size_t n, int size) {
  static std::map<std::pair<std::size_t, int>, Scene> cache;
  auto [it, inserted] = cache.try_emplace({n, size});
  if (!inserted) return it->second;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> g(0.0, 0.3);
  auto& s = it->second;
  s.cloud = FeaturizedPointCloud::empty(27, 2.0 / size);
  s.cloud.positions.reserve(n);
  for (std::size_t i = 0; i < n; ++i) s.cloud.push_back(Vec3(u(rng), u(rng), u(rng)));
  for (double& f : s.cloud.features) f = g(rng);
  s.camera = Camera::look_at(Vec3(0, 0, -4), Vec3::Zero(), Vec3::UnitY(), 1.2 * size, size, size);
  return s;
}

RenderConfig config() {
  RenderConfig c;
  c.z_near = 1.0;
  c.z_far = 8.0;
  return c;
}

void BM_Tiled(benchmark::State& state) {
  const auto& s = scene(static_cast<std::size_t>(state.range(0)), static_cast<int>(state.range(1)));
  const auto cfg = config();
  for (auto _ : state) benchmark::DoNotOptimize(rasterize(s.cloud, s.camera, cfg).image.data.data());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_Serial(benchmark::State& state) {
  const auto& s = scene(static_cast<std::size_t>(state.range(0)), static_cast<int>(state.range(1)));
  const auto cfg = config();
  for (auto _ : state)
    benchmark::DoNotOptimize(reference::rasterize_serial(s.cloud, s.camera, cfg).image.data.data());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_Ensemble(benchmark::State& state) {
  const auto& s = scene(1000000, 256);
  auto cfg = config();
  cfg.subsets = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(rasterize_ensemble(s.cloud, s.camera, cfg).image.data.data());
}

BENCHMARK(BM_Tiled)->Args({10000, 64})->Args({100000, 128})->Args({1000000, 256})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Serial)->Args({10000, 64})->Args({100000, 128})->Args({1000000, 256})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Ensemble)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
