#include <benchmark/benchmark.h>

#include <map>
#include <string>

#include "rdslab/models.hpp"
#include "rdslab/sojourn.hpp"
#include "rdslab/stability.hpp"
#include "rdslab/ulam.hpp"

using namespace rdslab;

namespace {

const ModelSpec& model(const std::string& name) {
  static std::map<std::string, ModelSpec> cache;
  auto it = cache.find(name);
  if (it == cache.end()) it = cache.emplace(name, load_model(name)).first;
  return it->second;
}

void BM_BuildExact1D(benchmark::State& state) {
  const auto& m = model("north_south");
  const double eps = 8.0 / static_cast<double>(state.range(0));
  const Partition p(m.space, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(build_ulam(m.system(), NoiseLevel(eps), p).nnz());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BuildExact1D)->Arg(200)->Arg(800)->Arg(1600)->Unit(benchmark::kMillisecond);

void BM_BuildSampled2D(benchmark::State& state) {
  const auto& m = model("bowen");
  const auto n = static_cast<std::size_t>(state.range(0));
  const Partition p(m.space, n, n);
  UlamOptions o;
  o.seed = 1;
  for (auto _ : state) benchmark::DoNotOptimize(build_ulam(m.system(), NoiseLevel(0.1), p, o).nnz());
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n * n));
}
BENCHMARK(BM_BuildSampled2D)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_StationaryPowerIteration(benchmark::State& state) {
  const auto& m = model("north_south");
  const auto n = static_cast<std::size_t>(state.range(0));
  const double eps = 8.0 / static_cast<double>(n);
  const auto chain = build_ulam(m.system(), NoiseLevel(eps), Partition(m.space, n));
  const auto dec = recurrent_classes(chain);
  for (auto _ : state) benchmark::DoNotOptimize(stationary_measure(chain, dec.classes[0])[0]);
}
BENCHMARK(BM_StationaryPowerIteration)->Arg(400)->Arg(1600)->Unit(benchmark::kMillisecond);

void BM_Absorption(benchmark::State& state) {
  const auto& m = model("north_south");
  const auto n = static_cast<std::size_t>(state.range(0));
  const double eps = 8.0 / static_cast<double>(n);
  const auto chain = build_ulam(m.system(), NoiseLevel(eps), Partition(m.space, n));
  const auto dec = recurrent_classes(chain);
  for (auto _ : state) benchmark::DoNotOptimize(absorption(chain, dec).residual);
}
BENCHMARK(BM_Absorption)->Arg(400)->Arg(1600)->Unit(benchmark::kMillisecond);

void BM_RandomOrbit(benchmark::State& state) {
  const auto& m = model(state.range(0) == 0 ? "north_south" : "bowen");
  const Point x0 = m.space.dim() == 2 ? Point{0.1, 0.2} : Point{0.1, 0.0};
  std::uint64_t k = 0;
  for (auto _ : state) benchmark::DoNotOptimize(random_orbit(m.system(), x0, NoiseLevel(0.02), 1000, 1, k++).states.back());
  state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_RandomOrbit)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_SojournGlobal(benchmark::State& state) {
  const auto& m = model("north_south");
  const Partition p(m.space, 400);
  for (auto _ : state) benchmark::DoNotOptimize(sojourn_global(m.system(), NoiseLevel(0.02), 10000, 20, 5, p, 1)[0]);
  state.SetItemsProcessed(state.iterations() * 10000 * 100);
}
BENCHMARK(BM_SojournGlobal)->Unit(benchmark::kMillisecond);

void BM_W1Circle(benchmark::State& state) {
  const Partition p(StateSpace::circle(), static_cast<std::size_t>(state.range(0)));
  const auto a = MeasureVector::uniform(p);
  const auto b = MeasureVector::dirac(p, 0);
  for (auto _ : state) benchmark::DoNotOptimize(w1_distance(a, b));
}
BENCHMARK(BM_W1Circle)->Arg(1024)->Arg(65536);

}  // namespace

BENCHMARK_MAIN();
