#include <benchmark/benchmark.h>

#include "commlim/geometry.hpp"

using namespace commlim;

static void BM_HypercubeScan(benchmark::State& state) {
  const auto d = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(scan_hypercube_subsets(d, 1e-9, 1));
}
BENCHMARK(BM_HypercubeScan)->DenseRange(2, 4)->Unit(benchmark::kMillisecond);

static void BM_CapRatioSweep(benchmark::State& state) {
  const auto d = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(cap_ratio_sweep(d));
}
BENCHMARK(BM_CapRatioSweep)->Arg(100)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

static void BM_Psi2Normal(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(psi2_norm(NormalLaw{1.0}));
}
BENCHMARK(BM_Psi2Normal);

static void BM_TensorPower(benchmark::State& state) {
  const StepFunction halfspace{{0.0}, {0.0, 1.0}};
  const auto lift = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(tensor_power_compare(halfspace, lift));
}
BENCHMARK(BM_TensorPower)->Arg(4)->Arg(16);

BENCHMARK_MAIN();
