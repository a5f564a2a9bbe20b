#include <benchmark/benchmark.h>

#include <string>

#include "commlim/protocols.hpp"
#include "commlim/risk.hpp"

using namespace commlim;

static void BM_SimulateSharded(benchmark::State& state) {
  const auto n = static_cast<int>(state.range(0));
  const Model m = Model::bernoulli(16, 0.5);
  const auto bundle = build_sharded_raw_bits(n, 2, m);
  std::uint64_t key = 0;
  for (auto _ : state) benchmark::DoNotOptimize(bundle->simulate(m.theta0(), key++));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_SimulateSharded)->RangeMultiplier(10)->Range(100, 100000);

static void BM_SimulateAndInfer(benchmark::State& state) {
  const auto k = static_cast<int>(state.range(0));
  const Model m = Model::multinomial(std::vector<double>(64, 1.0 / 65));
  const auto bundle = build_simulate_and_infer(200000, k, m);
  const std::vector<double> theta(64, 1.0 / 64);
  std::uint64_t key = 0;
  for (auto _ : state) benchmark::DoNotOptimize(estimate(*bundle, bundle->simulate(theta, key++)));
}
BENCHMARK(BM_SimulateAndInfer)->DenseRange(2, 5)->Unit(benchmark::kMillisecond);

static void BM_ProbitExperiment(benchmark::State& state) {
  ExperimentConfig cfg;
  cfg.model = ModelSpec{Family::gaussian_location, 10, 1.0, 0, {}};
  cfg.protocol = "probit_grouping";
  cfg.n = 20000;
  cfg.replications = 20;
  cfg.threads = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(run_experiment(cfg));
}
BENCHMARK(BM_ProbitExperiment)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
