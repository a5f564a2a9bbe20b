#include <benchmark/benchmark.h>

#include "commlim/oracle.hpp"

using namespace commlim;

static void BM_KlChain(benchmark::State& state) {
  const auto sensors = static_cast<int>(state.range(0));
  const Model m = Model::bernoulli(3, 0.5);
  const HypothesisCube cube(m, 0.1);
  const auto tree = random_tree(sensors, 2, m, 11);
  for (auto _ : state) benchmark::DoNotOptimize(kl_chain_quantities(tree, cube));
}
BENCHMARK(BM_KlChain)->DenseRange(1, 6);

static void BM_ExactTestError(benchmark::State& state) {
  const Model m = Model::bernoulli(3, 0.5);
  const HypothesisCube cube(m, 0.2);
  const auto tree = random_tree(3, 2, m, 4);
  for (auto _ : state) benchmark::DoNotOptimize(exact_test_error(tree, cube));
}
BENCHMARK(BM_ExactTestError);

BENCHMARK_MAIN();
