#include <benchmark/benchmark.h>

#include "commlim/blackboard.hpp"

using namespace commlim;

static void BM_TranscriptDistribution(benchmark::State& state) {
  const auto sensors = static_cast<int>(state.range(0));
  const Model m = Model::bernoulli(3, 0.5);
  const auto tree = random_tree(sensors, 2, m, 17);
  const std::vector<double> theta(3, 0.4);
  for (auto _ : state) benchmark::DoNotOptimize(transcript_distribution(tree, m, theta));
}
BENCHMARK(BM_TranscriptDistribution)->DenseRange(2, 8, 2);

static void BM_ProtocolIdentities(benchmark::State& state) {
  const Model m = Model::multinomial({0.25, 0.3});
  const auto tree = random_tree(3, 2, m, 5);
  const std::vector<Observation> xs{Outcome{1}, Outcome{2}, Outcome{3}};
  for (auto _ : state) benchmark::DoNotOptimize(check_protocol_identities(tree, xs));
}
BENCHMARK(BM_ProtocolIdentities);

static void BM_Execute(benchmark::State& state) {
  const Model m = Model::gaussian(4);
  const auto tree = random_tree(4, 3, m, 3);
  const auto xs = sample(m, std::vector<double>(4, 0.0), 4, 9);
  for (auto _ : state) benchmark::DoNotOptimize(execute(tree, xs));
}
BENCHMARK(BM_Execute);

BENCHMARK_MAIN();
