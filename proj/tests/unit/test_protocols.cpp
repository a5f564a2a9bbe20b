#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "commlim/error.hpp"
#include "commlim/protocols.hpp"
#include "commlim/rng.hpp"

using namespace commlim;

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// E ||theta_hat - theta||^2 by summing over every transcript of the bundle's tree.
double exact_risk(const ProtocolBundle& bundle, std::span<const double> theta) {
  auto tree = bundle.build_tree();
  auto dist = transcript_distribution(tree, bundle.sampling_model(), theta);
  double risk = 0.0;
  for (std::size_t y = 0; y < dist.size(); ++y) {
    if (dist[y] == 0.0) continue;
    auto est = estimate(bundle, Transcript{y, tree.depth()});
    double loss = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) loss += (est.theta[i] - theta[i]) * (est.theta[i] - theta[i]);
    risk += dist[y] * loss;
  }
  return risk;
}

}  // namespace

TEST_CASE("sharded layout deals coordinates round-robin") {
  ShardedLayout layout(5, 2, 3);
  CHECK(layout.slots() == 2);
  CHECK(layout.coordinate(0, 0) == 0);
  CHECK(layout.coordinate(0, 1) == 1);
  CHECK(layout.coordinate(1, 0) == 2);
  CHECK(layout.coordinate(1, 1) == 0);
  int total = 0;
  for (int i = 0; i < 3; ++i) {
    CHECK(layout.reports(i) >= 10 / 3);
    CHECK(layout.reports(i) <= 10 / 3 + 1);
    total += layout.reports(i);
  }
  CHECK(total == 10);
  ShardedLayout wide(2, 5, 3);
  CHECK(wide.slots() == 3);
}

TEST_CASE("sharded bits needs nk >= d") {
  auto m = Model::bernoulli(5, 0.5);
  CHECK_THROWS_AS(build_sharded_raw_bits(2, 2, m), BudgetError);
  CHECK_THROWS_AS(build_sharded_raw_bits(4, 2, Model::gaussian(2)), DomainError);
}

TEST_CASE("sharded bits exact risk at theta = 1/2") {
  auto m = Model::bernoulli(2, 0.5);
  auto bundle = build_sharded_raw_bits(4, 2, m);
  CHECK(validate_budget(bundle->build_tree()).valid);
  std::vector<double> half(2, 0.5);
  // d^2 / (4 n k) with d = 2, n = 4, k = 2.
  CHECK(exact_risk(*bundle, half) == doctest::Approx(4.0 / 32.0).epsilon(1e-12));

  auto m3 = Model::bernoulli(3, 0.5);
  auto single = build_sharded_raw_bits(3, 1, m3);
  std::vector<double> h3(3, 0.5);
  CHECK(exact_risk(*single, h3) == doctest::Approx(3.0 / 4.0).epsilon(1e-12));
}

TEST_CASE("sharded bits risk equals sum theta(1-theta)/m_i") {
  auto m = Model::bernoulli(3, 0.5);
  std::vector<double> theta{0.2, 0.55, 0.9};
  auto bundle = build_sharded_raw_bits(5, 2, m);
  ShardedLayout layout(5, 2, 3);
  double closed = 0.0;
  for (int i = 0; i < 3; ++i) closed += theta[i] * (1 - theta[i]) / layout.reports(i);
  CHECK(exact_risk(*bundle, theta) == doctest::Approx(closed).epsilon(1e-12));

  // Monte Carlo agreement on a size beyond enumeration.
  auto big_model = Model::bernoulli(20, 0.5);
  std::vector<double> t(20);
  for (int i = 0; i < 20; ++i) t[i] = 0.1 + 0.04 * i;
  auto big = build_sharded_raw_bits(37, 3, big_model);
  ShardedLayout big_layout(37, 3, 20);
  double expect = 0.0;
  for (int i = 0; i < 20; ++i) expect += t[i] * (1 - t[i]) / big_layout.reports(i);
  const int reps = 20000;
  double sum = 0.0;
  double sum2 = 0.0;
  for (int r = 0; r < reps; ++r) {
    auto est = estimate(*big, big->simulate(t, derive_key(3, {static_cast<std::uint64_t>(r)})));
    double loss = 0.0;
    for (int i = 0; i < 20; ++i) loss += (est.theta[i] - t[i]) * (est.theta[i] - t[i]);
    sum += loss;
    sum2 += loss * loss;
  }
  double mean = sum / reps;
  double se = std::sqrt((sum2 / reps - mean * mean) / (reps - 1));
  CHECK(std::abs(mean - expect) < 3 * se);
}

TEST_CASE("sharded bits estimator is unbiased") {
  auto m = Model::bernoulli(4, 0.5);
  std::vector<double> theta{0.15, 0.4, 0.5, 0.85};
  auto bundle = build_sharded_raw_bits(6, 2, m);
  ShardedLayout layout(6, 2, 4);
  const int reps = 100000;
  std::vector<double> mean(4, 0.0);
  for (int r = 0; r < reps; ++r) {
    auto est = estimate(*bundle, bundle->simulate(theta, derive_key(12, {static_cast<std::uint64_t>(r)})));
    for (int i = 0; i < 4; ++i) mean[i] += est.theta[i];
  }
  for (int i = 0; i < 4; ++i) {
    double se = std::sqrt(theta[i] * (1 - theta[i]) / layout.reports(i) / reps);
    CHECK(std::abs(mean[i] / reps - theta[i]) < 4 * se);
  }
}

TEST_CASE("sharded bits all-ones board decodes to one") {
  auto m = Model::bernoulli(3, 0.5);
  auto bundle = build_sharded_raw_bits(3, 1, m);
  std::vector<std::uint32_t> ones(3, 1U);
  for (double v : estimate(*bundle, ones).theta) CHECK(v == 1.0);
  std::vector<double> all_one(3, 1.0);
  for (double v : estimate(*bundle, bundle->simulate(all_one, 4)).theta) CHECK(v == 1.0);
}

TEST_CASE("board shape mismatches raise decode errors") {
  auto m = Model::bernoulli(3, 0.5);
  auto bundle = build_sharded_raw_bits(3, 1, m);
  std::vector<std::uint32_t> short_board(2, 0U);
  CHECK_THROWS_AS(estimate(*bundle, short_board), DecodeError);
  std::vector<std::uint32_t> wide(3, 2U);
  CHECK_THROWS_AS(estimate(*bundle, wide), DecodeError);
  CHECK_THROWS_AS(estimate(*bundle, Transcript{0, 5}), DecodeError);
}

TEST_CASE("probit saturated reports stay finite") {
  auto g = Model::gaussian(1);
  auto bundle = build_probit_grouping(3, 1, g, 5.0);
  std::vector<std::uint32_t> ones(3, 1U);
  auto est = estimate(*bundle, ones);
  REQUIRE(std::isfinite(est.theta[0]));
  CHECK(normal_cdf(est.theta[0]) == doctest::Approx(5.0 / 6.0).epsilon(1e-10));
  CHECK(est.diagnostics.at("saturated_coordinates") == 1.0);

  std::vector<std::uint32_t> zeros(3, 0U);
  CHECK(normal_cdf(estimate(*bundle, zeros).theta[0]) == doctest::Approx(1.0 / 6.0).epsilon(1e-10));

  auto clamped = build_probit_grouping(3, 1, g, 0.5);
  CHECK(estimate(*clamped, ones).theta[0] == 0.5);
}

TEST_CASE("probit decoder at p = 1/2 returns zero") {
  auto g = Model::gaussian(1);
  auto bundle = build_probit_grouping(4, 1, g);
  std::vector<std::uint32_t> half{1U, 0U, 1U, 0U};
  CHECK(std::abs(estimate(*bundle, half).theta[0]) < 1e-15);
}

TEST_CASE("probit decoder scales with sigma") {
  auto g = Model::gaussian(1, 2.0);
  auto bundle = build_probit_grouping(4, 1, g, 10.0);
  std::vector<std::uint32_t> three{1U, 1U, 1U, 0U};
  // p_hat = 3/4 and P(x > 0) = Phi(theta / sigma).
  CHECK(normal_cdf(estimate(*bundle, three).theta[0] / 2.0) == doctest::Approx(0.75).epsilon(1e-10));
}

TEST_CASE("probit is consistent") {
  auto g = Model::gaussian(1);
  auto bundle = build_probit_grouping(100000, 1, g);
  std::vector<double> theta{0.3};
  auto est = estimate(*bundle, bundle->simulate(theta, 5));
  CHECK(std::abs(est.theta[0] - 0.3) < 0.01);
}

TEST_CASE("probit tree matches its decoder statistics exactly") {
  auto g = Model::gaussian(2);
  auto bundle = build_probit_grouping(3, 2, g);
  auto tree = bundle->build_tree();
  CHECK(validate_budget(tree).valid);
  std::vector<double> theta{0.4, -0.2};
  auto dist = transcript_distribution(tree, g, theta);
  // Every sensor reports coordinates 0 and 1 once, so bit (j, c) is
  // Bernoulli(Phi(theta_c)) independently.
  double mean0 = 0.0;
  for (std::size_t y = 0; y < dist.size(); ++y) {
    auto msgs = bundle->split(Transcript{y, 6});
    for (auto msg : msgs) mean0 += dist[y] * ((msg >> 1) & 1U);
  }
  CHECK(mean0 / 3 == doctest::Approx(normal_cdf(0.4)).epsilon(1e-12));
}

TEST_CASE("simulate-and-infer layout") {
  auto l = simulate_and_infer_layout(16, 2, 4);
  CHECK(l.block == 2);
  CHECK(l.blocks == 2);
  CHECK(l.groups == 4);
  CHECK(l.idle == 0);
  auto wide = simulate_and_infer_layout(7, 3, 4);
  CHECK(wide.block == 4);
  CHECK(wide.blocks == 1);
  CHECK(wide.groups == 3);
  CHECK(wide.idle == 1);
  CHECK_THROWS_AS(simulate_and_infer_layout(2, 2, 4), BudgetError);
  CHECK_THROWS_AS(simulate_and_infer_layout(8, 1, 4), DomainError);
}

TEST_CASE("simulate-and-infer success law by exact enumeration") {
  struct Case {
    int k;
    std::vector<double> theta;
  };
  std::vector<Case> cases{
      {2, {0.25, 0.25, 0.25, 0.25}},
      {3, {0.25, 0.25, 0.25, 0.25}},
      {2, {0.1, 0.2, 0.3, 0.4}},
      {2, {0.5, 0.3, 0.2}},
  };
  for (const auto& c : cases) {
    const int d = static_cast<int>(c.theta.size());
    auto m = Model::multinomial(std::vector<double>(d, 1.0 / (d + 1)));
    const int block = std::min(d, (1 << c.k) - 2);
    const int blocks = (d + block - 1) / block;
    auto bundle = build_simulate_and_infer(2 * blocks, c.k, m);
    auto tree = bundle->build_tree();
    REQUIRE(validate_budget(tree).valid);
    auto dist = transcript_distribution(tree, bundle->sampling_model(), c.theta);
    double success = 0.0;
    std::vector<double> joint(d, 0.0);
    for (std::size_t y = 0; y < dist.size(); ++y) {
      if (dist[y] == 0.0) continue;
      auto est = estimate(*bundle, Transcript{y, tree.depth()});
      if (est.diagnostics.at("successes") == 1.0) {
        success += dist[y];
        for (int i = 0; i < d; ++i) joint[i] += dist[y] * est.theta[i];
      }
    }
    double none = 1.0;
    for (double t : c.theta) none *= 1.0 - t;
    CHECK(success == doctest::Approx(none).epsilon(1e-12));
    for (int i = 0; i < d; ++i) CHECK(joint[i] / success == doctest::Approx(c.theta[i]).epsilon(1e-12));
  }
  auto m4 = Model::multinomial(std::vector<double>(4, 0.2));
  auto b4 = build_simulate_and_infer(4, 2, m4);
  auto dist = transcript_distribution(b4->build_tree(), b4->sampling_model(), std::vector<double>(4, 0.25));
  double success = 0.0;
  for (std::size_t y = 0; y < dist.size(); ++y) {
    if (dist[y] > 0.0 && estimate(*b4, Transcript{y, 8}).diagnostics.at("successes") == 1.0) success += dist[y];
  }
  CHECK(success == doctest::Approx(0.31640625).epsilon(1e-12));
}

TEST_CASE("simulate-and-infer conditional law by Monte Carlo") {
  const int d = 6;
  auto m = Model::multinomial(std::vector<double>(d, 1.0 / (d + 1)));
  std::vector<double> theta{0.05, 0.1, 0.15, 0.2, 0.2, 0.3};
  const int n = 2 * 3 * 4000;
  auto bundle = build_simulate_and_infer(n, 2, m);
  std::vector<double> counts(d, 0.0);
  double successes = 0.0;
  for (std::uint64_t r = 0; r < 40; ++r) {
    auto est = estimate(*bundle, bundle->simulate(theta, derive_key(8, {r})));
    double s = est.diagnostics.at("successes");
    successes += s;
    for (int i = 0; i < d; ++i) counts[i] += est.theta[i] * s;
  }
  double groups = 40.0 * 4000.0;
  double p = 1.0;
  for (double t : theta) p *= 1.0 - t;
  CHECK(std::abs(successes / groups - p) < 3 * std::sqrt(p * (1 - p) / groups));
  // Pearson statistic against Multi(1; theta); 0.999 quantile of chi2(5) is 20.52.
  double chi2 = 0.0;
  for (int i = 0; i < d; ++i) {
    double e = successes * theta[i];
    chi2 += (counts[i] - e) * (counts[i] - e) / e;
  }
  CHECK(chi2 < 20.52);
}

TEST_CASE("simulate-and-infer degenerate point mass") {
  auto m = Model::multinomial({0.2, 0.3});
  auto bundle = build_simulate_and_infer(8, 2, m);
  std::vector<double> none{0.0, 0.0};
  auto board = bundle->simulate(none, 1);
  for (auto msg : board) CHECK(msg == 0U);
  auto est = estimate(*bundle, board);
  CHECK(est.degenerate);
  CHECK(est.theta == std::vector<double>{0.5, 0.5});
}

TEST_CASE("simulate-and-infer decoder rejects foreign boards") {
  auto m = Model::multinomial({0.2, 0.2, 0.2, 0.2});
  auto bundle = build_simulate_and_infer(5, 2, m);
  std::vector<std::uint32_t> bad_partner{0U, 1U, 0U, 0U, 0U};
  CHECK_THROWS_AS(estimate(*bundle, bad_partner), DecodeError);
  std::vector<std::uint32_t> bad_idle{0U, 0U, 0U, 0U, 3U};
  CHECK_THROWS_AS(estimate(*bundle, bad_idle), DecodeError);
  std::vector<std::uint32_t> ok{2U, 0U, 0U, 0U, 0U};
  auto est = estimate(*bundle, ok);
  CHECK(est.theta == std::vector<double>{1.0, 0.0, 0.0, 0.0});
}

TEST_CASE("make_bundle dispatches by name") {
  CHECK(make_bundle("sharded_bits", 4, 1, Model::bernoulli(2, 0.5))->name() == "sharded_bits");
  CHECK(make_bundle("probit_grouping", 4, 1, Model::gaussian(2))->name() == "probit_grouping");
  CHECK(make_bundle("simulate_and_infer", 4, 2, Model::multinomial({0.3, 0.3}))->name() == "simulate_and_infer");
  CHECK_THROWS_AS(make_bundle("nope", 4, 1, Model::gaussian(2)), DomainError);
}

TEST_CASE("lazy draws match observation views") {
  auto m = Model::bernoulli(5, 0.5);
  std::vector<double> theta(5, 0.3);
  auto x = sample_one(m, theta, 42);
  LazyDraw lazy(m, theta, 42);
  ObservationView view(x);
  for (int i = 0; i < 5; ++i) CHECK(lazy.coordinate(i) == view.coordinate(i));
  Observation outcome = Outcome{2};
  ObservationView ov(outcome);
  CHECK(ov.coordinate(0) == 0.0);
  CHECK(ov.coordinate(1) == 1.0);
}

TEST_CASE("run and simulate agree") {
  auto m = Model::bernoulli(4, 0.5);
  std::vector<double> theta(4, 0.6);
  auto bundle = build_sharded_raw_bits(4, 1, m);
  auto board = bundle->simulate(theta, 99);
  std::vector<Observation> xs;
  for (std::uint64_t j = 0; j < 4; ++j) xs.push_back(sample_one(m, theta, derive_key(99, {j})));
  CHECK(bundle->run(xs) == board);
  auto tree = bundle->build_tree();
  auto y = execute(tree, xs);
  CHECK(bundle->split(y) == board);
}
