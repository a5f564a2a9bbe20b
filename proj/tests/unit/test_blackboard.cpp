#include <doctest.h>

#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "commlim/blackboard.hpp"
#include "commlim/error.hpp"
#include "commlim/rng.hpp"

using namespace commlim;

namespace {

Node leaf_parent(int label, Predicate p) { return Node{label, std::move(p), -1, -1}; }

TruthTable identity_bit(std::size_t space, int coordinate) {
  TruthTable t;
  for (std::size_t x = 0; x < space; ++x) t.table.push_back(static_cast<std::uint8_t>((x >> coordinate) & 1U));
  return t;
}

// Two sensors, one bit each, both forwarding coordinate 0.
ProtocolTree forward_tree(std::size_t space) {
  std::vector<Node> nodes{
      Node{0, identity_bit(space, 0), 1, 2},
      leaf_parent(1, identity_bit(space, 0)),
      leaf_parent(1, identity_bit(space, 0)),
  };
  return ProtocolTree::uniform(2, 1, nodes);
}

// P(Y = y) by summing over every input tuple.
std::vector<double> brute_force_distribution(const ProtocolTree& tree, const Model& m, std::span<const double> theta) {
  const int n = tree.sensors();
  const std::size_t space = m.sample_space_size();
  auto probs = m.probabilities(theta);
  std::vector<double> out(std::size_t{1} << tree.depth(), 0.0);
  std::vector<std::size_t> idx(static_cast<std::size_t>(n), 0);
  std::vector<Observation> xs(static_cast<std::size_t>(n));
  while (true) {
    double w = 1.0;
    for (int j = 0; j < n; ++j) {
      xs[j] = m.point(idx[j]);
      w *= probs[idx[j]];
    }
    out[execute(tree, xs).bits] += w;
    int j = 0;
    while (j < n && ++idx[j] == space) idx[j++] = 0;
    if (j == n) break;
  }
  return out;
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("validate_budget examples") {
  auto space = std::size_t{2};
  auto valid = forward_tree(space);
  CHECK(validate_budget(valid).valid);

  std::vector<Node> bad{
      Node{0, identity_bit(space, 0), 1, 2},
      leaf_parent(0, identity_bit(space, 0)),
      leaf_parent(1, identity_bit(space, 0)),
  };
  ProtocolTree invalid = ProtocolTree::uniform(2, 1, bad);
  auto report = validate_budget(invalid);
  CHECK_FALSE(report.valid);
  REQUIRE(report.violating_path);
  CHECK(report.violating_path->to_string() == "00");
  CHECK_FALSE(report.reason.empty());
}

TEST_CASE("malformed trees are rejected at construction") {
  std::vector<Node> orphan{leaf_parent(0, TruthTable{{0, 1}}), leaf_parent(0, TruthTable{{0, 1}})};
  CHECK_THROWS_AS(ProtocolTree::uniform(1, 1, orphan), DomainError);
  std::vector<Node> bad_label{leaf_parent(3, TruthTable{{0, 1}})};
  CHECK_THROWS_AS(ProtocolTree::uniform(1, 1, bad_label), DomainError);
  std::vector<Node> half{Node{0, TruthTable{{0, 1}}, 1, -1}, leaf_parent(0, TruthTable{{0, 1}})};
  CHECK_THROWS_AS(ProtocolTree::uniform(1, 2, half), DomainError);
}

TEST_CASE("transcript strings") {
  auto t = Transcript::from_string("0110");
  CHECK(t.length == 4);
  CHECK(t.bits == 6);
  CHECK(t.bit(0) == 0);
  CHECK(t.bit(1) == 1);
  CHECK(t.to_string() == "0110");
  CHECK_THROWS_AS(Transcript::from_string("01x"), DomainError);
}

TEST_CASE("sensor_factor follows the exit direction") {
  auto m = Model::bernoulli(1, 0.5);
  auto tree = forward_tree(2);
  Observation one = Bits{1};
  Observation zero = Bits{0};
  CHECK(sensor_factor(tree, 0, Transcript::from_string("10"), one) == 1.0);
  CHECK(sensor_factor(tree, 0, Transcript::from_string("00"), one) == 0.0);
  CHECK(sensor_factor(tree, 1, Transcript::from_string("10"), zero) == 1.0);
  CHECK(sensor_factor(tree, 1, Transcript::from_string("11"), zero) == 0.0);
}

TEST_CASE("execute examples") {
  std::vector<Node> single{leaf_parent(0, identity_bit(2, 0))};
  auto tree = ProtocolTree::uniform(1, 1, single);
  std::vector<Observation> x{Bits{1}};
  CHECK(execute(tree, x).to_string() == "1");

  auto m = Model::bernoulli(2, 0.5);
  auto zero_tree = random_tree(3, 2, m, 4);
  std::vector<Node> nodes = zero_tree.nodes();
  for (auto& node : nodes) node.predicate = TruthTable{std::vector<std::uint8_t>(4, 0)};
  ProtocolTree zeros(zero_tree.budgets(), nodes, zero_tree.root());
  for (std::size_t a = 0; a < 4; ++a) {
    std::vector<Observation> xs{m.point(a), m.point(3 - a), m.point((a + 1) % 4)};
    auto y = execute(zeros, xs);
    CHECK(y.length == 6);
    CHECK(y.bits == 0);
  }
}

TEST_CASE("trivial tree has one empty transcript") {
  ProtocolTree empty({0}, {}, -1);
  CHECK(validate_budget(empty).valid);
  auto dist = transcript_distribution(empty, Model::bernoulli(1, 0.5), std::vector<double>{0.5});
  REQUIRE(dist.size() == 1);
  CHECK(dist[0] == doctest::Approx(1.0));
}

TEST_CASE("transcript_distribution examples") {
  auto m = Model::bernoulli(1, 0.5);
  auto dist = transcript_distribution(forward_tree(2), m, m.theta0());
  REQUIRE(dist.size() == 4);
  for (double p : dist) CHECK(p == doctest::Approx(0.25));

  auto g = Model::gaussian(1);
  std::vector<Node> single{leaf_parent(0, Threshold{{1.0}, 0.0})};
  auto tree = ProtocolTree::uniform(1, 1, single);
  auto gd = transcript_distribution(tree, g, std::vector<double>{0.0});
  REQUIRE(gd.size() == 2);
  CHECK(gd[0] == doctest::Approx(0.5));
  CHECK(gd[1] == doctest::Approx(0.5));
}

TEST_CASE("gaussian thresholds match direct normal tail computations") {
  auto g = Model::gaussian(2, 1.5);
  std::vector<double> mu{0.3, -0.4};
  // Sensor 0 thresholds x0 at 0.2, then x0 at 1.0 (right) or x1 at -0.5 (left).
  std::vector<Node> nodes{
      Node{0, Threshold{{1.0, 0.0}, 0.2}, 1, 2},
      leaf_parent(0, Threshold{{0.0, 1.0}, -0.5}),
      leaf_parent(0, Threshold{{2.0, 0.0}, 2.0}),
  };
  auto tree = ProtocolTree::uniform(1, 2, nodes);
  auto dist = transcript_distribution(tree, g, mu);
  const double s = 1.5;
  double p_a = normal_sf((0.2 - mu[0]) / s);
  double p_b = normal_sf((-0.5 - mu[1]) / s);
  double p_c = normal_sf((1.0 - mu[0]) / s);
  CHECK(dist[0b00] == doctest::Approx((1 - p_a) * (1 - p_b)).epsilon(1e-12));
  CHECK(dist[0b01] == doctest::Approx((1 - p_a) * p_b).epsilon(1e-12));
  CHECK(dist[0b10] == doctest::Approx(p_a - p_c).epsilon(1e-12));
  CHECK(dist[0b11] == doctest::Approx(p_c).epsilon(1e-12));
}

TEST_CASE("non-parallel non-orthogonal thresholds are unsupported") {
  auto g = Model::gaussian(2);
  std::vector<Node> nodes{
      Node{0, Threshold{{1.0, 0.0}, 0.0}, 1, 2},
      leaf_parent(0, Threshold{{1.0, 1.0}, 0.0}),
      leaf_parent(0, Threshold{{1.0, 1.0}, 0.0}),
  };
  auto tree = ProtocolTree::uniform(1, 2, nodes);
  CHECK_THROWS_AS(transcript_distribution(tree, g, std::vector<double>{0.0, 0.0}), UnsupportedError);
}

TEST_CASE("callback predicates execute but do not enumerate") {
  auto m = Model::bernoulli(1, 0.5);
  CallbackPredicate cb{[](const Observation& x, std::uint64_t seed) {
    return static_cast<int>(std::get<Bits>(x)[0] ^ (seed & 1U));
  }};
  std::vector<Node> nodes{leaf_parent(0, cb)};
  auto tree = ProtocolTree::uniform(1, 1, nodes);
  std::vector<Observation> x{Bits{1}};
  CHECK(execute(tree, x, 0).to_string() == "1");
  CHECK(execute(tree, x, 1).to_string() == "0");
  CHECK_THROWS_AS(transcript_distribution(tree, m, m.theta0()), UnsupportedError);
}

TEST_CASE("enumeration cap") {
  auto m = Model::bernoulli(1, 0.5);
  CHECK_THROWS_AS(random_tree(5, 5, m, 1), CapacityError);
  ProtocolTree tree({5, 5, 5, 5, 5}, {}, -1);
  CHECK_THROWS_AS(transcript_distribution(tree, m, m.theta0()), CapacityError);
}

TEST_CASE("transcript_distribution agrees with brute force over inputs") {
  auto m = Model::bernoulli({0.3, 0.6});
  std::vector<double> theta{0.45, 0.2};
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto tree = random_tree(3, 2, m, seed);
    auto exact = transcript_distribution(tree, m, theta);
    auto brute = brute_force_distribution(tree, m, theta);
    REQUIRE(exact.size() == brute.size());
    double total = std::accumulate(exact.begin(), exact.end(), 0.0);
    CHECK(std::abs(total - 1.0) <= 1e-12);
    for (std::size_t y = 0; y < exact.size(); ++y) CHECK(std::abs(exact[y] - brute[y]) <= 1e-12);
  }
}

TEST_CASE("random trees are budget-valid and interactive") {
  auto m = Model::bernoulli(2, 0.5);
  int interactive = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    auto tree = random_tree(3, 2, m, seed);
    REQUIRE(validate_budget(tree).valid);
    CHECK(tree.depth() == 6);
    // Interactive when the two children of the root carry different labels.
    const auto& root = tree.nodes()[static_cast<std::size_t>(tree.root())];
    if (tree.nodes()[root.left].label != tree.nodes()[root.right].label) ++interactive;
  }
  CHECK(interactive > 100);

  auto single = random_tree(1, 1, m, 3);
  CHECK(single.nodes().size() == 1);
  CHECK(single.nodes()[0].label == 0);
}

TEST_CASE("protocol identities hold with heterogeneous budgets") {
  auto m = Model::bernoulli(2, 0.5);
  RandomTreeOptions opts;
  opts.budgets = {1, 2};
  opts.sample_space_size = m.sample_space_size();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    opts.seed = seed;
    auto tree = random_tree(opts);
    REQUIRE(validate_budget(tree).valid);
    std::vector<Observation> xs{m.point(seed % 4), m.point((seed / 4) % 4)};
    auto r = check_protocol_identities(tree, xs);
    CHECK(r.total == doctest::Approx(1.0));
    CHECK(r.leave_one_out[0] == doctest::Approx(2.0));
    CHECK(r.leave_one_out[1] == doctest::Approx(4.0));
    CHECK(r.max_slack <= 1e-9);
  }
}

TEST_CASE("protocol identities for gaussian trees") {
  RandomTreeOptions opts;
  opts.budgets = {2, 1, 3};
  opts.gaussian_dim = 3;
  CounterRng rng(11);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    opts.seed = seed;
    auto tree = random_tree(opts);
    std::vector<Observation> xs;
    for (int j = 0; j < 3; ++j) xs.push_back(RealVector{rng.normal_at(3 * seed + j), rng.normal_at(100 + seed), 0.1});
    CHECK(check_protocol_identities(tree, xs).max_slack <= 1e-9);
  }
}

TEST_CASE("budget violation breaks the identities") {
  std::vector<Node> bad{
      Node{0, TruthTable{{0, 1}}, 1, 2},
      leaf_parent(0, TruthTable{{0, 1}}),
      leaf_parent(1, TruthTable{{0, 1}}),
  };
  ProtocolTree invalid = ProtocolTree::uniform(2, 1, bad);
  REQUIRE_FALSE(validate_budget(invalid).valid);
  std::vector<Observation> xs{Bits{0}, Bits{1}};
  auto r = check_protocol_identities(invalid, xs);
  CHECK(r.max_slack > 0.5);
  CHECK_THROWS_AS(transcript_distribution(invalid, Model::bernoulli(1, 0.5), std::vector<double>{0.5}), DomainError);
}

TEST_CASE("execute agrees with the unique sensor_factor product") {
  auto m = Model::bernoulli(3, 0.5);
  CounterRng rng(5);
  for (int trial = 0; trial < 10000; ++trial) {
    auto tree = random_tree(2, 2, m, static_cast<std::uint64_t>(trial % 200));
    std::vector<Observation> xs{m.point(rng.below(8)), m.point(rng.below(8))};
    auto y = execute(tree, xs);
    int ones = 0;
    for (std::uint64_t v = 0; v < 16; ++v) {
      Transcript t{v, 4};
      double prod = sensor_factor(tree, 0, t, xs[0]) * sensor_factor(tree, 1, t, xs[1]);
      if (prod == 1.0) {
        ++ones;
        CHECK(t == y);
      } else {
        CHECK(prod == 0.0);
      }
    }
    CHECK(ones == 1);
  }
}

TEST_CASE("distribution is invariant to relabelling sensors") {
  auto m = Model::bernoulli({0.3, 0.7});
  std::vector<double> theta{0.4, 0.5};
  std::vector<int> perm{2, 0, 1};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto tree = random_tree(3, 1, m, seed);
    auto nodes = tree.nodes();
    for (auto& node : nodes) node.label = perm[node.label];
    ProtocolTree relabelled(tree.budgets(), nodes, tree.root());
    auto a = transcript_distribution(tree, m, theta);
    auto b = transcript_distribution(relabelled, m, theta);
    for (std::size_t y = 0; y < a.size(); ++y) CHECK(std::abs(a[y] - b[y]) <= 1e-12);
  }
}

TEST_CASE("monte carlo histogram converges to the exact law") {
  auto m = Model::bernoulli(2, 0.5);
  std::vector<double> theta{0.3, 0.65};
  auto tree = random_tree(2, 2, m, 21);
  auto exact = transcript_distribution(tree, m, theta);
  const std::size_t draws = 1000000;
  std::vector<double> hist(exact.size(), 0.0);
  std::vector<Observation> xs(2);
  for (std::size_t r = 0; r < draws; ++r) {
    for (std::uint64_t j = 0; j < 2; ++j) xs[j] = sample_one(m, theta, derive_key(77, {r, j}));
    hist[execute(tree, xs).bits] += 1.0;
  }
  double tv = 0.0;
  for (std::size_t y = 0; y < exact.size(); ++y) tv += std::abs(hist[y] / draws - exact[y]);
  CHECK(0.5 * tv < 4e-3);
}

TEST_CASE("json round trip") {
  auto m = Model::bernoulli(2, 0.5);
  auto tree = random_tree(2, 2, m, 9);
  auto doc = to_json(tree);
  auto back = tree_from_json(nlohmann::json::parse(doc.dump()));
  CHECK(to_json(back) == doc);

  RandomTreeOptions opts{{1, 2}, 0, 2, 4};
  auto g = random_tree(opts);
  auto gdoc = to_json(g);
  auto gback = tree_from_json(nlohmann::json::parse(gdoc.dump()));
  REQUIRE(gback.nodes().size() == g.nodes().size());
  for (std::size_t v = 0; v < g.nodes().size(); ++v) {
    const auto& a = std::get<Threshold>(g.nodes()[v].predicate);
    const auto& b = std::get<Threshold>(gback.nodes()[v].predicate);
    CHECK(a.w == b.w);
    CHECK(a.b == b.b);
  }

  CHECK_THROWS_AS(tree_from_json(nlohmann::json::parse(R"({"sensors": 1})")), DomainError);
}
