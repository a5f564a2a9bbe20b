#include "commlim/blackboard.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "commlim/error.hpp"
#include "commlim/rng.hpp"

namespace commlim {

namespace {

constexpr int kMaxEnumerationDepth = 24;
constexpr int kMaxPathLength = 63;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

std::vector<double> as_reals(const Observation& x) {
  if (const auto* v = std::get_if<RealVector>(&x)) return *v;
  if (const auto* b = std::get_if<Bits>(&x)) return {b->begin(), b->end()};
  throw UnsupportedError("threshold predicates need real or bit-vector observations");
}

}  // namespace

std::size_t observation_index(const Observation& x) {
  if (const auto* o = std::get_if<Outcome>(&x)) {
    if (o->index < 1) throw DomainError("outcome index must be >= 1");
    return static_cast<std::size_t>(o->index - 1);
  }
  if (const auto* b = std::get_if<Bits>(&x)) {
    if (b->size() > 20) throw CapacityError("truth tables cover at most 20 bits");
    std::size_t index = 0;
    for (std::size_t i = 0; i < b->size(); ++i) index |= static_cast<std::size_t>((*b)[i] & 1U) << i;
    return index;
  }
  throw UnsupportedError("truth tables need a finite sample space");
}

int evaluate(const Predicate& predicate, const Observation& x, std::uint64_t shared_seed) {
  return std::visit(
      overloaded{
          [&](const TruthTable& t) {
            const std::size_t index = observation_index(x);
            if (index >= t.table.size()) throw DomainError("observation outside the truth table");
            return t.table[index] ? 1 : 0;
          },
          [&](const Threshold& t) {
            const auto v = as_reals(x);
            if (v.size() != t.w.size()) throw DomainError("threshold weight length differs from the observation");
            double s = 0.0;
            for (std::size_t i = 0; i < v.size(); ++i) s += t.w[i] * v[i];
            return s > t.b ? 1 : 0;
          },
          [&](const CallbackPredicate& c) {
            if (!c.fn) throw DomainError("empty callback predicate");
            return c.fn(x, shared_seed) ? 1 : 0;
          },
      },
      predicate);
}

ProtocolTree::ProtocolTree(std::vector<int> budgets, std::vector<Node> nodes, int root)
    : budgets_(std::move(budgets)), nodes_(std::move(nodes)), root_(nodes_.empty() ? -1 : root) {
  if (budgets_.empty()) throw DomainError("a protocol needs at least one sensor");
  for (int k : budgets_) {
    if (k < 0) throw DomainError("bit budgets must be nonnegative");
  }
  depth_ = std::accumulate(budgets_.begin(), budgets_.end(), 0);
  const int count = static_cast<int>(nodes_.size());
  if (count == 0) return;
  if (root_ < 0 || root_ >= count) throw DomainError("root index out of range");

  std::vector<int> parents(nodes_.size(), 0);
  for (const Node& node : nodes_) {
    if (node.label < 0 || node.label >= sensors()) throw DomainError("node label outside [0, n)");
    for (int child : {node.left, node.right}) {
      if (child < -1 || child >= count) throw DomainError("child index out of range");
      if (child >= 0 && ++parents[static_cast<std::size_t>(child)] > 1) throw DomainError("node has two parents");
    }
    if ((node.left < 0) != (node.right < 0)) throw DomainError("internal nodes need two children");
  }
  if (parents[static_cast<std::size_t>(root_)] != 0) throw DomainError("root has a parent");
  // Reachability from the root also rules out cycles given unique parents.
  std::vector<int> stack{root_};
  int reached = 0;
  while (!stack.empty()) {
    const Node& node = nodes_[static_cast<std::size_t>(stack.back())];
    stack.pop_back();
    ++reached;
    if (node.left >= 0) {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  if (reached != count) throw DomainError("tree contains unreachable nodes");
}

ProtocolTree ProtocolTree::uniform(int sensors, int bits, std::vector<Node> nodes, int root) {
  if (sensors <= 0) throw DomainError("sensor count must be positive");
  return ProtocolTree(std::vector<int>(static_cast<std::size_t>(sensors), bits), std::move(nodes), root);
}

std::string Transcript::to_string() const {
  std::string text;
  for (int t = 0; t < length; ++t) text.push_back(bit(t) ? '1' : '0');
  return text;
}

Transcript Transcript::from_string(const std::string& text) {
  if (text.size() > kMaxPathLength) throw CapacityError("transcripts longer than 63 bits are not representable");
  Transcript y;
  y.length = static_cast<int>(text.size());
  for (char c : text) {
    if (c != '0' && c != '1') throw DomainError("transcript strings contain only 0 and 1");
    y.bits = (y.bits << 1) | static_cast<std::uint64_t>(c == '1');
  }
  return y;
}

BudgetReport validate_budget(const ProtocolTree& tree) {
  BudgetReport report;
  const auto& nodes = tree.nodes();
  std::vector<int> counts(static_cast<std::size_t>(tree.sensors()), 0);

  const auto check_leaf = [&](const Transcript& path) {
    for (int i = 0; i < tree.sensors(); ++i) {
      const int seen = counts[static_cast<std::size_t>(i)];
      const int budget = tree.budgets()[static_cast<std::size_t>(i)];
      if (seen != budget) {
        report.valid = false;
        report.violating_path = path;
        report.reason = "path '" + path.to_string() + "' visits sensor " + std::to_string(i) + " " +
                        std::to_string(seen) + " times, budget is " + std::to_string(budget);
        return;
      }
    }
  };

  if (tree.root() < 0) {
    check_leaf(Transcript{});
    return report;
  }
  const auto visit = [&](auto&& self, int index, Transcript path) -> void {
    if (!report.valid) return;
    if (index < 0) {
      check_leaf(path);
      return;
    }
    if (path.length >= kMaxPathLength) throw CapacityError("path longer than 63 bits");
    const Node& node = nodes[static_cast<std::size_t>(index)];
    ++counts[static_cast<std::size_t>(node.label)];
    self(self, node.left, Transcript{path.bits << 1, path.length + 1});
    self(self, node.right, Transcript{(path.bits << 1) | 1U, path.length + 1});
    --counts[static_cast<std::size_t>(node.label)];
  };
  visit(visit, tree.root(), Transcript{});
  return report;
}

double sensor_factor(const ProtocolTree& tree, int sensor, const Transcript& y, const Observation& x,
                     std::uint64_t shared_seed) {
  if (sensor < 0 || sensor >= tree.sensors()) throw DomainError("sensor index out of range");
  double factor = 1.0;
  int index = tree.root();
  int t = 0;
  while (index >= 0) {
    if (t >= y.length) throw DomainError("transcript ends before reaching a leaf");
    const Node& node = tree.nodes()[static_cast<std::size_t>(index)];
    const int bit = y.bit(t);
    if (node.label == sensor) {
      const int a = evaluate(node.predicate, x, shared_seed);
      factor *= bit ? a : 1 - a;
    }
    index = bit ? node.right : node.left;
    ++t;
  }
  if (t != y.length) throw DomainError("transcript is longer than its path");
  return factor;
}

Transcript execute(const ProtocolTree& tree, std::span<const Observation> samples, std::uint64_t shared_seed) {
  if (static_cast<int>(samples.size()) != tree.sensors()) throw DomainError("execute needs one sample per sensor");
  Transcript y;
  int index = tree.root();
  while (index >= 0) {
    if (y.length >= kMaxPathLength) throw CapacityError("path longer than 63 bits");
    const Node& node = tree.nodes()[static_cast<std::size_t>(index)];
    const int bit = evaluate(node.predicate, samples[static_cast<std::size_t>(node.label)], shared_seed);
    y.bits = (y.bits << 1) | static_cast<std::uint64_t>(bit);
    ++y.length;
    index = bit ? node.right : node.left;
  }
  return y;
}

double region_probability(const Model& model, const SensorRegion& region, std::span<const double> theta) {
  if (const auto* g = std::get_if<GaussianRegion>(&region)) return g->probability(theta, model.sigma());
  const auto& mask = std::get<FiniteRegion>(region).mask;
  const auto probs = model.probabilities(theta);
  double p = 0.0;
  for (std::size_t x = 0; x < mask.size(); ++x) {
    if (mask[x]) p += probs[x];
  }
  return p;
}

std::vector<double> region_score_moment(const Model& model, const SensorRegion& region) {
  if (const auto* g = std::get_if<GaussianRegion>(&region)) return g->score_moment(model.theta0(), model.sigma());
  const auto& mask = std::get<FiniteRegion>(region).mask;
  const auto probs = model.probabilities(model.theta0());
  std::vector<double> moment(static_cast<std::size_t>(model.dim()), 0.0);
  for (std::size_t x = 0; x < mask.size(); ++x) {
    if (!mask[x] || probs[x] == 0.0) continue;
    const auto s = score(model, model.point(x));
    for (std::size_t i = 0; i < s.size(); ++i) moment[i] += probs[x] * s[i];
  }
  return moment;
}

void walk_transcripts(const ProtocolTree& tree, const Model& model, const RegionFunctional& evaluate_region,
                      const LeafVisitor& visit) {
  if (tree.depth() > kMaxEnumerationDepth) throw CapacityError("transcript enumeration needs nk <= 24");
  const auto n = static_cast<std::size_t>(tree.sensors());
  const bool finite = model.finite();
  std::vector<Observation> points;
  std::vector<SensorRegion> regions;
  regions.reserve(n);
  if (finite) {
    const std::size_t size = model.sample_space_size();
    points.reserve(size);
    for (std::size_t x = 0; x < size; ++x) points.push_back(model.point(x));
    for (std::size_t i = 0; i < n; ++i) regions.emplace_back(FiniteRegion{std::vector<std::uint8_t>(size, 1)});
  } else {
    for (std::size_t i = 0; i < n; ++i) regions.emplace_back(GaussianRegion(model.dim()));
  }
  std::vector<std::vector<double>> values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = evaluate_region(static_cast<int>(i), regions[i]);

  const auto restrict_region = [&](SensorRegion& region, const Predicate& predicate, bool right) {
    if (std::holds_alternative<CallbackPredicate>(predicate)) {
      throw UnsupportedError("callback predicates cannot be enumerated");
    }
    if (finite) {
      auto& mask = std::get<FiniteRegion>(region).mask;
      for (std::size_t x = 0; x < mask.size(); ++x) {
        if (mask[x] && (evaluate(predicate, points[x]) == 1) != right) mask[x] = 0;
      }
      return;
    }
    const auto* threshold = std::get_if<Threshold>(&predicate);
    if (!threshold) throw UnsupportedError("Gaussian enumeration supports threshold predicates only");
    std::get<GaussianRegion>(region).add(threshold->w, threshold->b, right);
  };

  if (tree.root() < 0) {
    visit(Transcript{}, values);
    return;
  }
  const auto descend = [&](auto&& self, int index, Transcript path) -> void {
    if (index < 0) {
      visit(path, values);
      return;
    }
    if (path.length >= kMaxPathLength) throw CapacityError("path longer than 63 bits");
    const Node& node = tree.nodes()[static_cast<std::size_t>(index)];
    const auto label = static_cast<std::size_t>(node.label);
    const SensorRegion saved_region = regions[label];
    std::vector<double> saved_value = values[label];
    for (int bit = 0; bit < 2; ++bit) {
      restrict_region(regions[label], node.predicate, bit == 1);
      values[label] = evaluate_region(node.label, regions[label]);
      self(self, bit ? node.right : node.left,
           Transcript{(path.bits << 1) | static_cast<std::uint64_t>(bit), path.length + 1});
      regions[label] = saved_region;
    }
    values[label] = std::move(saved_value);
  };
  descend(descend, tree.root(), Transcript{});
}

std::vector<double> transcript_distribution(const ProtocolTree& tree, const Model& model,
                                            std::span<const double> theta) {
  if (tree.depth() > kMaxEnumerationDepth) throw CapacityError("transcript enumeration needs nk <= 24");
  model.check_admissible(theta);
  const auto budget = validate_budget(tree);
  if (!budget.valid) throw DomainError("transcript_distribution needs a budget-valid tree: " + budget.reason);

  std::vector<double> probs;
  if (model.finite()) probs = model.probabilities(theta);
  const RegionFunctional mass = [&](int, const SensorRegion& region) -> std::vector<double> {
    if (const auto* f = std::get_if<FiniteRegion>(&region)) {
      double p = 0.0;
      for (std::size_t x = 0; x < f->mask.size(); ++x) {
        if (f->mask[x]) p += probs[x];
      }
      return {p};
    }
    return {std::get<GaussianRegion>(region).probability(theta, model.sigma())};
  };
  std::vector<double> table(std::size_t{1} << tree.depth(), 0.0);
  walk_transcripts(tree, model, mass, [&](const Transcript& y, std::span<const std::vector<double>> values) {
    double p = 1.0;
    for (const auto& v : values) p *= v.front();
    table[y.bits] = p;
  });
  return table;
}

IdentityReport check_protocol_identities(const ProtocolTree& tree, std::span<const Observation> inputs,
                                         std::uint64_t shared_seed) {
  const auto n = static_cast<std::size_t>(tree.sensors());
  if (inputs.size() != n) throw DomainError("identity check needs one input per sensor");
  IdentityReport report;
  report.leave_one_out.assign(n, 0.0);
  report.expected.resize(n);
  for (std::size_t i = 0; i < n; ++i) report.expected[i] = std::ldexp(1.0, tree.budgets()[i]);

  std::vector<double> factors(n, 1.0);
  const auto at_leaf = [&] {
    double total = 1.0;
    for (double f : factors) total *= f;
    report.total += total;
    for (std::size_t i = 0; i < n; ++i) {
      double others = 1.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) others *= factors[j];
      }
      report.leave_one_out[i] += others;
    }
  };
  if (tree.root() < 0) {
    at_leaf();
  } else {
    const auto descend = [&](auto&& self, int index, int depth) -> void {
      if (index < 0) {
        at_leaf();
        return;
      }
      if (depth >= kMaxPathLength) throw CapacityError("path longer than 63 bits");
      const Node& node = tree.nodes()[static_cast<std::size_t>(index)];
      const auto label = static_cast<std::size_t>(node.label);
      const double a = evaluate(node.predicate, inputs[label], shared_seed);
      const double saved = factors[label];
      factors[label] = saved * (1.0 - a);
      self(self, node.left, depth + 1);
      factors[label] = saved * a;
      self(self, node.right, depth + 1);
      factors[label] = saved;
    };
    descend(descend, tree.root(), 0);
  }
  report.total_slack = std::abs(report.total - 1.0);
  report.max_slack = report.total_slack;
  report.slack.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    report.slack[i] = std::abs(report.leave_one_out[i] - report.expected[i]);
    report.max_slack = std::max(report.max_slack, report.slack[i]);
  }
  return report;
}

ProtocolTree random_tree(const RandomTreeOptions& options) {
  if ((options.sample_space_size == 0) == (options.gaussian_dim <= 0)) {
    throw DomainError("random_tree needs exactly one of sample_space_size or gaussian_dim");
  }
  const int depth = std::accumulate(options.budgets.begin(), options.budgets.end(), 0);
  if (depth > kMaxEnumerationDepth) throw CapacityError("random trees are limited to nk <= 24");
  CounterRng rng(derive_key(options.seed, {0x7265U}));

  const auto random_predicate = [&]() -> Predicate {
    if (options.sample_space_size > 0) {
      TruthTable t;
      t.table.resize(options.sample_space_size);
      for (auto& entry : t.table) entry = static_cast<std::uint8_t>(rng() & 1U);
      return t;
    }
    Threshold t;
    t.w.assign(static_cast<std::size_t>(options.gaussian_dim), 0.0);
    const auto axis = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(options.gaussian_dim)));
    t.w[axis] = (rng() & 1U) ? 1.0 : -1.0;
    t.b = CounterRng(rng()).normal_at(0);
    return t;
  };

  std::vector<Node> nodes;
  std::vector<int> remaining = options.budgets;
  const auto build = [&](auto&& self, int left_to_place) -> int {
    if (left_to_place == 0) return -1;
    // Uniform draw from the remaining label multiset.
    auto pick = static_cast<int>(rng.below(static_cast<std::uint64_t>(left_to_place)));
    int label = 0;
    while (pick >= remaining[static_cast<std::size_t>(label)]) {
      pick -= remaining[static_cast<std::size_t>(label)];
      ++label;
    }
    const auto index = static_cast<int>(nodes.size());
    nodes.push_back(Node{label, random_predicate(), -1, -1});
    --remaining[static_cast<std::size_t>(label)];
    const int left = self(self, left_to_place - 1);
    const int right = self(self, left_to_place - 1);
    ++remaining[static_cast<std::size_t>(label)];
    nodes[static_cast<std::size_t>(index)].left = left;
    nodes[static_cast<std::size_t>(index)].right = right;
    return index;
  };
  build(build, depth);
  return ProtocolTree(options.budgets, std::move(nodes), 0);
}

ProtocolTree random_tree(int sensors, int bits, const Model& model, std::uint64_t seed) {
  RandomTreeOptions options;
  options.budgets.assign(static_cast<std::size_t>(sensors), bits);
  options.seed = seed;
  if (model.finite()) options.sample_space_size = model.sample_space_size();
  else options.gaussian_dim = model.dim();
  return random_tree(options);
}

nlohmann::json to_json(const ProtocolTree& tree) {
  nlohmann::json nodes = nlohmann::json::array();
  for (std::size_t id = 0; id < tree.nodes().size(); ++id) {
    const Node& node = tree.nodes()[id];
    nlohmann::json predicate = std::visit(
        overloaded{
            [](const TruthTable& t) {
              return nlohmann::json{{"type", "truth_table"}, {"table", t.table}};
            },
            [](const Threshold& t) {
              return nlohmann::json{{"type", "threshold"}, {"w", t.w}, {"b", t.b}};
            },
            [](const CallbackPredicate&) -> nlohmann::json {
              throw UnsupportedError("callback predicates cannot be serialized");
            },
        },
        node.predicate);
    nodes.push_back({{"id", id},
                     {"label", node.label},
                     {"predicate", std::move(predicate)},
                     {"left", node.left < 0 ? nlohmann::json(nullptr) : nlohmann::json(node.left)},
                     {"right", node.right < 0 ? nlohmann::json(nullptr) : nlohmann::json(node.right)}});
  }
  return {{"sensors", tree.sensors()}, {"budgets", tree.budgets()}, {"root", tree.root()}, {"nodes", std::move(nodes)}};
}

ProtocolTree tree_from_json(const nlohmann::json& doc) {
  try {
    const auto budgets = doc.at("budgets").get<std::vector<int>>();
    if (doc.contains("sensors") && doc.at("sensors").get<std::size_t>() != budgets.size()) {
      throw DomainError("'sensors' disagrees with the length of 'budgets'");
    }
    const auto& items = doc.at("nodes");
    std::vector<Node> nodes(items.size());
    std::vector<bool> seen(items.size(), false);
    for (const auto& item : items) {
      const auto id = item.at("id").get<std::size_t>();
      if (id >= nodes.size() || seen[id]) throw DomainError("node ids must be unique and dense");
      seen[id] = true;
      Node& node = nodes[id];
      node.label = item.at("label").get<int>();
      node.left = item.at("left").is_null() ? -1 : item.at("left").get<int>();
      node.right = item.at("right").is_null() ? -1 : item.at("right").get<int>();
      const auto& p = item.at("predicate");
      const auto type = p.at("type").get<std::string>();
      if (type == "truth_table") {
        node.predicate = TruthTable{p.at("table").get<std::vector<std::uint8_t>>()};
      } else if (type == "threshold") {
        node.predicate = Threshold{p.at("w").get<std::vector<double>>(), p.at("b").get<double>()};
      } else {
        throw DomainError("unknown predicate type '" + type + "'");
      }
    }
    const int root = doc.contains("root") ? doc.at("root").get<int>() : 0;
    return ProtocolTree(budgets, std::move(nodes), root);
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("malformed protocol document: ") + e.what());
  }
}

}  // namespace commlim
