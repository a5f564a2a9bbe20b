#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "commlim/gaussian_region.hpp"
#include "commlim/models.hpp"

namespace commlim {

// Predicate representations. Truth tables index the finite sample space in
// Model::point order; thresholds fire when <w, x> > b.
struct TruthTable {
  std::vector<std::uint8_t> table;
};
struct Threshold {
  std::vector<double> w;
  double b = 0.0;
};
struct CallbackPredicate {
  // May depend on the shared public-randomness seed.
  std::function<int(const Observation&, std::uint64_t shared_seed)> fn;
};
using Predicate = std::variant<TruthTable, Threshold, CallbackPredicate>;

// Index of a finite-space observation (bit code or outcome - 1).
std::size_t observation_index(const Observation& x);
int evaluate(const Predicate& predicate, const Observation& x, std::uint64_t shared_seed = 0);

struct Node {
  int label = 0;  // sensor, 0-based
  Predicate predicate;
  int left = -1;   // child on bit 0, -1 for a leaf
  int right = -1;  // child on bit 1
};

// A deterministic blackboard protocol as a binary tree. Node `root()` is
// the first writer; an empty node list is the trivial protocol with a
// single empty transcript.
class ProtocolTree {
 public:
  ProtocolTree(std::vector<int> budgets, std::vector<Node> nodes, int root = 0);

  static ProtocolTree uniform(int sensors, int bits, std::vector<Node> nodes, int root = 0);

  int sensors() const { return static_cast<int>(budgets_.size()); }
  const std::vector<int>& budgets() const { return budgets_; }
  // Sum of budgets: the transcript length of every budget-valid tree.
  int depth() const { return depth_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  int root() const { return root_; }

 private:
  std::vector<int> budgets_;
  std::vector<Node> nodes_;
  int root_;
  int depth_;
};

// Root-to-leaf edge labels. Bit t (0 = first written) is stored at
// position length - 1 - t of `bits`, so "01" has value 1.
struct Transcript {
  std::uint64_t bits = 0;
  int length = 0;

  int bit(int t) const { return static_cast<int>((bits >> (length - 1 - t)) & 1U); }
  std::string to_string() const;
  static Transcript from_string(const std::string& text);
  friend bool operator==(const Transcript&, const Transcript&) = default;
};

struct BudgetReport {
  bool valid = true;
  std::optional<Transcript> violating_path;
  std::string reason;
};

BudgetReport validate_budget(const ProtocolTree& tree);

// Product over the nodes labelled `sensor` on the path of y of b_{v,y}(x).
double sensor_factor(const ProtocolTree& tree, int sensor, const Transcript& y, const Observation& x,
                     std::uint64_t shared_seed = 0);

Transcript execute(const ProtocolTree& tree, std::span<const Observation> samples, std::uint64_t shared_seed = 0);

// Exact law of the transcript for i.i.d. inputs from P_theta; entry y is
// P(Y = y) for the transcript whose value is y. Needs a budget-valid tree
// with depth <= 24 and truth-table or threshold predicates.
std::vector<double> transcript_distribution(const ProtocolTree& tree, const Model& model,
                                            std::span<const double> theta);

struct IdentityReport {
  double total = 0.0;          // sum_y prod_j p_{j,y}(x_j)
  double total_slack = 0.0;    // |total - 1|
  std::vector<double> leave_one_out;  // sum_y prod_{j != i} p_{j,y}(x_j)
  std::vector<double> expected;       // 2^{k_i}
  std::vector<double> slack;          // |leave_one_out - expected|
  double max_slack = 0.0;
};

IdentityReport check_protocol_identities(const ProtocolTree& tree, std::span<const Observation> inputs,
                                         std::uint64_t shared_seed = 0);

struct RandomTreeOptions {
  std::vector<int> budgets;
  // Exactly one of these describes the input space: a finite sample space
  // size (truth tables) or a Gaussian dimension (axis-aligned thresholds).
  std::size_t sample_space_size = 0;
  int gaussian_dim = 0;
  std::uint64_t seed = 0;
};

// Budget-valid tree with labels drawn from the remaining per-path label
// multiset independently in every subtree, so label order varies between
// paths (interactive protocols).
ProtocolTree random_tree(const RandomTreeOptions& options);
ProtocolTree random_tree(int sensors, int bits, const Model& model, std::uint64_t seed);

// Per-sensor input regions {x : p_{i,y}(x) = 1} on one root-to-leaf path.
struct FiniteRegion {
  std::vector<std::uint8_t> mask;  // over Model::point order
};
using SensorRegion = std::variant<FiniteRegion, GaussianRegion>;

double region_probability(const Model& model, const SensorRegion& region, std::span<const double> theta);
// E_{P_theta0}[S_theta0(X) 1{X in region}].
std::vector<double> region_score_moment(const Model& model, const SensorRegion& region);

// Depth-first walk over all leaves. `evaluate` is called whenever a sensor's
// region changes and its result is cached; `visit` receives each leaf's
// transcript with the cached per-sensor values.
using RegionFunctional = std::function<std::vector<double>(int sensor, const SensorRegion& region)>;
using LeafVisitor = std::function<void(const Transcript& y, std::span<const std::vector<double>> values)>;
void walk_transcripts(const ProtocolTree& tree, const Model& model, const RegionFunctional& evaluate,
                      const LeafVisitor& visit);

// JSON document {sensors, budgets, root, nodes[{id, label, predicate, left, right}]}.
nlohmann::json to_json(const ProtocolTree& tree);
ProtocolTree tree_from_json(const nlohmann::json& doc);

}  // namespace commlim
