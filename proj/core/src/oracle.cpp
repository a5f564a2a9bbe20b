#include "commlim/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "commlim/error.hpp"

namespace commlim {

namespace {

constexpr std::size_t kMaxTableEntries = std::size_t{1} << 26;

// Per-sensor values: entry 0 is E_0 p, entry 1 + u is E_{P_u} p.
RegionFunctional member_masses(const HypothesisCube& cube) {
  const Model& model = cube.base();
  const std::size_t members = cube.size();
  if (model.finite()) {
    const std::size_t space = model.sample_space_size();
    if ((members + 1) * space > kMaxTableEntries) throw CapacityError("hypotheses x sample space exceeds 2^26");
    auto tables = std::make_shared<std::vector<std::vector<double>>>();
    tables->push_back(model.probabilities(model.theta0()));
    for (std::size_t u = 0; u < members; ++u) tables->push_back(model.probabilities(cube.theta(u)));
    return [tables](int, const SensorRegion& region) {
      const auto& mask = std::get<FiniteRegion>(region).mask;
      std::vector<double> out(tables->size(), 0.0);
      for (std::size_t m = 0; m < tables->size(); ++m) {
        const auto& p = (*tables)[m];
        double s = 0.0;
        for (std::size_t x = 0; x < mask.size(); ++x) {
          if (mask[x]) s += p[x];
        }
        out[m] = s;
      }
      return out;
    };
  }
  auto thetas = std::make_shared<std::vector<std::vector<double>>>();
  thetas->push_back(model.theta0());
  for (std::size_t u = 0; u < members; ++u) thetas->push_back(cube.theta(u));
  const double sigma = model.sigma();
  return [thetas, sigma](int, const SensorRegion& region) {
    const auto& g = std::get<GaussianRegion>(region);
    std::vector<double> out(thetas->size());
    for (std::size_t m = 0; m < thetas->size(); ++m) out[m] = g.probability((*thetas)[m], sigma);
    return out;
  };
}

double xlogy_ratio(double p, double q) {
  if (p <= 0.0) return 0.0;
  if (q <= 0.0) return std::numeric_limits<double>::infinity();
  return p * std::log(p / q);
}

int hamming(const std::vector<int>& a, const std::vector<int>& b) {
  int distance = 0;
  for (std::size_t i = 0; i < a.size(); ++i) distance += a[i] != b[i];
  return distance;
}

}  // namespace

InfoChainReport kl_chain_quantities(const ProtocolTree& tree, const HypothesisCube& cube, bool with_terms) {
  const auto budget = validate_budget(tree);
  if (!budget.valid) throw DomainError("information chain needs a budget-valid tree: " + budget.reason);
  const std::size_t members = cube.size();
  const auto n = static_cast<std::size_t>(tree.sensors());
  const double weight = 1.0 / static_cast<double>(members);

  InfoChainReport report;
  report.hypotheses = members;
  std::vector<double> conditional(members);

  walk_transcripts(tree, cube.base(), member_masses(cube), [&](const Transcript& y, std::span<const std::vector<double>> values) {
    ++report.transcripts;
    double p0 = 1.0;
    for (const auto& v : values) p0 *= v[0];
    double mixture = 0.0;
    for (std::size_t u = 0; u < members; ++u) {
      double p = 1.0;
      for (const auto& v : values) p *= v[u + 1];
      conditional[u] = p;
      mixture += weight * p;
    }
    for (std::size_t u = 0; u < members; ++u) {
      report.I += weight * xlogy_ratio(conditional[u], mixture);
      report.Dbar += weight * xlogy_ratio(conditional[u], p0);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double base = values[i][0];
      double term = 0.0;
      for (std::size_t u = 0; u < members; ++u) {
        const double diff = values[i][u + 1] - base;
        if (diff == 0.0) continue;
        if (base <= 0.0) {
          term = std::numeric_limits<double>::infinity();
          break;
        }
        double others = 1.0;
        for (std::size_t j = 0; j < n; ++j) {
          if (j != i) others *= values[j][u + 1];
        }
        term += weight * others * diff * diff / base;
      }
      report.UB += term;
      if (with_terms) report.terms.push_back({static_cast<int>(i), y, term});
    }
  });
  // Divergences are nonnegative; cancellation can leave a few ulps below 0.
  report.I = std::max(report.I, 0.0);
  report.Dbar = std::max(report.Dbar, 0.0);
  return report;
}

double exact_mutual_information(const ProtocolTree& tree, const HypothesisCube& cube) {
  return kl_chain_quantities(tree, cube).I;
}

S1Report s1_bound_check(const ProtocolTree& tree, const Model& model, int sensor, std::span<const Observation> inputs,
                        double tolerance) {
  if (sensor < 0 || sensor >= tree.sensors()) throw DomainError("sensor index out of range");
  if (static_cast<int>(inputs.size()) != tree.sensors()) throw DomainError("s1 check needs one input slot per sensor");
  if (tree.depth() > 24) throw CapacityError("s1 enumeration needs nk <= 24");
  S1Report report;
  report.sensor = sensor;
  report.i0 = fisher_info(model).max_eigenvalue;
  report.bound = std::ldexp(report.i0, tree.budgets()[static_cast<std::size_t>(sensor)]);

  const bool finite = model.finite();
  SensorRegion region = finite ? SensorRegion(FiniteRegion{std::vector<std::uint8_t>(model.sample_space_size(), 1)})
                               : SensorRegion(GaussianRegion(model.dim()));
  std::vector<Observation> points;
  if (finite) {
    for (std::size_t x = 0; x < model.sample_space_size(); ++x) points.push_back(model.point(x));
  }

  const auto leaf = [&](double w) {
    report.total_weight += w;
    if (w == 0.0) return;
    const double p = region_probability(model, region, model.theta0());
    if (p <= 0.0) return;
    const auto moment = region_score_moment(model, region);
    double norm2 = 0.0;
    for (double m : moment) norm2 += m * m;
    report.sum += w * norm2 / p;
    report.per_set_bound += w * report.i0 * (1.0 - p);
  };
  const auto restrict_region = [&](const Predicate& predicate, bool right) {
    if (finite) {
      auto& mask = std::get<FiniteRegion>(region).mask;
      for (std::size_t x = 0; x < mask.size(); ++x) {
        if (mask[x] && (evaluate(predicate, points[x]) == 1) != right) mask[x] = 0;
      }
      return;
    }
    const auto* t = std::get_if<Threshold>(&predicate);
    if (!t) throw UnsupportedError("Gaussian enumeration supports threshold predicates only");
    std::get<GaussianRegion>(region).add(t->w, t->b, right);
  };

  if (tree.root() < 0) {
    leaf(1.0);
  } else {
    const auto descend = [&](auto&& self, int index, double w) -> void {
      if (index < 0) {
        leaf(w);
        return;
      }
      const Node& node = tree.nodes()[static_cast<std::size_t>(index)];
      if (node.label != sensor) {
        const int a = evaluate(node.predicate, inputs[static_cast<std::size_t>(node.label)]);
        self(self, node.left, w * (1 - a));
        self(self, node.right, w * a);
        return;
      }
      const SensorRegion saved = region;
      for (int bit = 0; bit < 2; ++bit) {
        restrict_region(node.predicate, bit == 1);
        self(self, bit ? node.right : node.left, w);
        region = saved;
      }
    };
    descend(descend, tree.root(), 1.0);
  }
  report.slack = report.bound - report.sum;
  report.holds = report.sum <= report.bound + tolerance && report.sum <= report.per_set_bound + tolerance;
  return report;
}

double s1_first_order(const ProtocolTree& tree, const Model& model) {
  const auto n = static_cast<std::size_t>(tree.sensors());
  const RegionFunctional functional = [&](int, const SensorRegion& region) {
    std::vector<double> out{region_probability(model, region, model.theta0())};
    double norm2 = 0.0;
    if (out[0] > 0.0) {
      for (double m : region_score_moment(model, region)) norm2 += m * m;
    }
    out.push_back(norm2);
    return out;
  };
  double total = 0.0;
  walk_transcripts(tree, model, functional, [&](const Transcript&, std::span<const std::vector<double>> values) {
    for (std::size_t i = 0; i < n; ++i) {
      if (values[i][0] <= 0.0) continue;
      double others = 1.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) others *= values[j][0];
      }
      total += others * values[i][1] / values[i][0];
    }
  });
  return total;
}

double exact_test_error(const ProtocolTree& tree, const HypothesisCube& cube, int t) {
  if (t < 0) throw DomainError("distance threshold must be nonnegative");
  const auto budget = validate_budget(tree);
  if (!budget.valid) throw DomainError("test error needs a budget-valid tree: " + budget.reason);
  const std::size_t members = cube.size();
  std::vector<std::vector<int>> directions(members);
  for (std::size_t u = 0; u < members; ++u) directions[u] = cube.direction(u);
  std::vector<std::vector<std::size_t>> balls(members);
  for (std::size_t v = 0; v < members; ++v) {
    for (std::size_t u = 0; u < members; ++u) {
      if (hamming(directions[u], directions[v]) <= t) balls[v].push_back(u);
    }
  }
  std::vector<double> conditional(members);
  double correct = 0.0;
  walk_transcripts(tree, cube.base(), member_masses(cube), [&](const Transcript&, std::span<const std::vector<double>> values) {
    for (std::size_t u = 0; u < members; ++u) {
      double p = 1.0;
      for (const auto& v : values) p *= v[u + 1];
      conditional[u] = p;
    }
    double best = 0.0;
    for (std::size_t v = 0; v < members; ++v) {
      double covered = 0.0;
      for (std::size_t u : balls[v]) covered += conditional[u];
      best = std::max(best, covered);
    }
    correct += best;
  });
  return std::max(0.0, 1.0 - correct / static_cast<double>(members));
}

}  // namespace commlim
