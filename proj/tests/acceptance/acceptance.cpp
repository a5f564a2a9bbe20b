// Acceptance checks. Prints one PASS/FAIL line per criterion; exits nonzero
// when any selected criterion fails. `commlim_acceptance 4` runs one.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "commlim/blackboard.hpp"
#include "commlim/bounds.hpp"
#include "commlim/geometry.hpp"
#include "commlim/oracle.hpp"
#include "commlim/protocols.hpp"
#include "commlim/risk.hpp"
#include "commlim/rng.hpp"

using namespace commlim;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

Model finite_model(std::uint64_t pick) {
  switch (pick % 4) {
    case 0: return Model::bernoulli(1, 0.35);
    case 1: return Model::bernoulli({0.3, 0.55});
    case 2: return Model::multinomial({0.4});
    default: return Model::multinomial({0.25, 0.3});
  }
}

Verdict protocol_identities() {
  CounterRng rng(0xac01);
  double worst = 0.0;
  std::size_t checks = 0;
  for (std::uint64_t t = 0; t < 1000; ++t) {
    const auto n = static_cast<int>(1 + rng.below(3));
    std::vector<int> budgets;
    for (int j = 0; j < n; ++j) budgets.push_back(static_cast<int>(1 + rng.below(2)));
    auto m = finite_model(rng.below(4));
    RandomTreeOptions opts{budgets, m.sample_space_size(), 0, derive_key(0xac01, {t})};
    auto tree = random_tree(opts);
    if (!validate_budget(tree).valid) return {false, fmt("tree %llu is not budget-valid", static_cast<unsigned long long>(t))};
    const std::size_t space = m.sample_space_size();
    std::vector<std::size_t> idx(static_cast<std::size_t>(n), 0);
    std::vector<Observation> xs(static_cast<std::size_t>(n));
    while (true) {
      for (int j = 0; j < n; ++j) xs[j] = m.point(idx[j]);
      worst = std::max(worst, check_protocol_identities(tree, xs).max_slack);
      ++checks;
      int j = 0;
      while (j < n && ++idx[j] == space) idx[j++] = 0;
      if (j == n) break;
    }
  }
  return {worst <= 1e-9, fmt("1000 trees, %zu input tuples, max slack %.3g (tol 1e-9)", checks, worst)};
}

Verdict information_chain() {
  CounterRng rng(0xac02);
  double worst = 0.0;
  for (std::uint64_t t = 0; t < 500; ++t) {
    const auto n = static_cast<int>(1 + rng.below(3));
    const auto k = static_cast<int>(1 + rng.below(2));
    const auto d = static_cast<int>(1 + rng.below(3));
    const double delta = rng.below(2) ? 0.1 : 0.05;
    auto m = rng.below(2) ? Model::multinomial(std::vector<double>(static_cast<std::size_t>(d), 0.2))
                          : Model::bernoulli(d, 0.5);
    HypothesisCube cube(m, delta);
    auto r = kl_chain_quantities(random_tree(n, k, m, derive_key(0xac02, {t})), cube);
    worst = std::min({worst, r.I, r.Dbar - r.I, r.UB - r.Dbar});
  }
  std::vector<Node> nodes{Node{0, TruthTable{{0, 1}}, -1, -1}};
  HypothesisCube single(Model::bernoulli(1, 0.5), 0.1);
  auto r = kl_chain_quantities(ProtocolTree::uniform(1, 1, nodes), single);
  const double closed = std::log(2.0) + 0.6 * std::log(0.6) + 0.4 * std::log(0.4);
  const double err = std::max({std::abs(r.I - closed), std::abs(r.Dbar - closed), std::abs(r.UB - 0.04)});
  return {worst >= -1e-10 && err <= 1e-9,
          fmt("500 instances, min slack %.3g (tol -1e-10); closed form I=%.6f Dbar=%.6f UB=%.6f, max err %.2g (tol 1e-9)",
              worst, r.I, r.Dbar, r.UB, err)};
}

Verdict geometry_exhaustive() {
  std::uint64_t sets = 0;
  std::uint64_t violations = 0;
  double max_err = 0.0;
  for (int d = 2; d <= 4; ++d) {
    auto scan = scan_hypercube_subsets(d);
    sets += scan.sets;
    violations += scan.bessel_violations + scan.hypercube_violations;
    max_err = std::max(max_err, std::abs(brute_force_max_norm(d, std::size_t{1} << (d - 1)).norm - 1.0));
  }
  return {violations == 0 && max_err <= 1e-12,
          fmt("%llu subsets, %llu violations; max-norm error %.2g (tol 1e-12)", static_cast<unsigned long long>(sets),
              static_cast<unsigned long long>(violations), max_err)};
}

Verdict hamming_tightness() {
  auto sweep = cap_ratio_sweep(500);
  return {sweep.best_ratio >= 0.95, fmt("d=500 best ratio %.4f at radius %d (need >= 0.95)", sweep.best_ratio, sweep.best_radius)};
}

Verdict gaussian_halfspace() {
  std::vector<SubsetSpec> sets;
  for (int j = 0; j <= 600; ++j) {
    GaussianRegion region(1);
    region.add(std::vector<double>{1.0}, -3.0 + 0.01 * j, true);
    sets.push_back(GaussianSet{Model::gaussian(1), region});
  }
  double worst = 1e300;
  for (const auto& rec : verify_geometric_bounds(sets)) {
    for (const auto& b : rec.bounds) {
      if (b.name == "gaussian") worst = std::min(worst, b.slack);
    }
  }
  return {worst >= -1e-9, fmt("601 thresholds, min slack %.4g (tol -1e-9)", worst)};
}

Verdict probit_constant() {
  ExperimentConfig cfg;
  cfg.experiment_id = "probit_constant";
  cfg.model = ModelSpec{Family::gaussian_location, 10, 1.0, 0, {}};
  cfg.protocol = "probit_grouping";
  cfg.n = 20000;
  cfg.k = 1;
  cfg.replications = 200;
  cfg.seed = 6;
  auto report = run_experiment(cfg);
  const double v = norm_n_d2(report.sup_risk, cfg.n, 10, 1);
  return {v >= 1.45 && v <= 1.70, fmt("n risk/d^2 = %.4f (window [1.45, 1.70], pi/2 = %.4f)", v, std::numbers::pi / 2)};
}

Verdict sharded_exactness() {
  ExperimentConfig cfg;
  cfg.experiment_id = "sharded_exactness";
  cfg.model = ModelSpec{Family::product_bernoulli, 8, 1.0, 0, {}};
  cfg.protocol = "sharded_bits";
  cfg.n = 800;
  cfg.k = 1;
  cfg.replications = 2000;
  cfg.seed = 7;
  auto report = run_experiment(cfg);
  const auto& r = report.per_theta.front();
  const double z = (r.risk - 0.02) / r.se;
  return {std::abs(z) <= 3.0, fmt("risk %.6f, se %.2g, z = %.2f (need |z| <= 3)", r.risk, r.se, z)};
}

Verdict simulate_and_infer() {
  std::string detail;
  bool pass = true;

  // (a) success frequency.
  for (int d : {4, 16}) {
    const int k = d == 4 ? 2 : 3;
    auto m = Model::multinomial(std::vector<double>(static_cast<std::size_t>(d), 1.0 / (d + 1)));
    auto layout = simulate_and_infer_layout(1 << 20, k, d);
    const int n = 2 * layout.blocks * 5000;
    auto bundle = build_simulate_and_infer(n, k, m);
    std::vector<double> theta(static_cast<std::size_t>(d), 1.0 / d);
    double successes = 0.0;
    const int reps = 20;
    for (std::uint64_t r = 0; r < reps; ++r) successes += estimate(*bundle, bundle->simulate(theta, derive_key(0xa8, {static_cast<std::uint64_t>(d), r}))).diagnostics.at("successes");
    const double groups = 5000.0 * reps;
    const double p = std::pow(1.0 - 1.0 / d, d);
    const double z = (successes / groups - p) / std::sqrt(p * (1 - p) / groups);
    pass = pass && std::abs(z) <= 3.0;
    detail += fmt("(a) d=%d freq %.5f vs %.5f z=%.2f; ", d, successes / groups, p, z);
  }

  // (b) goodness of fit of recorded indices.
  {
    const int d = 16;
    std::vector<double> theta(d);
    double total = 0.0;
    for (int i = 0; i < d; ++i) total += theta[i] = 1.0 + i;
    for (double& t : theta) t /= total;
    auto m = Model::multinomial(std::vector<double>(d, 1.0 / (d + 1)));
    const int n = 2 * 3 * 20000;
    auto bundle = build_simulate_and_infer(n, 3, m);
    std::vector<double> counts(d, 0.0);
    double successes = 0.0;
    for (std::uint64_t r = 0; successes < 1e5; ++r) {
      auto est = estimate(*bundle, bundle->simulate(theta, derive_key(0xa8b, {r})));
      const double s = est.diagnostics.at("successes");
      successes += s;
      for (int i = 0; i < d; ++i) counts[i] += std::round(est.theta[i] * s);
    }
    double chi2 = 0.0;
    for (int i = 0; i < d; ++i) {
      const double e = successes * theta[i];
      chi2 += (counts[i] - e) * (counts[i] - e) / e;
    }
    const double pvalue = boost::math::cdf(boost::math::complement(boost::math::chi_squared(d - 1), chi2));
    pass = pass && pvalue > 0.001;
    detail += fmt("(b) %.0f successes chi2=%.2f p=%.3f; ", successes, chi2, pvalue);
  }

  // (c) scaling in k at d = 64, then in d with n proportional to d.
  {
    ExperimentConfig cfg;
    cfg.experiment_id = "sai_k";
    cfg.model = ModelSpec{Family::multinomial, 64, 1.0, 0, {}};
    cfg.protocol = "simulate_and_infer";
    cfg.n = 200000;
    cfg.grid.kind = GridSpec::Kind::simplex_uniform;
    cfg.replications = 2000;
    cfg.seed = 0xa8c;
    std::vector<int> ks{2, 3, 4, 5};
    std::vector<RiskReport> reports;
    for (auto& p : sweep(cfg, SweepAxis::k, ks)) {
      if (!p.report) return {false, "k sweep failed: " + p.error};
      reports.push_back(*p.report);
    }
    std::vector<Regressor> kreg{Regressor::k};
    auto fit = fit_scaling_exponents(reports, kreg);
    const double slope = fit.coefficients[0].estimate;
    const double lo = -std::log(2.0) * 1.15;
    const double hi = -std::log(2.0) * 0.85;
    pass = pass && slope >= lo && slope <= hi;
    detail += fmt("(c) k-slope %.4f +- %.4f in [%.4f, %.4f]; ", slope, fit.coefficients[0].se, lo, hi);

    cfg.experiment_id = "sai_d";
    cfg.k = 2;
    cfg.replications = 500;
    reports.clear();
    for (int d : {8, 16, 32, 64}) {
      cfg.model.d = d;
      cfg.n = 3125 * d;
      cfg.seed = derive_key(0xa8d, {static_cast<std::uint64_t>(d)});
      reports.push_back(run_experiment(cfg));
    }
    std::vector<Regressor> dreg{Regressor::log_d};
    auto dfit = fit_scaling_exponents(reports, dreg, Response::n_times_risk);
    const double e = dfit.coefficients[0].estimate;
    pass = pass && std::abs(e - 1.0) <= 0.15;
    detail += fmt("d-exponent of n risk %.4f +- %.4f (need 1 +- 0.15)", e, dfit.coefficients[0].se);
  }
  return {pass, detail};
}

Verdict tensor_power() {
  StepFunction halfspace{{0.0}, {0.0, 1.0}};
  auto b16 = tensor_power_compare(halfspace, 16);
  auto b4 = tensor_power_compare(halfspace, 4);
  const double target = std::sqrt(2.0 / std::numbers::pi);
  const bool gaussian_ok = std::abs(b16.gaussian - target) <= 1e-12;
  return {gaussian_ok && b16.relative_gap < 0.10 && std::abs(b16.relative_gap) < std::abs(b4.relative_gap),
          fmt("gaussian %.6f (sqrt(2/pi) %.6f); gap %.2f%% at B=16, %.2f%% at B=4", b16.gaussian, target,
              100 * b16.relative_gap, 100 * b4.relative_gap)};
}

Verdict utilities() {
  double round_trip = 0.0;
  double f_slack = 1e300;
  for (int j = 0; j <= 1000; ++j) {
    const double y = j / 1000.0;
    round_trip = std::max(round_trip, std::abs(h2(h2_inv(y)) - y));
    f_slack = std::min(f_slack, 2 * std::log(2.0) * (1 - y) - f_entropy(y));
  }
  double exact = 0.0;
  for (int j = 75; j <= 100; ++j) exact += std::exp(std::lgamma(101.0) - std::lgamma(j + 1.0) - std::lgamma(101.0 - j) - 100 * std::log(2.0));
  const double relaxed = chernoff_tails(50, 0.5, TailSide::upper).relaxed;
  bool balls = true;
  for (int d = 5; d <= 100; d += 5) {
    auto v = hamming_ball_volume(d, d / 5);
    balls = balls && v.ratio <= v.exp_bound;
  }
  const double normal = std::abs(psi2_norm(NormalLaw{1.0}) / std::sqrt(8.0 / 3.0) - 1.0);
  const double rademacher = std::abs(psi2_norm(DiscreteLaw{{-1.0, 1.0}, {0.5, 0.5}}) * std::sqrt(std::log(2.0)) - 1.0);
  const bool pass = round_trip <= 1e-10 && f_slack >= 0.0 && relaxed >= exact && balls && normal <= 1e-9 && rademacher <= 1e-9;
  return {pass, fmt("h2 round trip %.2g; min f slack %.3g; chernoff %.3g >= %.3g; balls %s; psi2 rel err %.2g, %.2g",
                    round_trip, f_slack, relaxed, exact, balls ? "ok" : "violated", normal, rademacher)};
}

struct Criterion {
  const char* name;
  double budget_seconds;
  std::function<Verdict()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {"protocol identities", 10, protocol_identities},
      {"information chain", 60, information_chain},
      {"geometry exhaustive", 120, geometry_exhaustive},
      {"hamming-ball constant 2", 5, hamming_tightness},
      {"gaussian halfspace bound", 1, gaussian_halfspace},
      {"probit grouping constant", 60, probit_constant},
      {"sharded bits exactness", 30, sharded_exactness},
      {"simulate-and-infer", 600, simulate_and_infer},
      {"tensor power trick", 1, tensor_power},
      {"utilities", 5, utilities},
  };
  std::vector<int> selected;
  for (int a = 1; a < argc; ++a) {
    const int id = std::atoi(argv[a]);
    if (id < 1 || id > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "unknown criterion '%s'\n", argv[a]);
      return 2;
    }
    selected.push_back(id);
  }
  if (selected.empty()) {
    for (int id = 1; id <= static_cast<int>(criteria.size()); ++id) selected.push_back(id);
  }

  int failures = 0;
  for (int id : selected) {
    const auto& c = criteria[static_cast<std::size_t>(id - 1)];
    const auto start = std::chrono::steady_clock::now();
    Verdict out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = seconds < c.budget_seconds;
    const bool pass = out.pass && in_time;
    if (!pass) ++failures;
    std::printf("%s AC%d %s: %s [%.2fs, limit %.0fs%s]\n", pass ? "PASS" : "FAIL", id, c.name, out.detail.c_str(), seconds,
                c.budget_seconds, in_time ? "" : ", over time");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
