#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>

#include "commlim/error.hpp"
#include "commlim/risk.hpp"

using namespace commlim;

namespace {

ExperimentConfig sharded_config(int d, int n, int k, int reps) {
  ExperimentConfig cfg;
  cfg.experiment_id = "sharded";
  cfg.model = ModelSpec{Family::product_bernoulli, d, 1.0, 0, {}};
  cfg.protocol = "sharded_bits";
  cfg.n = n;
  cfg.k = k;
  cfg.replications = reps;
  cfg.seed = 11;
  return cfg;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

TEST_CASE("sharded bits risk at the centre matches d^2/(4n)") {
  auto cfg = sharded_config(8, 800, 1, 2000);
  auto report = run_experiment(cfg);
  REQUIRE(report.per_theta.size() == 1);
  const auto& r = report.per_theta[0];
  CHECK(std::abs(r.risk - 0.02) < 3 * r.se);
  CHECK(r.se > 0.0);
  CHECK(report.sup_risk == r.risk);
}

TEST_CASE("sharded bits risk matches the closed form on every grid point") {
  auto cfg = sharded_config(5, 13, 2, 3000);
  cfg.grid.kind = GridSpec::Kind::cube;
  cfg.grid.delta = 0.3;
  cfg.grid.corners = 4;
  auto report = run_experiment(cfg);
  REQUIRE(report.per_theta.size() == 5);
  ShardedLayout layout(13, 2, 5);
  for (const auto& r : report.per_theta) {
    double closed = 0.0;
    for (int i = 0; i < 5; ++i) closed += r.theta[i] * (1 - r.theta[i]) / layout.reports(i);
    CHECK(std::abs(r.risk - closed) < 3 * r.se);
    CHECK(report.sup_risk >= r.risk);
  }
  CHECK(report.per_theta[report.sup_theta_id].risk == report.sup_risk);
}

TEST_CASE("probit normalized risk at zero") {
  ExperimentConfig cfg;
  cfg.model = ModelSpec{Family::gaussian_location, 10, 1.0, 0, {}};
  cfg.protocol = "probit_grouping";
  cfg.n = 20000;
  cfg.k = 1;
  cfg.replications = 200;
  cfg.seed = 3;
  auto report = run_experiment(cfg);
  double normalized = norm_n_d2(report.sup_risk, cfg.n, 10, 1);
  CHECK(normalized >= 1.45);
  CHECK(normalized <= 1.70);
}

TEST_CASE("two replications give a finite standard error") {
  auto report = run_experiment(sharded_config(3, 6, 1, 2));
  CHECK(std::isfinite(report.per_theta[0].se));
  CHECK(report.per_theta[0].replications == 2);
}

TEST_CASE("invalid configurations are rejected") {
  auto one = sharded_config(3, 6, 1, 1);
  CHECK_THROWS_AS(validate(one), DomainError);
  auto empty = sharded_config(3, 6, 1, 5);
  empty.grid.kind = GridSpec::Kind::points;
  CHECK_THROWS_AS(validate(empty), DomainError);
  auto outside = sharded_config(2, 6, 1, 5);
  outside.grid.kind = GridSpec::Kind::points;
  outside.grid.points = {{0.5, 1.5}};
  CHECK_THROWS_AS(validate(outside), DomainError);
  auto budget = sharded_config(8, 2, 1, 5);
  CHECK_THROWS_AS(run_experiment(budget), BudgetError);
}

TEST_CASE("reports are reproducible across thread counts") {
  auto cfg = sharded_config(6, 30, 2, 500);
  cfg.grid.kind = GridSpec::Kind::cube;
  cfg.grid.delta = 0.2;
  cfg.threads = 1;
  auto a = run_experiment(cfg);
  cfg.threads = 4;
  auto b = run_experiment(cfg);
  REQUIRE(a.per_theta.size() == b.per_theta.size());
  for (std::size_t t = 0; t < a.per_theta.size(); ++t) {
    CHECK(a.per_theta[t].risk == b.per_theta[t].risk);
    CHECK(a.per_theta[t].se == b.per_theta[t].se);
  }
  cfg.seed = 12;
  CHECK(run_experiment(cfg).sup_risk != a.sup_risk);
}

TEST_CASE("degenerate decodes can be excluded") {
  ExperimentConfig cfg;
  cfg.model = ModelSpec{Family::multinomial, 4, 1.0, 0, {}};
  cfg.protocol = "simulate_and_infer";
  cfg.n = 4;
  cfg.k = 2;
  cfg.grid.kind = GridSpec::Kind::simplex_uniform;
  cfg.replications = 400;
  auto with = run_experiment(cfg);
  const auto& r = with.per_theta[0];
  CHECK(r.degenerate_count > 0);
  CHECK(r.degenerate_count < 400);
  // A degenerate decode returns 1/d = theta, so it has zero loss.
  CHECK(r.degenerate_risk == 0.0);
  CHECK(r.diagnostics.at("groups") == 1.0);
  cfg.exclude_degenerate = true;
  auto without = run_experiment(cfg);
  CHECK(without.per_theta[0].replications == 400 - r.degenerate_count);
  CHECK(without.per_theta[0].risk > r.risk);
}

TEST_CASE("sweeps keep order and collect errors") {
  ExperimentConfig cfg;
  cfg.model = ModelSpec{Family::multinomial, 64, 1.0, 0, {}};
  cfg.protocol = "simulate_and_infer";
  cfg.n = 256;
  cfg.grid.kind = GridSpec::Kind::simplex_uniform;
  cfg.replications = 4;
  std::vector<int> ks{2, 3, 4, 5};
  auto points = sweep(cfg, SweepAxis::k, ks);
  REQUIRE(points.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(points[i].value == ks[i]);
    CHECK(points[i].report);
    CHECK(points[i].report->k == ks[i]);
  }

  CHECK(sweep(cfg, SweepAxis::k, std::vector<int>{}).empty());

  std::vector<int> bad{1, 2};
  auto mixed = sweep(cfg, SweepAxis::k, bad);
  CHECK_FALSE(mixed[0].report);
  CHECK_FALSE(mixed[0].error.empty());
  CHECK(mixed[1].report);
}

TEST_CASE("risk grows with d at fixed n") {
  ExperimentConfig cfg;
  cfg.model = ModelSpec{Family::gaussian_location, 8, 1.0, 0, {}};
  cfg.protocol = "probit_grouping";
  cfg.n = 4000;
  cfg.k = 1;
  cfg.replications = 60;
  std::vector<int> ds{8, 16, 32, 64};
  auto points = sweep(cfg, SweepAxis::d, ds);
  for (std::size_t i = 1; i < points.size(); ++i) {
    REQUIRE(points[i].report);
    CHECK(points[i].report->sup_risk > points[i - 1].report->sup_risk);
  }
}

TEST_CASE("noiseless regression recovers exponents") {
  std::vector<ScalingPoint> pts;
  for (int n : {100, 400, 1600}) {
    for (int d : {4, 8, 32}) pts.push_back({n, d, 1, 0.7 * d * d / static_cast<double>(n)});
  }
  std::vector<Regressor> regs{Regressor::log_d, Regressor::log_n};
  auto fit = fit_scaling_exponents(pts, regs);
  CHECK(std::abs(fit.coefficients[0].estimate - 2.0) < 1e-6);
  CHECK(std::abs(fit.coefficients[1].estimate + 1.0) < 1e-6);
  CHECK(std::abs(fit.intercept.estimate - std::log(0.7)) < 1e-6);
  CHECK(fit.r2 == doctest::Approx(1.0));
  CHECK(fit.observations == 9);

  auto per_sample = fit_scaling_exponents(pts, regs, Response::n_times_risk);
  CHECK(std::abs(per_sample.coefficients[1].estimate) < 1e-6);

  std::vector<ScalingPoint> k_pts;
  for (int k = 1; k <= 4; ++k) k_pts.push_back({100, 64, k, 64.0 / (100.0 * std::ldexp(1.0, k))});
  std::vector<Regressor> kreg{Regressor::k};
  CHECK(std::abs(fit_scaling_exponents(k_pts, kreg).coefficients[0].estimate + std::log(2.0)) < 1e-9);
}

TEST_CASE("rank deficient designs are rejected") {
  std::vector<ScalingPoint> pts{{100, 4, 1, 0.1}, {200, 4, 1, 0.05}, {400, 4, 1, 0.025}};
  std::vector<Regressor> regs{Regressor::log_n, Regressor::log_d};
  CHECK_THROWS_AS(fit_scaling_exponents(pts, regs), RankError);
  std::vector<ScalingPoint> two{{100, 4, 1, 0.1}, {200, 4, 1, 0.05}};
  std::vector<Regressor> one{Regressor::log_n};
  CHECK_THROWS_AS(fit_scaling_exponents(two, one), DomainError);
  CHECK(regressor_from_string("log_k") == Regressor::log_k);
  CHECK(to_string(Regressor::log_d) == "log_d");
}

TEST_CASE("csv rows carry consistent normalized risks") {
  auto cfg = sharded_config(4, 12, 2, 20);
  cfg.grid.kind = GridSpec::Kind::cube;
  cfg.grid.delta = 0.1;
  auto report = run_experiment(cfg);
  std::ostringstream out;
  write_risk_csv_header(out);
  write_risk_csv_rows(out, report);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line ==
        "experiment_id,protocol,n,d,k,theta_id,risk,se,norm_n_d2,norm_n2k_d,norm_nk_d2,degenerate_count,seconds,seed");
  int rows = 0;
  while (std::getline(in, line)) {
    auto cells = split_csv(line);
    REQUIRE(cells.size() == 14);
    const double n = std::stod(cells[2]);
    const double d = std::stod(cells[3]);
    const double k = std::stod(cells[4]);
    const double risk = std::stod(cells[6]);
    CHECK(std::abs(std::stod(cells[8]) - n * risk / (d * d)) <= 1e-12 * std::max(1.0, n * risk / (d * d)));
    CHECK(std::abs(std::stod(cells[9]) - n * std::exp2(k) * risk / d) <= 1e-12 * std::max(1.0, n * 4 * risk / d));
    CHECK(std::abs(std::stod(cells[10]) - n * k * risk / (d * d)) <= 1e-12 * std::max(1.0, n * k * risk / (d * d)));
    CHECK(cells[13] == std::to_string(cfg.seed));
    ++rows;
  }
  CHECK(rows == static_cast<int>(report.per_theta.size()));
}

TEST_CASE("grids") {
  auto b = Model::bernoulli(3, 0.5);
  GridSpec cube{GridSpec::Kind::cube, 0.1, 4, {}};
  auto pts = make_grid(b, cube);
  REQUIRE(pts.size() == 5);
  CHECK(pts[0] == b.theta0());
  CHECK(pts[1][0] == doctest::Approx(0.6));
  CHECK(pts[2][0] == doctest::Approx(0.4));
  auto m = Model::multinomial(std::vector<double>(4, 0.2));
  auto simplex = make_grid(m, GridSpec{GridSpec::Kind::simplex_uniform, 0.0, 0, {}});
  CHECK(simplex[0] == std::vector<double>(4, 0.25));
}
