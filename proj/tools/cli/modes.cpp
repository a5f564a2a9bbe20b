#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>

#include "cli.hpp"
#include "commlim/blackboard.hpp"
#include "commlim/bounds.hpp"
#include "commlim/error.hpp"
#include "commlim/geometry.hpp"
#include "commlim/oracle.hpp"
#include "commlim/protocols.hpp"
#include "commlim/rng.hpp"

namespace commlim::cli {

namespace {

using nlohmann::json;

struct Common {
  std::string id;
  std::uint64_t seed = 0;
  int threads = 0;
  std::filesystem::path base_dir;
  bool dry_run = false;
};

// Shortest text that reads back to the same double.
std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void fail(RunResult& r, std::string message) {
  r.passed = false;
  r.failures.push_back(std::move(message));
}

// Converts library domain errors raised while checking a parsed config.
template <class F>
auto as_config_error(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(path, e.what());
  }
}

json theta_json(const ThetaRisk& t) {
  return {{"theta_id", t.theta_id},
          {"theta", t.theta},
          {"risk", t.risk},
          {"se", t.se},
          {"replications", t.replications},
          {"degenerate_count", t.degenerate_count},
          {"degenerate_risk", t.degenerate_risk},
          {"diagnostics", t.diagnostics}};
}

json report_json(const RiskReport& r) {
  json rows = json::array();
  for (const auto& t : r.per_theta) rows.push_back(theta_json(t));
  return {{"experiment_id", r.experiment_id},
          {"protocol", r.protocol},
          {"n", r.n},
          {"d", r.d},
          {"k", r.k},
          {"seed", r.seed},
          {"replications", r.replications},
          {"sup_risk", r.sup_risk},
          {"sup_theta_id", r.sup_theta_id},
          {"sup_se", r.per_theta.at(r.sup_theta_id).se},
          {"norm_n_d2", norm_n_d2(r.sup_risk, r.n, r.d, r.k)},
          {"norm_n2k_d", norm_n2k_d(r.sup_risk, r.n, r.d, r.k)},
          {"norm_nk_d2", norm_nk_d2(r.sup_risk, r.n, r.d, r.k)},
          {"per_theta", rows}};
}

// Window and/or z-test on one statistic of the sup-risk row.
struct RiskCheck {
  std::string statistic = "risk";
  std::optional<double> min;
  std::optional<double> max;
  std::optional<double> target;
  double max_z = 3.0;
};

RiskCheck parse_risk_check(Fields f) {
  RiskCheck c;
  c.statistic = f.choice("statistic", {"risk", "norm_n_d2", "norm_n2k_d", "norm_nk_d2"}, "risk");
  if (f.has("min")) c.min = f.number("min");
  if (f.has("max")) c.max = f.number("max");
  if (f.has("target")) c.target = f.number("target");
  c.max_z = f.positive("max_z", 3.0);
  f.finish();
  if (!c.min && !c.max && !c.target) throw ConfigError(f.path(), "needs min, max or target");
  return c;
}

void apply_risk_check(const RiskCheck& c, const RiskReport& report, RunResult& r) {
  double scale = 1.0;
  if (c.statistic == "norm_n_d2") scale = norm_n_d2(1.0, report.n, report.d, report.k);
  else if (c.statistic == "norm_n2k_d") scale = norm_n2k_d(1.0, report.n, report.d, report.k);
  else if (c.statistic == "norm_nk_d2") scale = norm_nk_d2(1.0, report.n, report.d, report.k);
  const double value = scale * report.sup_risk;
  const double se = scale * report.per_theta.at(report.sup_theta_id).se;
  json check{{"statistic", c.statistic}, {"value", value}, {"se", se}};
  if (c.min && value < *c.min) fail(r, c.statistic + " " + num(value) + " below " + num(*c.min));
  if (c.max && value > *c.max) fail(r, c.statistic + " " + num(value) + " above " + num(*c.max));
  if (c.target) {
    const double z = (value - *c.target) / se;
    check["z"] = z;
    if (!(std::abs(z) <= c.max_z)) fail(r, c.statistic + " is " + num(z) + " standard errors from " + num(*c.target));
  }
  check["passed"] = r.passed;
  r.report["check"] = check;
}

RunResult run_risk(Fields& f, const Common& c) {
  auto cfg = parse_experiment(f, c.id, c.seed, c.threads);
  std::optional<RiskCheck> check;
  if (f.has("check")) check = parse_risk_check(f.object("check"));
  f.finish();
  as_config_error("", [&] { validate(cfg); });
  if (c.dry_run) return {};

  RunResult r;
  const auto report = run_experiment(cfg);
  r.report = report_json(report);
  std::ostringstream csv;
  write_risk_csv_header(csv);
  write_risk_csv_rows(csv, report);
  r.csv.push_back({"risk.csv", csv.str()});
  if (check) apply_risk_check(*check, report, r);
  return r;
}

SweepAxis parse_axis(const std::string& axis) {
  if (axis == "n") return SweepAxis::n;
  if (axis == "d") return SweepAxis::d;
  return SweepAxis::k;
}

RunResult run_scaling(Fields& f, const Common& c) {
  auto base = parse_experiment(f, c.id, c.seed, c.threads);
  auto s = f.object("sweep");
  const auto axis_name = s.choice("axis", {"n", "d", "k"});
  const auto values = s.integers("values", 1);
  std::optional<long long> n_per_d;
  if (s.has("n_per_d")) n_per_d = s.integer("n_per_d", 1);
  s.finish();
  if (values.size() < 3) throw ConfigError(s.path_of("values"), "needs at least three values to fit");
  if (n_per_d && axis_name != "d") throw ConfigError(s.path_of("n_per_d"), "only applies to a d sweep");

  std::vector<Regressor> regressors;
  const auto& regs = f.raw("regressors");
  if (!regs.is_array() || regs.empty()) throw ConfigError("regressors", "expected a nonempty array of names");
  for (std::size_t i = 0; i < regs.size(); ++i) {
    const auto p = "regressors[" + std::to_string(i) + "]";
    if (!regs[i].is_string()) throw ConfigError(p, "expected a string");
    regressors.push_back(as_config_error(p, [&] { return regressor_from_string(regs[i].get<std::string>()); }));
  }
  const auto response = f.choice("response", {"risk", "n_times_risk"}, "risk");
  std::optional<double> lo;
  std::optional<double> hi;
  std::size_t coefficient = 0;
  if (f.has("check")) {
    auto ch = f.object("check");
    coefficient = static_cast<std::size_t>(ch.integer("coefficient", 0, 0));
    if (ch.has("min")) lo = ch.number("min");
    if (ch.has("max")) hi = ch.number("max");
    ch.finish();
    if (coefficient >= regressors.size()) throw ConfigError(ch.path_of("coefficient"), "no such regressor");
  }
  f.finish();

  const auto axis = parse_axis(axis_name);
  std::vector<ExperimentConfig> configs;
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto cfg = base;
    if (axis == SweepAxis::n) cfg.n = values[i];
    if (axis == SweepAxis::d) cfg.model.d = values[i];
    if (axis == SweepAxis::k) cfg.k = values[i];
    if (n_per_d) cfg.n = static_cast<int>(*n_per_d * values[i]);
    cfg.seed = derive_key(base.seed, {static_cast<std::uint64_t>(i)});
    as_config_error("sweep.values[" + std::to_string(i) + "]", [&] { validate(cfg); });
    configs.push_back(std::move(cfg));
  }
  if (c.dry_run) return {};

  RunResult r;
  std::vector<RiskReport> reports;
  json points = json::array();
  for (std::size_t i = 0; i < configs.size(); ++i) {
    try {
      reports.push_back(run_experiment(configs[i]));
      points.push_back({{"value", values[i]}, {"report", report_json(reports.back())}});
    } catch (const Error& e) {
      points.push_back({{"value", values[i]}, {"error", e.what()}});
      fail(r, "sweep point " + std::to_string(values[i]) + ": " + e.what());
    }
  }
  const auto resp = response == "risk" ? Response::risk : Response::n_times_risk;
  const auto fit = fit_scaling_exponents(reports, regressors, resp);
  json coefs = json::array();
  for (std::size_t j = 0; j < regressors.size(); ++j) {
    coefs.push_back({{"regressor", to_string(regressors[j])},
                     {"estimate", fit.coefficients[j].estimate},
                     {"se", fit.coefficients[j].se}});
  }
  r.report = {{"experiment_id", c.id},
              {"axis", axis_name},
              {"response", response},
              {"points", points},
              {"fit",
               {{"coefficients", coefs},
                {"intercept", fit.intercept.estimate},
                {"r2", fit.r2},
                {"observations", fit.observations}}}};

  const auto& slope = fit.coefficients[coefficient];
  std::ostringstream csv;
  csv << "experiment_id,axis,value,n,d,k,risk,se,slope,slope_se\n";
  for (const auto& rep : reports) {
    const int value = axis == SweepAxis::n ? rep.n : axis == SweepAxis::d ? rep.d : rep.k;
    csv << c.id << ',' << axis_name << ',' << value << ',' << rep.n << ',' << rep.d << ',' << rep.k << ','
        << num(rep.sup_risk) << ',' << num(rep.per_theta.at(rep.sup_theta_id).se) << ',' << num(slope.estimate) << ','
        << num(slope.se) << '\n';
  }
  r.csv.push_back({"scaling.csv", csv.str()});
  if (lo && slope.estimate < *lo) fail(r, "slope " + num(slope.estimate) + " below " + num(*lo));
  if (hi && slope.estimate > *hi) fail(r, "slope " + num(slope.estimate) + " above " + num(*hi));
  return r;
}

Model default_finite(const std::string& family, int d) {
  if (family == "product_bernoulli") return Model::bernoulli(d, 0.5);
  return Model::multinomial(std::vector<double>(static_cast<std::size_t>(d), 1.0 / (d + 2)));
}

ProtocolTree parse_tree(Fields& f, const std::string& key, const Common& c) {
  if (f.has(key)) return as_config_error(f.path_of(key), [&] { return tree_from_json(f.raw(key)); });
  const auto file_key = key + "_file";
  auto path = std::filesystem::path(f.text(file_key));
  if (path.is_relative()) path = c.base_dir / path;
  std::ifstream in(path);
  if (!in) throw ConfigError(f.path_of(file_key), "cannot open '" + path.string() + "'");
  const auto doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError(f.path_of(file_key), "not valid JSON");
  return as_config_error(f.path_of(file_key), [&] { return tree_from_json(doc); });
}

RunResult run_oracle(Fields& f, const Common& c) {
  const auto instances = f.integer("instances", 0, 0);
  const auto max_sensors = static_cast<int>(f.integer("max_sensors", 1, 3));
  const auto max_bits = static_cast<int>(f.integer("max_bits", 1, 2));
  const auto max_d = static_cast<int>(f.integer("max_d", 1, 3));
  const auto deltas = f.numbers("deltas", std::vector<double>{0.05, 0.1});
  std::vector<std::string> families{"product_bernoulli", "multinomial"};
  if (f.has("families")) {
    families.clear();
    const auto& arr = f.raw("families");
    if (!arr.is_array() || arr.empty()) throw ConfigError("families", "expected a nonempty array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (!arr[i].is_string() || (arr[i] != "product_bernoulli" && arr[i] != "multinomial")) {
        throw ConfigError("families[" + std::to_string(i) + "]", "expected product_bernoulli or multinomial");
      }
      families.push_back(arr[i].get<std::string>());
    }
  }
  const double tolerance = f.positive("tolerance", 1e-10);
  const bool terms = f.flag("terms", false);
  if (deltas.empty()) throw ConfigError("deltas", "must not be empty");
  if (max_sensors * max_bits > 24) throw ConfigError("max_bits", "max_sensors * max_bits must be <= 24");

  struct Case {
    ProtocolTree tree;
    HypothesisCube cube;
    std::optional<double> I, Dbar, UB;
    double tolerance;
  };
  std::vector<Case> cases;
  if (f.has("cases")) {
    for (auto& cf : f.objects("cases")) {
      auto tree = parse_tree(cf, "tree", c);
      const auto model = Model(parse_model(cf.object("model")));
      const double delta = cf.positive("delta");
      auto cube = as_config_error(cf.path_of("delta"), [&] { return HypothesisCube(model, delta); });
      Case cs{std::move(tree), std::move(cube), {}, {}, {}, cf.positive("tolerance", 1e-9)};
      if (cf.has("expect")) {
        auto e = cf.object("expect");
        if (e.has("I")) cs.I = e.number("I");
        if (e.has("Dbar")) cs.Dbar = e.number("Dbar");
        if (e.has("UB")) cs.UB = e.number("UB");
        e.finish();
      }
      cf.finish();
      cases.push_back(std::move(cs));
    }
  }
  f.finish();
  if (instances == 0 && cases.empty()) throw ConfigError("instances", "needs random instances or explicit cases");
  if (c.dry_run) return {};

  RunResult r;
  double min_slack = std::numeric_limits<double>::infinity();
  std::ostringstream inst_csv;
  std::ostringstream terms_csv;
  inst_csv << "instance,family,d,sensors,bits,delta,I,Dbar,UB\n";
  terms_csv << "instance,sensor,transcript,value\n";
  auto emit_terms = [&](const std::string& id, const InfoChainReport& q) {
    for (const auto& t : q.terms) terms_csv << id << ',' << t.sensor << ',' << t.y.to_string() << ',' << num(t.value) << '\n';
  };
  CounterRng rng(c.seed);
  for (long long t = 0; t < instances; ++t) {
    const int n = static_cast<int>(1 + rng.below(static_cast<std::uint64_t>(max_sensors)));
    const int k = static_cast<int>(1 + rng.below(static_cast<std::uint64_t>(max_bits)));
    const int d = static_cast<int>(1 + rng.below(static_cast<std::uint64_t>(max_d)));
    const double delta = deltas[rng.below(deltas.size())];
    const auto& family = families[rng.below(families.size())];
    const auto model = default_finite(family, d);
    HypothesisCube cube(model, delta);
    const auto q = kl_chain_quantities(random_tree(n, k, model, derive_key(c.seed, {static_cast<std::uint64_t>(t)})), cube, terms);
    min_slack = std::min({min_slack, q.I, q.Dbar - q.I, q.UB - q.Dbar});
    inst_csv << t << ',' << family << ',' << d << ',' << n << ',' << k << ',' << num(delta) << ',' << num(q.I) << ','
             << num(q.Dbar) << ',' << num(q.UB) << '\n';
    if (terms) emit_terms(std::to_string(t), q);
  }
  json case_rows = json::array();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& cs = cases[i];
    const auto q = kl_chain_quantities(cs.tree, cs.cube, terms);
    min_slack = std::min({min_slack, q.I, q.Dbar - q.I, q.UB - q.Dbar});
    json row{{"I", q.I}, {"Dbar", q.Dbar}, {"UB", q.UB}, {"hypotheses", q.hypotheses}, {"transcripts", q.transcripts}};
    auto expect = [&](const char* name, const std::optional<double>& want, double got) {
      if (want && !(std::abs(got - *want) <= cs.tolerance)) {
        fail(r, "case " + std::to_string(i) + ": " + name + " = " + num(got) + ", expected " + num(*want));
      }
    };
    expect("I", cs.I, q.I);
    expect("Dbar", cs.Dbar, q.Dbar);
    expect("UB", cs.UB, q.UB);
    case_rows.push_back(row);
    if (terms) emit_terms("case" + std::to_string(i), q);
  }
  if (!(min_slack >= -tolerance)) fail(r, "chain slack " + num(min_slack) + " below -" + num(tolerance));
  r.report = {{"instances", instances}, {"min_slack", min_slack}, {"tolerance", tolerance}, {"cases", case_rows}};
  if (instances > 0) r.csv.push_back({"instances.csv", inst_csv.str()});
  if (terms) r.csv.push_back({"terms.csv", terms_csv.str()});
  return r;
}

RunResult run_identities(Fields& f, const Common& c) {
  const auto trees = f.integer("trees", 1, 1000);
  const auto max_sensors = static_cast<int>(f.integer("max_sensors", 1, 3));
  const auto max_bits = static_cast<int>(f.integer("max_bits", 1, 2));
  const double tolerance = f.positive("tolerance", 1e-9);
  std::vector<Model> models;
  if (f.has("models")) {
    for (auto& mf : f.objects("models")) {
      const auto path = mf.path();
      Model m(parse_model(std::move(mf)));
      if (!m.finite()) throw ConfigError(path, "identity checks need a finite sample space");
      models.push_back(std::move(m));
    }
    if (models.empty()) throw ConfigError("models", "must not be empty");
  } else {
    models = {Model::bernoulli(1, 0.35), Model::bernoulli({0.3, 0.55}), Model::multinomial({0.4}),
              Model::multinomial({0.25, 0.3})};
  }
  f.finish();
  if (max_sensors * max_bits > 24) throw ConfigError("max_bits", "max_sensors * max_bits must be <= 24");
  if (c.dry_run) return {};

  RunResult r;
  CounterRng rng(c.seed);
  double worst = 0.0;
  std::uint64_t tuples = 0;
  std::uint64_t violations = 0;
  std::ostringstream csv;
  csv << "tree,model,budgets,tuples,max_slack\n";
  for (long long t = 0; t < trees; ++t) {
    const int n = static_cast<int>(1 + rng.below(static_cast<std::uint64_t>(max_sensors)));
    std::vector<int> budgets;
    for (int j = 0; j < n; ++j) budgets.push_back(static_cast<int>(1 + rng.below(static_cast<std::uint64_t>(max_bits))));
    const auto pick = rng.below(models.size());
    const auto& m = models[pick];
    const auto space = m.sample_space_size();
    const auto tree = random_tree(RandomTreeOptions{budgets, space, 0, derive_key(c.seed, {static_cast<std::uint64_t>(t)})});
    if (!validate_budget(tree).valid) {
      ++violations;
      fail(r, "tree " + std::to_string(t) + " is not budget-valid");
      continue;
    }
    std::vector<std::size_t> idx(static_cast<std::size_t>(n), 0);
    std::vector<Observation> xs(static_cast<std::size_t>(n));
    double tree_worst = 0.0;
    std::uint64_t tree_tuples = 0;
    while (true) {
      for (int j = 0; j < n; ++j) xs[static_cast<std::size_t>(j)] = m.point(idx[static_cast<std::size_t>(j)]);
      const double slack = check_protocol_identities(tree, xs).max_slack;
      tree_worst = std::max(tree_worst, slack);
      if (!(slack <= tolerance)) ++violations;
      ++tree_tuples;
      int j = 0;
      while (j < n && ++idx[static_cast<std::size_t>(j)] == space) idx[static_cast<std::size_t>(j++)] = 0;
      if (j == n) break;
    }
    std::string b;
    for (int x : budgets) b += (b.empty() ? "" : ";") + std::to_string(x);
    csv << t << ',' << pick << ',' << b << ',' << tree_tuples << ',' << num(tree_worst) << '\n';
    worst = std::max(worst, tree_worst);
    tuples += tree_tuples;
  }
  if (violations > 0) fail(r, std::to_string(violations) + " identity violations, max slack " + num(worst));
  r.report = {{"trees", trees}, {"input_tuples", tuples}, {"max_slack", worst}, {"violations", violations},
              {"tolerance", tolerance}};
  r.csv.push_back({"identities.csv", csv.str()});
  return r;
}

void write_slack_rows(std::ostringstream& csv, const std::vector<SlackRecord>& records) {
  for (const auto& rec : records) {
    for (const auto& b : rec.bounds) {
      csv << rec.set_id << ',' << num(rec.probability) << ',' << num(rec.norm2) << ',' << b.name << ',' << num(b.value)
          << ',' << num(b.slack) << '\n';
    }
  }
}

RunResult run_geometry(Fields& f, const Common& c) {
  const double tolerance = f.positive("tolerance", 1e-9);
  std::optional<std::vector<int>> scan_dims;
  if (f.has("hypercube_scan")) {
    auto s = f.object("hypercube_scan");
    scan_dims = s.integers("dims", 1);
    s.finish();
    for (int d : *scan_dims) {
      if (d > 4) throw ConfigError(s.path_of("dims"), "exhaustive scans need d <= 4");
    }
  }
  struct MaxNormSpec {
    std::vector<int> dims;
    std::optional<double> expect;
    double tolerance;
  };
  std::optional<MaxNormSpec> max_norm;
  if (f.has("max_norm")) {
    auto s = f.object("max_norm");
    MaxNormSpec spec{s.integers("dims", 1), {}, 0.0};
    if (s.has("expect")) spec.expect = s.number("expect");
    spec.tolerance = s.positive("tolerance", 1e-12);
    s.finish();
    for (int d : spec.dims) {
      if (d > 4) throw ConfigError(s.path_of("dims"), "exhaustive search needs d <= 4");
    }
    max_norm = spec;
  }
  struct Halfspaces {
    double from, to;
    long long points;
  };
  std::optional<Halfspaces> halfspaces;
  if (f.has("halfspaces")) {
    auto s = f.object("halfspaces");
    halfspaces = Halfspaces{s.number("from"), s.number("to"), s.integer("points", 2)};
    s.finish();
    if (!(halfspaces->to > halfspaces->from)) throw ConfigError(s.path_of("to"), "must exceed 'from'");
  }
  std::optional<int> cap_d;
  std::optional<double> min_ratio;
  if (f.has("cap_sweep")) {
    auto s = f.object("cap_sweep");
    cap_d = static_cast<int>(s.integer("d", 2));
    if (s.has("min_ratio")) min_ratio = s.number("min_ratio");
    s.finish();
  }
  struct TensorSpec {
    StepFunction a;
    std::vector<int> lifts;
    std::optional<double> max_relative_gap;
    bool decreasing;
  };
  std::optional<TensorSpec> tensor;
  if (f.has("tensor_power")) {
    auto s = f.object("tensor_power");
    TensorSpec spec{StepFunction{s.numbers("breaks"), s.numbers("values")}, s.integers("lifts", 1), {}, false};
    if (s.has("max_relative_gap")) spec.max_relative_gap = s.number("max_relative_gap");
    spec.decreasing = s.flag("decreasing", false);
    s.finish();
    if (spec.a.values.size() != spec.a.breaks.size() + 1) {
      throw ConfigError(s.path_of("values"), "needs one more value than breaks");
    }
    if (spec.lifts.empty()) throw ConfigError(s.path_of("lifts"), "must not be empty");
    tensor = spec;
  }
  f.finish();
  if (!scan_dims && !max_norm && !halfspaces && !cap_d && !tensor) {
    throw ConfigError("", "verify-geometry needs at least one of hypercube_scan, max_norm, halfspaces, cap_sweep, "
                          "tensor_power");
  }
  if (c.dry_run) return {};

  RunResult r;
  r.report = json::object();
  if (scan_dims) {
    json rows = json::array();
    for (int d : *scan_dims) {
      const auto scan = scan_hypercube_subsets(d, tolerance, c.threads);
      rows.push_back({{"d", d},
                      {"sets", scan.sets},
                      {"bessel_violations", scan.bessel_violations},
                      {"hypercube_violations", scan.hypercube_violations},
                      {"min_bessel_slack", scan.min_bessel_slack},
                      {"min_hypercube_slack", scan.min_hypercube_slack}});
      if (scan.bessel_violations + scan.hypercube_violations > 0) fail(r, "d = " + std::to_string(d) + " scan has violations");
    }
    r.report["hypercube_scan"] = rows;
  }
  if (max_norm) {
    json rows = json::array();
    for (int d : max_norm->dims) {
      const auto m = brute_force_max_norm(d, std::size_t{1} << (d - 1));
      rows.push_back({{"d", d}, {"size", std::size_t{1} << (d - 1)}, {"norm", m.norm}, {"witness", m.witness}});
      if (max_norm->expect && !(std::abs(m.norm - *max_norm->expect) <= max_norm->tolerance)) {
        fail(r, "max norm at d = " + std::to_string(d) + " is " + num(m.norm));
      }
    }
    r.report["max_norm"] = rows;
  }
  if (halfspaces) {
    std::vector<SubsetSpec> sets;
    for (long long j = 0; j < halfspaces->points; ++j) {
      const double t = halfspaces->from + (halfspaces->to - halfspaces->from) * static_cast<double>(j) /
                                              static_cast<double>(halfspaces->points - 1);
      GaussianRegion region(1);
      region.add(std::vector<double>{1.0}, t, true);
      sets.push_back(GaussianSet{Model::gaussian(1), region});
    }
    GeometryOptions opts;
    opts.tolerance = tolerance;
    const auto records = verify_geometric_bounds(sets, opts);
    std::ostringstream csv;
    csv << "set_id,P,norm2,bound_name,bound_value,slack\n";
    write_slack_rows(csv, records);
    r.csv.push_back({"slack.csv", csv.str()});
    double worst = std::numeric_limits<double>::infinity();
    json slack = json::array();
    for (const auto& rec : records) {
      for (const auto& b : rec.bounds) {
        worst = std::min(worst, b.slack);
        slack.push_back({{"set_id", rec.set_id}, {"P", rec.probability}, {"bound", b.name}, {"slack", b.slack}});
      }
      if (rec.violated) fail(r, "halfspace set " + std::to_string(rec.set_id) + " violates a bound");
    }
    r.report["halfspaces"] = {{"sets", records.size()}, {"min_slack", worst}, {"slack", slack}};
  }
  if (cap_d) {
    const auto sweep = cap_ratio_sweep(*cap_d);
    std::ostringstream csv;
    csv << "radius,ratio\n";
    for (std::size_t t = 0; t < sweep.ratios.size(); ++t) csv << t << ',' << num(sweep.ratios[t]) << '\n';
    r.csv.push_back({"cap_sweep.csv", csv.str()});
    r.report["cap_sweep"] = {{"d", *cap_d}, {"best_radius", sweep.best_radius}, {"best_ratio", sweep.best_ratio}};
    if (min_ratio && sweep.best_ratio < *min_ratio) {
      fail(r, "best cap ratio " + num(sweep.best_ratio) + " below " + num(*min_ratio));
    }
  }
  if (tensor) {
    json rows = json::array();
    double previous = std::numeric_limits<double>::infinity();
    for (int lift : tensor->lifts) {
      const auto tp = as_config_error("tensor_power.lifts", [&] { return tensor_power_compare(tensor->a, lift); });
      rows.push_back({{"lift", lift},
                      {"hypercube", tp.hypercube},
                      {"gaussian", tp.gaussian},
                      {"gap", tp.gap},
                      {"relative_gap", tp.relative_gap}});
      if (tensor->decreasing && !(std::abs(tp.gap) < previous)) {
        fail(r, "gap at B = " + std::to_string(lift) + " is not smaller than at the previous lift");
      }
      previous = std::abs(tp.gap);
      if (lift == tensor->lifts.back() && tensor->max_relative_gap &&
          !(std::abs(tp.relative_gap) < *tensor->max_relative_gap)) {
        fail(r, "relative gap " + num(tp.relative_gap) + " at B = " + std::to_string(lift));
      }
    }
    r.report["tensor_power"] = rows;
  }
  return r;
}

RunResult run_bounds(Fields& f, const Common& c) {
  std::vector<RateQuery> queries;
  if (f.has("queries")) {
    for (auto& q : f.objects("queries")) {
      RateQuery rq;
      rq.theorem = as_config_error(q.path_of("theorem"), [&] { return theorem_from_string(q.text("theorem")); });
      rq.n = q.integer("n", 1);
      rq.d = q.integer("d", 1);
      rq.k = q.integer("k", 1);
      rq.s = q.integer("s", 0, 0);
      rq.i0 = q.number("i0", 0.0);
      rq.sigma2 = q.positive("sigma2", 1.0);
      if (q.has("R")) rq.R = q.positive("R");
      q.finish();
      queries.push_back(rq);
    }
  }
  struct Utilities {
    long long grid = 1000;
    double roundtrip_tolerance = 1e-10;
    long long trials = 100;
    double delta = 0.5;
    int hamming_from = 5, hamming_to = 100, hamming_step = 5, radius_divisor = 5;
    double psi2_tolerance = 1e-9;
  };
  std::optional<Utilities> util;
  if (f.has("utilities")) {
    auto u = f.object("utilities");
    Utilities x;
    x.grid = u.integer("grid", 1, x.grid);
    x.roundtrip_tolerance = u.positive("roundtrip_tolerance", x.roundtrip_tolerance);
    x.trials = u.integer("chernoff_trials", 1, x.trials);
    x.delta = u.positive("chernoff_delta", x.delta);
    x.hamming_from = static_cast<int>(u.integer("hamming_from", 1, x.hamming_from));
    x.hamming_to = static_cast<int>(u.integer("hamming_to", 1, x.hamming_to));
    x.hamming_step = static_cast<int>(u.integer("hamming_step", 1, x.hamming_step));
    x.radius_divisor = static_cast<int>(u.integer("radius_divisor", 3, x.radius_divisor));
    x.psi2_tolerance = u.positive("psi2_tolerance", x.psi2_tolerance);
    u.finish();
    util = x;
  }
  f.finish();
  if (queries.empty() && !util) throw ConfigError("", "bounds needs queries or utilities");
  if (c.dry_run) return {};

  RunResult r;
  json rows = json::array();
  for (const auto& q : queries) {
    const auto rate = as_config_error("queries", [&] { return lower_rate(q); });
    rows.push_back({{"theorem", to_string(q.theorem)},
                    {"n", q.n},
                    {"d", q.d},
                    {"k", q.k},
                    {"value", rate.value},
                    {"warnings", rate.warnings}});
  }
  r.report = {{"queries", rows}};
  if (util) {
    double roundtrip = 0.0;
    double f_slack = std::numeric_limits<double>::infinity();
    for (long long j = 0; j <= util->grid; ++j) {
      const double y = static_cast<double>(j) / static_cast<double>(util->grid);
      roundtrip = std::max(roundtrip, std::abs(h2(h2_inv(y)) - y));
      f_slack = std::min(f_slack, 2 * std::numbers::ln2 * (1 - y) - f_entropy(y));
    }
    if (!(roundtrip <= util->roundtrip_tolerance)) fail(r, "h2 round trip error " + num(roundtrip));
    if (!(f_slack >= 0.0)) fail(r, "f exceeds 2 ln2 (1 - y) by " + num(-f_slack));

    const double lambda = static_cast<double>(util->trials) / 2.0;
    const double cut = std::ceil((1.0 + util->delta) * lambda);
    const boost::math::binomial_distribution<double> bin(static_cast<double>(util->trials), 0.5);
    const double exact = cut <= 0.0 ? 1.0 : boost::math::cdf(boost::math::complement(bin, cut - 1.0));
    const auto ch = chernoff_tails(lambda, util->delta, TailSide::upper);
    if (!(ch.relaxed >= exact)) fail(r, "relaxed Chernoff bound below the exact tail");

    bool balls = true;
    json ball_rows = json::array();
    for (int d = util->hamming_from; d <= util->hamming_to; d += util->hamming_step) {
      const auto v = hamming_ball_volume(d, d / util->radius_divisor);
      balls = balls && v.ratio <= v.exp_bound;
      ball_rows.push_back({{"d", d}, {"radius", d / util->radius_divisor}, {"ratio", v.ratio}, {"bound", v.exp_bound}});
    }
    if (!balls) fail(r, "a Hamming ball ratio exceeds exp(-d/8)");

    const double normal = psi2_norm(NormalLaw{1.0});
    const double rademacher = psi2_norm(DiscreteLaw{{-1.0, 1.0}, {0.5, 0.5}});
    const double normal_err = std::abs(normal / std::sqrt(8.0 / 3.0) - 1.0);
    const double rademacher_err = std::abs(rademacher * std::sqrt(std::numbers::ln2) - 1.0);
    if (!(normal_err <= util->psi2_tolerance)) fail(r, "normal psi2 relative error " + num(normal_err));
    if (!(rademacher_err <= util->psi2_tolerance)) fail(r, "Rademacher psi2 relative error " + num(rademacher_err));

    r.report["utilities"] = {{"h2_roundtrip_error", roundtrip},
                             {"min_f_slack", f_slack},
                             {"chernoff", {{"relaxed", ch.relaxed}, {"tight", ch.tight}, {"exact_tail", exact}}},
                             {"hamming", ball_rows},
                             {"psi2", {{"normal", normal}, {"rademacher", rademacher}}}};
  }
  return r;
}

RunResult run_diagnostics(Fields& f, const Common& c) {
  f.choice("protocol", {"simulate_and_infer"});
  const Model model(parse_model(f.object("model")));
  if (model.family() != Family::multinomial) throw ConfigError("model.family", "simulate_and_infer needs a multinomial");
  const int d = model.dim();
  const int n = static_cast<int>(f.integer("n", 2));
  const int k = static_cast<int>(f.integer("k", 2));
  auto theta = f.numbers("theta", std::vector<double>(static_cast<std::size_t>(d), 1.0 / d));
  if (theta.size() != static_cast<std::size_t>(d)) throw ConfigError("theta", "needs d entries");
  as_config_error("theta", [&] { model.check_admissible(theta); });
  const auto reps = f.integer("replications", 1, 1);
  const double min_successes = static_cast<double>(f.integer("min_successes", 0, 0));
  const double max_z = f.positive("max_z", 3.0);
  const double min_p = f.positive("min_p", 0.001);
  f.finish();
  const auto bundle = as_config_error("n", [&] { return build_simulate_and_infer(n, k, model); });
  const auto layout = simulate_and_infer_layout(n, k, d);
  if (c.dry_run) return {};

  RunResult r;
  std::vector<double> counts(static_cast<std::size_t>(d), 0.0);
  double successes = 0.0;
  std::uint64_t done = 0;
  while (done < static_cast<std::uint64_t>(reps) || successes < min_successes) {
    const auto est = estimate(*bundle, bundle->simulate(theta, derive_key(c.seed, {done})));
    const double s = est.diagnostics.at("successes");
    successes += s;
    for (int i = 0; i < d; ++i) counts[static_cast<std::size_t>(i)] += std::round(est.theta[static_cast<std::size_t>(i)] * s);
    ++done;
  }
  const double trials = static_cast<double>(layout.groups) * static_cast<double>(done);
  double expected = 1.0;
  double mass = 0.0;
  for (double t : theta) {
    expected *= 1.0 - t;
    mass += t;
  }
  const double freq = successes / trials;
  const double z = (freq - expected) / std::sqrt(expected * (1.0 - expected) / trials);
  if (!(std::abs(z) <= max_z)) fail(r, "success frequency is " + num(z) + " standard errors from " + num(expected));

  double chi2 = 0.0;
  std::ostringstream csv;
  csv << "index,count,expected\n";
  for (int i = 0; i < d; ++i) {
    const double e = successes * theta[static_cast<std::size_t>(i)] / mass;
    const double o = counts[static_cast<std::size_t>(i)];
    chi2 += (o - e) * (o - e) / e;
    csv << i << ',' << o << ',' << num(e) << '\n';
  }
  double p = 1.0;
  if (d > 1 && successes > 0) p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(d - 1), chi2));
  if (!(p > min_p)) fail(r, "index goodness of fit p = " + num(p));
  r.csv.push_back({"indices.csv", csv.str()});
  r.report = {{"replications", done},
              {"groups_per_replication", layout.groups},
              {"successes", successes},
              {"success_frequency", freq},
              {"expected_frequency", expected},
              {"z", z},
              {"chi2", chi2},
              {"dof", d - 1},
              {"p_value", p}};
  return r;
}

}  // namespace

RunResult run_config(const nlohmann::json& config, const RunOptions& options) {
  Fields top(config, "");
  const auto mode = top.choice("mode", {"risk", "scaling", "oracle", "verify-geometry", "verify-protocol-identities",
                                        "bounds", "protocol-diagnostics"});
  Common c;
  c.id = top.text("experiment_id", mode);
  c.seed = top.unsigned_integer("seed", 0);
  c.threads = static_cast<int>(top.integer("threads", 0, 0));
  if (options.threads) c.threads = *options.threads;
  top.text("description", "");
  c.base_dir = options.base_dir;
  c.dry_run = options.dry_run;
  std::optional<double> limit;
  if (top.has("time_limit_seconds")) limit = top.positive("time_limit_seconds");

  const auto start = std::chrono::steady_clock::now();
  RunResult r;
  if (mode == "risk") r = run_risk(top, c);
  else if (mode == "scaling") r = run_scaling(top, c);
  else if (mode == "oracle") r = run_oracle(top, c);
  else if (mode == "verify-geometry") r = run_geometry(top, c);
  else if (mode == "verify-protocol-identities") r = run_identities(top, c);
  else if (mode == "bounds") r = run_bounds(top, c);
  else r = run_diagnostics(top, c);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  r.mode = mode;
  r.report["mode"] = mode;
  r.report["experiment_id"] = c.id;
  r.report["seed"] = c.seed;
  if (limit) {
    r.report["time_limit_seconds"] = *limit;
    if (seconds > *limit) fail(r, "runtime " + num(seconds) + " s exceeds the " + num(*limit) + " s limit");
  }
  r.report["passed"] = r.passed;
  r.report["failures"] = r.failures;
  return r;
}

}  // namespace commlim::cli
