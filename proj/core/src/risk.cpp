#include "commlim/risk.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "commlim/error.hpp"
#include "commlim/parallel.hpp"
#include "commlim/rng.hpp"

namespace commlim {

namespace {

std::string format_double(double x) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof buffer, x);
  return std::string(buffer, result.ptr);
}

std::vector<int> corner(int d, int index, std::uint64_t salt) {
  std::vector<int> u(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) {
    switch (index) {
      case 0: u[static_cast<std::size_t>(i)] = 1; break;
      case 1: u[static_cast<std::size_t>(i)] = -1; break;
      case 2: u[static_cast<std::size_t>(i)] = i % 2 == 0 ? 1 : -1; break;
      case 3: u[static_cast<std::size_t>(i)] = i % 2 == 0 ? -1 : 1; break;
      default: {
        const CounterRng rng(derive_key(salt, {static_cast<std::uint64_t>(index)}));
        u[static_cast<std::size_t>(i)] = (rng.at(static_cast<std::uint64_t>(i)) & 1U) ? 1 : -1;
      }
    }
  }
  return u;
}

double loss(std::span<const double> estimate, std::span<const double> theta) {
  double s = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double e = estimate[i] - theta[i];
    s += e * e;
  }
  return s;
}

struct Moments {
  double mean = 0.0;
  double se = 0.0;
};

Moments moments(std::span<const double> values) {
  Moments m;
  if (values.empty()) return m;
  const auto count = static_cast<double>(values.size());
  m.mean = pairwise_sum(values) / count;
  if (values.size() < 2) return m;
  std::vector<double> squares(values.size());
  for (std::size_t r = 0; r < values.size(); ++r) squares[r] = (values[r] - m.mean) * (values[r] - m.mean);
  m.se = std::sqrt(pairwise_sum(squares) / (count - 1.0) / count);
  return m;
}

double regressor_value(Regressor r, const ScalingPoint& p) {
  switch (r) {
    case Regressor::log_n: return std::log(static_cast<double>(p.n));
    case Regressor::log_d: return std::log(static_cast<double>(p.d));
    case Regressor::k: return p.k;
    case Regressor::log_k: return std::log(static_cast<double>(p.k));
  }
  return 0.0;
}

}  // namespace

std::vector<std::vector<double>> make_grid(const Model& model, const GridSpec& grid) {
  const int d = model.dim();
  std::vector<std::vector<double>> points;
  switch (grid.kind) {
    case GridSpec::Kind::center:
      points.push_back(model.theta0());
      break;
    case GridSpec::Kind::cube:
      if (grid.corners < 0) throw DomainError("grid corners must be nonnegative");
      points.push_back(model.theta0());
      for (int c = 0; c < grid.corners; ++c) {
        const auto u = corner(d, c, 0x67726964U);
        std::vector<double> theta = model.theta0();
        for (int i = 0; i < d; ++i) theta[static_cast<std::size_t>(i)] += grid.delta * u[static_cast<std::size_t>(i)];
        points.push_back(std::move(theta));
      }
      break;
    case GridSpec::Kind::simplex_uniform:
      points.emplace_back(static_cast<std::size_t>(d), 1.0 / d);
      break;
    case GridSpec::Kind::points:
      points = grid.points;
      break;
  }
  return points;
}

double norm_n_d2(double risk, int n, int d, int) {
  return static_cast<double>(n) * risk / (static_cast<double>(d) * d);
}
double norm_n2k_d(double risk, int n, int d, int k) {
  return static_cast<double>(n) * std::ldexp(risk, k) / static_cast<double>(d);
}
double norm_nk_d2(double risk, int n, int d, int k) {
  return static_cast<double>(n) * k * risk / (static_cast<double>(d) * d);
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.replications < 2) throw DomainError("replications must be >= 2");
  if (cfg.n <= 0) throw DomainError("n must be positive");
  if (cfg.k <= 0) throw DomainError("k must be positive");
  const Model model(cfg.model);
  const auto grid = make_grid(model, cfg.grid);
  if (grid.empty()) throw DomainError("theta grid is empty");
  for (const auto& theta : grid) model.check_admissible(theta);
}

RiskReport run_experiment(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  validate(cfg);
  const Model model(cfg.model);
  const auto bundle = make_bundle(cfg.protocol, cfg.n, cfg.k, model, cfg.clamp);
  const auto grid = make_grid(model, cfg.grid);
  const int threads = resolve_threads(cfg.threads);
  const auto reps = static_cast<std::size_t>(cfg.replications);

  RiskReport report;
  report.experiment_id = cfg.experiment_id;
  report.protocol = cfg.protocol;
  report.n = cfg.n;
  report.d = model.dim();
  report.k = cfg.k;
  report.seed = cfg.seed;
  report.replications = cfg.replications;

  for (std::size_t t = 0; t < grid.size(); ++t) {
    const auto& theta = grid[t];
    std::vector<double> losses(reps);
    std::vector<std::uint8_t> degenerate(reps);
    std::vector<std::map<std::string, double>> diagnostics(reps);
    parallel_for(reps, threads, [&](std::size_t r) {
      const std::uint64_t key = derive_key(cfg.seed, {t, r});
      auto result = bundle->decode(bundle->simulate(theta, key));
      losses[r] = loss(result.theta, theta);
      degenerate[r] = result.degenerate ? 1 : 0;
      diagnostics[r] = std::move(result.diagnostics);
    });

    ThetaRisk row;
    row.theta_id = t;
    row.theta = theta;
    std::vector<double> kept;
    std::vector<double> dropped;
    for (std::size_t r = 0; r < reps; ++r) {
      if (degenerate[r]) {
        ++row.degenerate_count;
        dropped.push_back(losses[r]);
      }
      if (!cfg.exclude_degenerate || !degenerate[r]) kept.push_back(losses[r]);
    }
    const auto m = moments(kept);
    row.risk = m.mean;
    row.se = m.se;
    row.replications = static_cast<int>(kept.size());
    row.degenerate_risk = moments(dropped).mean;
    for (const auto& [name, value] : diagnostics.front()) {
      (void)value;
      std::vector<double> column(reps);
      for (std::size_t r = 0; r < reps; ++r) column[r] = diagnostics[r].at(name);
      row.diagnostics[name] = pairwise_sum(column) / static_cast<double>(reps);
    }
    if (t == 0 || row.risk > report.sup_risk) {
      report.sup_risk = row.risk;
      report.sup_theta_id = t;
    }
    report.per_theta.push_back(std::move(row));
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::vector<SweepPoint> sweep(const ExperimentConfig& base, SweepAxis axis, std::span<const int> values) {
  std::vector<SweepPoint> out;
  out.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    ExperimentConfig cfg = base;
    cfg.seed = derive_key(base.seed, {i});
    switch (axis) {
      case SweepAxis::n: cfg.n = values[i]; break;
      case SweepAxis::k: cfg.k = values[i]; break;
      case SweepAxis::d:
        cfg.model.d = values[i];
        if (cfg.model.theta0.size() > 1) cfg.model.theta0.clear();
        break;
    }
    SweepPoint point;
    point.value = values[i];
    try {
      point.report = run_experiment(cfg);
    } catch (const Error& e) {
      point.error = e.what();
    }
    out.push_back(std::move(point));
  }
  return out;
}

std::string_view to_string(Regressor r) {
  switch (r) {
    case Regressor::log_n: return "log_n";
    case Regressor::log_d: return "log_d";
    case Regressor::k: return "k";
    case Regressor::log_k: return "log_k";
  }
  return "";
}

Regressor regressor_from_string(std::string_view name) {
  for (Regressor r : {Regressor::log_n, Regressor::log_d, Regressor::k, Regressor::log_k}) {
    if (to_string(r) == name) return r;
  }
  throw DomainError("unknown regressor '" + std::string(name) + "'");
}

ScalingFit fit_scaling_exponents(std::span<const ScalingPoint> points, std::span<const Regressor> regressors,
                                 Response response) {
  if (points.size() < 3) throw DomainError("scaling fit needs at least three reports");
  const auto rows = static_cast<Eigen::Index>(points.size());
  const auto cols = static_cast<Eigen::Index>(regressors.size()) + 1;
  Eigen::MatrixXd x(rows, cols);
  Eigen::VectorXd y(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& p = points[static_cast<std::size_t>(r)];
    if (!(p.risk > 0.0)) throw DomainError("scaling fit needs positive risks");
    y(r) = std::log(p.risk) + (response == Response::n_times_risk ? std::log(static_cast<double>(p.n)) : 0.0);
    x(r, 0) = 1.0;
    for (std::size_t c = 0; c < regressors.size(); ++c) {
      x(r, static_cast<Eigen::Index>(c) + 1) = regressor_value(regressors[c], p);
    }
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < cols) throw RankError("regressor matrix is rank deficient");
  const Eigen::VectorXd beta = qr.solve(y);
  const Eigen::VectorXd residual = y - x * beta;
  const double rss = residual.squaredNorm();
  const double tss = (y.array() - y.mean()).matrix().squaredNorm();
  const Eigen::Index dof = rows - cols;
  const Eigen::MatrixXd covariance = (x.transpose() * x).inverse();
  const double scale = dof > 0 ? rss / static_cast<double>(dof) : std::numeric_limits<double>::quiet_NaN();

  ScalingFit fit;
  fit.regressors.assign(regressors.begin(), regressors.end());
  fit.observations = points.size();
  fit.r2 = tss > 0.0 ? 1.0 - rss / tss : 1.0;
  const auto coefficient = [&](Eigen::Index c) {
    return Coefficient{beta(c), std::sqrt(scale * covariance(c, c))};
  };
  fit.intercept = coefficient(0);
  for (Eigen::Index c = 1; c < cols; ++c) fit.coefficients.push_back(coefficient(c));
  return fit;
}

ScalingFit fit_scaling_exponents(std::span<const RiskReport> reports, std::span<const Regressor> regressors,
                                 Response response) {
  std::vector<ScalingPoint> points;
  points.reserve(reports.size());
  for (const auto& r : reports) points.push_back({r.n, r.d, r.k, r.sup_risk});
  return fit_scaling_exponents(points, regressors, response);
}

void write_risk_csv_header(std::ostream& out) {
  out << "experiment_id,protocol,n,d,k,theta_id,risk,se,norm_n_d2,norm_n2k_d,norm_nk_d2,degenerate_count,seconds,seed\n";
}

void write_risk_csv_rows(std::ostream& out, const RiskReport& report) {
  for (const auto& row : report.per_theta) {
    out << report.experiment_id << ',' << report.protocol << ',' << report.n << ',' << report.d << ',' << report.k << ','
        << row.theta_id << ',' << format_double(row.risk) << ',' << format_double(row.se) << ','
        << format_double(norm_n_d2(row.risk, report.n, report.d, report.k)) << ','
        << format_double(norm_n2k_d(row.risk, report.n, report.d, report.k)) << ','
        << format_double(norm_nk_d2(row.risk, report.n, report.d, report.k)) << ',' << row.degenerate_count << ','
        << format_double(report.seconds) << ',' << report.seed << '\n';
  }
}

}  // namespace commlim
