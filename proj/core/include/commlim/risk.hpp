#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "commlim/models.hpp"
#include "commlim/protocols.hpp"

namespace commlim {

// How the parameter grid of an experiment is generated. Grids are rebuilt
// for every swept point so a d-sweep keeps the same shape.
struct GridSpec {
  enum class Kind {
    center,            // theta0 only
    cube,              // theta0 and theta0 + delta u for `corners` corners u
    simplex_uniform,   // theta_i = 1/d (no mass on outcome d + 1)
    points,            // explicit list
  };
  Kind kind = Kind::center;
  double delta = 0.0;
  int corners = 2;
  std::vector<std::vector<double>> points;
};

std::vector<std::vector<double>> make_grid(const Model& model, const GridSpec& grid);

struct ExperimentConfig {
  std::string experiment_id = "experiment";
  ModelSpec model;
  std::string protocol;
  int n = 1;
  int k = 1;
  GridSpec grid;
  int replications = 2;
  std::uint64_t seed = 0;
  double clamp = 1.0;
  // Drop degenerate decodes from the risk and report them separately.
  bool exclude_degenerate = false;
  int threads = 0;
};

struct ThetaRisk {
  std::size_t theta_id = 0;
  std::vector<double> theta;
  double risk = 0.0;
  double se = 0.0;
  int replications = 0;  // replications entering risk
  int degenerate_count = 0;
  // Mean loss over degenerate replications (0 when there are none).
  double degenerate_risk = 0.0;
  // Replication means of the decoder's diagnostic counters.
  std::map<std::string, double> diagnostics;
};

struct RiskReport {
  std::string experiment_id;
  std::string protocol;
  int n = 0;
  int d = 0;
  int k = 0;
  std::uint64_t seed = 0;
  int replications = 0;
  std::vector<ThetaRisk> per_theta;
  double sup_risk = 0.0;
  std::size_t sup_theta_id = 0;
  double seconds = 0.0;
};

// Normalized risks n risk / d^2, n 2^k risk / d and n k risk / d^2.
double norm_n_d2(double risk, int n, int d, int k);
double norm_n2k_d(double risk, int n, int d, int k);
double norm_nk_d2(double risk, int n, int d, int k);

// Throws DomainError for inadmissible configurations (R < 2, empty grid,
// grid points outside the parameter space) and propagates protocol errors.
void validate(const ExperimentConfig& cfg);
RiskReport run_experiment(const ExperimentConfig& cfg);

enum class SweepAxis { n, d, k };
struct SweepPoint {
  int value = 0;
  std::optional<RiskReport> report;
  std::string error;
};
// Point i runs with seed derive_key(base.seed, {i}); failures are recorded
// and the sweep continues.
std::vector<SweepPoint> sweep(const ExperimentConfig& base, SweepAxis axis, std::span<const int> values);

enum class Regressor { log_n, log_d, k, log_k };
std::string_view to_string(Regressor r);
Regressor regressor_from_string(std::string_view name);

// log(risk), or log(n risk) for rates quoted per sample.
enum class Response { risk, n_times_risk };

struct ScalingPoint {
  int n = 0;
  int d = 0;
  int k = 0;
  double risk = 0.0;
};

struct Coefficient {
  double estimate = 0.0;
  double se = 0.0;  // NaN with zero residual degrees of freedom
};

struct ScalingFit {
  std::vector<Regressor> regressors;
  std::vector<Coefficient> coefficients;
  Coefficient intercept;
  double r2 = 0.0;
  std::size_t observations = 0;
};

// Ordinary least squares with intercept. Throws DomainError with fewer than
// three points or nonpositive risks, RankError for a rank-deficient design.
ScalingFit fit_scaling_exponents(std::span<const ScalingPoint> points, std::span<const Regressor> regressors,
                                 Response response = Response::risk);
// Uses each report's sup risk.
ScalingFit fit_scaling_exponents(std::span<const RiskReport> reports, std::span<const Regressor> regressors,
                                 Response response = Response::risk);

// One CSV row per (report, theta).
void write_risk_csv_header(std::ostream& out);
void write_risk_csv_rows(std::ostream& out, const RiskReport& report);

}  // namespace commlim
