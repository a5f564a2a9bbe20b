#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "commlim/gaussian_region.hpp"
#include "commlim/models.hpp"

namespace commlim {

// Points of {+-1}^d under the uniform law (score X, I0 = 1). Point p has
// coordinate i equal to +1 when bit i of p is set.
struct HypercubeSet {
  int d = 1;
  std::vector<std::uint32_t> points;
};
// Indicator over a finite family's sample space, in Model::point order.
struct FiniteSet {
  Model model;
  std::vector<std::uint8_t> mask;
};
// Halfspace/box region under a Gaussian location family.
struct GaussianSet {
  Model model;
  GaussianRegion region;
};
using SubsetSpec = std::variant<HypercubeSet, FiniteSet, GaussianSet>;

struct ConditionalMean {
  double probability = 0.0;
  std::vector<double> mean;  // E_0[S_0(X) | A]
  double norm2 = 0.0;
};

// Throws DomainError for sets of measure zero.
ConditionalMean conditional_mean_norm(const SubsetSpec& set);

struct BoundValue {
  std::string name;  // bessel, psi2, gaussian
  double value = 0.0;
  double slack = 0.0;  // value - norm2
};

struct SlackRecord {
  std::size_t set_id = 0;
  double probability = 0.0;
  double norm2 = 0.0;
  std::vector<BoundValue> bounds;
  bool violated = false;
};

struct GeometryOptions {
  // psi2 norm of one score coordinate; enables the sigma^2 ln(2/P) bound.
  std::optional<double> psi2_sigma;
  double tolerance = 1e-9;
};

// Bessel I0 (1-P)/P always (I0 = largest Fisher eigenvalue, 1 on the
// hypercube); sigma^2 ln(2/P) when psi2_sigma is given; the Gaussian-type
// c^2 2 ln(1/P) for hypercube sets, Gaussian location (c = 1/sigma) and
// Bernoulli(1/2) products (c = 2), where c is the score's scale.
std::vector<SlackRecord> verify_geometric_bounds(const std::vector<SubsetSpec>& sets, const GeometryOptions& options = {});

// Every nonempty subset of {+-1}^d, d <= 4, against the Bessel and
// hypercube bounds.
struct HypercubeScan {
  int d = 0;
  std::uint64_t sets = 0;
  std::uint64_t bessel_violations = 0;
  std::uint64_t hypercube_violations = 0;
  double min_bessel_slack = 0.0;
  double min_hypercube_slack = 0.0;
};
HypercubeScan scan_hypercube_subsets(int d, double tolerance = 1e-9, int threads = 0);

struct MaxNorm {
  double norm = 0.0;
  double norm2 = 0.0;
  std::vector<std::uint32_t> witness;
  bool heuristic = false;  // local search result, a lower bound on the max
};
// Exhaustive for d <= 4; beyond that only with `search`, which runs greedy
// swap local search from a Hamming-cap start.
MaxNorm brute_force_max_norm(int d, std::size_t m, bool search = false);

struct CapNorm {
  std::string size;  // |A| as a decimal integer
  double norm = 0.0;
  double norm2 = 0.0;
  double log_ratio = 0.0;    // ln(2^d / |A|)
  double bound_ratio = 0.0;  // norm2 / (2 ln(2^d / |A|))
};
// Hamming ball of radius t around the all-ones vector, 0 <= t < d/2.
CapNorm cap_mean_norm(int d, int t);
struct CapSweep {
  int best_radius = 0;
  double best_ratio = 0.0;
  std::vector<double> ratios;  // index t
};
CapSweep cap_ratio_sweep(int d);

// One-dimensional laws for the Orlicz psi2 norm.
struct NormalLaw {
  double sd = 1.0;
};
struct DiscreteLaw {
  std::vector<double> values;
  std::vector<double> probabilities;
};
// Give log_pdf when possible: a pdf that underflows to 0 hides heavy
// tails from the quadrature.
struct DensityLaw {
  std::function<double(double)> pdf;
  std::function<double(double)> log_pdf;
};
using Law = std::variant<NormalLaw, DiscreteLaw, DensityLaw>;

struct Psi2Options {
  double cap = 1e6;
  double relative_tolerance = 1e-10;
};
// inf{a > 0 : E exp(X^2 / a^2) <= 2}. Throws DomainError when the
// expectation is infinite for every a up to the cap.
double psi2_norm(const Law& law, const Psi2Options& options = {});

// Variance and psi2 norm of each score coordinate of a finite or Gaussian
// family; ratio = variance / psi2^2 is the recorded constant C0.
struct ScoreTail {
  int coordinate = 0;
  double variance = 0.0;
  double psi2 = 0.0;
  double ratio = 0.0;
};
std::vector<ScoreTail> score_psi2(const Model& model);

// Piecewise-constant a on the line: values[j] on (breaks[j-1], breaks[j]).
// At a break the function takes the mean of its one-sided limits, the
// value shared by every symmetric continuous approximation.
struct StepFunction {
  std::vector<double> breaks;
  std::vector<double> values;
  double operator()(double x) const;
};

struct TensorPower {
  int lift = 0;
  double hypercube = 0.0;  // E[Z_B a(Z_B)] / E[a(Z_B)], Z_B = sum of B signs / sqrt(B)
  double gaussian = 0.0;   // E[Z a(Z)] / E[a(Z)]
  double gap = 0.0;
  double relative_gap = 0.0;
};
TensorPower tensor_power_compare(const StepFunction& a, int lift);

}  // namespace commlim
