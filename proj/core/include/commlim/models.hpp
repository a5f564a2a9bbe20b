#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace commlim {

enum class Family { gaussian_location, product_bernoulli, multinomial, sparse_gaussian };

std::string_view to_string(Family family);
// Throws DomainError for unknown names.
Family family_from_string(std::string_view name);

using RealVector = std::vector<double>;
// Bernoulli draws: one byte per coordinate holding 0 or 1.
using Bits = std::vector<std::uint8_t>;
// Multinomial draw: outcome index in [1, d + 1]; d + 1 is the dependent outcome.
struct Outcome {
  int index = 1;
  friend bool operator==(const Outcome&, const Outcome&) = default;
};
using Observation = std::variant<RealVector, Bits, Outcome>;

struct ModelSpec {
  Family family = Family::gaussian_location;
  int d = 1;
  double sigma = 1.0;           // Gaussian families only
  int s = 0;                    // sparse family only
  std::vector<double> theta0;   // empty means the family default
};

// A validated, immutable statistical family with its reference point theta0.
class Model {
 public:
  explicit Model(ModelSpec spec);

  static Model gaussian(int d, double sigma = 1.0);
  static Model bernoulli(std::vector<double> theta0);
  static Model bernoulli(int d, double p);
  static Model multinomial(std::vector<double> theta0);
  static Model sparse_gaussian(int d, int s, double sigma = 1.0);

  const ModelSpec& spec() const { return spec_; }
  Family family() const { return spec_.family; }
  int dim() const { return spec_.d; }
  double sigma() const { return spec_.sigma; }
  int sparsity() const { return spec_.s; }
  const std::vector<double>& theta0() const { return spec_.theta0; }

  bool gaussian_family() const;
  // Bernoulli and multinomial have finite sample spaces.
  bool finite() const { return !gaussian_family(); }

  // 2^d (Bernoulli, d <= 20) or d + 1 (multinomial).
  std::size_t sample_space_size() const;
  // Enumeration order: Bernoulli bit i of the index is coordinate i;
  // multinomial index j is outcome j + 1.
  Observation point(std::size_t index) const;
  std::size_t index_of(const Observation& x) const;

  // Throws DomainError naming the first offending coordinate.
  void check_admissible(std::span<const double> theta) const;
  void check_observation(const Observation& x) const;

  // P_theta({x}) on finite sample spaces.
  double probability(std::span<const double> theta, const Observation& x) const;
  // Full probability vector over the sample space in enumeration order.
  std::vector<double> probabilities(std::span<const double> theta) const;

 private:
  ModelSpec spec_;
};

// One observation drawn from the stream `key`. Coordinate i of a product
// family draw depends only on (key, i), so protocols that read a few
// coordinates can call sample_coordinate and see the same values.
Observation sample_one(const Model& model, std::span<const double> theta, std::uint64_t key);
double sample_coordinate(const Model& model, std::span<const double> theta, std::uint64_t key, int coordinate);

// n independent draws; draw j uses stream derive_key(seed, {j}).
std::vector<Observation> sample(const Model& model, std::span<const double> theta, std::size_t n, std::uint64_t seed);

// Score S_theta0(x). Bernoulli bits are mapped to +-1 before the closed form.
std::vector<double> score(const Model& model, const Observation& x);

struct FisherInfo {
  Eigen::MatrixXd matrix;
  // Per-coordinate I0 for product families with identical coordinates.
  std::optional<double> per_coordinate;
  // Largest eigenvalue; equals I0 for i.i.d. product families and bounds
  // ||E[S 1_A]||^2 / (P(A)(1 - P(A))) in general.
  double max_eigenvalue = 0.0;
};

// Throws SingularityError when theta0 sits on the boundary.
FisherInfo fisher_info(const Model& model);

// dP_theta/dP_theta0 at x. Points where P_theta0 has zero mass return 0.
double likelihood_ratio(const Model& model, std::span<const double> theta, const Observation& x);

struct SparseCubeOptions {
  int s = 1;
  std::uint64_t support_seed = 0;
};

// The perturbed family {P_u} around theta0: u ranges over {+-1}^d, or over
// {u in {0,+-1}^d : ||u||_0 = s} in sparse mode.
class HypothesisCube {
 public:
  HypothesisCube(Model base, double delta, std::optional<SparseCubeOptions> sparse = std::nullopt);

  const Model& base() const { return base_; }
  double delta() const { return delta_; }
  bool sparse() const { return sparse_s_ > 0; }
  int sparsity() const { return sparse_s_; }
  // Sampled support T (sparse mode only), sorted, 0-based.
  const std::vector<int>& support() const { return support_; }

  std::size_t size() const { return size_; }
  // Entry i is +1, -1 or 0.
  std::vector<int> direction(std::size_t member) const;
  std::vector<double> theta(std::size_t member) const;
  // Members whose support equals support(); all members outside sparse mode.
  std::vector<std::size_t> support_members() const;

 private:
  Model base_;
  double delta_;
  int sparse_s_ = 0;
  std::vector<int> support_;
  std::vector<std::vector<int>> combinations_;
  std::size_t size_ = 0;
};

HypothesisCube hypothesis_cube(const Model& model, double delta, std::optional<SparseCubeOptions> sparse = std::nullopt);

}  // namespace commlim
