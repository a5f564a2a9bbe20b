#include "commlim/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "commlim/error.hpp"
#include "commlim/rng.hpp"

namespace commlim {

namespace {

constexpr int kMaxEnumerableBernoulliDim = 20;
constexpr std::size_t kMaxCubeMembers = std::size_t{1} << 24;
constexpr double kSimplexTol = 1e-12;

std::string coord_name(int i) { return "coordinate " + std::to_string(i + 1); }

double dependent_mass(std::span<const double> theta) {
  return 1.0 - std::accumulate(theta.begin(), theta.end(), 0.0);
}

std::size_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  std::size_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::size_t>(n - k + i) / static_cast<std::size_t>(i);
  return r;
}

}  // namespace

std::string_view to_string(Family family) {
  switch (family) {
    case Family::gaussian_location: return "gaussian_location";
    case Family::product_bernoulli: return "product_bernoulli";
    case Family::multinomial: return "multinomial";
    case Family::sparse_gaussian: return "sparse_gaussian";
  }
  return "unknown";
}

Family family_from_string(std::string_view name) {
  for (Family f : {Family::gaussian_location, Family::product_bernoulli, Family::multinomial, Family::sparse_gaussian}) {
    if (name == to_string(f)) return f;
  }
  throw DomainError("unknown model family '" + std::string(name) + "'");
}

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
  if (spec_.d <= 0) throw DomainError("model dimension d must be positive");
  const auto d = static_cast<std::size_t>(spec_.d);
  if (gaussian_family() && !(spec_.sigma > 0.0 && std::isfinite(spec_.sigma))) {
    throw DomainError("sigma must be a positive finite number");
  }
  if (spec_.theta0.empty()) {
    switch (spec_.family) {
      case Family::gaussian_location:
      case Family::sparse_gaussian: spec_.theta0.assign(d, 0.0); break;
      case Family::product_bernoulli: spec_.theta0.assign(d, 0.5); break;
      case Family::multinomial: spec_.theta0.assign(d, 1.0 / static_cast<double>(d + 1)); break;
    }
  }
  if (spec_.theta0.size() == 1 && d > 1) spec_.theta0.assign(d, spec_.theta0.front());
  if (spec_.theta0.size() != d) throw DomainError("theta0 must have length d");

  switch (spec_.family) {
    case Family::sparse_gaussian:
      if (spec_.s <= 0 || 2 * spec_.s > spec_.d) throw DomainError("sparsity s must satisfy 1 <= s <= d/2");
      break;
    case Family::product_bernoulli:
      for (int i = 0; i < spec_.d; ++i) {
        const double p = spec_.theta0[static_cast<std::size_t>(i)];
        if (!(p > 0.0 && p < 1.0)) throw DomainError("theta0 " + coord_name(i) + " must lie in (0, 1)");
      }
      break;
    case Family::multinomial:
      if (!(dependent_mass(spec_.theta0) > 0.0)) {
        throw DomainError("theta0 must leave positive mass on outcome d+1");
      }
      break;
    case Family::gaussian_location: break;
  }
  check_admissible(spec_.theta0);
}

Model Model::gaussian(int d, double sigma) { return Model({Family::gaussian_location, d, sigma, 0, {}}); }

Model Model::bernoulli(std::vector<double> theta0) {
  const int d = static_cast<int>(theta0.size());
  return Model({Family::product_bernoulli, d, 1.0, 0, std::move(theta0)});
}

Model Model::bernoulli(int d, double p) {
  return Model({Family::product_bernoulli, d, 1.0, 0, std::vector<double>(static_cast<std::size_t>(d), p)});
}

Model Model::multinomial(std::vector<double> theta0) {
  const int d = static_cast<int>(theta0.size());
  return Model({Family::multinomial, d, 1.0, 0, std::move(theta0)});
}

Model Model::sparse_gaussian(int d, int s, double sigma) { return Model({Family::sparse_gaussian, d, sigma, s, {}}); }

bool Model::gaussian_family() const {
  return spec_.family == Family::gaussian_location || spec_.family == Family::sparse_gaussian;
}

std::size_t Model::sample_space_size() const {
  switch (spec_.family) {
    case Family::product_bernoulli:
      if (spec_.d > kMaxEnumerableBernoulliDim) throw CapacityError("Bernoulli sample space enumeration needs d <= 20");
      return std::size_t{1} << spec_.d;
    case Family::multinomial: return static_cast<std::size_t>(spec_.d) + 1;
    default: throw UnsupportedError("Gaussian families have no finite sample space");
  }
}

Observation Model::point(std::size_t index) const {
  if (index >= sample_space_size()) throw DomainError("sample space index out of range");
  if (spec_.family == Family::multinomial) return Outcome{static_cast<int>(index) + 1};
  Bits bits(static_cast<std::size_t>(spec_.d));
  for (int i = 0; i < spec_.d; ++i) bits[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>((index >> i) & 1U);
  return bits;
}

std::size_t Model::index_of(const Observation& x) const {
  check_observation(x);
  if (spec_.family == Family::multinomial) return static_cast<std::size_t>(std::get<Outcome>(x).index - 1);
  if (spec_.family != Family::product_bernoulli) throw UnsupportedError("Gaussian families have no finite sample space");
  if (spec_.d > kMaxEnumerableBernoulliDim) throw CapacityError("Bernoulli sample space enumeration needs d <= 20");
  const auto& bits = std::get<Bits>(x);
  std::size_t index = 0;
  for (std::size_t i = 0; i < bits.size(); ++i) index |= static_cast<std::size_t>(bits[i]) << i;
  return index;
}

void Model::check_admissible(std::span<const double> theta) const {
  if (static_cast<int>(theta.size()) != spec_.d) throw DomainError("theta must have length d");
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (!std::isfinite(theta[i])) throw DomainError("theta " + coord_name(static_cast<int>(i)) + " is not finite");
  }
  switch (spec_.family) {
    case Family::gaussian_location: break;
    case Family::sparse_gaussian: {
      const auto nonzero = std::count_if(theta.begin(), theta.end(), [](double v) { return v != 0.0; });
      if (nonzero > spec_.s) throw DomainError("theta has more than s nonzero coordinates");
      break;
    }
    case Family::product_bernoulli:
      for (std::size_t i = 0; i < theta.size(); ++i) {
        if (theta[i] < 0.0 || theta[i] > 1.0) {
          throw DomainError("theta " + coord_name(static_cast<int>(i)) + " outside the unit interval");
        }
      }
      break;
    case Family::multinomial:
      for (std::size_t i = 0; i < theta.size(); ++i) {
        if (theta[i] < 0.0 || theta[i] > 1.0) {
          throw DomainError("theta " + coord_name(static_cast<int>(i)) + " outside the probability simplex");
        }
      }
      if (dependent_mass(theta) < -kSimplexTol) {
        throw DomainError("theta " + coord_name(spec_.d) + " (dependent outcome) has negative mass");
      }
      break;
  }
}

void Model::check_observation(const Observation& x) const {
  const auto d = static_cast<std::size_t>(spec_.d);
  switch (spec_.family) {
    case Family::gaussian_location:
    case Family::sparse_gaussian: {
      const auto* v = std::get_if<RealVector>(&x);
      if (!v || v->size() != d) throw DomainError("Gaussian observation must be a real vector of length d");
      break;
    }
    case Family::product_bernoulli: {
      const auto* b = std::get_if<Bits>(&x);
      if (!b || b->size() != d) throw DomainError("Bernoulli observation must be a bit vector of length d");
      for (auto bit : *b) {
        if (bit > 1) throw DomainError("Bernoulli observation entries must be 0 or 1");
      }
      break;
    }
    case Family::multinomial: {
      const auto* o = std::get_if<Outcome>(&x);
      if (!o || o->index < 1 || o->index > spec_.d + 1) throw DomainError("multinomial outcome must lie in [1, d+1]");
      break;
    }
  }
}

double Model::probability(std::span<const double> theta, const Observation& x) const {
  check_observation(x);
  if (spec_.family == Family::multinomial) {
    const int k = std::get<Outcome>(x).index;
    if (k == spec_.d + 1) return std::max(0.0, dependent_mass(theta));
    return theta[static_cast<std::size_t>(k - 1)];
  }
  if (spec_.family != Family::product_bernoulli) throw UnsupportedError("point masses exist only on finite sample spaces");
  const auto& bits = std::get<Bits>(x);
  double p = 1.0;
  for (std::size_t i = 0; i < bits.size(); ++i) p *= bits[i] ? theta[i] : 1.0 - theta[i];
  return p;
}

std::vector<double> Model::probabilities(std::span<const double> theta) const {
  const std::size_t size = sample_space_size();
  std::vector<double> p(size);
  if (spec_.family == Family::multinomial) {
    std::copy(theta.begin(), theta.end(), p.begin());
    p.back() = std::max(0.0, dependent_mass(theta));
    return p;
  }
  // Product measure built coordinate by coordinate.
  p[0] = 1.0;
  std::size_t filled = 1;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    for (std::size_t j = 0; j < filled; ++j) {
      p[j + filled] = p[j] * theta[i];
      p[j] *= 1.0 - theta[i];
    }
    filled *= 2;
  }
  return p;
}

double sample_coordinate(const Model& model, std::span<const double> theta, std::uint64_t key, int coordinate) {
  const CounterRng rng(key);
  const auto c = static_cast<std::uint64_t>(coordinate);
  switch (model.family()) {
    case Family::gaussian_location:
    case Family::sparse_gaussian:
      return theta[static_cast<std::size_t>(coordinate)] + model.sigma() * rng.normal_at(c);
    case Family::product_bernoulli:
      return rng.uniform_at(c) < theta[static_cast<std::size_t>(coordinate)] ? 1.0 : 0.0;
    case Family::multinomial: break;
  }
  throw UnsupportedError("multinomial draws have no independent coordinates");
}

Observation sample_one(const Model& model, std::span<const double> theta, std::uint64_t key) {
  const int d = model.dim();
  switch (model.family()) {
    case Family::gaussian_location:
    case Family::sparse_gaussian: {
      RealVector x(static_cast<std::size_t>(d));
      for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] = sample_coordinate(model, theta, key, i);
      return x;
    }
    case Family::product_bernoulli: {
      Bits x(static_cast<std::size_t>(d));
      for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] = sample_coordinate(model, theta, key, i) != 0.0;
      return x;
    }
    case Family::multinomial: {
      const double u = CounterRng(key).uniform_at(0);
      double cumulative = 0.0;
      for (int i = 0; i < d; ++i) {
        cumulative += theta[static_cast<std::size_t>(i)];
        if (u < cumulative) return Outcome{i + 1};
      }
      return Outcome{d + 1};
    }
  }
  throw DomainError("unknown family");
}

std::vector<Observation> sample(const Model& model, std::span<const double> theta, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw DomainError("sample size n must be at least 1");
  model.check_admissible(theta);
  std::vector<Observation> draws;
  draws.reserve(n);
  for (std::size_t j = 0; j < n; ++j) draws.push_back(sample_one(model, theta, derive_key(seed, {j})));
  return draws;
}

std::vector<double> score(const Model& model, const Observation& x) {
  model.check_observation(x);
  const auto d = static_cast<std::size_t>(model.dim());
  const auto& theta0 = model.theta0();
  std::vector<double> s(d);
  switch (model.family()) {
    case Family::gaussian_location:
    case Family::sparse_gaussian: {
      const auto& v = std::get<RealVector>(x);
      const double inv_var = 1.0 / (model.sigma() * model.sigma());
      for (std::size_t i = 0; i < d; ++i) s[i] = (v[i] - theta0[i]) * inv_var;
      break;
    }
    case Family::product_bernoulli: {
      const auto& bits = std::get<Bits>(x);
      for (std::size_t i = 0; i < d; ++i) {
        const double p = theta0[i];
        const double coded = bits[i] ? 1.0 : -1.0;
        s[i] = (coded + (1.0 - 2.0 * p)) / (2.0 * p * (1.0 - p));
      }
      break;
    }
    case Family::multinomial: {
      const int k = std::get<Outcome>(x).index;
      if (k == model.dim() + 1) {
        const double last = dependent_mass(theta0);
        std::fill(s.begin(), s.end(), -1.0 / last);
      } else {
        const double p = theta0[static_cast<std::size_t>(k - 1)];
        if (p <= 0.0) throw SingularityError("score undefined at a zero-mass outcome");
        s[static_cast<std::size_t>(k - 1)] = 1.0 / p;
      }
      break;
    }
  }
  return s;
}

FisherInfo fisher_info(const Model& model) {
  const int d = model.dim();
  const auto& theta0 = model.theta0();
  FisherInfo info;
  info.matrix = Eigen::MatrixXd::Zero(d, d);
  switch (model.family()) {
    case Family::gaussian_location:
    case Family::sparse_gaussian:
      info.matrix.diagonal().setConstant(1.0 / (model.sigma() * model.sigma()));
      break;
    case Family::product_bernoulli:
      for (int i = 0; i < d; ++i) {
        const double p = theta0[static_cast<std::size_t>(i)];
        if (!(p > 0.0 && p < 1.0)) throw SingularityError("Fisher information singular at boundary " + coord_name(i));
        info.matrix(i, i) = 1.0 / (p * (1.0 - p));
      }
      break;
    case Family::multinomial: {
      const double last = dependent_mass(theta0);
      if (!(last > 0.0)) throw SingularityError("Fisher information singular: outcome d+1 has zero mass");
      info.matrix.setConstant(1.0 / last);
      for (int i = 0; i < d; ++i) {
        const double p = theta0[static_cast<std::size_t>(i)];
        if (!(p > 0.0)) throw SingularityError("Fisher information singular at boundary " + coord_name(i));
        info.matrix(i, i) += 1.0 / p;
      }
      break;
    }
  }
  if (model.family() != Family::multinomial) {
    const double first = info.matrix(0, 0);
    const bool identical = (info.matrix.diagonal().array() == first).all();
    if (identical) info.per_coordinate = first;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(info.matrix, Eigen::EigenvaluesOnly);
  info.max_eigenvalue = solver.eigenvalues().maxCoeff();
  return info;
}

double likelihood_ratio(const Model& model, std::span<const double> theta, const Observation& x) {
  model.check_admissible(theta);
  if (model.finite()) {
    const double base = model.probability(model.theta0(), x);
    if (base <= 0.0) return 0.0;
    return model.probability(theta, x) / base;
  }
  const auto& v = std::get<RealVector>(x);
  const auto& theta0 = model.theta0();
  double log_ratio = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double a = v[i] - theta0[i];
    const double b = v[i] - theta[i];
    log_ratio += a * a - b * b;
  }
  return std::exp(log_ratio / (2.0 * model.sigma() * model.sigma()));
}

HypothesisCube::HypothesisCube(Model base, double delta, std::optional<SparseCubeOptions> sparse)
    : base_(std::move(base)), delta_(delta) {
  if (!(delta >= 0.0) || !std::isfinite(delta)) throw DomainError("delta must be a nonnegative finite number");
  const int d = base_.dim();
  if (d > 20) throw CapacityError("hypothesis cube enumeration needs d <= 20");
  const auto& theta0 = base_.theta0();

  if (sparse) {
    if (!base_.gaussian_family()) throw DomainError("the sparse construction is defined for Gaussian families");
    if (sparse->s <= 0 || 2 * sparse->s > d) throw DomainError("sparsity s must satisfy 1 <= s <= d/2");
    if (std::any_of(theta0.begin(), theta0.end(), [](double v) { return v != 0.0; })) {
      throw DomainError("the sparse construction is centred at theta0 = 0");
    }
    if (base_.family() == Family::sparse_gaussian && sparse->s > base_.sparsity()) {
      throw DomainError("cube sparsity exceeds the model's s");
    }
    sparse_s_ = sparse->s;
    const std::size_t count = binomial(d, sparse_s_);
    if ((count << sparse_s_) > kMaxCubeMembers) throw CapacityError("sparse hypothesis family exceeds 2^24 members");
    std::vector<int> combo(static_cast<std::size_t>(sparse_s_));
    std::iota(combo.begin(), combo.end(), 0);
    for (;;) {
      combinations_.push_back(combo);
      int i = sparse_s_ - 1;
      while (i >= 0 && combo[static_cast<std::size_t>(i)] == d - sparse_s_ + i) --i;
      if (i < 0) break;
      ++combo[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < sparse_s_; ++j) combo[static_cast<std::size_t>(j)] = combo[static_cast<std::size_t>(j - 1)] + 1;
    }
    size_ = combinations_.size() << sparse_s_;

    // Support T: partial Fisher-Yates shuffle keyed by the support seed.
    std::vector<int> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), 0);
    CounterRng rng(sparse->support_seed);
    for (int i = 0; i < sparse_s_; ++i) {
      const auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(d - i));
      std::swap(order[static_cast<std::size_t>(i)], order[j]);
    }
    support_.assign(order.begin(), order.begin() + sparse_s_);
    std::sort(support_.begin(), support_.end());
    return;
  }

  if (base_.family() == Family::sparse_gaussian) {
    throw DomainError("the sparse family needs the sparse hypothesis construction");
  }
  size_ = std::size_t{1} << d;
  switch (base_.family()) {
    case Family::product_bernoulli:
      for (int i = 0; i < d; ++i) {
        const double p = theta0[static_cast<std::size_t>(i)];
        if (p - delta < 0.0 || p + delta > 1.0) {
          throw DomainError("delta pushes " + coord_name(i) + " outside the unit interval");
        }
      }
      break;
    case Family::multinomial: {
      for (int i = 0; i < d; ++i) {
        const double p = theta0[static_cast<std::size_t>(i)];
        if (p - delta < 0.0 || p + delta > 1.0) {
          throw DomainError("delta pushes " + coord_name(i) + " outside the probability simplex");
        }
      }
      if (dependent_mass(theta0) - static_cast<double>(d) * delta < -kSimplexTol) {
        throw DomainError("delta pushes " + coord_name(d) + " (dependent outcome) below zero");
      }
      break;
    }
    default: break;
  }
}

std::vector<int> HypothesisCube::direction(std::size_t member) const {
  if (member >= size_) throw DomainError("hypothesis index out of range");
  const auto d = static_cast<std::size_t>(base_.dim());
  std::vector<int> u(d, 0);
  if (!sparse()) {
    for (std::size_t i = 0; i < d; ++i) u[i] = ((member >> i) & 1U) ? 1 : -1;
    return u;
  }
  const std::size_t signs = member & ((std::size_t{1} << sparse_s_) - 1);
  const auto& combo = combinations_[member >> sparse_s_];
  for (int j = 0; j < sparse_s_; ++j) {
    u[static_cast<std::size_t>(combo[static_cast<std::size_t>(j)])] = ((signs >> j) & 1U) ? 1 : -1;
  }
  return u;
}

std::vector<double> HypothesisCube::theta(std::size_t member) const {
  const auto u = direction(member);
  std::vector<double> t = base_.theta0();
  for (std::size_t i = 0; i < t.size(); ++i) t[i] += delta_ * u[i];
  return t;
}

std::vector<std::size_t> HypothesisCube::support_members() const {
  std::vector<std::size_t> members;
  if (!sparse()) {
    members.resize(size_);
    std::iota(members.begin(), members.end(), std::size_t{0});
    return members;
  }
  const auto it = std::find(combinations_.begin(), combinations_.end(), support_);
  const auto block = static_cast<std::size_t>(it - combinations_.begin());
  for (std::size_t signs = 0; signs < (std::size_t{1} << sparse_s_); ++signs) {
    members.push_back((block << sparse_s_) | signs);
  }
  return members;
}

HypothesisCube hypothesis_cube(const Model& model, double delta, std::optional<SparseCubeOptions> sparse) {
  return HypothesisCube(model, delta, sparse);
}

}  // namespace commlim
