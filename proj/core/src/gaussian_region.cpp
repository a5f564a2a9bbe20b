#include "commlim/gaussian_region.hpp"

#include <cmath>
#include <limits>

#include "commlim/error.hpp"
#include "commlim/normal.hpp"

namespace commlim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kAngleTol = 1e-12;

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// P(lo < Z <= hi) for standard normal Z, using the tail that keeps precision.
double interval_mass(double lo, double hi) {
  if (!(lo < hi)) return 0.0;
  if (lo >= 0.0) return normal::upper_tail(lo) - normal::upper_tail(hi);
  if (hi <= 0.0) return normal::cdf(hi) - normal::cdf(lo);
  return 1.0 - normal::cdf(lo) - normal::upper_tail(hi);
}

double density_or_zero(double z) { return std::isfinite(z) ? normal::pdf(z) : 0.0; }

}  // namespace

GaussianRegion::GaussianRegion(int dim) : dim_(dim) {
  if (dim <= 0) throw DomainError("gaussian region dimension must be positive");
}

void GaussianRegion::add(std::span<const double> w, double b, bool above) {
  if (static_cast<int>(w.size()) != dim_) throw DomainError("halfspace normal has wrong dimension");
  const double norm = std::sqrt(dot(w, w));
  if (norm == 0.0) {
    // Constant predicate: 0 > b holds everywhere or nowhere.
    const bool holds = above ? (0.0 > b) : (0.0 <= b);
    if (!holds) empty_ = true;
    return;
  }
  std::vector<double> unit(w.begin(), w.end());
  for (double& v : unit) v /= norm;
  const double t = b / norm;

  for (Slab& slab : slabs_) {
    const double c = dot(unit, slab.direction);
    if (std::abs(std::abs(c) - 1.0) <= kAngleTol) {
      // On the slab's own axis the constraint is z > t (or z <= t); a
      // reversed normal flips both the threshold and the inequality.
      if (c > 0) {
        if (above) slab.lo = std::max(slab.lo, t);
        else slab.hi = std::min(slab.hi, t);
      } else {
        if (above) slab.hi = std::min(slab.hi, -t);
        else slab.lo = std::max(slab.lo, -t);
      }
      if (!(slab.lo < slab.hi)) empty_ = true;
      return;
    }
    if (std::abs(c) > kAngleTol) {
      throw UnsupportedError("halfspace normals must be pairwise parallel or orthogonal for closed-form Gaussian expectations");
    }
  }
  Slab slab{std::move(unit), -kInf, kInf};
  if (above) slab.lo = t;
  else slab.hi = t;
  slabs_.push_back(std::move(slab));
}

double GaussianRegion::probability(std::span<const double> mean, double sigma) const {
  if (empty_) return 0.0;
  double p = 1.0;
  for (const Slab& slab : slabs_) {
    const double m = dot(slab.direction, mean);
    p *= interval_mass((slab.lo - m) / sigma, (slab.hi - m) / sigma);
  }
  return p;
}

std::vector<double> GaussianRegion::score_moment(std::span<const double> center, double sigma) const {
  std::vector<double> moment(static_cast<std::size_t>(dim_), 0.0);
  if (empty_) return moment;
  const std::size_t count = slabs_.size();
  std::vector<double> mass(count);
  std::vector<double> edge(count);
  for (std::size_t g = 0; g < count; ++g) {
    const Slab& slab = slabs_[g];
    const double m = dot(slab.direction, center);
    const double a = (slab.lo - m) / sigma;
    const double b = (slab.hi - m) / sigma;
    mass[g] = interval_mass(a, b);
    edge[g] = (density_or_zero(a) - density_or_zero(b)) / sigma;
  }
  for (std::size_t g = 0; g < count; ++g) {
    double coefficient = edge[g];
    for (std::size_t h = 0; h < count; ++h) {
      if (h != g) coefficient *= mass[h];
    }
    for (int i = 0; i < dim_; ++i) moment[static_cast<std::size_t>(i)] += coefficient * slabs_[g].direction[static_cast<std::size_t>(i)];
  }
  return moment;
}

bool GaussianRegion::contains(std::span<const double> x) const {
  if (empty_) return false;
  for (const Slab& slab : slabs_) {
    const double z = dot(slab.direction, x);
    if (!(z > slab.lo && z <= slab.hi)) return false;
  }
  return true;
}

}  // namespace commlim
