#pragma once

#include <span>
#include <vector>

namespace commlim {

// Intersection of halfspaces {<w,x> > b} / {<w,x> <= b} in R^d whose normal
// directions are pairwise parallel or orthogonal. Parallel constraints
// collapse into one slab lo < <u,x> <= hi on a unit direction u; distinct
// slabs are orthogonal, so under N(mu, sigma^2 I) their projections are
// independent and every probability and first moment has a closed form in
// the normal CDF and density. Any other arrangement is rejected.
class GaussianRegion {
 public:
  struct Slab {
    std::vector<double> direction;  // unit vector
    double lo;
    double hi;
  };

  explicit GaussianRegion(int dim);

  int dim() const { return dim_; }

  // Adds {<w,x> > b} when `above`, else {<w,x> <= b}. Throws
  // UnsupportedError when w is neither parallel nor orthogonal to an
  // existing slab direction.
  void add(std::span<const double> w, double b, bool above);

  bool empty() const { return empty_; }
  const std::vector<Slab>& slabs() const { return slabs_; }

  // P(X in region) for X ~ N(mean, sigma^2 I).
  double probability(std::span<const double> mean, double sigma) const;

  // E[(X - center) / sigma^2 * 1{X in region}] for X ~ N(center, sigma^2 I),
  // i.e. the first moment of the location score restricted to the region.
  std::vector<double> score_moment(std::span<const double> center, double sigma) const;

  bool contains(std::span<const double> x) const;

 private:
  int dim_;
  bool empty_ = false;
  std::vector<Slab> slabs_;
};

}  // namespace commlim
