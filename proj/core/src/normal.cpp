#include "commlim/normal.hpp"

#include <cmath>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

#include "commlim/error.hpp"

namespace commlim::normal {

double pdf(double x) { return std::exp(-0.5 * x * x) * (std::numbers::inv_sqrtpi / std::numbers::sqrt2); }

double cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double upper_tail(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

double quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal quantile needs p in (0, 1)");
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

}  // namespace commlim::normal
