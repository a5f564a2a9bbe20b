#pragma once

namespace commlim::normal {

// Standard normal density.
double pdf(double x);
// Lower tail P(Z <= x).
double cdf(double x);
// Upper tail Q(x) = P(Z > x), accurate far into the right tail.
double upper_tail(double x);
// Inverse of cdf on (0, 1).
double quantile(double p);

}  // namespace commlim::normal
