#include "commlim/bounds.hpp"

#include <algorithm>
#include <cmath>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include "commlim/error.hpp"

namespace commlim {

namespace {

using boost::multiprecision::cpp_bin_float_50;
using boost::multiprecision::cpp_int;

constexpr double kLn2 = 0.69314718055994530942;

cpp_int binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  cpp_int c = 1;
  for (int j = 0; j < k; ++j) c = c * (n - j) / (j + 1);
  return c;
}

double to_double_ratio(const cpp_int& num, const cpp_int& den) {
  return static_cast<double>(cpp_bin_float_50(num) / cpp_bin_float_50(den));
}

double pow2_min(long long k, double d) { return k >= 1000 ? d : std::min(std::ldexp(1.0, static_cast<int>(k)), d); }

}  // namespace

std::string_view to_string(Theorem t) {
  switch (t) {
    case Theorem::thm1_general: return "thm1_general";
    case Theorem::thm2_subgaussian: return "thm2_subgaussian";
    case Theorem::cor3_multinomial: return "cor3_multinomial";
    case Theorem::cor4_gaussian: return "cor4_gaussian";
    case Theorem::prop5_bernoulli_cube: return "prop5_bernoulli_cube";
    case Theorem::prop5_bernoulli_simplex: return "prop5_bernoulli_simplex";
    case Theorem::thm6_sparse: return "thm6_sparse";
  }
  return "";
}

Theorem theorem_from_string(std::string_view name) {
  for (Theorem t : {Theorem::thm1_general, Theorem::thm2_subgaussian, Theorem::cor3_multinomial, Theorem::cor4_gaussian,
                    Theorem::prop5_bernoulli_cube, Theorem::prop5_bernoulli_simplex, Theorem::thm6_sparse}) {
    if (to_string(t) == name) return t;
  }
  throw DomainError("unknown theorem '" + std::string(name) + "'");
}

Rate lower_rate(const RateQuery& q) {
  if (q.n <= 0 || q.d <= 0 || q.k <= 0) throw DomainError("n, d and k must be positive");
  const double n = static_cast<double>(q.n);
  const double d = static_cast<double>(q.d);
  const double k = static_cast<double>(q.k);
  const double two_k = pow2_min(q.k, d);
  const double k_d = std::min(k, d);
  Rate r;
  const auto need_n = [&](double minimum, const char* text) {
    if (n < minimum) r.warnings.push_back(std::string("n below ") + text + " = " + std::to_string(minimum));
  };
  const auto need_log_k = [&] {
    if (k < std::log(d)) r.warnings.push_back("k below log d = " + std::to_string(std::log(d)));
  };
  const auto need_sigma2 = [&] {
    if (!(q.sigma2 > 0.0)) throw DomainError("sigma2 must be positive");
  };

  switch (q.theorem) {
    case Theorem::thm1_general:
      if (!(q.i0 > 0.0)) throw DomainError("i0 must be positive");
      need_n(d * d / two_k, "d^2/(2^k ^ d)");
      r.value = d * d / (n * two_k * q.i0);
      break;
    case Theorem::thm2_subgaussian:
      need_sigma2();
      need_log_k();
      if (q.R && k < (*q.R) * (*q.R) / q.sigma2) r.warnings.push_back("k below (R/sigma)^2");
      if (q.sigma2 > d) r.warnings.push_back("sigma2 above d");
      need_n(d * d / k_d, "d^2/(k ^ d)");
      r.value = d * d / (n * k_d * q.sigma2);
      break;
    case Theorem::cor3_multinomial:
      need_n(d * d / two_k, "d^2/(2^k ^ d)");
      r.value = std::max(d / (n * std::ldexp(1.0, static_cast<int>(std::min<long long>(q.k, 1000)))), 1.0 / n);
      break;
    case Theorem::cor4_gaussian:
      need_sigma2();
      need_log_k();
      need_n(d * d / k_d, "d^2/(k ^ d)");
      r.value = std::max(d * d / (n * k), d / n) * q.sigma2;
      break;
    case Theorem::prop5_bernoulli_cube:
      need_n(d * d / k_d, "d^2/(d ^ k)");
      r.value = std::max(d * d / (n * k), d / n);
      break;
    case Theorem::prop5_bernoulli_simplex:
      need_n(d * d / two_k, "d^2/(d ^ 2^k)");
      r.value = std::max(d / (n * std::ldexp(1.0, static_cast<int>(std::min<long long>(q.k, 1000)))), 1.0 / n);
      break;
    case Theorem::thm6_sparse: {
      need_sigma2();
      if (q.s <= 0) throw DomainError("s must be positive");
      const double s = static_cast<double>(q.s);
      if (2.0 * s > d) r.warnings.push_back("s above d/2");
      need_log_k();
      const double l = std::log(d / s);
      need_n(s * d * l / k_d, "s d log(d/s)/(k ^ d)");
      r.value = std::max(s * d * l / (n * k), s * l / n) * q.sigma2;
      break;
    }
  }
  return r;
}

double fano_bound(double card, double nmax, double mutual_information, std::optional<double> nmin) {
  if (!(card > 0.0) || !(nmax > 0.0)) throw DomainError("|V| and Nmax must be positive");
  if (!(mutual_information >= 0.0)) throw DomainError("mutual information must be nonnegative");
  const double lower = nmin.value_or(nmax);
  if (!(nmax + lower < card)) throw InapplicableError("Fano bound needs Nmax + Nmin < |V|");
  const double value = 1.0 - (mutual_information + kLn2) / std::log(card / nmax);
  return std::clamp(value, 0.0, 1.0);
}

double testing_lower_bound(double d, double delta, double mutual_information) {
  if (!(d > 0.0)) throw DomainError("d must be positive");
  return d * delta * delta / 10.0 * (1.0 - (mutual_information + kLn2) / (d / 8.0));
}

double h2(double x) {
  if (!(x >= 0.0 && x <= 0.5)) throw DomainError("h2 is defined on [0, 1/2]");
  if (x == 0.0) return 0.0;
  return -x * std::log2(x) - (1.0 - x) * std::log2(1.0 - x);
}

double h2_inv(double y) {
  if (!(y >= 0.0 && y <= 1.0)) throw DomainError("h2_inv is defined on [0, 1]");
  if (y == 1.0) return 0.5;
  double lo = 0.0;
  double hi = 0.5;
  while (true) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (h2(mid) < y) lo = mid;
    else hi = mid;
  }
  return std::abs(h2(lo) - y) <= std::abs(h2(hi) - y) ? lo : hi;
}

double f_entropy(double y) {
  const double t = 1.0 - 2.0 * h2_inv(y);
  return t * t;
}

ChernoffBound chernoff_tails(double lambda, double delta, TailSide side) {
  if (!(lambda > 0.0)) throw DomainError("lambda must be positive");
  ChernoffBound b;
  if (side == TailSide::upper) {
    if (!(delta > 0.0)) throw DomainError("upper tail needs delta > 0");
    b.tight = std::exp(lambda * (delta - (1.0 + delta) * std::log1p(delta)));
    b.relaxed = std::exp(-std::min(delta * delta, delta) * lambda / 3.0);
  } else {
    if (!(delta > 0.0 && delta < 1.0)) throw DomainError("lower tail needs delta in (0, 1)");
    b.tight = std::exp(lambda * (-delta - (1.0 - delta) * std::log1p(-delta)));
    b.relaxed = std::exp(-delta * delta * lambda / 2.0);
  }
  return b;
}

HammingBall hamming_ball_volume(int d, int t) {
  if (d < 0 || t < 0 || t > d) throw DomainError("Hamming ball needs 0 <= t <= d");
  cpp_int volume = 0;
  for (int j = 0; j <= t; ++j) volume += binomial(d, j);
  HammingBall out;
  out.volume = volume.str();
  out.ratio = to_double_ratio(volume, cpp_int(1) << d);
  out.exp_bound = std::exp(-d / 8.0);
  return out;
}

SparseCounts sparse_family_counts(int d, int s, int t) {
  if (s < 1 || 2 * s > d) throw DomainError("sparse counts need 1 <= s <= d/2");
  if (t < 0) throw DomainError("distance threshold must be nonnegative");
  const cpp_int size = (cpp_int(1) << s) * binomial(d, s);
  // A neighbour at distance a + 2b flips a signs on the support and moves
  // b support positions outside it, with a free sign on each new position.
  cpp_int exact = 0;
  for (int b = 0; 2 * b <= t && b <= s; ++b) {
    for (int a = 0; a + 2 * b <= t && a + b <= s; ++a) {
      exact += binomial(s, b) * binomial(s - b, a) * binomial(d - s, b) * (cpp_int(1) << b);
    }
  }
  cpp_int formula = 0;
  for (int a = 0; a <= t; ++a) {
    for (int b = 0; a + b <= t; ++b) formula += binomial(s, a) * binomial(s - a, b) * binomial(d - s, b);
  }
  SparseCounts out;
  out.family_size = size.str();
  out.nmax = exact.str();
  out.nmax_formula = formula.str();
  out.log_ratio = static_cast<double>(log(cpp_bin_float_50(size)) - log(cpp_bin_float_50(exact)));
  return out;
}

}  // namespace commlim
