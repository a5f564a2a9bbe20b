#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace commlim {

enum class Theorem {
  thm1_general,
  thm2_subgaussian,
  cor3_multinomial,
  cor4_gaussian,
  prop5_bernoulli_cube,
  prop5_bernoulli_simplex,
  thm6_sparse,
};
std::string_view to_string(Theorem t);
Theorem theorem_from_string(std::string_view name);

struct RateQuery {
  Theorem theorem = Theorem::thm1_general;
  long long n = 1;
  long long d = 1;
  long long k = 1;
  long long s = 0;       // sparsity, thm6 only
  double i0 = 0.0;       // Fisher information, thm1 only
  double sigma2 = 1.0;   // score psi2 parameter (thm2) or noise variance (cor4, thm6)
  std::optional<double> R;  // score diameter for the thm2 side condition
};

struct Rate {
  double value = 0.0;
  // Preconditions of the statement that this query violates; the value
  // is still the evaluated formula.
  std::vector<std::string> warnings;
};

// Constant-free rate with natural logarithms. Throws DomainError for
// nonpositive inputs.
Rate lower_rate(const RateQuery& q);

// 1 - (I + ln 2) / ln(|V| / Nmax), clamped to [0, 1]. Throws
// InapplicableError unless Nmax + Nmin < |V| (Nmin defaults to Nmax).
double fano_bound(double card, double nmax, double mutual_information, std::optional<double> nmin = std::nullopt);
// (d delta^2 / 10) (1 - (I + ln 2) / (d / 8)), unclamped.
double testing_lower_bound(double d, double delta, double mutual_information);

// Binary entropy in bits on [0, 1/2], its inverse on [0, 1], and
// f(y) = (1 - 2 h2_inv(y))^2.
double h2(double x);
double h2_inv(double y);
double f_entropy(double y);

enum class TailSide { upper, lower };
struct ChernoffBound {
  double tight = 0.0;
  double relaxed = 0.0;
};
// Bounds on P(X >= (1 + delta) lambda) or P(X <= (1 - delta) lambda) for
// Poisson or Bin(n, lambda / n) variables.
ChernoffBound chernoff_tails(double lambda, double delta, TailSide side);

struct HammingBall {
  std::string volume;   // exact decimal
  double ratio = 0.0;   // volume / 2^d
  double exp_bound = 0.0;  // exp(-d / 8)
};
HammingBall hamming_ball_volume(int d, int t);

struct SparseCounts {
  std::string family_size;   // 2^s C(d, s)
  std::string nmax;          // exact count of u' with d_Ham(u, u') <= t
  std::string nmax_formula;  // sum_{a+b<=t} C(s,a) C(s-a,b) C(d-s,b)
  double log_ratio = 0.0;    // ln(family_size / nmax)
};
SparseCounts sparse_family_counts(int d, int s, int t);

}  // namespace commlim
