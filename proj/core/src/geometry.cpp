#include "commlim/geometry.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include "commlim/blackboard.hpp"
#include "commlim/error.hpp"
#include "commlim/normal.hpp"
#include "commlim/parallel.hpp"

namespace commlim {

namespace {

using boost::multiprecision::cpp_bin_float_50;
using boost::multiprecision::cpp_int;

constexpr double kInf = std::numeric_limits<double>::infinity();

double norm2_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

// Scale c with S_0 = c * (standard sign or normal vector), when one exists.
std::optional<double> score_scale(const SubsetSpec& set) {
  if (std::holds_alternative<HypercubeSet>(set)) return 1.0;
  const Model& model = std::holds_alternative<FiniteSet>(set) ? std::get<FiniteSet>(set).model
                                                              : std::get<GaussianSet>(set).model;
  if (model.gaussian_family()) return 1.0 / model.sigma();
  if (model.family() == Family::product_bernoulli) {
    const auto& t0 = model.theta0();
    if (std::all_of(t0.begin(), t0.end(), [](double p) { return p == 0.5; })) return 2.0;
  }
  return std::nullopt;
}

double fisher_bound_constant(const SubsetSpec& set) {
  if (std::holds_alternative<HypercubeSet>(set)) return 1.0;
  const Model& model = std::holds_alternative<FiniteSet>(set) ? std::get<FiniteSet>(set).model
                                                              : std::get<GaussianSet>(set).model;
  return fisher_info(model).max_eigenvalue;
}

std::vector<double> sign_vector(std::uint32_t point, int d) {
  std::vector<double> v(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) v[static_cast<std::size_t>(i)] = ((point >> i) & 1U) ? 1.0 : -1.0;
  return v;
}

// E exp(X^2/a^2); +inf when divergent.
double orlicz_moment(const Law& law, double a) {
  return std::visit(
      [&](const auto& l) -> double {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, NormalLaw>) {
          const double r = 2.0 * l.sd * l.sd / (a * a);
          return r < 1.0 ? 1.0 / std::sqrt(1.0 - r) : kInf;
        } else if constexpr (std::is_same_v<T, DiscreteLaw>) {
          double s = 0.0;
          for (std::size_t j = 0; j < l.values.size(); ++j) {
            if (l.probabilities[j] > 0.0) s += l.probabilities[j] * std::exp(l.values[j] * l.values[j] / (a * a));
          }
          return s;
        } else {
          boost::math::quadrature::exp_sinh<double> integrator;
          const double inv = 1.0 / (a * a);
          try {
            const auto term = [&](double x) {
              if (l.log_pdf) return std::exp(l.log_pdf(x) + x * x * inv);
              const double f = l.pdf(x);
              return f > 0.0 ? f * std::exp(x * x * inv) : 0.0;
            };
            const auto right = [&](double x) { return term(x); };
            const auto left = [&](double x) { return term(-x); };
            const double value = integrator.integrate(right) + integrator.integrate(left);
            return std::isfinite(value) ? value : kInf;
          } catch (const std::exception&) {
            return kInf;
          }
        }
      },
      law);
}

bool degenerate_at_zero(const Law& law) {
  if (const auto* d = std::get_if<DiscreteLaw>(&law)) {
    for (std::size_t j = 0; j < d->values.size(); ++j) {
      if (d->probabilities[j] > 0.0 && d->values[j] != 0.0) return false;
    }
    return true;
  }
  if (const auto* n = std::get_if<NormalLaw>(&law)) return n->sd == 0.0;
  return false;
}

void validate_law(const Law& law) {
  if (const auto* d = std::get_if<DiscreteLaw>(&law)) {
    if (d->values.empty() || d->values.size() != d->probabilities.size()) {
      throw DomainError("discrete law needs matching nonempty values and probabilities");
    }
    double total = 0.0;
    for (double p : d->probabilities) {
      if (!(p >= 0.0)) throw DomainError("discrete law probabilities must be nonnegative");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw DomainError("discrete law probabilities must sum to 1");
  } else if (const auto* n = std::get_if<NormalLaw>(&law)) {
    if (!(n->sd >= 0.0)) throw DomainError("normal law needs sd >= 0");
  } else if (const auto& f = std::get<DensityLaw>(law); !f.pdf && !f.log_pdf) {
    throw DomainError("density law needs a pdf or log_pdf");
  }
}

}  // namespace

ConditionalMean conditional_mean_norm(const SubsetSpec& set) {
  ConditionalMean out;
  std::vector<double> moment;
  if (const auto* cube = std::get_if<HypercubeSet>(&set)) {
    if (cube->d < 1 || cube->d > 30) throw DomainError("hypercube dimension must lie in [1, 30]");
    std::vector<std::uint32_t> points = cube->points;
    std::sort(points.begin(), points.end());
    points.erase(std::unique(points.begin(), points.end()), points.end());
    if (points.empty()) throw DomainError("set has zero measure");
    moment.assign(static_cast<std::size_t>(cube->d), 0.0);
    for (std::uint32_t p : points) {
      if (p >> cube->d) throw DomainError("hypercube point outside {+-1}^d");
      for (int i = 0; i < cube->d; ++i) moment[static_cast<std::size_t>(i)] += ((p >> i) & 1U) ? 1.0 : -1.0;
    }
    out.probability = std::ldexp(static_cast<double>(points.size()), -cube->d);
    for (double& m : moment) m /= static_cast<double>(points.size());
    out.mean = std::move(moment);
    out.norm2 = norm2_of(out.mean);
    return out;
  }
  if (const auto* finite = std::get_if<FiniteSet>(&set)) {
    if (!finite->model.finite()) throw DomainError("finite sets need a finite family");
    if (finite->mask.size() != finite->model.sample_space_size()) throw DomainError("mask size differs from the sample space");
    const SensorRegion region = FiniteRegion{finite->mask};
    out.probability = region_probability(finite->model, region, finite->model.theta0());
    if (!(out.probability > 0.0)) throw DomainError("set has zero measure");
    moment = region_score_moment(finite->model, region);
  } else {
    const auto& g = std::get<GaussianSet>(set);
    if (!g.model.gaussian_family()) throw DomainError("Gaussian sets need a Gaussian family");
    if (g.region.dim() != g.model.dim()) throw DomainError("region dimension differs from the model");
    out.probability = g.region.probability(g.model.theta0(), g.model.sigma());
    if (!(out.probability > 0.0)) throw DomainError("set has zero measure");
    moment = g.region.score_moment(g.model.theta0(), g.model.sigma());
  }
  for (double& m : moment) m /= out.probability;
  out.mean = std::move(moment);
  out.norm2 = norm2_of(out.mean);
  return out;
}

std::vector<SlackRecord> verify_geometric_bounds(const std::vector<SubsetSpec>& sets, const GeometryOptions& options) {
  std::vector<SlackRecord> records;
  records.reserve(sets.size());
  for (std::size_t id = 0; id < sets.size(); ++id) {
    const auto cm = conditional_mean_norm(sets[id]);
    SlackRecord record;
    record.set_id = id;
    record.probability = cm.probability;
    record.norm2 = cm.norm2;
    const double p = cm.probability;
    const auto add = [&](std::string name, double value) {
      record.bounds.push_back({std::move(name), value, value - cm.norm2});
      if (value - cm.norm2 < -options.tolerance) record.violated = true;
    };
    add("bessel", fisher_bound_constant(sets[id]) * (1.0 - p) / p);
    if (options.psi2_sigma) add("psi2", *options.psi2_sigma * *options.psi2_sigma * std::log(2.0 / p));
    if (const auto c = score_scale(sets[id])) add("gaussian", *c * *c * 2.0 * std::log(1.0 / p));
    records.push_back(std::move(record));
  }
  return records;
}

HypercubeScan scan_hypercube_subsets(int d, double tolerance, int threads) {
  if (d < 1 || d > 4) throw CapacityError("exhaustive subset scan supports 1 <= d <= 4");
  const int points = 1 << d;
  const std::uint64_t total = (std::uint64_t{1} << points) - 1;
  const std::size_t blocks = 64;
  std::vector<HypercubeScan> partial(blocks);
  parallel_for(blocks, resolve_threads(threads), [&](std::size_t b) {
    HypercubeScan& acc = partial[b];
    acc.min_bessel_slack = kInf;
    acc.min_hypercube_slack = kInf;
    const std::uint64_t first = 1 + total * b / blocks;
    const std::uint64_t last = 1 + total * (b + 1) / blocks;
    for (std::uint64_t mask = first; mask < last; ++mask) {
      int sums[4] = {0, 0, 0, 0};
      const int size = std::popcount(mask);
      for (int x = 0; x < points; ++x) {
        if (!((mask >> x) & 1U)) continue;
        for (int i = 0; i < d; ++i) sums[i] += ((x >> i) & 1) ? 1 : -1;
      }
      double norm2 = 0.0;
      for (int i = 0; i < d; ++i) norm2 += static_cast<double>(sums[i]) * sums[i];
      norm2 /= static_cast<double>(size) * size;
      const double p = static_cast<double>(size) / points;
      const double bessel = (1.0 - p) / p - norm2;
      const double cube = 2.0 * std::log(1.0 / p) - norm2;
      ++acc.sets;
      if (bessel < -tolerance) ++acc.bessel_violations;
      if (cube < -tolerance) ++acc.hypercube_violations;
      acc.min_bessel_slack = std::min(acc.min_bessel_slack, bessel);
      acc.min_hypercube_slack = std::min(acc.min_hypercube_slack, cube);
    }
  });
  HypercubeScan out;
  out.d = d;
  out.min_bessel_slack = kInf;
  out.min_hypercube_slack = kInf;
  for (const auto& p : partial) {
    out.sets += p.sets;
    out.bessel_violations += p.bessel_violations;
    out.hypercube_violations += p.hypercube_violations;
    out.min_bessel_slack = std::min(out.min_bessel_slack, p.min_bessel_slack);
    out.min_hypercube_slack = std::min(out.min_hypercube_slack, p.min_hypercube_slack);
  }
  return out;
}

MaxNorm brute_force_max_norm(int d, std::size_t m, bool search) {
  if (d < 1 || d > 20) throw DomainError("dimension must lie in [1, 20]");
  const std::size_t points = std::size_t{1} << d;
  if (m == 0 || m > points) throw DomainError("set size must lie in [1, 2^d]");
  const auto du = static_cast<std::size_t>(d);
  const auto norm2_from = [&](const std::vector<double>& sums) { return norm2_of(sums) / (double(m) * double(m)); };

  MaxNorm best;
  if (d <= 4) {
    std::vector<std::uint8_t> select(points, 0);
    std::fill(select.begin(), select.begin() + static_cast<std::ptrdiff_t>(m), 1);
    best.norm2 = -1.0;
    do {
      std::vector<double> sums(du, 0.0);
      for (std::size_t x = 0; x < points; ++x) {
        if (!select[x]) continue;
        for (int i = 0; i < d; ++i) sums[static_cast<std::size_t>(i)] += ((x >> i) & 1U) ? 1.0 : -1.0;
      }
      const double n2 = norm2_from(sums);
      if (n2 > best.norm2 + 1e-15) {
        best.norm2 = n2;
        best.witness.clear();
        for (std::size_t x = 0; x < points; ++x) {
          if (select[x]) best.witness.push_back(static_cast<std::uint32_t>(x));
        }
      }
    } while (std::prev_permutation(select.begin(), select.end()));
    best.norm = std::sqrt(best.norm2);
    return best;
  }
  if (!search) throw CapacityError("exhaustive search needs d <= 4; pass the search flag for local search");

  // Local search from the caps around (1,..,1,0,..,0) with r leading ones,
  // r = 1..d; the best local optimum wins.
  best.norm2 = -1.0;
  for (int r = 1; r <= d; ++r) {
    const std::uint32_t lead = (r == 32) ? ~0U : ((1U << r) - 1U);
    std::vector<std::uint32_t> order(points);
    std::iota(order.begin(), order.end(), 0U);
    std::stable_sort(order.begin(), order.end(), [lead](std::uint32_t a, std::uint32_t b) {
      return std::popcount(a & lead) > std::popcount(b & lead);
    });
    std::vector<std::uint8_t> inside(points, 0);
    std::vector<double> sums(du, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      inside[order[j]] = 1;
      const auto v = sign_vector(order[j], d);
      for (std::size_t i = 0; i < du; ++i) sums[i] += v[i];
    }
    double current = norm2_of(sums);
    bool improved = true;
    while (improved) {
      improved = false;
      for (std::size_t out_point = 0; out_point < points && !improved; ++out_point) {
        if (!inside[out_point]) continue;
        const auto vo = sign_vector(static_cast<std::uint32_t>(out_point), d);
        for (std::size_t in_point = 0; in_point < points; ++in_point) {
          if (inside[in_point]) continue;
          const auto vi = sign_vector(static_cast<std::uint32_t>(in_point), d);
          double candidate = 0.0;
          for (std::size_t i = 0; i < du; ++i) {
            const double s = sums[i] - vo[i] + vi[i];
            candidate += s * s;
          }
          if (candidate > current + 1e-9) {
            inside[out_point] = 0;
            inside[in_point] = 1;
            for (std::size_t i = 0; i < du; ++i) sums[i] += vi[i] - vo[i];
            current = candidate;
            improved = true;
            break;
          }
        }
      }
    }
    const double n2 = current / (double(m) * double(m));
    if (n2 > best.norm2 + 1e-15) {
      best.norm2 = n2;
      best.witness.clear();
      for (std::size_t x = 0; x < points; ++x) {
        if (inside[x]) best.witness.push_back(static_cast<std::uint32_t>(x));
      }
    }
  }
  best.norm = std::sqrt(best.norm2);
  best.heuristic = true;
  return best;
}

CapNorm cap_mean_norm(int d, int t) {
  if (d < 1) throw DomainError("dimension must be positive");
  if (t < 0 || 2 * t >= d) throw DomainError("cap radius must satisfy 0 <= t < d/2");
  cpp_int binom = 1;
  cpp_int size = 0;
  cpp_int numerator = 0;  // sum_j C(d, j) (d - 2j)
  for (int j = 0; j <= t; ++j) {
    size += binom;
    numerator += binom * (d - 2 * j);
    binom = binom * (d - j) / (j + 1);
  }
  const cpp_bin_float_50 n(numerator);
  const cpp_bin_float_50 s(size);
  const cpp_bin_float_50 norm2 = n * n / (cpp_bin_float_50(d) * s * s);
  const cpp_bin_float_50 log_ratio = cpp_bin_float_50(d) * log(cpp_bin_float_50(2)) - log(s);
  CapNorm out;
  out.size = size.str();
  out.norm2 = static_cast<double>(norm2);
  out.norm = static_cast<double>(sqrt(norm2));
  out.log_ratio = static_cast<double>(log_ratio);
  out.bound_ratio = static_cast<double>(norm2 / (2 * log_ratio));
  return out;
}

CapSweep cap_ratio_sweep(int d) {
  CapSweep sweep;
  for (int t = 0; 2 * t < d; ++t) {
    const double r = cap_mean_norm(d, t).bound_ratio;
    sweep.ratios.push_back(r);
    if (t == 0 || r > sweep.best_ratio) {
      sweep.best_ratio = r;
      sweep.best_radius = t;
    }
  }
  return sweep;
}

double psi2_norm(const Law& law, const Psi2Options& options) {
  validate_law(law);
  if (degenerate_at_zero(law)) return 0.0;
  if (!(options.cap > 0.0) || !(options.relative_tolerance > 0.0)) throw DomainError("psi2 options must be positive");
  double hi = options.cap;
  const double at_cap = orlicz_moment(law, hi);
  if (!std::isfinite(at_cap)) throw DomainError("no finite psi2 norm: E exp(X^2/a^2) diverges for every a up to the cap");
  if (at_cap > 2.0) throw DomainError("psi2 norm exceeds the cap");
  double lo = hi;
  while (true) {
    lo *= 0.5;
    if (lo < options.cap * 1e-300) throw DomainError("psi2 bracket search failed");
    if (orlicz_moment(law, lo) > 2.0) break;
    hi = lo;
  }
  while (hi - lo > options.relative_tolerance * hi) {
    const double mid = 0.5 * (lo + hi);
    if (orlicz_moment(law, mid) > 2.0) lo = mid;
    else hi = mid;
  }
  return hi;
}

std::vector<ScoreTail> score_psi2(const Model& model) {
  std::vector<ScoreTail> out;
  const int d = model.dim();
  if (model.gaussian_family()) {
    const double sd = 1.0 / model.sigma();
    const double psi = psi2_norm(NormalLaw{sd});
    for (int i = 0; i < d; ++i) out.push_back({i, sd * sd, psi, sd * sd / (psi * psi)});
    return out;
  }
  const auto probs = model.probabilities(model.theta0());
  std::vector<std::vector<double>> scores;
  scores.reserve(probs.size());
  for (std::size_t x = 0; x < probs.size(); ++x) scores.push_back(score(model, model.point(x)));
  for (int i = 0; i < d; ++i) {
    DiscreteLaw law;
    double mean = 0.0;
    double second = 0.0;
    for (std::size_t x = 0; x < probs.size(); ++x) {
      const double v = scores[x][static_cast<std::size_t>(i)];
      law.values.push_back(v);
      law.probabilities.push_back(probs[x]);
      mean += probs[x] * v;
      second += probs[x] * v * v;
    }
    const double variance = second - mean * mean;
    const double psi = psi2_norm(law);
    out.push_back({i, variance, psi, variance / (psi * psi)});
  }
  return out;
}

double StepFunction::operator()(double x) const {
  if (values.size() != breaks.size() + 1) throw DomainError("step function needs one more value than breaks");
  const auto it = std::lower_bound(breaks.begin(), breaks.end(), x);
  const auto j = static_cast<std::size_t>(it - breaks.begin());
  if (it != breaks.end() && *it == x) return 0.5 * (values[j] + values[j + 1]);
  return values[j];
}

TensorPower tensor_power_compare(const StepFunction& a, int lift) {
  if (lift < 1 || lift > 20) throw CapacityError("lift order must lie in [1, 20]");
  if (a.values.size() != a.breaks.size() + 1) throw DomainError("step function needs one more value than breaks");
  if (!std::is_sorted(a.breaks.begin(), a.breaks.end())) throw DomainError("step breaks must be sorted");
  for (double v : a.values) {
    if (v < 0.0 || v > 1.0) throw DomainError("step values must lie in [0, 1]");
  }
  TensorPower out;
  out.lift = lift;

  // Binomial weights over the number of -1 entries.
  double mass = 0.0;
  double moment = 0.0;
  double weight = std::ldexp(1.0, -lift);
  const double root = std::sqrt(static_cast<double>(lift));
  for (int j = 0; j <= lift; ++j) {
    const double z = (lift - 2.0 * j) / root;
    const double value = a(z);
    mass += weight * value;
    moment += weight * z * value;
    weight = weight * (lift - j) / (j + 1);
  }
  if (!(mass > 0.0)) throw DomainError("lifted function has zero mean");
  out.hypercube = moment / mass;

  double g_mass = 0.0;
  double g_moment = 0.0;
  for (std::size_t j = 0; j < a.values.size(); ++j) {
    const double lo = j == 0 ? -kInf : a.breaks[j - 1];
    const double hi = j == a.breaks.size() ? kInf : a.breaks[j];
    const double cell = (std::isinf(hi) ? 1.0 : normal::cdf(hi)) - (std::isinf(lo) ? 0.0 : normal::cdf(lo));
    const double density = (std::isinf(lo) ? 0.0 : normal::pdf(lo)) - (std::isinf(hi) ? 0.0 : normal::pdf(hi));
    g_mass += a.values[j] * cell;
    g_moment += a.values[j] * density;
  }
  if (!(g_mass > 0.0)) throw DomainError("function has zero Gaussian mean");
  out.gaussian = g_moment / g_mass;
  out.gap = std::abs(out.hypercube - out.gaussian);
  out.relative_gap = out.gaussian != 0.0 ? out.gap / std::abs(out.gaussian) : out.gap;
  return out;
}

}  // namespace commlim
