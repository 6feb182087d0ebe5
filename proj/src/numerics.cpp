#include "mqr/numerics.hpp"

#include "mqr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace mqr {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t s = seed;
  for (auto& w : state_) w = splitmix64(s);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double low, double high) { return low + (high - low) * uniform(); }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::size_t Rng::uniform_index(std::size_t bound) {
  if (bound == 0) throw InvalidArgument("uniform_index: bound must be positive");
  // Lemire's multiply-shift with rejection keeps the draw unbiased.
  const std::uint64_t range = bound;
  unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * range;
  auto low = static_cast<std::uint64_t>(m);
  if (low < range) {
    const std::uint64_t threshold = (0 - range) % range;
    while (low < threshold) {
      m = static_cast<unsigned __int128>(next_u64()) * range;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::size_t>(m >> 64);
}

std::vector<std::size_t> Rng::permutation(std::size_t n) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = uniform_index(i);
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = base;
  std::uint64_t h = splitmix64(x);
  x = h ^ (a * 0xd1342543de82ef95ULL);
  h = splitmix64(x);
  x = h ^ (b * 0x9e3779b97f4a7c15ULL);
  return splitmix64(x);
}

double empirical_quantile(std::span<const double> values, std::size_t k) {
  if (values.empty()) throw InvalidArgument("empirical_quantile: empty input");
  if (k < 1 || k > values.size())
    throw InvalidArgument("empirical_quantile: k=" + std::to_string(k) + " outside [1, " +
                          std::to_string(values.size()) + "]");
  std::vector<double> copy(values.begin(), values.end());
  auto nth = copy.begin() + static_cast<std::ptrdiff_t>(k - 1);
  std::nth_element(copy.begin(), nth, copy.end());
  return *nth;
}

double interpolated_quantile(std::span<const double> values, double q) {
  if (values.empty()) throw InvalidArgument("interpolated_quantile: empty input");
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("interpolated_quantile: level outside [0,1]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double std_normal_inv_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("std_normal_inv_cdf: p must lie in (0,1)");

  // Acklam's rational approximation, relative error ~1.2e-9.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double z;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    z = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    z = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    z = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  // One Newton step against the erfc-based CDF.
  const double density = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  if (density > 0.0) z -= (std_normal_cdf(z) - p) / density;
  return z;
}

double regularized_gamma_p(double a, double x) {
  if (!(a > 0.0)) throw DomainError("regularized_gamma_p: shape must be positive");
  if (x < 0.0) throw DomainError("regularized_gamma_p: x must be nonnegative");
  if (x == 0.0) return 0.0;

  constexpr int max_iter = 1000;
  constexpr double eps = 1e-16;
  const double log_prefactor = -x + a * std::log(x) - std::lgamma(a);

  if (x < a + 1.0) {
    // Series expansion.
    double term = 1.0 / a;
    double sum = term;
    double ap = a;
    for (int n = 0; n < max_iter; ++n) {
      ap += 1.0;
      term *= x / ap;
      sum += term;
      if (std::abs(term) < std::abs(sum) * eps) break;
    }
    return std::min(1.0, sum * std::exp(log_prefactor));
  }

  // Continued fraction for Q(a,x) via modified Lentz.
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= max_iter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < eps) break;
  }
  return std::max(0.0, 1.0 - std::exp(log_prefactor) * h);
}

double chi_squared_cdf(double x, int dof) {
  if (dof < 1) throw DomainError("chi_squared_cdf: degrees of freedom must be >= 1");
  if (x < 0.0) throw DomainError("chi_squared_cdf: x must be nonnegative");
  return regularized_gamma_p(0.5 * dof, 0.5 * x);
}

double dqr_theoretical_coverage(double alpha, int r) {
  if (!(alpha > 0.0 && alpha <= 0.5))
    throw DomainError("dqr_theoretical_coverage: alpha must lie in (0, 0.5]");
  if (r < 1) throw DomainError("dqr_theoretical_coverage: r must be >= 1");
  const double c = std_normal_inv_cdf(alpha);
  return chi_squared_cdf(c * c, r);
}

double dqr_coverage_monte_carlo(double alpha, int r, std::size_t samples, std::uint64_t seed) {
  if (!(alpha > 0.0 && alpha <= 0.5))
    throw DomainError("dqr_coverage_monte_carlo: alpha must lie in (0, 0.5]");
  if (r < 1) throw DomainError("dqr_coverage_monte_carlo: r must be >= 1");
  if (samples == 0) throw DomainError("dqr_coverage_monte_carlo: samples must be >= 1");
  // Inside every half-space {u'z <= q} for unit u exactly when |z| <= q.
  const double q = -std_normal_inv_cdf(alpha);
  Rng rng(seed);
  std::size_t inside = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    double s = 0.0;
    for (int j = 0; j < r; ++j) {
      const double z = rng.normal();
      s += z * z;
    }
    if (s <= q * q) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(samples);
}

}  // namespace mqr
