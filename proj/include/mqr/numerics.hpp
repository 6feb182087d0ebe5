#pragma once

// Deterministic math substrate: seeded RNG, order statistics, special
// functions and the analytic coverage of a directional quantile region.

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace mqr {

// Dense matrices follow the (row, column) convention: datasets store one
// sample per row.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// xoshiro256** generator seeded through splitmix64.
///
/// Normal draws use the Box-Muller transform and cache the second variate,
/// so the stream is fully determined by the seed and the call sequence.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double low, double high);
  double normal();
  // Uniform integer in [0, bound).
  std::size_t uniform_index(std::size_t bound);
  std::vector<std::size_t> permutation(std::size_t n);

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t state_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Mixes several integers into one seed so that sub-streams (per method,
// per purpose) are independent of each other.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

/// k-th smallest value (1-based). Throws InvalidArgument on an empty input or
/// k outside [1, size].
double empirical_quantile(std::span<const double> values, std::size_t k);

// Linearly interpolated quantile at level q in [0,1] (the "type 7" rule).
double interpolated_quantile(std::span<const double> values, double q);

double std_normal_cdf(double z);
double std_normal_inv_cdf(double p);

// Regularized lower incomplete gamma P(a, x).
double regularized_gamma_p(double a, double x);
double chi_squared_cdf(double x, int dof);

/// Coverage of the intersection of all level-alpha directional half-spaces
/// under a standard normal r-vector: F_{chi2_r}(Phi^{-1}(alpha)^2).
double dqr_theoretical_coverage(double alpha, int r);
// Monte-Carlo estimate of the same probability from `samples` normal draws.
double dqr_coverage_monte_carlo(double alpha, int r, std::size_t samples, std::uint64_t seed);

// Squared Euclidean distance between equally sized spans.
inline double squared_distance(const double* a, const double* b, int dim) {
  double s = 0.0;
  for (int j = 0; j < dim; ++j) {
    const double t = a[j] - b[j];
    s += t * t;
  }
  return s;
}

}  // namespace mqr
