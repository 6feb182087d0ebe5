#pragma once

// Synthetic v-shaped data, CSV ingestion, seeded splits, z-scoring and PCA.

#include "mqr/numerics.hpp"

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mqr {

struct Dataset {
  Matrix x;  // n x p
  Matrix y;  // n x d
  std::vector<std::string> x_names;
  std::vector<std::string> y_names;

  std::size_t size() const { return static_cast<std::size_t>(x.rows()); }
};

enum class Setting { Linear, Nonlinear };
const char* to_string(Setting s);
Setting setting_from_string(const std::string& s);

// Default sample size of the synthetic benchmarks.
std::size_t default_synthetic_size(int p);

// Per-row latent draws of the generator.
struct SyntheticDraw {
  double z = 0.0;    // U(-pi, pi)
  double phi = 0.0;  // U(0, 2 pi)
  double r = 0.0;    // U(-0.1, 0.1)
  Vector x;          // U(0.8, 3.2)^p
};

// Response for a given draw and coefficient vector beta (|beta|_1 = 1).
Vector synthetic_response(Setting setting, int d, const Vector& beta, const SyntheticDraw& draw);

// beta-hat ~ U(0,1)^p is drawn once per dataset and L1-normalised, then every
// row draws (Z, phi, R, X). Throws InvalidArgument for d outside 2..4, p < 1
// or n < 1.
Dataset gen_synthetic(Setting setting, int d, int p, std::size_t n, std::uint64_t seed);
// The coefficient vector gen_synthetic uses for a seed and p.
Vector synthetic_beta(int p, std::uint64_t seed);
// n responses drawn at a fixed input x (one per row).
Matrix sample_conditional(Setting setting, int d, const Vector& beta, const Vector& x, std::size_t n,
                          std::uint64_t seed);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> calibration;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
};

// Sizes for fractions 0.384/0.256/0.16/0.2: floors, then the leftover rows go
// to the largest fractional parts (train first on ties).
std::array<std::size_t, 4> split_sizes(std::size_t n);
// Seeded permutation sliced into train/calibration/validation/test. n >= 10.
SplitIndices split(std::size_t n, std::uint64_t seed);

Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& rows);

struct ColumnStats {
  Vector mean;
  Vector std;  // population standard deviation

  Matrix apply(const Matrix& m) const;
  Matrix invert(const Matrix& m) const;
};

// Throws DomainError naming the first zero-variance column.
ColumnStats fit_column_stats(const Matrix& m, const std::vector<std::string>& names = {});

struct NormalizedDataset {
  Dataset data;
  ColumnStats x_stats;
  ColumnStats y_stats;
};

NormalizedDataset zscore_fit_apply(const Dataset& data, const std::vector<std::size_t>& train_rows);

struct Pca {
  Vector mean;
  Matrix basis;  // p x k, columns ordered by explained variance
  Vector explained_variance;

  Matrix project(const Matrix& x) const;
};

// Symmetric eigendecomposition by cyclic Jacobi rotations. Eigenvalues come
// back in descending order with eigenvectors as columns.
void jacobi_eigen(const Matrix& sym, Vector& values, Matrix& vectors);

Pca pca_fit(const Matrix& x, int k);
Matrix pca_reduce(const Matrix& x, int k, Pca* fitted = nullptr);

/// CSV with a header row. Columns named in response_columns form y, the rest
/// form x. Throws ParseError with 1-based row (header is row 1) and column.
Dataset read_csv(std::istream& in, const std::vector<std::string>& response_columns);
Dataset load_csv(const std::string& path, const std::vector<std::string>& response_columns);
// Features first, then responses; shortest round-trip float formatting.
void write_csv(std::ostream& out, const Dataset& data);
void save_csv(const std::string& path, const Dataset& data);

}  // namespace mqr
