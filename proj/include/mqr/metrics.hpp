#pragma once

// Coverage, k-means clusters on the test features, cluster-conditional
// coverage deviation and report aggregation.

#include "mqr/numerics.hpp"

#include <nlohmann/json.hpp>

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace mqr {

// Fraction of true flags. Throws InvalidArgument on an empty list.
double coverage(const std::vector<bool>& covered);

struct ClusterAssignment {
  Matrix centroids;  // k x p
  std::vector<int> labels;
  std::vector<double> objective_trace;  // within-cluster sum of squares per Lloyd step
  int k() const { return static_cast<int>(centroids.rows()); }
  std::vector<std::size_t> sizes() const;
};

class ClusterConstraintError : public std::runtime_error {
 public:
  ClusterConstraintError(const std::string& what, ClusterAssignment best)
      : std::runtime_error(what), best_(std::move(best)) {}
  const ClusterAssignment& best() const noexcept { return best_; }

 private:
  ClusterAssignment best_;
};

struct KmeansOptions {
  int max_iters = 300;
  int restarts = 50;
  double min_fraction = 0.2;
};

/// k-means++ seeding and Lloyd iterations, restarted until every cluster
/// holds at least min_fraction of the rows. Rows that are all identical
/// collapse to one cluster. Throws ClusterConstraintError when the restart
/// budget runs out.
ClusterAssignment kmeans(const Matrix& x, int k, std::uint64_t seed, const KmeansOptions& options = {});

double within_cluster_ss(const Matrix& x, const Matrix& centroids, const std::vector<int>& labels);

// Coverage inside each cluster; throws InvalidArgument for an empty cluster.
std::vector<double> cluster_coverages(const std::vector<bool>& covered, const std::vector<int>& labels,
                                      int k);
// Mean over clusters of |coverage_c - (1 - alpha)|.
double delta_coverage(const std::vector<double>& cluster_coverage, double alpha);
double delta_coverage(const std::vector<bool>& covered, const std::vector<int>& labels, int k,
                      double alpha);

// One (dataset, method, seed) cell.
struct ReportRow {
  std::string dataset;
  std::string method;
  std::uint64_t seed = 0;
  std::string config_hash;
  bool ok = true;
  std::string error;
  double coverage = 0.0;
  double area = 0.0;  // mean grid cells over the measured test rows
  double delta_coverage = 0.0;
  std::vector<double> cluster_coverage;
  std::size_t n_test = 0;
  std::size_t n_area = 0;
  std::string calibration_mode;
  double gamma_cal = 0.0;
  double c_init = 0.0;
  double seconds = 0.0;

  nlohmann::json to_json() const;
  static ReportRow from_json(const nlohmann::json& j);
};

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;  // between-seed standard error
  std::size_t count = 0;
};
MeanSe mean_se(const std::vector<double>& values);

struct EvaluationReport {
  std::string dataset;
  std::string method;
  std::vector<std::uint64_t> seeds;
  MeanSe coverage;
  MeanSe area;
  MeanSe delta_coverage;
  std::vector<double> cluster_coverage;  // mean per cluster
  std::size_t failures = 0;

  nlohmann::json to_json() const;
};

// Groups successful rows by (dataset, method), in first-seen order.
std::vector<EvaluationReport> aggregate(const std::vector<ReportRow>& rows);

void write_rows_csv(std::ostream& out, const std::vector<ReportRow>& rows);
void write_summary_csv(std::ostream& out, const std::vector<EvaluationReport>& reports);

}  // namespace mqr
