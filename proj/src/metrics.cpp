#include "mqr/metrics.hpp"

#include "mqr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>

namespace mqr {

double coverage(const std::vector<bool>& covered) {
  if (covered.empty()) throw InvalidArgument("coverage: empty test set");
  const auto hits = std::count(covered.begin(), covered.end(), true);
  return static_cast<double>(hits) / static_cast<double>(covered.size());
}

std::vector<std::size_t> ClusterAssignment::sizes() const {
  std::vector<std::size_t> s(static_cast<std::size_t>(k()), 0);
  for (int l : labels) ++s[static_cast<std::size_t>(l)];
  return s;
}

double within_cluster_ss(const Matrix& x, const Matrix& centroids, const std::vector<int>& labels) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    total += (x.row(i) - centroids.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
  return total;
}

namespace {

ClusterAssignment lloyd(const Matrix& x, int k, Rng& rng, int max_iters) {
  const Eigen::Index n = x.rows();
  ClusterAssignment a;
  a.centroids.resize(k, x.cols());
  // k-means++ seeding.
  a.centroids.row(0) = x.row(static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::size_t>(n))));
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& di = d2[static_cast<std::size_t>(i)];
      di = std::min(di, (x.row(i) - a.centroids.row(c - 1)).squaredNorm());
      total += di;
    }
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (pick = 0; pick < n - 1; ++pick) {
        target -= d2[static_cast<std::size_t>(pick)];
        if (target < 0.0) break;
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::size_t>(n)));
    }
    a.centroids.row(c) = x.row(pick);
  }

  a.labels.assign(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < max_iters; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double dd = (x.row(i) - a.centroids.row(c)).squaredNorm();
        if (dd < best_d) {
          best_d = dd;
          best = c;
        }
      }
      if (a.labels[static_cast<std::size_t>(i)] != best) {
        a.labels[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    if (!changed) break;
    Matrix sums = Matrix::Zero(k, x.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int l = a.labels[static_cast<std::size_t>(i)];
      sums.row(l) += x.row(i);
      ++counts[static_cast<std::size_t>(l)];
    }
    for (int c = 0; c < k; ++c)
      if (counts[static_cast<std::size_t>(c)] > 0)
        a.centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
    a.objective_trace.push_back(within_cluster_ss(x, a.centroids, a.labels));
  }
  return a;
}

}  // namespace

ClusterAssignment kmeans(const Matrix& x, int k, std::uint64_t seed, const KmeansOptions& options) {
  const Eigen::Index n = x.rows();
  if (k < 1) throw InvalidArgument("kmeans: k must be >= 1");
  if (n < k) throw InvalidArgument("kmeans: fewer rows than clusters");

  bool all_same = true;
  for (Eigen::Index i = 1; i < n && all_same; ++i) all_same = x.row(i) == x.row(0);
  if (k == 1 || all_same) {
    ClusterAssignment a;
    a.centroids = x.colwise().mean();
    a.labels.assign(static_cast<std::size_t>(n), 0);
    a.objective_trace.push_back(within_cluster_ss(x, a.centroids, a.labels));
    return a;
  }

  Rng rng(seed);
  const double need = options.min_fraction * static_cast<double>(n);
  ClusterAssignment best;
  std::size_t best_min = 0;
  for (int attempt = 0; attempt < std::max(1, options.restarts); ++attempt) {
    ClusterAssignment a = lloyd(x, k, rng, options.max_iters);
    const auto s = a.sizes();
    const std::size_t smallest = *std::min_element(s.begin(), s.end());
    if (static_cast<double>(smallest) >= need) return a;
    if (attempt == 0 || smallest > best_min) {
      best = std::move(a);
      best_min = smallest;
    }
  }
  throw ClusterConstraintError("kmeans: no clustering with every cluster >= " +
                                   std::to_string(options.min_fraction) + " of the rows after " +
                                   std::to_string(options.restarts) + " restarts",
                               std::move(best));
}

std::vector<double> cluster_coverages(const std::vector<bool>& covered, const std::vector<int>& labels,
                                      int k) {
  if (covered.size() != labels.size()) throw InvalidArgument("cluster_coverages: length mismatch");
  std::vector<double> hits(static_cast<std::size_t>(k), 0.0), counts(static_cast<std::size_t>(k), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= k) throw InvalidArgument("cluster_coverages: label out of range");
    counts[static_cast<std::size_t>(labels[i])] += 1.0;
    if (covered[i]) hits[static_cast<std::size_t>(labels[i])] += 1.0;
  }
  for (std::size_t c = 0; c < hits.size(); ++c) {
    if (counts[c] == 0.0) throw InvalidArgument("cluster_coverages: cluster " + std::to_string(c) + " is empty");
    hits[c] /= counts[c];
  }
  return hits;
}

double delta_coverage(const std::vector<double>& cluster_coverage, double alpha) {
  if (cluster_coverage.empty()) throw InvalidArgument("delta_coverage: no clusters");
  double total = 0.0;
  for (double c : cluster_coverage) total += std::abs(c - (1.0 - alpha));
  return total / static_cast<double>(cluster_coverage.size());
}

double delta_coverage(const std::vector<bool>& covered, const std::vector<int>& labels, int k,
                      double alpha) {
  return delta_coverage(cluster_coverages(covered, labels, k), alpha);
}

nlohmann::json ReportRow::to_json() const {
  return {{"dataset", dataset},
          {"method", method},
          {"seed", seed},
          {"config_hash", config_hash},
          {"ok", ok},
          {"error", error},
          {"coverage", coverage},
          {"area", area},
          {"delta_coverage", delta_coverage},
          {"cluster_coverage", cluster_coverage},
          {"n_test", n_test},
          {"n_area", n_area},
          {"calibration_mode", calibration_mode},
          {"gamma_cal", gamma_cal},
          {"c_init", c_init},
          {"seconds", seconds}};
}

ReportRow ReportRow::from_json(const nlohmann::json& j) {
  ReportRow r;
  r.dataset = j.at("dataset").get<std::string>();
  r.method = j.at("method").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config_hash = j.value("config_hash", "");
  r.ok = j.value("ok", true);
  r.error = j.value("error", "");
  r.coverage = j.value("coverage", 0.0);
  r.area = j.value("area", 0.0);
  r.delta_coverage = j.value("delta_coverage", 0.0);
  r.cluster_coverage = j.value("cluster_coverage", std::vector<double>{});
  r.n_test = j.value("n_test", std::size_t{0});
  r.n_area = j.value("n_area", std::size_t{0});
  r.calibration_mode = j.value("calibration_mode", "");
  r.gamma_cal = j.value("gamma_cal", 0.0);
  r.c_init = j.value("c_init", 0.0);
  r.seconds = j.value("seconds", 0.0);
  return r;
}

MeanSe mean_se(const std::vector<double>& values) {
  MeanSe out;
  out.count = values.size();
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    const double var = ss / static_cast<double>(values.size() - 1);
    out.se = std::sqrt(var / static_cast<double>(values.size()));
  }
  return out;
}

nlohmann::json EvaluationReport::to_json() const {
  auto ms = [](const MeanSe& m) { return nlohmann::json{{"mean", m.mean}, {"se", m.se}, {"n", m.count}}; };
  return {{"dataset", dataset},       {"method", method},
          {"seeds", seeds},           {"coverage", ms(coverage)},
          {"area", ms(area)},         {"delta_coverage", ms(delta_coverage)},
          {"cluster_coverage", cluster_coverage}, {"failures", failures}};
}

std::vector<EvaluationReport> aggregate(const std::vector<ReportRow>& rows) {
  std::vector<EvaluationReport> out;
  std::vector<std::vector<const ReportRow*>> groups;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const EvaluationReport& e) {
      return e.dataset == r.dataset && e.method == r.method;
    });
    if (it == out.end()) {
      EvaluationReport e;
      e.dataset = r.dataset;
      e.method = r.method;
      out.push_back(e);
      groups.emplace_back();
      it = out.end() - 1;
    }
    groups[static_cast<std::size_t>(it - out.begin())].push_back(&r);
  }
  for (std::size_t g = 0; g < out.size(); ++g) {
    std::vector<double> cov, area, dc;
    std::vector<std::vector<double>> clusters;
    for (const ReportRow* r : groups[g]) {
      if (!r->ok) {
        ++out[g].failures;
        continue;
      }
      out[g].seeds.push_back(r->seed);
      cov.push_back(r->coverage);
      area.push_back(r->area);
      dc.push_back(r->delta_coverage);
      clusters.push_back(r->cluster_coverage);
    }
    out[g].coverage = mean_se(cov);
    out[g].area = mean_se(area);
    out[g].delta_coverage = mean_se(dc);
    if (!clusters.empty()) {
      out[g].cluster_coverage.assign(clusters.front().size(), 0.0);
      for (const auto& c : clusters)
        for (std::size_t j = 0; j < std::min(c.size(), out[g].cluster_coverage.size()); ++j)
          out[g].cluster_coverage[j] += c[j] / static_cast<double>(clusters.size());
    }
  }
  return out;
}

void write_rows_csv(std::ostream& out, const std::vector<ReportRow>& rows) {
  out << "dataset,method,seed,config_hash,ok,coverage,area,delta_coverage,n_test,n_area,"
         "calibration_mode,gamma_cal,c_init,seconds,error\n";
  const auto saved = out.precision(12);
  for (const auto& r : rows) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << r.dataset << ',' << r.method << ',' << r.seed << ',' << r.config_hash << ','
        << (r.ok ? 1 : 0) << ',' << r.coverage << ',' << r.area << ',' << r.delta_coverage << ','
        << r.n_test << ',' << r.n_area << ',' << r.calibration_mode << ',' << r.gamma_cal << ','
        << r.c_init << ',' << r.seconds << ',' << err << '\n';
  }
  out.precision(saved);
}

void write_summary_csv(std::ostream& out, const std::vector<EvaluationReport>& reports) {
  out << "dataset,method,seeds,coverage_mean,coverage_se,area_mean,area_se,delta_coverage_mean,"
         "delta_coverage_se,failures\n";
  const auto saved = out.precision(12);
  for (const auto& e : reports)
    out << e.dataset << ',' << e.method << ',' << e.seeds.size() << ',' << e.coverage.mean << ','
        << e.coverage.se << ',' << e.area.mean << ',' << e.area.se << ',' << e.delta_coverage.mean
        << ',' << e.delta_coverage.se << ',' << e.failures << '\n';
  out.precision(saved);
}

}  // namespace mqr
