#include "mqr/regions.hpp"

#include "mqr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mqr {

const char* to_string(GridPurpose purpose) {
  return purpose == GridPurpose::AreaMeasurement ? "area" : "region";
}

GridPurpose grid_purpose_from_string(const std::string& s) {
  if (s == "area") return GridPurpose::AreaMeasurement;
  if (s == "region") return GridPurpose::RegionDiscretization;
  throw ParseError(0, 0, "unknown grid purpose '" + s + "'");
}

int default_cells_per_axis(int dim, GridPurpose purpose) {
  const bool area = purpose == GridPurpose::AreaMeasurement;
  switch (dim) {
    case 1:
    case 2:
      return area ? 55 : 100;
    case 3:
      return area ? 47 : 35;
    case 4:
      return area ? 22 : 18;
    default:
      throw UnsupportedDimension("grid dimension " + std::to_string(dim) +
                                 " is unsupported (expected 1..4)");
  }
}

Grid::Grid(std::vector<double> low, std::vector<double> high, std::vector<int> cells,
           GridPurpose purpose)
    : low_(std::move(low)), high_(std::move(high)), cells_(std::move(cells)), purpose_(purpose) {
  if (low_.size() != high_.size() || low_.size() != cells_.size() || low_.empty())
    throw InvalidArgument("Grid: bounds and cell counts must have equal nonzero length");
  for (std::size_t j = 0; j < low_.size(); ++j) {
    if (!(low_[j] < high_[j])) throw InvalidArgument("Grid: low must be < high on every axis");
    if (cells_[j] < 1) throw InvalidArgument("Grid: cell counts must be positive");
  }
}

std::size_t Grid::size() const {
  std::size_t n = 1;
  for (int c : cells_) n *= static_cast<std::size_t>(c);
  return n;
}

double Grid::step(int axis) const {
  const auto a = static_cast<std::size_t>(axis);
  return (high_[a] - low_[a]) / cells_[a];
}

double Grid::cell_volume() const {
  double v = 1.0;
  for (int j = 0; j < dim(); ++j) v *= step(j);
  return v;
}

void Grid::point(std::size_t index, double* out) const {
  for (int j = dim() - 1; j >= 0; --j) {
    const auto a = static_cast<std::size_t>(j);
    const auto c = static_cast<std::size_t>(cells_[a]);
    const std::size_t i = index % c;
    index /= c;
    out[j] = low_[a] + (static_cast<double>(i) + 0.5) * step(j);
  }
}

PointMatrix Grid::points() const {
  PointMatrix pts(static_cast<Eigen::Index>(size()), dim());
  for (std::size_t i = 0; i < size(); ++i) point(i, pts.row(static_cast<Eigen::Index>(i)).data());
  return pts;
}

Vector Grid::center() const {
  Vector c(dim());
  for (int j = 0; j < dim(); ++j)
    c[j] = 0.5 * (low_[static_cast<std::size_t>(j)] + high_[static_cast<std::size_t>(j)]);
  return c;
}

nlohmann::json Grid::to_json() const {
  return {{"low", low_}, {"high", high_}, {"cells", cells_}, {"purpose", to_string(purpose_)}};
}

Grid Grid::from_json(const nlohmann::json& j) {
  return Grid(j.at("low").get<std::vector<double>>(), j.at("high").get<std::vector<double>>(),
              j.at("cells").get<std::vector<int>>(),
              grid_purpose_from_string(j.at("purpose").get<std::string>()));
}

Grid build_grid(const Matrix& responses, GridPurpose purpose) {
  const int dim = static_cast<int>(responses.cols());
  const int cells = default_cells_per_axis(dim, purpose);
  if (responses.rows() < 2) throw InvalidArgument("build_grid: need at least two rows");
  const double margin = purpose == GridPurpose::AreaMeasurement ? 0.2 : 1.0;
  std::vector<double> low(static_cast<std::size_t>(dim)), high(static_cast<std::size_t>(dim));
  for (int j = 0; j < dim; ++j) {
    std::vector<double> col(responses.col(j).data(), responses.col(j).data() + responses.rows());
    low[static_cast<std::size_t>(j)] = interpolated_quantile(col, 0.01) - margin;
    high[static_cast<std::size_t>(j)] = interpolated_quantile(col, 0.99) + margin;
  }
  return Grid(std::move(low), std::move(high), std::vector<int>(static_cast<std::size_t>(dim), cells),
              purpose);
}

double min_distance(std::span<const double> y, const PointMatrix& carrier) {
  if (carrier.rows() == 0) throw EmptyCarrier("min_distance: empty carrier");
  if (static_cast<Eigen::Index>(y.size()) != carrier.cols())
    throw InvalidArgument("min_distance: dimension mismatch");
  const int dim = static_cast<int>(carrier.cols());
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < carrier.rows(); ++i)
    best = std::min(best, squared_distance(y.data(), carrier.row(i).data(), dim));
  return std::sqrt(best);
}

KdTree::KdTree(PointMatrix points) : points_(std::move(points)) {
  if (points_.rows() > 0) {
    nodes_.reserve(static_cast<std::size_t>(2 * points_.rows() / 8 + 2));
    build(0, static_cast<std::size_t>(points_.rows()), 0);
  }
}

int KdTree::build(std::size_t begin, std::size_t end, int depth) {
  constexpr std::size_t leaf_size = 8;
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{.begin = begin, .end = end});
  if (end - begin <= leaf_size) return id;

  // Split on the axis of largest spread.
  const int d = dim();
  int axis = 0;
  double widest = -1.0;
  for (int j = 0; j < d; ++j) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
      const double v = points_(static_cast<Eigen::Index>(i), j);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > widest) {
      widest = hi - lo;
      axis = j;
    }
  }
  if (widest <= 0.0) return id;  // all points identical

  // Sort an index permutation of the range by the split axis, then reorder rows.
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  const std::size_t mid = (end - begin) / 2;
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(mid), idx.end(),
                   [&](std::size_t a, std::size_t b) {
                     return points_(static_cast<Eigen::Index>(a), axis) <
                            points_(static_cast<Eigen::Index>(b), axis);
                   });
  PointMatrix block(static_cast<Eigen::Index>(end - begin), d);
  for (std::size_t k = 0; k < idx.size(); ++k)
    block.row(static_cast<Eigen::Index>(k)) = points_.row(static_cast<Eigen::Index>(idx[k]));
  points_.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) = block;

  const std::size_t split_at = begin + mid;
  const double split = points_(static_cast<Eigen::Index>(split_at), axis);
  const int left = build(begin, split_at, depth + 1);
  const int right = build(split_at, end, depth + 1);
  Node& node = nodes_[static_cast<std::size_t>(id)];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

void KdTree::search(int id, const double* q, std::size_t exclude, double& best) const {
  const Node& node = nodes_[static_cast<std::size_t>(id)];
  if (node.axis < 0) {
    const int d = dim();
    for (std::size_t i = node.begin; i < node.end; ++i) {
      if (i == exclude) continue;
      best = std::min(best, squared_distance(q, points_.row(static_cast<Eigen::Index>(i)).data(), d));
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const int near = diff < 0.0 ? node.left : node.right;
  const int far = diff < 0.0 ? node.right : node.left;
  search(near, q, exclude, best);
  if (diff * diff <= best) search(far, q, exclude, best);
}

double KdTree::nearest_squared(const double* query, std::size_t exclude) const {
  double best = std::numeric_limits<double>::infinity();
  if (!nodes_.empty()) search(0, query, exclude, best);
  return best;
}

double KdTree::nearest(const double* query) const { return std::sqrt(nearest_squared(query)); }

bool KdTree::search_within(int id, const double* q, double radius) const {
  const Node& node = nodes_[static_cast<std::size_t>(id)];
  if (node.axis < 0) {
    const int d = dim();
    for (std::size_t i = node.begin; i < node.end; ++i)
      if (std::sqrt(squared_distance(q, points_.row(static_cast<Eigen::Index>(i)).data(), d)) <=
          radius)
        return true;
    return false;
  }
  const double diff = q[node.axis] - node.split;
  const int near = diff < 0.0 ? node.left : node.right;
  const int far = diff < 0.0 ? node.right : node.left;
  if (search_within(near, q, radius)) return true;
  return std::abs(diff) <= radius && search_within(far, q, radius);
}

bool KdTree::any_within(const double* query, double radius) const {
  if (nodes_.empty() || radius < 0.0) return false;
  // Compared in the distance domain so the answer matches nearest(query) <= radius.
  return search_within(0, query, radius);
}

std::size_t area(const std::function<bool(std::span<const double>)>& inside, const Grid& grid) {
  std::vector<double> p(static_cast<std::size_t>(grid.dim()));
  std::size_t count = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.point(i, p.data());
    if (inside(p)) ++count;
  }
  return count;
}

}  // namespace mqr
