#include "mqr/data.hpp"

#include "mqr/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

namespace mqr {

const char* to_string(Setting s) { return s == Setting::Linear ? "linear" : "nonlinear"; }

Setting setting_from_string(const std::string& s) {
  if (s == "linear") return Setting::Linear;
  if (s == "nonlinear") return Setting::Nonlinear;
  throw SpecError("unknown synthetic setting '" + s + "' (expected linear or nonlinear)");
}

std::size_t default_synthetic_size(int p) {
  if (p < 1) throw InvalidArgument("default_synthetic_size: p must be >= 1");
  return 20000;
}

Vector synthetic_response(Setting setting, int d, const Vector& beta, const SyntheticDraw& draw) {
  if (d < 2 || d > 4) throw InvalidArgument("synthetic_response: d must be 2, 3 or 4");
  if (beta.size() != draw.x.size()) throw InvalidArgument("synthetic_response: beta/x length mismatch");
  const double bx = beta.dot(draw.x);
  const double t = draw.z / bx;
  Vector y(d);
  y[0] = t + draw.r * std::cos(draw.phi);
  y[1] = 0.5 * (-std::cos(draw.z) + 1.0) + draw.r * std::sin(draw.phi);
  if (setting == Setting::Nonlinear) y[1] += std::sin(draw.x.mean());
  if (d >= 3) y[2] = std::sin(t);
  if (d == 4) y[3] = std::cos(std::sin(t)) + draw.r * std::cos(draw.phi) * std::sin(draw.phi);
  return y;
}

namespace {

Vector draw_beta(int p, Rng& rng) {
  Vector beta(p);
  for (int j = 0; j < p; ++j) beta[j] = rng.uniform();
  return beta / beta.lpNorm<1>();
}

}  // namespace

Vector synthetic_beta(int p, std::uint64_t seed) {
  if (p < 1) throw InvalidArgument("synthetic_beta: p must be >= 1");
  Rng rng(seed);
  return draw_beta(p, rng);
}

Matrix sample_conditional(Setting setting, int d, const Vector& beta, const Vector& x, std::size_t n,
                          std::uint64_t seed) {
  if (x.size() != beta.size()) throw InvalidArgument("sample_conditional: x and beta differ in length");
  Rng rng(seed);
  Matrix out(static_cast<Eigen::Index>(n), d);
  SyntheticDraw draw;
  draw.x = x;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    draw.z = rng.uniform(-std::numbers::pi, std::numbers::pi);
    draw.phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    draw.r = rng.uniform(-0.1, 0.1);
    out.row(i) = synthetic_response(setting, d, beta, draw).transpose();
  }
  return out;
}

Dataset gen_synthetic(Setting setting, int d, int p, std::size_t n, std::uint64_t seed) {
  if (d < 2 || d > 4) throw InvalidArgument("gen_synthetic: d must be 2, 3 or 4");
  if (p < 1) throw InvalidArgument("gen_synthetic: p must be >= 1");
  if (n < 1) throw InvalidArgument("gen_synthetic: n must be >= 1");
  Rng rng(seed);
  const Vector beta = draw_beta(p, rng);
  Dataset data;
  data.x.resize(static_cast<Eigen::Index>(n), p);
  data.y.resize(static_cast<Eigen::Index>(n), d);
  SyntheticDraw draw;
  draw.x.resize(p);
  for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
    draw.z = rng.uniform(-std::numbers::pi, std::numbers::pi);
    draw.phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    draw.r = rng.uniform(-0.1, 0.1);
    for (int j = 0; j < p; ++j) draw.x[j] = rng.uniform(0.8, 3.2);
    data.x.row(i) = draw.x.transpose();
    data.y.row(i) = synthetic_response(setting, d, beta, draw).transpose();
  }
  for (int j = 0; j < p; ++j) data.x_names.push_back("x" + std::to_string(j));
  for (int j = 0; j < d; ++j) data.y_names.push_back("y" + std::to_string(j));
  return data;
}

std::array<std::size_t, 4> split_sizes(std::size_t n) {
  // Fractions in thousandths keep the arithmetic exact.
  constexpr std::array<std::size_t, 4> parts = {384, 256, 160, 200};
  std::array<std::size_t, 4> sizes{};
  std::array<std::size_t, 4> rem{};
  std::size_t used = 0;
  for (std::size_t k = 0; k < 4; ++k) {
    sizes[k] = n * parts[k] / 1000;
    rem[k] = n * parts[k] % 1000;
    used += sizes[k];
  }
  std::array<std::size_t, 4> order = {0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; used < n; ++k, ++used) ++sizes[order[k % 4]];
  return sizes;
}

SplitIndices split(std::size_t n, std::uint64_t seed) {
  if (n < 10) throw InvalidArgument("split: need at least 10 rows");
  const auto sizes = split_sizes(n);
  Rng rng(seed);
  const auto perm = rng.permutation(n);
  SplitIndices s;
  s.seed = seed;
  std::vector<std::size_t>* parts[4] = {&s.train, &s.calibration, &s.validation, &s.test};
  std::size_t at = 0;
  for (std::size_t k = 0; k < 4; ++k) {
    parts[k]->assign(perm.begin() + static_cast<std::ptrdiff_t>(at),
                     perm.begin() + static_cast<std::ptrdiff_t>(at + sizes[k]));
    at += sizes[k];
  }
  return s;
}

Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= static_cast<std::size_t>(m.rows())) throw InvalidArgument("take_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

Matrix ColumnStats::apply(const Matrix& m) const {
  if (m.cols() != mean.size()) throw InvalidArgument("ColumnStats::apply: column count mismatch");
  return ((m.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array()).matrix();
}

Matrix ColumnStats::invert(const Matrix& m) const {
  if (m.cols() != mean.size()) throw InvalidArgument("ColumnStats::invert: column count mismatch");
  return ((m.array().rowwise() * std.transpose().array()).rowwise() + mean.transpose().array()).matrix();
}

ColumnStats fit_column_stats(const Matrix& m, const std::vector<std::string>& names) {
  if (m.rows() < 2) throw InvalidArgument("fit_column_stats: need at least two rows");
  ColumnStats s;
  s.mean = m.colwise().mean().transpose();
  s.std.resize(m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const double var = (m.col(j).array() - s.mean[j]).square().mean();
    if (!(var > 0.0)) {
      const std::string name = static_cast<std::size_t>(j) < names.size()
                                   ? names[static_cast<std::size_t>(j)]
                                   : "#" + std::to_string(j);
      throw DomainError("zero-variance column '" + name + "' on the training rows");
    }
    s.std[j] = std::sqrt(var);
  }
  return s;
}

NormalizedDataset zscore_fit_apply(const Dataset& data, const std::vector<std::size_t>& train_rows) {
  NormalizedDataset out;
  out.x_stats = fit_column_stats(take_rows(data.x, train_rows), data.x_names);
  out.y_stats = fit_column_stats(take_rows(data.y, train_rows), data.y_names);
  out.data.x = out.x_stats.apply(data.x);
  out.data.y = out.y_stats.apply(data.y);
  out.data.x_names = data.x_names;
  out.data.y_names = data.y_names;
  return out;
}

void jacobi_eigen(const Matrix& sym, Vector& values, Matrix& vectors) {
  if (sym.rows() != sym.cols()) throw InvalidArgument("jacobi_eigen: matrix must be square");
  const Eigen::Index n = sym.rows();
  Matrix a = sym;
  Matrix v = Matrix::Identity(n, n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off <= 1e-30 * std::max(1.0, a.squaredNorm())) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return a(x, x) > a(y, y); });
  values.resize(n);
  vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index src = order[static_cast<std::size_t>(k)];
    values[k] = a(src, src);
    Vector col = v.col(src);
    // Fix the sign: largest-magnitude component positive.
    Eigen::Index big = 0;
    col.cwiseAbs().maxCoeff(&big);
    if (col[big] < 0) col = -col;
    vectors.col(k) = col;
  }
}

Matrix Pca::project(const Matrix& x) const {
  if (x.cols() != mean.size()) throw InvalidArgument("Pca::project: column count mismatch");
  return (x.rowwise() - mean.transpose()) * basis;
}

Pca pca_fit(const Matrix& x, int k) {
  if (k < 1 || k > std::min<Eigen::Index>(x.rows(), x.cols()))
    throw InvalidArgument("pca_fit: k must lie in [1, min(n, p)]");
  Pca pca;
  pca.mean = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - pca.mean.transpose();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(x.rows());
  Vector values;
  Matrix vectors;
  jacobi_eigen(cov, values, vectors);
  pca.basis = vectors.leftCols(k);
  pca.explained_variance = values.head(k).cwiseMax(0.0);
  return pca;
}

Matrix pca_reduce(const Matrix& x, int k, Pca* fitted) {
  Pca pca = pca_fit(x, k);
  Matrix out = pca.project(x);
  if (fitted) *fitted = std::move(pca);
  return out;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

Dataset read_csv(std::istream& in, const std::vector<std::string>& response_columns) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, 0, "csv: missing header row");
  std::vector<std::string> header = split_line(line);
  for (auto& h : header) h = trim(h);
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0] = header[0].substr(3);

  std::vector<int> role(header.size(), -1);  // -1 feature, else response slot
  for (std::size_t r = 0; r < response_columns.size(); ++r) {
    const auto it = std::find(header.begin(), header.end(), response_columns[r]);
    if (it == header.end())
      throw ParseError(1, 0, "csv: response column '" + response_columns[r] + "' not in header");
    role[static_cast<std::size_t>(it - header.begin())] = static_cast<int>(r);
  }
  Dataset data;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (role[c] < 0) data.x_names.push_back(header[c]);
  data.y_names = response_columns;

  std::vector<double> xs, ys(0);
  std::vector<double> yrow(response_columns.size());
  std::size_t rows = 0, row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size())
      throw ParseError(row_no, 0, "csv: row " + std::to_string(row_no) + " has " +
                                      std::to_string(cells.size()) + " cells, expected " +
                                      std::to_string(header.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string cell = trim(cells[c]);
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size())
        throw ParseError(row_no, c + 1, "csv: non-numeric cell '" + cell + "' at row " +
                                            std::to_string(row_no) + ", column " +
                                            std::to_string(c + 1) + " (" + header[c] + ")");
      if (role[c] < 0)
        xs.push_back(v);
      else
        yrow[static_cast<std::size_t>(role[c])] = v;
    }
    ys.insert(ys.end(), yrow.begin(), yrow.end());
    ++rows;
  }
  const auto p = static_cast<Eigen::Index>(data.x_names.size());
  const auto d = static_cast<Eigen::Index>(response_columns.size());
  const auto n = static_cast<Eigen::Index>(rows);
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  data.x = Eigen::Map<const RowMajor>(xs.data(), n, p);
  data.y = Eigen::Map<const RowMajor>(ys.data(), n, d);
  return data;
}

Dataset load_csv(const std::string& path, const std::vector<std::string>& response_columns) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return read_csv(in, response_columns);
}

void write_csv(std::ostream& out, const Dataset& data) {
  if (data.x.rows() != data.y.rows()) throw InvalidArgument("write_csv: row counts differ");
  auto name = [](const std::vector<std::string>& names, Eigen::Index j, const char* prefix) {
    return static_cast<std::size_t>(j) < names.size() ? names[static_cast<std::size_t>(j)]
                                                      : prefix + std::to_string(j);
  };
  bool first = true;
  for (Eigen::Index j = 0; j < data.x.cols(); ++j, first = false)
    out << (first ? "" : ",") << name(data.x_names, j, "x");
  for (Eigen::Index j = 0; j < data.y.cols(); ++j, first = false)
    out << (first ? "" : ",") << name(data.y_names, j, "y");
  out << '\n';
  char buf[64];
  for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
    first = true;
    auto emit = [&](double v) {
      const auto res = std::to_chars(buf, buf + sizeof buf, v);
      if (!first) out << ',';
      out.write(buf, res.ptr - buf);
      first = false;
    };
    for (Eigen::Index j = 0; j < data.x.cols(); ++j) emit(data.x(i, j));
    for (Eigen::Index j = 0; j < data.y.cols(); ++j) emit(data.y(i, j));
    out << '\n';
  }
}

void save_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_csv(out, data);
}

}  // namespace mqr
