#include "mqr/svg.hpp"

#include "mqr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mqr {

namespace {

constexpr double kWidth = 640, kHeight = 480, kMargin = 60;
const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void header(std::ostringstream& o, const std::string& title) {
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << kWidth << "\" height=\""
    << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n"
    << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n"
    << "<text x=\"" << kWidth / 2 << "\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
    << escape(title) << "</text>\n";
}

}  // namespace

std::string region_scatter_svg(const PointMatrix& samples, const PointMatrix& region, const std::string& title) {
  if ((samples.rows() > 0 && samples.cols() != 2) || (region.rows() > 0 && region.cols() != 2))
    throw UnsupportedPlot("region scatter plots need 2-d responses");
  double lo[2] = {1e300, 1e300}, hi[2] = {-1e300, -1e300};
  for (const PointMatrix* m : {&samples, &region})
    for (Eigen::Index i = 0; i < m->rows(); ++i)
      for (int j = 0; j < 2; ++j) {
        lo[j] = std::min(lo[j], (*m)(i, j));
        hi[j] = std::max(hi[j], (*m)(i, j));
      }
  for (int j = 0; j < 2; ++j) {
    if (!(lo[j] < hi[j])) {
      lo[j] = (lo[j] < 1e300 ? lo[j] : 0.0) - 1.0;
      hi[j] = lo[j] + 2.0;
    }
    const double pad = 0.05 * (hi[j] - lo[j]);
    lo[j] -= pad;
    hi[j] += pad;
  }
  auto sx = [&](double v) { return kMargin + (v - lo[0]) / (hi[0] - lo[0]) * (kWidth - 2 * kMargin); };
  auto sy = [&](double v) { return kHeight - kMargin - (v - lo[1]) / (hi[1] - lo[1]) * (kHeight - 2 * kMargin); };

  std::ostringstream o;
  o.precision(6);
  header(o, title);
  o << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kWidth - 2 * kMargin << "\" height=\""
    << kHeight - 2 * kMargin << "\" fill=\"none\" stroke=\"black\"/>\n";
  o << "<text x=\"" << kMargin << "\" y=\"" << kHeight - kMargin + 20 << "\" font-family=\"sans-serif\" font-size=\"11\">"
    << lo[0] << "</text>\n<text x=\"" << kWidth - kMargin << "\" y=\"" << kHeight - kMargin + 20
    << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << hi[0] << "</text>\n";
  o << "<g id=\"region\" fill=\"#d62728\" fill-opacity=\"0.35\">\n";
  for (Eigen::Index i = 0; i < region.rows(); ++i)
    o << "<rect class=\"region\" x=\"" << sx(region(i, 0)) - 2 << "\" y=\"" << sy(region(i, 1)) - 2
      << "\" width=\"4\" height=\"4\"/>\n";
  o << "</g>\n<g id=\"samples\" fill=\"#1f77b4\">\n";
  for (Eigen::Index i = 0; i < samples.rows(); ++i)
    o << "<circle class=\"sample\" cx=\"" << sx(samples(i, 0)) << "\" cy=\"" << sy(samples(i, 1)) << "\" r=\"1.5\"/>\n";
  o << "</g>\n</svg>\n";
  return o.str();
}

std::string grouped_bars_svg(const std::vector<BarValue>& values, const std::string& title, const std::string& y_label) {
  std::vector<std::string> groups, series;
  for (const auto& v : values) {
    if (std::find(groups.begin(), groups.end(), v.group) == groups.end()) groups.push_back(v.group);
    if (std::find(series.begin(), series.end(), v.series) == series.end()) series.push_back(v.series);
  }
  double top = 0.0;
  for (const auto& v : values) top = std::max(top, v.value + v.error);
  if (!(top > 0.0)) top = 1.0;
  top *= 1.1;

  std::ostringstream o;
  o.precision(6);
  header(o, title);
  const double plot_w = kWidth - 2 * kMargin, plot_h = kHeight - 2 * kMargin;
  o << "<line x1=\"" << kMargin << "\" y1=\"" << kHeight - kMargin << "\" x2=\"" << kWidth - kMargin << "\" y2=\""
    << kHeight - kMargin << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\"" << kMargin << "\" y2=\"" << kHeight - kMargin
    << "\" stroke=\"black\"/>\n"
    << "<text x=\"16\" y=\"" << kHeight / 2 << "\" transform=\"rotate(-90 16 " << kHeight / 2
    << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << escape(y_label) << "</text>\n";
  const double group_w = groups.empty() ? plot_w : plot_w / static_cast<double>(groups.size());
  const double bar_w = series.empty() ? 0.0 : 0.8 * group_w / static_cast<double>(series.size());
  auto y_of = [&](double v) { return kHeight - kMargin - v / top * plot_h; };
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double gx = kMargin + static_cast<double>(g) * group_w;
    o << "<text x=\"" << gx + group_w / 2 << "\" y=\"" << kHeight - kMargin + 18
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << escape(groups[g]) << "</text>\n";
    for (const auto& v : values) {
      if (v.group != groups[g]) continue;
      const auto s = static_cast<std::size_t>(std::find(series.begin(), series.end(), v.series) - series.begin());
      const double x = gx + 0.1 * group_w + static_cast<double>(s) * bar_w;
      o << "<rect class=\"bar\" x=\"" << x << "\" y=\"" << y_of(v.value) << "\" width=\"" << bar_w * 0.9
        << "\" height=\"" << y_of(0) - y_of(v.value) << "\" fill=\"" << kPalette[s % 6] << "\"/>\n";
      if (v.error > 0.0)
        o << "<line class=\"whisker\" x1=\"" << x + bar_w * 0.45 << "\" y1=\"" << y_of(v.value - v.error) << "\" x2=\""
          << x + bar_w * 0.45 << "\" y2=\"" << y_of(v.value + v.error) << "\" stroke=\"black\"/>\n";
    }
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double ly = kMargin + 14.0 * static_cast<double>(s);
    o << "<rect x=\"" << kWidth - kMargin - 110 << "\" y=\"" << ly - 9 << "\" width=\"10\" height=\"10\" fill=\""
      << kPalette[s % 6] << "\"/>\n<text x=\"" << kWidth - kMargin - 95 << "\" y=\"" << ly
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << escape(series[s]) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace mqr
