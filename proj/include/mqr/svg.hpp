#pragma once

// Static SVG 1.1 figures: 2-d region scatter plots and grouped bar charts.

#include "mqr/regions.hpp"

#include <string>
#include <vector>

namespace mqr {

// Conditional samples as circles of class "sample", region points as
// squares of class "region". Throws UnsupportedPlot unless both are 2-d.
std::string region_scatter_svg(const PointMatrix& samples, const PointMatrix& region,
                               const std::string& title);

struct BarValue {
  std::string group;   // x-axis category, e.g. "d=3"
  std::string series;  // bar within the group, e.g. a method
  double value = 0.0;
  double error = 0.0;
};

// Grouped bars with error whiskers; groups and series keep first-seen order.
std::string grouped_bars_svg(const std::vector<BarValue>& values, const std::string& title,
                             const std::string& y_label);

}  // namespace mqr
