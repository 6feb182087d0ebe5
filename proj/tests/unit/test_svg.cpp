#include "mqr/errors.hpp"
#include "mqr/svg.hpp"

#include <doctest.h>

using namespace mqr;

namespace {

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("region scatter") {
  PointMatrix samples(5, 2), region(3, 2);
  samples << 0, 0, 1, 1, 2, 0, 0.5, 0.2, 1, 3;
  region << 0, 1, 1, 0, 0.5, 0.5;
  const std::string svg = region_scatter_svg(samples, region, "a < b");
  CHECK(svg.rfind("<?xml", 0) == 0);
  CHECK(count(svg, "class=\"sample\"") == 5);
  CHECK(count(svg, "class=\"region\"") == 3);
  CHECK(svg.find("a &lt; b") != std::string::npos);
  CHECK(svg == region_scatter_svg(samples, region, "a < b"));

  const std::string empty = region_scatter_svg(samples, PointMatrix(0, 2), "empty");
  CHECK(count(empty, "class=\"region\"") == 0);
  CHECK(count(empty, "class=\"sample\"") == 5);
  CHECK_THROWS_AS(region_scatter_svg(PointMatrix::Zero(3, 3), region, "3d"), UnsupportedPlot);
}

TEST_CASE("grouped bars") {
  std::vector<BarValue> v;
  for (int d = 2; d <= 4; ++d)
    for (const char* m : {"stdqr", "npdqr", "naive"}) v.push_back({"d=" + std::to_string(d), m, 10.0 * d, 1.0});
  const std::string svg = grouped_bars_svg(v, "area", "cells");
  CHECK(count(svg, "class=\"bar\"") == 9);
  CHECK(count(svg, "class=\"whisker\"") == 9);
  CHECK(svg.find(">d=3<") != std::string::npos);
}
