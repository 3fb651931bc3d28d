#pragma once

#include <string>
#include <vector>

namespace csbm {

struct SvgSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct SvgChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<SvgSeries> series;
  // Optional vertical marker lines (data coordinates).
  std::vector<double> x_markers;
};

// Self-contained line chart; output depends only on the input values.
std::string render_svg(const SvgChart& chart);

}  // namespace csbm
