#pragma once

#include <string>
#include <utility>
#include <vector>

namespace diffnet {

struct PlotSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::string comment;  // emitted as an XML comment, e.g. the config hash
};

/// Self-contained SVG line chart; every series becomes exactly one
/// <polyline>. Non-positive values are dropped on log axes.
std::string render_line_plot(const std::vector<PlotSeries>& series, const PlotOptions& options);

}  // namespace diffnet
