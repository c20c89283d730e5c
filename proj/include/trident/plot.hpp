#pragma once

// Static SVG emission for the report figures: score histograms and
// accuracy-versus-fraction curves.

#include "trident/eval.hpp"

#include <string>
#include <vector>

namespace trident {

void write_histogram_svg(const std::string& path, const Histogram& hist,
                         const std::string& title, const std::string& x_label);

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Line chart with one polyline per series; log-scaled x when requested
/// (fraction sweeps span decades).
void write_line_chart_svg(const std::string& path, const std::vector<PlotSeries>& series,
                          const std::string& title, const std::string& x_label,
                          const std::string& y_label, bool log_x);

}  // namespace trident
