#pragma once

#include <string>
#include <vector>

namespace bdsde {

struct PlotSeries {
    std::string label;
    std::vector<double> xs;
    std::vector<double> ys;
};

/// Deterministic standalone SVG line plot (no timestamps, fixed layout).
void svg_line_plot(const std::string& path, const std::string& title,
                   const std::vector<PlotSeries>& series, bool log_y = false);

} // namespace bdsde
