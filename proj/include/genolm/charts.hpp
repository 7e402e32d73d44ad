#ifndef GENOLM_CHARTS_HPP
#define GENOLM_CHARTS_HPP

#include <string>
#include <vector>

namespace genolm {

/// One named curve for a line chart; x and y must have equal length.
struct ChartSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

struct ChartOptions {
    int width = 720;
    int height = 440;
    bool log_x = false;      // decimal log scale on x (fragment-length sweeps)
    double y_min = 0.0;      // y range is [y_min, y_max] unless equal, then auto
    double y_max = 0.0;
    int x_ticks = 6;
    int y_ticks = 5;
};

/// Static SVG line chart with axes, ticks, legend, and one polyline plus
/// point markers per series.
std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<ChartSeries>& series,
                           const ChartOptions& options = {});

/// Static SVG grouped bar chart: one bar group per category, one bar per
/// series inside each group. values[s][c] is series s at category c.
std::string bar_chart_svg(const std::string& title, const std::string& y_label,
                          const std::vector<std::string>& categories,
                          const std::vector<std::string>& series_names,
                          const std::vector<std::vector<double>>& values,
                          const ChartOptions& options = {});

}  // namespace genolm

#endif
