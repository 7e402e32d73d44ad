#include "genolm/charts.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "genolm/common.hpp"

namespace genolm {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
constexpr int kPaletteSize = 8;

constexpr double kMarginLeft = 64.0;
constexpr double kMarginRight = 160.0;  // room for the legend
constexpr double kMarginTop = 40.0;
constexpr double kMarginBottom = 56.0;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string escape_text(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Frame {
    double x0, y0, x1, y1;  // plot rectangle in SVG coordinates (y grows down)
    double xmin, xmax, ymin, ymax;
    bool log_x = false;

    double sx(double x) const {
        const double v = log_x ? std::log10(x) : x;
        const double lo = log_x ? std::log10(xmin) : xmin;
        const double hi = log_x ? std::log10(xmax) : xmax;
        const double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
        return x0 + t * (x1 - x0);
    }
    double sy(double y) const {
        const double t = ymax > ymin ? (y - ymin) / (ymax - ymin) : 0.5;
        return y1 - t * (y1 - y0);
    }
};

void open_svg(std::ostringstream& svg, int width, int height, const std::string& title) {
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    svg << "<text x=\"" << width / 2.0 << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"16\">" << escape_text(title) << "</text>\n";
}

void draw_axes(std::ostringstream& svg, const Frame& f, const std::string& x_label,
               const std::string& y_label, int width, int height) {
    svg << "<rect x=\"" << fmt(f.x0) << "\" y=\"" << fmt(f.y0) << "\" width=\""
        << fmt(f.x1 - f.x0) << "\" height=\"" << fmt(f.y1 - f.y0)
        << "\" fill=\"none\" stroke=\"#333\"/>\n";
    svg << "<text x=\"" << fmt((f.x0 + f.x1) / 2) << "\" y=\"" << height - 12
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
        << escape_text(x_label) << "</text>\n";
    svg << "<text x=\"16\" y=\"" << fmt((f.y0 + f.y1) / 2)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
        << "transform=\"rotate(-90 16 " << fmt((f.y0 + f.y1) / 2) << ")\">"
        << escape_text(y_label) << "</text>\n";
    (void)width;
}

void draw_y_ticks(std::ostringstream& svg, const Frame& f, int ticks) {
    for (int i = 0; i <= ticks; ++i) {
        const double v = f.ymin + (f.ymax - f.ymin) * i / ticks;
        const double y = f.sy(v);
        svg << "<line x1=\"" << fmt(f.x0 - 4) << "\" y1=\"" << fmt(y) << "\" x2=\"" << fmt(f.x1)
            << "\" y2=\"" << fmt(y) << "\" stroke=\"#ddd\"/>\n";
        svg << "<text x=\"" << fmt(f.x0 - 8) << "\" y=\"" << fmt(y + 4)
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(v)
            << "</text>\n";
    }
}

void draw_legend(std::ostringstream& svg, const Frame& f,
                 const std::vector<std::string>& names) {
    double y = f.y0 + 8;
    for (std::size_t s = 0; s < names.size(); ++s) {
        const char* color = kPalette[s % kPaletteSize];
        svg << "<rect x=\"" << fmt(f.x1 + 12) << "\" y=\"" << fmt(y) << "\" width=\"12\" "
            << "height=\"12\" fill=\"" << color << "\"/>\n";
        svg << "<text x=\"" << fmt(f.x1 + 30) << "\" y=\"" << fmt(y + 10)
            << "\" font-family=\"sans-serif\" font-size=\"12\">" << escape_text(names[s])
            << "</text>\n";
        y += 18;
    }
}

void resolve_y_range(const ChartOptions& options, double data_min, double data_max, Frame& f) {
    if (options.y_max > options.y_min) {
        f.ymin = options.y_min;
        f.ymax = options.y_max;
        return;
    }
    f.ymin = std::min(0.0, data_min);
    f.ymax = data_max <= f.ymin ? f.ymin + 1.0 : data_max;
    const double pad = 0.05 * (f.ymax - f.ymin);
    f.ymax += pad;
}

}  // namespace

std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<ChartSeries>& series,
                           const ChartOptions& options) {
    if (series.empty()) throw ConfigError("line chart needs at least one series");
    double xmin = 0.0, xmax = 0.0, ymin = 0.0, ymax = 0.0;
    bool first = true;
    for (const ChartSeries& s : series) {
        if (s.x.size() != s.y.size() || s.x.empty())
            throw ConfigError("chart series '" + s.name + "' has mismatched or empty points");
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (options.log_x && s.x[i] <= 0.0)
                throw ConfigError("log-scale chart requires positive x values");
            if (first || s.x[i] < xmin) xmin = s.x[i];
            if (first || s.x[i] > xmax) xmax = s.x[i];
            if (first || s.y[i] < ymin) ymin = s.y[i];
            if (first || s.y[i] > ymax) ymax = s.y[i];
            first = false;
        }
    }

    std::ostringstream svg;
    open_svg(svg, options.width, options.height, title);
    Frame f;
    f.x0 = kMarginLeft;
    f.y0 = kMarginTop;
    f.x1 = options.width - kMarginRight;
    f.y1 = options.height - kMarginBottom;
    f.xmin = xmin;
    f.xmax = xmax;
    f.log_x = options.log_x;
    resolve_y_range(options, ymin, ymax, f);

    draw_y_ticks(svg, f, options.y_ticks);
    // x ticks at the union of data points when few, else evenly spaced
    std::vector<double> xticks;
    for (const ChartSeries& s : series)
        for (double x : s.x) xticks.push_back(x);
    std::sort(xticks.begin(), xticks.end());
    xticks.erase(std::unique(xticks.begin(), xticks.end()), xticks.end());
    if (static_cast<int>(xticks.size()) > options.x_ticks + 1) {
        std::vector<double> even;
        for (int i = 0; i <= options.x_ticks; ++i) {
            if (options.log_x) {
                const double lo = std::log10(xmin), hi = std::log10(xmax);
                even.push_back(std::pow(10.0, lo + (hi - lo) * i / options.x_ticks));
            } else {
                even.push_back(xmin + (xmax - xmin) * i / options.x_ticks);
            }
        }
        xticks = std::move(even);
    }
    for (double x : xticks) {
        const double px = f.sx(x);
        svg << "<line x1=\"" << fmt(px) << "\" y1=\"" << fmt(f.y1) << "\" x2=\"" << fmt(px)
            << "\" y2=\"" << fmt(f.y1 + 4) << "\" stroke=\"#333\"/>\n";
        svg << "<text x=\"" << fmt(px) << "\" y=\"" << fmt(f.y1 + 18)
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(x)
            << "</text>\n";
    }
    draw_axes(svg, f, x_label, y_label, options.width, options.height);

    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kPalette[s % kPaletteSize];
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < series[s].x.size(); ++i) {
            if (i) svg << ' ';
            svg << fmt(f.sx(series[s].x[i])) << ',' << fmt(f.sy(series[s].y[i]));
        }
        svg << "\"/>\n";
        for (std::size_t i = 0; i < series[s].x.size(); ++i)
            svg << "<circle cx=\"" << fmt(f.sx(series[s].x[i])) << "\" cy=\""
                << fmt(f.sy(series[s].y[i])) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }

    std::vector<std::string> names;
    for (const ChartSeries& s : series) names.push_back(s.name);
    draw_legend(svg, f, names);
    svg << "</svg>\n";
    return svg.str();
}

std::string bar_chart_svg(const std::string& title, const std::string& y_label,
                          const std::vector<std::string>& categories,
                          const std::vector<std::string>& series_names,
                          const std::vector<std::vector<double>>& values,
                          const ChartOptions& options) {
    if (categories.empty() || series_names.empty())
        throw ConfigError("bar chart needs categories and series");
    if (values.size() != series_names.size())
        throw ConfigError("bar chart values/series mismatch");
    double vmin = 0.0, vmax = 0.0;
    for (const auto& row : values) {
        if (row.size() != categories.size())
            throw ConfigError("bar chart values/categories mismatch");
        for (double v : row) {
            vmin = std::min(vmin, v);
            vmax = std::max(vmax, v);
        }
    }

    std::ostringstream svg;
    open_svg(svg, options.width, options.height, title);
    Frame f;
    f.x0 = kMarginLeft;
    f.y0 = kMarginTop;
    f.x1 = options.width - kMarginRight;
    f.y1 = options.height - kMarginBottom;
    f.xmin = 0.0;
    f.xmax = 1.0;
    resolve_y_range(options, vmin, vmax, f);

    draw_y_ticks(svg, f, options.y_ticks);
    draw_axes(svg, f, "", y_label, options.width, options.height);

    const double group_width = (f.x1 - f.x0) / static_cast<double>(categories.size());
    const double bar_width = group_width * 0.8 / static_cast<double>(series_names.size());
    const double baseline = f.sy(std::max(0.0, f.ymin));
    for (std::size_t c = 0; c < categories.size(); ++c) {
        const double gx = f.x0 + group_width * (static_cast<double>(c) + 0.1);
        for (std::size_t s = 0; s < series_names.size(); ++s) {
            const double v = values[s][c];
            const double top = f.sy(v);
            const double y = std::min(top, baseline);
            const double h = std::fabs(baseline - top);
            svg << "<rect x=\"" << fmt(gx + bar_width * static_cast<double>(s)) << "\" y=\""
                << fmt(y) << "\" width=\"" << fmt(bar_width * 0.92) << "\" height=\"" << fmt(h)
                << "\" fill=\"" << kPalette[s % kPaletteSize] << "\"/>\n";
        }
        svg << "<text x=\"" << fmt(f.x0 + group_width * (static_cast<double>(c) + 0.5))
            << "\" y=\"" << fmt(f.y1 + 18)
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
            << escape_text(categories[c]) << "</text>\n";
    }
    draw_legend(svg, f, series_names);
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace genolm
