#include "bdsde/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "bdsde/errors.hpp"

namespace bdsde {

namespace {
const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}
} // namespace

void svg_line_plot(const std::string& path, const std::string& title,
                   const std::vector<PlotSeries>& series, bool log_y) {
    const double w = 640, h = 480, ml = 70, mr = 20, mt = 40, mb = 50;
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.xs.size(); ++i) {
            double y = s.ys[i];
            if (log_y) {
                if (!(y > 0.0)) continue;
                y = std::log10(y);
            }
            xmin = std::min(xmin, s.xs[i]);
            xmax = std::max(xmax, s.xs[i]);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    }
    if (!(xmax > xmin)) { xmin -= 0.5; xmax += 0.5; }
    if (!(ymax > ymin)) { ymin -= 0.5; ymax += 0.5; }
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;

    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
    auto py = [&](double yv) {
        double y = log_y ? std::log10(std::max(yv, 1e-300)) : yv;
        return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb);
    };

    std::ofstream os(path);
    if (!os) throw InvalidArgument("cannot open " + path);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
       << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title
       << (log_y ? " (log scale)" : "") << "</text>\n";
    // axes
    os << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\""
       << h - mb << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
       << "\" stroke=\"black\"/>\n";
    // tick labels at the corners
    os << "<text x=\"" << ml << "\" y=\"" << h - mb + 18 << "\" font-size=\"11\">" << fmt(xmin)
       << "</text>\n";
    os << "<text x=\"" << w - mr << "\" y=\"" << h - mb + 18
       << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(xmax) << "</text>\n";
    os << "<text x=\"" << ml - 6 << "\" y=\"" << h - mb << "\" text-anchor=\"end\" font-size=\"11\">"
       << fmt(log_y ? std::pow(10.0, ymin + pad) : ymin + pad) << "</text>\n";
    os << "<text x=\"" << ml - 6 << "\" y=\"" << mt + 8 << "\" text-anchor=\"end\" font-size=\"11\">"
       << fmt(log_y ? std::pow(10.0, ymax - pad) : ymax - pad) << "</text>\n";

    std::size_t ci = 0;
    for (const auto& s : series) {
        const char* color = kColors[ci % 6];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.xs.size(); ++i) {
            if (log_y && !(s.ys[i] > 0.0)) continue;
            os << fmt(px(s.xs[i])) << "," << fmt(py(s.ys[i])) << " ";
        }
        os << "\"/>\n";
        os << "<text x=\"" << w - mr - 8 << "\" y=\"" << mt + 16 + 16 * static_cast<double>(ci)
           << "\" text-anchor=\"end\" font-size=\"12\" fill=\"" << color << "\">" << s.label
           << "</text>\n";
        ++ci;
    }
    os << "</svg>\n";
}

} // namespace bdsde
