#pragma once

// Minimal SVG line plots for the command-line tool.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace ffeq::svg {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::string color = "#1f77b4";
    double width = 1.5;
    double opacity = 1.0;
};

struct Plot {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series;
    bool legend = true;
    double y_floor = -std::numeric_limits<double>::infinity();  // clip very low values (dB plots)
};

namespace detail {

inline std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

inline std::string escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        default: out += c;
        }
    }
    return out;
}

// Roughly five round-numbered ticks spanning [lo, hi].
inline std::vector<double> ticks(double lo, double hi)
{
    const double span = hi - lo;
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0})
        if (raw <= m * mag) {
            step = m * mag;
            break;
        }
    std::vector<double> out;
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step)
        out.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
    return out;
}

} // namespace detail

inline std::string render(const Plot& plot, int width = 800, int height = 480)
{
    const double ml = 70, mr = 20, mt = 40, mb = 55;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : plot.series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            const double y = std::max(s.y[i], plot.y_floor);
            if (!std::isfinite(s.x[i]) || !std::isfinite(y))
                continue;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
        }
    if (!(x1 > x0)) {
        x0 = std::isfinite(x0) ? x0 - 1 : 0;
        x1 = x0 + 2;
    }
    if (!(y1 > y0)) {
        y0 = std::isfinite(y0) ? y0 - 1 : 0;
        y1 = y0 + 2;
    }
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    const double pw = width - ml - mr, ph = height - mt - mb;
    auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return mt + (1.0 - (std::max(y, plot.y_floor) - y0) / (y1 - y0)) * ph; };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
       << detail::escape(plot.title) << "</text>\n";
    for (double t : detail::ticks(x0, x1)) {
        os << "<line x1=\"" << px(t) << "\" y1=\"" << mt << "\" x2=\"" << px(t) << "\" y2=\"" << mt + ph
           << "\" stroke=\"#ddd\"/>\n";
        os << "<text x=\"" << px(t) << "\" y=\"" << mt + ph + 16 << "\" text-anchor=\"middle\">" << detail::num(t)
           << "</text>\n";
    }
    for (double t : detail::ticks(y0, y1)) {
        os << "<line x1=\"" << ml << "\" y1=\"" << py(t) << "\" x2=\"" << ml + pw << "\" y2=\"" << py(t)
           << "\" stroke=\"#ddd\"/>\n";
        os << "<text x=\"" << ml - 6 << "\" y=\"" << py(t) + 4 << "\" text-anchor=\"end\">" << detail::num(t)
           << "</text>\n";
    }
    os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 12 << "\" text-anchor=\"middle\">"
       << detail::escape(plot.x_label) << "</text>\n";
    os << "<text transform=\"translate(16," << mt + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
       << detail::escape(plot.y_label) << "</text>\n";
    for (const auto& s : plot.series) {
        os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"" << s.width
           << "\" stroke-opacity=\"" << s.opacity << "\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i)
            if (std::isfinite(s.x[i]) && std::isfinite(std::max(s.y[i], plot.y_floor)))
                os << detail::num(px(s.x[i])) << ',' << detail::num(py(s.y[i])) << ' ';
        os << "\"/>\n";
    }
    if (plot.legend) {
        double ly = mt + 14;
        for (const auto& s : plot.series) {
            if (s.label.empty())
                continue;
            os << "<line x1=\"" << ml + pw - 170 << "\" y1=\"" << ly - 4 << "\" x2=\"" << ml + pw - 145 << "\" y2=\""
               << ly - 4 << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
            os << "<text x=\"" << ml + pw - 140 << "\" y=\"" << ly << "\">" << detail::escape(s.label) << "</text>\n";
            ly += 16;
        }
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace ffeq::svg
