#include "marginlab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace marginlab::svg {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 20.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 55.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

const char* colour(std::size_t k) { return kPalette[k % (sizeof kPalette / sizeof kPalette[0])]; }

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf) == "-0.00" ? "0.00" : buf;
}

std::string tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", std::abs(v) < 1e-12 ? 0.0 : v);
    return buf;
}

struct Range {
    double lo = 0.0;
    double hi = 1.0;
};

Range padded(double lo, double hi) {
    if (!std::isfinite(lo) || !std::isfinite(hi)) return {};
    if (hi <= lo) return {lo - 0.5, hi + 0.5};
    const double pad = 0.05 * (hi - lo);
    return {lo - pad, hi + pad};
}

class Canvas {
public:
    Canvas(const std::string& title, Range x, Range y) : x_(x), y_(y) {
        out_ << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
             << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
             << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n"
             << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n"
             << "<text x=\"" << num(kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
             << "font-size=\"15\">" << escape(title) << "</text>\n";
    }

    double px(double x) const { return kLeft + (x - x_.lo) / (x_.hi - x_.lo) * (kWidth - kLeft - kRight); }
    double py(double y) const { return kHeight - kBottom - (y - y_.lo) / (y_.hi - y_.lo) * (kHeight - kTop - kBottom); }

    void axes(const std::string& x_label, const std::string& y_label, bool x_ticks = true) {
        const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
        out_ << "<g stroke=\"black\" stroke-width=\"1\">\n"
             << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x1) << "\" y2=\"" << num(y0) << "\"/>\n"
             << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x0) << "\" y2=\"" << num(y1) << "\"/>\n"
             << "</g>\n<g font-family=\"sans-serif\" font-size=\"11\">\n";
        for (int k = 0; k <= 4; ++k) {
            const double yv = y_.lo + (y_.hi - y_.lo) * k / 4.0;
            out_ << "<text x=\"" << num(x0 - 6) << "\" y=\"" << num(py(yv) + 4) << "\" text-anchor=\"end\">" << tick(yv)
                 << "</text>\n";
            if (x_ticks) {
                const double xv = x_.lo + (x_.hi - x_.lo) * k / 4.0;
                out_ << "<text x=\"" << num(px(xv)) << "\" y=\"" << num(y0 + 16) << "\" text-anchor=\"middle\">"
                     << tick(xv) << "</text>\n";
            }
        }
        out_ << "<text x=\"" << num((x0 + x1) / 2) << "\" y=\"" << num(kHeight - 12)
             << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n"
             << "<text x=\"16\" y=\"" << num((y0 + y1) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
             << num((y0 + y1) / 2) << ")\">" << escape(y_label) << "</text>\n</g>\n";
    }

    void legend(const std::vector<std::string>& labels) {
        if (labels.size() < 2) return;
        out_ << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
        for (std::size_t k = 0; k < labels.size(); ++k) {
            const double y = kTop + 6 + 14.0 * static_cast<double>(k);
            out_ << "<rect x=\"" << num(kWidth - kRight - 110) << "\" y=\"" << num(y - 8) << "\" width=\"10\" height=\"10\" fill=\""
                 << colour(k) << "\"/>\n<text x=\"" << num(kWidth - kRight - 95) << "\" y=\"" << num(y + 1) << "\">"
                 << escape(labels[k]) << "</text>\n";
        }
        out_ << "</g>\n";
    }

    std::ostringstream& body() { return out_; }

    std::string finish() {
        out_ << "</svg>\n";
        return out_.str();
    }

private:
    Range x_, y_;
    std::ostringstream out_;
};

}  // namespace

std::string escape(const std::string& text) {
    std::string out;
    for (char c : text) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string histogram(const std::string& title, const std::string& x_label, const metrics::Histogram& hist) {
    const int top = hist.counts.empty() ? 0 : *std::max_element(hist.counts.begin(), hist.counts.end());
    Range x = hist.hi > hist.lo ? Range{hist.lo, hist.hi} : Range{};
    Canvas c(title, x, Range{0.0, std::max(1.0, static_cast<double>(top))});
    const double width = hist.counts.empty() ? 0.0 : (x.hi - x.lo) / static_cast<double>(hist.counts.size());
    c.body() << "<g fill=\"" << colour(0) << "\" stroke=\"white\" stroke-width=\"0.5\">\n";
    for (std::size_t b = 0; b < hist.counts.size(); ++b) {
        if (hist.counts[b] == 0) continue;
        const double l = c.px(x.lo + width * static_cast<double>(b));
        const double r = c.px(x.lo + width * static_cast<double>(b + 1));
        const double t = c.py(hist.counts[b]);
        c.body() << "<rect x=\"" << num(l) << "\" y=\"" << num(t) << "\" width=\"" << num(r - l) << "\" height=\""
                 << num(c.py(0.0) - t) << "\"/>\n";
    }
    c.body() << "</g>\n";
    c.axes(x_label, "count");
    return c.finish();
}

std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series, bool markers) {
    double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
    for (const auto& s : series) {
        for (double v : s.x) xlo = std::min(xlo, v), xhi = std::max(xhi, v);
        for (double v : s.y) ylo = std::min(ylo, v), yhi = std::max(yhi, v);
    }
    Canvas c(title, padded(xlo, xhi), padded(ylo, yhi));
    std::vector<std::string> names;
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        names.push_back(s.label);
        const std::size_t n = std::min(s.x.size(), s.y.size());
        if (n == 0) continue;
        c.body() << "<polyline fill=\"none\" stroke=\"" << colour(k) << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < n; ++i) c.body() << (i ? " " : "") << num(c.px(s.x[i])) << ',' << num(c.py(s.y[i]));
        c.body() << "\"/>\n";
        if (markers) {
            c.body() << "<g fill=\"" << colour(k) << "\">\n";
            for (std::size_t i = 0; i < n; ++i) {
                c.body() << "<circle cx=\"" << num(c.px(s.x[i])) << "\" cy=\"" << num(c.py(s.y[i])) << "\" r=\"3\"/>\n";
            }
            c.body() << "</g>\n";
        }
    }
    c.axes(x_label, y_label);
    c.legend(names);
    return c.finish();
}

std::string bar_chart(const std::string& title, const std::string& y_label,
                      const std::vector<std::pair<std::string, double>>& bars) {
    double hi = 0.0;
    for (const auto& b : bars) hi = std::max(hi, b.second);
    Canvas c(title, Range{0.0, std::max<double>(1.0, static_cast<double>(bars.size()))}, Range{0.0, hi > 0.0 ? hi * 1.05 : 1.0});
    for (std::size_t k = 0; k < bars.size(); ++k) {
        const double l = c.px(static_cast<double>(k) + 0.15);
        const double r = c.px(static_cast<double>(k) + 0.85);
        const double t = c.py(std::max(0.0, bars[k].second));
        c.body() << "<rect x=\"" << num(l) << "\" y=\"" << num(t) << "\" width=\"" << num(r - l) << "\" height=\""
                 << num(c.py(0.0) - t) << "\" fill=\"" << colour(k) << "\"/>\n"
                 << "<text x=\"" << num((l + r) / 2) << "\" y=\"" << num(kHeight - kBottom + 16)
                 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << escape(bars[k].first)
                 << "</text>\n"
                 << "<text x=\"" << num((l + r) / 2) << "\" y=\"" << num(t - 4)
                 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << tick(bars[k].second)
                 << "</text>\n";
    }
    c.axes("", y_label, false);
    return c.finish();
}

std::string scatter(const std::string& title, const Matrix& points, const Labels& labels) {
    double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        xlo = std::min(xlo, points(i, 0)), xhi = std::max(xhi, points(i, 0));
        ylo = std::min(ylo, points(i, 1)), yhi = std::max(yhi, points(i, 1));
    }
    Canvas c(title, padded(xlo, xhi), padded(ylo, yhi));
    int top = -1;
    for (int y : labels) top = std::max(top, y);
    for (int y = 0; y <= top; ++y) {
        c.body() << "<g fill=\"" << colour(static_cast<std::size_t>(y)) << "\" fill-opacity=\"0.6\">\n";
        for (Eigen::Index i = 0; i < points.rows(); ++i) {
            if (labels[static_cast<std::size_t>(i)] != y) continue;
            c.body() << "<circle cx=\"" << num(c.px(points(i, 0))) << "\" cy=\"" << num(c.py(points(i, 1)))
                     << "\" r=\"2\"/>\n";
        }
        c.body() << "</g>\n";
    }
    std::vector<std::string> names;
    for (int y = 0; y <= top; ++y) names.push_back("class " + std::to_string(y + 1));
    c.axes("phi_1", "phi_2");
    c.legend(names);
    return c.finish();
}

}  // namespace marginlab::svg
