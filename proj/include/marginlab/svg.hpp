#pragma once

// Small self-contained SVG charts. Output depends only on the inputs, so the
// same data always renders to the same bytes.

#include "marginlab/linalg.hpp"
#include "marginlab/metrics.hpp"

#include <string>
#include <utility>
#include <vector>

namespace marginlab::svg {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

std::string histogram(const std::string& title, const std::string& x_label, const metrics::Histogram& hist);

// Polylines sharing one pair of axes. `markers` also draws the points.
std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series, bool markers = false);

std::string bar_chart(const std::string& title, const std::string& y_label,
                      const std::vector<std::pair<std::string, double>>& bars);

// Points coloured by label.
std::string scatter(const std::string& title, const Matrix& points, const Labels& labels);

// Escapes &, <, >, " for text and attribute content.
std::string escape(const std::string& text);

}  // namespace marginlab::svg
