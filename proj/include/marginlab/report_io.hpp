#pragma once

// Serialisation of evaluation reports: JSON documents and flat CSV tables.
// Labels are written 1-based.

#include "marginlab/metrics.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace marginlab::report_io {

// Shortest text that round-trips the double ("%.17g").
std::string format_double(double v);

nlohmann::ordered_json to_json(const metrics::Report& report);
metrics::Report report_from_json(const nlohmann::json& j);

struct SeedReport {
    std::uint64_t seed = 0;
    metrics::Report report;
};

// One row per sample: seed,class,margin
void write_margins_csv(const std::vector<SeedReport>& reports, std::ostream& out);
// One row per sample: seed,class,margin,cdf
void write_cdf_csv(const std::vector<SeedReport>& reports, std::ostream& out);
// One row per sample: seed,class,distance
void write_intra_csv(const std::vector<SeedReport>& reports, std::ostream& out);

// Scalar summary statistics of a report, in a fixed order.
std::vector<std::pair<std::string, double>> scalar_metrics(const metrics::Report& report);

struct AggregateRow {
    std::string metric;
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation over seeds, 0 for one seed
    int n = 0;
};

// Mean and standard deviation over seeds of every scalar metric.
std::vector<AggregateRow> aggregate(const std::vector<metrics::Report>& reports);
void write_metrics_csv(const std::vector<AggregateRow>& rows, std::ostream& out);

}  // namespace marginlab::report_io
