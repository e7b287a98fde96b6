#include "marginlab/report_io.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

namespace marginlab::report_io {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace {

nlohmann::ordered_json histogram_json(const metrics::Histogram& h) {
    return {{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}};
}

metrics::Histogram histogram_from(const nlohmann::json& j) {
    metrics::Histogram h;
    h.lo = j.at("lo").get<double>();
    h.hi = j.at("hi").get<double>();
    h.counts = j.at("counts").get<std::vector<int>>();
    return h;
}

data::Bucket bucket_from(const std::string& s) {
    if (s == "Head") return data::Bucket::head;
    if (s == "Torso") return data::Bucket::torso;
    if (s == "Tail") return data::Bucket::tail;
    throw std::invalid_argument("unknown bucket '" + s + "'");
}

}  // namespace

nlohmann::ordered_json to_json(const metrics::Report& r) {
    nlohmann::ordered_json j;
    j["num_classes"] = r.num_classes;
    j["accuracy"] = r.accuracy;
    j["balanced_accuracy"] = r.balanced_accuracy;
    j["balanced_error"] = r.balanced_error;
    j["auc"] = r.auc;
    j["mean_trace_variance"] = r.mean_trace_variance;
    auto buckets = nlohmann::ordered_json::object();
    for (const auto& [b, acc] : r.bucket_accuracy) buckets[data::to_string(b)] = acc;
    j["bucket_accuracy"] = buckets;
    auto classes = nlohmann::ordered_json::array();
    for (const auto& c : r.classes) {
        nlohmann::ordered_json cj;
        cj["label"] = c.label + 1;
        cj["train_count"] = c.train_count;
        cj["bucket"] = data::to_string(c.bucket);
        cj["accuracy"] = c.accuracy;
        cj["trace_variance"] = c.trace_variance;
        cj["margin_variance"] = metrics::sample_variance(c.margins);
        cj["margin_histogram"] = histogram_json(c.margin_histogram);
        cj["intra_histogram"] = histogram_json(c.intra_histogram);
        cj["margins"] = c.margins;
        cj["intra_distances"] = c.intra_distances;
        classes.push_back(std::move(cj));
    }
    j["classes"] = classes;
    if (r.embedding_sample.size() > 0) {
        auto pts = nlohmann::ordered_json::array();
        for (Eigen::Index i = 0; i < r.embedding_sample.rows(); ++i) {
            pts.push_back({r.embedding_sample(i, 0), r.embedding_sample(i, 1), r.embedding_labels[static_cast<std::size_t>(i)] + 1});
        }
        j["embedding_sample"] = pts;
    }
    return j;
}

metrics::Report report_from_json(const nlohmann::json& j) {
    metrics::Report r;
    r.num_classes = j.at("num_classes").get<int>();
    r.accuracy = j.at("accuracy").get<double>();
    r.balanced_accuracy = j.at("balanced_accuracy").get<double>();
    r.balanced_error = j.at("balanced_error").get<double>();
    r.auc = j.at("auc").get<double>();
    r.mean_trace_variance = j.at("mean_trace_variance").get<double>();
    for (auto it = j.at("bucket_accuracy").begin(); it != j.at("bucket_accuracy").end(); ++it) {
        r.bucket_accuracy[bucket_from(it.key())] = it.value().get<double>();
    }
    for (const auto& cj : j.at("classes")) {
        metrics::ClassReport c;
        c.label = cj.at("label").get<int>() - 1;
        c.train_count = cj.at("train_count").get<int>();
        c.bucket = bucket_from(cj.at("bucket").get<std::string>());
        c.accuracy = cj.at("accuracy").get<double>();
        c.trace_variance = cj.at("trace_variance").get<double>();
        c.margin_histogram = histogram_from(cj.at("margin_histogram"));
        c.intra_histogram = histogram_from(cj.at("intra_histogram"));
        c.margins = cj.at("margins").get<std::vector<double>>();
        c.intra_distances = cj.at("intra_distances").get<std::vector<double>>();
        r.classes.push_back(std::move(c));
    }
    if (j.contains("embedding_sample")) {
        const auto& pts = j.at("embedding_sample");
        r.embedding_sample.resize(static_cast<Eigen::Index>(pts.size()), 2);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            r.embedding_sample(static_cast<Eigen::Index>(i), 0) = pts[i].at(0).get<double>();
            r.embedding_sample(static_cast<Eigen::Index>(i), 1) = pts[i].at(1).get<double>();
            r.embedding_labels.push_back(pts[i].at(2).get<int>() - 1);
        }
    }
    return r;
}

void write_margins_csv(const std::vector<SeedReport>& reports, std::ostream& out) {
    out << "seed,class,margin\n";
    for (const auto& s : reports) {
        for (const auto& c : s.report.classes) {
            for (double m : c.margins) out << s.seed << ',' << c.label + 1 << ',' << format_double(m) << '\n';
        }
    }
}

void write_cdf_csv(const std::vector<SeedReport>& reports, std::ostream& out) {
    out << "seed,class,margin,cdf\n";
    for (const auto& s : reports) {
        for (const auto& c : s.report.classes) {
            const auto cdf = metrics::empirical_cdf(c.margins);
            for (std::size_t i = 0; i < cdf.x.size(); ++i) {
                out << s.seed << ',' << c.label + 1 << ',' << format_double(cdf.x[i]) << ','
                    << format_double(cdf.level[i]) << '\n';
            }
        }
    }
}

void write_intra_csv(const std::vector<SeedReport>& reports, std::ostream& out) {
    out << "seed,class,distance\n";
    for (const auto& s : reports) {
        for (const auto& c : s.report.classes) {
            for (double d : c.intra_distances) out << s.seed << ',' << c.label + 1 << ',' << format_double(d) << '\n';
        }
    }
}

std::vector<std::pair<std::string, double>> scalar_metrics(const metrics::Report& r) {
    std::vector<std::pair<std::string, double>> out{
        {"accuracy", r.accuracy},
        {"balanced_accuracy", r.balanced_accuracy},
        {"balanced_error", r.balanced_error},
        {"auc", r.auc},
        {"mean_trace_variance", r.mean_trace_variance},
    };
    for (const auto& [b, acc] : r.bucket_accuracy) out.emplace_back("bucket_" + data::to_string(b) + "_accuracy", acc);
    for (const auto& c : r.classes) {
        const std::string p = "class_" + std::to_string(c.label + 1) + "_";
        out.emplace_back(p + "accuracy", c.accuracy);
        out.emplace_back(p + "trace_variance", c.trace_variance);
        out.emplace_back(p + "margin_variance", metrics::sample_variance(c.margins));
    }
    return out;
}

std::vector<AggregateRow> aggregate(const std::vector<metrics::Report>& reports) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<double>> values;
    for (const auto& r : reports) {
        for (const auto& [name, v] : scalar_metrics(r)) {
            auto& slot = values[name];
            if (slot.empty()) order.push_back(name);
            slot.push_back(v);
        }
    }
    std::vector<AggregateRow> rows;
    for (const auto& name : order) {
        const auto& v = values[name];
        AggregateRow row;
        row.metric = name;
        row.n = static_cast<int>(v.size());
        for (double x : v) row.mean += x;
        row.mean /= row.n;
        if (row.n > 1) {
            double ss = 0.0;
            for (double x : v) ss += (x - row.mean) * (x - row.mean);
            row.stddev = std::sqrt(ss / (row.n - 1));
        }
        rows.push_back(row);
    }
    return rows;
}

void write_metrics_csv(const std::vector<AggregateRow>& rows, std::ostream& out) {
    out << "metric,mean,std,n\n";
    for (const auto& r : rows) {
        out << r.metric << ',' << format_double(r.mean) << ',' << format_double(r.stddev) << ',' << r.n << '\n';
    }
}

}  // namespace marginlab::report_io
