#include "marginlab/metrics.hpp"

#include "marginlab/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace marginlab::metrics {

Labels predict(const Matrix& logits) {
    Labels out(static_cast<std::size_t>(logits.rows()));
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index j = 1; j < logits.cols(); ++j) {
            if (logits(i, j) > logits(i, best)) best = j;
        }
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

std::vector<double> per_class_accuracy(const Labels& predictions, const Labels& labels, int num_classes) {
    if (predictions.size() != labels.size()) throw std::invalid_argument("prediction/label size mismatch");
    std::vector<int> right(static_cast<std::size_t>(num_classes), 0), total(static_cast<std::size_t>(num_classes), 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto y = static_cast<std::size_t>(labels[i]);
        if (labels[i] < 0 || labels[i] >= num_classes) throw std::invalid_argument("label out of range");
        ++total[y];
        if (predictions[i] == labels[i]) ++right[y];
    }
    std::vector<double> acc(static_cast<std::size_t>(num_classes));
    for (std::size_t y = 0; y < acc.size(); ++y) {
        if (total[y] == 0) throw std::invalid_argument("class " + std::to_string(y) + " absent from evaluation set");
        acc[y] = static_cast<double>(right[y]) / total[y];
    }
    return acc;
}

double balanced_error(const Labels& predictions, const Labels& labels, int num_classes) {
    const auto acc = per_class_accuracy(predictions, labels, num_classes);
    double err = 0.0;
    for (double a : acc) err += 1.0 - a;
    return err / num_classes;
}

double accuracy(const Labels& predictions, const Labels& labels) {
    if (predictions.size() != labels.size() || labels.empty()) throw std::invalid_argument("accuracy: bad sizes");
    std::size_t right = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) right += predictions[i] == labels[i];
    return static_cast<double>(right) / static_cast<double>(labels.size());
}

double ovr_auc(const Matrix& logits, const Labels& labels, int num_classes) {
    if (static_cast<Eigen::Index>(labels.size()) != logits.rows()) throw std::invalid_argument("ovr_auc: size mismatch");
    const Eigen::Index n = logits.rows();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    double total = 0.0;
    for (int y = 0; y < num_classes; ++y) {
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return logits(a, y) < logits(b, y); });
        // Mann-Whitney: sum of midranks of positives.
        double rank_sum = 0.0;
        std::size_t pos = 0;
        for (std::size_t i = 0; i < order.size();) {
            std::size_t j = i;
            while (j < order.size() && logits(order[j], y) == logits(order[i], y)) ++j;
            const double midrank = 0.5 * static_cast<double>(i + 1 + j);
            for (std::size_t k = i; k < j; ++k) {
                if (labels[static_cast<std::size_t>(order[k])] == y) {
                    rank_sum += midrank;
                    ++pos;
                }
            }
            i = j;
        }
        const std::size_t neg = static_cast<std::size_t>(n) - pos;
        if (pos == 0 || neg == 0) throw std::invalid_argument("ovr_auc: class and its complement must be non-empty");
        const double p = static_cast<double>(pos);
        total += (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
    }
    return total / num_classes;
}

std::vector<double> margin_distribution(const Matrix& logits, const Labels& labels, int y) {
    if (y < 0 || y >= logits.cols()) throw std::invalid_argument("margin_distribution: class out of range");
    std::vector<double> out;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        if (labels[static_cast<std::size_t>(i)] != y) continue;
        double rival = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < logits.cols(); ++j) {
            if (j != y) rival = std::max(rival, logits(i, j));
        }
        out.push_back(logits(i, y) - rival);
    }
    return out;
}

std::vector<double> max_intra_class_distance(const Matrix& embeddings, const Labels& labels, int y) {
    const auto members = members_of(labels, y);
    if (members.size() < 2) throw std::invalid_argument("max_intra_class_distance: class needs two members");
    const double scale = embeddings.rowwise().norm().maxCoeff();
    if (!(scale > 0.0)) throw std::invalid_argument("max_intra_class_distance: all embeddings are zero");
    std::vector<double> out;
    out.reserve(members.size());
    for (auto i : members) {
        double best = 0.0;
        for (auto j : members) best = std::max(best, squared_distance(embeddings, i, j));
        out.push_back(std::sqrt(best) / scale);
    }
    return out;
}

ClassVariance class_variance(const Matrix& embeddings, const Labels& labels, int num_classes) {
    const auto c = losses::class_centroids(embeddings, labels, num_classes);
    ClassVariance out;
    out.centroids = c.means;
    out.counts = c.counts;
    out.trace.assign(static_cast<std::size_t>(num_classes), 0.0);
    out.singleton.assign(static_cast<std::size_t>(num_classes), false);
    for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        out.trace[static_cast<std::size_t>(y)] += (embeddings.row(i) - c.means.row(y)).squaredNorm();
    }
    for (std::size_t y = 0; y < out.trace.size(); ++y) {
        if (c.counts[y] > 0) out.trace[y] /= c.counts[y];
        out.singleton[y] = c.counts[y] <= 1;
    }
    return out;
}

std::map<data::Bucket, double> bucket_breakdown(const std::vector<double>& per_class_acc,
                                                const std::vector<data::Bucket>& buckets) {
    if (per_class_acc.size() != buckets.size()) throw std::invalid_argument("bucket_breakdown: size mismatch");
    std::map<data::Bucket, std::pair<double, int>> acc;
    for (std::size_t y = 0; y < buckets.size(); ++y) {
        auto& slot = acc[buckets[y]];
        slot.first += per_class_acc[y];
        ++slot.second;
    }
    std::map<data::Bucket, double> out;
    for (const auto& [b, s] : acc) out[b] = s.first / s.second;
    return out;
}

Histogram histogram(const std::vector<double>& values, int bins) {
    if (bins < 1) throw std::invalid_argument("histogram: need at least one bin");
    Histogram h;
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    if (values.empty()) return h;
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    h.lo = *mn;
    h.hi = *mx;
    if (h.hi <= h.lo) {
        h.lo -= 0.5;
        h.hi += 0.5;
    }
    const double width = (h.hi - h.lo) / bins;
    for (double v : values) {
        auto b = static_cast<int>((v - h.lo) / width);
        b = std::clamp(b, 0, bins - 1);
        ++h.counts[static_cast<std::size_t>(b)];
    }
    return h;
}

CdfSeries empirical_cdf(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    CdfSeries s;
    s.x = values;
    s.level.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) s.level[i] = static_cast<double>(i + 1) / values.size();
    return s;
}

double sample_variance(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
    double v = 0.0;
    for (double x : values) v += (x - mean) * (x - mean);
    return v / values.size();
}

Report evaluate(const Matrix& embeddings, const Matrix& logits, const Labels& labels, int num_classes,
                const std::vector<int>& train_counts, int bins, Eigen::Index scatter_limit) {
    Report r;
    r.num_classes = num_classes;
    const Labels pred = predict(logits);
    const auto acc = per_class_accuracy(pred, labels, num_classes);
    r.accuracy = accuracy(pred, labels);
    r.balanced_error = balanced_error(pred, labels, num_classes);
    r.balanced_accuracy = std::accumulate(acc.begin(), acc.end(), 0.0) / num_classes;
    r.auc = ovr_auc(logits, labels, num_classes);

    const auto buckets = data::head_torso_tail_buckets(train_counts);
    r.bucket_accuracy = bucket_breakdown(acc, buckets);

    const auto var = class_variance(embeddings, labels, num_classes);
    r.mean_trace_variance = std::accumulate(var.trace.begin(), var.trace.end(), 0.0) / num_classes;

    const bool nonzero = embeddings.size() > 0 && embeddings.rowwise().norm().maxCoeff() > 0.0;
    for (int y = 0; y < num_classes; ++y) {
        ClassReport c;
        c.label = y;
        c.train_count = train_counts[static_cast<std::size_t>(y)];
        c.bucket = buckets[static_cast<std::size_t>(y)];
        c.accuracy = acc[static_cast<std::size_t>(y)];
        c.trace_variance = var.trace[static_cast<std::size_t>(y)];
        c.margins = margin_distribution(logits, labels, y);
        if (nonzero && var.counts[static_cast<std::size_t>(y)] >= 2) {
            c.intra_distances = max_intra_class_distance(embeddings, labels, y);
        }
        c.margin_histogram = histogram(c.margins, bins);
        c.intra_histogram = histogram(c.intra_distances, bins);
        r.classes.push_back(std::move(c));
    }

    if (embeddings.cols() == 2) {
        const Eigen::Index n = std::min(scatter_limit, embeddings.rows());
        r.embedding_sample = embeddings.topRows(n);
        r.embedding_labels.assign(labels.begin(), labels.begin() + n);
    }
    return r;
}

}  // namespace marginlab::metrics
