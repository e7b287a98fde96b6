#pragma once

#include "marginlab/data_synth.hpp"
#include "marginlab/linalg.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace marginlab::metrics {

// argmax per row; ties go to the lowest index.
Labels predict(const Matrix& logits);

std::vector<double> per_class_accuracy(const Labels& predictions, const Labels& labels, int num_classes);

// (1/L) sum_y per-class error. Throws if a class is absent from `labels`.
double balanced_error(const Labels& predictions, const Labels& labels, int num_classes);

double accuracy(const Labels& predictions, const Labels& labels);

// Mean over classes of Pr[f_y(x) > f_y(x^-)], x ~ class y, x^- ~ not y,
// ties counted as one half.
double ovr_auc(const Matrix& logits, const Labels& labels, int num_classes);

// gamma(x, y) = f_y(x) - max_{y' != y} f_y'(x) for every x of class y.
std::vector<double> margin_distribution(const Matrix& logits, const Labels& labels, int y);

// Per-instance max_{x+ in S_y} ||phi(x) - phi(x+)||, divided by max_{x in S} ||phi(x)||.
std::vector<double> max_intra_class_distance(const Matrix& embeddings, const Labels& labels, int y);

struct ClassVariance {
    std::vector<double> trace;  // sum_j Var[phi_j | y], divide-by-n
    Matrix centroids;           // L x K
    std::vector<int> counts;
    std::vector<bool> singleton;
};
ClassVariance class_variance(const Matrix& embeddings, const Labels& labels, int num_classes);

// Unweighted mean of per-class accuracies per bucket; empty buckets absent.
std::map<data::Bucket, double> bucket_breakdown(const std::vector<double>& per_class_acc,
                                                const std::vector<data::Bucket>& buckets);

struct Histogram {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<int> counts;
};
// Uniform bins over [min, max] of the sample; a degenerate range is widened by 0.5.
Histogram histogram(const std::vector<double>& values, int bins = 50);

// Sorted values with their empirical CDF level i / n.
struct CdfSeries {
    std::vector<double> x;
    std::vector<double> level;
};
CdfSeries empirical_cdf(std::vector<double> values);

double sample_variance(const std::vector<double>& values);  // divide-by-n

struct ClassReport {
    int label = 0;
    int train_count = 0;
    data::Bucket bucket = data::Bucket::head;
    double accuracy = 0.0;
    double trace_variance = 0.0;
    std::vector<double> margins;
    std::vector<double> intra_distances;  // empty for singleton classes
    Histogram margin_histogram;
    Histogram intra_histogram;
};

struct Report {
    int num_classes = 0;
    double accuracy = 0.0;
    double balanced_accuracy = 0.0;
    double balanced_error = 0.0;
    double auc = 0.0;
    double mean_trace_variance = 0.0;  // mean over classes of the class trace-variance
    std::map<data::Bucket, double> bucket_accuracy;
    std::vector<ClassReport> classes;
    Matrix embedding_sample;  // rows of eval embeddings for scatter plots (K = 2 only)
    Labels embedding_labels;
};

// Full evaluation of logits/embeddings on a labelled set. Buckets come from the
// training counts.
Report evaluate(const Matrix& embeddings, const Matrix& logits, const Labels& labels, int num_classes,
                const std::vector<int>& train_counts, int bins = 50, Eigen::Index scatter_limit = 2000);

}  // namespace marginlab::metrics
