#include "marginlab/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>

namespace marginlab {

void validate(const ClassGaussianSpec& spec) {
    if (spec.empty()) throw std::invalid_argument("gaussian spec: no classes");
    const Eigen::Index dim = spec.front().mean.size();
    double total = 0.0;
    for (const auto& c : spec) {
        if (c.mean.size() != dim || dim == 0) throw std::invalid_argument("gaussian spec: mean dimensions differ");
        if (!(c.variance > 0.0)) throw std::invalid_argument("gaussian spec: variance must be positive");
        if (!(c.prior >= 0.0)) throw std::invalid_argument("gaussian spec: negative prior");
        total += c.prior;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("gaussian spec: priors must sum to 1");
}

bool has_shared_variance(const ClassGaussianSpec& spec) {
    return std::all_of(spec.begin(), spec.end(),
                       [&](const ClassGaussian& c) { return c.variance == spec.front().variance; });
}

}  // namespace marginlab

namespace marginlab::data {

std::vector<int> Dataset::counts() const {
    std::vector<int> c(static_cast<std::size_t>(num_classes), 0);
    for (int y : labels) ++c[static_cast<std::size_t>(y)];
    return c;
}

std::vector<double> Dataset::priors() const {
    const auto c = counts();
    std::vector<double> p(c.size());
    for (std::size_t y = 0; y < c.size(); ++y) p[y] = static_cast<double>(c[y]) / static_cast<double>(labels.size());
    return p;
}

void Dataset::validate() const {
    if (static_cast<Eigen::Index>(labels.size()) != inputs.rows()) {
        throw std::invalid_argument("dataset: label count does not match input rows");
    }
    for (int y : labels) {
        if (y < 0 || y >= num_classes) throw std::invalid_argument("dataset: label out of range");
    }
}

Dataset Dataset::subset(const std::vector<Eigen::Index>& rows) const {
    Dataset out;
    out.num_classes = num_classes;
    out.inputs.resize(static_cast<Eigen::Index>(rows.size()), inputs.cols());
    out.labels.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.inputs.row(static_cast<Eigen::Index>(i)) = inputs.row(rows[i]);
        out.labels[i] = labels[static_cast<std::size_t>(rows[i])];
    }
    return out;
}

namespace {

// Classic moons: upper arc (cos t, sin t), lower arc (1 - cos t, 1/2 - sin t),
// then shifted by (-1/2, -1/4) so the layout is centred.
const Eigen::Vector2d kShift(-0.5, -0.25);

}  // namespace

Vector two_moons_head_center() { return Eigen::Vector2d(0.0, 0.0) + kShift; }
Vector two_moons_tail_center() { return Eigen::Vector2d(1.0, 0.5) + kShift; }

Dataset two_moons_lt(int n, double tail_prob, double noise, std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("two_moons_lt: need n >= 2");
    if (!(tail_prob > 0.0 && tail_prob < 1.0)) throw std::invalid_argument("two_moons_lt: tail_prob in (0,1)");
    if (!(noise >= 0.0)) throw std::invalid_argument("two_moons_lt: noise must be non-negative");

    std::mt19937_64 rng(seed);
    std::bernoulli_distribution is_tail(tail_prob);
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    std::normal_distribution<double> jitter(0.0, 1.0);

    const Vector head_c = two_moons_head_center();
    const Vector tail_c = two_moons_tail_center();
    Dataset d;
    d.num_classes = 2;
    d.inputs.resize(n, 2);
    d.labels.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const bool tail = is_tail(rng);
        const double t = angle(rng);
        double x, y;
        if (tail) {
            x = tail_c[0] - std::cos(t);
            y = tail_c[1] - std::sin(t);
        } else {
            x = head_c[0] + std::cos(t);
            y = head_c[1] + std::sin(t);
        }
        if (noise > 0.0) {
            x += noise * jitter(rng);
            y += noise * jitter(rng);
        }
        d.inputs(i, 0) = x;
        d.inputs(i, 1) = y;
        d.labels[static_cast<std::size_t>(i)] = tail ? 1 : 0;
    }
    return d;
}

namespace {

void fill_sample(const ClassGaussian& c, std::mt19937_64& rng, Matrix& out, Eigen::Index i) {
    std::normal_distribution<double> z(0.0, 1.0);
    const double sd = std::sqrt(c.variance);
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = c.mean[j] + sd * z(rng);
}

}  // namespace

Dataset gaussian_mixture_lt(const ClassGaussianSpec& spec, int n, std::uint64_t seed) {
    validate(spec);
    if (n < 1) throw std::invalid_argument("gaussian_mixture_lt: need n >= 1");
    std::vector<double> weights;
    for (const auto& c : spec) weights.push_back(c.prior);
    std::mt19937_64 rng(seed);
    std::discrete_distribution<int> label(weights.begin(), weights.end());

    Dataset d;
    d.num_classes = static_cast<int>(spec.size());
    d.inputs.resize(n, spec.front().mean.size());
    d.labels.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int y = label(rng);
        d.labels[static_cast<std::size_t>(i)] = y;
        fill_sample(spec[static_cast<std::size_t>(y)], rng, d.inputs, i);
    }
    return d;
}

Dataset gaussian_mixture_counts(const ClassGaussianSpec& spec, const std::vector<int>& counts,
                                std::uint64_t seed) {
    if (spec.empty() || counts.size() != spec.size()) {
        throw std::invalid_argument("gaussian_mixture_counts: one count per class required");
    }
    for (const auto& c : spec) {
        if (!(c.variance > 0.0)) throw std::invalid_argument("gaussian_mixture_counts: variance must be positive");
    }
    Labels order;
    for (std::size_t y = 0; y < counts.size(); ++y) {
        if (counts[y] < 0) throw std::invalid_argument("gaussian_mixture_counts: negative count");
        order.insert(order.end(), static_cast<std::size_t>(counts[y]), static_cast<int>(y));
    }
    if (order.empty()) throw std::invalid_argument("gaussian_mixture_counts: empty dataset");
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    Dataset d;
    d.num_classes = static_cast<int>(spec.size());
    d.inputs.resize(static_cast<Eigen::Index>(order.size()), spec.front().mean.size());
    d.labels = order;
    for (std::size_t i = 0; i < order.size(); ++i) {
        fill_sample(spec[static_cast<std::size_t>(order[i])], rng, d.inputs, static_cast<Eigen::Index>(i));
    }
    return d;
}

std::vector<int> exp_profile(int n_max, int num_classes, double rho) {
    if (num_classes < 2) throw std::invalid_argument("exp_profile: need at least two classes");
    if (!(rho >= 1.0)) throw std::invalid_argument("exp_profile: imbalance ratio must be >= 1");
    std::vector<int> counts(static_cast<std::size_t>(num_classes));
    for (int y = 0; y < num_classes; ++y) {
        const double e = -static_cast<double>(y) / static_cast<double>(num_classes - 1);
        counts[static_cast<std::size_t>(y)] = static_cast<int>(std::lround(n_max * std::pow(rho, e)));
    }
    if (counts.back() < 1) throw std::invalid_argument("exp_profile: n_max too small for at least one tail sample");
    return counts;
}

std::string to_string(Bucket b) {
    switch (b) {
        case Bucket::head: return "Head";
        case Bucket::torso: return "Torso";
        case Bucket::tail: return "Tail";
    }
    return "?";
}

std::vector<Bucket> head_torso_tail_buckets(const std::vector<int>& counts, BucketThresholds thresholds) {
    if (thresholds.torso > thresholds.head) throw std::invalid_argument("bucket thresholds must be descending");
    std::vector<Bucket> out;
    out.reserve(counts.size());
    for (int c : counts) {
        if (c >= thresholds.head) {
            out.push_back(Bucket::head);
        } else if (c >= thresholds.torso) {
            out.push_back(Bucket::torso);
        } else {
            out.push_back(Bucket::tail);
        }
    }
    return out;
}

void write_csv(const Dataset& data, std::ostream& out) {
    for (Eigen::Index j = 0; j < data.inputs.cols(); ++j) out << "x_" << j << ',';
    out << "y\n";
    out.precision(17);
    for (Eigen::Index i = 0; i < data.inputs.rows(); ++i) {
        for (Eigen::Index j = 0; j < data.inputs.cols(); ++j) out << data.inputs(i, j) << ',';
        out << data.labels[static_cast<std::size_t>(i)] << '\n';
    }
}

}  // namespace marginlab::data
