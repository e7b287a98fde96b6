#include "marginlab/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace marginlab::losses {

namespace {

// log(1 + sum_j exp(a_j)) with max-subtraction; `weights` receives
// exp(a_j) / (1 + sum exp(a)), the derivative of the value wrt a_j.
double log1p_sum_exp(std::span<const double> a, std::vector<double>& weights) {
    double m = 0.0;
    for (double v : a) m = std::max(m, v);
    double total = std::exp(-m);
    weights.resize(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) {
        weights[j] = std::exp(a[j] - m);
        total += weights[j];
    }
    for (double& w : weights) w /= total;
    return m + std::log(total);
}

// log sum_j exp(a_j) split as (max, log1p of the remaining mass), which keeps
// full relative accuracy when one term dominates.
std::pair<double, double> log_sum_exp_parts(std::span<const double> a) {
    std::size_t top = 0;
    for (std::size_t j = 1; j < a.size(); ++j) {
        if (a[j] > a[top]) top = j;
    }
    double rest = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        if (j != top) rest += std::exp(a[j] - a[top]);
    }
    return {a[top], std::log1p(rest)};
}

double log_sum_exp(std::span<const double> a) {
    const auto [m, tail] = log_sum_exp_parts(a);
    return m + tail;
}

void check_labels(const Matrix& emb, const Labels& labels, Eigen::Index margins) {
    if (static_cast<Eigen::Index>(labels.size()) != emb.rows()) {
        throw std::invalid_argument("labels size does not match embedding rows");
    }
    for (int y : labels) {
        if (y < 0 || y >= margins) throw std::invalid_argument("label outside margin vector range");
    }
}

}  // namespace

DeltaScheme parse_delta_scheme(std::string_view name) {
    if (name == "zero") return DeltaScheme::zero;
    if (name == "ldam") return DeltaScheme::ldam;
    if (name == "tan") return DeltaScheme::tan;
    if (name == "logadj") return DeltaScheme::logadj;
    throw std::invalid_argument("unknown margin scheme '" + std::string(name) + "'");
}

std::string to_string(DeltaScheme scheme) {
    switch (scheme) {
        case DeltaScheme::zero: return "zero";
        case DeltaScheme::ldam: return "ldam";
        case DeltaScheme::tan: return "tan";
        case DeltaScheme::logadj: return "logadj";
    }
    return "?";
}

LossSpec LossSpec::plain(int num_classes) {
    LossSpec spec;
    spec.delta = Matrix::Zero(num_classes, num_classes);
    spec.alpha = Vector::Zero(num_classes);
    spec.beta = Vector::Zero(num_classes);
    spec.epsilon = Vector::Zero(num_classes);
    return spec;
}

void LossSpec::validate() const {
    const Eigen::Index L = delta.rows();
    if (L < 1 || delta.cols() != L) throw std::invalid_argument("delta must be a non-empty square matrix");
    for (Eigen::Index y = 0; y < L; ++y) {
        if (delta(y, y) != 0.0) throw std::invalid_argument("delta diagonal must be zero");
    }
    if (!delta.allFinite()) throw std::invalid_argument("delta must be finite");
    if (alpha.size() != L || beta.size() != L || epsilon.size() != L) {
        throw std::invalid_argument("alpha, beta and epsilon need one entry per class");
    }
    if (lambda_pull < 0.0 || lambda_push < 0.0 || lambda_center < 0.0) {
        throw std::invalid_argument("regulariser weights must be non-negative");
    }
    if (!(target_scale > 0.0)) throw std::invalid_argument("target scale s^2 must be positive");
}

Matrix delta_schedule(std::span<const double> priors, DeltaScheme scheme) {
    const auto L = static_cast<Eigen::Index>(priors.size());
    if (L < 1) throw std::invalid_argument("delta_schedule: empty prior vector");
    double total = 0.0;
    for (double p : priors) {
        if (!(p > 0.0)) throw std::invalid_argument("delta_schedule: priors must be positive");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("delta_schedule: priors must sum to 1");

    Matrix delta = Matrix::Zero(L, L);
    for (Eigen::Index y = 0; y < L; ++y) {
        for (Eigen::Index yp = 0; yp < L; ++yp) {
            if (y == yp) continue;
            switch (scheme) {
                case DeltaScheme::zero: break;
                case DeltaScheme::ldam: delta(y, yp) = std::pow(priors[y], -0.25); break;
                case DeltaScheme::tan: delta(y, yp) = priors[yp]; break;
                case DeltaScheme::logadj: delta(y, yp) = std::log(priors[yp] / priors[y]); break;
            }
        }
    }
    return delta;
}

Vector alpha_schedule(std::span<const double> bases, double exponent, double scale) {
    Vector out(static_cast<Eigen::Index>(bases.size()));
    for (std::size_t y = 0; y < bases.size(); ++y) {
        if (!(bases[y] > 0.0)) throw std::invalid_argument("alpha_schedule: bases must be positive");
        out[static_cast<Eigen::Index>(y)] = scale * std::pow(bases[y], exponent);
    }
    return out;
}

LogitLoss margin_ce(const Vector& logits, int label, const Matrix& delta) {
    const Eigen::Index L = logits.size();
    if (label < 0 || label >= L) throw std::invalid_argument("margin_ce: label out of range");
    if (delta.rows() != L || delta.cols() != L) throw std::invalid_argument("margin_ce: delta shape");

    std::vector<double> a;
    a.reserve(static_cast<std::size_t>(L));
    for (Eigen::Index yp = 0; yp < L; ++yp) {
        if (yp != label) a.push_back(delta(label, yp) + logits[yp] - logits[label]);
    }
    std::vector<double> w;
    LogitLoss out;
    out.value = log1p_sum_exp(a, w);
    out.grad = Vector::Zero(L);
    double mass = 0.0;
    std::size_t k = 0;
    for (Eigen::Index yp = 0; yp < L; ++yp) {
        if (yp == label) continue;
        out.grad[yp] = w[k];
        mass += w[k];
        ++k;
    }
    out.grad[label] = -mass;
    return out;
}

double BatchTerm::sum() const {
    double s = 0.0;
    for (double v : per_sample) s += v;
    return s;
}

double BatchTerm::mean() const {
    return per_sample.empty() ? 0.0 : sum() / static_cast<double>(per_sample.size());
}

namespace {

// Shared kernel for pull (sign=+1, same class) and push (sign=-1, other class):
// value = log[1 + sum_j exp(sign * (d_ij - margin))], gradient accumulated into grad.
double pair_softplus(const Matrix& emb, const Labels& labels, double margin, Eigen::Index i,
                     bool same_class, Matrix& grad, std::vector<double>& scratch_a,
                     std::vector<double>& scratch_w, std::vector<Eigen::Index>& partners) {
    const double sign = same_class ? 1.0 : -1.0;
    scratch_a.clear();
    partners.clear();
    const auto yi = labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < emb.rows(); ++j) {
        if (j == i) continue;
        const bool same = labels[static_cast<std::size_t>(j)] == yi;
        if (same != same_class) continue;
        partners.push_back(j);
        scratch_a.push_back(sign * (squared_distance(emb, i, j) - margin));
    }
    if (partners.empty()) return 0.0;
    const double value = log1p_sum_exp(scratch_a, scratch_w);
    for (std::size_t k = 0; k < partners.size(); ++k) {
        const Eigen::Index j = partners[k];
        const RowVector g = (2.0 * sign * scratch_w[k]) * (emb.row(i) - emb.row(j));
        grad.row(i) += g;
        grad.row(j) -= g;
    }
    return value;
}

BatchTerm pair_batch(const Matrix& emb, const Labels& labels, const Vector& margins, bool same_class) {
    check_labels(emb, labels, margins.size());
    BatchTerm out;
    out.grad = Matrix::Zero(emb.rows(), emb.cols());
    out.per_sample.resize(static_cast<std::size_t>(emb.rows()));
    std::vector<double> a, w;
    std::vector<Eigen::Index> partners;
    for (Eigen::Index i = 0; i < emb.rows(); ++i) {
        const double m = margins[labels[static_cast<std::size_t>(i)]];
        out.per_sample[static_cast<std::size_t>(i)] =
            pair_softplus(emb, labels, m, i, same_class, out.grad, a, w, partners);
    }
    return out;
}

AnchorTerm pair_anchor(const Matrix& emb, const Labels& labels, const Vector& margins,
                       Eigen::Index anchor, bool same_class) {
    check_labels(emb, labels, margins.size());
    if (anchor < 0 || anchor >= emb.rows()) throw std::invalid_argument("anchor index out of range");
    AnchorTerm out;
    out.grad = Matrix::Zero(emb.rows(), emb.cols());
    std::vector<double> a, w;
    std::vector<Eigen::Index> partners;
    out.value = pair_softplus(emb, labels, margins[labels[static_cast<std::size_t>(anchor)]], anchor,
                              same_class, out.grad, a, w, partners);
    return out;
}

}  // namespace

AnchorTerm pull_term(const Matrix& emb, const Labels& labels, const Vector& alpha, Eigen::Index anchor) {
    return pair_anchor(emb, labels, alpha, anchor, true);
}

BatchTerm pull_reg(const Matrix& emb, const Labels& labels, const Vector& alpha) {
    return pair_batch(emb, labels, alpha, true);
}

double hard_pull(const Matrix& emb, const Labels& labels, const Vector& alpha, Eigen::Index anchor) {
    check_labels(emb, labels, alpha.size());
    if (anchor < 0 || anchor >= emb.rows()) throw std::invalid_argument("anchor index out of range");
    const int y = labels[static_cast<std::size_t>(anchor)];
    double best = 0.0;
    for (Eigen::Index j = 0; j < emb.rows(); ++j) {
        if (j == anchor || labels[static_cast<std::size_t>(j)] != y) continue;
        best = std::max(best, squared_distance(emb, anchor, j) - alpha[y]);
    }
    return best;
}

AnchorTerm push_term(const Matrix& emb, const Labels& labels, const Vector& beta, Eigen::Index anchor) {
    return pair_anchor(emb, labels, beta, anchor, false);
}

BatchTerm push_reg(const Matrix& emb, const Labels& labels, const Vector& beta) {
    return pair_batch(emb, labels, beta, false);
}

Centroids class_centroids(const Matrix& emb, const Labels& labels, int num_classes) {
    check_labels(emb, labels, num_classes);
    Centroids c;
    c.means = Matrix::Zero(num_classes, emb.cols());
    c.counts.assign(static_cast<std::size_t>(num_classes), 0);
    for (Eigen::Index i = 0; i < emb.rows(); ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        c.means.row(y) += emb.row(i);
        ++c.counts[static_cast<std::size_t>(y)];
    }
    for (int y = 0; y < num_classes; ++y) {
        if (c.counts[static_cast<std::size_t>(y)] > 0) c.means.row(y) /= c.counts[static_cast<std::size_t>(y)];
    }
    return c;
}

BatchTerm center_loss(const Matrix& emb, const Labels& labels, const Matrix& centroids) {
    check_labels(emb, labels, centroids.rows());
    if (centroids.cols() != emb.cols()) throw std::invalid_argument("center_loss: centroid dimension mismatch");
    BatchTerm out;
    out.grad = Matrix::Zero(emb.rows(), emb.cols());
    out.per_sample.resize(static_cast<std::size_t>(emb.rows()));
    for (Eigen::Index i = 0; i < emb.rows(); ++i) {
        const RowVector diff = emb.row(i) - centroids.row(labels[static_cast<std::size_t>(i)]);
        out.per_sample[static_cast<std::size_t>(i)] = diff.squaredNorm();
        out.grad.row(i) = 2.0 * diff;
    }
    return out;
}

double gaussian_xent_constant(Eigen::Index dim, double s2) {
    return 0.5 * static_cast<double>(dim) * std::log(2.0 * std::numbers::pi * s2);
}

double gaussian_xent_penalty(const Matrix& emb, const Labels& labels, const Matrix& centroids, double s2) {
    if (!(s2 > 0.0)) throw std::invalid_argument("gaussian_xent_penalty: s^2 must be positive");
    check_labels(emb, labels, centroids.rows());
    const double c = gaussian_xent_constant(emb.cols(), s2);
    double total = 0.0;
    for (Eigen::Index i = 0; i < emb.rows(); ++i) {
        const double sq = (emb.row(i) - centroids.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
        total += c + sq / (2.0 * s2);
    }
    return total;
}

namespace {

// ||phi(x_j) - mu_{y_i}||^2 for every anchor class; rows: sample j, cols: class.
Matrix centroid_distances(const Matrix& emb, const Matrix& means) {
    Matrix d(emb.rows(), means.rows());
    for (Eigen::Index j = 0; j < emb.rows(); ++j) {
        for (Eigen::Index y = 0; y < means.rows(); ++y) d(j, y) = (emb.row(j) - means.row(y)).squaredNorm();
    }
    return d;
}

}  // namespace

std::vector<double> dro_lt_reg(const Matrix& emb, const Labels& labels, const Vector& epsilon) {
    if (emb.rows() == 0) throw std::invalid_argument("dro_lt_reg: empty batch");
    check_labels(emb, labels, epsilon.size());
    const auto c = class_centroids(emb, labels, static_cast<int>(epsilon.size()));
    const Matrix d = centroid_distances(emb, c.means);
    std::vector<double> out(static_cast<std::size_t>(emb.rows()));
    std::vector<double> a(static_cast<std::size_t>(emb.rows()));
    for (Eigen::Index i = 0; i < emb.rows(); ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < emb.rows(); ++j) {
            const double indicator = labels[static_cast<std::size_t>(j)] != y ? 1.0 : 0.0;
            a[static_cast<std::size_t>(j)] = -d(j, y) + d(i, y) + epsilon[y] * indicator;
        }
        out[static_cast<std::size_t>(i)] = log_sum_exp(a);
    }
    return out;
}

std::vector<double> dro_lt_reg_factored(const Matrix& emb, const Labels& labels, const Vector& epsilon) {
    if (emb.rows() == 0) throw std::invalid_argument("dro_lt_reg_factored: empty batch");
    check_labels(emb, labels, epsilon.size());
    const auto c = class_centroids(emb, labels, static_cast<int>(epsilon.size()));
    const Matrix d = centroid_distances(emb, c.means);
    std::vector<double> out(static_cast<std::size_t>(emb.rows()));
    std::vector<double> same, other;
    for (Eigen::Index i = 0; i < emb.rows(); ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        const double eps = epsilon[y];
        same.clear();
        other.clear();
        for (Eigen::Index j = 0; j < emb.rows(); ++j) {
            if (labels[static_cast<std::size_t>(j)] == y) {
                same.push_back(d(i, y) - d(j, y) - eps);
            } else {
                other.push_back(d(i, y) - d(j, y));
            }
        }
        same.insert(same.end(), other.begin(), other.end());
        const auto [m, tail] = log_sum_exp_parts(same);
        out[static_cast<std::size_t>(i)] = (eps + m) + tail;
    }
    return out;
}

double spreadout_reg(const Matrix& emb) {
    const Eigen::Index n = emb.rows();
    if (n < 2) throw std::invalid_argument("spreadout_reg: need at least two embeddings");
    Matrix unit = emb;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double norm = unit.row(i).norm();
        if (norm == 0.0) throw std::invalid_argument("spreadout_reg: zero-norm embedding");
        unit.row(i) /= norm;
    }
    double m1 = 0.0, m2 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) continue;
            const double dot = unit.row(i).dot(unit.row(j));
            m1 += dot;
            m2 += dot * dot;
        }
    }
    const double pairs = static_cast<double>(n * (n - 1));
    m1 /= pairs;
    m2 /= pairs;
    return m1 * m1 + std::max(0.0, m2 - 1.0 / static_cast<double>(emb.cols()));
}

double range_loss(const Matrix& centroids, double gamma) {
    if (centroids.rows() < 2) throw std::invalid_argument("range_loss: need at least two centroids");
    double worst = 0.0;
    for (Eigen::Index a = 0; a < centroids.rows(); ++a) {
        for (Eigen::Index b = a + 1; b < centroids.rows(); ++b) {
            worst = std::max(worst, gamma - (centroids.row(a) - centroids.row(b)).squaredNorm());
        }
    }
    return worst;
}

ObjectiveValue elm_objective(const Matrix& embeddings, const Matrix& logits, const Labels& labels,
                             const LossSpec& spec) {
    const Eigen::Index n = logits.rows();
    if (n == 0) throw std::invalid_argument("elm_objective: empty batch");
    if (embeddings.rows() != n || static_cast<Eigen::Index>(labels.size()) != n) {
        throw std::invalid_argument("elm_objective: batch size mismatch");
    }
    if (logits.cols() != spec.num_classes()) throw std::invalid_argument("elm_objective: logit width");

    ObjectiveValue out;
    const double inv_n = 1.0 / static_cast<double>(n);
    out.grad_logits = Matrix::Zero(n, logits.cols());
    out.grad_embeddings = Matrix::Zero(n, embeddings.cols());

    for (Eigen::Index i = 0; i < n; ++i) {
        const auto term = margin_ce(logits.row(i).transpose(), labels[static_cast<std::size_t>(i)], spec.delta);
        out.ce += term.value;
        out.grad_logits.row(i) = term.grad.transpose() * inv_n;
    }
    out.ce *= inv_n;

    const auto pull = pull_reg(embeddings, labels, spec.alpha);
    out.pull = pull.mean();
    if (spec.lambda_pull > 0.0) out.grad_embeddings += (spec.lambda_pull * inv_n) * pull.grad;

    if (spec.lambda_push > 0.0) {
        const auto push = push_reg(embeddings, labels, spec.beta);
        out.push = push.mean();
        out.grad_embeddings += (spec.lambda_push * inv_n) * push.grad;
    }

    const auto cents = class_centroids(embeddings, labels, spec.num_classes());
    const auto center = center_loss(embeddings, labels, cents.means);
    out.center = center.mean();
    if (spec.lambda_center > 0.0) out.grad_embeddings += (spec.lambda_center * inv_n) * center.grad;

    out.total = out.ce + spec.lambda_pull * out.pull + spec.lambda_push * out.push +
                spec.lambda_center * out.center;
    return out;
}

}  // namespace marginlab::losses
