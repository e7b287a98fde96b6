#include "marginlab/bounds_lab.hpp"

#include "marginlab/data_synth.hpp"
#include "marginlab/losses.hpp"
#include "marginlab/metrics.hpp"
#include "marginlab/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace marginlab::bounds {

void BoundConfig::validate() const {
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("bound config: delta must lie in (0, 1)");
    if (!std::isfinite(loss_bound) || loss_bound < 0.0) throw std::invalid_argument("bound config: B must be finite");
    if (trials < 1) throw std::invalid_argument("bound config: trials must be >= 1");
    if (max_dim < 1 || max_class_size < 2) throw std::invalid_argument("bound config: instance ranges too small");
    if (train_size < 4 || eval_size < 1) throw std::invalid_argument("bound config: split sizes too small");
}

BoundCheckRecord make_record(std::string check, std::string instance, double lhs, double rhs, double tolerance) {
    BoundCheckRecord r;
    r.check = std::move(check);
    r.instance = std::move(instance);
    r.lhs = lhs;
    r.rhs = rhs;
    r.slack = rhs - lhs;
    r.pass = r.slack >= -tolerance;
    return r;
}

double standard_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double variance_identity_check(const Matrix& embeddings) {
    const Eigen::Index n = embeddings.rows();
    if (n < 1) throw std::invalid_argument("variance_identity_check: need at least one point");
    double pairwise = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) pairwise += squared_distance(embeddings, i, j);
    }
    const double nn = static_cast<double>(n);
    const double lhs = pairwise / (nn * nn);
    const RowVector mu = embeddings.colwise().mean();
    double spread = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) spread += (embeddings.row(i) - mu).squaredNorm();
    const double rhs = 2.0 * spread / nn;
    return std::abs(lhs - rhs) / std::max(std::abs(lhs), 1.0);
}

namespace {

double trace_variance(const Matrix& pts) {
    const RowVector mu = pts.colwise().mean();
    double s = 0.0;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) s += (pts.row(i) - mu).squaredNorm();
    return s / static_cast<double>(pts.rows());
}

Matrix rows_of(const Matrix& m, const std::vector<Eigen::Index>& idx) {
    Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = m.row(idx[k]);
    return out;
}

}  // namespace

BoundCheckRecord pull_bound_check(const Matrix& class_embeddings, double alpha) {
    const Eigen::Index n = class_embeddings.rows();
    if (n < 2) throw std::invalid_argument("pull_bound_check: class needs at least two samples");
    const double nn = static_cast<double>(n);
    const double lhs = 2.0 * nn / (nn - 1.0) * trace_variance(class_embeddings) - alpha + std::log(nn - 1.0);
    const Labels same(static_cast<std::size_t>(n), 0);
    Vector a(1);
    a[0] = alpha;
    const double rhs = losses::pull_reg(class_embeddings, same, a).mean();
    std::ostringstream desc;
    desc << "n=" << n << " K=" << class_embeddings.cols() << " alpha=" << alpha;
    return make_record("pull_bound", desc.str(), lhs, rhs);
}

BoundCheckRecord push_bound_check(const Matrix& embeddings, const Labels& labels, const Vector& beta, int y) {
    const int L = static_cast<int>(beta.size());
    if (y < 0 || y >= L) throw std::invalid_argument("push_bound_check: class out of range");
    const auto own = members_of(labels, y);
    if (own.empty()) throw std::invalid_argument("push_bound_check: class y is empty");
    const Eigen::Index others = embeddings.rows() - static_cast<Eigen::Index>(own.size());
    if (others == 0) throw std::invalid_argument("push_bound_check: needs at least two classes");

    const Matrix zy = rows_of(embeddings, own);
    const double var_y = trace_variance(zy);
    const RowVector mu_y = zy.colwise().mean();
    double penalty = 0.0;
    for (int yp = 0; yp < L; ++yp) {
        if (yp == y) continue;
        const auto members = members_of(labels, yp);
        if (members.empty()) continue;
        const Matrix zp = rows_of(embeddings, members);
        const double weight = static_cast<double>(members.size()) / static_cast<double>(others);
        penalty += weight * (var_y + trace_variance(zp) + (mu_y - zp.colwise().mean()).squaredNorm());
    }
    const double lhs = -penalty + beta[y] + std::log(static_cast<double>(others));

    const auto push = losses::push_reg(embeddings, labels, beta);
    double rhs = 0.0;
    for (auto i : own) rhs += push.per_sample[static_cast<std::size_t>(i)];
    rhs /= static_cast<double>(own.size());

    std::ostringstream desc;
    desc << "N=" << embeddings.rows() << " K=" << embeddings.cols() << " L=" << L << " y=" << y
         << " beta=" << beta[y];
    return make_record("push_bound", desc.str(), lhs, rhs);
}

double gaussian_auc_closed_form(const Matrix& weights, const ClassGaussianSpec& spec) {
    validate(spec);
    const auto L = static_cast<Eigen::Index>(spec.size());
    if (L < 2) throw std::invalid_argument("gaussian_auc_closed_form: need at least two classes");
    if (weights.cols() != L || weights.rows() != spec.front().mean.size()) {
        throw std::invalid_argument("gaussian_auc_closed_form: head shape mismatch");
    }
    double total = 0.0;
    for (Eigen::Index y = 0; y < L; ++y) {
        const double wn = weights.col(y).norm();
        if (wn == 0.0) throw std::invalid_argument("gaussian_auc_closed_form: zero-norm class weight");
        const auto& cy = spec[static_cast<std::size_t>(y)];
        for (Eigen::Index yp = 0; yp < L; ++yp) {
            if (yp == y) continue;
            const auto& cp = spec[static_cast<std::size_t>(yp)];
            const double num = weights.col(y).dot(cy.mean - cp.mean);
            total += standard_normal_cdf(num / (wn * std::sqrt(cy.variance + cp.variance)));
        }
    }
    return total / static_cast<double>(L * (L - 1));
}

double gaussian_auc_monte_carlo(const Matrix& weights, const ClassGaussianSpec& spec, int n, std::uint64_t seed) {
    const int L = static_cast<int>(spec.size());
    const std::vector<int> counts(static_cast<std::size_t>(L), n / L);
    const auto d = data::gaussian_mixture_counts(spec, counts, seed);
    const Matrix scores = d.inputs * weights;
    return metrics::ovr_auc(scores, d.labels, L);
}

double bennett_bound(std::span<const double> samples, double B, double delta) {
    const std::size_t n = samples.size();
    if (n < 2) throw std::invalid_argument("bennett_bound: need at least two samples");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("bennett_bound: delta must lie in (0, 1)");
    for (double z : samples) {
        if (z < 0.0 || z > B) throw std::invalid_argument("bennett_bound: sample outside [0, B]");
    }
    const double nn = static_cast<double>(n);
    const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / nn;
    double ss = 0.0;
    for (double z : samples) ss += (z - mean) * (z - mean);
    const double var = ss / (nn - 1.0);
    const double log_term = std::log(2.0 / delta);
    return mean + std::sqrt(2.0 * var * log_term / nn) + 7.0 * B * log_term / (3.0 * (nn - 1.0));
}

double logistic_loss(int sign, double score) {
    const double z = -sign * score;
    // softplus(z), stable for large |z|
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

bool VarianceChain::holds(double tolerance, double equality_tolerance) const {
    const bool first = var_log <= var_lin + tolerance;
    const bool equal = std::abs(var_lin - quad_form) <= equality_tolerance * std::max(1.0, std::abs(quad_form));
    const bool last = quad_form <= trace_bound + tolerance;
    return first && equal && last;
}

VarianceChain loss_variance_lemma_check(const Matrix& embeddings, const std::vector<int>& signs, const Vector& w,
                                        double b, double delta_shift, int sign) {
    if (static_cast<Eigen::Index>(signs.size()) != embeddings.rows()) {
        throw std::invalid_argument("loss_variance_lemma_check: size mismatch");
    }
    if (sign != -1 && sign != 1) throw std::invalid_argument("loss_variance_lemma_check: sign must be -1 or +1");
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < signs.size(); ++i) {
        if (signs[i] != -1 && signs[i] != 1) throw std::invalid_argument("labels must be -1 or +1");
        if (signs[i] == sign) idx.push_back(static_cast<Eigen::Index>(i));
    }
    if (idx.size() < 2) throw std::invalid_argument("loss_variance_lemma_check: class needs two samples");

    const Matrix z = rows_of(embeddings, idx);
    std::vector<double> log_loss, lin_loss;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double score = z.row(i).dot(w) + b + delta_shift;
        log_loss.push_back(logistic_loss(sign, score));
        lin_loss.push_back(-sign * score);
    }
    VarianceChain c;
    c.var_log = metrics::sample_variance(log_loss);
    c.var_lin = metrics::sample_variance(lin_loss);
    const Matrix centred = z.rowwise() - z.colwise().mean();
    const Matrix cov = centred.transpose() * centred / static_cast<double>(z.rows());
    c.quad_form = w.dot(cov * w);
    c.trace_bound = w.squaredNorm() * cov.trace();
    return c;
}

GenBoundResult gen_bound_check(const GenBoundInputs& in) {
    if (!(in.confidence > 0.0 && in.confidence < 1.0)) throw std::invalid_argument("gen_bound_check: delta in (0,1)");
    if (!(in.prior_pos > 0.0 && in.prior_pos < 1.0)) throw std::invalid_argument("gen_bound_check: prior in (0,1)");

    auto score = [&](const Matrix& e, Eigen::Index i) { return e.row(i).dot(in.w) + in.b; };
    auto shift = [&](int s) { return s > 0 ? in.delta_pos : in.delta_neg; };

    // Per-class training losses.
    std::vector<double> train_loss[2];
    std::vector<Eigen::Index> members[2];
    for (Eigen::Index i = 0; i < in.train.embeddings.rows(); ++i) {
        const int s = in.train.signs[static_cast<std::size_t>(i)];
        const int k = s > 0 ? 1 : 0;
        train_loss[k].push_back(logistic_loss(s, score(in.train.embeddings, i) + shift(s)));
        members[k].push_back(i);
    }
    if (members[0].size() < 2 || members[1].size() < 2) {
        throw std::invalid_argument("gen_bound_check: each class needs at least two training samples");
    }

    double population = 0.0;
    double max_loss = 0.0;
    std::size_t eval_pos = 0;
    for (Eigen::Index i = 0; i < in.eval.embeddings.rows(); ++i) {
        const int s = in.eval.signs[static_cast<std::size_t>(i)];
        const double l = logistic_loss(s, score(in.eval.embeddings, i) + shift(s));
        population += l;
        max_loss = std::max(max_loss, l);
        eval_pos += s > 0;
    }
    if (eval_pos == 0 || eval_pos == static_cast<std::size_t>(in.eval.embeddings.rows())) {
        throw std::invalid_argument("gen_bound_check: both classes must appear in the eval split");
    }
    population /= static_cast<double>(in.eval.embeddings.rows());
    for (const auto& v : train_loss) {
        for (double l : v) max_loss = std::max(max_loss, l);
    }

    GenBoundResult r;
    r.loss_bound = in.loss_bound > 0.0 ? in.loss_bound : 1.01 * max_loss;
    const double log_term = std::log(2.0 / in.confidence);
    const double prior[2] = {1.0 - in.prior_pos, in.prior_pos};
    const double alpha[2] = {in.alpha_neg, in.alpha_pos};

    double inv_sizes = 0.0;
    double pull_sum = 0.0;
    for (int k = 0; k < 2; ++k) {
        const double n = static_cast<double>(members[k].size());
        inv_sizes += prior[k] / (n - 1.0);
        r.empirical_term += prior[k] / n * std::accumulate(train_loss[k].begin(), train_loss[k].end(), 0.0);
        const Matrix zk = rows_of(in.train.embeddings, members[k]);
        Vector a(1);
        a[0] = alpha[k];
        const double pull_mean = losses::pull_reg(zk, Labels(members[k].size(), 0), a).mean();
        pull_sum += prior[k] / n * (pull_mean + alpha[k]);
    }
    r.bennett_term = 7.0 * r.loss_bound * log_term / 3.0 * inv_sizes;
    r.pull_term = in.w.norm() * std::sqrt(log_term * std::max(pull_sum, 0.0));
    r.population_loss = population;

    const double rhs = r.bennett_term + r.empirical_term + r.pull_term;
    std::ostringstream desc;
    desc << "n_neg=" << members[0].size() << " n_pos=" << members[1].size() << " B=" << r.loss_bound
         << " delta=" << in.confidence;
    r.record = make_record("gen_bound", desc.str(), population, rhs, 0.0);
    return r;
}

double bayes_logistic_realizability_check(const ClassGaussianSpec& spec, const Matrix& points) {
    validate(spec);
    if (!has_shared_variance(spec)) {
        throw std::invalid_argument("bayes_logistic_realizability_check: requires a shared class variance");
    }
    const auto head = scorer::bayes_gaussian_head(spec);
    const auto L = static_cast<Eigen::Index>(spec.size());
    const double dim = static_cast<double>(spec.front().mean.size());
    double worst = 0.0;
    Vector model(L), exact(L);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const RowVector x = points.row(i);
        model = (x * head.weights).transpose() + head.bias;
        for (Eigen::Index y = 0; y < L; ++y) {
            const auto& c = spec[static_cast<std::size_t>(y)];
            exact[y] = -(x.transpose() - c.mean).squaredNorm() / (2.0 * c.variance) -
                       0.5 * dim * std::log(2.0 * std::numbers::pi * c.variance) + std::log(c.prior);
        }
        model = (model.array() - model.maxCoeff()).exp();
        model /= model.sum();
        exact = (exact.array() - exact.maxCoeff()).exp();
        exact /= exact.sum();
        worst = std::max(worst, (model - exact).cwiseAbs().maxCoeff());
    }
    return worst;
}

}  // namespace marginlab::bounds
