#include "marginlab/metrics.hpp"
#include "marginlab/scorer.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace marginlab;
using namespace marginlab::scorer;

namespace {

Matrix random_inputs(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d) {
    std::normal_distribution<double> z(0.0, 1.0);
    Matrix m(n, d);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = z(rng);
    return m;
}

// Row-by-row recomputation with explicit loops.
Matrix loop_forward(const ScorerParams& p, const Matrix& x) {
    Matrix out(x.rows(), p.num_classes());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        std::vector<double> h;
        for (Eigen::Index j = 0; j < x.cols(); ++j) h.push_back(x(i, j));
        for (const auto& layer : p.hidden) {
            std::vector<double> next(static_cast<std::size_t>(layer.weight.rows()));
            for (Eigen::Index o = 0; o < layer.weight.rows(); ++o) {
                double s = layer.bias[o];
                for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) s += layer.weight(o, j) * h[static_cast<std::size_t>(j)];
                next[static_cast<std::size_t>(o)] = s > 0.0 ? s : 0.0;
            }
            h = std::move(next);
        }
        for (Eigen::Index y = 0; y < p.num_classes(); ++y) {
            double s = p.head_bias[y];
            for (Eigen::Index k = 0; k < p.embedding_dim(); ++k) s += p.head_weights(k, y) * h[static_cast<std::size_t>(k)];
            out(i, y) = s;
        }
    }
    return out;
}

double gaussian_density(const Vector& x, const ClassGaussian& c) {
    const double d = static_cast<double>(x.size());
    return std::exp(-(x - c.mean).squaredNorm() / (2 * c.variance)) / std::pow(2 * std::numbers::pi * c.variance, d / 2);
}

}  // namespace

TEST_CASE("init_params shapes and determinism") {
    const auto p = init_params({2, 16, 8, 2, 2}, 7);
    REQUIRE(p.hidden.size() == 3);
    CHECK(p.hidden[0].weight.rows() == 16);
    CHECK(p.hidden[0].weight.cols() == 2);
    CHECK(p.hidden[1].weight.rows() == 8);
    CHECK(p.hidden[2].weight.rows() == 2);
    CHECK(p.embedding_dim() == 2);
    CHECK(p.num_classes() == 2);
    CHECK(p.input_dim() == 2);
    CHECK(p.parameter_count() == 16 * 2 + 16 + 8 * 16 + 8 + 2 * 8 + 2 + 2 * 2 + 2);
    CHECK(p.hidden[1].bias.isZero());

    const auto q = init_params({2, 16, 8, 2, 2}, 7);
    bool same = true;
    std::vector<Matrix> a, b;
    p.for_each_tensor([&](const std::string&, Eigen::Map<const Matrix> t) { a.emplace_back(t); });
    q.for_each_tensor([&](const std::string&, Eigen::Map<const Matrix> t) { b.emplace_back(t); });
    for (std::size_t i = 0; i < a.size(); ++i) same = same && a[i] == b[i];
    CHECK(same);
    CHECK(init_params({2, 16, 8, 2, 2}, 8).hidden[0].weight != p.hidden[0].weight);

    CHECK_THROWS_AS(init_params({2}, 0), std::invalid_argument);
    CHECK_THROWS_AS(init_params({2, 0, 2}, 0), std::invalid_argument);

    // Empirical weight variance near 2 / fan_in.
    const auto wide = init_params({400, 400, 2}, 1);
    const double var = wide.hidden[0].weight.squaredNorm() / static_cast<double>(wide.hidden[0].weight.size());
    CHECK(var == doctest::Approx(2.0 / 400).epsilon(0.02));
}

TEST_CASE("forward pass") {
    auto p = init_params({3, 4, 2}, 1);
    p.head_weights.setZero();
    p.head_bias << 1.0, -1.0;
    std::mt19937_64 rng(1);
    const Matrix x = random_inputs(rng, 5, 3);
    const auto r = forward(p, x);
    for (Eigen::Index i = 0; i < 5; ++i) {
        CHECK(r.logits(i, 0) == 1.0);
        CHECK(r.logits(i, 1) == -1.0);
    }

    ScorerParams id;
    id.hidden.push_back({Matrix::Identity(2, 2), Vector::Zero(2)});
    id.head_weights = Matrix::Identity(2, 2);
    id.head_bias = Vector::Zero(2);
    Matrix pt(1, 2);
    pt << 1.5, -2.0;
    const auto rr = forward(id, pt);
    CHECK(rr.logits(0, 0) == 1.5);
    CHECK(rr.logits(0, 1) == 0.0);

    for (int t = 0; t < 10; ++t) {
        const auto q = init_params({4, 7, 5, 3, 3}, 100 + t);
        const Matrix xs = random_inputs(rng, 12, 4);
        const auto f = forward(q, xs);
        CHECK((f.logits - loop_forward(q, xs)).cwiseAbs().maxCoeff() < 1e-12);
        Matrix affine = f.embeddings * q.head_weights;
        affine.rowwise() += q.head_bias.transpose();
        CHECK((f.logits - affine).cwiseAbs().maxCoeff() < 1e-12);
    }
    CHECK_THROWS_AS(forward(p, random_inputs(rng, 2, 2)), std::invalid_argument);
}

TEST_CASE("backward for plain cross-entropy") {
    std::mt19937_64 rng(2);
    const auto p = init_params({3, 5, 3}, 4);
    const Matrix x = random_inputs(rng, 6, 3);
    const Labels labels{0, 1, 2, 0, 1, 2};
    const auto g = backward(p, x, labels, losses::LossSpec::plain(3));
    const auto f = forward(p, x);
    Vector expect = Vector::Zero(3);
    for (Eigen::Index i = 0; i < 6; ++i) {
        Vector e = (f.logits.row(i).transpose().array() - f.logits.row(i).maxCoeff()).exp();
        e /= e.sum();
        e[labels[static_cast<std::size_t>(i)]] -= 1.0;
        expect += e / 6.0;
    }
    CHECK((g.grads.head_bias - expect).cwiseAbs().maxCoeff() < 1e-14);

    const auto frozen = backward(p, x, labels, losses::LossSpec::plain(3), {.head_trainable = false});
    CHECK(frozen.grads.head_weights.isZero());
    CHECK(frozen.grads.head_bias.isZero());
    CHECK(frozen.grads.hidden[0].weight == g.grads.hidden[0].weight);
}

TEST_CASE("pull term with singleton classes contributes no gradient") {
    auto p = init_params({2, 4, 2}, 3);
    Matrix x(2, 2);
    x << 0.3, -0.4, 0.3, -0.4;
    const Labels labels{0, 1};
    auto spec = losses::LossSpec::plain(2);
    const auto base = backward(p, x, labels, spec);
    spec.lambda_pull = 1.0;
    spec.alpha << 0.5, 0.5;
    const auto pulled = backward(p, x, labels, spec);
    CHECK(pulled.objective.pull == 0.0);
    CHECK(pulled.grads.hidden[0].weight == base.grads.hidden[0].weight);
}

TEST_CASE("finite-difference agreement") {
    std::mt19937_64 rng(5);
    const auto p = init_params({3, 6, 4, 3}, 9);
    const Matrix x = random_inputs(rng, 10, 3);
    const Labels labels{0, 1, 2, 0, 1, 2, 0, 1, 2, 0};
    CHECK(finite_diff_check(p, x, labels, losses::LossSpec::plain(3)) < 1e-4);

    auto spec = losses::LossSpec::plain(3);
    spec.lambda_pull = 0.01;
    spec.alpha << 0.5, 0.3, 0.2;
    CHECK(finite_diff_check(p, x, labels, spec) < 1e-4);

    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto inst = marginlab::testing::random_elm_instance(1000 + s);
        CHECK(finite_diff_check(inst.params, inst.inputs, inst.labels, inst.spec) < 1e-4);
    }

    // A dead unit makes its incoming weights irrelevant: both gradients vanish.
    auto dead = p;
    dead.hidden[0].weight.row(0).setZero();
    dead.hidden[0].bias[0] = -1.0;
    const auto g = backward(dead, x, labels, losses::LossSpec::plain(3));
    CHECK(g.grads.hidden[0].weight.row(0).isZero());
    CHECK(finite_diff_check(dead, x, labels, losses::LossSpec::plain(3)) < 1e-4);
    CHECK_THROWS(finite_diff_check(p, x, labels, losses::LossSpec::plain(3), {.step = 0.0}));
}

TEST_CASE("bayes gaussian head") {
    ClassGaussianSpec spec(2);
    spec[0].mean = Vector::Zero(2);
    spec[0].mean << 1.0, 0.0;
    spec[1].mean = Vector::Zero(2);
    spec[1].mean << -1.0, 0.0;
    spec[0].prior = spec[1].prior = 0.5;
    const auto h = bayes_gaussian_head(spec);
    CHECK(h.weights(0, 0) == 1.0);
    CHECK(h.weights(0, 1) == -1.0);
    CHECK(h.weights(1, 0) == 0.0);
    CHECK(h.bias[0] == doctest::Approx(-0.5 + std::log(0.5)));
    CHECK(h.bias[1] == doctest::Approx(-0.5 + std::log(0.5)));

    spec[0].prior = 0.9;
    spec[1].prior = 0.1;
    const auto skew = bayes_gaussian_head(spec);
    CHECK(skew.bias[0] - skew.bias[1] == doctest::Approx(std::log(9.0)).epsilon(1e-12));
    // On the midline the head prefers the frequent class.
    CHECK(skew.bias[0] > skew.bias[1]);

    spec[1].variance = 0.0;
    CHECK_THROWS(bayes_gaussian_head(spec));
    spec[1].variance = 1.0;
    spec[1].prior = 0.2;
    CHECK_THROWS(bayes_gaussian_head(spec));

    // Random 3-class shared-variance spec against Bayes' rule.
    std::mt19937_64 rng(12);
    std::normal_distribution<double> z(0.0, 1.0);
    ClassGaussianSpec three(3);
    const std::vector<double> priors{0.6, 0.3, 0.1};
    for (int y = 0; y < 3; ++y) {
        three[y].mean = Vector(4);
        for (int j = 0; j < 4; ++j) three[y].mean[j] = z(rng);
        three[y].variance = 1.7;
        three[y].prior = priors[y];
    }
    const auto bh = bayes_gaussian_head(three);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        Vector x(4);
        for (int j = 0; j < 4; ++j) x[j] = 2.0 * z(rng);
        Vector logits = bh.weights.transpose() * x + bh.bias;
        Vector post = (logits.array() - logits.maxCoeff()).exp();
        post /= post.sum();
        Vector direct(3);
        for (int y = 0; y < 3; ++y) direct[y] = gaussian_density(x, three[y]) * three[y].prior;
        direct /= direct.sum();
        worst = std::max(worst, (post - direct).cwiseAbs().maxCoeff());
        Eigen::Index a = 0, b = 0;
        post.maxCoeff(&a);
        direct.maxCoeff(&b);
        CHECK(a == b);
    }
    CHECK(worst < 1e-10);
}

TEST_CASE("prototype head") {
    Matrix emb(2, 2);
    emb << 1.0, 0.0, 0.0, 1.0;
    const auto h = prototype_head(emb, Labels{0, 1}, 2, 1.0);
    Vector logits = h.weights.transpose() * emb.row(0).transpose() + h.bias;
    CHECK(logits[0] == doctest::Approx(0.5));
    CHECK(logits[1] == doctest::Approx(-0.5));

    Matrix twin(2, 2);
    twin << 0.3, 0.7, 0.3, 0.7;
    const auto ht = prototype_head(twin, Labels{0, 1}, 2, 1.0);
    CHECK(ht.weights.col(0) == ht.weights.col(1));
    CHECK(ht.bias[0] == ht.bias[1]);

    CHECK_THROWS(prototype_head(emb, Labels{0, 0}, 2, 1.0));
    CHECK_THROWS(prototype_head(emb, Labels{0, 1}, 2, 0.0));

    // Matches the Bayes head with uniform priors once the shared log prior is removed.
    std::mt19937_64 rng(4);
    const Matrix e = random_inputs(rng, 30, 3);
    Labels labels;
    for (int i = 0; i < 30; ++i) labels.push_back(i % 3);
    const double v2 = 0.7;
    const auto ph = prototype_head(e, labels, 3, v2);
    const auto cents = losses::class_centroids(e, labels, 3);
    ClassGaussianSpec spec(3);
    for (int y = 0; y < 3; ++y) spec[y] = {cents.means.row(y).transpose(), v2, 1.0 / 3.0};
    const auto bh = bayes_gaussian_head(spec);
    CHECK((ph.weights - bh.weights).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((ph.bias.array() - (bh.bias.array() - std::log(1.0 / 3.0))).abs().maxCoeff() < 1e-12);
}

TEST_CASE("tau normalisation") {
    Matrix w(2, 3);
    w << 3.0, 0.0, 1.0, 4.0, 0.0, 1.0;
    CHECK(tau_normalize_head(w, 0.0) == w);
    const Matrix unit = tau_normalize_head(w, 1.0);
    CHECK(unit.col(0).norm() == doctest::Approx(1.0));
    CHECK(unit.col(2).norm() == doctest::Approx(1.0));
    CHECK(unit.col(1).isZero());

    Matrix four(2, 1);
    four << 0.0, 4.0;
    CHECK(tau_normalize_head(four, 0.5)(1, 0) == doctest::Approx(2.0));
    CHECK_THROWS(tau_normalize_head(w, -1.0));

    // Equal column norms: argmax of the bias-free logits is unchanged.
    std::mt19937_64 rng(6);
    Matrix eq = random_inputs(rng, 3, 4);
    for (Eigen::Index y = 0; y < 4; ++y) eq.col(y) *= 2.5 / eq.col(y).norm();
    const Matrix x = random_inputs(rng, 50, 3);
    const Matrix scaled = tau_normalize_head(eq, 0.7);
    CHECK(metrics::predict(x * eq) == metrics::predict(x * scaled));
}
