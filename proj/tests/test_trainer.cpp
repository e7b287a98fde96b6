#include "marginlab/trainer.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace marginlab;
using namespace marginlab::train;

namespace {

std::vector<Matrix> tensors(const scorer::ScorerParams& p) {
    std::vector<Matrix> out;
    p.for_each_tensor([&](const std::string&, Eigen::Map<const Matrix> t) { out.emplace_back(t); });
    return out;
}

bool same_params(const scorer::ScorerParams& a, const scorer::ScorerParams& b) {
    return tensors(a) == tensors(b);
}

double max_diff(const scorer::ScorerParams& a, const scorer::ScorerParams& b) {
    const auto ta = tensors(a), tb = tensors(b);
    double worst = 0.0;
    for (std::size_t i = 0; i < ta.size(); ++i) worst = std::max(worst, (ta[i] - tb[i]).cwiseAbs().maxCoeff());
    return worst;
}

data::Dataset separable(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 0.3);
    data::Dataset d;
    d.num_classes = 2;
    d.inputs = Matrix(n, 2);
    for (int i = 0; i < n; ++i) {
        const int y = i % 2;
        d.labels.push_back(y);
        d.inputs(i, 0) = (y ? 2.0 : -2.0) + z(rng);
        d.inputs(i, 1) = z(rng);
    }
    return d;
}

// Full-batch gradient descent on one hidden layer with loops only.
struct Reference {
    Matrix w1;  // h x d
    Vector b1;
    Matrix w2;  // h x L
    Vector b2;

    void step(const Matrix& x, const Labels& labels, double lr) {
        const Eigen::Index n = x.rows(), h = w1.rows(), d = w1.cols(), L = w2.cols();
        Matrix gw1 = Matrix::Zero(h, d), gw2 = Matrix::Zero(h, L);
        Vector gb1 = Vector::Zero(h), gb2 = Vector::Zero(L);
        for (Eigen::Index i = 0; i < n; ++i) {
            Vector pre(h), act(h);
            for (Eigen::Index u = 0; u < h; ++u) {
                pre[u] = b1[u];
                for (Eigen::Index j = 0; j < d; ++j) pre[u] += w1(u, j) * x(i, j);
                act[u] = pre[u] > 0 ? pre[u] : 0.0;
            }
            Vector f(L);
            for (Eigen::Index y = 0; y < L; ++y) {
                f[y] = b2[y];
                for (Eigen::Index u = 0; u < h; ++u) f[y] += w2(u, y) * act[u];
            }
            Vector p = (f.array() - f.maxCoeff()).exp();
            p /= p.sum();
            p[labels[static_cast<std::size_t>(i)]] -= 1.0;
            p /= static_cast<double>(n);
            for (Eigen::Index y = 0; y < L; ++y) {
                gb2[y] += p[y];
                for (Eigen::Index u = 0; u < h; ++u) gw2(u, y) += act[u] * p[y];
            }
            for (Eigen::Index u = 0; u < h; ++u) {
                if (pre[u] <= 0) continue;
                double back = 0.0;
                for (Eigen::Index y = 0; y < L; ++y) back += w2(u, y) * p[y];
                gb1[u] += back;
                for (Eigen::Index j = 0; j < d; ++j) gw1(u, j) += back * x(i, j);
            }
        }
        w1 -= lr * gw1;
        b1 -= lr * gb1;
        w2 -= lr * gw2;
        b2 -= lr * gb2;
    }
};

}  // namespace

TEST_CASE("learning-rate schedules") {
    TrainConfig c;
    c.base_lr = 0.4;
    c.schedule = Schedule::warmup_step;
    c.warmup_epochs = 15;
    c.decay_epochs = {30};
    c.decay_factor = 0.1;
    CHECK(lr_at(c, 14, 9, 10) == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(lr_at(c, 15, 0, 10) == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(lr_at(c, 0, 0, 10) == doctest::Approx(0.4 / 150).epsilon(1e-15));
    CHECK(lr_at(c, 7, 4, 10) == doctest::Approx(0.4 * 7.5 / 15).epsilon(1e-15));
    CHECK(lr_at(c, 29, 9, 10) == doctest::Approx(0.4));
    CHECK(lr_at(c, 30, 0, 10) == doctest::Approx(0.04).epsilon(1e-15));
    c.decay_epochs = {30, 40};
    CHECK(lr_at(c, 45, 0, 10) == doctest::Approx(0.004).epsilon(1e-14));

    TrainConfig cos;
    cos.base_lr = 0.4;
    cos.schedule = Schedule::cosine;
    cos.epochs = 10;
    CHECK(lr_at(cos, 0, 0, 8) == doctest::Approx(0.4));
    CHECK(lr_at(cos, 5, 0, 8) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(lr_at(cos, 9, 7, 8) > 0.0);

    TrainConfig flat;
    CHECK(lr_at(flat, 100, 3, 5) == flat.base_lr);
    CHECK(parse_schedule("cosine") == Schedule::cosine);
    CHECK_THROWS(parse_schedule("linear"));
    CHECK(to_string(parse_head_mode("prototype")) == "prototype");
}

TEST_CASE("momentum step") {
    auto p = scorer::init_params({2, 3, 2}, 1);
    const auto start = p;
    auto g = zeros_like(p);
    g.head_bias << 1.0, -2.0;
    auto v = zeros_like(p);

    auto plain = p;
    auto pv = zeros_like(p);
    sgd_momentum_step(plain, g, pv, 0.1, 0.0, 0.0);
    CHECK(plain.head_bias[0] == doctest::Approx(start.head_bias[0] - 0.1));
    CHECK(plain.head_bias[1] == doctest::Approx(start.head_bias[1] + 0.2));

    auto still = p;
    auto sv = zeros_like(p);
    sgd_momentum_step(still, zeros_like(p), sv, 0.1, 0.9, 0.0);
    CHECK(same_params(still, start));

    sgd_momentum_step(p, g, v, 0.1, 0.9, 0.0);
    const auto after_one = p;
    sgd_momentum_step(p, g, v, 0.1, 0.9, 0.0);
    CHECK(p.head_bias[0] - after_one.head_bias[0] == doctest::Approx(-0.1 * 1.9 * 1.0).epsilon(1e-14));
    CHECK(p.head_bias[1] - after_one.head_bias[1] == doctest::Approx(-0.1 * 1.9 * -2.0).epsilon(1e-14));

    // Weight decay enters the velocity.
    auto wd = start;
    auto wv = zeros_like(wd);
    sgd_momentum_step(wd, zeros_like(wd), wv, 0.5, 0.0, 0.1);
    CHECK(wd.head_weights.isApprox(start.head_weights * 0.95));

    auto bad = zeros_like(p);
    bad.head_bias[0] = std::nan("");
    CHECK_THROWS_AS(sgd_momentum_step(p, bad, v, 0.1, 0.9, 0.0), std::runtime_error);
}

TEST_CASE("zero epochs leave parameters untouched") {
    const auto d = separable(20, 1);
    TrainConfig c;
    c.epochs = 0;
    const auto init = scorer::init_params({2, 4, 2}, 3);
    const auto r = train_from(d, init, losses::LossSpec::plain(2), c);
    CHECK(same_params(r.params, init));
    CHECK(r.history.empty());
}

TEST_CASE("separable data reaches full training accuracy") {
    const auto d = separable(100, 2);
    TrainConfig c;
    c.epochs = 200;
    c.batch_size = 16;
    c.seed = 4;
    const auto r = train::train(d, {2, 8, 2, 2}, losses::LossSpec::plain(2), c);
    REQUIRE(r.history.size() == 200);
    CHECK(r.history.back().train_accuracy == 1.0);
    CHECK(r.history.back().loss < r.history.front().loss);
}

TEST_CASE("training is deterministic") {
    const auto d = data::two_moons_lt(300, 0.2, 0.1, 5);
    auto spec = losses::LossSpec::plain(2);
    spec.lambda_pull = 0.01;
    spec.alpha << 0.8, 0.2;
    TrainConfig c;
    c.epochs = 5;
    c.batch_size = 32;
    c.seed = 9;
    const auto a = train::train(d, {2, 8, 2, 2}, spec, c);
    const auto b = train::train(d, {2, 8, 2, 2}, spec, c);
    CHECK(same_params(a.params, b.params));
    for (std::size_t e = 0; e < a.history.size(); ++e) {
        CHECK(a.history[e].loss == b.history[e].loss);
        CHECK(a.history[e].pull == b.history[e].pull);
    }
    c.seed = 10;
    CHECK_FALSE(same_params(train::train(d, {2, 8, 2, 2}, spec, c).params, a.params));
}

TEST_CASE("small learning rates move parameters proportionally") {
    const auto d = separable(30, 3);
    TrainConfig c;
    c.epochs = 1;
    c.batch_size = 30;
    c.momentum = 0.0;
    c.weight_decay = 0.0;
    const auto init = scorer::init_params({2, 4, 2}, 2);
    c.base_lr = 1e-6;
    const double small = max_diff(train_from(d, init, losses::LossSpec::plain(2), c).params, init);
    c.base_lr = 2e-6;
    const double twice = max_diff(train_from(d, init, losses::LossSpec::plain(2), c).params, init);
    CHECK(small > 0.0);
    CHECK(twice / small == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("plain cross-entropy matches a hand-rolled loop") {
    const auto d = separable(10, 7);
    const auto init = scorer::init_params({2, 5, 2}, 11);
    TrainConfig c;
    c.epochs = 25;
    c.batch_size = 10;
    c.momentum = 0.0;
    c.weight_decay = 0.0;
    c.base_lr = 0.05;
    const auto r = train_from(d, init, losses::LossSpec::plain(2), c);

    Reference ref{init.hidden[0].weight, init.hidden[0].bias, init.head_weights, init.head_bias};
    for (int e = 0; e < 25; ++e) ref.step(d.inputs, d.labels, 0.05);
    CHECK((r.params.hidden[0].weight - ref.w1).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((r.params.hidden[0].bias - ref.b1).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((r.params.head_weights - ref.w2).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((r.params.head_bias - ref.b2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("prototype head mode") {
    const auto d = separable(60, 8);
    TrainConfig c;
    c.epochs = 30;
    c.batch_size = 16;
    c.head_mode = HeadMode::prototype;
    c.prototype_v2 = 1.0;
    const auto r = train::train(d, {2, 8, 2, 2}, losses::LossSpec::plain(2), c);
    const auto expect = scorer::prototype_head_from_centroids(r.centroids, 1.0);
    CHECK(r.params.head_weights == expect.weights);
    CHECK(r.params.head_bias == expect.bias);
    CHECK(r.history.back().train_accuracy > 0.9);
}

TEST_CASE("divergence is reported with its epoch") {
    const auto d = separable(40, 9);
    TrainConfig c;
    c.epochs = 50;
    c.batch_size = 40;
    c.base_lr = 1e200;
    c.momentum = 0.0;
    try {
        train::train(d, {2, 8, 2}, losses::LossSpec::plain(2), c);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.epoch() >= 0);
        CHECK(e.epoch() < 50);
        CHECK(std::string(e.what()).find("epoch " + std::to_string(e.epoch())) != std::string::npos);
    }

    TrainConfig bad;
    bad.momentum = 1.0;
    CHECK_THROWS(train::train(d, {2, 2}, losses::LossSpec::plain(2), bad));
    CHECK_THROWS(train::train(d, {2, 3}, losses::LossSpec::plain(2), TrainConfig{}));
}
