#include "marginlab/trainer.hpp"

#include "marginlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace marginlab::train {

Schedule parse_schedule(std::string_view name) {
    if (name == "constant") return Schedule::constant;
    if (name == "cosine") return Schedule::cosine;
    if (name == "warmup_step") return Schedule::warmup_step;
    throw std::invalid_argument("unknown schedule '" + std::string(name) + "'");
}

std::string to_string(Schedule s) {
    switch (s) {
        case Schedule::constant: return "constant";
        case Schedule::cosine: return "cosine";
        case Schedule::warmup_step: return "warmup_step";
    }
    return "?";
}

HeadMode parse_head_mode(std::string_view name) {
    if (name == "learned") return HeadMode::learned;
    if (name == "prototype") return HeadMode::prototype;
    throw std::invalid_argument("unknown head mode '" + std::string(name) + "'");
}

std::string to_string(HeadMode m) { return m == HeadMode::learned ? "learned" : "prototype"; }

void TrainConfig::validate() const {
    if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw std::invalid_argument("learning rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight decay must be non-negative");
    if (warmup_epochs < 0) throw std::invalid_argument("warmup epochs must be non-negative");
    if (!(decay_factor > 0.0)) throw std::invalid_argument("decay factor must be positive");
    if (!(prototype_v2 > 0.0)) throw std::invalid_argument("prototype v^2 must be positive");
    if (!(centroid_decay >= 0.0 && centroid_decay < 1.0)) throw std::invalid_argument("centroid decay in [0, 1)");
}

double lr_at(const TrainConfig& config, int epoch, int step, int steps_per_epoch) {
    const double S = std::max(steps_per_epoch, 1);
    switch (config.schedule) {
        case Schedule::constant:
            return config.base_lr;
        case Schedule::cosine: {
            const double progress = (epoch + step / S) / std::max(config.epochs, 1);
            return config.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
        }
        case Schedule::warmup_step: {
            double lr = config.base_lr;
            if (config.warmup_epochs > 0) lr *= std::min(1.0, (epoch + (step + 1) / S) / config.warmup_epochs);
            for (int d : config.decay_epochs) {
                if (epoch >= d) lr *= config.decay_factor;
            }
            return lr;
        }
    }
    return config.base_lr;
}

void sgd_momentum_step(scorer::ScorerParams& params, const scorer::ScorerParams& grads,
                       scorer::ScorerParams& velocity, double lr, double momentum, double weight_decay) {
    std::vector<Matrix> g;
    grads.for_each_tensor([&](const std::string&, Eigen::Map<const Matrix> t) { g.emplace_back(t); });
    for (const auto& t : g) {
        if (!t.allFinite()) throw std::runtime_error("sgd_momentum_step: non-finite gradient");
    }
    std::vector<Eigen::Map<Matrix>> v;
    velocity.for_each_tensor([&](const std::string&, Eigen::Map<Matrix> t) { v.push_back(t); });
    if (v.size() != g.size()) throw std::invalid_argument("sgd_momentum_step: tensor count mismatch");
    std::size_t k = 0;
    params.for_each_tensor([&](const std::string& name, Eigen::Map<Matrix> theta) {
        auto& vel = v[k];
        const Matrix& grad = g[k++];
        if (grad.rows() != theta.rows() || grad.cols() != theta.cols() || vel.rows() != theta.rows() ||
            vel.cols() != theta.cols()) {
            throw std::invalid_argument("sgd_momentum_step: shape mismatch in " + name);
        }
        vel = momentum * vel + (grad + weight_decay * theta);
        theta -= lr * vel;
    });
}

scorer::ScorerParams zeros_like(const scorer::ScorerParams& params) {
    scorer::ScorerParams z = params;
    z.for_each_tensor([](const std::string&, Eigen::Map<Matrix> t) { t.setZero(); });
    return z;
}

namespace {

void set_prototype_head(scorer::ScorerParams& params, const Matrix& centroids, double v2) {
    const auto head = scorer::prototype_head_from_centroids(centroids, v2);
    params.head_weights = head.weights;
    params.head_bias = head.bias;
}

void fill_accuracy(const scorer::ScorerParams& params, const data::Dataset& data, EpochRecord& rec) {
    const auto fr = scorer::forward(params, data.inputs);
    const Labels pred = metrics::predict(fr.logits);
    rec.train_accuracy = metrics::accuracy(pred, data.labels);
    std::vector<int> right(static_cast<std::size_t>(data.num_classes), 0);
    const auto counts = data.counts();
    for (std::size_t i = 0; i < pred.size(); ++i) right[static_cast<std::size_t>(data.labels[i])] += pred[i] == data.labels[i];
    double sum = 0.0;
    int present = 0;
    for (std::size_t y = 0; y < counts.size(); ++y) {
        if (counts[y] == 0) continue;
        sum += static_cast<double>(right[y]) / counts[y];
        ++present;
    }
    rec.train_balanced_accuracy = present > 0 ? sum / present : 0.0;
}

}  // namespace

TrainResult train(const data::Dataset& data, const std::vector<int>& layer_sizes, const losses::LossSpec& spec,
                  const TrainConfig& config) {
    return train_from(data, scorer::init_params(layer_sizes, config.seed), spec, config);
}

TrainResult train_from(const data::Dataset& data, scorer::ScorerParams initial, const losses::LossSpec& spec,
                       const TrainConfig& config) {
    config.validate();
    spec.validate();
    data.validate();
    if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
    if (spec.num_classes() != initial.num_classes() || data.num_classes > initial.num_classes()) {
        throw std::invalid_argument("train: class count mismatch between data, loss and scorer");
    }

    TrainResult out;
    out.params = std::move(initial);
    auto& params = out.params;
    scorer::ScorerParams velocity = zeros_like(params);
    const int L = static_cast<int>(params.num_classes());
    const bool prototype = config.head_mode == HeadMode::prototype;
    scorer::BackwardOptions options;
    options.head_trainable = !prototype;

    if (prototype) {
        const auto fr = scorer::forward(params, data.inputs);
        out.centroids = losses::class_centroids(fr.embeddings, data.labels, L).means;
        set_prototype_head(params, out.centroids, config.prototype_v2);
    }

    const auto N = static_cast<Eigen::Index>(data.size());
    const int steps = static_cast<int>((N + config.batch_size - 1) / config.batch_size);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
    std::mt19937_64 rng(config.seed ^ 0x5DEECE66DULL);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::shuffle(order.begin(), order.end(), rng);
        EpochRecord rec;
        rec.epoch = epoch;
        double seen = 0.0;
        for (int step = 0; step < steps; ++step) {
            const auto begin = static_cast<std::size_t>(step) * static_cast<std::size_t>(config.batch_size);
            const auto end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
            const data::Dataset batch = data.subset({order.begin() + static_cast<std::ptrdiff_t>(begin),
                                                     order.begin() + static_cast<std::ptrdiff_t>(end)});
            if (prototype) set_prototype_head(params, out.centroids, config.prototype_v2);

            scorer::Gradients g;
            try {
                g = scorer::backward(params, batch.inputs, batch.labels, spec, options);
            } catch (const std::runtime_error&) {
                throw DivergenceError(epoch, "training diverged at epoch " + std::to_string(epoch) +
                                                 ": non-finite loss");
            }
            const double lr = lr_at(config, epoch, step, steps);
            sgd_momentum_step(params, g.grads, velocity, lr, config.momentum, config.weight_decay);
            if (!params.all_finite()) {
                throw DivergenceError(epoch, "training diverged at epoch " + std::to_string(epoch) +
                                                 ": non-finite parameters");
            }

            if (prototype) {
                const auto fr = scorer::forward(params, batch.inputs);
                const auto c = losses::class_centroids(fr.embeddings, batch.labels, L);
                for (int y = 0; y < L; ++y) {
                    if (c.counts[static_cast<std::size_t>(y)] == 0) continue;
                    out.centroids.row(y) =
                        config.centroid_decay * out.centroids.row(y) + (1.0 - config.centroid_decay) * c.means.row(y);
                }
            }

            const double w = static_cast<double>(end - begin);
            seen += w;
            rec.loss += w * g.objective.total;
            rec.ce += w * g.objective.ce;
            rec.pull += w * g.objective.pull;
            rec.push += w * g.objective.push;
            rec.center += w * g.objective.center;
            rec.lr = lr;
        }
        rec.loss /= seen;
        rec.ce /= seen;
        rec.pull /= seen;
        rec.push /= seen;
        rec.center /= seen;
        if (prototype) set_prototype_head(params, out.centroids, config.prototype_v2);
        fill_accuracy(params, data, rec);
        out.history.push_back(rec);
    }
    if (prototype) set_prototype_head(params, out.centroids, config.prototype_v2);
    return out;
}

}  // namespace marginlab::train
