#include "marginlab/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace marginlab::scorer {

Eigen::Index ScorerParams::input_dim() const {
    return hidden.empty() ? head_weights.rows() : hidden.front().weight.cols();
}

void ScorerParams::for_each_tensor(const std::function<void(const std::string&, Eigen::Map<Matrix>)>& fn) {
    for (std::size_t l = 0; l < hidden.size(); ++l) {
        auto& layer = hidden[l];
        fn("hidden." + std::to_string(l) + ".weight",
           Eigen::Map<Matrix>(layer.weight.data(), layer.weight.rows(), layer.weight.cols()));
        fn("hidden." + std::to_string(l) + ".bias", Eigen::Map<Matrix>(layer.bias.data(), layer.bias.size(), 1));
    }
    fn("head.weight", Eigen::Map<Matrix>(head_weights.data(), head_weights.rows(), head_weights.cols()));
    fn("head.bias", Eigen::Map<Matrix>(head_bias.data(), head_bias.size(), 1));
}

void ScorerParams::for_each_tensor(
    const std::function<void(const std::string&, Eigen::Map<const Matrix>)>& fn) const {
    for (std::size_t l = 0; l < hidden.size(); ++l) {
        const auto& layer = hidden[l];
        fn("hidden." + std::to_string(l) + ".weight",
           Eigen::Map<const Matrix>(layer.weight.data(), layer.weight.rows(), layer.weight.cols()));
        fn("hidden." + std::to_string(l) + ".bias",
           Eigen::Map<const Matrix>(layer.bias.data(), layer.bias.size(), 1));
    }
    fn("head.weight", Eigen::Map<const Matrix>(head_weights.data(), head_weights.rows(), head_weights.cols()));
    fn("head.bias", Eigen::Map<const Matrix>(head_bias.data(), head_bias.size(), 1));
}

std::size_t ScorerParams::parameter_count() const {
    std::size_t n = 0;
    for_each_tensor([&](const std::string&, Eigen::Map<const Matrix> t) { n += static_cast<std::size_t>(t.size()); });
    return n;
}

bool ScorerParams::all_finite() const {
    bool ok = true;
    for_each_tensor([&](const std::string&, Eigen::Map<const Matrix> t) { ok = ok && t.allFinite(); });
    return ok;
}

ScorerParams init_params(const std::vector<int>& layer_sizes, std::uint64_t seed) {
    if (layer_sizes.size() < 2) throw std::invalid_argument("init_params: need at least input and output sizes");
    for (int s : layer_sizes) {
        if (s <= 0) throw std::invalid_argument("init_params: layer sizes must be positive");
    }
    std::mt19937_64 rng(seed);
    auto draw = [&](Eigen::Index rows, Eigen::Index cols, int fan_in) {
        // U(-r, r) has variance r^2 / 3 = 2 / fan_in.
        const double r = std::sqrt(6.0 / fan_in);
        std::uniform_real_distribution<double> u(-r, r);
        Matrix m(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j) {
            for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = u(rng);
        }
        return m;
    };

    ScorerParams p;
    for (std::size_t l = 0; l + 2 < layer_sizes.size(); ++l) {
        const int in = layer_sizes[l];
        const int out = layer_sizes[l + 1];
        p.hidden.push_back({draw(out, in, in), Vector::Zero(out)});
    }
    const int k = layer_sizes[layer_sizes.size() - 2];
    const int classes = layer_sizes.back();
    p.head_weights = draw(k, classes, k);
    p.head_bias = Vector::Zero(classes);
    return p;
}

ForwardResult forward(const ScorerParams& params, const Matrix& inputs) {
    if (inputs.cols() != params.input_dim()) {
        throw std::invalid_argument("forward: input dimension " + std::to_string(inputs.cols()) +
                                    " does not match first layer " + std::to_string(params.input_dim()));
    }
    ForwardResult r;
    Matrix h = inputs;
    for (const auto& layer : params.hidden) {
        Matrix z = h * layer.weight.transpose();
        z.rowwise() += layer.bias.transpose();
        r.activations.push_back(std::move(h));
        h = z.cwiseMax(0.0);
        r.pre_activations.push_back(std::move(z));
    }
    r.logits = h * params.head_weights;
    r.logits.rowwise() += params.head_bias.transpose();
    r.embeddings = std::move(h);
    return r;
}

Gradients backward(const ScorerParams& params, const Matrix& inputs, const Labels& labels,
                   const losses::LossSpec& spec, const BackwardOptions& options) {
    const ForwardResult fr = forward(params, inputs);
    Gradients g;
    g.objective = losses::elm_objective(fr.embeddings, fr.logits, labels, spec);
    if (!std::isfinite(g.objective.total) || !g.objective.grad_logits.allFinite() ||
        !g.objective.grad_embeddings.allFinite()) {
        throw std::runtime_error("backward: non-finite objective or gradient");
    }

    const Matrix& g_logits = g.objective.grad_logits;
    g.grads.hidden.resize(params.hidden.size());
    if (options.head_trainable) {
        g.grads.head_weights = fr.embeddings.transpose() * g_logits;
        g.grads.head_bias = g_logits.colwise().sum().transpose();
    } else {
        g.grads.head_weights = Matrix::Zero(params.head_weights.rows(), params.head_weights.cols());
        g.grads.head_bias = Vector::Zero(params.head_bias.size());
    }

    Matrix upstream = g_logits * params.head_weights.transpose() + g.objective.grad_embeddings;
    for (std::size_t l = params.hidden.size(); l-- > 0;) {
        // Subgradient 0 at the rectifier kink.
        const Matrix dz = upstream.cwiseProduct((fr.pre_activations[l].array() > 0.0).cast<double>().matrix());
        g.grads.hidden[l].weight = dz.transpose() * fr.activations[l];
        g.grads.hidden[l].bias = dz.colwise().sum().transpose();
        if (l > 0) upstream = dz * params.hidden[l].weight;
    }
    return g;
}

double objective_value(const ScorerParams& params, const Matrix& inputs, const Labels& labels,
                       const losses::LossSpec& spec) {
    const ForwardResult fr = forward(params, inputs);
    return losses::elm_objective(fr.embeddings, fr.logits, labels, spec).total;
}

double kink_distance(const ScorerParams& params, const Matrix& inputs) {
    const ForwardResult fr = forward(params, inputs);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& z : fr.pre_activations) {
        if (z.size() > 0) best = std::min(best, z.cwiseAbs().minCoeff());
    }
    return best;
}

double finite_diff_check(const ScorerParams& params, const Matrix& inputs, const Labels& labels,
                         const losses::LossSpec& spec, const FiniteDiffOptions& options) {
    if (!(options.step > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");
    const Gradients analytic = backward(params, inputs, labels, spec);

    std::vector<Matrix> grad_tensors;
    analytic.grads.for_each_tensor(
        [&](const std::string&, Eigen::Map<const Matrix> t) { grad_tensors.emplace_back(t); });

    ScorerParams probe = params;
    std::mt19937_64 rng(options.seed);
    double worst = 0.0;
    std::size_t tensor_index = 0;
    probe.for_each_tensor([&](const std::string&, Eigen::Map<Matrix> t) {
        const Matrix& ga = grad_tensors[tensor_index++];
        std::vector<Eigen::Index> coords(static_cast<std::size_t>(t.size()));
        for (std::size_t c = 0; c < coords.size(); ++c) coords[c] = static_cast<Eigen::Index>(c);
        if (options.max_coords_per_tensor > 0 && coords.size() > options.max_coords_per_tensor) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(options.max_coords_per_tensor);
        }
        for (Eigen::Index c : coords) {
            double& theta = t.data()[c];
            const double saved = theta;
            theta = saved + options.step;
            const double up = objective_value(probe, inputs, labels, spec);
            theta = saved - options.step;
            const double down = objective_value(probe, inputs, labels, spec);
            theta = saved;
            const double numeric = (up - down) / (2.0 * options.step);
            const double a = ga.data()[c];
            const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    });
    return worst;
}

Head bayes_gaussian_head(const ClassGaussianSpec& spec) {
    validate(spec);
    const auto L = static_cast<Eigen::Index>(spec.size());
    const Eigen::Index k = spec.front().mean.size();
    Head h{Matrix(k, L), Vector(L)};
    for (Eigen::Index y = 0; y < L; ++y) {
        const auto& c = spec[static_cast<std::size_t>(y)];
        h.weights.col(y) = c.mean / c.variance;
        h.bias[y] = -c.mean.squaredNorm() / (2.0 * c.variance) + std::log(c.prior);
    }
    return h;
}

Head prototype_head_from_centroids(const Matrix& centroids, double v2) {
    if (!(v2 > 0.0)) throw std::invalid_argument("prototype_head: v^2 must be positive");
    Head h{centroids.transpose() / v2, Vector(centroids.rows())};
    for (Eigen::Index y = 0; y < centroids.rows(); ++y) h.bias[y] = -centroids.row(y).squaredNorm() / (2.0 * v2);
    return h;
}

Head prototype_head(const Matrix& embeddings, const Labels& labels, int num_classes, double v2) {
    const auto c = losses::class_centroids(embeddings, labels, num_classes);
    for (int y = 0; y < num_classes; ++y) {
        if (c.counts[static_cast<std::size_t>(y)] == 0) {
            throw std::invalid_argument("prototype_head: class " + std::to_string(y) + " has no samples");
        }
    }
    return prototype_head_from_centroids(c.means, v2);
}

Matrix tau_normalize_head(const Matrix& weights, double tau) {
    if (!(tau >= 0.0)) throw std::invalid_argument("tau_normalize_head: tau must be non-negative");
    Matrix out = weights;
    for (Eigen::Index y = 0; y < out.cols(); ++y) {
        const double norm = out.col(y).norm();
        if (norm > 0.0) out.col(y) /= std::pow(norm, tau);
    }
    return out;
}

}  // namespace marginlab::scorer
