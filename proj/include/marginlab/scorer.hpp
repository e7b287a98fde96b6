#pragma once

// Feedforward rectifier scorer: hidden layers produce the embedding phi(x),
// an affine head turns it into logits f(x) = phi(x) W + b.

#include "marginlab/gaussian_spec.hpp"
#include "marginlab/linalg.hpp"
#include "marginlab/losses.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace marginlab::scorer {

struct DenseLayer {
    Matrix weight;  // d_out x d_in
    Vector bias;    // d_out
};

struct ScorerParams {
    std::vector<DenseLayer> hidden;
    Matrix head_weights;  // K x L, column y is w_y
    Vector head_bias;     // L

    Eigen::Index input_dim() const;
    Eigen::Index embedding_dim() const { return head_weights.rows(); }
    Eigen::Index num_classes() const { return head_weights.cols(); }

    // Visits every tensor in a fixed order (layer weights and biases, then the
    // head) with a stable name. Used by the optimiser, gradient checks and
    // checkpoints.
    void for_each_tensor(const std::function<void(const std::string&, Eigen::Map<Matrix>)>& fn);
    void for_each_tensor(const std::function<void(const std::string&, Eigen::Map<const Matrix>)>& fn) const;

    std::size_t parameter_count() const;
    bool all_finite() const;
};

struct ForwardResult {
    Matrix embeddings;                   // N x K
    Matrix logits;                       // N x L
    std::vector<Matrix> pre_activations; // per hidden layer, N x d_out
    std::vector<Matrix> activations;     // inputs to each hidden layer, N x d_in
};

// layer_sizes = {d, h_1, ..., h_m, L}; the embedding dimension is h_m, or d
// when there is no hidden layer. Weights ~ U(-r, r) with variance 2/fan_in.
ScorerParams init_params(const std::vector<int>& layer_sizes, std::uint64_t seed);

ForwardResult forward(const ScorerParams& params, const Matrix& inputs);

struct Gradients {
    ScorerParams grads;  // same shapes as the parameters
    losses::ObjectiveValue objective;
};

struct BackwardOptions {
    bool head_trainable = true;  // false: head gradients are zeroed (prototype head)
};

Gradients backward(const ScorerParams& params, const Matrix& inputs, const Labels& labels,
                   const losses::LossSpec& spec, const BackwardOptions& options = {});

// Objective value only.
double objective_value(const ScorerParams& params, const Matrix& inputs, const Labels& labels,
                       const losses::LossSpec& spec);

// Smallest |pre-activation| over all hidden units and samples; +inf without
// hidden layers. Finite-difference checks need this comfortably above the step.
double kink_distance(const ScorerParams& params, const Matrix& inputs);

struct FiniteDiffOptions {
    double step = 1e-5;
    // Coordinates checked per tensor; 0 means every coordinate.
    std::size_t max_coords_per_tensor = 0;
    std::uint64_t seed = 0;
    // Gradients smaller than this in magnitude are compared in absolute terms.
    double floor = 1e-6;
};

// max over checked coordinates of |analytic - numeric| / max(|analytic|, |numeric|, floor),
// with numeric = (loss(theta + h) - loss(theta - h)) / (2h).
double finite_diff_check(const ScorerParams& params, const Matrix& inputs, const Labels& labels,
                         const losses::LossSpec& spec, const FiniteDiffOptions& options = {});

struct Head {
    Matrix weights;  // K x L
    Vector bias;     // L
};

// w_y = mu_y / s_y^2, b_y = -||mu_y||^2 / (2 s_y^2) + log P(y).
Head bayes_gaussian_head(const ClassGaussianSpec& spec);

// w_y = mu_y / v^2, b_y = -||mu_y||^2 / (2 v^2) from per-class batch means.
Head prototype_head(const Matrix& embeddings, const Labels& labels, int num_classes, double v2);
Head prototype_head_from_centroids(const Matrix& centroids, double v2);

// Column y scaled by ||w_y||^{-tau}; zero columns untouched.
Matrix tau_normalize_head(const Matrix& weights, double tau);

}  // namespace marginlab::scorer
