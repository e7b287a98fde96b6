#pragma once

// Logit-margin cross-entropy and the embedding regulariser zoo.
//
// Every regulariser works on a minibatch of embeddings (N x K) with labels;
// same-class and other-class sets are the members of the batch. Gradients are
// with respect to the embedding rows.

#include "marginlab/linalg.hpp"

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace marginlab::losses {

enum class DeltaScheme { zero, ldam, tan, logadj };

DeltaScheme parse_delta_scheme(std::string_view name);
std::string to_string(DeltaScheme scheme);

struct LossSpec {
    Matrix delta;    // L x L logit margins, zero diagonal
    Vector alpha;    // pull margins
    Vector beta;     // push margins
    Vector epsilon;  // DRO-LT margins
    double lambda_pull = 0.0;
    double lambda_push = 0.0;
    double lambda_center = 0.0;
    double target_scale = 1.0;  // s^2 of the target Gaussian

    // Plain cross-entropy over L classes: all margins and weights zero.
    static LossSpec plain(int num_classes);

    int num_classes() const { return static_cast<int>(delta.rows()); }
    // Throws std::invalid_argument on shape mismatch, nonzero diagonal,
    // negative weights or non-positive s^2.
    void validate() const;
};

Matrix delta_schedule(std::span<const double> priors, DeltaScheme scheme);

// alpha_y = scale * base_y^exponent. Bases are priors or counts.
Vector alpha_schedule(std::span<const double> bases, double exponent, double scale);

struct LogitLoss {
    double value = 0.0;
    Vector grad;  // d value / d logits
};

// log[1 + sum_{y' != y} exp(delta(y, y') + f_y' - f_y)]
LogitLoss margin_ce(const Vector& logits, int label, const Matrix& delta);

// Value and gradient of a single-anchor term, gradient over all N rows.
struct AnchorTerm {
    double value = 0.0;
    Matrix grad;
};

// Per-sample values plus the gradient of their sum.
struct BatchTerm {
    std::vector<double> per_sample;
    Matrix grad;
    double sum() const;
    double mean() const;
};

AnchorTerm pull_term(const Matrix& emb, const Labels& labels, const Vector& alpha, Eigen::Index anchor);
BatchTerm pull_reg(const Matrix& emb, const Labels& labels, const Vector& alpha);
// Hinge relaxation: max over same-class partners of [d^2 - alpha_y]_+, 0 for singletons.
double hard_pull(const Matrix& emb, const Labels& labels, const Vector& alpha, Eigen::Index anchor);

AnchorTerm push_term(const Matrix& emb, const Labels& labels, const Vector& beta, Eigen::Index anchor);
BatchTerm push_reg(const Matrix& emb, const Labels& labels, const Vector& beta);

// Row y is the mean embedding of class y; rows of absent classes are zero and
// the corresponding count is 0.
struct Centroids {
    Matrix means;
    std::vector<int> counts;
};
Centroids class_centroids(const Matrix& emb, const Labels& labels, int num_classes);

// ||phi(x) - mu_y||^2 per sample. The gradient treats the centroids as fixed;
// for batch-mean centroids it coincides with the full gradient because the
// class deviations sum to zero.
BatchTerm center_loss(const Matrix& emb, const Labels& labels, const Matrix& centroids);

// Negative log-likelihood of the embeddings under N(mu_y, s^2 I), summed
// over the batch.
double gaussian_xent_penalty(const Matrix& emb, const Labels& labels, const Matrix& centroids,
                             double s2);
// Per-sample additive constant (K/2) log(2 pi s^2) of the penalty above.
double gaussian_xent_constant(Eigen::Index dim, double s2);

// DRO-LT regulariser with batch centroids, one value per sample, using squared
// distances and a margin eps_y on every other-class term.
std::vector<double> dro_lt_reg(const Matrix& emb, const Labels& labels, const Vector& epsilon);
// Same quantity evaluated in the factored form
//   eps_y + log[sum_{same} e^{d - d' - eps_y} + sum_{other} e^{d - d''}].
std::vector<double> dro_lt_reg_factored(const Matrix& emb, const Labels& labels,
                                        const Vector& epsilon);

// M1^2 + max(0, M2 - 1/d) over ordered pairs of row-normalised embeddings.
double spreadout_reg(const Matrix& emb);

// max_{y != y'} [gamma - ||mu_y - mu_y'||^2]_+
double range_loss(const Matrix& centroids, double gamma);

struct ObjectiveValue {
    double total = 0.0;
    double ce = 0.0;      // mean margin CE
    double pull = 0.0;    // mean pull regulariser (unweighted)
    double push = 0.0;    // mean push regulariser (unweighted)
    double center = 0.0;  // mean center loss (unweighted, batch centroids)
    Matrix grad_logits;
    Matrix grad_embeddings;
};

// mean CE + lambda_pull * mean pull + lambda_push * mean push
//        + lambda_center * mean center.
ObjectiveValue elm_objective(const Matrix& embeddings, const Matrix& logits, const Labels& labels,
                             const LossSpec& spec);

}  // namespace marginlab::losses
