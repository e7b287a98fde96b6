#pragma once

// Numerical checks of the pull/push lower bounds, the variance lemmas, the
// Gaussian AUC closed form, the empirical Bennett bound and the
// class-balanced generalisation bound.

#include "marginlab/gaussian_spec.hpp"
#include "marginlab/linalg.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace marginlab::bounds {

inline constexpr double kSlackTolerance = 1e-9;

struct BoundConfig {
    double loss_bound = 0.0;  // B; 0 derives it from the observed losses
    double delta = 0.05;
    int trials = 1000;
    int max_dim = 8;
    int max_class_size = 20;
    double max_alpha = 5.0;
    int train_size = 200;
    int eval_size = 100000;
    std::uint64_t seed = 0;

    void validate() const;
};

struct BoundCheckRecord {
    std::string check;
    std::string instance;
    double lhs = 0.0;
    double rhs = 0.0;
    double slack = 0.0;  // rhs - lhs
    bool pass = false;
};

BoundCheckRecord make_record(std::string check, std::string instance, double lhs, double rhs,
                             double tolerance = kSlackTolerance);

double standard_normal_cdf(double z);

// |lhs - rhs| / max(|lhs|, 1) for
//   (1/n^2) sum_{x,x'} ||phi(x) - phi(x')||^2 = (2/n) sum_x ||phi(x) - mu||^2.
double variance_identity_check(const Matrix& embeddings);

// Mean pull regulariser of one class against
//   2n/(n-1) * tr Var[phi | y] - alpha + log(n - 1).
BoundCheckRecord pull_bound_check(const Matrix& class_embeddings, double alpha);

// Mean push regulariser of class y against
//   -sum_{y'} (n_y'/n_{not y}) [tr Var_y + tr Var_y' + ||mu_y - mu_y'||^2] + beta_y + log n_{not y}.
BoundCheckRecord push_bound_check(const Matrix& embeddings, const Labels& labels, const Vector& beta, int y);

// (1/(L(L-1))) sum_y sum_{y' != y} Psi(w_y.(mu_y - mu_y') / (||w_y|| sqrt(s_y^2 + s_y'^2))).
// `weights` is K x L. The negatives of class y are an equal-weight mixture of
// the other classes.
double gaussian_auc_closed_form(const Matrix& weights, const ClassGaussianSpec& spec);

// Empirical one-vs-rest AUC of z -> z W on n samples drawn with equal class
// weights from the spec means/variances.
double gaussian_auc_monte_carlo(const Matrix& weights, const ClassGaussianSpec& spec, int n, std::uint64_t seed);

// mean + sqrt(2 V ln(2/delta) / n) + 7 B ln(2/delta) / (3 (n - 1)), V the
// unbiased sample variance.
double bennett_bound(std::span<const double> samples, double B, double delta);

struct VarianceChain {
    double var_log = 0.0;      // Var[log(1 + e^{-y(f + D_y)}) | y]
    double var_lin = 0.0;      // Var[-y (f + D_y) | y]
    double quad_form = 0.0;    // w' C_y w
    double trace_bound = 0.0;  // ||w||^2 tr C_y
    bool holds(double tolerance = kSlackTolerance, double equality_tolerance = 1e-10) const;
};

// Binary case, signs in {-1, +1}, f(x) = w.phi(x) + b; all variances divide by n.
VarianceChain loss_variance_lemma_check(const Matrix& embeddings, const std::vector<int>& signs,
                                        const Vector& w, double b, double delta_shift, int sign);

double logistic_loss(int sign, double score);  // log(1 + e^{-sign * score})

struct BinarySample {
    Matrix embeddings;       // phi(x) per row
    std::vector<int> signs;  // -1 / +1
};

struct GenBoundInputs {
    BinarySample train;
    BinarySample eval;        // fresh sample standing in for the population
    Vector w;
    double b = 0.0;
    double delta_neg = 0.0;   // D_{-1}
    double delta_pos = 0.0;   // D_{+1}
    double alpha_neg = 0.0;
    double alpha_pos = 0.0;
    double prior_pos = 0.5;   // true P(y = +1)
    double confidence = 0.05; // delta
    double loss_bound = 0.0;  // B; 0 derives max observed loss * 1.01
};

struct GenBoundResult {
    BoundCheckRecord record;
    double population_loss = 0.0;
    double bennett_term = 0.0;
    double empirical_term = 0.0;
    double pull_term = 0.0;
    double loss_bound = 0.0;
};

GenBoundResult gen_bound_check(const GenBoundInputs& in);

// Max |softmax(x W + b) - q(y|x)| over the points for the Bayes head of a
// shared-variance spec. Throws for class-specific variances.
double bayes_logistic_realizability_check(const ClassGaussianSpec& spec, const Matrix& points);

}  // namespace marginlab::bounds
