#pragma once

// Deterministic synthetic long-tail datasets.

#include "marginlab/gaussian_spec.hpp"
#include "marginlab/linalg.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace marginlab::data {

struct Dataset {
    Matrix inputs;  // N x d
    Labels labels;  // 0-based
    int num_classes = 0;

    Eigen::Index size() const { return inputs.rows(); }
    std::vector<int> counts() const;
    std::vector<double> priors() const;  // n_y / N
    void validate() const;

    Dataset subset(const std::vector<Eigen::Index>& rows) const;
};

// Head (label 0) on the upper half circle, Tail (label 1) on the lower,
// interleaved like the classic two-moons layout and centred at the origin.
// Labels are Bernoulli(tail_prob); noise is isotropic Gaussian.
Dataset two_moons_lt(int n, double tail_prob, double noise, std::uint64_t seed);

// Centre of the tail half circle, needed to check the noiseless locus.
Vector two_moons_tail_center();
Vector two_moons_head_center();

// Labels drawn from the spec priors, inputs from the class Gaussian.
Dataset gaussian_mixture_lt(const ClassGaussianSpec& spec, int n, std::uint64_t seed);

// Exactly counts[y] samples of class y (priors in the spec are ignored),
// rows shuffled.
Dataset gaussian_mixture_counts(const ClassGaussianSpec& spec, const std::vector<int>& counts,
                                std::uint64_t seed);

// n_y = round(n_max * rho^{-y/(L-1)}).
std::vector<int> exp_profile(int n_max, int num_classes, double rho);

enum class Bucket { head, torso, tail };
std::string to_string(Bucket b);

struct BucketThresholds {
    int head = 100;  // count >= head
    int torso = 20;  // torso <= count < head
};

std::vector<Bucket> head_torso_tail_buckets(const std::vector<int>& counts, BucketThresholds thresholds = {});

// Header x_0..x_{d-1},y, one row per sample.
void write_csv(const Dataset& data, std::ostream& out);

}  // namespace marginlab::data
