#pragma once

// JSON experiment configuration. Every object is checked against the list of
// known keys; anything else is rejected with its dotted path.

#include "marginlab/data_synth.hpp"
#include "marginlab/losses.hpp"
#include "marginlab/trainer.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace marginlab::config {

inline constexpr int kSchemaVersion = 1;

class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& message)
        : std::runtime_error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

struct DatasetConfig {
    std::string generator = "two_moons";  // two_moons | gaussian_exp
    // two_moons
    int train_size = 2000;
    int test_size = 2000;
    double tail_prob = 0.05;
    double test_tail_prob = 0.5;
    double noise = 0.1;
    // gaussian_exp
    int num_classes = 10;
    int dim = 2;
    int n_max = 500;
    double rho = 100.0;
    double separation = 2.0;  // distance of every class mean from the origin
    double variance = 1.0;
    int test_per_class = 500;
    std::uint64_t mean_seed = 0;

    int classes() const { return generator == "two_moons" ? 2 : num_classes; }
    int input_dim() const { return generator == "two_moons" ? 2 : dim; }
};

struct AlphaConfig {
    std::string base = "prior";  // prior | count
    double exponent = 1.0;
    double scale = 1.0;
};

struct LossConfig {
    losses::DeltaScheme delta = losses::DeltaScheme::zero;
    double lambda_pull = 0.0;
    AlphaConfig alpha;
    double lambda_push = 0.0;
    double beta = 0.0;
    double lambda_center = 0.0;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    std::vector<int> layer_sizes;
    LossConfig loss;
    train::TrainConfig training;
    std::string output_dir = "out";
    std::vector<std::uint64_t> seeds{0};
};

ExperimentConfig parse(const nlohmann::json& doc);
ExperimentConfig parse_text(const std::string& text);
ExperimentConfig load(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const ExperimentConfig& cfg);

// Loss spec for a concrete training set (margins depend on its class counts).
losses::LossSpec make_loss_spec(const LossConfig& loss, const std::vector<int>& train_counts);

struct Splits {
    data::Dataset train;
    data::Dataset test;
};
Splits make_splits(const DatasetConfig& cfg, std::uint64_t seed);

// Class means of the gaussian_exp generator: directions uniform on the sphere.
ClassGaussianSpec gaussian_exp_spec(const DatasetConfig& cfg);

}  // namespace marginlab::config
