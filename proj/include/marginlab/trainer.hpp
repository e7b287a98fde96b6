#pragma once

// Minibatch SGD with classical momentum for the rectifier scorer.

#include "marginlab/data_synth.hpp"
#include "marginlab/losses.hpp"
#include "marginlab/scorer.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace marginlab::train {

enum class Schedule { constant, cosine, warmup_step };
enum class HeadMode { learned, prototype };

Schedule parse_schedule(std::string_view name);
std::string to_string(Schedule s);
HeadMode parse_head_mode(std::string_view name);
std::string to_string(HeadMode m);

struct TrainConfig {
    int epochs = 256;
    int batch_size = 128;
    double base_lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    Schedule schedule = Schedule::constant;
    int warmup_epochs = 0;
    std::vector<int> decay_epochs;  // 0-based epoch indices where the decay kicks in
    double decay_factor = 0.1;
    std::uint64_t seed = 0;
    HeadMode head_mode = HeadMode::learned;
    double prototype_v2 = 1.0;
    double centroid_decay = 0.9;  // EMA coefficient for prototype centroids

    void validate() const;
};

// Learning rate for minibatch `step` of `epoch` (both 0-based).
//   constant:    base
//   warmup_step: base * min(1, (epoch + (step+1)/S) / warmup) * factor^{#decay epochs <= epoch}
//   cosine:      base * (1 + cos(pi * (epoch + step/S) / epochs)) / 2
double lr_at(const TrainConfig& config, int epoch, int step, int steps_per_epoch);

// v <- momentum * v + (g + weight_decay * theta); theta <- theta - lr * v.
// Throws std::runtime_error on a non-finite gradient.
void sgd_momentum_step(scorer::ScorerParams& params, const scorer::ScorerParams& grads,
                       scorer::ScorerParams& velocity, double lr, double momentum, double weight_decay);

// Zero tensors shaped like `params`.
scorer::ScorerParams zeros_like(const scorer::ScorerParams& params);

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;  // rate at the last step of the epoch
    double loss = 0.0;
    double ce = 0.0;
    double pull = 0.0;
    double push = 0.0;
    double center = 0.0;
    double train_accuracy = 0.0;
    double train_balanced_accuracy = 0.0;
};

struct TrainResult {
    scorer::ScorerParams params;
    std::vector<EpochRecord> history;
    Matrix centroids;  // EMA centroids (prototype mode only)
};

class DivergenceError : public std::runtime_error {
public:
    DivergenceError(int epoch, const std::string& what)
        : std::runtime_error(what), epoch_(epoch) {}
    int epoch() const { return epoch_; }

private:
    int epoch_;
};

// Trains a freshly initialised scorer. Minibatches are drawn without
// replacement from a per-epoch shuffle seeded by config.seed.
TrainResult train(const data::Dataset& data, const std::vector<int>& layer_sizes, const losses::LossSpec& spec,
                  const TrainConfig& config);

// Same, starting from the given parameters.
TrainResult train_from(const data::Dataset& data, scorer::ScorerParams initial, const losses::LossSpec& spec,
                       const TrainConfig& config);

}  // namespace marginlab::train
