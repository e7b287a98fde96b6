#pragma once

// Randomised verification suite over the bounds lab. Every instance is drawn
// from an RNG seeded by (suite seed, check, trial), so a failing descriptor can
// be replayed on its own.

#include "marginlab/bounds_lab.hpp"

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace marginlab::verification {

enum class Fault { none, flip_pull };

struct VerifyOptions {
    bounds::BoundConfig bounds;  // seed and trials live here
    Fault fault = Fault::none;
    int workers = 1;
};

std::mt19937_64 trial_rng(std::uint64_t seed, std::string_view check, int trial);

// Single randomised instances. Each returns one record whose `pass` flag
// states whether the instance satisfied the check.
bounds::BoundCheckRecord variance_identity_trial(const bounds::BoundConfig& cfg, std::mt19937_64& rng);
bounds::BoundCheckRecord pull_bound_trial(const bounds::BoundConfig& cfg, std::mt19937_64& rng, Fault fault = Fault::none);
bounds::BoundCheckRecord push_bound_trial(const bounds::BoundConfig& cfg, std::mt19937_64& rng);
bounds::BoundCheckRecord variance_chain_trial(const bounds::BoundConfig& cfg, std::mt19937_64& rng);
bounds::BoundCheckRecord dro_lt_trial(const bounds::BoundConfig& cfg, std::mt19937_64& rng);
bounds::BoundCheckRecord gaussian_penalty_trial(const bounds::BoundConfig& cfg, std::mt19937_64& rng);
bounds::BoundCheckRecord bayes_head_trial(const bounds::BoundConfig& cfg, std::mt19937_64& rng);
bounds::BoundCheckRecord bennett_trial(const bounds::BoundConfig& cfg, std::mt19937_64& rng);
bounds::BoundCheckRecord gen_bound_trial(const bounds::BoundConfig& cfg, std::mt19937_64& rng);

struct CheckSummary {
    std::string check;
    bool probabilistic = false;
    int trials = 0;
    int passed = 0;
    double required = 1.0;  // minimum pass fraction
    bool pass = false;
    std::vector<std::string> failures;  // descriptors of failing instances
};

struct TrialRecord {
    int trial = 0;
    bounds::BoundCheckRecord record;
};

struct VerifyResult {
    std::vector<TrialRecord> records;  // grouped by check, then trial
    std::vector<CheckSummary> summaries;
    bool pass = false;
};

// Pass fraction required of a probabilistic check with confidence delta over
// n trials: 1 - delta - 3 sqrt(delta (1 - delta) / n).
double required_coverage(double delta, int trials);

VerifyResult run_verification_suite(const VerifyOptions& options);

// One JSON object per line and record.
void write_jsonl(const VerifyResult& result, std::ostream& out);

}  // namespace marginlab::verification
