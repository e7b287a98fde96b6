#pragma once

// Experiment driver: trains one scorer per seed, evaluates it on the test
// split and writes reports, tables and figures.

#include "marginlab/config.hpp"
#include "marginlab/metrics.hpp"
#include "marginlab/report_io.hpp"
#include "marginlab/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <vector>

namespace marginlab::experiment {

struct SeedOutcome {
    std::uint64_t seed = 0;
    metrics::Report report;
    std::vector<train::EpochRecord> history;
    scorer::ScorerParams params;
};

class SeedDivergence : public std::runtime_error {
public:
    SeedDivergence(std::uint64_t seed, int epoch, const std::string& what)
        : std::runtime_error("seed " + std::to_string(seed) + ": " + what), seed_(seed), epoch_(epoch) {}
    std::uint64_t seed() const { return seed_; }
    int epoch() const { return epoch_; }

private:
    std::uint64_t seed_;
    int epoch_;
};

// Worker cap from MARGINLAB_THREADS (default: hardware concurrency, at least 1).
int worker_count();

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
// (lowest index) is rethrown after all workers finish.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

SeedOutcome run_seed(const config::ExperimentConfig& cfg, std::uint64_t seed);

// All seeds of the config; results are ordered like cfg.seeds.
std::vector<SeedOutcome> run_seeds(const config::ExperimentConfig& cfg, int workers);

// Writes report.json, metrics.csv, margins.csv, cdf.csv, intra.csv,
// seed_<s>/{report.json, history.csv, checkpoint/} and all figures.
void write_outputs(const config::ExperimentConfig& cfg, const std::vector<SeedOutcome>& outcomes,
                   const std::filesystem::path& dir);

std::vector<SeedOutcome> run_experiment(const config::ExperimentConfig& cfg, int workers);

// Regenerates the SVG figures of a report directory from its JSON files.
// Throws std::runtime_error when report.json is missing.
void emit_plots(const std::filesystem::path& dir);

// One run per value of lambda_pull under <output_dir>/lambda_<k>/, plus
// sweep.json, sweep.csv and sensitivity.svg in <output_dir>.
void run_sweep(const config::ExperimentConfig& cfg, std::vector<double> lambdas, int workers);

}  // namespace marginlab::experiment
