#include "marginlab/config.hpp"
#include "marginlab/experiment.hpp"
#include "marginlab/verification.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;
using namespace marginlab;

enum Exit { kOk = 0, kCheckFailure = 1, kConfigError = 2, kDivergence = 3 };

int run(const std::string& path) {
    const auto cfg = config::load(path);
    const auto outcomes = experiment::run_experiment(cfg, experiment::worker_count());
    for (const auto& o : outcomes) {
        std::printf("seed %llu: balanced accuracy %.4f, mean trace-variance %.4g\n",
                    static_cast<unsigned long long>(o.seed), o.report.balanced_accuracy, o.report.mean_trace_variance);
    }
    std::printf("wrote %s\n", cfg.output_dir.c_str());
    return kOk;
}

int sweep(const std::string& path, const std::vector<double>& lambdas) {
    const auto cfg = config::load(path);
    experiment::run_sweep(cfg, lambdas, experiment::worker_count());
    std::printf("wrote %s\n", cfg.output_dir.c_str());
    return kOk;
}

int verify(const verification::VerifyOptions& options, const std::string& out_dir) {
    const auto result = verification::run_verification_suite(options);
    fs::create_directories(out_dir);
    std::ofstream jsonl(fs::path(out_dir) / "checks.jsonl", std::ios::binary);
    verification::write_jsonl(result, jsonl);
    for (const auto& s : result.summaries) {
        std::printf("%-30s %s  %d/%d passed", s.check.c_str(), s.pass ? "PASS" : "FAIL", s.passed, s.trials);
        if (s.probabilistic) std::printf(" (required fraction %.4f)", s.required);
        std::printf("\n");
        for (const auto& f : s.failures) std::printf("  violation: %s\n", f.c_str());
    }
    return result.pass ? kOk : kCheckFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"marginlab: long-tail margin experiments and bound checks"};
    app.require_subcommand(1);

    std::string config_path;
    auto* run_cmd = app.add_subcommand("run", "train and evaluate every seed of a config");
    run_cmd->add_option("config", config_path, "experiment config (JSON)")->required();

    verification::VerifyOptions vopts;
    std::string verify_out = "verify_out";
    std::string fault = "none";
    auto* verify_cmd = app.add_subcommand("verify", "randomised checks of the bounds");
    verify_cmd->add_option("--trials", vopts.bounds.trials, "trials per check")->default_val(1000);
    verify_cmd->add_option("--seed", vopts.bounds.seed, "suite seed")->default_val(0);
    verify_cmd->add_option("--eval-size", vopts.bounds.eval_size, "population sample size for the bound check")
        ->default_val(100000);
    verify_cmd->add_option("--out", verify_out, "output directory")->default_val("verify_out");
    verify_cmd->add_option("--inject-fault", fault, "negative control: none | flip-pull")
        ->check(CLI::IsMember({"none", "flip-pull"}))
        ->default_val("none");

    std::string report_dir;
    auto* plot_cmd = app.add_subcommand("plot", "render SVG figures of a report directory");
    plot_cmd->add_option("report-dir", report_dir, "directory holding report.json")->required();

    std::string sweep_config;
    std::vector<double> lambdas;
    auto* sweep_cmd = app.add_subcommand("sweep", "repeat a run over values of lambda_pull");
    sweep_cmd->add_option("config", sweep_config, "experiment config (JSON)")->required();
    sweep_cmd->add_option("--lambda", lambdas, "lambda values, comma separated")->required()->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (*run_cmd) return run(config_path);
        if (*sweep_cmd) return sweep(sweep_config, lambdas);
        if (*plot_cmd) {
            experiment::emit_plots(report_dir);
            return kOk;
        }
        if (*verify_cmd) {
            if (vopts.bounds.trials < 1) {
                std::fprintf(stderr, "error: --trials must be >= 1\n");
                return kConfigError;
            }
            vopts.fault = fault == "flip-pull" ? verification::Fault::flip_pull : verification::Fault::none;
            vopts.workers = experiment::worker_count();
            return verify(vopts, verify_out);
        }
    } catch (const config::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfigError;
    } catch (const experiment::SeedDivergence& e) {
        std::fprintf(stderr, "divergence: %s\n", e.what());
        return kDivergence;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kCheckFailure;
    }
    return kOk;
}
