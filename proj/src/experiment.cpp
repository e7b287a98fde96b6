#include "marginlab/experiment.hpp"

#include "marginlab/checkpoint.hpp"
#include "marginlab/svg.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace marginlab::experiment {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

int worker_count() {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (const char* env = std::getenv("MARGINLAB_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1) n = static_cast<int>(v);
    }
    return std::max(n, 1);
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const auto count = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
    if (count <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < count; ++t) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

SeedOutcome run_seed(const config::ExperimentConfig& cfg, std::uint64_t seed) {
    const auto splits = config::make_splits(cfg.dataset, seed);
    const auto counts = splits.train.counts();
    const auto spec = config::make_loss_spec(cfg.loss, counts);
    auto tc = cfg.training;
    tc.seed = seed;
    train::TrainResult result;
    try {
        result = train::train(splits.train, cfg.layer_sizes, spec, tc);
    } catch (const train::DivergenceError& e) {
        throw SeedDivergence(seed, e.epoch(), e.what());
    }
    const auto fr = scorer::forward(result.params, splits.test.inputs);
    SeedOutcome out;
    out.seed = seed;
    out.report = metrics::evaluate(fr.embeddings, fr.logits, splits.test.labels, splits.test.num_classes, counts);
    out.history = std::move(result.history);
    out.params = std::move(result.params);
    return out;
}

std::vector<SeedOutcome> run_seeds(const config::ExperimentConfig& cfg, int workers) {
    std::vector<SeedOutcome> out(cfg.seeds.size());
    parallel_for(cfg.seeds.size(), workers, [&](std::size_t i) { out[i] = run_seed(cfg, cfg.seeds[i]); });
    return out;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

ordered_json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing report file " + path.string());
    return ordered_json::parse(in);
}

std::string seed_dir(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

ordered_json aggregate_json(const std::vector<report_io::AggregateRow>& rows) {
    auto arr = ordered_json::array();
    for (const auto& r : rows) arr.push_back({{"metric", r.metric}, {"mean", r.mean}, {"std", r.stddev}, {"n", r.n}});
    return arr;
}

std::string history_csv(const std::vector<train::EpochRecord>& history) {
    std::ostringstream out;
    out << "epoch,lr,loss,ce,pull,push,center,train_accuracy,train_balanced_accuracy\n";
    for (const auto& h : history) {
        using report_io::format_double;
        out << h.epoch + 1 << ',' << format_double(h.lr) << ',' << format_double(h.loss) << ',' << format_double(h.ce)
            << ',' << format_double(h.pull) << ',' << format_double(h.push) << ',' << format_double(h.center) << ','
            << format_double(h.train_accuracy) << ',' << format_double(h.train_balanced_accuracy) << '\n';
    }
    return out.str();
}

// At most `limit` points of the empirical CDF, taken at evenly spaced ranks.
svg::Series cdf_series(const std::string& label, const std::vector<double>& values, std::size_t limit = 256) {
    const auto cdf = metrics::empirical_cdf(values);
    svg::Series s;
    s.label = label;
    const std::size_t n = cdf.x.size();
    if (n == 0) return s;
    const std::size_t m = std::min(n, limit);
    for (std::size_t k = 0; k < m; ++k) {
        const std::size_t i = m == 1 ? n - 1 : k * (n - 1) / (m - 1);
        s.x.push_back(cdf.x[i]);
        s.y.push_back(cdf.level[i]);
    }
    return s;
}

}  // namespace

void write_outputs(const config::ExperimentConfig& cfg, const std::vector<SeedOutcome>& outcomes, const fs::path& dir) {
    fs::create_directories(dir);
    std::vector<report_io::SeedReport> seeds;
    std::vector<metrics::Report> reports;
    auto index = ordered_json::array();
    for (const auto& o : outcomes) {
        const fs::path sd = dir / seed_dir(o.seed);
        fs::create_directories(sd);
        ordered_json doc;
        doc["seed"] = o.seed;
        doc["report"] = report_io::to_json(o.report);
        write_text(sd / "report.json", doc.dump(2) + "\n");
        write_text(sd / "history.csv", history_csv(o.history));
        checkpoint::save(o.params, sd / "checkpoint");
        seeds.push_back({o.seed, o.report});
        reports.push_back(o.report);
        index.push_back({{"seed", o.seed}, {"report", seed_dir(o.seed) + "/report.json"}});
    }
    const auto rows = report_io::aggregate(reports);

    ordered_json top;
    top["config"] = config::to_json(cfg);
    top["seeds"] = index;
    top["aggregate"] = aggregate_json(rows);
    write_text(dir / "report.json", top.dump(2) + "\n");

    std::ostringstream metrics_csv, margins, cdf, intra;
    report_io::write_metrics_csv(rows, metrics_csv);
    report_io::write_margins_csv(seeds, margins);
    report_io::write_cdf_csv(seeds, cdf);
    report_io::write_intra_csv(seeds, intra);
    write_text(dir / "metrics.csv", metrics_csv.str());
    write_text(dir / "margins.csv", margins.str());
    write_text(dir / "cdf.csv", cdf.str());
    write_text(dir / "intra.csv", intra.str());

    emit_plots(dir);
}

std::vector<SeedOutcome> run_experiment(const config::ExperimentConfig& cfg, int workers) {
    auto outcomes = run_seeds(cfg, workers);
    write_outputs(cfg, outcomes, cfg.output_dir);
    return outcomes;
}

void emit_plots(const fs::path& dir) {
    if (!fs::exists(dir / "report.json")) throw std::runtime_error("no report.json in " + dir.string());
    const auto top = read_json(dir / "report.json");

    std::vector<metrics::Report> reports;
    for (const auto& s : top.at("seeds")) {
        reports.push_back(report_io::report_from_json(read_json(dir / s.at("report").get<std::string>()).at("report")));
    }
    if (reports.empty()) throw std::runtime_error("report.json lists no seeds");

    const int L = reports.front().num_classes;
    std::vector<svg::Series> cdfs;
    for (int y = 0; y < L; ++y) {
        std::vector<double> margins, intra;
        for (const auto& r : reports) {
            const auto& c = r.classes[static_cast<std::size_t>(y)];
            margins.insert(margins.end(), c.margins.begin(), c.margins.end());
            intra.insert(intra.end(), c.intra_distances.begin(), c.intra_distances.end());
        }
        const std::string cls = std::to_string(y + 1);
        write_text(dir / ("margins_class" + cls + ".svg"),
                   svg::histogram("Logit margins, class " + cls, "margin", metrics::histogram(margins)));
        write_text(dir / ("intra_class" + cls + ".svg"),
                   svg::histogram("Max intra-class distance, class " + cls, "normalised distance",
                                  metrics::histogram(intra)));
        cdfs.push_back(cdf_series("class " + cls, margins));
    }
    write_text(dir / "margin_cdf.svg", svg::line_chart("Margin CDF", "margin", "fraction", cdfs));

    std::vector<std::pair<std::string, double>> bars;
    for (auto b : {data::Bucket::head, data::Bucket::torso, data::Bucket::tail}) {
        const std::string name = "bucket_" + data::to_string(b) + "_accuracy";
        for (const auto& row : top.at("aggregate")) {
            if (row.at("metric") == name) bars.emplace_back(data::to_string(b), row.at("mean").get<double>());
        }
    }
    write_text(dir / "buckets.svg", svg::bar_chart("Accuracy by frequency bucket", "accuracy", bars));

    if (reports.front().embedding_sample.size() > 0) {
        write_text(dir / "embedding.svg", svg::scatter("Test embeddings", reports.front().embedding_sample,
                                                       reports.front().embedding_labels));
    }

    if (fs::exists(dir / "sweep.json")) {
        const auto sweep = read_json(dir / "sweep.json");
        std::map<std::string, svg::Series> lines;
        std::vector<std::string> order;
        for (const auto& run : sweep.at("runs")) {
            const double lambda = run.at("lambda").get<double>();
            for (const auto& row : run.at("aggregate")) {
                const auto metric = row.at("metric").get<std::string>();
                if (metric != "balanced_accuracy" && metric.rfind("bucket_", 0) != 0) continue;
                auto [it, fresh] = lines.try_emplace(metric);
                if (fresh) {
                    it->second.label = metric;
                    order.push_back(metric);
                }
                it->second.x.push_back(lambda);
                it->second.y.push_back(row.at("mean").get<double>());
            }
        }
        std::vector<svg::Series> series;
        for (const auto& m : order) series.push_back(lines[m]);
        write_text(dir / "sensitivity.svg",
                   svg::line_chart("Sensitivity to lambda", "lambda", "accuracy", series, true));
    }
}

void run_sweep(const config::ExperimentConfig& cfg, std::vector<double> lambdas, int workers) {
    if (lambdas.empty()) throw std::invalid_argument("sweep: no lambda values");
    for (double l : lambdas) {
        if (!(l >= 0.0)) throw std::invalid_argument("sweep: lambda values must be non-negative");
    }
    std::sort(lambdas.begin(), lambdas.end());
    lambdas.erase(std::unique(lambdas.begin(), lambdas.end()), lambdas.end());

    const fs::path root = cfg.output_dir;
    fs::create_directories(root);
    auto runs = ordered_json::array();
    std::ostringstream csv;
    csv << "lambda,metric,mean,std,n\n";
    for (std::size_t k = 0; k < lambdas.size(); ++k) {
        auto sub = cfg;
        sub.loss.lambda_pull = lambdas[k];
        const std::string name = "lambda_" + std::to_string(k);
        sub.output_dir = (root / name).string();
        const auto outcomes = run_experiment(sub, workers);
        std::vector<metrics::Report> reports;
        for (const auto& o : outcomes) reports.push_back(o.report);
        const auto rows = report_io::aggregate(reports);
        runs.push_back({{"lambda", lambdas[k]}, {"dir", name}, {"aggregate", aggregate_json(rows)}});
        for (const auto& r : rows) {
            csv << report_io::format_double(lambdas[k]) << ',' << r.metric << ',' << report_io::format_double(r.mean)
                << ',' << report_io::format_double(r.stddev) << ',' << r.n << '\n';
        }
    }
    ordered_json sweep;
    sweep["config"] = config::to_json(cfg);
    sweep["runs"] = runs;
    write_text(root / "sweep.json", sweep.dump(2) + "\n");
    write_text(root / "sweep.csv", csv.str());

    // Root report.json mirrors the smallest-lambda run.
    const auto first = read_json(root / "lambda_0" / "report.json");
    ordered_json top = first;
    auto seeds = ordered_json::array();
    for (const auto& s : first.at("seeds")) {
        seeds.push_back({{"seed", s.at("seed")}, {"report", "lambda_0/" + s.at("report").get<std::string>()}});
    }
    top["seeds"] = seeds;
    write_text(root / "report.json", top.dump(2) + "\n");
    emit_plots(root);
}

}  // namespace marginlab::experiment
