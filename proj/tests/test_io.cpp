#include "marginlab/checkpoint.hpp"
#include "marginlab/config.hpp"
#include "marginlab/experiment.hpp"
#include "marginlab/report_io.hpp"
#include "marginlab/svg.hpp"

#include <doctest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

using namespace marginlab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::path(MARGINLAB_SCRATCH) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

json minimal_config() {
    return json::parse(R"({
      "schema": 1,
      "dataset": {"generator": "two_moons", "train_size": 300, "test_size": 200, "tail_prob": 0.1, "noise": 0.1},
      "architecture": {"layer_sizes": [2, 8, 2, 2]},
      "loss": {"delta": "logadj", "lambda_pull": 0.01},
      "training": {"epochs": 3, "batch_size": 64},
      "seeds": [1, 2, 3]
    })");
}

std::string config_error_field(const json& doc) {
    try {
        config::parse(doc);
    } catch (const config::ConfigError& e) {
        return e.field();
    }
    return "<accepted>";
}

}  // namespace

TEST_CASE("checkpoint round trip") {
    const auto dir = scratch("ckpt");
    const auto p = scorer::init_params({3, 7, 4, 5}, 21);
    checkpoint::save(p, dir);
    CHECK(fs::file_size(dir / "params.bin") == p.parameter_count() * 8);
    const auto q = checkpoint::load(dir);
    std::vector<Matrix> a, b;
    p.for_each_tensor([&](const std::string&, Eigen::Map<const Matrix> t) { a.emplace_back(t); });
    q.for_each_tensor([&](const std::string&, Eigen::Map<const Matrix> t) { b.emplace_back(t); });
    CHECK(a == b);

    const auto manifest = json::parse(slurp(dir / "manifest.json"));
    CHECK(manifest.at("format") == "marginlab-checkpoint");
    CHECK(manifest.at("tensors").size() == a.size());
    CHECK(manifest.at("tensors")[0].at("name") == "hidden.0.weight");

    // First stored double is the first weight, little-endian.
    const std::string raw = slurp(dir / "params.bin");
    std::uint64_t bits = 0;
    for (int k = 7; k >= 0; --k) bits = (bits << 8) | static_cast<unsigned char>(raw[static_cast<std::size_t>(k)]);
    CHECK(std::bit_cast<double>(bits) == p.hidden[0].weight(0, 0));

    fs::resize_file(dir / "params.bin", 16);
    CHECK_THROWS(checkpoint::load(dir));
    CHECK_THROWS(checkpoint::load(dir / "missing"));
}

TEST_CASE("config parsing") {
    const auto cfg = config::parse(minimal_config());
    CHECK(cfg.dataset.generator == "two_moons");
    CHECK(cfg.dataset.train_size == 300);
    CHECK(cfg.layer_sizes == std::vector<int>{2, 8, 2, 2});
    CHECK(cfg.loss.delta == losses::DeltaScheme::logadj);
    CHECK(cfg.training.epochs == 3);
    CHECK(cfg.training.momentum == 0.9);
    CHECK(cfg.seeds.size() == 3);

    // to_json followed by parse is a fixed point.
    const auto again = config::parse(json::parse(config::to_json(cfg).dump()));
    CHECK(config::to_json(again).dump() == config::to_json(cfg).dump());

    auto doc = minimal_config();
    doc["loss"]["delta"] = "foo";
    CHECK(config_error_field(doc) == "loss.delta");

    doc = minimal_config();
    doc["loss"]["alpha"]["colour"] = 1;
    CHECK(config_error_field(doc) == "loss.alpha.colour");

    doc = minimal_config();
    doc["extra"] = true;
    CHECK(config_error_field(doc) == "extra");

    doc = minimal_config();
    doc["training"]["epochs"] = "many";
    CHECK(config_error_field(doc) == "training.epochs");

    doc = minimal_config();
    doc["architecture"]["layer_sizes"] = {2, 8, 3};
    CHECK(config_error_field(doc) == "architecture.layer_sizes");

    doc = minimal_config();
    doc["schema"] = 2;
    CHECK(config_error_field(doc) == "schema");

    doc = minimal_config();
    doc.erase("schema");
    CHECK(config_error_field(doc) == "schema");

    doc = minimal_config();
    doc["training"]["momentum"] = 1.5;
    CHECK(config_error_field(doc) == "training");

    CHECK_THROWS_AS(config::parse_text("{not json"), config::ConfigError);
}

TEST_CASE("loss spec from a config") {
    config::LossConfig l;
    l.delta = losses::DeltaScheme::logadj;
    l.lambda_pull = 0.01;
    l.alpha.base = "count";
    l.alpha.exponent = 0.5;
    const auto spec = config::make_loss_spec(l, {900, 100});
    CHECK(spec.delta(1, 0) == doctest::Approx(std::log(9.0)));
    CHECK(spec.alpha[0] == doctest::Approx(30.0));
    CHECK(spec.alpha[1] == doctest::Approx(10.0));
    CHECK(spec.lambda_pull == 0.01);
    CHECK_THROWS_AS(config::make_loss_spec(l, {10, 0}), config::ConfigError);
}

TEST_CASE("gaussian EXP splits") {
    config::DatasetConfig d;
    d.generator = "gaussian_exp";
    d.num_classes = 10;
    d.n_max = 200;
    d.rho = 100.0;
    d.test_per_class = 30;
    const auto s = config::make_splits(d, 4);
    CHECK(s.train.counts() == data::exp_profile(200, 10, 100.0));
    for (int c : s.test.counts()) CHECK(c == 30);
    const auto spec = config::gaussian_exp_spec(d);
    for (const auto& c : spec) CHECK(c.mean.norm() == doctest::Approx(d.separation));
    CHECK(config::make_splits(d, 4).train.inputs == s.train.inputs);
    CHECK(config::make_splits(d, 5).train.inputs != s.train.inputs);
}

TEST_CASE("report JSON round trip") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> z(0.0, 1.0);
    Matrix emb(40, 2), logits(40, 3);
    for (Eigen::Index i = 0; i < emb.size(); ++i) emb.data()[i] = z(rng);
    for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = z(rng);
    Labels labels;
    for (int i = 0; i < 40; ++i) labels.push_back(i % 3);
    const auto r = metrics::evaluate(emb, logits, labels, 3, {200, 40, 4});
    const auto j = report_io::to_json(r);
    CHECK(j.at("classes")[0].at("label") == 1);
    const auto back = report_io::report_from_json(json::parse(j.dump()));
    CHECK(back.balanced_accuracy == r.balanced_accuracy);
    CHECK(back.classes[2].margins == r.classes[2].margins);
    CHECK(back.embedding_sample == r.embedding_sample);
    CHECK(back.embedding_labels == r.embedding_labels);
    CHECK(report_io::to_json(back).dump() == j.dump());

    CHECK(report_io::format_double(0.1) == "0.10000000000000001");
    CHECK(std::stod(report_io::format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("aggregate statistics equal recomputation from per-seed reports") {
    auto doc = minimal_config();
    const auto dir = scratch("agg");
    doc["output_dir"] = dir.string();
    const auto cfg = config::parse(doc);
    experiment::run_experiment(cfg, 1);

    std::map<std::string, std::vector<double>> per_metric;
    const auto top = json::parse(slurp(dir / "report.json"));
    REQUIRE(top.at("seeds").size() == 3);
    for (const auto& s : top.at("seeds")) {
        const auto rep = report_io::report_from_json(json::parse(slurp(dir / s.at("report").get<std::string>())).at("report"));
        for (const auto& [name, v] : report_io::scalar_metrics(rep)) per_metric[name].push_back(v);
    }

    std::istringstream csv(slurp(dir / "metrics.csv"));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "metric,mean,std,n");
    int rows = 0;
    while (std::getline(csv, line)) {
        std::stringstream ls(line);
        std::string name, mean, sd, n;
        std::getline(ls, name, ',');
        std::getline(ls, mean, ',');
        std::getline(ls, sd, ',');
        std::getline(ls, n, ',');
        const auto& v = per_metric.at(name);
        double m = 0.0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - m) * (x - m);
        CHECK(std::stod(mean) == doctest::Approx(m).epsilon(1e-14));
        CHECK(std::stod(sd) == doctest::Approx(std::sqrt(ss / (static_cast<double>(v.size()) - 1))).epsilon(1e-12));
        CHECK(std::stoi(n) == static_cast<int>(v.size()));
        ++rows;
    }
    CHECK(rows == static_cast<int>(per_metric.size()));

    for (const char* f : {"margins.csv", "cdf.csv", "intra.csv", "margins_class1.svg", "margins_class2.svg",
                          "intra_class1.svg", "margin_cdf.svg", "buckets.svg", "embedding.svg",
                          "seed_1/history.csv", "seed_2/checkpoint/params.bin"}) {
        CHECK_MESSAGE(fs::exists(dir / f), f);
    }
    CHECK_THROWS(experiment::emit_plots(dir / "nowhere"));
}

TEST_CASE("svg output is self-contained") {
    metrics::Histogram h{0.0, 1.0, {1, 4, 2}};
    const auto s = svg::histogram("Margins <class 1>", "margin", h);
    CHECK(s.rfind("<?xml", 0) == 0);
    CHECK(s.find("<svg") != std::string::npos);
    CHECK(s.find("&lt;class 1&gt;") != std::string::npos);
    CHECK(s.find("href") == std::string::npos);
    CHECK(s == svg::histogram("Margins <class 1>", "margin", h));
    CHECK(svg::escape("a&\"b") == "a&amp;&quot;b");

    const auto chart = svg::line_chart("t", "x", "y", {{"s", {0.0, 1.0}, {0.0, 1.0}}}, true);
    CHECK(chart.find("<polyline") != std::string::npos);
    CHECK(chart.find("<circle") != std::string::npos);
}

TEST_CASE("parallel_for reports the first failing index") {
    std::vector<int> hit(20, 0);
    experiment::parallel_for(20, 3, [&](std::size_t i) { hit[i] = 1; });
    CHECK(std::count(hit.begin(), hit.end(), 1) == 20);
    try {
        experiment::parallel_for(10, 4, [](std::size_t i) {
            if (i == 3 || i == 7) throw std::runtime_error("boom " + std::to_string(i));
        });
        FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()) == "boom 3");
    }
}
