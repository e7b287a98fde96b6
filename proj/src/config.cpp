#include "marginlab/config.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace marginlab::config {

using nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

// Reads one JSON object, remembering which keys were consumed.
class Block {
public:
    Block(const json& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    bool has(const std::string& key) const { return node_.contains(key); }

    template <class T>
    T get(const std::string& key, T fallback) {
        seen_.insert(key);
        if (!node_.contains(key)) return fallback;
        return convert<T>(node_.at(key), join(path_, key));
    }

    template <class T>
    T require(const std::string& key) {
        seen_.insert(key);
        if (!node_.contains(key)) throw ConfigError(join(path_, key), "missing required field");
        return convert<T>(node_.at(key), join(path_, key));
    }

    Block child(const std::string& key) {
        seen_.insert(key);
        static const json empty = json::object();
        return Block(node_.contains(key) ? node_.at(key) : empty, join(path_, key));
    }

    void finish() const {
        for (auto it = node_.begin(); it != node_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError(join(path_, it.key()), "unknown field");
        }
    }

    const std::string& path() const { return path_; }

private:
    template <class T>
    static T convert(const json& v, const std::string& where) {
        try {
            if constexpr (std::is_same_v<T, double>) {
                if (!v.is_number()) throw ConfigError(where, "expected a number");
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer()) throw ConfigError(where, "expected an integer");
                if constexpr (std::is_unsigned_v<T>) {
                    if (v.is_number_integer() && !v.is_number_unsigned()) throw ConfigError(where, "expected a non-negative integer");
                }
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw ConfigError(where, "expected a string");
            }
            return v.get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(where, e.what());
        }
    }

    const json& node_;
    std::string path_;
    std::set<std::string> seen_;
};

void check(bool ok, const std::string& field, const std::string& message) {
    if (!ok) throw ConfigError(field, message);
}

DatasetConfig parse_dataset(Block b) {
    DatasetConfig d;
    d.generator = b.require<std::string>("generator");
    const std::string p = b.path();
    if (d.generator == "two_moons") {
        d.train_size = b.get("train_size", d.train_size);
        d.test_size = b.get("test_size", d.test_size);
        d.tail_prob = b.get("tail_prob", d.tail_prob);
        d.test_tail_prob = b.get("test_tail_prob", d.test_tail_prob);
        d.noise = b.get("noise", d.noise);
        check(d.train_size >= 2, join(p, "train_size"), "must be >= 2");
        check(d.test_size >= 2, join(p, "test_size"), "must be >= 2");
        check(d.tail_prob > 0.0 && d.tail_prob < 1.0, join(p, "tail_prob"), "must lie in (0, 1)");
        check(d.test_tail_prob > 0.0 && d.test_tail_prob < 1.0, join(p, "test_tail_prob"), "must lie in (0, 1)");
        check(d.noise >= 0.0, join(p, "noise"), "must be non-negative");
    } else if (d.generator == "gaussian_exp") {
        d.num_classes = b.get("num_classes", d.num_classes);
        d.dim = b.get("dim", d.dim);
        d.n_max = b.get("n_max", d.n_max);
        d.rho = b.get("rho", d.rho);
        d.separation = b.get("separation", d.separation);
        d.variance = b.get("variance", d.variance);
        d.test_per_class = b.get("test_per_class", d.test_per_class);
        d.mean_seed = b.get("mean_seed", d.mean_seed);
        check(d.num_classes >= 2, join(p, "num_classes"), "must be >= 2");
        check(d.dim >= 1, join(p, "dim"), "must be >= 1");
        check(d.rho >= 1.0, join(p, "rho"), "must be >= 1");
        check(d.n_max >= 1 && std::lround(d.n_max / d.rho) >= 1, join(p, "n_max"),
              "too small for one sample in the rarest class");
        check(d.separation >= 0.0, join(p, "separation"), "must be non-negative");
        check(d.variance > 0.0, join(p, "variance"), "must be positive");
        check(d.test_per_class >= 1, join(p, "test_per_class"), "must be >= 1");
    } else {
        throw ConfigError(join(p, "generator"), "unknown generator '" + d.generator + "'");
    }
    b.finish();
    return d;
}

LossConfig parse_loss(Block b) {
    LossConfig l;
    const std::string scheme = b.get<std::string>("delta", "zero");
    try {
        l.delta = losses::parse_delta_scheme(scheme);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(join(b.path(), "delta"), e.what());
    }
    l.lambda_pull = b.get("lambda_pull", l.lambda_pull);
    l.lambda_push = b.get("lambda_push", l.lambda_push);
    l.beta = b.get("beta", l.beta);
    l.lambda_center = b.get("lambda_center", l.lambda_center);
    {
        Block a = b.child("alpha");
        l.alpha.base = a.get("base", l.alpha.base);
        l.alpha.exponent = a.get("exponent", l.alpha.exponent);
        l.alpha.scale = a.get("scale", l.alpha.scale);
        check(l.alpha.base == "prior" || l.alpha.base == "count", join(a.path(), "base"),
              "unknown alpha base '" + l.alpha.base + "'");
        a.finish();
    }
    check(l.lambda_pull >= 0.0, join(b.path(), "lambda_pull"), "must be non-negative");
    check(l.lambda_push >= 0.0, join(b.path(), "lambda_push"), "must be non-negative");
    check(l.lambda_center >= 0.0, join(b.path(), "lambda_center"), "must be non-negative");
    b.finish();
    return l;
}

train::TrainConfig parse_training(Block b) {
    train::TrainConfig t;
    t.epochs = b.get("epochs", t.epochs);
    t.batch_size = b.get("batch_size", t.batch_size);
    t.base_lr = b.get("lr", t.base_lr);
    t.momentum = b.get("momentum", t.momentum);
    t.weight_decay = b.get("weight_decay", t.weight_decay);
    const std::string schedule = b.get<std::string>("schedule", to_string(t.schedule));
    try {
        t.schedule = train::parse_schedule(schedule);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(join(b.path(), "schedule"), e.what());
    }
    t.warmup_epochs = b.get("warmup_epochs", t.warmup_epochs);
    t.decay_epochs = b.get("decay_epochs", t.decay_epochs);
    t.decay_factor = b.get("decay_factor", t.decay_factor);
    const std::string head = b.get<std::string>("head", to_string(t.head_mode));
    try {
        t.head_mode = train::parse_head_mode(head);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(join(b.path(), "head"), e.what());
    }
    t.prototype_v2 = b.get("prototype_v2", t.prototype_v2);
    t.centroid_decay = b.get("centroid_decay", t.centroid_decay);
    b.finish();
    try {
        t.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(b.path(), e.what());
    }
    return t;
}

}  // namespace

ExperimentConfig parse(const json& doc) {
    Block root(doc, "");
    const int schema = root.require<int>("schema");
    check(schema == kSchemaVersion, "schema", "unsupported schema version " + std::to_string(schema));

    ExperimentConfig cfg;
    cfg.dataset = parse_dataset(root.child("dataset"));
    {
        Block a = root.child("architecture");
        cfg.layer_sizes = a.require<std::vector<int>>("layer_sizes");
        a.finish();
        const std::string f = "architecture.layer_sizes";
        check(cfg.layer_sizes.size() >= 2, f, "needs input and output sizes");
        for (int s : cfg.layer_sizes) check(s >= 1, f, "sizes must be positive");
        check(cfg.layer_sizes.front() == cfg.dataset.input_dim(), f,
              "input size " + std::to_string(cfg.layer_sizes.front()) + " does not match the dataset dimension " +
                  std::to_string(cfg.dataset.input_dim()));
        check(cfg.layer_sizes.back() == cfg.dataset.classes(), f,
              "output size " + std::to_string(cfg.layer_sizes.back()) + " does not match the class count " +
                  std::to_string(cfg.dataset.classes()));
    }
    cfg.loss = parse_loss(root.child("loss"));
    cfg.training = parse_training(root.child("training"));
    cfg.output_dir = root.get("output_dir", cfg.output_dir);
    cfg.seeds = root.get("seeds", cfg.seeds);
    check(!cfg.seeds.empty(), "seeds", "at least one seed is required");
    check(!cfg.output_dir.empty(), "output_dir", "must not be empty");
    root.finish();
    return cfg;
}

ExperimentConfig parse_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("", std::string("malformed JSON: ") + e.what());
    }
    return parse(doc);
}

ExperimentConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot read config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str());
}

nlohmann::ordered_json to_json(const ExperimentConfig& cfg) {
    nlohmann::ordered_json j;
    j["schema"] = kSchemaVersion;
    const auto& d = cfg.dataset;
    auto& ds = j["dataset"];
    ds["generator"] = d.generator;
    if (d.generator == "two_moons") {
        ds["train_size"] = d.train_size;
        ds["test_size"] = d.test_size;
        ds["tail_prob"] = d.tail_prob;
        ds["test_tail_prob"] = d.test_tail_prob;
        ds["noise"] = d.noise;
    } else {
        ds["num_classes"] = d.num_classes;
        ds["dim"] = d.dim;
        ds["n_max"] = d.n_max;
        ds["rho"] = d.rho;
        ds["separation"] = d.separation;
        ds["variance"] = d.variance;
        ds["test_per_class"] = d.test_per_class;
        ds["mean_seed"] = d.mean_seed;
    }
    j["architecture"]["layer_sizes"] = cfg.layer_sizes;
    auto& l = j["loss"];
    l["delta"] = losses::to_string(cfg.loss.delta);
    l["lambda_pull"] = cfg.loss.lambda_pull;
    l["alpha"] = {{"base", cfg.loss.alpha.base}, {"exponent", cfg.loss.alpha.exponent}, {"scale", cfg.loss.alpha.scale}};
    l["lambda_push"] = cfg.loss.lambda_push;
    l["beta"] = cfg.loss.beta;
    l["lambda_center"] = cfg.loss.lambda_center;
    const auto& t = cfg.training;
    auto& tr = j["training"];
    tr["epochs"] = t.epochs;
    tr["batch_size"] = t.batch_size;
    tr["lr"] = t.base_lr;
    tr["momentum"] = t.momentum;
    tr["weight_decay"] = t.weight_decay;
    tr["schedule"] = train::to_string(t.schedule);
    tr["warmup_epochs"] = t.warmup_epochs;
    tr["decay_epochs"] = t.decay_epochs;
    tr["decay_factor"] = t.decay_factor;
    tr["head"] = train::to_string(t.head_mode);
    tr["prototype_v2"] = t.prototype_v2;
    tr["centroid_decay"] = t.centroid_decay;
    j["output_dir"] = cfg.output_dir;
    j["seeds"] = cfg.seeds;
    return j;
}

losses::LossSpec make_loss_spec(const LossConfig& loss, const std::vector<int>& train_counts) {
    const int L = static_cast<int>(train_counts.size());
    double total = 0.0;
    for (int c : train_counts) total += c;
    std::vector<double> priors(train_counts.size()), bases(train_counts.size());
    for (std::size_t y = 0; y < train_counts.size(); ++y) {
        priors[y] = train_counts[y] / total;
        bases[y] = loss.alpha.base == "count" ? static_cast<double>(train_counts[y]) : priors[y];
    }
    auto spec = losses::LossSpec::plain(L);
    if (loss.delta == losses::DeltaScheme::logadj || loss.delta == losses::DeltaScheme::tan) {
        for (std::size_t y = 0; y < priors.size(); ++y) {
            if (priors[y] <= 0.0) {
                throw ConfigError("loss.delta", "class " + std::to_string(y + 1) + " is absent from the training set");
            }
        }
    }
    spec.delta = losses::delta_schedule(priors, loss.delta);
    spec.alpha = losses::alpha_schedule(bases, loss.alpha.exponent, loss.alpha.scale);
    spec.beta = Vector::Constant(L, loss.beta);
    spec.lambda_pull = loss.lambda_pull;
    spec.lambda_push = loss.lambda_push;
    spec.lambda_center = loss.lambda_center;
    spec.validate();
    return spec;
}

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace

ClassGaussianSpec gaussian_exp_spec(const DatasetConfig& cfg) {
    std::mt19937_64 rng(cfg.mean_seed);
    std::normal_distribution<double> z(0.0, 1.0);
    const auto counts = data::exp_profile(cfg.n_max, cfg.num_classes, cfg.rho);
    double total = 0.0;
    for (int c : counts) total += c;
    ClassGaussianSpec spec;
    for (int y = 0; y < cfg.num_classes; ++y) {
        Vector dir(cfg.dim);
        do {
            for (Eigen::Index j = 0; j < dir.size(); ++j) dir[j] = z(rng);
        } while (dir.norm() < 1e-12);
        spec.push_back({cfg.separation * dir.normalized(), cfg.variance, counts[static_cast<std::size_t>(y)] / total});
    }
    return spec;
}

Splits make_splits(const DatasetConfig& cfg, std::uint64_t seed) {
    Splits s;
    if (cfg.generator == "two_moons") {
        s.train = data::two_moons_lt(cfg.train_size, cfg.tail_prob, cfg.noise, mix(seed, 1));
        s.test = data::two_moons_lt(cfg.test_size, cfg.test_tail_prob, cfg.noise, mix(seed, 2));
        return s;
    }
    const auto spec = gaussian_exp_spec(cfg);
    s.train = data::gaussian_mixture_counts(spec, data::exp_profile(cfg.n_max, cfg.num_classes, cfg.rho), mix(seed, 1));
    s.test = data::gaussian_mixture_counts(
        spec, std::vector<int>(static_cast<std::size_t>(cfg.num_classes), cfg.test_per_class), mix(seed, 2));
    return s;
}

}  // namespace marginlab::config
