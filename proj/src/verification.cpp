#include "marginlab/verification.hpp"

#include "marginlab/data_synth.hpp"
#include "marginlab/experiment.hpp"
#include "marginlab/losses.hpp"
#include "marginlab/scorer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <sstream>

namespace marginlab::verification {

using bounds::BoundCheckRecord;
using bounds::BoundConfig;

std::mt19937_64 trial_rng(std::uint64_t seed, std::string_view check, int trial) {
    std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                                     static_cast<std::uint32_t>(trial)};
    for (char c : check) words.push_back(static_cast<unsigned char>(c));
    std::seed_seq seq(words.begin(), words.end());
    return std::mt19937_64(seq);
}

namespace {

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// Gaussian cloud with a log-uniform scale in [0.1, 3].
Matrix cloud(std::mt19937_64& rng, int n, int k) {
    const double scale = std::exp(uniform(rng, std::log(0.1), std::log(3.0)));
    std::normal_distribution<double> z(0.0, scale);
    Matrix m(n, k);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = z(rng);
    return m;
}

// Labels covering every class of [0, L) at least once, then shuffled.
Labels labels_covering(std::mt19937_64& rng, int n, int L) {
    Labels out;
    for (int y = 0; y < L; ++y) out.push_back(y);
    while (static_cast<int>(out.size()) < n) out.push_back(uniform_int(rng, 0, L - 1));
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

std::string describe(std::initializer_list<std::pair<const char*, double>> fields) {
    std::ostringstream s;
    bool first = true;
    for (const auto& [k, v] : fields) {
        s << (first ? "" : " ") << k << '=' << v;
        first = false;
    }
    return s.str();
}

double relative(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

}  // namespace

BoundCheckRecord variance_identity_trial(const BoundConfig& cfg, std::mt19937_64& rng) {
    const int n = uniform_int(rng, 1, cfg.max_class_size);
    const int k = uniform_int(rng, 1, cfg.max_dim);
    const double err = bounds::variance_identity_check(cloud(rng, n, k));
    return bounds::make_record("variance_identity", describe({{"n", n}, {"K", k}}), err, 1e-12, 0.0);
}

BoundCheckRecord pull_bound_trial(const BoundConfig& cfg, std::mt19937_64& rng, Fault fault) {
    const int n = uniform_int(rng, 2, cfg.max_class_size);
    const int k = uniform_int(rng, 1, cfg.max_dim);
    const Matrix emb = cloud(rng, n, k);
    const double alpha = uniform(rng, 0.0, cfg.max_alpha);
    auto r = bounds::pull_bound_check(emb, alpha);
    if (fault == Fault::flip_pull) r = bounds::make_record(r.check, r.instance, r.rhs, r.lhs);
    return r;
}

BoundCheckRecord push_bound_trial(const BoundConfig& cfg, std::mt19937_64& rng) {
    const int L = uniform_int(rng, 2, 4);
    const int n = uniform_int(rng, L, std::max(L, cfg.max_class_size));
    const int k = uniform_int(rng, 1, cfg.max_dim);
    const Labels labels = labels_covering(rng, n, L);
    Matrix emb = cloud(rng, n, k);
    // Shift each class so centroid gaps vary between instances.
    const Matrix offsets = cloud(rng, L, k);
    for (int i = 0; i < n; ++i) emb.row(i) += offsets.row(labels[static_cast<std::size_t>(i)]);
    Vector beta(L);
    for (int y = 0; y < L; ++y) beta[y] = uniform(rng, 0.0, cfg.max_alpha);
    const int y = uniform_int(rng, 0, L - 1);
    return bounds::push_bound_check(emb, labels, beta, y);
}

BoundCheckRecord variance_chain_trial(const BoundConfig& cfg, std::mt19937_64& rng) {
    const int n = uniform_int(rng, 4, 2 * cfg.max_class_size);
    const int k = uniform_int(rng, 1, cfg.max_dim);
    std::vector<int> signs{-1, -1, 1, 1};
    while (static_cast<int>(signs.size()) < n) signs.push_back(uniform_int(rng, 0, 1) ? 1 : -1);
    std::shuffle(signs.begin(), signs.end(), rng);
    const Matrix emb = cloud(rng, n, k);
    const Vector w = cloud(rng, k, 1).col(0);
    const double b = uniform(rng, -2.0, 2.0);
    const double shift = uniform(rng, -2.0, 2.0);
    const int sign = uniform_int(rng, 0, 1) ? 1 : -1;
    const auto chain = bounds::loss_variance_lemma_check(emb, signs, w, b, shift, sign);
    std::ostringstream d;
    d << "n=" << n << " K=" << k << " sign=" << sign << " var_log=" << chain.var_log << " var_lin=" << chain.var_lin
      << " quad=" << chain.quad_form;
    auto r = bounds::make_record("variance_chain", d.str(), chain.var_log, chain.trace_bound);
    r.pass = chain.holds();
    return r;
}

BoundCheckRecord dro_lt_trial(const BoundConfig& cfg, std::mt19937_64& rng) {
    const int L = uniform_int(rng, 2, 4);
    const int n = uniform_int(rng, L, std::max(L, cfg.max_class_size));
    const int k = uniform_int(rng, 1, cfg.max_dim);
    const Labels labels = labels_covering(rng, n, L);
    const Matrix emb = cloud(rng, n, k);
    Vector eps(L);
    for (int y = 0; y < L; ++y) eps[y] = uniform(rng, 0.0, cfg.max_alpha);
    const auto a = losses::dro_lt_reg(emb, labels, eps);
    const auto b = losses::dro_lt_reg_factored(emb, labels, eps);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, relative(a[i], b[i]));
    return bounds::make_record("dro_lt_equivalence", describe({{"n", n}, {"K", k}, {"L", L}}), worst, 1e-10, 0.0);
}

BoundCheckRecord gaussian_penalty_trial(const BoundConfig& cfg, std::mt19937_64& rng) {
    const int L = uniform_int(rng, 1, 4);
    const int n = uniform_int(rng, L, std::max(L, cfg.max_class_size));
    const int k = uniform_int(rng, 1, cfg.max_dim);
    const Labels labels = labels_covering(rng, n, L);
    const Matrix emb = cloud(rng, n, k);
    const double s2 = std::exp(uniform(rng, std::log(0.25), std::log(4.0)));
    const auto c = losses::class_centroids(emb, labels, L);
    const double full = losses::gaussian_xent_penalty(emb, labels, c.means, s2);
    const double penalty = full - n * losses::gaussian_xent_constant(k, s2);
    const double center = losses::center_loss(emb, labels, c.means).sum() / (2.0 * s2);
    // Scaled by the operands: subtracting the constant cancels digits when the quadratic part is tiny.
    const double err = std::abs(penalty - center) / std::max({std::abs(full), std::abs(center), 1e-300});
    return bounds::make_record("gaussian_penalty_equivalence", describe({{"n", n}, {"K", k}, {"L", L}, {"s2", s2}}),
                               err, 1e-12, 0.0);
}

BoundCheckRecord bayes_head_trial(const BoundConfig& cfg, std::mt19937_64& rng) {
    const int L = uniform_int(rng, 2, 4);
    const int k = uniform_int(rng, 1, cfg.max_dim);
    const double s2 = std::exp(uniform(rng, std::log(0.25), std::log(4.0)));
    ClassGaussianSpec spec;
    double total = 0.0;
    std::vector<double> w(static_cast<std::size_t>(L));
    for (auto& v : w) total += v = uniform(rng, 0.05, 1.0);
    const Matrix means = cloud(rng, L, k);
    for (int y = 0; y < L; ++y) spec.push_back({means.row(y).transpose(), s2, w[static_cast<std::size_t>(y)] / total});
    const Matrix pts = cloud(rng, 20, k);
    const double err = bounds::bayes_logistic_realizability_check(spec, pts);
    return bounds::make_record("bayes_realizability", describe({{"K", k}, {"L", L}, {"s2", s2}}), err, 1e-10, 0.0);
}

BoundCheckRecord bennett_trial(const BoundConfig& cfg, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> z(50);
    for (double& v : z) v = u(rng);
    const double bound = bounds::bennett_bound(z, 1.0, cfg.delta);
    return bounds::make_record("bennett_coverage", describe({{"n", 50}, {"delta", cfg.delta}}), 0.5, bound, 0.0);
}

BoundCheckRecord gen_bound_trial(const BoundConfig& cfg, std::mt19937_64& rng) {
    const int k = 2;
    const double sep = uniform(rng, 0.5, 2.0);
    const double p_pos = uniform(rng, 0.05, 0.5);
    Vector mu(k);
    mu << sep / std::sqrt(2.0), sep / std::sqrt(2.0);
    const ClassGaussianSpec spec{{-mu, 1.0, 1.0 - p_pos}, {mu, 1.0, p_pos}};

    // Bayes head plus noise, fixed before any sample is drawn.
    std::normal_distribution<double> noise(0.0, 0.1);
    Vector w = 2.0 * mu;
    for (Eigen::Index j = 0; j < w.size(); ++j) w[j] += noise(rng);
    const double b = std::log(p_pos / (1.0 - p_pos)) + noise(rng);
    const double shift = std::log(p_pos / (1.0 - p_pos));

    std::uniform_int_distribution<std::uint64_t> seeds;
    auto to_binary = [](const data::Dataset& d) {
        bounds::BinarySample s;
        s.embeddings = d.inputs;
        for (int y : d.labels) s.signs.push_back(y == 1 ? 1 : -1);
        return s;
    };
    data::Dataset train;
    do {
        train = data::gaussian_mixture_lt(spec, cfg.train_size, seeds(rng));
    } while (std::min(train.counts()[0], train.counts()[1]) < 2);

    bounds::GenBoundInputs in;
    in.train = to_binary(train);
    in.eval = to_binary(data::gaussian_mixture_lt(spec, cfg.eval_size, seeds(rng)));
    in.w = w;
    in.b = b;
    in.delta_neg = shift;
    in.delta_pos = shift;
    in.alpha_neg = 1.0 - p_pos;
    in.alpha_pos = p_pos;
    in.prior_pos = p_pos;
    in.confidence = cfg.delta;
    in.loss_bound = cfg.loss_bound;
    auto r = bounds::gen_bound_check(in).record;
    r.instance += " sep=" + std::to_string(sep) + " p=" + std::to_string(p_pos);
    return r;
}

double required_coverage(double delta, int trials) {
    return 1.0 - delta - 3.0 * std::sqrt(delta * (1.0 - delta) / trials);
}

VerifyResult run_verification_suite(const VerifyOptions& options) {
    const auto& cfg = options.bounds;
    cfg.validate();
    struct Check {
        const char* name;
        bool probabilistic;
        std::function<BoundCheckRecord(std::mt19937_64&)> run;
    };
    const std::vector<Check> checks{
        {"variance_identity", false, [&](auto& r) { return variance_identity_trial(cfg, r); }},
        {"pull_bound", false, [&](auto& r) { return pull_bound_trial(cfg, r, options.fault); }},
        {"push_bound", false, [&](auto& r) { return push_bound_trial(cfg, r); }},
        {"variance_chain", false, [&](auto& r) { return variance_chain_trial(cfg, r); }},
        {"dro_lt_equivalence", false, [&](auto& r) { return dro_lt_trial(cfg, r); }},
        {"gaussian_penalty_equivalence", false, [&](auto& r) { return gaussian_penalty_trial(cfg, r); }},
        {"bayes_realizability", false, [&](auto& r) { return bayes_head_trial(cfg, r); }},
        {"bennett_coverage", true, [&](auto& r) { return bennett_trial(cfg, r); }},
        {"gen_bound", true, [&](auto& r) { return gen_bound_trial(cfg, r); }},
    };

    const auto T = static_cast<std::size_t>(cfg.trials);
    std::vector<TrialRecord> records(checks.size() * T);
    experiment::parallel_for(records.size(), options.workers, [&](std::size_t idx) {
        const auto& c = checks[idx / T];
        const int trial = static_cast<int>(idx % T);
        auto rng = trial_rng(cfg.seed, c.name, trial);
        auto rec = c.run(rng);
        rec.instance = "seed=" + std::to_string(cfg.seed) + " trial=" + std::to_string(trial) + " " + rec.instance;
        records[idx] = {trial, std::move(rec)};
    });

    VerifyResult out;
    out.pass = true;
    for (std::size_t ci = 0; ci < checks.size(); ++ci) {
        CheckSummary s;
        s.check = checks[ci].name;
        s.probabilistic = checks[ci].probabilistic;
        s.trials = cfg.trials;
        s.required = s.probabilistic ? required_coverage(cfg.delta, cfg.trials) : 1.0;
        for (std::size_t t = 0; t < T; ++t) {
            const auto& r = records[ci * T + t].record;
            if (r.pass) {
                ++s.passed;
            } else if (!s.probabilistic) {
                s.failures.push_back(r.instance);
            }
        }
        s.pass = s.probabilistic ? static_cast<double>(s.passed) >= s.required * s.trials : s.passed == s.trials;
        out.pass = out.pass && s.pass;
        out.summaries.push_back(std::move(s));
    }
    out.records = std::move(records);
    return out;
}

void write_jsonl(const VerifyResult& result, std::ostream& out) {
    for (const auto& tr : result.records) {
        const auto& r = tr.record;
        nlohmann::ordered_json j;
        j["check"] = r.check;
        j["trial"] = tr.trial;
        j["instance"] = r.instance;
        j["lhs"] = r.lhs;
        j["rhs"] = r.rhs;
        j["slack"] = r.slack;
        j["pass"] = r.pass;
        out << j.dump() << '\n';
    }
}

}  // namespace marginlab::verification
