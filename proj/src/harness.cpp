#include "oem/harness.hpp"

#include "oem/bayesian_lda.hpp"
#include "oem/core_online_em.hpp"
#include "oem/eval.hpp"
#include "oem/gibbs_lda.hpp"
#include "oem/hdp.hpp"
#include "oem/parallel.hpp"
#include "oem/variational_lda.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <stdexcept>

namespace oem {

namespace {

struct MethodName {
    Method method;
    std::string_view name;
};

constexpr MethodName kMethods[] = {
    {Method::g_oem, "g-oem"},       {Method::g_oem_pp, "g-oem++"},   {Method::v_oem, "v-oem"},
    {Method::v_oem_pp, "v-oem++"},  {Method::olda, "olda"},          {Method::svb, "svb"},
    {Method::splda, "splda"},       {Method::sgs, "sgs"},            {Method::vargibbs, "vargibbs"},
    {Method::hdp_g_oem, "hdp-g-oem"}, {Method::hdp_vargibbs, "hdp-vargibbs"},
};

bool is_incremental(Method m) { return m == Method::svb || m == Method::splda || m == Method::sgs; }
bool uses_gibbs(Method m) {
    return m == Method::g_oem || m == Method::g_oem_pp || m == Method::sgs || m == Method::vargibbs ||
           m == Method::hdp_g_oem || m == Method::hdp_vargibbs;
}
bool is_bayesian(Method m) { return m == Method::olda || m == Method::svb || m == Method::vargibbs; }

std::string default_alpha_mode(Method m) {
    switch (m) {
        case Method::olda:
        case Method::svb: return "gradient";
        case Method::sgs:
        case Method::vargibbs: return "frozen";
        default: return "fixed_point";
    }
}

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

template <class T>
void read_opt(const nlohmann::json& j, const char* key, std::optional<T>& out) {
    if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

}  // namespace

Method parse_method(std::string_view text) {
    for (const auto& m : kMethods)
        if (m.name == text) return m.method;
    throw std::invalid_argument("unknown method: " + std::string(text));
}

std::string_view to_string(Method method) {
    for (const auto& m : kMethods)
        if (m.method == method) return m.name;
    return "unknown";
}

bool is_hdp(Method method) { return method == Method::hdp_g_oem || method == Method::hdp_vargibbs; }

ExperimentConfig config_from_json(const nlohmann::json& j) {
    static const char* known[] = {"method", "k", "kappa", "averaging", "boost", "minibatch", "local_iters",
                                  "alpha_mode", "init_alpha", "seeds", "eval_every", "particles", "passes", "corpus", "vocab",
                                  "synthetic", "corpus_seed", "n_test", "topic_prior", "lambda_order", "sgs_alpha",
                                  "sgs_alpha_from", "hdp_b", "hdp_alpha", "hdp_t_max", "hdp_min_new_tokens",
                                  "hdp_max_new_per_minibatch", "hdp_prune_mass", "track_elbo", "elbo_sweeps",
                                  "record_wallclock", "threads", "out"};
    for (const auto& [key, value] : j.items())
        if (std::find(std::begin(known), std::end(known), key) == std::end(known))
            throw std::invalid_argument("unknown config key: " + key);

    ExperimentConfig c;
    read_opt(j, "method", c.method);
    read_opt(j, "k", c.k);
    read_opt(j, "kappa", c.kappa);
    read_opt(j, "averaging", c.averaging);
    read_opt(j, "boost", c.boost);
    read_opt(j, "minibatch", c.minibatch_size);
    read_opt(j, "local_iters", c.local_iters);
    read_opt(j, "alpha_mode", c.alpha_mode);
    read_opt(j, "init_alpha", c.init_alpha);
    read_opt(j, "seeds", c.seeds);
    read_opt(j, "eval_every", c.eval_every);
    read_opt(j, "particles", c.particles);
    read_opt(j, "passes", c.passes);
    read_opt(j, "corpus", c.corpus);
    read_opt(j, "vocab", c.vocab);
    read_opt(j, "synthetic", c.synthetic);
    read_opt(j, "corpus_seed", c.corpus_seed);
    read_opt(j, "n_test", c.n_test);
    read_opt(j, "topic_prior", c.topic_prior);
    read_opt(j, "lambda_order", c.lambda_order);
    read_opt(j, "sgs_alpha", c.sgs_alpha);
    read_opt(j, "sgs_alpha_from", c.sgs_alpha_from);
    read_opt(j, "hdp_b", c.hdp_b);
    read_opt(j, "hdp_alpha", c.hdp_alpha);
    read_opt(j, "hdp_t_max", c.hdp_t_max);
    read_opt(j, "hdp_min_new_tokens", c.hdp_min_new_tokens);
    read_opt(j, "hdp_max_new_per_minibatch", c.hdp_max_new_per_minibatch);
    read_opt(j, "hdp_prune_mass", c.hdp_prune_mass);
    read_opt(j, "track_elbo", c.track_elbo);
    read_opt(j, "elbo_sweeps", c.elbo_sweeps);
    read_opt(j, "record_wallclock", c.record_wallclock);
    read_opt(j, "threads", c.threads);
    read_opt(j, "out", c.out_dir);
    return c;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j{{"method", c.method},
                     {"k", c.k},
                     {"averaging", c.averaging},
                     {"minibatch", c.minibatch_size},
                     {"local_iters", c.local_iters},
                     {"init_alpha", c.init_alpha},
                     {"seeds", c.seeds},
                     {"eval_every", c.eval_every},
                     {"particles", c.particles},
                     {"passes", c.passes},
                     {"corpus", c.corpus},
                     {"vocab", c.vocab},
                     {"synthetic", c.synthetic},
                     {"corpus_seed", c.corpus_seed},
                     {"n_test", c.n_test},
                     {"topic_prior", c.topic_prior},
                     {"lambda_order", c.lambda_order},
                     {"sgs_alpha_from", c.sgs_alpha_from},
                     {"hdp_b", c.hdp_b},
                     {"hdp_alpha", c.hdp_alpha},
                     {"hdp_t_max", c.hdp_t_max},
                     {"hdp_min_new_tokens", c.hdp_min_new_tokens},
                     {"hdp_max_new_per_minibatch", c.hdp_max_new_per_minibatch},
                     {"hdp_prune_mass", c.hdp_prune_mass},
                     {"track_elbo", c.track_elbo},
                     {"elbo_sweeps", c.elbo_sweeps},
                     {"record_wallclock", c.record_wallclock},
                     {"threads", c.threads},
                     {"out", c.out_dir}};
    j["kappa"] = c.kappa ? nlohmann::json(*c.kappa) : nlohmann::json(nullptr);
    j["boost"] = c.boost ? nlohmann::json(*c.boost) : nlohmann::json(nullptr);
    j["alpha_mode"] = c.alpha_mode ? nlohmann::json(*c.alpha_mode) : nlohmann::json(nullptr);
    j["sgs_alpha"] = c.sgs_alpha ? nlohmann::json(*c.sgs_alpha) : nlohmann::json(nullptr);
    return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    return config_from_json(nlohmann::json::parse(in));
}

ResolvedConfig validate(const ExperimentConfig& c) {
    auto reject = [&](const std::string& why) { throw std::invalid_argument(c.method + ": " + why); };
    ResolvedConfig r{c, parse_method(c.method), 0.5, false, ""};
    const Method m = r.method;

    if (c.kappa && !(*c.kappa > 0.0 && *c.kappa <= 1.0)) reject("kappa must lie in (0, 1]");
    if (is_incremental(m)) {
        if (c.kappa && *c.kappa != 1.0) reject("the step size is fixed to 1/t (kappa = 1)");
        r.kappa = 1.0;
    } else {
        r.kappa = c.kappa.value_or(0.5);
    }

    const bool implied_boost = m == Method::g_oem_pp || m == Method::v_oem_pp || m == Method::splda;
    if (c.boost && *c.boost != implied_boost) {
        if (*c.boost && (m == Method::g_oem || m == Method::v_oem))
            reject("use the ++ method name to enable boosting");
        reject(implied_boost ? "this method always boosts" : "boosting is not defined for this method");
    }
    r.boost = implied_boost;

    r.alpha_mode = c.alpha_mode.value_or(default_alpha_mode(m));
    const AlphaMode mode = parse_alpha_mode(r.alpha_mode);
    if (mode == AlphaMode::gamma_prior) reject("the gamma-prior alpha update is not specified");
    if ((m == Method::sgs || m == Method::vargibbs) && mode != AlphaMode::frozen) reject("alpha must stay frozen");
    if (is_hdp(m)) {
        if (c.alpha_mode) reject("alpha_mode does not apply to the HDP");
        if (c.averaging) reject("iterate averaging is not defined for a growing topic set");
    } else if (c.k < 1) {
        reject("K must be >= 1");
    }

    if (!(c.init_alpha > 0.0)) reject("init_alpha must be positive");
    if (c.minibatch_size < 1) reject("minibatch size must be >= 1");
    if (c.local_iters < 1) reject("local iterations must be >= 1");
    if (uses_gibbs(m) && m != Method::sgs && c.local_iters < 4)
        reject("Gibbs averaging window needs at least 4 local iterations");
    if (c.passes < 1) reject("passes must be >= 1");
    if (c.seeds.empty()) reject("no seeds");
    if (c.eval_every < 0) reject("eval_every must be >= 0");
    if (c.particles < 1) reject("particles must be >= 1");
    if (c.n_test < 1) reject("n_test must be >= 1");
    if (c.corpus.empty() == c.synthetic.empty()) reject("exactly one of corpus or synthetic must be given");
    if (!(c.topic_prior > 0.0)) reject("topic prior must be positive");
    (void)parse_lambda_order(c.lambda_order);
    if (c.sgs_alpha && !(*c.sgs_alpha > 0.0)) reject("sgs_alpha must be positive");
    if (!(c.hdp_b > 0.0) || !(c.hdp_alpha > 0.0)) reject("HDP concentrations must be positive");
    if (c.hdp_t_max < 2) reject("hdp_t_max must be >= 2");
    if (c.elbo_sweeps < 1) reject("elbo_sweeps must be >= 1");
    if (c.threads < 1) reject("threads must be >= 1");
    return r;
}

Corpus load_corpus(const ExperimentConfig& c) {
    if (!c.synthetic.empty()) return generate_synthetic(parse_synthetic_spec(c.synthetic), c.corpus_seed).corpus;
    return load_uci_bag_of_words(c.corpus, c.vocab);
}

Quantiles quantiles(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("quantiles: empty sample");
    std::sort(values.begin(), values.end());
    auto at = [&](double q) {
        const double pos = q * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, values.size() - 1);
        return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
    };
    return {at(0.5), at(0.3), at(0.7)};
}

namespace {

double mean_length(std::span<const Document> docs) {
    double total = 0.0;
    for (const auto& d : docs) total += d.length();
    return docs.empty() ? 1.0 : total / static_cast<double>(docs.size());
}

class TraceWriter {
public:
    TraceWriter(const std::filesystem::path& path, bool elbo, bool wallclock)
        : elbo_(elbo), wallclock_(wallclock), start_(std::chrono::steady_clock::now()) {
        if (path.empty()) return;
        out_.open(path);
        if (!out_) throw std::runtime_error("cannot write " + path.string());
        out_ << "iteration,docs_seen,wallclock_s,test_log_perplexity" << (elbo ? ",test_elbo" : "") << '\n';
        out_.flush();
    }

    void row(std::int64_t iteration, std::int64_t docs_seen, double perplexity, std::optional<double> elbo) {
        if (!out_.is_open()) return;
        const double seconds =
            wallclock_ ? std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count() : 0.0;
        out_ << iteration << ',' << docs_seen << ',' << std::fixed << std::setprecision(3) << seconds
             << std::defaultfloat << std::setprecision(12) << ',' << perplexity;
        if (elbo_) out_ << ',' << elbo.value_or(std::nan(""));
        out_ << '\n';
        out_.flush();
    }

private:
    bool elbo_;
    bool wallclock_;
    std::chrono::steady_clock::time_point start_;
    std::ofstream out_;
};

struct Evaluator {
    std::span<const Document> test;
    int particles;
    std::uint64_t seed;
    int threads;
    bool elbo;
    int elbo_sweeps;

    double perplexity_of(const ModelParams& p) const {
        return perplexity(test, p, particles, seed, threads).mean_log_perplexity;
    }
    std::optional<double> elbo_of(const ModelParams& p) const {
        if (!elbo) return std::nullopt;
        return elbo_corpus(test, p, elbo_sweeps);
    }
};

// Evaluation cadence shared by every method: row 0 for the starting point, a
// row every `eval_every` minibatches and always a final row.
class Cadence {
public:
    Cadence(int eval_every, TraceWriter& writer, const Evaluator& eval)
        : every_(eval_every), writer_(writer), eval_(eval) {}

    void initial(const ModelParams& point, const ModelParams& elbo_params) {
        initial_ = eval_.perplexity_of(point);
        if (every_ > 0) writer_.row(0, 0, initial_, eval_.elbo_of(elbo_params));
    }

    void checkpoint(std::int64_t i, std::int64_t docs, const ModelParams& point, const ModelParams& elbo_params) {
        last_i_ = i;
        last_docs_ = docs;
        if (every_ > 0 && i % every_ == 0) {
            final_ = eval_.perplexity_of(point);
            final_elbo_ = eval_.elbo_of(elbo_params);
            writer_.row(i, docs, final_, final_elbo_);
            written_ = i;
        }
    }

    void finish(const ModelParams& point, const ModelParams& elbo_params) {
        if (written_ == last_i_ && last_i_ > 0) return;
        final_ = eval_.perplexity_of(point);
        final_elbo_ = eval_.elbo_of(elbo_params);
        writer_.row(last_i_, last_docs_, final_, final_elbo_);
    }

    [[nodiscard]] double initial_value() const { return initial_; }
    [[nodiscard]] double final_value() const { return final_; }
    [[nodiscard]] std::optional<double> final_elbo() const { return final_elbo_; }

private:
    int every_;
    TraceWriter& writer_;
    const Evaluator& eval_;
    double initial_ = 0.0;
    double final_ = 0.0;
    std::optional<double> final_elbo_;
    std::int64_t last_i_ = 0;
    std::int64_t last_docs_ = 0;
    std::int64_t written_ = -1;
};

double resolve_sgs_alpha(const ResolvedConfig& rc, std::uint64_t seed, std::span<const Document> train, int vocab) {
    const auto& c = rc.raw;
    if (c.sgs_alpha) return *c.sgs_alpha;
    if (!c.sgs_alpha_from.empty()) {
        const auto path = std::filesystem::path(c.sgs_alpha_from) / ("model_seed" + std::to_string(seed) + ".txt");
        const ModelParams p = read_model(path);
        return p.alpha.mean();
    }
    // No reference run: train G-OEM with the same settings first.
    LdaModel model(AlphaMode::fixed_point, {}, mean_length(train));
    // SGS itself usually runs one sweep, too few for the G-OEM averaging window
    const int sweeps = c.local_iters >= 4 ? c.local_iters : ExperimentConfig{}.local_iters;
    GibbsBackend backend({sweeps, false}, derive_seed({seed, 0x10ca1}), c.threads);
    OnlineEmOptions options;
    options.schedule.kappa = 0.5;
    options.minibatch_size = c.minibatch_size;
    options.passes = c.passes;
    const auto trace = run_online_em(train, model, backend, random_params(c.k, vocab, seed, c.init_alpha), options);
    return trace.last.alpha.mean();
}

SeedResult run_seed(const ResolvedConfig& rc, const Corpus& corpus, std::uint64_t seed) {
    const auto& c = rc.raw;
    if (c.n_test >= corpus.size()) throw std::invalid_argument("n_test must be smaller than the corpus");
    const auto [train_corpus, test_corpus] = split(corpus, c.n_test, seed);
    const std::span<const Document> train(train_corpus.documents);
    const int vocab = corpus.vocab_size();
    const double length = mean_length(train);

    const std::filesystem::path dir = c.out_dir;
    const auto trace_path = dir.empty() ? std::filesystem::path{} : dir / ("trace_seed" + std::to_string(seed) + ".csv");
    TraceWriter writer(trace_path, c.track_elbo, c.record_wallclock);
    const Evaluator eval{test_corpus.documents, c.particles, derive_seed({seed, 0xe7a1}), c.threads, c.track_elbo,
                         c.elbo_sweeps};
    Cadence cadence(c.eval_every, writer, eval);

    SeedResult result;
    result.seed = seed;
    const std::uint64_t local_seed = derive_seed({seed, 0x10ca1});
    OnlineEmOptions options;
    options.schedule.kappa = rc.kappa;
    options.minibatch_size = c.minibatch_size;
    options.boost = rc.boost;
    options.passes = c.passes;

    auto write_lda = [&](const ModelParams& p) {
        if (!dir.empty()) write_model(p, dir / ("model_seed" + std::to_string(seed) + ".txt"));
        result.num_topics = p.num_topics();
        result.mean_alpha = p.alpha.mean();
    };

    switch (rc.method) {
        case Method::g_oem:
        case Method::g_oem_pp:
        case Method::v_oem:
        case Method::v_oem_pp: {
            const ModelParams init = random_params(c.k, vocab, seed, c.init_alpha);
            cadence.initial(init, init);
            LdaModel model(parse_alpha_mode(rc.alpha_mode), {}, length);
            auto on_cp = [&](const Checkpoint<ModelParams>& cp) {
                const auto& p = c.averaging ? cp.trace.running_mean : cp.trace.last;
                cadence.checkpoint(cp.minibatch, cp.docs_seen, p, p);
            };
            AveragedTrace<ModelParams> trace;
            if (rc.method == Method::g_oem || rc.method == Method::g_oem_pp) {
                GibbsBackend backend({c.local_iters, false}, local_seed, c.threads);
                trace = run_online_em(train, model, backend, init, options, on_cp);
            } else {
                VariationalBackend backend({c.local_iters}, local_seed, c.threads);
                trace = run_online_em(train, model, backend, init, options, on_cp);
            }
            const auto& final = c.averaging ? trace.running_mean : trace.last;
            cadence.finish(final, final);
            write_lda(final);
            break;
        }
        case Method::olda:
        case Method::svb:
        case Method::splda:
        case Method::sgs:
        case Method::vargibbs: {
            const auto variant = rc.method == Method::olda    ? BayesVariant::olda
                                 : rc.method == Method::svb   ? BayesVariant::svb
                                 : rc.method == Method::splda ? BayesVariant::splda
                                 : rc.method == Method::sgs   ? BayesVariant::sgs
                                                              : BayesVariant::vargibbs;
            VariantConfig vc;
            vc.num_topics = c.k;
            vc.kappa = rc.kappa;
            vc.minibatch_size = c.minibatch_size;
            vc.local_iters = c.local_iters;
            vc.b = c.topic_prior;
            vc.order = parse_lambda_order(c.lambda_order);
            vc.averaging = c.averaging;
            vc.seed = seed;
            vc.alpha_mode = parse_alpha_mode(rc.alpha_mode);
            vc.init_alpha = c.init_alpha;
            vc.threads = c.threads;
            if (rc.method == Method::sgs) vc.fixed_alpha = resolve_sgs_alpha(rc, seed, train, vocab);
            if (rc.method == Method::vargibbs && c.sgs_alpha) vc.fixed_alpha = c.sgs_alpha;

            ModelParams init = random_params(c.k, vocab, seed, c.init_alpha);
            if (vc.fixed_alpha && (rc.method == Method::sgs || rc.method == Method::vargibbs))
                init.alpha.setConstant(*vc.fixed_alpha);
            if (is_bayesian(rc.method)) {
                BayesLdaModel model(vc.b, static_cast<double>(train.size()), AlphaMode::frozen, {}, vc.order);
                const BayesParams start = model.initial_params(init, length);
                cadence.initial(start.point(), start.surrogate);
            } else {
                cadence.initial(init, init);
            }
            const auto out = run_variant(variant, train, vocab, vc, [&](const VariantCheckpoint& cp) {
                cadence.checkpoint(cp.minibatch, cp.docs_seen, cp.point, cp.surrogate ? *cp.surrogate : cp.point);
            });
            cadence.finish(out.point, out.bayes ? out.bayes->surrogate : out.point);
            write_lda(out.point);
            break;
        }
        case Method::hdp_g_oem:
        case Method::hdp_vargibbs: {
            HdpOptions ho;
            ho.b = c.hdp_b;
            ho.alpha_conc = c.hdp_alpha;
            ho.t_max = c.hdp_t_max;
            ho.sweeps = c.local_iters;
            ho.min_new_topic_tokens = c.hdp_min_new_tokens;
            ho.max_new_topics_per_minibatch = c.hdp_max_new_per_minibatch;
            ho.prune_mass = c.hdp_prune_mass;
            ho.eta = c.topic_prior;
            const HdpParams start = hdp_initial_params(vocab, ho, seed);
            HdpParams final;
            if (rc.method == Method::hdp_g_oem) {
                const ModelParams init = hdp_as_lda(start);
                cadence.initial(init, init);
                HdpModel model(ho, length);
                HdpGibbsBackend backend(ho, local_seed, c.threads);
                auto trace = run_online_em(train, model, backend, start, options, [&](const auto& cp) {
                    const ModelParams p = hdp_as_lda(cp.trace.last);
                    cadence.checkpoint(cp.minibatch, cp.docs_seen, p, p);
                });
                final = trace.last;
            } else {
                HdpBayesModel model(ho, static_cast<double>(train.size()));
                const HdpBayesParams init = model.initial_params(start, length);
                const ModelParams init_point = hdp_as_lda(init.point());
                cadence.initial(init_point, init_point);
                HdpVarGibbsBackend backend(ho, static_cast<double>(train.size()), local_seed, c.threads);
                auto trace = run_online_em(train, model, backend, init, options, [&](const auto& cp) {
                    const ModelParams p = hdp_as_lda(cp.trace.last.point());
                    cadence.checkpoint(cp.minibatch, cp.docs_seen, p, p);
                });
                final = trace.last.point();
            }
            const ModelParams point = hdp_as_lda(final);
            cadence.finish(point, point);
            if (!dir.empty()) write_hdp_model(final, dir / ("model_seed" + std::to_string(seed) + ".txt"));
            result.num_topics = final.num_topics();
            result.mean_alpha = point.alpha.mean();
            break;
        }
    }
    result.initial_log_perplexity = cadence.initial_value();
    result.final_log_perplexity = cadence.final_value();
    result.final_elbo = cadence.final_elbo();
    return result;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
    validate(config);
    return run_experiment(config, load_corpus(config));
}

ExperimentResult run_experiment(const ExperimentConfig& config, const Corpus& corpus) {
    const ResolvedConfig rc = validate(config);
    if (!config.out_dir.empty()) {
        std::filesystem::create_directories(config.out_dir);
        std::ofstream(std::filesystem::path(config.out_dir) / "config.json") << config_to_json(config).dump(2) << '\n';
    }
    ExperimentResult result;
    result.method = std::string(to_string(rc.method));
    result.k = is_hdp(rc.method) ? 0 : config.k;
    result.kappa = rc.kappa;
    for (auto seed : config.seeds) {
        spdlog::info("{} K={} kappa={} seed={}", result.method, result.k, result.kappa, seed);
        result.seeds.push_back(run_seed(rc, corpus, seed));
    }
    if (!config.out_dir.empty()) write_summary(result, std::filesystem::path(config.out_dir) / "summary.csv");
    return result;
}

namespace {

void write_summary_rows(std::ostream& out, const std::string& method, int k, double kappa,
                        const std::vector<SeedResult>& seeds) {
    out << std::setprecision(12);
    std::vector<double> finals;
    for (const auto& s : seeds) {
        out << method << ',' << k << ',' << kappa << ',' << s.seed << ',' << s.initial_log_perplexity << ','
            << s.final_log_perplexity << ',';
        if (s.final_elbo) out << *s.final_elbo;
        out << ',' << s.num_topics << ',' << s.mean_alpha << '\n';
        finals.push_back(s.final_log_perplexity);
    }
    if (finals.empty()) return;
    const auto q = quantiles(finals);
    out << method << ',' << k << ',' << kappa << ",median,," << q.median << ",,,\n";
    out << method << ',' << k << ',' << kappa << ",decile3,," << q.decile3 << ",,,\n";
    out << method << ',' << k << ',' << kappa << ",decile7,," << q.decile7 << ",,,\n";
}

constexpr const char* kSummaryHeader =
    "method,k,kappa,seed,initial_log_perplexity,final_log_perplexity,final_elbo,num_topics,mean_alpha\n";

}  // namespace

void write_summary(const ExperimentResult& result, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << kSummaryHeader;
    write_summary_rows(out, result.method, result.k, result.kappa, result.seeds);
}

void merge_result(SweepSummary& summary, const ExperimentResult& result) {
    auto& slot = summary.results[{result.method, result.k, result.kappa}];
    for (const auto& s : result.seeds) slot[s.seed] = s;
}

SweepSummary sweep(const std::vector<ExperimentConfig>& configs, int parallelism, const std::filesystem::path& out_dir) {
    SweepSummary summary;
    std::vector<std::optional<ExperimentResult>> results(configs.size());
    std::vector<std::string> errors(configs.size());
    for_each_index(configs.size(), parallelism, [&](std::size_t i) {
        ExperimentConfig c = configs[i];
        if (!out_dir.empty()) c.out_dir = (out_dir / std::to_string(i)).string();
        try {
            results[i] = run_experiment(c);
        } catch (const std::exception& e) {
            errors[i] = "config " + std::to_string(i) + " (" + c.method + "): " + e.what();
        }
    });
    for (std::size_t i = 0; i < configs.size(); ++i) {
        if (results[i]) merge_result(summary, *results[i]);
        if (!errors[i].empty()) {
            spdlog::warn("{}", errors[i]);
            summary.failures.push_back(errors[i]);
        }
    }
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        write_sweep_summary(summary, out_dir / "sweep_summary.csv");
    }
    return summary;
}

void write_sweep_summary(const SweepSummary& summary, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << kSummaryHeader;
    for (const auto& [key, seeds] : summary.results) {
        std::vector<SeedResult> rows;
        for (const auto& [seed, r] : seeds) rows.push_back(r);
        write_summary_rows(out, std::get<0>(key), std::get<1>(key), std::get<2>(key), rows);
    }
    for (const auto& f : summary.failures) out << "# failed: " << f << '\n';
}

}  // namespace oem
