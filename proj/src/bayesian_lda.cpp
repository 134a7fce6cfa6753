#include "oem/bayesian_lda.hpp"

#include "oem/gibbs_lda.hpp"
#include "oem/variational_lda.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace oem {

Matrix expected_log_beta(const Matrix& lambda) {
    if ((lambda.array() <= 0.0).any()) throw std::invalid_argument("expected_log_beta: lambda must be positive");
    Matrix out(lambda.rows(), lambda.cols());
    for (Eigen::Index k = 0; k < lambda.rows(); ++k) {
        const double psi_total = digamma(lambda.row(k).sum());
        for (Eigen::Index v = 0; v < lambda.cols(); ++v) out(k, v) = std::exp(digamma(lambda(k, v)) - psi_total);
    }
    return out;
}

Matrix expected_log_beta(const BayesGlobalState& state) { return expected_log_beta(state.lambda); }

Matrix posterior_mean_beta(const Matrix& lambda) {
    Matrix out = lambda;
    for (Eigen::Index k = 0; k < out.rows(); ++k) out.row(k) /= out.row(k).sum();
    return out;
}

LambdaOrder parse_lambda_order(std::string_view text) {
    if (text == "standard") return LambdaOrder::standard;
    if (text == "paper-literal") return LambdaOrder::paper_literal;
    throw std::invalid_argument("unknown lambda order: " + std::string(text));
}

std::string_view to_string(LambdaOrder order) {
    return order == LambdaOrder::standard ? "standard" : "paper-literal";
}

void lambda_update(BayesGlobalState& state, const Matrix& expected_s1, double rho, LambdaOrder order) {
    if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("lambda_update: rho must lie in (0, 1]");
    if (expected_s1.rows() != state.lambda.rows() || expected_s1.cols() != state.lambda.cols())
        throw std::invalid_argument("lambda_update: shape mismatch");
    const Matrix hat = (state.corpus_size * expected_s1).array() + state.b;
    const double w_new = order == LambdaOrder::standard ? rho : 1.0 - rho;
    if (w_new == 1.0)
        state.lambda = hat;
    else
        state.lambda = (1.0 - w_new) * state.lambda + w_new * hat;
}

BayesParams make_bayes_params(Matrix lambda, Vector alpha) {
    BayesParams p;
    p.surrogate = ModelParams{expected_log_beta(lambda), alpha};
    p.lambda = std::move(lambda);
    p.alpha = std::move(alpha);
    return p;
}

BayesStats BayesLdaModel::initial_stats(const Params& p) const {
    return {p.lambda, digamma(p.alpha).array() - digamma(p.alpha.sum())};
}

BayesStats BayesLdaModel::blend(const Stats& prev, const Estimate& hat, double rho) const {
    BayesGlobalState state{prev.lambda, b_, corpus_size_};
    lambda_update(state, hat.s1, rho, order_);
    return {std::move(state.lambda), (1.0 - rho) * prev.s2 + rho * hat.s2};
}

BayesParams BayesLdaModel::m_step(const Stats& s, const Params& prev) const {
    Vector alpha;
    switch (mode_) {
        case AlphaMode::fixed_point: alpha = alpha_fixed_point(s.s2, prev.alpha, options_.tol, options_.max_iter); break;
        case AlphaMode::gradient:
            alpha = alpha_gradient(s.s2, prev.alpha, options_.learning_rate, options_.gradient_iters, options_.floor);
            break;
        case AlphaMode::frozen: alpha = prev.alpha; break;
        case AlphaMode::gamma_prior:
            throw std::logic_error("gamma-prior alpha update is not specified; use fixed_point, gradient or frozen");
    }
    return make_bayes_params(s.lambda, std::move(alpha));
}

void BayesLdaModel::update_mean(Params& mean, const Params& x, std::int64_t n) const {
    const double w = 1.0 / static_cast<double>(n);
    Matrix lambda = mean.lambda + w * (x.lambda - mean.lambda);
    Vector alpha = mean.alpha + w * (x.alpha - mean.alpha);
    mean = make_bayes_params(std::move(lambda), std::move(alpha));
}

BayesParams BayesLdaModel::initial_params(const ModelParams& start, double mean_length) const {
    Matrix lambda = (start.beta * (corpus_size_ * mean_length / start.num_topics())).array() + b_;
    return make_bayes_params(std::move(lambda), start.alpha);
}

BayesVariant parse_bayes_variant(std::string_view text) {
    if (text == "olda") return BayesVariant::olda;
    if (text == "svb") return BayesVariant::svb;
    if (text == "splda") return BayesVariant::splda;
    if (text == "sgs") return BayesVariant::sgs;
    if (text == "vargibbs") return BayesVariant::vargibbs;
    throw std::invalid_argument("unknown variant: " + std::string(text));
}

std::string_view to_string(BayesVariant variant) {
    switch (variant) {
        case BayesVariant::olda: return "olda";
        case BayesVariant::svb: return "svb";
        case BayesVariant::splda: return "splda";
        case BayesVariant::sgs: return "sgs";
        case BayesVariant::vargibbs: return "vargibbs";
    }
    return "unknown";
}

namespace {

double mean_length(std::span<const Document> docs) {
    if (docs.empty()) return 1.0;
    double total = 0.0;
    for (const auto& d : docs) total += d.length();
    return total / static_cast<double>(docs.size());
}

template <class Model, class Backend>
VariantResult run_lda_path(std::span<const Document> stream, const Model& model, Backend& backend,
                           ModelParams init, const OnlineEmOptions& options, bool averaging,
                           const std::function<void(const VariantCheckpoint&)>& on_checkpoint) {
    auto trace = run_online_em(stream, model, backend, std::move(init), options, [&](const auto& cp) {
        if (on_checkpoint)
            on_checkpoint({cp.minibatch, cp.docs_seen, averaging ? cp.trace.running_mean : cp.trace.last, nullptr});
    });
    return {averaging ? trace.running_mean : trace.last, std::nullopt};
}

template <class Backend>
VariantResult run_bayes_path(std::span<const Document> stream, const BayesLdaModel& model, Backend& backend,
                             BayesParams init, const OnlineEmOptions& options, bool averaging,
                             const std::function<void(const VariantCheckpoint&)>& on_checkpoint) {
    auto trace = run_online_em(stream, model, backend, std::move(init), options, [&](const auto& cp) {
        if (!on_checkpoint) return;
        const BayesParams& p = averaging ? cp.trace.running_mean : cp.trace.last;
        const ModelParams point = p.point();
        on_checkpoint({cp.minibatch, cp.docs_seen, point, &p.surrogate});
    });
    BayesParams final = averaging ? trace.running_mean : trace.last;
    ModelParams point = final.point();
    return {std::move(point), std::move(final)};
}

}  // namespace

VariantResult run_variant(BayesVariant variant, std::span<const Document> stream, int vocab_size,
                          const VariantConfig& config,
                          const std::function<void(const VariantCheckpoint&)>& on_checkpoint) {
    const ModelParams start = random_params(config.num_topics, vocab_size, config.seed, config.init_alpha);
    const double length = mean_length(stream);
    const std::uint64_t local_seed = derive_seed({config.seed, 0x10ca1});

    OnlineEmOptions options;
    options.minibatch_size = config.minibatch_size;
    options.schedule.kappa = variant == BayesVariant::olda || variant == BayesVariant::vargibbs ? config.kappa : 1.0;

    switch (variant) {
        case BayesVariant::splda: {
            options.boost = true;
            LdaModel model(config.alpha_mode.value_or(AlphaMode::fixed_point), config.alpha_options, length);
            VariationalBackend backend({config.local_iters}, local_seed, config.threads);
            return run_lda_path(stream, model, backend, start, options, config.averaging, on_checkpoint);
        }
        case BayesVariant::sgs: {
            if (!config.fixed_alpha) throw std::invalid_argument("sgs needs a constant alpha (mean alpha of a G-OEM run)");
            ModelParams init = start;
            init.alpha.setConstant(*config.fixed_alpha);
            LdaModel model(AlphaMode::frozen, config.alpha_options, length);
            GibbsBackend backend({config.local_iters, true}, local_seed, config.threads);
            return run_lda_path(stream, model, backend, std::move(init), options, config.averaging, on_checkpoint);
        }
        case BayesVariant::olda:
        case BayesVariant::svb:
        case BayesVariant::vargibbs: {
            const bool gibbs = variant == BayesVariant::vargibbs;
            const AlphaMode mode = config.alpha_mode.value_or(gibbs ? AlphaMode::frozen : AlphaMode::gradient);
            BayesLdaModel model(config.b, static_cast<double>(stream.size()), mode, config.alpha_options, config.order);
            ModelParams base = start;
            if (gibbs && config.fixed_alpha) base.alpha.setConstant(*config.fixed_alpha);
            BayesParams init = model.initial_params(base, length);
            if (gibbs) {
                GibbsBackend backend({config.local_iters, false}, local_seed, config.threads);
                return run_bayes_path(stream, model, backend, std::move(init), options, config.averaging, on_checkpoint);
            }
            VariationalBackend backend({config.local_iters}, local_seed, config.threads);
            return run_bayes_path(stream, model, backend, std::move(init), options, config.averaging, on_checkpoint);
        }
    }
    throw std::invalid_argument("unknown variant");
}

double elbo_corpus(std::span<const Document> docs, const ModelParams& params, int sweeps) {
    if (docs.empty()) throw std::invalid_argument("elbo_corpus: no documents");
    double total = 0.0;
    for (const auto& doc : docs) {
        const auto result = variational_estep(doc, params, sweeps);
        total += elbo_document(doc, result.state, params);
    }
    return total / static_cast<double>(docs.size());
}

}  // namespace oem
