#include "oem/gibbs_lda.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace oem {

namespace {

void check_document(const Document& doc, const ModelParams& params) {
    if (doc.empty()) throw std::invalid_argument("gibbs: empty document");
    for (auto w : doc.word_ids)
        if (w < 0 || w >= params.vocab_size()) throw std::invalid_argument("gibbs: word id outside vocabulary");
}

// Unnormalized conditional weights into `out`; returns their sum.
double conditional_weights(const LatentSampleState& state, int n, int word, const ModelParams& params, double* out) {
    const int k_topics = params.num_topics();
    const double* beta_col = params.beta.col(word).data();
    const int own = state.z[static_cast<std::size_t>(n)];
    double total = 0.0;
    for (int k = 0; k < k_topics; ++k) {
        const double count = state.counts[static_cast<std::size_t>(k)] - (k == own ? 1 : 0);
        out[k] = beta_col[k] * (count + params.alpha[k]);
        total += out[k];
    }
    if (!(total > 0.0) || !std::isfinite(total))
        throw std::runtime_error("gibbs: conditional has no mass (topic column of word " + std::to_string(word) +
                                 " is zero)");
    return total;
}

Vector count_digamma_stats(const std::vector<int>& counts, const Vector& alpha, int length) {
    Vector s2(alpha.size());
    const double psi_total = digamma(alpha.sum() + length);
    for (Eigen::Index k = 0; k < alpha.size(); ++k) s2[k] = digamma(alpha[k] + counts[static_cast<std::size_t>(k)]) - psi_total;
    return s2;
}

}  // namespace

LatentSampleState init_latent_state(const Document& doc, const ModelParams& params, std::uint64_t seed) {
    check_document(doc, params);
    LatentSampleState state;
    state.rng.seed(seed);
    state.counts.assign(static_cast<std::size_t>(params.num_topics()), 0);
    state.z.resize(doc.word_ids.size());
    for (std::size_t n = 0; n < doc.word_ids.size(); ++n) {
        const auto col = params.beta.col(doc.word_ids[n]);
        const double total = col.sum();
        if (!(total > 0.0)) throw std::runtime_error("gibbs: topic column of a word is zero");
        const int k = sample_index(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())), total,
                                   state.rng);
        state.z[n] = k;
        ++state.counts[static_cast<std::size_t>(k)];
    }
    return state;
}

Vector gibbs_conditional(const LatentSampleState& state, int n, const Document& doc, const ModelParams& params) {
    if (n < 0 || n >= doc.length() || static_cast<int>(state.z.size()) != doc.length())
        throw std::invalid_argument("gibbs_conditional: position out of range");
    Vector p(params.num_topics());
    const double total = conditional_weights(state, n, doc.word_ids[static_cast<std::size_t>(n)], params, p.data());
    return p / total;
}

void gibbs_sweep(LatentSampleState& state, const Document& doc, const ModelParams& params) {
    const int length = doc.length();
    std::vector<int> order(static_cast<std::size_t>(length));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), state.rng);
    std::vector<double> weights(static_cast<std::size_t>(params.num_topics()));
    for (int n : order) {
        const double total = conditional_weights(state, n, doc.word_ids[static_cast<std::size_t>(n)], params, weights.data());
        const int k = sample_index(weights, total, state.rng);
        auto& z = state.z[static_cast<std::size_t>(n)];
        --state.counts[static_cast<std::size_t>(z)];
        z = k;
        ++state.counts[static_cast<std::size_t>(k)];
    }
}

int window_start(int sweeps) { return (3 * sweeps + 3) / 4; }

GibbsChain::GibbsChain(const Document& doc, std::uint64_t seed, const ModelParams& params, const GibbsOptions& options)
    : doc_(&doc), options_(options), state_(init_latent_state(doc, params, seed)), alpha_(params.alpha) {
    if (options.sweeps < 1 || (!options.last_sample_only && options.sweeps < 4))
        throw std::invalid_argument("gibbs: need at least 4 sweeps for a nonempty averaging window");
    resp_sum_ = Matrix::Zero(doc.length(), params.num_topics());
    s2_sum_ = Vector::Zero(params.num_topics());
}

void GibbsChain::sweep(const ModelParams& params) {
    gibbs_sweep(state_, *doc_, params);
    ++done_;
    alpha_ = params.alpha;
    if (options_.last_sample_only) return;
    latest_ = snapshot(params);
    if (done_ >= window_start(options_.sweeps)) {
        resp_sum_ += latest_.responsibilities;
        s2_sum_ += latest_.s2;
        ++window_;
    }
}

LocalEstimate GibbsChain::snapshot(const ModelParams& params) const {
    const int length = doc_->length();
    LocalEstimate est;
    est.responsibilities.resize(length, params.num_topics());
    Vector p(params.num_topics());
    for (int n = 0; n < length; ++n) {
        const double total = conditional_weights(state_, n, doc_->word_ids[static_cast<std::size_t>(n)], params, p.data());
        est.responsibilities.row(n) = (p / total).transpose();
    }
    est.s2 = count_digamma_stats(state_.counts, params.alpha, length);
    return est;
}

LocalEstimate GibbsChain::indicator_estimate() const {
    LocalEstimate est;
    est.responsibilities = Matrix::Zero(doc_->length(), alpha_.size());
    for (int n = 0; n < doc_->length(); ++n) est.responsibilities(n, state_.z[static_cast<std::size_t>(n)]) = 1.0;
    est.s2 = count_digamma_stats(state_.counts, alpha_, doc_->length());
    return est;
}

LocalEstimate GibbsChain::estimate() const {
    if (options_.last_sample_only) return indicator_estimate();
    if (window_ == 0) {
        if (done_ == 0) throw std::logic_error("gibbs: estimate requested before the first sweep");
        return latest_;
    }
    return {resp_sum_ / window_, s2_sum_ / window_};
}

LocalEstimate GibbsChain::final_estimate() const { return estimate(); }

LocalEstimate gibbs_estep(const Document& doc, const ModelParams& params, int sweeps, std::uint64_t seed,
                          bool last_sample_only) {
    GibbsChain chain(doc, seed, params, GibbsOptions{sweeps, last_sample_only});
    for (int t = 0; t < sweeps; ++t) chain.sweep(params);
    return chain.final_estimate();
}

ExactPosterior enumerate_posterior(const Document& doc, const ModelParams& params) {
    check_document(doc, params);
    const int k_topics = params.num_topics();
    const int length = doc.length();
    const double log_states = length * std::log(static_cast<double>(k_topics));
    if (log_states > 20.0 * std::log(2.0) + 1e-9)
        throw std::invalid_argument("enumerate_posterior: more than 2^20 assignments");
    std::size_t n_states = 1;
    for (int n = 0; n < length; ++n) n_states *= static_cast<std::size_t>(k_topics);

    const double alpha_total = params.alpha.sum();
    const double log_prior_norm = std::lgamma(alpha_total) - std::lgamma(alpha_total + length);
    Vector lgamma_alpha(k_topics);
    for (int k = 0; k < k_topics; ++k) lgamma_alpha[k] = std::lgamma(params.alpha[k]);

    std::vector<double> log_w(n_states);
    std::vector<int> z(static_cast<std::size_t>(length), 0);
    std::vector<int> counts(static_cast<std::size_t>(k_topics));
    for (std::size_t s = 0; s < n_states; ++s) {
        std::size_t code = s;
        std::fill(counts.begin(), counts.end(), 0);
        double lw = log_prior_norm;
        for (int n = 0; n < length; ++n) {
            z[static_cast<std::size_t>(n)] = static_cast<int>(code % static_cast<std::size_t>(k_topics));
            code /= static_cast<std::size_t>(k_topics);
            ++counts[static_cast<std::size_t>(z[static_cast<std::size_t>(n)])];
            lw += std::log(params.beta(z[static_cast<std::size_t>(n)], doc.word_ids[static_cast<std::size_t>(n)]));
        }
        for (int k = 0; k < k_topics; ++k)
            lw += std::lgamma(params.alpha[k] + counts[static_cast<std::size_t>(k)]) - lgamma_alpha[k];
        log_w[s] = lw;
    }
    const double max_lw = *std::max_element(log_w.begin(), log_w.end());
    if (!std::isfinite(max_lw)) throw std::runtime_error("enumerate_posterior: document has zero likelihood");

    ExactPosterior out;
    out.estimate.responsibilities = Matrix::Zero(length, k_topics);
    out.estimate.s2 = Vector::Zero(k_topics);
    const double psi_total = digamma(alpha_total + length);
    double total = 0.0;
    for (std::size_t s = 0; s < n_states; ++s) {
        const double w = std::exp(log_w[s] - max_lw);
        if (w == 0.0) continue;
        total += w;
        std::size_t code = s;
        std::fill(counts.begin(), counts.end(), 0);
        for (int n = 0; n < length; ++n) {
            const int k = static_cast<int>(code % static_cast<std::size_t>(k_topics));
            code /= static_cast<std::size_t>(k_topics);
            ++counts[static_cast<std::size_t>(k)];
            out.estimate.responsibilities(n, k) += w;
        }
        for (int k = 0; k < k_topics; ++k)
            out.estimate.s2[k] += w * (digamma(params.alpha[k] + counts[static_cast<std::size_t>(k)]) - psi_total);
    }
    out.estimate.responsibilities /= total;
    out.estimate.s2 /= total;
    out.log_evidence = max_lw + std::log(total);
    return out;
}

}  // namespace oem
