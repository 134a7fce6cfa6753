#include "oem/variational_lda.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace oem {

VariationalState init_variational_state(const Document& doc, const ModelParams& params) {
    const int k_topics = params.num_topics();
    VariationalState state;
    state.gamma = params.alpha.array() + static_cast<double>(doc.length()) / k_topics;
    state.zeta = Matrix::Constant(doc.length(), k_topics, 1.0 / k_topics);
    return state;
}

void update_zeta(VariationalState& state, const Document& doc, const ModelParams& params) {
    const int k_topics = params.num_topics();
    if (state.gamma.size() != k_topics || state.zeta.rows() != doc.length())
        throw std::invalid_argument("update_zeta: state shape");
    const Vector psi_gamma = digamma(state.gamma);
    Vector logp(k_topics);
    for (int n = 0; n < doc.length(); ++n) {
        const int w = doc.word_ids[static_cast<std::size_t>(n)];
        if (w < 0 || w >= params.vocab_size()) throw std::invalid_argument("update_zeta: word id outside vocabulary");
        double max_log = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < k_topics; ++k) {
            logp[k] = std::log(params.beta(k, w)) + psi_gamma[k];
            max_log = std::max(max_log, logp[k]);
        }
        if (!std::isfinite(max_log)) throw std::runtime_error("update_zeta: topic column of a word is zero");
        double total = 0.0;
        for (int k = 0; k < k_topics; ++k) total += (logp[k] = std::exp(logp[k] - max_log));
        state.zeta.row(n) = (logp / total).transpose();
    }
}

void update_gamma(VariationalState& state, const Vector& alpha) {
    if (alpha.size() != state.zeta.cols()) throw std::invalid_argument("update_gamma: alpha size");
    state.gamma = alpha + state.zeta.colwise().sum().transpose();
}

double elbo_document(const Document& doc, const VariationalState& state, const ModelParams& params) {
    const int k_topics = params.num_topics();
    const Vector& gamma = state.gamma;
    const Vector& alpha = params.alpha;
    const Vector elog_theta = digamma(gamma).array() - digamma(gamma.sum());

    double value = std::lgamma(alpha.sum()) - std::lgamma(gamma.sum());
    for (int k = 0; k < k_topics; ++k)
        value += std::lgamma(gamma[k]) - std::lgamma(alpha[k]) + (alpha[k] - gamma[k]) * elog_theta[k];
    for (int n = 0; n < doc.length(); ++n) {
        const int w = doc.word_ids[static_cast<std::size_t>(n)];
        for (int k = 0; k < k_topics; ++k) {
            const double q = state.zeta(n, k);
            if (q <= 0.0) continue;
            value += q * (elog_theta[k] + std::log(params.beta(k, w)) - std::log(q));
        }
    }
    if (!std::isfinite(value)) throw std::runtime_error("elbo_document: non-finite value");
    return value;
}

LocalEstimate variational_estimate(const VariationalState& state) {
    return {state.zeta, digamma(state.gamma).array() - digamma(state.gamma.sum())};
}

VariationalResult variational_estep(const Document& doc, const ModelParams& params, int sweeps) {
    if (sweeps < 1) throw std::invalid_argument("variational_estep: sweeps must be >= 1");
    VariationalState state = init_variational_state(doc, params);
    for (int t = 0; t < sweeps; ++t) {
        update_zeta(state, doc, params);
        update_gamma(state, params.alpha);
    }
    if (!std::isfinite(elbo_document(doc, state, params)))
        throw std::runtime_error("variational_estep: non-finite ELBO");
    return {variational_estimate(state), std::move(state)};
}

VariationalChain::VariationalChain(const Document& doc, std::uint64_t, const ModelParams& params,
                                   const VariationalOptions& options)
    : doc_(&doc), state_(init_variational_state(doc, params)) {
    if (options.sweeps < 1) throw std::invalid_argument("variational: sweeps must be >= 1");
    if (doc.empty()) throw std::invalid_argument("variational: empty document");
}

void VariationalChain::sweep(const ModelParams& params) {
    update_zeta(state_, *doc_, params);
    update_gamma(state_, params.alpha);
}

}  // namespace oem
