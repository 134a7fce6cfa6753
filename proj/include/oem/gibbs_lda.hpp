#pragma once

// Collapsed Gibbs E-step for one document. theta is integrated out, so the
// chain runs over topic assignments only:
//
//   p(z_n = k | Z_{-n}, X) ∝ beta_{k, x_n} (N_{-n,k} + alpha_k) / ((N - 1) + sum_j alpha_j)
//
// Marginals are averaged over the last quarter of the sweeps, using the
// conditional vectors rather than the drawn indicators.

#include "oem/common.hpp"
#include "oem/lda_family.hpp"
#include "oem/local_estep.hpp"

#include <cstdint>
#include <vector>

namespace oem {

struct LatentSampleState {
    std::vector<int> z;
    std::vector<int> counts;  // N_k, consistent with z
    Rng rng;
};

/// z_n ~ Mult(normalized beta column of x_n); alpha plays no part.
LatentSampleState init_latent_state(const Document& doc, const ModelParams& params, std::uint64_t seed);

/// Normalized conditional of z_n given the other assignments.
Vector gibbs_conditional(const LatentSampleState& state, int n, const Document& doc, const ModelParams& params);

/// One sweep in a fresh random order.
void gibbs_sweep(LatentSampleState& state, const Document& doc, const ModelParams& params);

/// First sweep of the averaging window, ceil(3P/4).
int window_start(int sweeps);

struct GibbsOptions {
    int sweeps = 20;
    /// Use only the final sample (indicators) instead of the windowed
    /// Rao-Blackwellized average. Allows sweeps >= 1.
    bool last_sample_only = false;
};

/// Resumable single-document chain.
class GibbsChain {
public:
    GibbsChain(const Document& doc, std::uint64_t seed, const ModelParams& params, const GibbsOptions& options);

    void sweep(const ModelParams& params);
    [[nodiscard]] LocalEstimate estimate() const;
    [[nodiscard]] LocalEstimate final_estimate() const;
    [[nodiscard]] const LatentSampleState& state() const { return state_; }
    [[nodiscard]] int sweeps_done() const { return done_; }

private:
    LocalEstimate snapshot(const ModelParams& params) const;
    LocalEstimate indicator_estimate() const;

    const Document* doc_;
    GibbsOptions options_;
    LatentSampleState state_;
    int done_ = 0;
    int window_ = 0;
    Vector alpha_;
    Matrix resp_sum_;
    Vector s2_sum_;
    LocalEstimate latest_;
};

/// Runs P sweeps and returns the per-document estimate; marginals are
/// `responsibilities`.
LocalEstimate gibbs_estep(const Document& doc, const ModelParams& params, int sweeps, std::uint64_t seed,
                          bool last_sample_only = false);

/// Exact posterior of a tiny document by summing the collapsed joint over all
/// K^N assignments.
struct ExactPosterior {
    LocalEstimate estimate;
    double log_evidence = 0.0;  // log p(X | beta, alpha)
};

ExactPosterior enumerate_posterior(const Document& doc, const ModelParams& params);

using GibbsBackend = ChainBackend<GibbsChain, GibbsOptions>;

}  // namespace oem
