#pragma once

// Bayesian treatment of the topics: q(beta_k) = Dirichlet(lambda_k). The local
// E-steps are reused unchanged by feeding them the surrogate
// exp(E_q[log beta]); the global step moves lambda toward
//
//   lambda_hat = b + D * E_q[S1]
//
// Also hosts the incremental baselines (OLDA, SVB, SPLDA, SGS, VarGibbs),
// expressed on top of the generic online EM driver.

#include "oem/common.hpp"
#include "oem/core_online_em.hpp"
#include "oem/lda_family.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>

namespace oem {

struct BayesGlobalState {
    Matrix lambda;  // K x V, positive
    double b = 0.01;
    double corpus_size = 1.0;
};

/// exp(Psi(lambda_kv) - Psi(sum_v lambda_kv)); rows sum to at most one.
Matrix expected_log_beta(const BayesGlobalState& state);
Matrix expected_log_beta(const Matrix& lambda);

/// E_q[beta]: lambda with rows normalized.
Matrix posterior_mean_beta(const Matrix& lambda);

enum class LambdaOrder {
    standard,       // lambda <- (1 - rho) lambda + rho lambda_hat
    paper_literal,  // lambda <- rho lambda + (1 - rho) lambda_hat
};

LambdaOrder parse_lambda_order(std::string_view text);
std::string_view to_string(LambdaOrder order);

/// Blends lambda toward b + D * expected_s1.
void lambda_update(BayesGlobalState& state, const Matrix& expected_s1, double rho,
                   LambdaOrder order = LambdaOrder::standard);

struct BayesParams {
    Matrix lambda;
    Vector alpha;
    ModelParams surrogate;  // exp(E log beta) with this alpha; what local steps see

    /// Point estimate used for evaluation: row-normalized lambda.
    [[nodiscard]] ModelParams point() const { return {posterior_mean_beta(lambda), alpha}; }
};

BayesParams make_bayes_params(Matrix lambda, Vector alpha);

struct BayesStats {
    Matrix lambda;
    Vector s2;  // running expected log theta, drives the alpha update
};

/// Model policy for the generic driver; the estimate is the minibatch mean of
/// the local statistics.
class BayesLdaModel {
public:
    using Params = BayesParams;
    using Stats = BayesStats;
    using Estimate = SuffStats;

    BayesLdaModel(double b, double corpus_size, AlphaMode mode, AlphaOptions options, LambdaOrder order)
        : b_(b), corpus_size_(corpus_size), mode_(mode), options_(options), order_(order) {}

    [[nodiscard]] Stats initial_stats(const Params& p) const;
    [[nodiscard]] Stats blend(const Stats& prev, const Estimate& hat, double rho) const;
    [[nodiscard]] Params m_step(const Stats& s, const Params& prev) const;
    [[nodiscard]] const ModelParams& local(const Params& p) const { return p.surrogate; }
    void update_mean(Params& mean, const Params& x, std::int64_t n) const;

    /// lambda for a starting point beta: b + D * beta * mean_length / K.
    [[nodiscard]] Params initial_params(const ModelParams& start, double mean_length) const;

private:
    double b_;
    double corpus_size_;
    AlphaMode mode_;
    AlphaOptions options_;
    LambdaOrder order_;
};

enum class BayesVariant { olda, svb, splda, sgs, vargibbs };

BayesVariant parse_bayes_variant(std::string_view text);
std::string_view to_string(BayesVariant variant);

struct VariantConfig {
    int num_topics = 10;
    double kappa = 0.5;  // OLDA only; the incremental variants use 1/t
    int minibatch_size = 100;
    int local_iters = 20;
    double b = 0.01;
    LambdaOrder order = LambdaOrder::standard;
    AlphaOptions alpha_options;
    /// Overrides the variant's alpha update (SPLDA fixed point, OLDA/SVB
    /// gradient, SGS/VarGibbs frozen).
    std::optional<AlphaMode> alpha_mode;
    /// Alpha of the random starting point.
    double init_alpha = 1.0;
    /// Constant alpha for SGS (required) and VarGibbs (defaults to init_alpha).
    std::optional<double> fixed_alpha;
    bool averaging = false;
    std::uint64_t seed = 0;
    int threads = 1;
};

struct VariantCheckpoint {
    std::int64_t minibatch = 0;
    std::int64_t docs_seen = 0;
    const ModelParams& point;                 // evaluation parameters
    const ModelParams* surrogate = nullptr;   // Bayesian variants only
};

struct VariantResult {
    ModelParams point;                      // averaged iterate when averaging is on
    std::optional<BayesParams> bayes;       // final Bayesian state for OLDA/SVB/VarGibbs
};

/// One pass of a baseline over `stream`.
VariantResult run_variant(BayesVariant variant, std::span<const Document> stream, int vocab_size,
                          const VariantConfig& config,
                          const std::function<void(const VariantCheckpoint&)>& on_checkpoint = {});

/// Mean per-document ELBO after `sweeps` variational sweeps against `params`
/// (a point estimate or a surrogate).
double elbo_corpus(std::span<const Document> docs, const ModelParams& params, int sweeps);

}  // namespace oem
