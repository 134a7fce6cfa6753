#pragma once

// Hierarchical Dirichlet process topic model with a growing set of topics.
//
// Frequentist parameters are (beta, pi): T instantiated topics and their
// stick-breaking weights, with the residual 1 - sum(pi) funding new topics.
// Statistics are s1_k = E[log nu_k] and s2_kv = expected word-topic counts;
// the M-step normalizes s2 and solves
//
//   Psi(b pi_k) - Psi(b sum_i pi_i) = s1_k
//
// by the same fixed point as the LDA alpha update.
//
// Inside a minibatch every document runs its own chain against frozen global
// parameters and may open doc-local topics. At merge time the surviving
// doc-local topics are appended in document order (subject to the per
// minibatch cap and T_max) and their weights are recomputed by re-applying
// each recorded stick fraction to the current global residual.

#include "oem/common.hpp"
#include "oem/core_online_em.hpp"
#include "oem/eval.hpp"
#include "oem/lda_family.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace oem {

struct HdpParams {
    Matrix beta;  // T x V
    Vector pi;    // T, sum < 1
    double b = 4.0;
    double alpha_conc = 1.0;

    [[nodiscard]] int num_topics() const { return static_cast<int>(beta.rows()); }
    [[nodiscard]] int vocab_size() const { return static_cast<int>(beta.cols()); }
    [[nodiscard]] double residual() const { return 1.0 - pi.sum(); }

    /// Throws std::logic_error when a stick-breaking or simplex invariant fails.
    void check(double tol = 1e-9) const;
};

/// pi_k = pi_bar_k * prod_{j<k} (1 - pi_bar_j).
Vector stick_weights(const Vector& pi_bar);

/// Throws std::logic_error unless every weight lies in (0, 1) and the sum is below 1.
void check_stick(const Vector& pi);

struct HdpSuffStats {
    Vector s1;  // T
    Matrix s2;  // T x V

    [[nodiscard]] int num_topics() const { return static_cast<int>(s1.size()); }
};

/// The boundary scaling applied when the fixed point gives sum(pi) >= 1.
inline constexpr double kStickEpsilon = 1e-6;

/// Solves for (beta, pi). `bpi_init` seeds the fixed point when its size
/// matches. Rows of s2 with zero mass throw.
HdpParams hdp_m_step(const HdpSuffStats& s, double b, double alpha_conc, const AlphaOptions& options = {},
                     const Vector* bpi_init = nullptr);

struct HdpOptions {
    double b = 4.0;            // document-level concentration
    double alpha_conc = 1.0;   // corpus-level stick concentration
    int initial_topics = 2;
    int t_max = 200;
    int sweeps = 20;
    bool allow_growth = true;
    /// Doc-local topics with fewer tokens at the end of the chain are dropped.
    int min_new_topic_tokens = 2;
    /// At most this many doc-local topics become global per minibatch.
    int max_new_topics_per_minibatch = 1;
    /// Topics whose expected tokens per document fall below this are retired.
    double prune_mass = 0.5;
    /// Symmetric Dirichlet prior on topics for the Bayesian variant.
    double eta = 0.01;
    /// Floor applied to beta after the M-step so no word has zero probability
    /// under every topic.
    double beta_floor = 1e-10;
    AlphaOptions fixed_point;
};

/// T = initial_topics, beta rows ~ Dirichlet(1), pi from stick fractions
/// 1 / (1 + alpha_conc).
HdpParams hdp_initial_params(int vocab_size, const HdpOptions& options, std::uint64_t seed);

/// log |S(n, m)| for the unsigned Stirling numbers of the first kind.
class StirlingTable {
public:
    explicit StirlingTable(int n_max = 0) { ensure(n_max); }
    void ensure(int n_max);
    [[nodiscard]] int n_max() const { return static_cast<int>(rows_.size()) - 1; }
    /// -infinity where |S(n, m)| = 0.
    [[nodiscard]] double log_abs(int n, int m) const;

private:
    std::vector<std::vector<double>> rows_;
};

/// Number of tables among `customers` given concentration c:
/// P(s = m) ∝ |S(customers, m)| c^m.
int sample_table_count(int customers, double concentration, const StirlingTable& table, Rng& rng);

/// What a chain sees of the global state. Exactly one of `beta` (point
/// likelihood) or `lambda` (collapsed Dirichlet likelihood) is set.
struct HdpChainView {
    const Matrix* beta = nullptr;
    const Matrix* lambda = nullptr;
    const Vector* lambda_rowsum = nullptr;
    const Vector* pi = nullptr;
    double b = 1.0;
    double alpha_conc = 1.0;
    double eta = 0.01;
    const StirlingTable* stirling = nullptr;  // table counts are sampled when set
};

/// Per-document output. Columns are the T global topics followed by the
/// doc-local topics that were alive at the end of the chain, in creation order.
struct HdpLocalEstimate {
    int num_global = 0;
    int length = 0;
    Matrix responsibilities;  // N x columns, window average, fresh-topic outcome excluded
    Matrix window_counts;     // |window| x columns
    Vector tables;            // columns, window-averaged table counts (Bayesian chain)
    Vector new_pi_bar;
    Vector new_token_counts;
};

/// Single-document HDP Gibbs chain. The point-likelihood form averages
/// Rao-Blackwellized conditionals over the last quarter of the sweeps; the
/// collapsed form averages sampled indicators and table counts.
class HdpChain {
public:
    HdpChain(const Document& doc, std::uint64_t seed, const HdpChainView& view, const HdpOptions& options);

    void sweep(const HdpChainView& view);
    [[nodiscard]] HdpLocalEstimate final_estimate() const;

    [[nodiscard]] int num_columns() const { return static_cast<int>(counts_.size()); }
    [[nodiscard]] const std::vector<int>& z() const { return z_; }
    [[nodiscard]] const std::vector<int>& counts() const { return counts_; }
    [[nodiscard]] const std::vector<int>& last_tables() const { return tables_; }
    [[nodiscard]] int alive_new_topics() const;
    /// Residual stick mass seen by this document.
    [[nodiscard]] double residual(const HdpChainView& view) const;
    /// Normalized conditional over [columns..., fresh] for token n given the
    /// rest (dead columns get 0). Exposed for tests.
    [[nodiscard]] Vector conditional(int n, const HdpChainView& view);

    Rng& rng() { return rng_; }

private:
    double weights(int n, const HdpChainView& view, std::vector<double>& out) const;
    void remove_token(int n);
    void add_token(int n, int column);
    int open_topic(const HdpChainView& view);
    void snapshot(const HdpChainView& view);

    const Document* doc_;
    HdpOptions options_;
    Rng rng_;
    int num_global_;
    std::vector<int> z_;
    std::vector<int> counts_;
    std::vector<double> new_pi_;
    std::vector<double> new_pi_bar_;
    std::vector<char> alive_;
    // Collapsed form: unique word slots and per-column word counts.
    std::vector<int> slot_;
    std::vector<int> slot_word_;
    std::vector<std::vector<int>> word_counts_;
    std::vector<int> tables_;

    int done_ = 0;
    int window_ = 0;
    Matrix resp_sum_;
    std::vector<std::vector<int>> count_history_;
    std::vector<double> table_sum_;
};

/// One G-OEM local step: `options.sweeps` sweeps against `params`.
HdpLocalEstimate hdp_gibbs_estep(const Document& doc, const HdpParams& params, const HdpOptions& options,
                                 std::uint64_t seed);

/// Merged minibatch estimate over T' = T + accepted topics.
struct HdpEstimate {
    HdpSuffStats stats;
    Vector pi;  // weights used for the appended topics (and the old ones)
    int num_new = 0;
};

/// Which doc-local topics become global, in document order. Returns, per
/// document, the global id for each of its new columns (-1 when dropped).
std::vector<std::vector<int>> reconcile_new_topics(std::span<const HdpLocalEstimate> ests, int num_global,
                                                   const HdpOptions& options);

/// pi extended by re-applying each accepted stick fraction to the running residual.
Vector extend_pi(const Vector& pi, std::span<const HdpLocalEstimate> ests,
                 const std::vector<std::vector<int>>& column_map, int num_new);

HdpEstimate merge_hdp_estimates(std::span<const Document> docs, std::span<const HdpLocalEstimate> ests,
                                const HdpParams& params, const HdpOptions& options);

class HdpGibbsSession {
public:
    HdpGibbsSession(std::span<const Document> docs, std::uint64_t base_seed, std::int64_t first_doc,
                    const HdpParams& params, const HdpOptions& options, int threads);
    void sweep(const HdpParams& params);
    [[nodiscard]] HdpEstimate current_estimate() const;
    [[nodiscard]] HdpEstimate final_estimate() const;

private:
    std::span<const Document> docs_;
    HdpOptions options_;
    int threads_;
    const HdpParams* params_ = nullptr;
    std::vector<HdpChain> chains_;
};

class HdpGibbsBackend {
public:
    HdpGibbsBackend(HdpOptions options, std::uint64_t base_seed, int threads = 1)
        : options_(options), base_seed_(base_seed), threads_(threads) {}
    [[nodiscard]] int sweeps() const { return options_.sweeps; }
    [[nodiscard]] HdpGibbsSession open(std::span<const Document> docs, std::int64_t first_doc,
                                       const HdpParams& params) const {
        return HdpGibbsSession(docs, base_seed_, first_doc, params, options_, threads_);
    }

private:
    HdpOptions options_;
    std::uint64_t base_seed_;
    int threads_;
};

/// Frequentist HDP policy for the online EM driver. Polyak averaging and
/// boosting are not defined for a growing parameter and are rejected upstream.
class HdpModel {
public:
    using Params = HdpParams;
    using Stats = HdpSuffStats;
    using Estimate = HdpEstimate;

    HdpModel(HdpOptions options, double mean_length) : options_(options), mean_length_(mean_length) {}

    [[nodiscard]] Stats initial_stats(const Params& p) const;
    [[nodiscard]] Stats blend(const Stats& prev, const Estimate& hat, double rho) const;
    [[nodiscard]] Params m_step(const Stats& s, const Params& prev) const;
    [[nodiscard]] const Params& local(const Params& p) const { return p; }
    void update_mean(Params& mean, const Params& x, std::int64_t) const { mean = x; }

private:
    HdpOptions options_;
    double mean_length_;
};

// Bayesian variant: q(beta_k) = Dirichlet(lambda_k), q(pi_bar_k) = Beta(a_k, b_k).

struct HdpBayesParams {
    Matrix lambda;  // T x V
    Vector a;
    Vector b_stick;
    double b = 4.0;
    double alpha_conc = 1.0;
    double eta = 0.01;

    [[nodiscard]] int num_topics() const { return static_cast<int>(lambda.rows()); }
    /// Stick weights at the posterior mean fractions a / (a + b).
    [[nodiscard]] Vector expected_pi() const;
    /// Row-normalized lambda with the expected weights.
    [[nodiscard]] HdpParams point() const;
};

struct HdpBayesStats {
    Matrix lambda;
    Vector a;
    Vector b_stick;
};

/// Minibatch hats over T' topics:
///   lambda_hat = eta + D * z counts,  a_hat = 1 + D * s_k,  b_hat = alpha + D * sum_{j>k} s_j
struct HdpBayesEstimate {
    HdpBayesStats hat;
    int num_new = 0;
};

class HdpVarGibbsSession {
public:
    HdpVarGibbsSession(std::span<const Document> docs, std::uint64_t base_seed, std::int64_t first_doc,
                       const HdpBayesParams& params, const HdpOptions& options, double corpus_size, int threads);
    void sweep(const HdpBayesParams& params);
    [[nodiscard]] HdpBayesEstimate current_estimate() const;
    [[nodiscard]] HdpBayesEstimate final_estimate() const;
    [[nodiscard]] const Vector& pi() const { return pi_; }

private:
    HdpChainView view(const HdpBayesParams& params) const;

    std::span<const Document> docs_;
    HdpOptions options_;
    double corpus_size_;
    int threads_;
    Rng rng_;
    StirlingTable stirling_;
    Vector lambda_rowsum_;
    Vector pi_;
    const HdpBayesParams* params_ = nullptr;
    std::vector<HdpChain> chains_;
};

class HdpVarGibbsBackend {
public:
    HdpVarGibbsBackend(HdpOptions options, double corpus_size, std::uint64_t base_seed, int threads = 1)
        : options_(options), corpus_size_(corpus_size), base_seed_(base_seed), threads_(threads) {}
    [[nodiscard]] int sweeps() const { return options_.sweeps; }
    [[nodiscard]] HdpVarGibbsSession open(std::span<const Document> docs, std::int64_t first_doc,
                                          const HdpBayesParams& params) const {
        return HdpVarGibbsSession(docs, base_seed_, first_doc, params, options_, corpus_size_, threads_);
    }

private:
    HdpOptions options_;
    double corpus_size_;
    std::uint64_t base_seed_;
    int threads_;
};

class HdpBayesModel {
public:
    using Params = HdpBayesParams;
    using Stats = HdpBayesStats;
    using Estimate = HdpBayesEstimate;

    HdpBayesModel(HdpOptions options, double corpus_size) : options_(options), corpus_size_(corpus_size) {}

    [[nodiscard]] Stats initial_stats(const Params& p) const { return {p.lambda, p.a, p.b_stick}; }
    [[nodiscard]] Stats blend(const Stats& prev, const Estimate& hat, double rho) const;
    [[nodiscard]] Params m_step(const Stats& s, const Params& prev) const;
    [[nodiscard]] const Params& local(const Params& p) const { return p; }
    void update_mean(Params& mean, const Params& x, std::int64_t) const { mean = x; }

    /// lambda = eta + D * beta * mean_length / T, a = 1, b = alpha_conc.
    [[nodiscard]] Params initial_params(const HdpParams& start, double mean_length) const;

private:
    HdpOptions options_;
    double corpus_size_;
};

/// Finite LDA view of the instantiated topics: alpha_k = b * pi_k / sum(pi).
ModelParams hdp_as_lda(const HdpParams& params);

PerplexityReport hdp_evaluate(std::span<const Document> docs, const HdpParams& params, int particles,
                              std::uint64_t seed, int threads = 1);

/// Same layout as write_model plus a trailing pi line; the header carries T, b
/// and alpha_conc.
void write_hdp_model(const HdpParams& params, std::ostream& out);
void write_hdp_model(const HdpParams& params, const std::filesystem::path& path);
HdpParams read_hdp_model(std::istream& in);

}  // namespace oem
