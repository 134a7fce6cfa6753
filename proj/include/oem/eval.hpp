#pragma once

// Held-out evaluation: the left-to-right particle estimator of log p(X | beta, alpha),
// exact oracles for small cases, and topic matching by minimum-cost assignment.

#include "oem/common.hpp"
#include "oem/lda_family.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace oem {

/// Left-to-right estimate with `particles` particles. For every position n each
/// particle resamples its prefix assignments, contributes
/// sum_k beta_{k,x_n} (N_k + alpha_k) / ((n - 1) + sum alpha) and then draws z_n.
double left_to_right(const Document& doc, const ModelParams& params, int particles, std::uint64_t seed);

/// log p(X | beta, alpha) for K = 2 by adaptive quadrature over theta_1.
double exact_loglik_quadrature(const Document& doc, const ModelParams& params);

/// log p(X | beta, alpha) by summing over all K^N assignments.
double exact_loglik_enumeration(const Document& doc, const ModelParams& params);

struct PerplexityReport {
    std::vector<double> per_doc_log_lik;
    double mean_log_perplexity = 0.0;
    int n_particles = 0;
    std::uint64_t seed = 0;

    void write_csv(std::ostream& out) const;
    [[nodiscard]] std::string summary_json() const;
};

/// Document d is evaluated with seed derive_seed({seed, d}), so the report
/// does not depend on the thread count.
PerplexityReport perplexity(std::span<const Document> docs, const ModelParams& params, int particles,
                            std::uint64_t seed, int threads = 1);

/// Minimum-cost perfect matching on a square cost matrix; result[i] is the
/// column assigned to row i.
std::vector<int> hungarian(const Matrix& cost);

/// KL(p || q) with both arguments floored at `floor` inside the logs.
double kl_divergence(const Eigen::Ref<const Eigen::RowVectorXd>& p, const Eigen::Ref<const Eigen::RowVectorXd>& q,
                     double floor = 1e-12);

struct TopicMatching {
    std::vector<int> assignment;  // row i of beta_a matched to row assignment[i] of beta_b
    Matrix divergence;            // KL(beta_a_i || beta_b_j)
    double cost = 0.0;
};

TopicMatching match_topics(const Matrix& beta_a, const Matrix& beta_b);

}  // namespace oem
