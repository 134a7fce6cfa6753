#pragma once

// LDA written as a non-canonical exponential family.
//
//   S1_kv = sum_n z_nk x_nv        phi1_kv = log beta_kv
//   S2_k  = log theta_k            phi2_k  = alpha_k
//   psi(beta, alpha) = sum_k lgamma(alpha_k) - lgamma(sum_k alpha_k)
//
// The M-step eta*(s) normalizes the rows of s1 and solves
// Psi(alpha_k) - Psi(sum_i alpha_i) = s2_k for alpha.

#include "oem/common.hpp"
#include "oem/core_online_em.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

namespace oem {

/// Global LDA parameter: topics `beta` (K x V, rows on the simplex) and the
/// Dirichlet prior `alpha` on topic proportions.
///
/// The local E-steps accept any positive `beta`; the Bayesian variants pass the
/// surrogate exp(E_q[log beta]) whose rows sum to less than one.
struct ModelParams {
    Matrix beta;
    Vector alpha;

    [[nodiscard]] int num_topics() const { return static_cast<int>(beta.rows()); }
    [[nodiscard]] int vocab_size() const { return static_cast<int>(beta.cols()); }

    /// Throws std::invalid_argument unless every beta row is on the simplex
    /// within `tol` and alpha is positive.
    void check(double tol = 1e-9) const;
};

// Digamma kernels.
double digamma(double x);
double trigamma(double x);
/// Newton iterations from the asymptotic split initializer.
double inverse_digamma(double y);
Vector digamma(const Vector& x);

enum class AlphaMode { fixed_point, gradient, frozen, gamma_prior };

AlphaMode parse_alpha_mode(std::string_view text);
std::string_view to_string(AlphaMode mode);

struct AlphaOptions {
    double tol = 1e-8;
    int max_iter = 1000;
    double learning_rate = 1e-3;
    int gradient_iters = 10;
    double floor = 1e-6;
};

/// alpha_k <- Psi^{-1}(Psi(sum_i alpha_i) + s2_k) until the largest change is
/// below tol. If max_iter passes do not get there, up to max_iter Newton steps
/// continue from the last iterate; ConvergenceError when those fail too.
Vector alpha_fixed_point(const Vector& s2, const Vector& alpha0, double tol = 1e-8, int max_iter = 1000);

/// <alpha, s2> - (sum_k lgamma(alpha_k) - lgamma(sum_k alpha_k)).
double alpha_objective(const Vector& s2, const Vector& alpha);
/// s2_k - Psi(alpha_k) + Psi(sum alpha).
Vector alpha_objective_gradient(const Vector& s2, const Vector& alpha);

/// Projected gradient ascent on alpha_objective. Throws ConvergenceError when the
/// objective decreases for five consecutive steps.
Vector alpha_gradient(const Vector& s2, const Vector& alpha0, double learning_rate, int iters,
                      double floor = 1e-6);

/// eta*(s). Zero rows of s1 (unused topics) are reset to uniform with a warning.
ModelParams m_step(const SuffStats& s, AlphaMode mode, const Vector& alpha_init, const AlphaOptions& options = {});

/// <phi(eta), s> - psi(eta), the concave M-step objective.
double lda_objective(const ModelParams& params, const SuffStats& s);

/// log p(X, Z, theta | beta, alpha) including the base measure.
double log_joint(const Document& doc, std::span<const int> z, const Vector& theta, const ModelParams& params);

/// Sufficient statistics consistent with `params` for documents of the given
/// mean length; used as s_0.
SuffStats forward_stats(const ModelParams& params, double mean_length);

/// Random starting point: beta rows ~ Dirichlet(1), alpha = alpha_value.
ModelParams random_params(int num_topics, int vocab_size, std::uint64_t seed, double alpha_value = 1.0);

/// Family handle for the online EM driver.
class LdaModel {
public:
    using Params = ModelParams;
    using Stats = SuffStats;
    using Estimate = SuffStats;

    /// `beta_floor` is applied to the topics after each M-step so that a word
    /// unseen so far keeps a tiny probability under every topic.
    LdaModel(AlphaMode mode, AlphaOptions options, double mean_length, double beta_floor = 1e-10)
        : mode_(mode), options_(options), mean_length_(mean_length), beta_floor_(beta_floor) {}

    [[nodiscard]] Stats initial_stats(const Params& p) const { return forward_stats(p, mean_length_); }
    [[nodiscard]] Stats blend(const Stats& prev, const Estimate& hat, double rho) const {
        return blend_stats(prev, hat, rho);
    }
    [[nodiscard]] Params m_step(const Stats& s, const Params& prev) const;
    [[nodiscard]] const Params& local(const Params& p) const { return p; }
    void update_mean(Params& mean, const Params& x, std::int64_t n) const;

    [[nodiscard]] AlphaMode alpha_mode() const { return mode_; }

private:
    AlphaMode mode_;
    AlphaOptions options_;
    double mean_length_;
    double beta_floor_;
};

/// Text dump: one JSON header line {"K":..,"V":..}, K lines of beta rows, one
/// line of alpha, all at round-trip precision.
void write_model(const ModelParams& params, std::ostream& out);
void write_model(const ModelParams& params, const std::filesystem::path& path);
ModelParams read_model(std::istream& in);
ModelParams read_model(const std::filesystem::path& path);

}  // namespace oem
