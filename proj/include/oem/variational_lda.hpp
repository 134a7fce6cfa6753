#pragma once

// Mean-field variational E-step for one document:
//
//   zeta_nk ∝ beta_{k, x_n} exp(Psi(gamma_k))      gamma_k = alpha_k + sum_n zeta_nk
//
// applied alternately (zeta first), starting from gamma = alpha + N/K.

#include "oem/common.hpp"
#include "oem/lda_family.hpp"
#include "oem/local_estep.hpp"

#include <cstdint>

namespace oem {

struct VariationalState {
    Vector gamma;  // K
    Matrix zeta;   // N x K, rows on the simplex
};

VariationalState init_variational_state(const Document& doc, const ModelParams& params);

void update_zeta(VariationalState& state, const Document& doc, const ModelParams& params);
void update_gamma(VariationalState& state, const Vector& alpha);

/// Negative free energy of q(theta | gamma) prod_n q(z_n | zeta_n).
double elbo_document(const Document& doc, const VariationalState& state, const ModelParams& params);

/// s1 from zeta, s2_k = Psi(gamma_k) - Psi(sum gamma).
LocalEstimate variational_estimate(const VariationalState& state);

struct VariationalResult {
    LocalEstimate estimate;
    VariationalState state;
};

VariationalResult variational_estep(const Document& doc, const ModelParams& params, int sweeps);

struct VariationalOptions {
    int sweeps = 20;
};

/// Resumable single-document coordinate ascent. The seed is unused.
class VariationalChain {
public:
    VariationalChain(const Document& doc, std::uint64_t seed, const ModelParams& params,
                     const VariationalOptions& options);

    void sweep(const ModelParams& params);
    [[nodiscard]] LocalEstimate estimate() const { return variational_estimate(state_); }
    [[nodiscard]] LocalEstimate final_estimate() const { return estimate(); }
    [[nodiscard]] const VariationalState& state() const { return state_; }

private:
    const Document* doc_;
    VariationalState state_;
};

using VariationalBackend = ChainBackend<VariationalChain, VariationalOptions>;

}  // namespace oem
