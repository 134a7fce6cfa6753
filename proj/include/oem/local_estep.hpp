#pragma once

// Plumbing shared by the per-document E-steps: a token-level estimate, its
// reduction to dense minibatch statistics, and a backend that runs one chain
// per document against the current (frozen) parameters.

#include "oem/common.hpp"
#include "oem/core_online_em.hpp"
#include "oem/lda_family.hpp"
#include "oem/parallel.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace oem {

/// Per-document statistics in token form. `responsibilities` is N_X x K with
/// rows on the simplex; s1 follows by scattering row n into column x_n.
struct LocalEstimate {
    Matrix responsibilities;
    Vector s2;
};

/// Dense per-document statistics (s1 is K x vocab_size).
SuffStats to_suff_stats(const Document& doc, const LocalEstimate& est, int vocab_size);

/// acc += weight * stats(doc, est).
void accumulate(SuffStats& acc, const Document& doc, const LocalEstimate& est, double weight);

/// Unweighted mean over the documents of a minibatch.
SuffStats mean_stats(std::span<const Document> docs, std::span<const LocalEstimate> ests, int vocab_size);

/// Runs `Chain` objects (one per document) sweep by sweep. A chain provides
///   Chain(const Document&, std::uint64_t seed, const ModelParams&, const Options&)
///   void sweep(const ModelParams&)
///   LocalEstimate estimate() const        // after the latest sweep
///   LocalEstimate final_estimate() const  // what the minibatch contributes
template <class Chain, class Options>
class ChainSession {
public:
    ChainSession(std::span<const Document> docs, std::uint64_t base_seed, std::int64_t first_doc,
                 const ModelParams& params, const Options& options, int threads)
        : docs_(docs), threads_(threads), vocab_size_(params.vocab_size()) {
        chains_.reserve(docs.size());
        for (std::size_t j = 0; j < docs.size(); ++j)
            chains_.emplace_back(docs[j], derive_seed({base_seed, static_cast<std::uint64_t>(first_doc) + j}), params,
                                 options);
    }

    void sweep(const ModelParams& params) {
        for_each_index(chains_.size(), threads_, [&](std::size_t j) { chains_[j].sweep(params); });
    }

    [[nodiscard]] SuffStats current_estimate() const { return reduce(false); }
    [[nodiscard]] SuffStats final_estimate() const { return reduce(true); }
    [[nodiscard]] const std::vector<Chain>& chains() const { return chains_; }

private:
    SuffStats reduce(bool final) const {
        std::vector<LocalEstimate> ests(chains_.size());
        for_each_index(chains_.size(), threads_, [&](std::size_t j) {
            ests[j] = final ? chains_[j].final_estimate() : chains_[j].estimate();
        });
        return mean_stats(docs_, ests, vocab_size_);
    }

    std::span<const Document> docs_;
    int threads_;
    int vocab_size_;
    std::vector<Chain> chains_;
};

/// LocalBackend adapter over a chain type. `Options` must expose `sweeps`.
template <class Chain, class Options>
class ChainBackend {
public:
    ChainBackend(Options options, std::uint64_t base_seed, int threads = 1)
        : options_(options), base_seed_(base_seed), threads_(threads) {}

    [[nodiscard]] int sweeps() const { return options_.sweeps; }
    [[nodiscard]] const Options& options() const { return options_; }

    [[nodiscard]] ChainSession<Chain, Options> open(std::span<const Document> docs, std::int64_t first_doc,
                                                    const ModelParams& params) const {
        return ChainSession<Chain, Options>(docs, base_seed_, first_doc, params, options_, threads_);
    }

private:
    Options options_;
    std::uint64_t base_seed_;
    int threads_;
};

}  // namespace oem
