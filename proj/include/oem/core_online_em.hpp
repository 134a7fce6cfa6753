#pragma once

// Generic online EM driver.
//
// The driver keeps a running sufficient statistic s and the parameter
// eta = eta*(s). For every minibatch i it runs a local inference backend
// against the frozen eta_{i-1}, blends
//
//     s_i = (1 - rho_i) s_{i-1} + rho_i * shat_i,     rho_i = (i + offset)^-kappa
//
// and re-solves the M-step. With boosting the blend and M-step are also applied
// after every intermediate local sweep, always starting from s_{i-1}.
//
// The statistic, parameter and estimate types are supplied by a model policy,
// which lets the same loop drive finite LDA, the Bayesian layer (where the
// "statistic" is the variational topic parameter) and the growing HDP.

#include "oem/common.hpp"

#include <concepts>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>

namespace oem {

struct StepSchedule {
    double kappa = 0.5;
    std::int64_t offset = 0;
};

/// rho_i = (i + offset)^(-kappa). Rejects i < 1 and kappa outside (0, 1].
double step_size(const StepSchedule& schedule, std::int64_t i);

/// LDA sufficient statistics: s1 (K x V) expected word-topic counts and
/// s2 (K) expected log topic proportions.
struct SuffStats {
    Matrix s1;
    Vector s2;

    static SuffStats zeros(int num_topics, int vocab_size);
    [[nodiscard]] int num_topics() const { return static_cast<int>(s1.rows()); }
    [[nodiscard]] int vocab_size() const { return static_cast<int>(s1.cols()); }
};

/// Convex combination (1 - rho) * prev + rho * hat, elementwise.
SuffStats blend_stats(const SuffStats& prev, const SuffStats& hat, double rho);

/// Unweighted mean of per-document statistics.
SuffStats minibatch_estimate(std::span<const SuffStats> per_doc);

/// Last iterate plus the running (Polyak) mean of all iterates.
template <class Params>
struct AveragedTrace {
    Params last;
    Params running_mean;
    std::int64_t count = 0;
};

struct OnlineEmOptions {
    StepSchedule schedule;
    int minibatch_size = 100;
    bool boost = false;
    int passes = 1;
};

template <class Params>
struct Checkpoint {
    std::int64_t minibatch = 0;
    std::int64_t docs_seen = 0;
    const AveragedTrace<Params>& trace;
};

/// Error raised when a local E-step fails; carries the 1-based minibatch index.
class OnlineEmError : public std::runtime_error {
public:
    OnlineEmError(std::int64_t minibatch, const std::string& what)
        : std::runtime_error("minibatch " + std::to_string(minibatch) + ": " + what), minibatch_(minibatch) {}
    [[nodiscard]] std::int64_t minibatch() const { return minibatch_; }

private:
    std::int64_t minibatch_;
};

template <class M>
concept OnlineModel = requires(const M& m, const typename M::Params& p, typename M::Params& acc,
                               const typename M::Stats& s, const typename M::Estimate& e, double rho,
                               std::int64_t n) {
    { m.initial_stats(p) } -> std::same_as<typename M::Stats>;
    { m.blend(s, e, rho) } -> std::same_as<typename M::Stats>;
    { m.m_step(s, p) } -> std::same_as<typename M::Params>;
    { m.local(p) };
    m.update_mean(acc, p, n);
};

template <class B, class M>
concept LocalBackend = OnlineModel<M> && requires(B& b, const M& m, const typename M::Params& p,
                                                  std::span<const Document> docs, std::int64_t first_doc) {
    { b.sweeps() } -> std::convertible_to<int>;
    { b.open(docs, first_doc, m.local(p)) };
    requires requires(decltype(b.open(docs, first_doc, m.local(p))) session) {
        session.sweep(m.local(p));
        { session.current_estimate() } -> std::convertible_to<typename M::Estimate>;
        { session.final_estimate() } -> std::convertible_to<typename M::Estimate>;
    };
};

struct NoCheckpoint {
    template <class T>
    void operator()(const T&) const {}
};

/// One (or `passes`) sweep over `stream` in minibatches. Returns the initial
/// parameters untouched for an empty stream.
template <class Model, class Backend, class OnCheckpoint = NoCheckpoint>
    requires LocalBackend<Backend, Model>
AveragedTrace<typename Model::Params> run_online_em(std::span<const Document> stream, const Model& model,
                                                    Backend& backend, typename Model::Params init,
                                                    const OnlineEmOptions& options,
                                                    OnCheckpoint&& on_checkpoint = {}) {
    if (options.minibatch_size < 1) throw std::invalid_argument("minibatch_size must be >= 1");
    if (backend.sweeps() < 1) throw std::invalid_argument("local iterations must be >= 1");
    if (options.passes < 1) throw std::invalid_argument("passes must be >= 1");
    (void)step_size(options.schedule, 1);

    AveragedTrace<typename Model::Params> trace{init, init, 0};
    if (stream.empty()) return trace;

    auto params = std::move(init);
    auto stats = model.initial_stats(params);
    const auto n_docs = static_cast<std::int64_t>(stream.size());
    const auto batch = static_cast<std::int64_t>(options.minibatch_size);
    std::int64_t i = 0;
    std::int64_t docs_seen = 0;

    for (int pass = 0; pass < options.passes; ++pass) {
        for (std::int64_t start = 0; start < n_docs; start += batch) {
            ++i;
            const auto count = std::min(batch, n_docs - start);
            const auto docs = stream.subspan(static_cast<std::size_t>(start), static_cast<std::size_t>(count));
            const double rho = step_size(options.schedule, i);
            try {
                auto session = backend.open(docs, pass * n_docs + start, model.local(params));
                const int sweeps = backend.sweeps();
                for (int t = 1; t <= sweeps; ++t) {
                    session.sweep(model.local(params));
                    if (options.boost && t < sweeps)
                        params = model.m_step(model.blend(stats, session.current_estimate(), rho), params);
                }
                stats = model.blend(stats, session.final_estimate(), rho);
                params = model.m_step(stats, params);
            } catch (const OnlineEmError&) {
                throw;
            } catch (const std::exception& e) {
                throw OnlineEmError(i, e.what());
            }
            docs_seen += count;
            trace.last = params;
            ++trace.count;
            model.update_mean(trace.running_mean, params, trace.count);
            on_checkpoint(Checkpoint<typename Model::Params>{i, docs_seen, trace});
        }
    }
    return trace;
}

}  // namespace oem
