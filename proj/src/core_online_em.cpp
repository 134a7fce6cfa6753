#include "oem/core_online_em.hpp"

#include <cmath>
#include <stdexcept>

namespace oem {

double step_size(const StepSchedule& schedule, std::int64_t i) {
    if (i < 1) throw std::invalid_argument("step index must be >= 1");
    if (!(schedule.kappa > 0.0 && schedule.kappa <= 1.0)) throw std::invalid_argument("kappa must lie in (0, 1]");
    if (schedule.offset < 0) throw std::invalid_argument("step offset must be nonnegative");
    return std::pow(static_cast<double>(i + schedule.offset), -schedule.kappa);
}

SuffStats SuffStats::zeros(int num_topics, int vocab_size) {
    return {Matrix::Zero(num_topics, vocab_size), Vector::Zero(num_topics)};
}

SuffStats blend_stats(const SuffStats& prev, const SuffStats& hat, double rho) {
    if (prev.s1.rows() != hat.s1.rows() || prev.s1.cols() != hat.s1.cols() || prev.s2.size() != hat.s2.size())
        throw std::invalid_argument("blend_stats: shape mismatch");
    if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("blend_stats: rho must lie in (0, 1]");
    if (rho == 1.0) return hat;
    SuffStats out;
    out.s1 = (1.0 - rho) * prev.s1 + rho * hat.s1;
    out.s2 = (1.0 - rho) * prev.s2 + rho * hat.s2;
    // Rounding can push a convex combination of zeros to -0 or a hair below.
    out.s1 = out.s1.cwiseMax(0.0);
    return out;
}

SuffStats minibatch_estimate(std::span<const SuffStats> per_doc) {
    if (per_doc.empty()) throw std::invalid_argument("minibatch_estimate: empty minibatch");
    SuffStats acc = SuffStats::zeros(per_doc.front().num_topics(), per_doc.front().vocab_size());
    for (const auto& s : per_doc) {
        if (s.s1.rows() != acc.s1.rows() || s.s1.cols() != acc.s1.cols() || s.s2.size() != acc.s2.size())
            throw std::invalid_argument("minibatch_estimate: non-uniform shapes");
        acc.s1 += s.s1;
        acc.s2 += s.s2;
    }
    const double n = static_cast<double>(per_doc.size());
    acc.s1 /= n;
    acc.s2 /= n;
    return acc;
}

}  // namespace oem
