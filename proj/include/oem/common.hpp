#pragma once

// Shared vocabulary types for the online EM library: dense matrices, documents,
// counter-based seeding and a few sampling helpers used by every local step.

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace oem {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

/// A bag-of-words document flattened to one vocabulary id per token occurrence.
/// Tokens are kept sorted by word id; the model is exchangeable so order carries
/// no information.
struct Document {
    std::vector<std::int32_t> word_ids;

    [[nodiscard]] int length() const { return static_cast<int>(word_ids.size()); }
    [[nodiscard]] bool empty() const { return word_ids.empty(); }
    friend bool operator==(const Document&, const Document&) = default;
};

/// Raised when a numerical routine fails to converge within its iteration budget.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives a stream seed from a tuple of counters (base seed, split, document, ...).
/// No global RNG exists anywhere in the library; every stream is seeded this way.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> counters) {
    std::uint64_t h = 0x243f6a8885a308d3ULL;
    for (auto c : counters) h = mix64(h ^ mix64(c));
    return h;
}

inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

/// Draws an index proportional to nonnegative `weights` whose sum is `total`.
inline int sample_index(std::span<const double> weights, double total, Rng& rng) {
    double u = uniform01(rng) * total;
    const int n = static_cast<int>(weights.size());
    for (int k = 0; k < n; ++k) {
        u -= weights[k];
        if (u < 0.0) return k;
    }
    // Rounding left a sliver of mass: fall back to the last positive entry.
    for (int k = n - 1; k >= 0; --k)
        if (weights[k] > 0.0) return k;
    return n - 1;
}

inline int sample_index(const Vector& weights, Rng& rng) {
    return sample_index(std::span<const double>(weights.data(), weights.size()), weights.sum(), rng);
}

inline double sample_gamma(double shape, Rng& rng) {
    return std::gamma_distribution<double>(shape, 1.0)(rng);
}

inline double sample_beta(double a, double b, Rng& rng) {
    const double x = sample_gamma(a, rng);
    const double y = sample_gamma(b, rng);
    return x / (x + y);
}

/// Dirichlet draw via normalized gammas.
inline Vector sample_dirichlet(const Vector& concentration, Rng& rng) {
    Vector out(concentration.size());
    for (Eigen::Index k = 0; k < concentration.size(); ++k) out[k] = sample_gamma(concentration[k], rng);
    const double total = out.sum();
    if (total > 0.0) {
        out /= total;
    } else {
        // Every gamma underflowed (tiny concentrations); put the mass on one coordinate.
        out.setZero();
        out[std::uniform_int_distribution<Eigen::Index>(0, out.size() - 1)(rng)] = 1.0;
    }
    return out;
}

}  // namespace oem
