#include "oem/lda_family.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace oem {

namespace {

constexpr double kEulerGamma = 0.57721566490153286061;

}  // namespace

void ModelParams::check(double tol) const {
    if (alpha.size() != beta.rows()) throw std::invalid_argument("ModelParams: alpha size differs from K");
    if (beta.rows() < 1 || beta.cols() < 1) throw std::invalid_argument("ModelParams: empty topic matrix");
    if ((alpha.array() <= 0.0).any() || !alpha.allFinite())
        throw std::invalid_argument("ModelParams: alpha must be positive and finite");
    if ((beta.array() < 0.0).any() || !beta.allFinite())
        throw std::invalid_argument("ModelParams: beta entries must be nonnegative and finite");
    for (Eigen::Index k = 0; k < beta.rows(); ++k)
        if (std::abs(beta.row(k).sum() - 1.0) > tol)
            throw std::invalid_argument("ModelParams: topic " + std::to_string(k) + " is not on the simplex");
}

double digamma(double x) { return boost::math::digamma(x); }

double trigamma(double x) { return boost::math::trigamma(x); }

Vector digamma(const Vector& x) { return x.unaryExpr([](double v) { return boost::math::digamma(v); }); }

double inverse_digamma(double y) {
    if (!std::isfinite(y)) throw std::domain_error("inverse_digamma: non-finite argument");
    double x = y >= -2.22 ? std::exp(y) + 0.5 : -1.0 / (y + kEulerGamma);
    for (int it = 0; it < 50; ++it) {
        const double step = (digamma(x) - y) / trigamma(x);
        double next = x - step;
        if (next <= 0.0) next = 0.5 * x;
        const bool done = std::abs(next - x) <= 1e-15 * x;
        x = next;
        if (done) break;
    }
    return x;
}

AlphaMode parse_alpha_mode(std::string_view text) {
    if (text == "fixed_point") return AlphaMode::fixed_point;
    if (text == "gradient") return AlphaMode::gradient;
    if (text == "frozen") return AlphaMode::frozen;
    if (text == "gamma_prior") return AlphaMode::gamma_prior;
    throw std::invalid_argument("unknown alpha mode: " + std::string(text));
}

std::string_view to_string(AlphaMode mode) {
    switch (mode) {
        case AlphaMode::fixed_point: return "fixed_point";
        case AlphaMode::gradient: return "gradient";
        case AlphaMode::frozen: return "frozen";
        case AlphaMode::gamma_prior: return "gamma_prior";
    }
    return "unknown";
}

Vector alpha_fixed_point(const Vector& s2, const Vector& alpha0, double tol, int max_iter) {
    if (s2.size() != alpha0.size()) throw std::invalid_argument("alpha_fixed_point: size mismatch");
    if ((alpha0.array() <= 0.0).any()) throw std::invalid_argument("alpha_fixed_point: alpha0 must be positive");
    if (!s2.allFinite()) throw std::invalid_argument("alpha_fixed_point: non-finite s2");
    Vector alpha = alpha0;
    for (int it = 0; it < max_iter; ++it) {
        const double psi_total = digamma(alpha.sum());
        Vector next(alpha.size());
        for (Eigen::Index k = 0; k < alpha.size(); ++k) next[k] = inverse_digamma(psi_total + s2[k]);
        if (!next.allFinite()) throw ConvergenceError("alpha_fixed_point: non-finite iterate");
        const double change = (next - alpha).cwiseAbs().maxCoeff();
        alpha = std::move(next);
        if (change <= tol) return alpha;
    }
    // The fixed point contracts slowly once alpha is large (nearly equal s2
    // entries). Finish from the last iterate with Newton steps on the same
    // stationarity equations; the Hessian is diagonal plus rank one.
    for (int it = 0; it < max_iter; ++it) {
        const Vector grad = alpha_objective_gradient(s2, alpha);
        const Vector q = -alpha.unaryExpr([](double a) { return trigamma(a); });
        const double z = trigamma(alpha.sum());
        const double b = (grad.array() / q.array()).sum() / (1.0 / z + q.cwiseInverse().sum());
        const Vector step = (grad.array() - b) / q.array();
        double scale = 1.0;
        while ((alpha - scale * step).minCoeff() <= 0.0) scale *= 0.5;
        Vector next = alpha - scale * step;
        if (!next.allFinite()) throw ConvergenceError("alpha_fixed_point: non-finite iterate");
        const double change = (next - alpha).cwiseAbs().maxCoeff();
        alpha = std::move(next);
        if (change <= tol) return alpha;
    }
    throw ConvergenceError("alpha_fixed_point: no convergence after " + std::to_string(max_iter) + " iterations");
}

double alpha_objective(const Vector& s2, const Vector& alpha) {
    double value = alpha.dot(s2) + std::lgamma(alpha.sum());
    for (Eigen::Index k = 0; k < alpha.size(); ++k) value -= std::lgamma(alpha[k]);
    return value;
}

Vector alpha_objective_gradient(const Vector& s2, const Vector& alpha) {
    return (s2 - digamma(alpha)).array() + digamma(alpha.sum());
}

Vector alpha_gradient(const Vector& s2, const Vector& alpha0, double learning_rate, int iters, double floor) {
    if (s2.size() != alpha0.size()) throw std::invalid_argument("alpha_gradient: size mismatch");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("alpha_gradient: learning rate must be positive");
    Vector alpha = alpha0.cwiseMax(floor);
    double value = alpha_objective(s2, alpha);
    int decreases = 0;
    for (int it = 0; it < iters; ++it) {
        Vector next = (alpha + learning_rate * alpha_objective_gradient(s2, alpha)).cwiseMax(floor);
        const double next_value = alpha_objective(s2, next);
        if (!std::isfinite(next_value)) throw ConvergenceError("alpha_gradient: non-finite objective");
        decreases = next_value < value ? decreases + 1 : 0;
        if (decreases >= 5) throw ConvergenceError("alpha_gradient: objective decreased for 5 consecutive steps");
        alpha = std::move(next);
        value = next_value;
    }
    return alpha;
}

ModelParams m_step(const SuffStats& s, AlphaMode mode, const Vector& alpha_init, const AlphaOptions& options) {
    const auto k_topics = s.s1.rows();
    if (s.s2.size() != k_topics || alpha_init.size() != k_topics) throw std::invalid_argument("m_step: shape mismatch");
    if (!s.s2.allFinite()) throw std::invalid_argument("m_step: non-finite s2");

    ModelParams out;
    out.beta.resize(k_topics, s.s1.cols());
    for (Eigen::Index k = 0; k < k_topics; ++k) {
        const double total = s.s1.row(k).sum();
        if (total > 0.0) {
            out.beta.row(k) = s.s1.row(k) / total;
        } else {
            spdlog::warn("m_step: topic {} has no mass; resetting to uniform", k);
            out.beta.row(k).setConstant(1.0 / static_cast<double>(s.s1.cols()));
        }
    }

    switch (mode) {
        case AlphaMode::fixed_point: out.alpha = alpha_fixed_point(s.s2, alpha_init, options.tol, options.max_iter); break;
        case AlphaMode::gradient:
            out.alpha = alpha_gradient(s.s2, alpha_init, options.learning_rate, options.gradient_iters, options.floor);
            break;
        case AlphaMode::frozen: out.alpha = alpha_init; break;
        case AlphaMode::gamma_prior:
            throw std::logic_error("gamma-prior alpha update is not specified; use fixed_point, gradient or frozen");
    }
    return out;
}

double lda_objective(const ModelParams& params, const SuffStats& s) {
    double value = 0.0;
    for (Eigen::Index v = 0; v < s.s1.cols(); ++v)
        for (Eigen::Index k = 0; k < s.s1.rows(); ++k)
            if (s.s1(k, v) != 0.0) value += s.s1(k, v) * std::log(params.beta(k, v));
    return value + alpha_objective(s.s2, params.alpha);
}

double log_joint(const Document& doc, std::span<const int> z, const Vector& theta, const ModelParams& params) {
    const auto k_topics = params.beta.rows();
    if (static_cast<int>(z.size()) != doc.length()) throw std::invalid_argument("log_joint: assignment length");
    if (theta.size() != k_topics) throw std::invalid_argument("log_joint: theta size");
    if ((theta.array() < 0.0).any() || std::abs(theta.sum() - 1.0) > 1e-9)
        throw std::invalid_argument("log_joint: theta is off the simplex");

    double value = std::lgamma(params.alpha.sum());
    for (Eigen::Index k = 0; k < k_topics; ++k) {
        value -= std::lgamma(params.alpha[k]);
        if (params.alpha[k] != 1.0) value += (params.alpha[k] - 1.0) * std::log(theta[k]);
    }
    for (int n = 0; n < doc.length(); ++n) {
        const int k = z[n];
        if (k < 0 || k >= k_topics) throw std::invalid_argument("log_joint: topic id out of range");
        value += std::log(theta[k]) + std::log(params.beta(k, doc.word_ids[n]));
    }
    return value;
}

SuffStats forward_stats(const ModelParams& params, double mean_length) {
    SuffStats s;
    s.s1 = params.beta * (mean_length / static_cast<double>(params.num_topics()));
    s.s2 = digamma(params.alpha).array() - digamma(params.alpha.sum());
    return s;
}

ModelParams random_params(int num_topics, int vocab_size, std::uint64_t seed, double alpha_value) {
    if (num_topics < 1 || vocab_size < 1) throw std::invalid_argument("random_params: empty shape");
    Rng rng(derive_seed({seed, 0x1d17}));
    ModelParams p;
    p.beta.resize(num_topics, vocab_size);
    const Vector flat = Vector::Ones(vocab_size);
    for (int k = 0; k < num_topics; ++k) p.beta.row(k) = sample_dirichlet(flat, rng).transpose();
    p.alpha = Vector::Constant(num_topics, alpha_value);
    return p;
}

ModelParams LdaModel::m_step(const SuffStats& s, const ModelParams& prev) const {
    ModelParams p = oem::m_step(s, mode_, prev.alpha, options_);
    if (beta_floor_ > 0.0) {
        p.beta = p.beta.cwiseMax(beta_floor_);
        for (Eigen::Index k = 0; k < p.beta.rows(); ++k) p.beta.row(k) /= p.beta.row(k).sum();
    }
    return p;
}

void LdaModel::update_mean(Params& mean, const Params& x, std::int64_t n) const {
    const double w = 1.0 / static_cast<double>(n);
    mean.beta += w * (x.beta - mean.beta);
    mean.alpha += w * (x.alpha - mean.alpha);
}

void write_model(const ModelParams& params, std::ostream& out) {
    nlohmann::json header{{"K", params.num_topics()}, {"V", params.vocab_size()}, {"layout", "beta_rows_then_alpha"}};
    out << header.dump() << '\n' << std::setprecision(17);
    for (int k = 0; k < params.num_topics(); ++k) {
        for (int v = 0; v < params.vocab_size(); ++v) out << (v ? " " : "") << params.beta(k, v);
        out << '\n';
    }
    for (int k = 0; k < params.num_topics(); ++k) out << (k ? " " : "") << params.alpha[k];
    out << '\n';
}

void write_model(const ModelParams& params, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_model(params, out);
}

ModelParams read_model(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("read_model: missing header");
    const auto header = nlohmann::json::parse(line);
    const int k_topics = header.at("K").get<int>();
    const int vocab = header.at("V").get<int>();
    if (k_topics < 1 || vocab < 1) throw std::runtime_error("read_model: bad dimensions");
    ModelParams p;
    p.beta.resize(k_topics, vocab);
    p.alpha.resize(k_topics);
    for (int k = 0; k < k_topics; ++k)
        for (int v = 0; v < vocab; ++v)
            if (!(in >> p.beta(k, v))) throw std::runtime_error("read_model: truncated beta");
    for (int k = 0; k < k_topics; ++k)
        if (!(in >> p.alpha[k])) throw std::runtime_error("read_model: truncated alpha");
    return p;
}

ModelParams read_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    return read_model(in);
}

}  // namespace oem
