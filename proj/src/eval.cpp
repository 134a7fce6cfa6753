#include "oem/eval.hpp"

#include "oem/gibbs_lda.hpp"
#include "oem/parallel.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace oem {

namespace {

void check_eval_inputs(const Document& doc, const ModelParams& params) {
    if (doc.empty()) throw std::invalid_argument("evaluation: empty document");
    for (auto w : doc.word_ids)
        if (w < 0 || w >= params.vocab_size()) throw std::invalid_argument("evaluation: word id outside vocabulary");
    if (params.alpha.size() != params.beta.rows()) throw std::invalid_argument("evaluation: alpha size differs from K");
}

}  // namespace

double left_to_right(const Document& doc, const ModelParams& params, int particles, std::uint64_t seed) {
    check_eval_inputs(doc, params);
    if (particles < 1) throw std::invalid_argument("left_to_right: need at least one particle");
    const int k_topics = params.num_topics();
    const int length = doc.length();
    const double alpha_total = params.alpha.sum();
    const auto n_particles = static_cast<std::size_t>(particles);
    Rng rng(seed);

    std::vector<std::vector<int>> z(n_particles, std::vector<int>(static_cast<std::size_t>(length)));
    std::vector<std::vector<int>> counts(n_particles, std::vector<int>(static_cast<std::size_t>(k_topics), 0));
    std::vector<double> w(static_cast<std::size_t>(k_topics));
    std::vector<double> mass(n_particles);
    std::vector<std::size_t> parent(n_particles);
    double log_lik = 0.0;

    for (int n = 0; n < length; ++n) {
        const int word = doc.word_ids[static_cast<std::size_t>(n)];
        double p_n = 0.0;
        for (std::size_t r = 0; r < n_particles; ++r) {
            auto& zr = z[r];
            auto& cr = counts[r];
            // one Gibbs pass over the prefix
            for (int m = 0; m < n; ++m) {
                const int word_m = doc.word_ids[static_cast<std::size_t>(m)];
                int& zm = zr[static_cast<std::size_t>(m)];
                --cr[static_cast<std::size_t>(zm)];
                double total = 0.0;
                for (int k = 0; k < k_topics; ++k)
                    total += (w[static_cast<std::size_t>(k)] = params.beta(k, word_m) * (cr[static_cast<std::size_t>(k)] + params.alpha[k]));
                zm = sample_index(w, total, rng);
                ++cr[static_cast<std::size_t>(zm)];
            }
            double total = 0.0;
            for (int k = 0; k < k_topics; ++k) total += params.beta(k, word) * (cr[static_cast<std::size_t>(k)] + params.alpha[k]);
            if (!(total > 0.0)) throw std::runtime_error("left_to_right: word has zero probability under every topic");
            mass[r] = total;
            p_n += total / (n + alpha_total);
        }
        log_lik += std::log(p_n / particles);
        if (n + 1 == length) break;

        // Resample in proportion to p(x_n | prefix) so the prefixes follow
        // p(z_<=n | x_<=n); without this the estimate is biased low.
        double mass_total = 0.0;
        for (double m : mass) mass_total += m;
        for (std::size_t r = 0; r < n_particles; ++r) parent[r] = static_cast<std::size_t>(sample_index(mass, mass_total, rng));
        auto z_old = z;
        auto counts_old = counts;
        for (std::size_t r = 0; r < n_particles; ++r) {
            z[r] = z_old[parent[r]];
            counts[r] = counts_old[parent[r]];
            auto& cr = counts[r];
            double total = 0.0;
            for (int k = 0; k < k_topics; ++k)
                total += (w[static_cast<std::size_t>(k)] = params.beta(k, word) * (cr[static_cast<std::size_t>(k)] + params.alpha[k]));
            const int k = sample_index(w, total, rng);
            z[r][static_cast<std::size_t>(n)] = k;
            ++cr[static_cast<std::size_t>(k)];
        }
    }
    return log_lik;
}

double exact_loglik_quadrature(const Document& doc, const ModelParams& params) {
    check_eval_inputs(doc, params);
    if (params.num_topics() != 2) throw std::invalid_argument("exact_loglik_quadrature: requires K = 2");
    const double a1 = params.alpha[0];
    const double a2 = params.alpha[1];
    const double log_norm = std::lgamma(a1 + a2) - std::lgamma(a1) - std::lgamma(a2);
    std::vector<double> b1, b2;
    for (auto w : doc.word_ids) {
        b1.push_back(params.beta(0, w));
        b2.push_back(params.beta(1, w));
    }
    auto log_mix = [&](double t) {
        double v = 0.0;
        for (std::size_t n = 0; n < b1.size(); ++n) v += std::log(t * b1[n] + (1.0 - t) * b2[n]);
        return v;
    };
    // Split at 1/2 and substitute t = u^(1/a1) on the left, 1 - t = u^(1/a2) on
    // the right; the Dirichlet endpoint factors cancel and both integrands are smooth:
    //   int_0^{1/2} t^(a1-1) g(t) dt = (1/a1) int_0^{2^-a1} g(u^(1/a1)) du
    auto left = [&](double u) {
        const double t = std::pow(u, 1.0 / a1);
        return (a2 - 1.0) * std::log1p(-t) + log_mix(t);
    };
    auto right = [&](double u) {
        const double s = std::pow(u, 1.0 / a2);
        return (a1 - 1.0) * std::log1p(-s) + log_mix(1.0 - s);
    };
    const double u_left = std::pow(0.5, a1);
    const double u_right = std::pow(0.5, a2);
    double shift = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 200; ++i) {
        shift = std::max(shift, left(u_left * i / 200.0));
        shift = std::max(shift, right(u_right * i / 200.0));
    }
    boost::math::quadrature::tanh_sinh<double> integrator;
    const double lv = integrator.integrate([&](double u) { return std::exp(left(u) - shift); }, 0.0, u_left, 1e-12);
    const double rv = integrator.integrate([&](double u) { return std::exp(right(u) - shift); }, 0.0, u_right, 1e-12);
    return log_norm + shift + std::log(lv / a1 + rv / a2);
}

double exact_loglik_enumeration(const Document& doc, const ModelParams& params) {
    return enumerate_posterior(doc, params).log_evidence;
}

void PerplexityReport::write_csv(std::ostream& out) const {
    out << "doc_id,log_lik\n" << std::setprecision(17);
    for (std::size_t d = 0; d < per_doc_log_lik.size(); ++d) out << d << ',' << per_doc_log_lik[d] << '\n';
}

std::string PerplexityReport::summary_json() const {
    nlohmann::json j{{"mean_log_perplexity", mean_log_perplexity},
                     {"n_docs", per_doc_log_lik.size()},
                     {"n_particles", n_particles},
                     {"seed", seed}};
    return j.dump(2);
}

PerplexityReport perplexity(std::span<const Document> docs, const ModelParams& params, int particles,
                            std::uint64_t seed, int threads) {
    if (docs.empty()) throw std::invalid_argument("perplexity: no documents");
    PerplexityReport report;
    report.n_particles = particles;
    report.seed = seed;
    report.per_doc_log_lik.resize(docs.size());
    for_each_index(docs.size(), threads, [&](std::size_t d) {
        report.per_doc_log_lik[d] = left_to_right(docs[d], params, particles, derive_seed({seed, d}));
    });
    double total = 0.0;
    for (double v : report.per_doc_log_lik) total += v;
    report.mean_log_perplexity = -total / static_cast<double>(docs.size());
    return report;
}

std::vector<int> hungarian(const Matrix& cost) {
    const int n = static_cast<int>(cost.rows());
    if (cost.cols() != n) throw std::invalid_argument("hungarian: cost matrix must be square");
    if (n == 0) return {};
    // Shortest augmenting path with potentials; rows/cols are 1-based inside.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> assignment(n);
    for (int j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
    return assignment;
}

double kl_divergence(const Eigen::Ref<const Eigen::RowVectorXd>& p, const Eigen::Ref<const Eigen::RowVectorXd>& q,
                     double floor) {
    if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: size mismatch");
    double value = 0.0;
    for (Eigen::Index v = 0; v < p.size(); ++v) {
        if (p[v] <= 0.0) continue;
        value += p[v] * (std::log(std::max(p[v], floor)) - std::log(std::max(q[v], floor)));
    }
    return value;
}

TopicMatching match_topics(const Matrix& beta_a, const Matrix& beta_b) {
    if (beta_a.rows() != beta_b.rows() || beta_a.cols() != beta_b.cols())
        throw std::invalid_argument("match_topics: dimension mismatch");
    TopicMatching out;
    const auto k_topics = beta_a.rows();
    out.divergence.resize(k_topics, k_topics);
    for (Eigen::Index i = 0; i < k_topics; ++i)
        for (Eigen::Index j = 0; j < k_topics; ++j) out.divergence(i, j) = kl_divergence(beta_a.row(i), beta_b.row(j));
    out.assignment = hungarian(out.divergence);
    for (Eigen::Index i = 0; i < k_topics; ++i) out.cost += out.divergence(i, out.assignment[static_cast<std::size_t>(i)]);
    return out;
}

}  // namespace oem
