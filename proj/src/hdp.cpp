#include "oem/hdp.hpp"

#include "oem/gibbs_lda.hpp"
#include "oem/parallel.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace oem {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double hi = std::max(a, b);
    return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

Matrix normalize_rows(const Matrix& m) {
    Matrix out = m;
    for (Eigen::Index k = 0; k < out.rows(); ++k) {
        const double total = out.row(k).sum();
        if (!(total > 0.0)) throw std::runtime_error("hdp: topic " + std::to_string(k) + " has no mass");
        out.row(k) /= total;
    }
    return out;
}

Matrix floor_rows(Matrix beta, double floor) {
    if (floor <= 0.0) return beta;
    beta = beta.cwiseMax(floor);
    for (Eigen::Index k = 0; k < beta.rows(); ++k) beta.row(k) /= beta.row(k).sum();
    return beta;
}

template <class M>
M select_rows(const M& m, const std::vector<int>& keep) {
    M out(static_cast<Eigen::Index>(keep.size()), m.cols());
    for (std::size_t i = 0; i < keep.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(keep[i]);
    return out;
}

Vector select(const Vector& v, const std::vector<int>& keep) {
    Vector out(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t i = 0; i < keep.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[keep[i]];
    return out;
}

// Topics to keep: every topic born in this step, plus older topics whose
// expected tokens per document reach `prune_mass`. At least one survives.
std::vector<int> surviving_topics(const Vector& mass, int num_old, double prune_mass) {
    std::vector<int> keep;
    for (int k = 0; k < mass.size(); ++k)
        if (k >= num_old || mass[k] >= prune_mass) keep.push_back(k);
    if (keep.empty()) {
        Eigen::Index best = 0;
        mass.maxCoeff(&best);
        keep.push_back(static_cast<int>(best));
    }
    return keep;
}

HdpChainView point_view(const HdpParams& params) {
    HdpChainView view;
    view.beta = &params.beta;
    view.pi = &params.pi;
    view.b = params.b;
    view.alpha_conc = params.alpha_conc;
    return view;
}

}  // namespace

void HdpParams::check(double tol) const {
    if (beta.rows() < 1) throw std::logic_error("hdp: no instantiated topic");
    if (pi.size() != beta.rows()) throw std::logic_error("hdp: pi size differs from T");
    if (!(b > 0.0) || !(alpha_conc > 0.0)) throw std::logic_error("hdp: concentrations must be positive");
    check_stick(pi);
    for (Eigen::Index k = 0; k < beta.rows(); ++k)
        if ((beta.row(k).array() < 0.0).any() || std::abs(beta.row(k).sum() - 1.0) > tol)
            throw std::logic_error("hdp: topic " + std::to_string(k) + " is not on the simplex");
}

Vector stick_weights(const Vector& pi_bar) {
    Vector pi(pi_bar.size());
    double remaining = 1.0;
    for (Eigen::Index k = 0; k < pi_bar.size(); ++k) {
        pi[k] = pi_bar[k] * remaining;
        remaining *= 1.0 - pi_bar[k];
    }
    return pi;
}

void check_stick(const Vector& pi) {
    for (Eigen::Index k = 0; k < pi.size(); ++k)
        if (!(pi[k] > 0.0 && pi[k] < 1.0))
            throw std::logic_error("stick weight " + std::to_string(k) + " outside (0, 1): " + std::to_string(pi[k]));
    if (!(pi.sum() < 1.0)) throw std::logic_error("stick weights sum to " + std::to_string(pi.sum()) + " >= 1");
}

HdpParams hdp_m_step(const HdpSuffStats& s, double b, double alpha_conc, const AlphaOptions& options,
                     const Vector* bpi_init) {
    const auto topics = s.s1.size();
    if (topics < 1 || s.s2.rows() != topics) throw std::invalid_argument("hdp_m_step: shape mismatch");
    if (!(b > 0.0)) throw std::invalid_argument("hdp_m_step: b must be positive");
    HdpParams out;
    out.b = b;
    out.alpha_conc = alpha_conc;
    out.beta = normalize_rows(s.s2);

    Vector init = Vector::Constant(topics, b / static_cast<double>(topics + 1));
    if (bpi_init && bpi_init->size() == topics && (bpi_init->array() > 0.0).all()) init = *bpi_init;
    const Vector bpi = alpha_fixed_point(s.s1, init, options.tol, options.max_iter);
    out.pi = bpi / b;
    const double total = out.pi.sum();
    if (total >= 1.0) {
        spdlog::debug("hdp_m_step: stick weights sum to {}; rescaling below 1", total);
        out.pi *= (1.0 - kStickEpsilon) / total;
    }
    return out;
}

HdpParams hdp_initial_params(int vocab_size, const HdpOptions& options, std::uint64_t seed) {
    if (options.initial_topics < 1 || vocab_size < 1) throw std::invalid_argument("hdp: empty initial shape");
    Rng rng(derive_seed({seed, 0x4d9}));
    HdpParams p;
    p.b = options.b;
    p.alpha_conc = options.alpha_conc;
    p.beta.resize(options.initial_topics, vocab_size);
    const Vector flat = Vector::Ones(vocab_size);
    for (int k = 0; k < options.initial_topics; ++k) p.beta.row(k) = sample_dirichlet(flat, rng).transpose();
    p.pi = stick_weights(Vector::Constant(options.initial_topics, 1.0 / (1.0 + options.alpha_conc)));
    return p;
}

// --- Stirling numbers -------------------------------------------------------

void StirlingTable::ensure(int n_max) {
    if (rows_.empty()) rows_.push_back({0.0});
    for (int n = static_cast<int>(rows_.size()); n <= n_max; ++n) {
        const auto& prev = rows_[static_cast<std::size_t>(n - 1)];
        std::vector<double> row(static_cast<std::size_t>(n + 1), kNegInf);
        const double log_n1 = std::log(static_cast<double>(n - 1));
        for (int m = 1; m <= n; ++m) {
            const double stay = m <= n - 1 && n > 1 ? log_n1 + prev[static_cast<std::size_t>(m)] : kNegInf;
            row[static_cast<std::size_t>(m)] = log_add(stay, prev[static_cast<std::size_t>(m - 1)]);
        }
        rows_.push_back(std::move(row));
    }
}

double StirlingTable::log_abs(int n, int m) const {
    if (n < 0 || n > n_max()) throw std::out_of_range("StirlingTable: n outside the cached range");
    if (m < 0 || m > n) return kNegInf;
    return rows_[static_cast<std::size_t>(n)][static_cast<std::size_t>(m)];
}

int sample_table_count(int customers, double concentration, const StirlingTable& table, Rng& rng) {
    if (customers < 0 || !(concentration > 0.0)) throw std::invalid_argument("sample_table_count: bad arguments");
    if (customers <= 1) return customers;
    const double log_c = std::log(concentration);
    std::vector<double> w(static_cast<std::size_t>(customers));
    double hi = kNegInf;
    for (int m = 1; m <= customers; ++m) {
        w[static_cast<std::size_t>(m - 1)] = table.log_abs(customers, m) + m * log_c;
        hi = std::max(hi, w[static_cast<std::size_t>(m - 1)]);
    }
    double total = 0.0;
    for (auto& v : w) total += (v = std::exp(v - hi));
    return sample_index(w, total, rng) + 1;
}

// --- chain ------------------------------------------------------------------

HdpChain::HdpChain(const Document& doc, std::uint64_t seed, const HdpChainView& view, const HdpOptions& options)
    : doc_(&doc), options_(options), rng_(seed), num_global_(static_cast<int>(view.pi->size())) {
    if (doc.empty()) throw std::invalid_argument("hdp: empty document");
    if (options.sweeps < 4) throw std::invalid_argument("hdp: need at least 4 sweeps for a nonempty averaging window");
    if ((view.beta == nullptr) == (view.lambda == nullptr))
        throw std::invalid_argument("hdp: chain view needs exactly one of beta or lambda");
    const Matrix& topics = view.beta ? *view.beta : *view.lambda;
    if (topics.rows() != num_global_) throw std::invalid_argument("hdp: pi size differs from T");

    const int length = doc.length();
    slot_.resize(static_cast<std::size_t>(length));
    for (int n = 0; n < length; ++n) {
        const int w = doc.word_ids[static_cast<std::size_t>(n)];
        if (w < 0 || w >= topics.cols()) throw std::invalid_argument("hdp: word id outside vocabulary");
        auto it = std::find(slot_word_.begin(), slot_word_.end(), w);
        if (it == slot_word_.end()) {
            slot_word_.push_back(w);
            it = slot_word_.end() - 1;
        }
        slot_[static_cast<std::size_t>(n)] = static_cast<int>(it - slot_word_.begin());
    }

    counts_.assign(static_cast<std::size_t>(num_global_), 0);
    alive_.assign(static_cast<std::size_t>(num_global_), 1);
    tables_.assign(static_cast<std::size_t>(num_global_), 0);
    word_counts_.assign(static_cast<std::size_t>(num_global_), std::vector<int>(slot_word_.size(), 0));
    z_.resize(static_cast<std::size_t>(length));
    std::vector<double> w(static_cast<std::size_t>(num_global_));
    for (int n = 0; n < length; ++n) {
        const int word = doc.word_ids[static_cast<std::size_t>(n)];
        double total = 0.0;
        for (int k = 0; k < num_global_; ++k) {
            const double v = view.beta ? (*view.beta)(k, word) : (*view.lambda)(k, word) / (*view.lambda_rowsum)[k];
            total += (w[static_cast<std::size_t>(k)] = v);
        }
        if (!(total > 0.0)) throw std::runtime_error("hdp: topic column of a word is zero");
        add_token(n, sample_index(w, total, rng_));
    }
    resp_sum_ = Matrix::Zero(length, num_global_);
}

int HdpChain::alive_new_topics() const {
    int n = 0;
    for (std::size_t c = static_cast<std::size_t>(num_global_); c < alive_.size(); ++c) n += alive_[c];
    return n;
}

double HdpChain::residual(const HdpChainView& view) const {
    double used = view.pi->sum();
    for (std::size_t j = 0; j < new_pi_.size(); ++j)
        if (alive_[static_cast<std::size_t>(num_global_) + j]) used += new_pi_[j];
    return std::max(0.0, 1.0 - used);
}

void HdpChain::remove_token(int n) {
    const int c = z_[static_cast<std::size_t>(n)];
    --counts_[static_cast<std::size_t>(c)];
    --word_counts_[static_cast<std::size_t>(c)][static_cast<std::size_t>(slot_[static_cast<std::size_t>(n)])];
}

void HdpChain::add_token(int n, int column) {
    z_[static_cast<std::size_t>(n)] = column;
    ++counts_[static_cast<std::size_t>(column)];
    ++word_counts_[static_cast<std::size_t>(column)][static_cast<std::size_t>(slot_[static_cast<std::size_t>(n)])];
}

double HdpChain::weights(int n, const HdpChainView& view, std::vector<double>& out) const {
    const int columns = num_columns();
    const int word = doc_->word_ids[static_cast<std::size_t>(n)];
    const int slot = slot_[static_cast<std::size_t>(n)];
    const Matrix& topics = view.beta ? *view.beta : *view.lambda;
    const double vocab = static_cast<double>(topics.cols());
    out.assign(static_cast<std::size_t>(columns + 1), 0.0);
    double total = 0.0;
    for (int c = 0; c < columns; ++c) {
        if (!alive_[static_cast<std::size_t>(c)]) continue;
        const bool global = c < num_global_;
        const double pi_c = global ? (*view.pi)[c] : new_pi_[static_cast<std::size_t>(c - num_global_)];
        const double count = counts_[static_cast<std::size_t>(c)];
        double lik;
        if (view.beta) {
            lik = global ? (*view.beta)(c, word) : 1.0 / vocab;
        } else {
            const double wc = word_counts_[static_cast<std::size_t>(c)][static_cast<std::size_t>(slot)];
            lik = global ? (wc + (*view.lambda)(c, word)) / (count + (*view.lambda_rowsum)[c])
                         : (wc + view.eta) / (count + vocab * view.eta);
        }
        total += (out[static_cast<std::size_t>(c)] = (count + view.b * pi_c) * lik);
    }
    const bool can_grow = options_.allow_growth && num_global_ + alive_new_topics() < options_.t_max;
    if (can_grow) total += (out[static_cast<std::size_t>(columns)] = view.b * residual(view) / vocab);
    return total;
}

int HdpChain::open_topic(const HdpChainView& view) {
    const double pi_bar = sample_beta(1.0, view.alpha_conc, rng_);
    const double pi = pi_bar * residual(view);
    new_pi_.push_back(pi);
    new_pi_bar_.push_back(pi_bar);
    counts_.push_back(0);
    alive_.push_back(1);
    tables_.push_back(0);
    word_counts_.emplace_back(slot_word_.size(), 0);
    resp_sum_.conservativeResize(Eigen::NoChange, resp_sum_.cols() + 1);
    resp_sum_.col(resp_sum_.cols() - 1).setZero();
    return num_columns() - 1;
}

Vector HdpChain::conditional(int n, const HdpChainView& view) {
    std::vector<double> w;
    remove_token(n);
    const double total = weights(n, view, w);
    add_token(n, z_[static_cast<std::size_t>(n)]);
    Vector out = Eigen::Map<Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
    return out / total;
}

void HdpChain::sweep(const HdpChainView& view) {
    if (view.pi->size() != num_global_) throw std::invalid_argument("hdp: global topic count changed mid-chain");
    const int length = doc_->length();
    std::vector<int> order(static_cast<std::size_t>(length));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng_);
    std::vector<double> w;
    for (int n : order) {
        const int old = z_[static_cast<std::size_t>(n)];
        remove_token(n);
        if (old >= num_global_ && counts_[static_cast<std::size_t>(old)] == 0) alive_[static_cast<std::size_t>(old)] = 0;
        const double total = weights(n, view, w);
        if (!(total > 0.0) || !std::isfinite(total)) throw std::runtime_error("hdp: conditional has no mass");
        int c = sample_index(w, total, rng_);
        if (c == num_columns()) c = open_topic(view);
        add_token(n, c);
    }
    if (view.stirling) {
        for (int c = 0; c < num_columns(); ++c) {
            if (!alive_[static_cast<std::size_t>(c)]) {
                tables_[static_cast<std::size_t>(c)] = 0;
                continue;
            }
            const double pi_c = c < num_global_ ? (*view.pi)[c] : new_pi_[static_cast<std::size_t>(c - num_global_)];
            tables_[static_cast<std::size_t>(c)] =
                sample_table_count(counts_[static_cast<std::size_t>(c)], view.b * pi_c, *view.stirling, rng_);
        }
    }
    ++done_;
    if (done_ >= window_start(options_.sweeps)) {
        snapshot(view);
        ++window_;
    }
}

void HdpChain::snapshot(const HdpChainView& view) {
    const int columns = num_columns();
    if (view.beta) {
        std::vector<double> w;
        for (int n = 0; n < doc_->length(); ++n) {
            const int own = z_[static_cast<std::size_t>(n)];
            remove_token(n);
            double total = weights(n, view, w);
            add_token(n, own);
            total -= w[static_cast<std::size_t>(columns)];
            if (!(total > 0.0)) continue;
            for (int c = 0; c < columns; ++c) resp_sum_(n, c) += w[static_cast<std::size_t>(c)] / total;
        }
    } else {
        for (int n = 0; n < doc_->length(); ++n) resp_sum_(n, z_[static_cast<std::size_t>(n)]) += 1.0;
    }
    count_history_.push_back(counts_);
    table_sum_.resize(static_cast<std::size_t>(columns), 0.0);
    for (int c = 0; c < columns; ++c) table_sum_[static_cast<std::size_t>(c)] += tables_[static_cast<std::size_t>(c)];
}

HdpLocalEstimate HdpChain::final_estimate() const {
    if (window_ == 0) throw std::logic_error("hdp: estimate requested before the averaging window");
    std::vector<int> keep;
    for (int c = 0; c < num_columns(); ++c)
        if (c < num_global_ || alive_[static_cast<std::size_t>(c)]) keep.push_back(c);
    const auto cols = static_cast<Eigen::Index>(keep.size());

    HdpLocalEstimate est;
    est.num_global = num_global_;
    est.length = doc_->length();
    est.responsibilities.resize(doc_->length(), cols);
    est.window_counts = Matrix::Zero(window_, cols);
    est.tables = Vector::Zero(cols);
    for (Eigen::Index i = 0; i < cols; ++i) {
        const int c = keep[static_cast<std::size_t>(i)];
        est.responsibilities.col(i) = resp_sum_.col(c) / window_;
        for (int t = 0; t < window_; ++t) {
            const auto& h = count_history_[static_cast<std::size_t>(t)];
            if (static_cast<std::size_t>(c) < h.size()) est.window_counts(t, i) = h[static_cast<std::size_t>(c)];
        }
        if (static_cast<std::size_t>(c) < table_sum_.size()) est.tables[i] = table_sum_[static_cast<std::size_t>(c)] / window_;
    }
    const auto n_new = cols - num_global_;
    est.new_pi_bar.resize(n_new);
    est.new_token_counts.resize(n_new);
    for (Eigen::Index j = 0; j < n_new; ++j) {
        const int c = keep[static_cast<std::size_t>(num_global_ + j)];
        est.new_pi_bar[j] = new_pi_bar_[static_cast<std::size_t>(c - num_global_)];
        est.new_token_counts[j] = counts_[static_cast<std::size_t>(c)];
    }
    return est;
}

HdpLocalEstimate hdp_gibbs_estep(const Document& doc, const HdpParams& params, const HdpOptions& options,
                                 std::uint64_t seed) {
    const HdpChainView view = point_view(params);
    HdpChain chain(doc, seed, view, options);
    for (int t = 0; t < options.sweeps; ++t) chain.sweep(view);
    return chain.final_estimate();
}

// --- reconciliation ---------------------------------------------------------

std::vector<std::vector<int>> reconcile_new_topics(std::span<const HdpLocalEstimate> ests, int num_global,
                                                   const HdpOptions& options) {
    std::vector<std::vector<int>> map(ests.size());
    const int capacity = std::max(0, std::min(options.max_new_topics_per_minibatch, options.t_max - num_global));
    int accepted = 0;
    bool capped = false;
    for (std::size_t d = 0; d < ests.size(); ++d) {
        const auto n_new = ests[d].new_token_counts.size();
        map[d].assign(static_cast<std::size_t>(n_new), -1);
        for (Eigen::Index j = 0; j < n_new; ++j) {
            if (ests[d].new_token_counts[j] < options.min_new_topic_tokens) continue;
            if (accepted >= capacity) {
                capped = capped || num_global + accepted >= options.t_max;
                continue;
            }
            map[d][static_cast<std::size_t>(j)] = num_global + accepted++;
        }
    }
    if (capped) spdlog::warn("hdp: topic cap T_max={} reached; new topics dropped", options.t_max);
    return map;
}

Vector extend_pi(const Vector& pi, std::span<const HdpLocalEstimate> ests,
                 const std::vector<std::vector<int>>& column_map, int num_new) {
    Vector out(pi.size() + num_new);
    out.head(pi.size()) = pi;
    double residual = 1.0 - pi.sum();
    for (std::size_t d = 0; d < ests.size(); ++d)
        for (std::size_t j = 0; j < column_map[d].size(); ++j) {
            const int id = column_map[d][j];
            if (id < 0) continue;
            out[id] = ests[d].new_pi_bar[static_cast<Eigen::Index>(j)] * residual;
            residual -= out[id];
        }
    return out;
}

namespace {

int count_new(const std::vector<std::vector<int>>& map) {
    int n = 0;
    for (const auto& m : map)
        for (int id : m) n += id >= 0;
    return n;
}

// Global id of each estimate column, -1 when dropped.
std::vector<int> column_targets(const HdpLocalEstimate& est, const std::vector<int>& map) {
    std::vector<int> target(static_cast<std::size_t>(est.responsibilities.cols()));
    for (int c = 0; c < static_cast<int>(target.size()); ++c)
        target[static_cast<std::size_t>(c)] = c < est.num_global ? c : map[static_cast<std::size_t>(c - est.num_global)];
    return target;
}

// Adds weight * (row-renormalized responsibilities over kept columns) into s2.
void scatter_tokens(Matrix& s2, const Document& doc, const HdpLocalEstimate& est, const std::vector<int>& target,
                    double weight) {
    for (int n = 0; n < doc.length(); ++n) {
        double kept = 0.0;
        for (std::size_t c = 0; c < target.size(); ++c)
            if (target[c] >= 0) kept += est.responsibilities(n, static_cast<Eigen::Index>(c));
        if (!(kept > 0.0)) continue;
        const int w = doc.word_ids[static_cast<std::size_t>(n)];
        for (std::size_t c = 0; c < target.size(); ++c)
            if (target[c] >= 0) s2(target[c], w) += weight * est.responsibilities(n, static_cast<Eigen::Index>(c)) / kept;
    }
}

}  // namespace

HdpEstimate merge_hdp_estimates(std::span<const Document> docs, std::span<const HdpLocalEstimate> ests,
                                const HdpParams& params, const HdpOptions& options) {
    if (docs.empty() || docs.size() != ests.size()) throw std::invalid_argument("merge_hdp_estimates: ragged minibatch");
    const int num_global = params.num_topics();
    const auto map = reconcile_new_topics(ests, num_global, options);
    const int num_new = count_new(map);
    const int topics = num_global + num_new;

    HdpEstimate out;
    out.num_new = num_new;
    out.pi = extend_pi(params.pi, ests, map, num_new);
    out.stats.s1 = Vector::Zero(topics);
    out.stats.s2 = Matrix::Zero(topics, params.vocab_size());
    const double weight = 1.0 / static_cast<double>(docs.size());
    const double b = params.b;
    const double bpi_total = b * out.pi.sum();

    Vector counts(topics);
    for (std::size_t d = 0; d < docs.size(); ++d) {
        const auto& est = ests[d];
        const auto target = column_targets(est, map[d]);
        scatter_tokens(out.stats.s2, docs[d], est, target, weight);

        const double psi_total = digamma(bpi_total + est.length);
        const auto window = est.window_counts.rows();
        Vector s1 = Vector::Zero(topics);
        for (Eigen::Index t = 0; t < window; ++t) {
            counts.setZero();
            for (std::size_t c = 0; c < target.size(); ++c)
                if (target[c] >= 0) counts[target[c]] += est.window_counts(t, static_cast<Eigen::Index>(c));
            for (int k = 0; k < topics; ++k) s1[k] += digamma(b * out.pi[k] + counts[k]) - psi_total;
        }
        out.stats.s1 += weight * s1 / static_cast<double>(window);
    }
    return out;
}

// --- G-OEM session and model ------------------------------------------------

HdpGibbsSession::HdpGibbsSession(std::span<const Document> docs, std::uint64_t base_seed, std::int64_t first_doc,
                                 const HdpParams& params, const HdpOptions& options, int threads)
    : docs_(docs), options_(options), threads_(threads), params_(&params) {
    const HdpChainView view = point_view(params);
    chains_.reserve(docs.size());
    for (std::size_t j = 0; j < docs.size(); ++j)
        chains_.emplace_back(docs[j], derive_seed({base_seed, static_cast<std::uint64_t>(first_doc) + j}), view, options);
}

void HdpGibbsSession::sweep(const HdpParams& params) {
    params_ = &params;
    const HdpChainView view = point_view(params);
    for_each_index(chains_.size(), threads_, [&](std::size_t j) { chains_[j].sweep(view); });
}

HdpEstimate HdpGibbsSession::current_estimate() const {
    throw std::logic_error("hdp: boosting is not defined for a growing topic set");
}

HdpEstimate HdpGibbsSession::final_estimate() const {
    std::vector<HdpLocalEstimate> ests(chains_.size());
    for_each_index(chains_.size(), threads_, [&](std::size_t j) { ests[j] = chains_[j].final_estimate(); });
    return merge_hdp_estimates(docs_, ests, *params_, options_);
}

HdpSuffStats HdpModel::initial_stats(const Params& p) const {
    HdpSuffStats s;
    s.s2 = p.beta * (mean_length_ / p.num_topics());
    s.s1 = digamma(p.b * p.pi).array() - digamma(p.b * p.pi.sum());
    return s;
}

HdpSuffStats HdpModel::blend(const Stats& prev, const Estimate& hat, double rho) const {
    const int old_topics = prev.num_topics();
    const int topics = hat.stats.num_topics();
    if (topics != old_topics + hat.num_new || prev.s2.cols() != hat.stats.s2.cols())
        throw std::invalid_argument("hdp blend: shape mismatch");
    if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("hdp blend: rho must lie in (0, 1]");

    HdpSuffStats padded;
    padded.s2 = Matrix::Zero(topics, prev.s2.cols());
    padded.s2.topRows(old_topics) = prev.s2;
    padded.s1.resize(topics);
    padded.s1.head(old_topics) = prev.s1;
    const double psi_total = digamma(options_.b * hat.pi.sum());
    for (int k = old_topics; k < topics; ++k) padded.s1[k] = digamma(options_.b * hat.pi[k]) - psi_total;

    HdpSuffStats s;
    if (rho == 1.0) {
        s = hat.stats;
    } else {
        s.s1 = (1.0 - rho) * padded.s1 + rho * hat.stats.s1;
        s.s2 = ((1.0 - rho) * padded.s2 + rho * hat.stats.s2).cwiseMax(0.0);
    }
    const Vector mass = s.s2.rowwise().sum();
    const auto keep = surviving_topics(mass, old_topics, options_.prune_mass);
    if (static_cast<int>(keep.size()) == topics) return s;
    return {select(s.s1, keep), select_rows(s.s2, keep)};
}

HdpParams HdpModel::m_step(const Stats& s, const Params& prev) const {
    const Vector bpi = prev.b * prev.pi;
    HdpParams out = hdp_m_step(s, options_.b, options_.alpha_conc, options_.fixed_point, &bpi);
    out.beta = floor_rows(std::move(out.beta), options_.beta_floor);
    out.check();
    return out;
}

// --- Bayesian variant -------------------------------------------------------

Vector HdpBayesParams::expected_pi() const {
    return stick_weights((a.array() / (a.array() + b_stick.array())).matrix());
}

HdpParams HdpBayesParams::point() const {
    HdpParams p;
    p.beta = normalize_rows(lambda);
    p.pi = expected_pi();
    p.b = b;
    p.alpha_conc = alpha_conc;
    return p;
}

HdpVarGibbsSession::HdpVarGibbsSession(std::span<const Document> docs, std::uint64_t base_seed,
                                       std::int64_t first_doc, const HdpBayesParams& params,
                                       const HdpOptions& options, double corpus_size, int threads)
    : docs_(docs),
      options_(options),
      corpus_size_(corpus_size),
      threads_(threads),
      rng_(derive_seed({base_seed, static_cast<std::uint64_t>(first_doc), 0x57})),
      params_(&params) {
    int longest = 0;
    for (const auto& d : docs) longest = std::max(longest, d.length());
    stirling_.ensure(longest);
    lambda_rowsum_ = params.lambda.rowwise().sum();
    pi_ = params.expected_pi();
    const HdpChainView v = view(params);
    chains_.reserve(docs.size());
    for (std::size_t j = 0; j < docs.size(); ++j)
        chains_.emplace_back(docs[j], derive_seed({base_seed, static_cast<std::uint64_t>(first_doc) + j}), v, options);
}

HdpChainView HdpVarGibbsSession::view(const HdpBayesParams& params) const {
    HdpChainView v;
    v.lambda = &params.lambda;
    v.lambda_rowsum = &lambda_rowsum_;
    v.pi = &pi_;
    v.b = params.b;
    v.alpha_conc = params.alpha_conc;
    v.eta = params.eta;
    v.stirling = &stirling_;
    return v;
}

void HdpVarGibbsSession::sweep(const HdpBayesParams& params) {
    params_ = &params;
    const HdpChainView v = view(params);
    for_each_index(chains_.size(), threads_, [&](std::size_t j) { chains_[j].sweep(v); });

    // Stick fractions of the global topics given this sweep's table counts.
    const int topics = params.num_topics();
    Vector tables = Vector::Zero(topics);
    Vector tail = Vector::Zero(topics);  // tables at topics after k (including doc-local ones)
    for (const auto& chain : chains_) {
        const auto& t = chain.last_tables();
        double after = 0.0;
        for (int c = static_cast<int>(t.size()) - 1; c >= 0; --c) {
            if (c < topics) {
                tables[c] += t[static_cast<std::size_t>(c)];
                tail[c] += after;
            }
            after += t[static_cast<std::size_t>(c)];
        }
    }
    Vector pi_bar(topics);
    for (int k = 0; k < topics; ++k)
        pi_bar[k] = sample_beta(params.a[k] + tables[k], params.b_stick[k] - params.alpha_conc + 1.0 + tail[k], rng_);
    pi_ = stick_weights(pi_bar);
}

HdpBayesEstimate HdpVarGibbsSession::current_estimate() const {
    throw std::logic_error("hdp: boosting is not defined for a growing topic set");
}

HdpBayesEstimate HdpVarGibbsSession::final_estimate() const {
    std::vector<HdpLocalEstimate> ests(chains_.size());
    for_each_index(chains_.size(), threads_, [&](std::size_t j) { ests[j] = chains_[j].final_estimate(); });
    const int num_global = params_->num_topics();
    const auto map = reconcile_new_topics(ests, num_global, options_);
    const int num_new = count_new(map);
    const int topics = num_global + num_new;
    const double weight = 1.0 / static_cast<double>(docs_.size());

    Matrix counts = Matrix::Zero(topics, params_->lambda.cols());
    Vector tables = Vector::Zero(topics);
    for (std::size_t d = 0; d < ests.size(); ++d) {
        const auto target = column_targets(ests[d], map[d]);
        scatter_tokens(counts, docs_[d], ests[d], target, weight);
        for (std::size_t c = 0; c < target.size(); ++c)
            if (target[c] >= 0) tables[target[c]] += weight * ests[d].tables[static_cast<Eigen::Index>(c)];
    }
    HdpBayesEstimate out;
    out.num_new = num_new;
    out.hat.lambda = (corpus_size_ * counts).array() + params_->eta;
    out.hat.a = (corpus_size_ * tables).array() + 1.0;
    out.hat.b_stick.resize(topics);
    double after = 0.0;
    for (int k = topics - 1; k >= 0; --k) {
        out.hat.b_stick[k] = params_->alpha_conc + corpus_size_ * after;
        after += tables[k];
    }
    return out;
}

HdpBayesStats HdpBayesModel::blend(const Stats& prev, const Estimate& hat, double rho) const {
    const auto old_topics = prev.lambda.rows();
    const auto topics = hat.hat.lambda.rows();
    if (topics != old_topics + hat.num_new) throw std::invalid_argument("hdp blend: shape mismatch");
    if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("hdp blend: rho must lie in (0, 1]");

    HdpBayesStats padded;
    padded.lambda = Matrix::Constant(topics, prev.lambda.cols(), options_.eta);
    padded.lambda.topRows(old_topics) = prev.lambda;
    padded.a = Vector::Ones(topics);
    padded.a.head(old_topics) = prev.a;
    padded.b_stick = Vector::Constant(topics, options_.alpha_conc);
    padded.b_stick.head(old_topics) = prev.b_stick;

    HdpBayesStats s;
    s.lambda = (1.0 - rho) * padded.lambda + rho * hat.hat.lambda;
    s.a = (1.0 - rho) * padded.a + rho * hat.hat.a;
    s.b_stick = (1.0 - rho) * padded.b_stick + rho * hat.hat.b_stick;

    const double prior_mass = options_.eta * static_cast<double>(s.lambda.cols());
    const Vector mass = (s.lambda.rowwise().sum().array() - prior_mass) / corpus_size_;
    const auto keep = surviving_topics(mass, static_cast<int>(old_topics), options_.prune_mass);
    if (static_cast<Eigen::Index>(keep.size()) == topics) return s;
    return {select_rows(s.lambda, keep), select(s.a, keep), select(s.b_stick, keep)};
}

HdpBayesParams HdpBayesModel::m_step(const Stats& s, const Params& prev) const {
    HdpBayesParams p = prev;
    p.lambda = s.lambda;
    p.a = s.a;
    p.b_stick = s.b_stick;
    if ((p.lambda.array() <= 0.0).any() || (p.a.array() <= 0.0).any() || (p.b_stick.array() <= 0.0).any())
        throw std::logic_error("hdp: variational parameters must stay positive");
    check_stick(p.expected_pi());
    return p;
}

HdpBayesParams HdpBayesModel::initial_params(const HdpParams& start, double mean_length) const {
    HdpBayesParams p;
    p.lambda = (start.beta * (corpus_size_ * mean_length / start.num_topics())).array() + options_.eta;
    p.a = Vector::Ones(start.num_topics());
    p.b_stick = Vector::Constant(start.num_topics(), options_.alpha_conc);
    p.b = options_.b;
    p.alpha_conc = options_.alpha_conc;
    p.eta = options_.eta;
    return p;
}

// --- evaluation and serialization -------------------------------------------

ModelParams hdp_as_lda(const HdpParams& params) {
    return {params.beta, params.b * params.pi / params.pi.sum()};
}

PerplexityReport hdp_evaluate(std::span<const Document> docs, const HdpParams& params, int particles,
                              std::uint64_t seed, int threads) {
    if (params.num_topics() < 1) throw std::invalid_argument("hdp_evaluate: no topics");
    return perplexity(docs, hdp_as_lda(params), particles, seed, threads);
}

void write_hdp_model(const HdpParams& params, std::ostream& out) {
    nlohmann::json header{{"T", params.num_topics()},
                          {"V", params.vocab_size()},
                          {"b", params.b},
                          {"alpha_conc", params.alpha_conc},
                          {"layout", "beta_rows_then_pi"}};
    out << header.dump() << '\n' << std::setprecision(17);
    for (int k = 0; k < params.num_topics(); ++k) {
        for (int v = 0; v < params.vocab_size(); ++v) out << (v ? " " : "") << params.beta(k, v);
        out << '\n';
    }
    for (int k = 0; k < params.num_topics(); ++k) out << (k ? " " : "") << params.pi[k];
    out << '\n';
}

void write_hdp_model(const HdpParams& params, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_hdp_model(params, out);
}

HdpParams read_hdp_model(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("read_hdp_model: missing header");
    const auto header = nlohmann::json::parse(line);
    const int topics = header.at("T").get<int>();
    const int vocab = header.at("V").get<int>();
    HdpParams p;
    p.b = header.at("b").get<double>();
    p.alpha_conc = header.at("alpha_conc").get<double>();
    p.beta.resize(topics, vocab);
    p.pi.resize(topics);
    for (int k = 0; k < topics; ++k)
        for (int v = 0; v < vocab; ++v)
            if (!(in >> p.beta(k, v))) throw std::runtime_error("read_hdp_model: truncated beta");
    for (int k = 0; k < topics; ++k)
        if (!(in >> p.pi[k])) throw std::runtime_error("read_hdp_model: truncated pi");
    return p;
}

}  // namespace oem
