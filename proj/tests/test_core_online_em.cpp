#include "oem/core_online_em.hpp"
#include "oem/corpus.hpp"
#include "oem/eval.hpp"
#include "oem/gibbs_lda.hpp"
#include "oem/lda_family.hpp"
#include "oem/variational_lda.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace oem;

namespace {

// Toy policy whose "M-step" is the identity, so params track s exactly.
struct ToyModel {
    using Params = Vector;
    using Stats = Vector;
    using Estimate = Vector;

    Stats initial_stats(const Params& p) const { return p; }
    Stats blend(const Stats& prev, const Estimate& hat, double rho) const { return (1.0 - rho) * prev + rho * hat; }
    Params m_step(const Stats& s, const Params&) const { return s; }
    const Params& local(const Params& p) const { return p; }
    void update_mean(Params& mean, const Params& x, std::int64_t n) const {
        mean += (x - mean) / static_cast<double>(n);
    }
};

// Estimate of a minibatch: mean document length and mean first word id,
// plus the parameter value seen (so boosting becomes observable).
struct ToySession {
    std::span<const Document> docs;
    int sweeps_done = 0;
    double seen = 0.0;
    std::vector<double>* log = nullptr;

    void sweep(const Vector& p) {
        ++sweeps_done;
        seen = p[0];
        if (log) log->push_back(p[0]);
    }
    Vector estimate() const {
        Vector v = Vector::Zero(2);
        for (const auto& d : docs) {
            v[0] += d.length();
            v[1] += d.word_ids.front();
        }
        return v / static_cast<double>(docs.size());
    }
    Vector current_estimate() const { return estimate() + Vector::Constant(2, sweeps_done); }
    Vector final_estimate() const { return estimate(); }
};

struct ToyBackend {
    int p = 3;
    std::vector<double>* log = nullptr;
    std::int64_t fail_at = -1;
    std::vector<std::int64_t> first_docs;

    int sweeps() const { return p; }
    ToySession open(std::span<const Document> docs, std::int64_t first_doc, const Vector&) {
        first_docs.push_back(first_doc);
        if (first_doc == fail_at) throw std::runtime_error("backend failure");
        return ToySession{docs, 0, 0.0, log};
    }
};

std::vector<Document> toy_stream(int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Document> docs;
    for (int i = 0; i < n; ++i) docs.push_back(test::random_doc(1 + static_cast<int>(rng() % 7), 20, rng));
    return docs;
}

}  // namespace

TEST_CASE("step_size examples") {
    CHECK(step_size({0.5, 0}, 4) == doctest::Approx(0.5));
    CHECK(step_size({1.0, 0}, 1) == 1.0);
    CHECK(step_size({1.0, 0}, 3) == doctest::Approx(1.0 / 3.0));
    CHECK(step_size({0.5, 3}, 1) == doctest::Approx(0.5));
}

TEST_CASE("step_size rejects bad input") {
    CHECK_THROWS_AS(step_size({0.5, 0}, 0), std::invalid_argument);
    CHECK_THROWS_AS(step_size({0.0, 0}, 1), std::invalid_argument);
    CHECK_THROWS_AS(step_size({1.5, 0}, 1), std::invalid_argument);
    CHECK_THROWS_AS(step_size({0.5, -1}, 1), std::invalid_argument);
}

TEST_CASE("step_size stays in (0, 1]") {
    for (double kappa : {0.1, 0.5, 0.75, 1.0})
        for (std::int64_t i = 1; i < 2000; i += 37) {
            const double r = step_size({kappa, 0}, i);
            CHECK(r > 0.0);
            CHECK(r <= 1.0);
        }
}

TEST_CASE("blend_stats examples") {
    SuffStats a{Matrix(1, 2), Vector(1)}, b{Matrix(1, 2), Vector(1)};
    a.s1 << 2, 0;
    b.s1 << 0, 2;
    a.s2 << -1;
    b.s2 << -3;
    const auto mid = blend_stats(a, b, 0.5);
    CHECK(mid.s1(0, 0) == 1.0);
    CHECK(mid.s1(0, 1) == 1.0);
    CHECK(mid.s2[0] == -2.0);

    const auto full = blend_stats(a, b, 1.0);
    CHECK(full.s1 == b.s1);
    CHECK(full.s2 == b.s2);

    const auto same = blend_stats(a, a, 0.3);
    CHECK((same.s1 - a.s1).cwiseAbs().maxCoeff() < 1e-15);

    SuffStats wrong{Matrix(2, 2), Vector(2)};
    CHECK_THROWS_AS(blend_stats(a, wrong, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(blend_stats(a, b, 0.0), std::invalid_argument);
}

TEST_CASE("blend_stats keeps s1 nonnegative") {
    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
        SuffStats a{Matrix::Random(3, 4).cwiseAbs(), Vector::Random(3)};
        SuffStats b{Matrix::Random(3, 4).cwiseAbs(), Vector::Random(3)};
        const double rho = 1e-3 + (1 - 1e-3) * uniform01(rng);
        CHECK(blend_stats(a, b, rho).s1.minCoeff() >= 0.0);
    }
}

TEST_CASE("minibatch_estimate examples") {
    SuffStats a{Matrix::Constant(2, 2, 1.0), Vector::Constant(2, -1.0)};
    SuffStats b{Matrix::Constant(2, 2, 3.0), Vector::Constant(2, -3.0)};
    std::vector<SuffStats> one{a};
    CHECK(minibatch_estimate(one).s2 == a.s2);
    std::vector<SuffStats> two{a, b};
    CHECK(minibatch_estimate(two).s2 == Vector::Constant(2, -2.0));
    std::vector<SuffStats> same(100, b);
    CHECK((minibatch_estimate(same).s1 - b.s1).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(minibatch_estimate(std::vector<SuffStats>{}), std::invalid_argument);
    std::vector<SuffStats> mixed{a, SuffStats{Matrix::Zero(2, 3), Vector::Zero(2)}};
    CHECK_THROWS_AS(minibatch_estimate(mixed), std::invalid_argument);
}

TEST_CASE("run_online_em on an empty stream returns the initial parameters") {
    ToyModel model;
    ToyBackend backend;
    const Vector init = Vector::Constant(2, 7.0);
    const auto trace = run_online_em(std::span<const Document>{}, model, backend, init, OnlineEmOptions{});
    CHECK(trace.last == init);
    CHECK(trace.count == 0);
}

TEST_CASE("kappa = 1 gives the running mean of minibatch estimates") {
    const auto docs = toy_stream(237, 11);
    ToyModel model;
    ToyBackend backend;
    OnlineEmOptions options;
    options.schedule.kappa = 1.0;
    options.minibatch_size = 10;

    std::vector<Vector> estimates;
    for (const auto& mb : minibatches(docs, 10)) estimates.push_back(ToySession{mb}.estimate());

    int n = 0;
    run_online_em(docs, model, backend, Vector::Constant(2, 100.0), options, [&](const Checkpoint<Vector>& cp) {
        ++n;
        Vector mean = Vector::Zero(2);
        for (int i = 0; i < n; ++i) mean += estimates[static_cast<std::size_t>(i)];
        mean /= n;
        CHECK(cp.minibatch == n);
        CHECK(((cp.trace.last - mean).array().abs() / mean.array().abs()).maxCoeff() < 1e-10);
    });
    CHECK(n == 24);
}

TEST_CASE("running mean equals the mean of the stored iterates") {
    const auto docs = toy_stream(90, 5);
    ToyModel model;
    ToyBackend backend;
    OnlineEmOptions options;
    options.minibatch_size = 7;
    std::vector<Vector> iterates;
    const auto trace = run_online_em(docs, model, backend, Vector::Zero(2), options,
                                     [&](const Checkpoint<Vector>& cp) { iterates.push_back(cp.trace.last); });
    Vector mean = Vector::Zero(2);
    for (const auto& x : iterates) mean += x;
    mean /= static_cast<double>(iterates.size());
    CHECK(trace.count == static_cast<std::int64_t>(iterates.size()));
    CHECK((trace.running_mean - mean).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("checkpoints report docs seen and chain offsets follow the stream") {
    const auto docs = toy_stream(25, 2);
    ToyModel model;
    ToyBackend backend;
    OnlineEmOptions options;
    options.minibatch_size = 10;
    options.passes = 2;
    std::vector<std::int64_t> seen;
    run_online_em(docs, model, backend, Vector::Zero(2), options,
                  [&](const Checkpoint<Vector>& cp) { seen.push_back(cp.docs_seen); });
    CHECK(seen == std::vector<std::int64_t>{10, 20, 25, 35, 45, 50});
    CHECK(backend.first_docs == std::vector<std::int64_t>{0, 10, 20, 25, 35, 45});
}

TEST_CASE("boost re-solves after every intermediate sweep from the previous statistic") {
    const auto docs = toy_stream(10, 9);
    ToyModel model;
    std::vector<double> log;
    ToyBackend backend{3, &log};
    OnlineEmOptions options;
    options.minibatch_size = 10;
    options.boost = true;
    options.schedule.kappa = 1.0;  // rho_1 = 1: each boost sets params to the current estimate
    const Vector init = Vector::Constant(2, -5.0);
    run_online_em(docs, model, backend, init, options);
    const double base = ToySession{docs}.estimate()[0];
    REQUIRE(log.size() == 3);
    CHECK(log[0] == -5.0);
    CHECK(log[1] == doctest::Approx(base + 1));
    CHECK(log[2] == doctest::Approx(base + 2));

    log.clear();
    options.boost = false;
    run_online_em(docs, model, backend, init, options);
    CHECK(log == std::vector<double>{-5.0, -5.0, -5.0});
}

TEST_CASE("backend failures carry the minibatch index") {
    const auto docs = toy_stream(50, 1);
    ToyModel model;
    ToyBackend backend;
    backend.fail_at = 30;
    OnlineEmOptions options;
    options.minibatch_size = 10;
    try {
        run_online_em(docs, model, backend, Vector::Zero(2), options);
        FAIL("expected an error");
    } catch (const OnlineEmError& e) {
        CHECK(e.minibatch() == 4);
    }
}

TEST_CASE("run_online_em validates its options") {
    const auto docs = toy_stream(5, 1);
    ToyModel model;
    ToyBackend backend;
    OnlineEmOptions options;
    options.minibatch_size = 0;
    CHECK_THROWS_AS(run_online_em(docs, model, backend, Vector::Zero(2), options), std::invalid_argument);
    options.minibatch_size = 2;
    options.schedule.kappa = 0.0;
    CHECK_THROWS_AS(run_online_em(docs, model, backend, Vector::Zero(2), options), std::invalid_argument);
    backend.p = 0;
    options.schedule.kappa = 0.5;
    CHECK_THROWS_AS(run_online_em(docs, model, backend, Vector::Zero(2), options), std::invalid_argument);
}

TEST_CASE("G-OEM and V-OEM are bit-reproducible and lower held-out perplexity") {
    const auto data = generate_synthetic(parse_synthetic_spec("k=3,v=30,d=800,len=30"), 4);
    const auto [train, test] = split(data.corpus, 100, 1);
    const std::span<const Document> docs(train.documents);
    LdaModel model(AlphaMode::fixed_point, {}, 30.0);
    OnlineEmOptions options;
    options.minibatch_size = 50;
    const auto init = random_params(3, 30, 8);

    auto run_gibbs = [&] {
        GibbsBackend backend({8, false}, 99);
        return run_online_em(docs, model, backend, init, options);
    };
    const auto a = run_gibbs();
    const auto b = run_gibbs();
    CHECK(a.last.beta == b.last.beta);
    CHECK(a.last.alpha == b.last.alpha);
    a.last.check(1e-9);

    VariationalBackend vb({8}, 0);
    const auto v = run_online_em(docs, model, vb, init, options);
    v.last.check(1e-9);

    const double start = perplexity(test.documents, init, 10, 3).mean_log_perplexity;
    CHECK(perplexity(test.documents, a.last, 10, 3).mean_log_perplexity < start);
    CHECK(perplexity(test.documents, v.last, 10, 3).mean_log_perplexity < start);
}
