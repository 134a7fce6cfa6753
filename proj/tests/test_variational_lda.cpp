#include "oem/variational_lda.hpp"

#include "oem/eval.hpp"
#include "oem/gibbs_lda.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace oem;

TEST_CASE("update_zeta examples") {
    ModelParams p{Matrix(2, 2), Vector::Ones(2)};
    p.beta << 0.9, 0.1, 0.1, 0.9;
    const Document d = test::doc_of({0, 0});
    VariationalState s{Vector::Ones(2), Matrix::Zero(2, 2)};
    update_zeta(s, d, p);
    CHECK(s.zeta(0, 0) == doctest::Approx(0.9).epsilon(1e-14));
    CHECK(s.zeta(1, 1) == doctest::Approx(0.1).epsilon(1e-14));

    ModelParams flat{Matrix::Constant(3, 4, 0.25), Vector::Ones(3)};
    VariationalState u{Vector::Constant(3, 2.0), Matrix::Zero(1, 3)};
    update_zeta(u, test::doc_of({2}), flat);
    CHECK((u.zeta.array() - 1.0 / 3).abs().maxCoeff() < 1e-15);

    ModelParams one{Matrix::Constant(1, 2, 0.5), Vector::Ones(1)};
    VariationalState o{Vector::Ones(1), Matrix::Zero(3, 1)};
    update_zeta(o, test::doc_of({0, 1, 1}), one);
    CHECK((o.zeta.array() == 1.0).all());

    ModelParams zero{Matrix(2, 2), Vector::Ones(2)};
    zero.beta << 1.0, 0.0, 1.0, 0.0;
    VariationalState z{Vector::Ones(2), Matrix::Zero(1, 2)};
    CHECK_THROWS(update_zeta(z, test::doc_of({1}), zero));
}

TEST_CASE("update_gamma examples") {
    VariationalState s{Vector::Ones(2), Matrix::Constant(4, 2, 0.5)};
    update_gamma(s, Vector::Ones(2));
    CHECK(s.gamma == Vector::Constant(2, 3.0));
    update_gamma(s, Vector::Ones(2));
    CHECK(s.gamma == Vector::Constant(2, 3.0));

    VariationalState empty{Vector::Ones(2), Matrix::Zero(0, 2)};
    Vector alpha(2);
    alpha << 0.3, 0.8;
    update_gamma(empty, alpha);
    CHECK(empty.gamma == alpha);
}

TEST_CASE("coordinate ascent never decreases the ELBO") {
    Rng rng(31);
    for (int t = 0; t < 100; ++t) {
        const int k = 2 + static_cast<int>(rng() % 5);
        const auto p = test::random_model(k, 12, 1000 + t, 0.05, 2.0);
        const Document d = test::random_doc(1 + static_cast<int>(rng() % 40), 12, rng);
        auto s = init_variational_state(d, p);
        double prev = elbo_document(d, s, p);
        for (int sweep = 0; sweep < 20; ++sweep) {
            update_zeta(s, d, p);
            const double mid = elbo_document(d, s, p);
            CHECK(mid >= prev - 1e-8);
            update_gamma(s, p.alpha);
            const double after = elbo_document(d, s, p);
            CHECK(after >= mid - 1e-8);
            prev = after;
            CHECK((s.zeta.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
            CHECK((s.gamma - (p.alpha + s.zeta.colwise().sum().transpose())).cwiseAbs().maxCoeff() == 0.0);
        }
        const auto r = variational_estep(d, p, 5);
        CHECK(to_suff_stats(d, r.estimate, 12).s1.sum() == doctest::Approx(d.length()).epsilon(1e-12));
    }
}

TEST_CASE("single topic ELBO is the exact log likelihood") {
    ModelParams p{Matrix(1, 3), Vector::Constant(1, 0.6)};
    p.beta << 0.2, 0.3, 0.5;
    const Document d = test::doc_of({0, 2, 2, 1});
    const auto r = variational_estep(d, p, 3);
    CHECK(elbo_document(d, r.state, p) ==
          doctest::Approx(std::log(0.2) + 2 * std::log(0.5) + std::log(0.3)).epsilon(1e-13));
    CHECK(std::abs(r.estimate.s2[0]) < 1e-15);
    CHECK(to_suff_stats(d, r.estimate, 3).s1(0, 2) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("ELBO is a lower bound on the two-topic evidence") {
    Rng rng(7);
    for (int t = 0; t < 20; ++t) {
        const auto p = test::random_model(2, 6, 70 + t);
        const Document d = test::random_doc(1 + static_cast<int>(rng() % 15), 6, rng);
        const auto r = variational_estep(d, p, 50);
        CHECK(elbo_document(d, r.state, p) <= exact_loglik_quadrature(d, p) + 1e-9);
    }
}

TEST_CASE("ELBO is invariant under token permutation") {
    const auto p = test::random_model(3, 5, 2);
    const Document a = test::doc_of({0, 1, 1, 4});
    const Document b = test::doc_of({1, 4, 0, 1});
    const auto ra = variational_estep(a, p, 10);
    const auto rb = variational_estep(b, p, 10);
    CHECK(elbo_document(a, ra.state, p) == doctest::Approx(elbo_document(b, rb.state, p)).epsilon(1e-12));
}

TEST_CASE("variational statistics are close to exact ones on a tiny instance") {
    // well separated topics and a flat prior keep the mean-field gap small
    ModelParams p{Matrix(2, 4), Vector::Constant(2, 5.0)};
    p.beta << 0.9, 0.05, 0.03, 0.02, 0.02, 0.03, 0.05, 0.9;
    const Document d = test::doc_of({0, 1, 3, 3});
    const auto exact = to_suff_stats(d, enumerate_posterior(d, p).estimate, 4);
    const auto approx = to_suff_stats(d, variational_estep(d, p, 100).estimate, 4);
    CHECK((exact.s1 - approx.s1).cwiseAbs().sum() <= 0.05);
}

TEST_CASE("variational_estep errors") {
    const auto p = test::random_model(2, 3, 1);
    CHECK_THROWS_AS(variational_estep(test::doc_of({0}), p, 0), std::invalid_argument);
    CHECK_THROWS_AS(variational_estep(test::doc_of({5}), p, 1), std::invalid_argument);
}
