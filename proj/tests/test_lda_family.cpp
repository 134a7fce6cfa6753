#include "oem/lda_family.hpp"

#include "test_util.hpp"

#include <boost/math/distributions/beta.hpp>
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

using namespace oem;

TEST_CASE("digamma against the recurrence and a lgamma finite difference") {
    const double euler = 0.57721566490153286;
    CHECK(digamma(1.0) == doctest::Approx(-euler).epsilon(1e-14));
    for (double x : {0.05, 0.3, 1.0, 2.5, 7.0, 40.0}) {
        CHECK(digamma(x + 1.0) - digamma(x) == doctest::Approx(1.0 / x).epsilon(1e-12));
        const double h = 1e-5 * std::max(1.0, x);
        const double fd = (std::lgamma(x + h) - std::lgamma(x - std::min(h, x / 2))) / (h + std::min(h, x / 2));
        CHECK(digamma(x) == doctest::Approx(fd).epsilon(1e-5));
    }
    const double h = 1e-5;
    CHECK(trigamma(3.0) == doctest::Approx((digamma(3.0 + h) - digamma(3.0 - h)) / (2 * h)).epsilon(1e-7));
}

TEST_CASE("inverse digamma round trips on [-20, 10]") {
    double worst = 0.0;
    for (double y = -20.0; y <= 10.0; y += 0.0173) worst = std::max(worst, std::abs(digamma(inverse_digamma(y)) - y));
    CHECK(worst <= 1e-10);
}

TEST_CASE("m_step examples") {
    SuffStats s{Matrix(2, 2), Vector(2)};
    s.s1 << 1, 1, 2, 2;
    s.s2 << -1, -1;
    const auto p = m_step(s, AlphaMode::fixed_point, Vector::Constant(2, 0.3));
    CHECK((p.beta.array() - 0.5).abs().maxCoeff() < 1e-15);
    // Psi(1) - Psi(2) = -1
    CHECK(p.alpha[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(p.alpha[1] == doctest::Approx(1.0).epsilon(1e-6));

    const auto frozen = m_step(s, AlphaMode::frozen, Vector::Constant(2, 0.3));
    CHECK(frozen.alpha == Vector::Constant(2, 0.3));
    CHECK_THROWS_AS(m_step(s, AlphaMode::gamma_prior, Vector::Constant(2, 0.3)), std::logic_error);
}

TEST_CASE("m_step resets an empty topic to uniform") {
    SuffStats s{Matrix::Zero(2, 4), Vector::Constant(2, -1.0)};
    s.s1.row(0) << 1, 2, 3, 4;
    const auto p = m_step(s, AlphaMode::frozen, Vector::Ones(2));
    CHECK((p.beta.row(1).array() - 0.25).abs().maxCoeff() < 1e-15);
    p.check();
}

TEST_CASE("alpha fixed point recovers alpha from the forward map") {
    Vector a0(3);
    a0 << 0.5, 2.0, 5.0;
    const Vector s2 = digamma(a0).array() - digamma(a0.sum());
    const auto a = alpha_fixed_point(s2, Vector::Ones(3));
    CHECK((a - a0).cwiseAbs().maxCoeff() < 1e-6);

    Rng rng(12);
    for (int t = 0; t < 50; ++t) {
        const int k = 2 + static_cast<int>(rng() % 6);
        Vector truth(k);
        for (int i = 0; i < k; ++i) truth[i] = 0.05 + 5.0 * uniform01(rng);
        const Vector f = digamma(truth).array() - digamma(truth.sum());
        const auto rec = alpha_fixed_point(f, Vector::Ones(k));
        CHECK((rec - truth).cwiseAbs().maxCoeff() < 1e-6);
        // stationarity residual
        CHECK(alpha_objective_gradient(f, rec).cwiseAbs().maxCoeff() <= 1e-7);
    }
}

TEST_CASE("alpha fixed point with large alpha") {
    // nearly equal s2 entries: the plain fixed point needs far more than 1000 passes
    Vector truth(5);
    truth << 23.7, 26.7, 23.9, 26.2, 29.3;
    const Vector s2 = digamma(truth).array() - digamma(truth.sum());
    const auto a = alpha_fixed_point(s2, Vector::Constant(5, 20.0));
    CHECK((a - truth).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(alpha_objective_gradient(s2, a).cwiseAbs().maxCoeff() <= 1e-7);
}

TEST_CASE("alpha fixed point keeps symmetry") {
    const auto a = alpha_fixed_point(Vector::Constant(4, -2.3), Vector::Constant(4, 0.7));
    CHECK((a.array() - a[0]).abs().maxCoeff() < 1e-12);
}

TEST_CASE("alpha fixed point errors") {
    CHECK_THROWS_AS(alpha_fixed_point(Vector::Constant(2, -1.0), Vector::Constant(3, 1.0)), std::invalid_argument);
    CHECK_THROWS_AS(alpha_fixed_point(Vector::Constant(2, -1.0), Vector::Constant(2, -1.0)), std::invalid_argument);
    Vector bad(2);
    bad << -1.0, std::nan("");
    CHECK_THROWS_AS(alpha_fixed_point(bad, Vector::Ones(2)), std::invalid_argument);
    Vector slow(2);
    slow << -0.01, -5.0;
    CHECK_THROWS_AS(alpha_fixed_point(slow, Vector::Ones(2), 1e-14, 2), ConvergenceError);
}

TEST_CASE("alpha gradient") {
    Vector a0(3);
    a0 << 0.4, 1.1, 2.7;
    const Vector s2 = digamma(a0).array() - digamma(a0.sum());
    CHECK(alpha_objective_gradient(s2, a0).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((alpha_gradient(s2, a0, 1e-2, 1) - a0).cwiseAbs().maxCoeff() < 1e-9);

    Rng rng(5);
    for (int t = 0; t < 20; ++t) {
        Vector start(3), truth(3);
        for (int i = 0; i < 3; ++i) {
            start[i] = 0.2 + 3 * uniform01(rng);
            truth[i] = 0.2 + 3 * uniform01(rng);
        }
        const Vector f = digamma(truth).array() - digamma(truth.sum());
        double prev = alpha_objective(f, start);
        Vector a = start;
        for (int it = 0; it < 30; ++it) {
            a = alpha_gradient(f, a, 1e-3, 1);
            const double v = alpha_objective(f, a);
            CHECK(v >= prev - 1e-12);
            prev = v;
        }
    }
}

TEST_CASE("alpha gradient agrees with the fixed point") {
    Rng rng(8);
    for (int t = 0; t < 10; ++t) {
        Vector truth(3);
        for (int i = 0; i < 3; ++i) truth[i] = 0.5 + 2 * uniform01(rng);
        const Vector f = digamma(truth).array() - digamma(truth.sum());
        const auto fp = alpha_fixed_point(f, Vector::Ones(3));
        const auto gd = alpha_gradient(f, Vector::Ones(3), 0.05, 20000);
        CHECK((fp - gd).cwiseAbs().maxCoeff() < 1e-4);
    }
}

TEST_CASE("alpha gradient detects divergence") {
    Vector s2(2);
    s2 << -1.0, -1.0;
    CHECK_THROWS_AS(alpha_gradient(s2, Vector::Constant(2, 3.0), 10.0, 200), ConvergenceError);
}

TEST_CASE("m_step output is a first-order optimum of the concave objective") {
    Rng rng(3);
    for (int t = 0; t < 10; ++t) {
        const auto truth = test::random_model(3, 6, 100 + t);
        SuffStats s = forward_stats(truth, 25.0);
        s.s1 += Matrix::Random(3, 6).cwiseAbs() * 0.5;  // not exactly consistent with truth
        const auto p = m_step(s, AlphaMode::fixed_point, Vector::Ones(3));
        const double best = lda_objective(p, s);
        for (int k = 0; k < 3; ++k) {
            for (int i = 0; i < 6; ++i)
                for (int j = 0; j < 6; ++j) {
                    if (i == j) continue;
                    for (double eps : {1e-3, -1e-3}) {
                        ModelParams q = p;
                        q.beta(k, i) += eps;
                        q.beta(k, j) -= eps;
                        if (q.beta.minCoeff() <= 0) continue;
                        CHECK(lda_objective(q, s) <= best + 1e-8);
                    }
                }
            for (double eps : {1e-3, -1e-3}) {
                ModelParams q = p;
                q.alpha[k] += eps;
                CHECK(lda_objective(q, s) <= best + 1e-8);
            }
        }
    }
}

TEST_CASE("log_joint") {
    // K = 1: the Dirichlet on a point contributes nothing.
    ModelParams one{Matrix(1, 3), Vector::Constant(1, 0.7)};
    one.beta << 0.2, 0.3, 0.5;
    const Document d = test::doc_of({0, 2, 2, 1});
    const std::vector<int> z1(4, 0);
    CHECK(log_joint(d, z1, Vector::Ones(1), one) ==
          doctest::Approx(std::log(0.2) + 2 * std::log(0.5) + std::log(0.3)).epsilon(1e-14));

    // K = 2: independent density product with the Beta pdf.
    const auto p = test::random_model(2, 3, 4);
    Vector theta(2);
    theta << 0.35, 0.65;
    const std::vector<int> z{0, 1, 1, 0};
    double expected = std::log(boost::math::pdf(boost::math::beta_distribution<>(p.alpha[0], p.alpha[1]), theta[0]));
    for (int n = 0; n < 4; ++n) expected += std::log(theta[z[n]] * p.beta(z[n], d.word_ids[n]));
    CHECK(log_joint(d, z, theta, p) == doctest::Approx(expected).epsilon(1e-12));

    // exchangeability
    const Document perm = test::doc_of({2, 1, 0, 2});
    const std::vector<int> zp{1, 0, 0, 1};
    CHECK(log_joint(perm, zp, theta, p) == doctest::Approx(log_joint(d, z, theta, p)).epsilon(1e-14));

    Vector off(2);
    off << 0.3, 0.6;
    CHECK_THROWS_AS(log_joint(d, z, off, p), std::invalid_argument);
}

TEST_CASE("ModelParams::check") {
    auto p = test::random_model(3, 5, 1);
    p.check();
    p.beta(0, 0) += 1e-6;
    CHECK_THROWS_AS(p.check(), std::invalid_argument);
    p = test::random_model(3, 5, 1);
    p.alpha[1] = 0.0;
    CHECK_THROWS_AS(p.check(), std::invalid_argument);
}

TEST_CASE("model text round trip") {
    const auto p = test::random_model(4, 7, 9);
    std::stringstream ss;
    write_model(p, ss);
    const auto q = read_model(ss);
    CHECK(q.beta == p.beta);
    CHECK(q.alpha == p.alpha);
}

TEST_CASE("alpha mode names") {
    for (auto m : {AlphaMode::fixed_point, AlphaMode::gradient, AlphaMode::frozen, AlphaMode::gamma_prior})
        CHECK(parse_alpha_mode(to_string(m)) == m);
    CHECK_THROWS_AS(parse_alpha_mode("newton"), std::invalid_argument);
}

TEST_CASE("LdaModel floors beta after the M-step") {
    LdaModel model(AlphaMode::frozen, {}, 10.0, 1e-6);
    SuffStats s{Matrix::Zero(1, 3), Vector::Constant(1, -1.0)};
    s.s1 << 5, 5, 0;
    const auto p = model.m_step(s, ModelParams{Matrix::Constant(1, 3, 1.0 / 3), Vector::Ones(1)});
    CHECK(p.beta(0, 2) > 0.0);
    CHECK(p.beta.row(0).sum() == doctest::Approx(1.0).epsilon(1e-14));
}
