#include "oem/harness.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace oem;

namespace {

ExperimentConfig tiny(const std::string& method) {
    ExperimentConfig c;
    c.method = method;
    c.k = 3;
    c.synthetic = "k=3,v=20,d=260,len=15";
    c.corpus_seed = 2;
    c.n_test = 20;
    c.minibatch_size = 40;
    c.local_iters = 6;
    c.particles = 4;
    c.eval_every = 2;
    c.seeds = {1};
    return c;
}

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("oem_harness_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int count_lines(const std::string& text) {
    int n = 0;
    for (char ch : text) n += ch == '\n';
    return n;
}

}  // namespace

TEST_CASE("method names") {
    for (auto m : {Method::g_oem, Method::g_oem_pp, Method::v_oem, Method::v_oem_pp, Method::olda, Method::svb,
                   Method::splda, Method::sgs, Method::vargibbs, Method::hdp_g_oem, Method::hdp_vargibbs})
        CHECK(parse_method(to_string(m)) == m);
    CHECK_THROWS_AS(parse_method("lds"), std::invalid_argument);
}

TEST_CASE("validation resolves method defaults") {
    auto r = validate(tiny("g-oem"));
    CHECK(r.kappa == 0.5);
    CHECK_FALSE(r.boost);
    CHECK(r.alpha_mode == "fixed_point");
    CHECK(validate(tiny("v-oem++")).boost);
    CHECK(validate(tiny("splda")).boost);
    CHECK(validate(tiny("splda")).kappa == 1.0);
    CHECK(validate(tiny("svb")).kappa == 1.0);
    CHECK(validate(tiny("olda")).alpha_mode == "gradient");
    CHECK(validate(tiny("vargibbs")).alpha_mode == "frozen");
    auto sgs = tiny("sgs");
    sgs.local_iters = 1;
    CHECK(validate(sgs).alpha_mode == "frozen");
}

TEST_CASE("validation rejects inconsistent configs") {
    auto bad = [](auto mutate, const std::string& method = "g-oem") {
        auto c = tiny(method);
        mutate(c);
        CHECK_THROWS_AS(validate(c), std::invalid_argument);
    };
    bad([](auto& c) { c.kappa = 0.0; });
    bad([](auto& c) { c.kappa = 1.5; });
    bad([](auto& c) { c.kappa = 0.5; }, "svb");
    bad([](auto& c) { c.kappa = 0.5; }, "splda");
    bad([](auto& c) { c.boost = true; });
    bad([](auto& c) { c.boost = false; }, "g-oem++");
    bad([](auto& c) { c.boost = true; }, "olda");
    bad([](auto& c) { c.alpha_mode = "gamma_prior"; });
    bad([](auto& c) { c.alpha_mode = "newton"; });
    bad([](auto& c) { c.alpha_mode = "fixed_point"; }, "vargibbs");
    bad([](auto& c) { c.alpha_mode = "gradient"; }, "sgs");
    bad([](auto& c) { c.alpha_mode = "frozen"; }, "hdp-g-oem");
    bad([](auto& c) { c.averaging = true; }, "hdp-vargibbs");
    bad([](auto& c) { c.k = 0; });
    bad([](auto& c) { c.init_alpha = 0.0; });
    bad([](auto& c) { c.minibatch_size = 0; });
    bad([](auto& c) { c.local_iters = 3; });
    bad([](auto& c) { c.local_iters = 0; }, "v-oem");
    bad([](auto& c) { c.passes = 0; });
    bad([](auto& c) { c.seeds.clear(); });
    bad([](auto& c) { c.eval_every = -1; });
    bad([](auto& c) { c.particles = 0; });
    bad([](auto& c) { c.n_test = 0; });
    bad([](auto& c) { c.synthetic.clear(); });
    bad([](auto& c) { c.corpus = "docword.txt"; });
    bad([](auto& c) { c.topic_prior = 0.0; });
    bad([](auto& c) { c.lambda_order = "backwards"; });
    bad([](auto& c) { c.sgs_alpha = -1.0; });
    bad([](auto& c) { c.hdp_b = 0.0; });
    bad([](auto& c) { c.hdp_t_max = 1; });
    bad([](auto& c) { c.elbo_sweeps = 0; });
    bad([](auto& c) { c.threads = 0; });
    bad([](auto& c) { c.method = "unknown"; });

    auto hdp = tiny("hdp-g-oem");
    hdp.k = 0;  // unused for the HDP
    CHECK_NOTHROW(validate(hdp));
    auto boosted = tiny("g-oem++");
    boosted.boost = true;
    CHECK_NOTHROW(validate(boosted));
}

TEST_CASE("config JSON round trip") {
    auto c = tiny("olda");
    c.kappa = 0.7;
    c.alpha_mode = "frozen";
    c.sgs_alpha = 0.3;
    c.seeds = {4, 5};
    c.track_elbo = true;
    const auto back = config_from_json(config_to_json(c));
    CHECK(config_to_json(back) == config_to_json(c));
    CHECK(back.kappa == c.kappa);
    CHECK(back.seeds == c.seeds);
    CHECK(back.alpha_mode == c.alpha_mode);

    const auto defaults = config_from_json(nlohmann::json::object());
    CHECK(defaults.method == "g-oem");
    CHECK_FALSE(defaults.kappa.has_value());
    CHECK_THROWS_AS(config_from_json(nlohmann::json{{"kapa", 0.5}}), std::invalid_argument);
}

TEST_CASE("quantiles") {
    const auto q = quantiles({5, 1, 4, 2, 3});
    CHECK(q.median == 3.0);
    CHECK(q.decile3 == doctest::Approx(2.2).epsilon(1e-14));
    CHECK(q.decile7 == doctest::Approx(3.8).epsilon(1e-14));
    CHECK(quantiles({7}).median == 7.0);
    CHECK(quantiles({1, 2}).median == 1.5);
    CHECK_THROWS_AS(quantiles({}), std::invalid_argument);
}

TEST_CASE("traces follow the evaluation cadence and are reproducible") {
    auto c = tiny("g-oem");
    const auto dir = temp_dir("trace");
    c.out_dir = dir.string();
    const auto r = run_experiment(c);
    REQUIRE(r.seeds.size() == 1);
    const auto trace = slurp(dir / "trace_seed1.csv");
    CHECK(trace.rfind("iteration,docs_seen,wallclock_s,test_log_perplexity\n", 0) == 0);
    // 240 training documents in minibatches of 40: rows at 0, 2, 4, 6
    CHECK(count_lines(trace) == 5);
    CHECK(std::filesystem::exists(dir / "model_seed1.txt"));
    CHECK(std::filesystem::exists(dir / "config.json"));
    CHECK(std::filesystem::exists(dir / "summary.csv"));

    run_experiment(c);
    CHECK(slurp(dir / "trace_seed1.csv") == trace);

    c.eval_every = 0;
    run_experiment(c);
    CHECK(count_lines(slurp(dir / "trace_seed1.csv")) == 2);

    c.eval_every = 4;
    run_experiment(c);
    CHECK(count_lines(slurp(dir / "trace_seed1.csv")) == 4);  // 0, 4 and the final 6
}

TEST_CASE("every method runs end to end") {
    for (const char* m : {"g-oem", "g-oem++", "v-oem", "v-oem++", "olda", "svb", "splda", "sgs", "vargibbs",
                          "hdp-g-oem", "hdp-vargibbs"}) {
        CAPTURE(m);
        auto c = tiny(m);
        if (std::string(m) == "sgs") {
            c.local_iters = 1;
            c.sgs_alpha = 0.5;
        }
        c.track_elbo = std::string(m) == "olda";
        const auto r = run_experiment(c);
        REQUIRE(r.seeds.size() == 1);
        CHECK(std::isfinite(r.seeds[0].final_log_perplexity));
        CHECK(std::isfinite(r.seeds[0].initial_log_perplexity));
        CHECK(r.seeds[0].num_topics >= 1);
        CHECK(r.seeds[0].final_elbo.has_value() == c.track_elbo);
    }
}

TEST_CASE("SGS takes its alpha from a previous G-OEM run") {
    const auto dir = temp_dir("sgs");
    auto g = tiny("g-oem");
    g.out_dir = (dir / "g").string();
    const auto gr = run_experiment(g);

    auto s = tiny("sgs");
    s.local_iters = 1;
    s.sgs_alpha_from = g.out_dir;
    const auto sr = run_experiment(s);
    CHECK(sr.seeds[0].mean_alpha == doctest::Approx(gr.seeds[0].mean_alpha).epsilon(1e-12));
}

TEST_CASE("sweep") {
    CHECK(sweep({}, 2).results.empty());

    auto c = tiny("v-oem");
    c.seeds = {3, 4};
    const auto single = sweep({c}, 1);
    const auto direct = run_experiment(c);
    REQUIRE(single.results.size() == 1);
    const auto& seeds = single.results.begin()->second;
    REQUIRE(seeds.size() == 2);
    CHECK(seeds.at(3).final_log_perplexity == direct.seeds[0].final_log_perplexity);
    CHECK(seeds.at(4).final_log_perplexity == direct.seeds[1].final_log_perplexity);

    SweepSummary merged = single;
    merge_result(merged, direct);
    CHECK(merged.results.size() == 1);
    CHECK(merged.results.begin()->second.size() == 2);

    auto broken = tiny("g-oem");
    broken.k = 0;
    const auto dir = temp_dir("sweep");
    const auto mixed = sweep({c, broken}, 2, dir);
    CHECK(mixed.results.size() == 1);
    REQUIRE(mixed.failures.size() == 1);
    const auto text = slurp(dir / "sweep_summary.csv");
    CHECK(text.find("# failed: config 1") != std::string::npos);
    CHECK(std::filesystem::exists(dir / "0" / "trace_seed3.csv"));
}

TEST_CASE("SGS without an alpha source trains its own G-OEM pilot") {
    auto s = tiny("sgs");
    s.local_iters = 1;
    const auto r = run_experiment(s);
    CHECK(std::isfinite(r.seeds[0].final_log_perplexity));
    CHECK(r.seeds[0].mean_alpha > 0.0);
}
