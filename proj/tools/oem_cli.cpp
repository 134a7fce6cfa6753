#include "oem/corpus.hpp"
#include "oem/eval.hpp"
#include "oem/hdp.hpp"
#include "oem/harness.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>

namespace {

bool on_off(const std::string& v) {
    if (v == "on") return true;
    if (v == "off") return false;
    throw CLI::ValidationError("expected on|off, got " + v);
}

void print_result(const oem::ExperimentResult& r) {
    for (const auto& s : r.seeds)
        std::cout << r.method << " seed=" << s.seed << " initial=" << s.initial_log_perplexity
                  << " final=" << s.final_log_perplexity << " topics=" << s.num_topics << '\n';
    std::vector<double> finals;
    for (const auto& s : r.seeds) finals.push_back(s.final_log_perplexity);
    const auto q = oem::quantiles(finals);
    std::cout << "median=" << q.median << " decile3=" << q.decile3 << " decile7=" << q.decile7 << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"online EM for latent Dirichlet allocation"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");

    // train
    auto* train = app.add_subcommand("train", "train and evaluate one configuration");
    oem::ExperimentConfig cfg;
    std::string config_path, averaging, wallclock, elbo;
    std::optional<std::uint64_t> seed;
    std::vector<std::uint64_t> seeds;
    std::optional<double> kappa;
    std::optional<std::string> alpha_mode;
    train->add_option("--config", config_path, "JSON config; command-line flags override it");
    train->add_option("--method", cfg.method)
        ->check(CLI::IsMember({"g-oem", "g-oem++", "v-oem", "v-oem++", "olda", "svb", "splda", "sgs", "vargibbs",
                               "hdp-g-oem", "hdp-vargibbs"}));
    train->add_option("--k", cfg.k);
    train->add_option("--kappa", kappa);
    train->add_option("--minibatch", cfg.minibatch_size);
    train->add_option("--local-iters", cfg.local_iters);
    train->add_option("--alpha-mode", alpha_mode)->check(CLI::IsMember({"fixed_point", "gradient", "frozen"}));
    train->add_option("--init-alpha", cfg.init_alpha, "alpha of the random starting point");
    train->add_option("--averaging", averaging)->check(CLI::IsMember({"on", "off"}));
    train->add_option("--seed", seed);
    train->add_option("--seeds", seeds, "several seeds (one split each)");
    auto* corpus_opt = train->add_option("--corpus", cfg.corpus, "UCI docword file");
    auto* synth_opt = train->add_option("--synthetic", cfg.synthetic, "e.g. k=5,v=100,d=20000,len=40");
    corpus_opt->excludes(synth_opt);
    train->add_option("--vocab", cfg.vocab);
    train->add_option("--corpus-seed", cfg.corpus_seed);
    train->add_option("--n-test", cfg.n_test);
    train->add_option("--eval-every", cfg.eval_every);
    train->add_option("--particles", cfg.particles);
    train->add_option("--passes", cfg.passes);
    train->add_option("--topic-prior", cfg.topic_prior);
    train->add_option("--lambda-order", cfg.lambda_order)->check(CLI::IsMember({"standard", "paper-literal"}));
    train->add_option("--sgs-alpha", cfg.sgs_alpha);
    train->add_option("--sgs-alpha-from", cfg.sgs_alpha_from, "completed G-OEM run directory");
    train->add_option("--hdp-b", cfg.hdp_b);
    train->add_option("--hdp-alpha", cfg.hdp_alpha);
    train->add_option("--hdp-t-max", cfg.hdp_t_max);
    train->add_option("--hdp-min-new-tokens", cfg.hdp_min_new_tokens);
    train->add_option("--hdp-max-new", cfg.hdp_max_new_per_minibatch, "new topics accepted per minibatch");
    train->add_option("--hdp-prune-mass", cfg.hdp_prune_mass, "expected tokens per document below which old topics retire");
    train->add_option("--elbo", elbo, "track test ELBO (on|off)")->check(CLI::IsMember({"on", "off"}));
    train->add_option("--wallclock", wallclock, "record wall-clock seconds (on|off)")
        ->check(CLI::IsMember({"on", "off"}));
    train->add_option("--threads", cfg.threads);
    train->add_option("--out", cfg.out_dir);

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "run several JSON configs and merge their summaries");
    std::vector<std::string> sweep_configs;
    std::string sweep_out;
    int parallelism = 1;
    sweep_cmd->add_option("configs", sweep_configs, "JSON config files")->required();
    sweep_cmd->add_option("--parallel", parallelism);
    sweep_cmd->add_option("--out", sweep_out)->required();

    // generate
    auto* gen = app.add_subcommand("generate", "write a synthetic corpus in UCI format");
    std::string gen_spec, gen_out, gen_vocab;
    std::uint64_t gen_seed = 0;
    gen->add_option("--synthetic", gen_spec)->required();
    gen->add_option("--seed", gen_seed);
    gen->add_option("--out", gen_out, "docword output path")->required();
    gen->add_option("--vocab-out", gen_vocab);

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "held-out log-perplexity of a saved model on a test split");
    std::string eval_model, eval_corpus, eval_vocab, eval_synth, eval_csv;
    std::uint64_t eval_corpus_seed = 0, eval_split_seed = 0, eval_seed = 0;
    std::size_t eval_n_test = 1000;
    int eval_particles = 30, eval_threads = 1;
    bool eval_truth = false;
    auto* model_opt = evaluate->add_option("--model", eval_model, "model file written by train");
    auto* truth_opt = evaluate->add_flag("--truth", eval_truth, "use the generating parameters of --synthetic");
    model_opt->excludes(truth_opt);
    auto* ecorpus = evaluate->add_option("--corpus", eval_corpus);
    auto* esynth = evaluate->add_option("--synthetic", eval_synth);
    ecorpus->excludes(esynth);
    evaluate->add_option("--vocab", eval_vocab);
    evaluate->add_option("--corpus-seed", eval_corpus_seed);
    evaluate->add_option("--n-test", eval_n_test);
    evaluate->add_option("--split-seed", eval_split_seed, "seed of the train/test split (the train seed)");
    evaluate->add_option("--seed", eval_seed, "estimator seed");
    evaluate->add_option("--particles", eval_particles);
    evaluate->add_option("--threads", eval_threads);
    evaluate->add_option("--csv", eval_csv, "per-document log-likelihoods");

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*train) {
            oem::ExperimentConfig merged = config_path.empty() ? oem::ExperimentConfig{} : oem::load_config(config_path);
            // Flags given on the command line win over the JSON file.
            auto given = [&](const char* name) { return train->count(name) > 0; };
            if (given("--method")) merged.method = cfg.method;
            if (given("--k")) merged.k = cfg.k;
            if (kappa) merged.kappa = kappa;
            if (given("--minibatch")) merged.minibatch_size = cfg.minibatch_size;
            if (given("--local-iters")) merged.local_iters = cfg.local_iters;
            if (alpha_mode) merged.alpha_mode = alpha_mode;
            if (given("--init-alpha")) merged.init_alpha = cfg.init_alpha;
            if (!averaging.empty()) merged.averaging = on_off(averaging);
            if (seed) merged.seeds = {*seed};
            if (!seeds.empty()) merged.seeds = seeds;
            if (given("--corpus")) {
                merged.corpus = cfg.corpus;
                merged.synthetic.clear();
            }
            if (given("--synthetic")) {
                merged.synthetic = cfg.synthetic;
                merged.corpus.clear();
            }
            if (given("--vocab")) merged.vocab = cfg.vocab;
            if (given("--corpus-seed")) merged.corpus_seed = cfg.corpus_seed;
            if (given("--n-test")) merged.n_test = cfg.n_test;
            if (given("--eval-every")) merged.eval_every = cfg.eval_every;
            if (given("--particles")) merged.particles = cfg.particles;
            if (given("--passes")) merged.passes = cfg.passes;
            if (given("--topic-prior")) merged.topic_prior = cfg.topic_prior;
            if (given("--lambda-order")) merged.lambda_order = cfg.lambda_order;
            if (cfg.sgs_alpha) merged.sgs_alpha = cfg.sgs_alpha;
            if (given("--sgs-alpha-from")) merged.sgs_alpha_from = cfg.sgs_alpha_from;
            if (given("--hdp-b")) merged.hdp_b = cfg.hdp_b;
            if (given("--hdp-alpha")) merged.hdp_alpha = cfg.hdp_alpha;
            if (given("--hdp-t-max")) merged.hdp_t_max = cfg.hdp_t_max;
            if (given("--hdp-min-new-tokens")) merged.hdp_min_new_tokens = cfg.hdp_min_new_tokens;
            if (given("--hdp-max-new")) merged.hdp_max_new_per_minibatch = cfg.hdp_max_new_per_minibatch;
            if (given("--hdp-prune-mass")) merged.hdp_prune_mass = cfg.hdp_prune_mass;
            if (!elbo.empty()) merged.track_elbo = on_off(elbo);
            if (!wallclock.empty()) merged.record_wallclock = on_off(wallclock);
            if (given("--threads")) merged.threads = cfg.threads;
            if (given("--out")) merged.out_dir = cfg.out_dir;
            print_result(oem::run_experiment(merged));
        } else if (*sweep_cmd) {
            std::vector<oem::ExperimentConfig> configs;
            for (const auto& path : sweep_configs) configs.push_back(oem::load_config(path));
            const auto summary = oem::sweep(configs, parallelism, sweep_out);
            std::cout << summary.results.size() << " experiment keys, " << summary.failures.size() << " failures\n";
            for (const auto& f : summary.failures) std::cerr << "failed: " << f << '\n';
            return summary.failures.empty() ? 0 : 2;
        } else if (*evaluate) {
            oem::Corpus corpus;
            std::optional<oem::ModelParams> params;
            if (!eval_synth.empty()) {
                auto data = oem::generate_synthetic(oem::parse_synthetic_spec(eval_synth), eval_corpus_seed);
                corpus = std::move(data.corpus);
                if (eval_truth) params = data.truth;
            } else {
                if (eval_truth) throw std::invalid_argument("--truth needs --synthetic");
                corpus = oem::load_uci_bag_of_words(eval_corpus, eval_vocab);
            }
            if (!params) {
                std::ifstream in(eval_model);
                if (!in) throw std::runtime_error("cannot open model " + eval_model);
                std::string header;
                std::getline(in, header);
                in.seekg(0);
                if (nlohmann::json::parse(header).contains("T"))
                    params = oem::hdp_as_lda(oem::read_hdp_model(in));
                else
                    params = oem::read_model(in);
            }
            const auto parts = oem::split(corpus, eval_n_test, eval_split_seed);
            const auto report = oem::perplexity(parts.second.documents, *params, eval_particles, eval_seed, eval_threads);
            if (!eval_csv.empty()) {
                std::ofstream out(eval_csv);
                report.write_csv(out);
            }
            std::cout << report.summary_json() << '\n';
        } else if (*gen) {
            const auto data = oem::generate_synthetic(oem::parse_synthetic_spec(gen_spec), gen_seed);
            oem::write_uci_bag_of_words(data.corpus, gen_out, gen_vocab);
            std::cout << "wrote " << data.corpus.size() << " documents to " << gen_out << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
