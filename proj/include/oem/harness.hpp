#pragma once

// Experiment orchestration: validated configs, per-seed train/evaluate runs
// writing trace CSVs, per-experiment summaries and multi-config sweeps.

#include "oem/corpus.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace oem {

enum class Method { g_oem, g_oem_pp, v_oem, v_oem_pp, olda, svb, splda, sgs, vargibbs, hdp_g_oem, hdp_vargibbs };

Method parse_method(std::string_view text);
std::string_view to_string(Method method);
bool is_hdp(Method method);

struct ExperimentConfig {
    std::string method = "g-oem";
    int k = 10;
    std::optional<double> kappa;           // 0.5 unless the method fixes 1/t
    bool averaging = false;
    std::optional<bool> boost;             // implied by the "++" methods
    int minibatch_size = 100;
    int local_iters = 20;
    std::optional<std::string> alpha_mode; // per-method default when unset
    double init_alpha = 1.0;               // alpha of the random starting point
    std::vector<std::uint64_t> seeds{0};
    int eval_every = 10;                   // minibatches between evaluations; 0 = final only
    int particles = 30;
    int passes = 1;

    std::string corpus;                    // UCI docword path
    std::string vocab;                     // optional vocabulary path
    std::string synthetic;                 // e.g. "k=5,v=100,d=20000,len=40"
    std::uint64_t corpus_seed = 0;         // seed of the synthetic corpus
    std::size_t n_test = 1000;

    double topic_prior = 0.01;             // b of the Bayesian variants
    std::string lambda_order = "standard";
    std::optional<double> sgs_alpha;      // constant alpha for SGS
    std::string sgs_alpha_from;            // completed G-OEM run directory

    double hdp_b = 4.0;
    double hdp_alpha = 1.0;
    int hdp_t_max = 200;
    int hdp_min_new_tokens = 2;
    int hdp_max_new_per_minibatch = 1;
    double hdp_prune_mass = 0.5;

    bool track_elbo = false;               // adds a test_elbo column
    int elbo_sweeps = 20;
    bool record_wallclock = false;         // off keeps traces byte-reproducible
    int threads = 1;
    std::string out_dir;                   // empty: nothing written
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Config with method defaults filled in.
struct ResolvedConfig {
    ExperimentConfig raw;
    Method method;
    double kappa;
    bool boost;
    std::string alpha_mode;
};

/// Rejects Table-1-inconsistent and malformed combinations with std::invalid_argument.
ResolvedConfig validate(const ExperimentConfig& config);

struct SeedResult {
    std::uint64_t seed = 0;
    double initial_log_perplexity = 0.0;
    double final_log_perplexity = 0.0;
    std::optional<double> final_elbo;
    int num_topics = 0;
    double mean_alpha = 0.0;
};

struct ExperimentResult {
    std::string method;
    int k = 0;
    double kappa = 0.0;
    std::vector<SeedResult> seeds;
};

/// Loads or generates the corpus named by the config.
Corpus load_corpus(const ExperimentConfig& config);

/// Trains and evaluates every seed. When out_dir is set, writes
/// trace_seed<S>.csv, model_seed<S>.txt and summary.csv there.
ExperimentResult run_experiment(const ExperimentConfig& config);
ExperimentResult run_experiment(const ExperimentConfig& config, const Corpus& corpus);

/// Median and 3rd / 7th deciles (linear interpolation between order statistics).
struct Quantiles {
    double median = 0.0;
    double decile3 = 0.0;
    double decile7 = 0.0;
};
Quantiles quantiles(std::vector<double> values);

void write_summary(const ExperimentResult& result, const std::filesystem::path& path);

using SweepKey = std::tuple<std::string, int, double>;  // (method, K, kappa)

struct SweepSummary {
    std::map<SweepKey, std::map<std::uint64_t, SeedResult>> results;
    std::vector<std::string> failures;
};

/// Adds results under their key; seeds already present are overwritten, so
/// re-merging the same result is a no-op.
void merge_result(SweepSummary& summary, const ExperimentResult& result);

/// Runs each config (up to `parallelism` at once), recording failures and
/// continuing. Config i writes into <out_dir>/<i> when out_dir is set.
SweepSummary sweep(const std::vector<ExperimentConfig>& configs, int parallelism,
                   const std::filesystem::path& out_dir = {});

void write_sweep_summary(const SweepSummary& summary, const std::filesystem::path& path);

}  // namespace oem
