#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nogte/a2c.hpp"
#include "nogte/envs.hpp"
#include "nogte/harness.hpp"
#include "nogte/hpo.hpp"
#include "nogte/nets.hpp"

namespace fs = std::filesystem;
using namespace nogte;

namespace {

struct Overrides {
    std::string config;
    std::string seeds;
    std::string variant;
    std::string env;
    std::string out;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "key = value experiment file")->check(CLI::ExistingFile);
    cmd->add_option("--seeds", o.seeds, "seed list, e.g. 0..9 or 1,4,7");
    cmd->add_option("--variant", o.variant, "a2c | a2c-nog | a2c-te | a2c-nog-te");
    cmd->add_option("--env", o.env, "cartpole | energy-mountain-car");
    cmd->add_option("--out", o.out, "output directory");
}

// Command-line flags override the config file; a changed env or variant
// without explicit hyperparameters falls back to the matching preset. A study
// samples its own hyperparameters, so they are not checked there.
ExperimentConfig resolve(const Overrides& o, bool study = false) {
    ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
    if (o.config.empty() && !study) {
        cfg.hp = *preset(cfg.env, cfg.variant);
    }
    const bool env_changed = !o.env.empty() && o.env != cfg.env;
    const bool variant_changed = !o.variant.empty() && parse_variant(o.variant) != cfg.variant;
    if (!o.env.empty()) {
        cfg.threshold = default_solve_threshold(o.env);
        cfg.env = o.env;
    }
    if (!o.variant.empty()) {
        cfg.variant = parse_variant(o.variant);
    }
    if ((env_changed || variant_changed) && !study) {
        const auto hp = preset(cfg.env, cfg.variant);
        if (!hp) {
            throw ConfigError("no preset for " + cfg.env + "/" + std::string(variant_name(cfg.variant)) +
                              "; supply a config with explicit hyperparameters");
        }
        cfg.hp = *hp;
    }
    if (!o.seeds.empty()) {
        cfg.seeds = parse_seed_list(o.seeds);
    }
    if (!o.out.empty()) {
        cfg.out = o.out;
    }
    if (study) {
        (void)make_env(cfg.env, 0);
        if (cfg.n_trials == 0 || cfg.budget_steps == 0) {
            throw ConfigError("n_trials and budget_steps must be positive");
        }
    } else {
        finalize(cfg);
    }
    return cfg;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    if (!in) {
        throw std::runtime_error("cannot open " + p.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_train(const Overrides& o, bool quiet) {
    const ExperimentConfig cfg = resolve(o);
    const auto rows = run_experiment(cfg, !quiet);
    std::size_t solved = 0;
    for (const auto& r : rows) {
        solved += r.solved ? 1 : 0;
    }
    std::printf("%zu/%zu seeds solved; summary in %s\n", solved, rows.size(), (cfg.out / "summary.csv").c_str());
    return 0;
}

int run_hpo(const Overrides& o, bool random_sampler, bool no_prune) {
    const ExperimentConfig cfg = resolve(o, true);
    StudySettings settings;
    settings.seed = cfg.study_seed;
    settings.n_trials = cfg.n_trials;
    settings.sampler = random_sampler ? SamplerKind::random : SamplerKind::tpe;
    settings.prune = !no_prune;
    settings.parallelism = cfg.parallelism;
    Study study(default_search_space(cfg.variant), settings);
    const StudyReport report = run_study(study, make_rl_trial(cfg.env, cfg.variant, cfg.budget_steps));
    write_study(cfg.out, study, report,
                {{"env", cfg.env},
                 {"variant", std::string(variant_name(cfg.variant))},
                 {"budget_steps", std::to_string(cfg.budget_steps)}});
    if (report.no_completed_trial) {
        std::fprintf(stderr, "no trial completed; see %s\n", cfg.out.c_str());
        return 3;
    }
    std::printf("best trial %zu objective %.4f; study in %s\n", report.best->id, *report.best->objective,
                cfg.out.c_str());
    return 0;
}

int run_eval(const std::string& checkpoint, const std::string& env_name, std::size_t episodes, std::uint64_t seed) {
    const ActorCriticNet net = ActorCriticNet::load(checkpoint);
    const auto env = make_env(env_name, seed);
    const double mean = evaluate_policy(net, *env, episodes, seed);
    std::printf("mean reward over %zu episodes: %.4f\n", episodes, mean);
    return 0;
}

int run_report(const std::vector<std::string>& summaries, const std::string& out) {
    std::vector<RunSummary> rows;
    for (const auto& path : summaries) {
        auto part = parse_summary_csv(read_text(path), path);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    const std::string csv = report_csv(build_report(rows));
    if (!out.empty()) {
        std::ofstream f(out);
        if (!f) {
            throw std::runtime_error("cannot write " + out);
        }
        f << csv;
    }
    std::fputs(csv.c_str(), stdout);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Advantage actor-critic with non-overlapping gradients and target entropy"};
    app.require_subcommand(1);

    Overrides train_opts;
    bool quiet = false;
    auto* train = app.add_subcommand("train", "train every seed until solved or out of budget");
    add_common(train, train_opts);
    train->add_flag("--quiet", quiet, "suppress per-seed progress lines");

    Overrides hpo_opts;
    bool random_sampler = false;
    bool no_prune = false;
    auto* hpo = app.add_subcommand("hpo", "hyperparameter study (TPE sampler, successive-halving pruner)");
    add_common(hpo, hpo_opts);
    hpo->add_flag("--random", random_sampler, "sample uniformly instead of TPE");
    hpo->add_flag("--no-prune", no_prune, "disable pruning");

    std::string checkpoint;
    std::string eval_env = "cartpole";
    std::size_t episodes = 100;
    std::uint64_t eval_seed = 0;
    auto* eval = app.add_subcommand("eval", "score a checkpoint on fresh episodes");
    eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
    eval->add_option("--env", eval_env, "cartpole | energy-mountain-car");
    eval->add_option("--episodes", episodes, "episode count")->check(CLI::PositiveNumber);
    eval->add_option("--seed", eval_seed, "evaluation seed");

    std::vector<std::string> summaries;
    std::string report_out;
    auto* report = app.add_subcommand("report", "aggregate summary.csv files into a steps-to-solve table");
    report->add_option("summaries", summaries, "summary.csv files")->required()->check(CLI::ExistingFile);
    report->add_option("--out", report_out, "also write the table to this file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            return run_train(train_opts, quiet);
        }
        if (*hpo) {
            return run_hpo(hpo_opts, random_sampler, no_prune);
        }
        if (*eval) {
            return run_eval(checkpoint, eval_env, episodes, eval_seed);
        }
        return run_report(summaries, report_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
