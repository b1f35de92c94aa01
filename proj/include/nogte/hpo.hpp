#pragma once

// Hyperparameter search: a Tree-structured Parzen Estimator sampler, an
// asynchronous successive-halving pruner and the study ledger tying them
// together.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nogte/a2c.hpp"
#include "nogte/rng.hpp"

namespace nogte {

enum class DimKind : std::uint8_t { categorical, uniform, log_uniform };

struct Dimension {
    std::string name;
    DimKind kind = DimKind::uniform;
    std::vector<double> choices;  // categorical only
    double low = 0.0;             // continuous only, open interval (low, high)
    double high = 1.0;

    [[nodiscard]] bool contains(double v) const;
};

struct SearchSpace {
    std::vector<Dimension> dims;
};

// The seven search dimensions, restricted to those the variant uses.
SearchSpace default_search_space(Variant variant);
// Throws std::invalid_argument for empty spaces or malformed dimensions.
void validate(const SearchSpace& space);

using ParamPoint = std::map<std::string, double>;

Hyperparameters to_hyperparameters(const ParamPoint& point, Variant variant);
ParamPoint to_param_point(const Hyperparameters& hp);

enum class TrialStatus : std::uint8_t { running, pruned, complete, failed };
std::string_view status_name(TrialStatus s) noexcept;

struct Trial {
    std::size_t id = 0;
    std::uint64_t seed = 0;
    ParamPoint params;
    std::vector<std::pair<std::size_t, double>> curve;  // (step, reward EMA)
    TrialStatus status = TrialStatus::running;
    std::optional<double> objective;  // present iff complete
};

struct TpeSettings {
    std::size_t n_startup = 10;
    double gamma = 0.25;  // fraction of history treated as good
    std::size_t n_candidates = 24;
};

ParamPoint random_suggest(const SearchSpace& space, Rng& rng);

// Only trials with status complete are used. Falls back to random_suggest
// during startup or when every objective is equal.
ParamPoint tpe_suggest(const SearchSpace& space, std::span<const Trial> history, Rng& rng,
                       const TpeSettings& settings = {});

// Asynchronous successive halving. Rungs sit at min_resource * eta^j. At a
// rung, a trial is pruned iff at least eta earlier values exist there and the
// trial's value is below the floor(n/eta)-th largest of the n values at that
// rung (its own included).
class SuccessiveHalvingPruner {
public:
    explicit SuccessiveHalvingPruner(std::size_t min_resource = 1000, std::size_t eta = 2,
                                     std::size_t report_interval = 1000);

    // Throws std::invalid_argument for steps that are not a positive multiple
    // of the report interval or do not increase per trial.
    void observe(std::size_t trial, std::size_t step, double value);
    [[nodiscard]] bool should_prune(std::size_t trial) const;
    [[nodiscard]] bool is_rung(std::size_t step) const;
    [[nodiscard]] std::size_t eta() const noexcept { return eta_; }

private:
    std::size_t min_resource_;
    std::size_t eta_;
    std::size_t interval_;
    std::map<std::size_t, std::pair<std::size_t, double>> last_;               // trial -> (step, value)
    std::map<std::size_t, std::vector<std::pair<std::size_t, double>>> rungs_;  // step -> (trial, value)
};

enum class SamplerKind : std::uint8_t { tpe, random };

struct StudySettings {
    std::uint64_t seed = 0;
    std::size_t n_trials = 20;
    SamplerKind sampler = SamplerKind::tpe;
    TpeSettings tpe;
    bool prune = true;
    std::size_t report_interval = 1000;
    std::size_t eta = 2;
    std::size_t parallelism = 1;
};

// Thread-safe ledger; suggestion and reporting are serialized through it.
class Study {
public:
    Study(SearchSpace space, StudySettings settings);

    std::size_t ask();
    // Records a reward-EMA report; returns true if the trial should stop.
    bool report(std::size_t id, std::size_t step, double value);
    void mark_pruned(std::size_t id);
    void tell(std::size_t id, double objective);
    void mark_failed(std::size_t id);

    [[nodiscard]] Trial trial(std::size_t id) const;
    [[nodiscard]] std::vector<Trial> trials() const;
    [[nodiscard]] std::optional<Trial> best() const;
    [[nodiscard]] const SearchSpace& space() const noexcept { return space_; }
    [[nodiscard]] const StudySettings& settings() const noexcept { return settings_; }

private:
    SearchSpace space_;
    StudySettings settings_;
    Rng rng_;
    SuccessiveHalvingPruner pruner_;
    std::vector<Trial> trials_;
    mutable std::mutex mutex_;
};

// report(step, value) returns true when the trial must stop.
using ReportFn = std::function<bool(std::size_t step, double value)>;
// Returns the objective, or nullopt if the trial stopped because it was pruned.
using TrialFn = std::function<std::optional<double>(const ParamPoint&, std::uint64_t seed, const ReportFn&)>;

struct StudyReport {
    std::vector<Trial> trials;
    std::optional<Trial> best;
    bool no_completed_trial = false;
};

StudyReport run_study(Study& study, const TrialFn& fn);

// Trains one A2C trial for `budget_steps` optimizer steps, reporting the
// reward EMA every `report_interval` steps, then scores the frozen policy on
// `eval_episodes` episodes sampled from the raw network policy.
TrialFn make_rl_trial(std::string env_name, Variant variant, std::size_t budget_steps,
                      std::size_t report_interval = 1000, std::size_t eval_episodes = 100);

// study.json, trial-NNN.json, best.json, objective_vs_trial.csv and
// parallel_coordinates.csv under dir.
void write_study(const std::filesystem::path& dir, const Study& study, const StudyReport& report,
                 const std::map<std::string, std::string>& meta = {});

}  // namespace nogte
