#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "nogte/a2c.hpp"

namespace nogte {

// Parse failure carrying "<source>:<line>: message".
class ConfigParseError : public std::runtime_error {
public:
    ConfigParseError(const std::string& source, std::size_t line, const std::string& message)
        : std::runtime_error(source + ":" + std::to_string(line) + ": " + message), line_(line) {}
    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

struct ExperimentConfig {
    std::string env = "cartpole";
    Variant variant = Variant::a2c_nog_te;
    Hyperparameters hp;
    std::vector<std::uint64_t> seeds{0};
    std::size_t max_steps = 20000;
    double threshold = 195.0;
    std::size_t window = 100;
    std::filesystem::path out = "runs";
    std::size_t workers = 0;  // 0: hardware concurrency

    // hpo subcommand only
    std::size_t n_trials = 30;
    std::size_t budget_steps = 3000;
    std::size_t parallelism = 1;
    std::uint64_t study_seed = 0;
};

// Named hyperparameter sets: "<env>/<variant>" for the four tuned
// combinations of cartpole / energy-mountain-car with a2c / a2c-nog-te.
std::optional<Hyperparameters> preset(std::string_view env, Variant variant);
std::vector<std::string> preset_names();

// "0..9", "3", "1,4,7" (ranges may appear in comma lists).
std::vector<std::uint64_t> parse_seed_list(std::string_view text);

// key = value lines, '#' comments. A `preset` key loads a named preset and
// later keys override its fields. Threshold defaults per environment.
ExperimentConfig parse_config(std::string_view text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);
// Final consistency check (hyperparameters match variant, seeds non-empty).
void finalize(ExperimentConfig& cfg);

struct ConfidenceInterval {
    double mean = 0.0;
    double half_width = 0.0;
    double level = 0.95;
    std::size_t n = 0;
};

// mean +- t_{n-1, (1+level)/2} * s / sqrt(n). Throws for n < 2.
ConfidenceInterval confidence_interval(std::span<const double> samples, double level = 0.95);

// baseline.mean / variant.mean rounded to two decimals.
double speedup(const ConfidenceInterval& baseline, const ConfidenceInterval& variant);

struct RunSummary {
    std::string env;
    Variant variant = Variant::a2c;
    std::uint64_t seed = 0;
    bool solved = false;
    std::size_t steps_to_solve = 0;
    double wall_s = 0.0;
};

std::string summary_csv(std::span<const RunSummary> rows);
std::vector<RunSummary> parse_summary_csv(std::string_view text, const std::string& source = "<summary>");

struct ReportRow {
    std::string env;
    Variant variant = Variant::a2c;
    std::size_t n = 0;         // solved runs entering the interval
    std::size_t unsolved = 0;
    std::optional<ConfidenceInterval> ci;  // absent when fewer than two solved runs
    double mean = 0.0;
    std::optional<double> speedup_vs_a2c;
};

// Groups summaries by (env, variant). Duplicate (env, variant, seed) rows are
// rejected.
std::vector<ReportRow> build_report(std::span<const RunSummary> rows);
std::string report_csv(std::span<const ReportRow> rows);

// metrics.csv header plus one line per step.
std::string metrics_csv_header();
std::string metrics_csv_line(const StepStats& s);

// Runs train_until_solved for every seed, writing
//   <out>/metrics-seed-<s>.csv, <out>/checkpoint-seed-<s>.txt, <out>/summary.csv
std::vector<RunSummary> run_experiment(const ExperimentConfig& cfg, bool verbose = false);

}  // namespace nogte
