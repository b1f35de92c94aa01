#include "nogte/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

#include "nogte/envs.hpp"

namespace nogte {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) {
            break;
        }
        start = pos + 1;
    }
    return out;
}

double parse_double(std::string_view v) {
    const std::string s(v);
    std::size_t used = 0;
    const double d = std::stod(s, &used);
    if (used != s.size()) {
        throw std::invalid_argument("trailing characters in number '" + s + "'");
    }
    return d;
}

std::uint64_t parse_u64(std::string_view v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw std::invalid_argument("expected a non-negative integer, got '" + std::string(v) + "'");
    }
    return out;
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p);
    if (!out) {
        throw std::runtime_error("cannot write " + p.string());
    }
    out << text;
}

}  // namespace

std::optional<Hyperparameters> preset(std::string_view env, Variant variant) {
    Hyperparameters hp;
    if (env == "cartpole" && variant == Variant::a2c) {
        hp = {0.99, 64, 0.0009591, 0.3898, 0.0006986, 0.5996, std::nullopt};
    } else if (env == "cartpole" && variant == Variant::a2c_nog_te) {
        hp = {0.99, 64, 0.001642, 1.3569, std::nullopt, std::nullopt, 0.166};
    } else if (env == "energy-mountain-car" && variant == Variant::a2c) {
        hp = {0.999, 16, 0.0007139, 1.419, 0.0003160, 0.1833, std::nullopt};
    } else if (env == "energy-mountain-car" && variant == Variant::a2c_nog_te) {
        hp = {0.999, 64, 0.00003798, 0.2302, std::nullopt, std::nullopt, 0.0739};
    } else {
        return std::nullopt;
    }
    return hp;
}

std::vector<std::string> preset_names() {
    return {"cartpole/a2c", "cartpole/a2c-nog-te", "energy-mountain-car/a2c", "energy-mountain-car/a2c-nog-te"};
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
    std::vector<std::uint64_t> seeds;
    for (std::string_view part : split(text, ',')) {
        part = trim(part);
        if (part.empty()) {
            throw std::invalid_argument("empty entry in seed list");
        }
        const auto dots = part.find("..");
        if (dots == std::string_view::npos) {
            seeds.push_back(parse_u64(part));
            continue;
        }
        const std::uint64_t lo = parse_u64(trim(part.substr(0, dots)));
        const std::uint64_t hi = parse_u64(trim(part.substr(dots + 2)));
        if (hi < lo) {
            throw std::invalid_argument("descending seed range '" + std::string(part) + "'");
        }
        for (std::uint64_t s = lo; s <= hi; ++s) {
            seeds.push_back(s);
        }
    }
    if (seeds.empty()) {
        throw std::invalid_argument("seed list is empty");
    }
    return seeds;
}

ExperimentConfig parse_config(std::string_view text, const std::string& source) {
    ExperimentConfig cfg;
    bool threshold_set = false;
    std::map<std::string, std::size_t> seen;
    std::size_t line_no = 0;
    // Hyperparameter keys are applied after the preset so a preset may appear anywhere.
    std::optional<std::pair<std::string, std::size_t>> preset_key;
    std::vector<std::tuple<std::string, std::string, std::size_t>> hp_keys;

    for (std::string_view raw : split(text, '\n')) {
        ++line_no;
        std::string_view line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigParseError(source, line_no, "expected 'key = value'");
        }
        const std::string key(trim(line.substr(0, eq)));
        const std::string value(trim(line.substr(eq + 1)));
        if (key.empty() || value.empty()) {
            throw ConfigParseError(source, line_no, "empty key or value");
        }
        if (const auto [it, fresh] = seen.emplace(key, line_no); !fresh) {
            throw ConfigParseError(source, line_no,
                                   "duplicate key '" + key + "' (first set on line " + std::to_string(it->second) + ")");
        }
        try {
            if (key == "env") {
                default_solve_threshold(value);  // validates the name
                cfg.env = value;
            } else if (key == "variant") {
                cfg.variant = parse_variant(value);
            } else if (key == "preset") {
                preset_key = {value, line_no};
            } else if (key == "gamma" || key == "n_steps" || key == "lr" || key == "max_grad_norm" ||
                       key == "alpha" || key == "beta" || key == "target_entropy") {
                hp_keys.emplace_back(key, value, line_no);
            } else if (key == "seeds") {
                cfg.seeds = parse_seed_list(value);
            } else if (key == "max_steps") {
                cfg.max_steps = parse_u64(value);
            } else if (key == "threshold") {
                cfg.threshold = parse_double(value);
                threshold_set = true;
            } else if (key == "window") {
                cfg.window = parse_u64(value);
            } else if (key == "out") {
                cfg.out = value;
            } else if (key == "workers") {
                cfg.workers = parse_u64(value);
            } else if (key == "n_trials") {
                cfg.n_trials = parse_u64(value);
            } else if (key == "budget_steps") {
                cfg.budget_steps = parse_u64(value);
            } else if (key == "parallelism") {
                cfg.parallelism = parse_u64(value);
            } else if (key == "study_seed") {
                cfg.study_seed = parse_u64(value);
            } else {
                throw std::invalid_argument("unknown key '" + key + "'");
            }
        } catch (const ConfigParseError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigParseError(source, line_no, e.what());
        }
    }

    if (preset_key) {
        const auto slash = preset_key->first.find('/');
        std::optional<Hyperparameters> hp;
        if (slash != std::string::npos) {
            try {
                hp = preset(preset_key->first.substr(0, slash), parse_variant(preset_key->first.substr(slash + 1)));
            } catch (const ConfigError&) {
                hp.reset();
            }
        }
        if (!hp) {
            throw ConfigParseError(source, preset_key->second, "unknown preset '" + preset_key->first + "'");
        }
        cfg.hp = *hp;
    }
    for (const auto& [key, value, ln] : hp_keys) {
        try {
            if (key == "gamma") {
                cfg.hp.gamma = parse_double(value);
            } else if (key == "n_steps") {
                cfg.hp.n_steps = parse_u64(value);
            } else if (key == "lr") {
                cfg.hp.lr = parse_double(value);
            } else if (key == "max_grad_norm") {
                cfg.hp.max_grad_norm = parse_double(value);
            } else if (key == "alpha") {
                cfg.hp.alpha = parse_double(value);
            } else if (key == "beta") {
                cfg.hp.beta = parse_double(value);
            } else if (key == "target_entropy") {
                cfg.hp.target_entropy = parse_double(value);
            }
        } catch (const std::exception& e) {
            throw ConfigParseError(source, ln, e.what());
        }
    }
    if (!threshold_set) {
        cfg.threshold = default_solve_threshold(cfg.env);
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open config " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

void finalize(ExperimentConfig& cfg) {
    if (cfg.seeds.empty()) {
        throw ConfigError("seed list must not be empty");
    }
    if (cfg.max_steps == 0 || cfg.window == 0) {
        throw ConfigError("max_steps and window must be positive");
    }
    validate(cfg.hp, cfg.variant);
}

ConfidenceInterval confidence_interval(std::span<const double> samples, double level) {
    if (samples.size() < 2) {
        throw std::invalid_argument("confidence_interval: need at least two samples");
    }
    if (!(level > 0.0 && level < 1.0)) {
        throw std::invalid_argument("confidence_interval: level must lie in (0, 1)");
    }
    const double n = static_cast<double>(samples.size());
    double mean = 0.0;
    for (double x : samples) {
        mean += x;
    }
    mean /= n;
    double ss = 0.0;
    for (double x : samples) {
        ss += (x - mean) * (x - mean);
    }
    const double sd = std::sqrt(ss / (n - 1.0));
    const boost::math::students_t dist(n - 1.0);
    const double t = boost::math::quantile(dist, 0.5 + level / 2.0);
    return {mean, t * sd / std::sqrt(n), level, samples.size()};
}

double speedup(const ConfidenceInterval& baseline, const ConfidenceInterval& variant) {
    if (!(variant.mean > 0.0)) {
        throw std::invalid_argument("speedup: variant mean must be positive");
    }
    return std::round(baseline.mean / variant.mean * 100.0) / 100.0;
}

std::string summary_csv(std::span<const RunSummary> rows) {
    std::string out = "env,variant,seed,solved,steps_to_solve,wall_s\n";
    for (const auto& r : rows) {
        out += r.env + "," + std::string(variant_name(r.variant)) + "," + std::to_string(r.seed) + "," +
               (r.solved ? "1" : "0") + "," + (r.solved ? std::to_string(r.steps_to_solve) : "") + "," +
               fmt("%.3f", r.wall_s) + "\n";
    }
    return out;
}

std::vector<RunSummary> parse_summary_csv(std::string_view text, const std::string& source) {
    std::vector<RunSummary> rows;
    std::size_t line_no = 0;
    for (std::string_view line : split(text, '\n')) {
        ++line_no;
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        if (line_no == 1) {
            if (line != "env,variant,seed,solved,steps_to_solve,wall_s") {
                throw ConfigParseError(source, line_no, "unexpected summary header");
            }
            continue;
        }
        const auto f = split(line, ',');
        if (f.size() != 6) {
            throw ConfigParseError(source, line_no, "expected 6 fields, got " + std::to_string(f.size()));
        }
        try {
            RunSummary r;
            r.env = std::string(f[0]);
            r.variant = parse_variant(f[1]);
            r.seed = parse_u64(f[2]);
            r.solved = f[3] == "1";
            if (r.solved) {
                r.steps_to_solve = parse_u64(f[4]);
            }
            r.wall_s = parse_double(f[5]);
            rows.push_back(std::move(r));
        } catch (const std::exception& e) {
            throw ConfigParseError(source, line_no, e.what());
        }
    }
    return rows;
}

std::vector<ReportRow> build_report(std::span<const RunSummary> rows) {
    std::map<std::pair<std::string, Variant>, std::vector<const RunSummary*>> groups;
    std::set<std::tuple<std::string, Variant, std::uint64_t>> keys;
    for (const auto& r : rows) {
        if (!keys.emplace(r.env, r.variant, r.seed).second) {
            throw std::invalid_argument("duplicate run for " + r.env + "/" + std::string(variant_name(r.variant)) +
                                        " seed " + std::to_string(r.seed));
        }
        groups[{r.env, r.variant}].push_back(&r);
    }
    std::vector<ReportRow> out;
    for (const auto& [key, runs] : groups) {
        ReportRow row;
        row.env = key.first;
        row.variant = key.second;
        std::vector<double> steps;
        for (const RunSummary* r : runs) {
            if (r->solved) {
                steps.push_back(static_cast<double>(r->steps_to_solve));
            } else {
                ++row.unsolved;
            }
        }
        row.n = steps.size();
        if (steps.size() >= 2) {
            row.ci = confidence_interval(steps);
            row.mean = row.ci->mean;
        } else if (steps.size() == 1) {
            row.mean = steps[0];
        }
        out.push_back(std::move(row));
    }
    for (auto& row : out) {
        const auto base = std::find_if(out.begin(), out.end(), [&](const ReportRow& r) {
            return r.env == row.env && r.variant == Variant::a2c;
        });
        if (base != out.end() && base->n > 0 && row.n > 0) {
            row.speedup_vs_a2c = speedup(ConfidenceInterval{base->mean, 0, 0.95, base->n},
                                         ConfidenceInterval{row.mean, 0, 0.95, row.n});
        }
    }
    return out;
}

std::string report_csv(std::span<const ReportRow> rows) {
    std::string out = "env,variant,n,mean,ci95,speedup_vs_a2c,unsolved\n";
    for (const auto& r : rows) {
        out += r.env + "," + std::string(variant_name(r.variant)) + "," + std::to_string(r.n) + ",";
        out += (r.n > 0 ? fmt("%.1f", r.mean) : std::string()) + ",";
        out += (r.ci ? fmt("%.1f", r.ci->half_width) : std::string()) + ",";
        out += (r.speedup_vs_a2c ? fmt("%.2f", *r.speedup_vs_a2c) : std::string()) + ",";
        out += std::to_string(r.unsolved) + "\n";
    }
    return out;
}

std::string metrics_csv_header() { return "step,episodes_done,mean_ep_reward,pg_loss,v_loss,entropy,epsilon,wall_ms\n"; }

std::string metrics_csv_line(const StepStats& s) {
    std::string line = std::to_string(s.step) + "," + std::to_string(s.episodes_total) + ",";
    line += std::isnan(s.mean_ep_reward) ? std::string() : fmt("%.6g", s.mean_ep_reward);
    line += "," + fmt("%.6g", s.pg_loss) + "," + fmt("%.6g", s.v_loss) + "," + fmt("%.6g", s.entropy_used) + "," +
            fmt("%.6g", s.epsilon) + "," + fmt("%.3f", s.wall_ms) + "\n";
    return line;
}

std::vector<RunSummary> run_experiment(const ExperimentConfig& cfg_in, bool verbose) {
    ExperimentConfig cfg = cfg_in;
    finalize(cfg);
    std::filesystem::create_directories(cfg.out);

    std::vector<RunSummary> results(cfg.seeds.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < cfg.seeds.size(); i = next.fetch_add(1)) {
            const std::uint64_t seed = cfg.seeds[i];
            const auto metrics_path = cfg.out / ("metrics-seed-" + std::to_string(seed) + ".csv");
            std::ofstream metrics(metrics_path);
            if (!metrics) {
                throw std::runtime_error("cannot write " + metrics_path.string());
            }
            metrics << metrics_csv_header();
            const SolveCriteria criteria{cfg.threshold, cfg.window, cfg.max_steps};
            RunResult run = train_until_solved(cfg.env, cfg.hp, cfg.variant, seed, criteria,
                                               [&](const StepStats& s) { metrics << metrics_csv_line(s); });
            run.net.save(cfg.out / ("checkpoint-seed-" + std::to_string(seed) + ".txt"));
            results[i] = RunSummary{cfg.env, cfg.variant, seed, run.solved, run.steps_to_solve, run.wall_s};
            if (verbose) {
                std::lock_guard lock(log_mutex);
                if (run.solved) {
                    std::printf("seed %llu: solved at step %zu (%.1fs)\n", static_cast<unsigned long long>(seed),
                                run.steps_to_solve, run.wall_s);
                } else {
                    std::printf("seed %llu: unsolved after %zu steps (%.1fs)\n",
                                static_cast<unsigned long long>(seed), run.steps_run, run.wall_s);
                }
                std::fflush(stdout);
            }
        }
    };
    std::size_t workers = cfg.workers != 0 ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, cfg.seeds.size());
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t i = 0; i < workers; ++i) {
            pool.emplace_back(worker);
        }
    }
    write_file(cfg.out / "summary.csv", summary_csv(results));
    return results;
}

}  // namespace nogte
