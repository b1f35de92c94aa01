#include "nogte/hpo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "nogte/envs.hpp"

namespace nogte {

namespace {

using json = nlohmann::json;

double to_internal(const Dimension& d, double v) { return d.kind == DimKind::log_uniform ? std::log(v) : v; }
double from_internal(const Dimension& d, double u) { return d.kind == DimKind::log_uniform ? std::exp(u) : u; }
double internal_low(const Dimension& d) { return to_internal(d, d.low); }
double internal_high(const Dimension& d) { return to_internal(d, d.high); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Interior sample so that open intervals stay open.
double sample_open(Rng& rng, double lo, double hi) {
    double u = rng.uniform(lo, hi);
    while (u <= lo) {
        u = rng.uniform(lo, hi);
    }
    return u;
}

// Gaussian mixture over [lo, hi] plus one uniform prior component; every
// component carries weight 1/(n+1).
struct Parzen {
    std::vector<double> mu;
    std::vector<double> sigma;
    double lo = 0.0;
    double hi = 1.0;

    Parzen(std::span<const double> points, double lo_, double hi_) : lo(lo_), hi(hi_) {
        const double range = hi - lo;
        const double n = static_cast<double>(points.size());
        double sd = 0.0;
        if (points.size() > 1) {
            double m = 0.0;
            for (double p : points) {
                m += p;
            }
            m /= n;
            for (double p : points) {
                sd += (p - m) * (p - m);
            }
            sd = std::sqrt(sd / (n - 1.0));
        }
        // Scott-like bandwidth with a floor at a tenth of the range.
        const double bw = n > 0.0 ? std::min(range, std::max(1.06 * sd, 0.1 * range) * std::pow(n, -0.2)) : range;
        for (double p : points) {
            mu.push_back(p);
            sigma.push_back(bw);
        }
    }

    [[nodiscard]] double density(double x) const {
        const double w = 1.0 / static_cast<double>(mu.size() + 1);
        double d = w / (hi - lo);
        for (std::size_t i = 0; i < mu.size(); ++i) {
            const double s = sigma[i];
            const double z = (x - mu[i]) / s;
            const double mass = normal_cdf((hi - mu[i]) / s) - normal_cdf((lo - mu[i]) / s);
            d += w * std::exp(-0.5 * z * z) / (s * std::sqrt(2.0 * std::numbers::pi) * std::max(mass, 1e-300));
        }
        return d;
    }

    double sample(Rng& rng) const {
        const std::size_t c = rng.index(mu.size() + 1);
        if (c == mu.size()) {
            return sample_open(rng, lo, hi);
        }
        for (int attempt = 0; attempt < 64; ++attempt) {
            const double x = rng.normal(mu[c], sigma[c]);
            if (x > lo && x < hi) {
                return x;
            }
        }
        return std::clamp(mu[c], std::nextafter(lo, hi), std::nextafter(hi, lo));
    }
};

std::vector<double> category_weights(const Dimension& d, std::span<const double> values) {
    std::vector<double> w(d.choices.size(), 1.0);
    for (double v : values) {
        for (std::size_t i = 0; i < d.choices.size(); ++i) {
            if (v == d.choices[i]) {
                w[i] += 1.0;
            }
        }
    }
    double s = 0.0;
    for (double x : w) {
        s += x;
    }
    for (double& x : w) {
        x /= s;
    }
    return w;
}

json params_json(const ParamPoint& p) {
    json j = json::object();
    for (const auto& [k, v] : p) {
        j[k] = v;
    }
    return j;
}

json trial_json(const Trial& t) {
    json j;
    j["id"] = t.id;
    j["seed"] = t.seed;
    j["params"] = params_json(t.params);
    j["status"] = status_name(t.status);
    json curve = json::array();
    for (const auto& [step, v] : t.curve) {
        curve.push_back({{"step", step}, {"reward_ema", v}});
    }
    j["curve"] = curve;
    j["objective"] = t.objective ? json(*t.objective) : json(nullptr);
    return j;
}

const char* kind_name(DimKind k) {
    switch (k) {
        case DimKind::categorical: return "categorical";
        case DimKind::uniform: return "uniform";
        case DimKind::log_uniform: return "log-uniform";
    }
    return "unknown";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << text;
}

}  // namespace

bool Dimension::contains(double v) const {
    if (kind == DimKind::categorical) {
        return std::find(choices.begin(), choices.end(), v) != choices.end();
    }
    return v > low && v < high;
}

SearchSpace default_search_space(Variant variant) {
    SearchSpace s;
    s.dims.push_back({"gamma", DimKind::categorical, {0.9, 0.99, 0.999}, 0, 0});
    s.dims.push_back({"n_steps", DimKind::categorical, {8, 16, 32, 64}, 0, 0});
    s.dims.push_back({"lr", DimKind::log_uniform, {}, 1e-5, 1e-2});
    s.dims.push_back({"max_grad_norm", DimKind::uniform, {}, 0.0, 2.0});
    if (uses_alpha(variant)) {
        s.dims.push_back({"alpha", DimKind::log_uniform, {}, 1e-4, 1e-1});
    }
    if (uses_beta(variant)) {
        s.dims.push_back({"beta", DimKind::uniform, {}, 0.0, 1.0});
    }
    if (uses_te(variant)) {
        s.dims.push_back({"target_entropy", DimKind::uniform, {}, 0.0, 0.2});
    }
    return s;
}

void validate(const SearchSpace& space) {
    if (space.dims.empty()) {
        throw std::invalid_argument("search space has no dimensions");
    }
    for (const auto& d : space.dims) {
        if (d.kind == DimKind::categorical) {
            if (d.choices.empty()) {
                throw std::invalid_argument("categorical dimension '" + d.name + "' has no choices");
            }
            continue;
        }
        if (!(d.low < d.high)) {
            throw std::invalid_argument("dimension '" + d.name + "' has unordered bounds");
        }
        if (d.kind == DimKind::log_uniform && !(d.low > 0.0)) {
            throw std::invalid_argument("log-uniform dimension '" + d.name + "' needs positive bounds");
        }
    }
}

std::string_view status_name(TrialStatus s) noexcept {
    switch (s) {
        case TrialStatus::running: return "running";
        case TrialStatus::pruned: return "pruned";
        case TrialStatus::complete: return "complete";
        case TrialStatus::failed: return "failed";
    }
    return "unknown";
}

Hyperparameters to_hyperparameters(const ParamPoint& p, Variant variant) {
    auto get = [&](const char* key) {
        const auto it = p.find(key);
        if (it == p.end()) {
            throw ConfigError(std::string("parameter point lacks '") + key + "'");
        }
        return it->second;
    };
    Hyperparameters hp;
    hp.gamma = get("gamma");
    hp.n_steps = static_cast<std::size_t>(std::llround(get("n_steps")));
    hp.lr = get("lr");
    hp.max_grad_norm = get("max_grad_norm");
    if (uses_alpha(variant)) {
        hp.alpha = get("alpha");
    }
    if (uses_beta(variant)) {
        hp.beta = get("beta");
    }
    if (uses_te(variant)) {
        hp.target_entropy = get("target_entropy");
    }
    validate(hp, variant);
    return hp;
}

ParamPoint to_param_point(const Hyperparameters& hp) {
    ParamPoint p{{"gamma", hp.gamma},
                 {"n_steps", static_cast<double>(hp.n_steps)},
                 {"lr", hp.lr},
                 {"max_grad_norm", hp.max_grad_norm}};
    if (hp.alpha) {
        p["alpha"] = *hp.alpha;
    }
    if (hp.beta) {
        p["beta"] = *hp.beta;
    }
    if (hp.target_entropy) {
        p["target_entropy"] = *hp.target_entropy;
    }
    return p;
}

ParamPoint random_suggest(const SearchSpace& space, Rng& rng) {
    validate(space);
    ParamPoint p;
    for (const auto& d : space.dims) {
        if (d.kind == DimKind::categorical) {
            p[d.name] = d.choices[rng.index(d.choices.size())];
        } else {
            p[d.name] = from_internal(d, sample_open(rng, internal_low(d), internal_high(d)));
            // exp(log(x)) may round onto a bound.
            p[d.name] = std::clamp(p[d.name], std::nextafter(d.low, d.high), std::nextafter(d.high, d.low));
        }
    }
    return p;
}

ParamPoint tpe_suggest(const SearchSpace& space, std::span<const Trial> history, Rng& rng,
                       const TpeSettings& settings) {
    validate(space);
    std::vector<const Trial*> done;
    for (const auto& t : history) {
        if (t.status == TrialStatus::complete && t.objective) {
            done.push_back(&t);
        }
    }
    if (done.size() < settings.n_startup || done.empty()) {
        return random_suggest(space, rng);
    }
    const bool all_equal = std::all_of(done.begin(), done.end(),
                                       [&](const Trial* t) { return *t->objective == *done.front()->objective; });
    if (all_equal) {
        return random_suggest(space, rng);
    }
    std::stable_sort(done.begin(), done.end(),
                     [](const Trial* a, const Trial* b) { return *a->objective > *b->objective; });
    const auto n_good = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(settings.gamma * static_cast<double>(done.size()))));

    ParamPoint out;
    for (const auto& d : space.dims) {
        std::vector<double> good, bad;
        for (std::size_t i = 0; i < done.size(); ++i) {
            const auto it = done[i]->params.find(d.name);
            if (it == done[i]->params.end()) {
                continue;
            }
            (i < n_good ? good : bad).push_back(d.kind == DimKind::categorical ? it->second
                                                                                : to_internal(d, it->second));
        }
        if (d.kind == DimKind::categorical) {
            const auto l = category_weights(d, good);
            const auto g = category_weights(d, bad);
            std::size_t best = 0;
            double best_score = -1.0;
            for (std::size_t c = 0; c < settings.n_candidates; ++c) {
                const std::size_t idx = rng.categorical(l);
                const double score = l[idx] / g[idx];
                if (score > best_score) {
                    best_score = score;
                    best = idx;
                }
            }
            out[d.name] = d.choices[best];
            continue;
        }
        const Parzen l(good, internal_low(d), internal_high(d));
        const Parzen g(bad, internal_low(d), internal_high(d));
        double best = l.sample(rng);
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < settings.n_candidates; ++c) {
            const double x = c == 0 ? best : l.sample(rng);
            const double score = std::log(l.density(x)) - std::log(g.density(x));
            if (score > best_score) {
                best_score = score;
                best = x;
            }
        }
        out[d.name] = std::clamp(from_internal(d, best), std::nextafter(d.low, d.high), std::nextafter(d.high, d.low));
    }
    return out;
}

SuccessiveHalvingPruner::SuccessiveHalvingPruner(std::size_t min_resource, std::size_t eta,
                                                 std::size_t report_interval)
    : min_resource_(min_resource), eta_(eta), interval_(report_interval) {
    if (min_resource == 0 || eta < 2 || report_interval == 0) {
        throw std::invalid_argument("SuccessiveHalvingPruner: need min_resource > 0, eta >= 2, interval > 0");
    }
}

bool SuccessiveHalvingPruner::is_rung(std::size_t step) const {
    if (step < min_resource_ || step % min_resource_ != 0) {
        return false;
    }
    std::size_t r = step / min_resource_;
    while (r % eta_ == 0) {
        r /= eta_;
    }
    return r == 1;
}

void SuccessiveHalvingPruner::observe(std::size_t trial, std::size_t step, double value) {
    if (step == 0 || step % interval_ != 0) {
        throw std::invalid_argument("pruner: step " + std::to_string(step) + " is not a multiple of " +
                                    std::to_string(interval_));
    }
    const auto it = last_.find(trial);
    if (it != last_.end() && step <= it->second.first) {
        throw std::invalid_argument("pruner: out-of-order report for trial " + std::to_string(trial) + " (step " +
                                    std::to_string(step) + " after " + std::to_string(it->second.first) + ")");
    }
    last_[trial] = {step, value};
    if (is_rung(step)) {
        rungs_[step].emplace_back(trial, value);
    }
}

bool SuccessiveHalvingPruner::should_prune(std::size_t trial) const {
    const auto it = last_.find(trial);
    if (it == last_.end()) {
        return false;
    }
    const auto [step, own] = it->second;
    const auto rung = rungs_.find(step);
    if (rung == rungs_.end()) {
        return false;
    }
    std::vector<double> values;
    std::size_t earlier = 0;
    for (const auto& [t, v] : rung->second) {
        values.push_back(v);
        if (t != trial) {
            ++earlier;
        }
    }
    if (earlier < eta_) {
        return false;
    }
    const std::size_t keep = std::max<std::size_t>(1, values.size() / eta_);
    std::sort(values.begin(), values.end(), std::greater<>());
    return own < values[keep - 1];
}

Study::Study(SearchSpace space, StudySettings settings)
    : space_(std::move(space)),
      settings_(settings),
      rng_(settings.seed),
      pruner_(settings.report_interval, settings.eta, settings.report_interval) {
    validate(space_);
    if (settings_.n_trials == 0) {
        throw std::invalid_argument("Study: n_trials must be at least 1");
    }
}

std::size_t Study::ask() {
    std::lock_guard lock(mutex_);
    Trial t;
    t.id = trials_.size();
    t.params = settings_.sampler == SamplerKind::tpe ? tpe_suggest(space_, trials_, rng_, settings_.tpe)
                                                     : random_suggest(space_, rng_);
    t.seed = rng_.split();
    trials_.push_back(std::move(t));
    return trials_.back().id;
}

bool Study::report(std::size_t id, std::size_t step, double value) {
    std::lock_guard lock(mutex_);
    Trial& t = trials_.at(id);
    pruner_.observe(id, step, value);
    t.curve.emplace_back(step, value);
    return settings_.prune && pruner_.should_prune(id);
}

void Study::mark_pruned(std::size_t id) {
    std::lock_guard lock(mutex_);
    trials_.at(id).status = TrialStatus::pruned;
}

void Study::tell(std::size_t id, double objective) {
    std::lock_guard lock(mutex_);
    Trial& t = trials_.at(id);
    t.status = TrialStatus::complete;
    t.objective = objective;
}

void Study::mark_failed(std::size_t id) {
    std::lock_guard lock(mutex_);
    trials_.at(id).status = TrialStatus::failed;
}

Trial Study::trial(std::size_t id) const {
    std::lock_guard lock(mutex_);
    return trials_.at(id);
}

std::vector<Trial> Study::trials() const {
    std::lock_guard lock(mutex_);
    return trials_;
}

std::optional<Trial> Study::best() const {
    std::lock_guard lock(mutex_);
    std::optional<Trial> best;
    for (const auto& t : trials_) {
        if (t.status == TrialStatus::complete && (!best || *t.objective > *best->objective)) {
            best = t;
        }
    }
    return best;
}

StudyReport run_study(Study& study, const TrialFn& fn) {
    const std::size_t n = study.settings().n_trials;
    std::atomic<std::size_t> launched{0};
    auto worker = [&] {
        while (launched.fetch_add(1) < n) {
            const std::size_t id = study.ask();
            const Trial t = study.trial(id);
            try {
                bool pruned = false;
                const ReportFn report = [&](std::size_t step, double value) {
                    pruned = study.report(id, step, value);
                    return pruned;
                };
                const std::optional<double> objective = fn(t.params, t.seed, report);
                if (objective && !pruned) {
                    study.tell(id, *objective);
                } else {
                    study.mark_pruned(id);
                }
            } catch (const std::exception& e) {
                std::fprintf(stderr, "trial %zu failed: %s\n", id, e.what());
                study.mark_failed(id);
            }
        }
    };
    const std::size_t threads = std::max<std::size_t>(1, std::min(study.settings().parallelism, n));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t i = 0; i < threads; ++i) {
            pool.emplace_back(worker);
        }
    }
    StudyReport rep;
    rep.trials = study.trials();
    rep.best = study.best();
    rep.no_completed_trial = !rep.best.has_value();
    return rep;
}

TrialFn make_rl_trial(std::string env_name, Variant variant, std::size_t budget_steps, std::size_t report_interval,
                      std::size_t eval_episodes) {
    if (budget_steps == 0 || report_interval == 0) {
        throw std::invalid_argument("make_rl_trial: budget and report interval must be positive");
    }
    return [=](const ParamPoint& params, std::uint64_t seed, const ReportFn& report) -> std::optional<double> {
        const Hyperparameters hp = to_hyperparameters(params, variant);
        Rng seeder(seed);
        Trainer trainer(make_env(env_name, seeder.split()), hp, variant, seeder.split());
        while (trainer.steps() < budget_steps) {
            trainer.train_step();
            if (trainer.steps() % report_interval == 0 && report(trainer.steps(), trainer.reward_ema().value())) {
                return std::nullopt;
            }
        }
        auto env = make_env(env_name, seeder.split());
        return evaluate_policy(trainer.net(), *env, eval_episodes, seeder.split());
    };
}

void write_study(const std::filesystem::path& dir, const Study& study, const StudyReport& report,
                 const std::map<std::string, std::string>& meta) {
    std::filesystem::create_directories(dir);
    const StudySettings& s = study.settings();
    json js;
    json dims = json::array();
    for (const auto& d : study.space().dims) {
        json jd{{"name", d.name}, {"kind", kind_name(d.kind)}};
        if (d.kind == DimKind::categorical) {
            jd["choices"] = d.choices;
        } else {
            jd["low"] = d.low;
            jd["high"] = d.high;
        }
        dims.push_back(jd);
    }
    js["space"] = dims;
    js["settings"] = {{"seed", s.seed},
                      {"n_trials", s.n_trials},
                      {"sampler", s.sampler == SamplerKind::tpe ? "tpe" : "random"},
                      {"tpe_n_startup", s.tpe.n_startup},
                      {"tpe_gamma", s.tpe.gamma},
                      {"tpe_n_candidates", s.tpe.n_candidates},
                      {"prune", s.prune},
                      {"report_interval", s.report_interval},
                      {"eta", s.eta},
                      {"parallelism", s.parallelism}};
    json jseeds = json::array();
    for (const auto& t : report.trials) {
        jseeds.push_back(t.seed);
    }
    js["trial_seeds"] = jseeds;
    for (const auto& [k, v] : meta) {
        js["meta"][k] = v;
    }
    js["no_completed_trial"] = report.no_completed_trial;
    write_text(dir / "study.json", js.dump(2) + "\n");

    for (const auto& t : report.trials) {
        char name[32];
        std::snprintf(name, sizeof name, "trial-%03zu.json", t.id);
        write_text(dir / name, trial_json(t).dump(2) + "\n");
    }
    write_text(dir / "best.json", (report.best ? trial_json(*report.best) : json(nullptr)).dump(2) + "\n");

    // Objective per trial plus the running best.
    std::string obj = "trial,status,objective,best_so_far\n";
    std::optional<double> best_so_far;
    char buf[256];
    for (const auto& t : report.trials) {
        if (t.objective && (!best_so_far || *t.objective > *best_so_far)) {
            best_so_far = t.objective;
        }
        std::snprintf(buf, sizeof buf, "%zu,%s,", t.id, std::string(status_name(t.status)).c_str());
        obj += buf;
        if (t.objective) {
            std::snprintf(buf, sizeof buf, "%.10g", *t.objective);
            obj += buf;
        }
        obj += ',';
        if (best_so_far) {
            std::snprintf(buf, sizeof buf, "%.10g", *best_so_far);
            obj += buf;
        }
        obj += '\n';
    }
    write_text(dir / "objective_vs_trial.csv", obj);

    std::string pc = "trial,status";
    for (const auto& d : study.space().dims) {
        pc += "," + d.name;
    }
    pc += ",objective\n";
    for (const auto& t : report.trials) {
        std::snprintf(buf, sizeof buf, "%zu,%s", t.id, std::string(status_name(t.status)).c_str());
        pc += buf;
        for (const auto& d : study.space().dims) {
            const auto it = t.params.find(d.name);
            pc += ',';
            if (it != t.params.end()) {
                std::snprintf(buf, sizeof buf, "%.10g", it->second);
                pc += buf;
            }
        }
        pc += ',';
        if (t.objective) {
            std::snprintf(buf, sizeof buf, "%.10g", *t.objective);
            pc += buf;
        }
        pc += '\n';
    }
    write_text(dir / "parallel_coordinates.csv", pc);
}

}  // namespace nogte
