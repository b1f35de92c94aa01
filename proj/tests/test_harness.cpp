#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nogte/harness.hpp"

using namespace nogte;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Drops the last comma-separated field of every line (wall clock columns).
std::string drop_last_column(const std::string& text) {
    std::istringstream in(text);
    std::string out;
    for (std::string line; std::getline(in, line);) {
        out += line.substr(0, line.rfind(',')) + "\n";
    }
    return out;
}

RunSummary run(std::string env, Variant v, std::uint64_t seed, std::optional<std::size_t> steps) {
    RunSummary r;
    r.env = std::move(env);
    r.variant = v;
    r.seed = seed;
    r.solved = steps.has_value();
    r.steps_to_solve = steps.value_or(0);
    r.wall_s = 1.25;
    return r;
}

}  // namespace

TEST(SeedList, RangesSinglesAndMixes) {
    EXPECT_EQ(parse_seed_list("0..3"), (std::vector<std::uint64_t>{0, 1, 2, 3}));
    EXPECT_EQ(parse_seed_list("7"), (std::vector<std::uint64_t>{7}));
    EXPECT_EQ(parse_seed_list("1, 4,7"), (std::vector<std::uint64_t>{1, 4, 7}));
    EXPECT_EQ(parse_seed_list("9,0..1"), (std::vector<std::uint64_t>{9, 0, 1}));
    EXPECT_THROW(parse_seed_list("3..1"), std::invalid_argument);
    EXPECT_THROW(parse_seed_list("1,,2"), std::invalid_argument);
    EXPECT_THROW(parse_seed_list("x"), std::exception);
}

TEST(Config, PresetThenOverride) {
    const auto cfg = parse_config(
        "# comment\n"
        "lr = 0.002   # overrides the preset even though it comes first\n"
        "env = cartpole\n"
        "variant = a2c\n"
        "preset = cartpole/a2c\n"
        "seeds = 0..4\n"
        "max_steps = 1234\n");
    EXPECT_EQ(cfg.env, "cartpole");
    EXPECT_EQ(cfg.variant, Variant::a2c);
    EXPECT_DOUBLE_EQ(cfg.hp.lr, 0.002);
    EXPECT_DOUBLE_EQ(cfg.hp.gamma, 0.99);
    EXPECT_EQ(cfg.hp.n_steps, 64u);
    EXPECT_DOUBLE_EQ(*cfg.hp.alpha, 0.0006986);
    EXPECT_DOUBLE_EQ(*cfg.hp.beta, 0.5996);
    EXPECT_EQ(cfg.seeds.size(), 5u);
    EXPECT_EQ(cfg.max_steps, 1234u);
    EXPECT_DOUBLE_EQ(cfg.threshold, 195.0);
}

TEST(Config, ThresholdFollowsEnvUnlessSet) {
    auto cfg = parse_config("env = energy-mountain-car\npreset = energy-mountain-car/a2c-nog-te\n");
    EXPECT_DOUBLE_EQ(cfg.threshold, 0.45);
    EXPECT_DOUBLE_EQ(*cfg.hp.target_entropy, 0.0739);
    EXPECT_NO_THROW(finalize(cfg));
    cfg = parse_config("env = energy-mountain-car\nthreshold = 0.3\n");
    EXPECT_DOUBLE_EQ(cfg.threshold, 0.3);
}

TEST(Config, ErrorsCarryLineNumbers) {
    const auto line_of = [](const std::string& text) -> std::size_t {
        try {
            parse_config(text, "t.conf");
        } catch (const ConfigParseError& e) {
            EXPECT_EQ(std::string(e.what()).rfind("t.conf:", 0), 0u) << e.what();
            return e.line();
        }
        return 0;
    };
    EXPECT_EQ(line_of("env = cartpole\n\nlr = 1\nlr = 2\n"), 4u);
    EXPECT_EQ(line_of("# x\nbogus = 3\n"), 2u);
    EXPECT_EQ(line_of("env = cartpole\njust words\n"), 2u);
    EXPECT_EQ(line_of("n_steps = many\n"), 1u);
    EXPECT_EQ(line_of("seeds = 0\n\n\npreset = cartpole/nope\n"), 4u);
    EXPECT_EQ(line_of("variant = a2c-sideways\n"), 1u);
    EXPECT_EQ(line_of("lr =\n"), 1u);
}

TEST(Config, FinalizeRejectsMismatchedCoefficients) {
    auto cfg = parse_config("variant = a2c\npreset = cartpole/a2c-nog-te\n");
    EXPECT_THROW(finalize(cfg), ConfigError);
    cfg = parse_config("preset = cartpole/a2c-nog-te\nmax_steps = 0\n");
    EXPECT_THROW(finalize(cfg), ConfigError);
    cfg = parse_config("preset = cartpole/a2c-nog-te\nlr = 0.5\n");
    EXPECT_THROW(finalize(cfg), ConfigError);
}

TEST(Config, ShippedConfigsLoad) {
    const std::filesystem::path dir = NOGTE_CONFIG_DIR;
    std::size_t count = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        auto cfg = load_config(entry.path());
        EXPECT_NO_THROW(finalize(cfg)) << entry.path();
        ++count;
    }
    EXPECT_GE(count, 4u);
    EXPECT_THROW(load_config(dir / "missing.conf"), std::runtime_error);
}

TEST(Presets, AllNamedPresetsResolve) {
    for (const auto& name : preset_names()) {
        const auto slash = name.find('/');
        const Variant v = parse_variant(name.substr(slash + 1));
        const auto hp = preset(name.substr(0, slash), v);
        ASSERT_TRUE(hp) << name;
        EXPECT_NO_THROW(validate(*hp, v)) << name;
    }
    EXPECT_FALSE(preset("cartpole", Variant::a2c_te));
}

TEST(ConfidenceInterval, MatchesTabulatedStudentT) {
    // t quantiles from standard tables: t_{1,0.975}, t_{9,0.975}, t_{4,0.995}.
    const std::vector<double> two{1.0, 3.0};
    auto ci = confidence_interval(two);
    EXPECT_DOUBLE_EQ(ci.mean, 2.0);
    EXPECT_NEAR(ci.half_width, 12.706204736, 1e-8);

    std::vector<double> ten(10);
    for (int i = 0; i < 10; ++i) {
        ten[i] = i + 1;
    }
    ci = confidence_interval(ten);
    const double sd = std::sqrt(82.5 / 9.0);
    EXPECT_DOUBLE_EQ(ci.mean, 5.5);
    EXPECT_NEAR(ci.half_width, 2.262157163 * sd / std::sqrt(10.0), 1e-8);
    EXPECT_EQ(ci.n, 10u);

    const std::vector<double> five{2, 4, 4, 4, 6};
    ci = confidence_interval(five, 0.99);
    EXPECT_NEAR(ci.half_width, 4.604094871 * std::sqrt(2.0) / std::sqrt(5.0), 1e-8);

    const std::vector<double> one{1.0};
    EXPECT_THROW(confidence_interval(one), std::invalid_argument);
    EXPECT_THROW(confidence_interval(two, 1.0), std::invalid_argument);
}

TEST(Speedup, RoundsToTwoDecimals) {
    const auto ci = [](double m) { return ConfidenceInterval{m, 0.0, 0.95, 10}; };
    EXPECT_DOUBLE_EQ(speedup(ci(1000), ci(1000)), 1.00);
    EXPECT_DOUBLE_EQ(speedup(ci(2702), ci(2511)), 1.08);
    EXPECT_DOUBLE_EQ(speedup(ci(999), ci(848)), 1.18);
    EXPECT_DOUBLE_EQ(speedup(ci(6265), ci(2045)), 3.06);
    EXPECT_THROW(speedup(ci(1), ci(0)), std::invalid_argument);
}

TEST(Summary, CsvRoundTrip) {
    const std::vector<RunSummary> rows{run("cartpole", Variant::a2c, 0, 900),
                                       run("cartpole", Variant::a2c_nog_te, 3, std::nullopt)};
    const auto text = summary_csv(rows);
    EXPECT_NE(text.find("cartpole,a2c-nog-te,3,0,,1.250\n"), std::string::npos) << text;
    const auto back = parse_summary_csv(text);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].steps_to_solve, 900u);
    EXPECT_TRUE(back[0].solved);
    EXPECT_FALSE(back[1].solved);
    EXPECT_EQ(back[1].variant, Variant::a2c_nog_te);
    EXPECT_EQ(summary_csv(back), text);

    EXPECT_THROW(parse_summary_csv("wrong,header\n"), ConfigParseError);
    try {
        parse_summary_csv(text + "cartpole,a2c,1,1\n", "s.csv");
        FAIL();
    } catch (const ConfigParseError& e) {
        EXPECT_EQ(e.line(), 4u);
    }
}

TEST(Report, GroupsCountsUnsolvedAndComputesSpeedup) {
    std::vector<RunSummary> rows;
    for (std::uint64_t s = 0; s < 4; ++s) {
        rows.push_back(run("cartpole", Variant::a2c, s, 1000 + 100 * s));  // mean 1150
    }
    rows.push_back(run("cartpole", Variant::a2c_nog_te, 0, 900));
    rows.push_back(run("cartpole", Variant::a2c_nog_te, 1, 1100));
    rows.push_back(run("cartpole", Variant::a2c_nog_te, 2, std::nullopt));
    rows.push_back(run("energy-mountain-car", Variant::a2c_nog_te, 0, 2000));

    const auto report = build_report(rows);
    ASSERT_EQ(report.size(), 3u);
    const auto find = [&](const std::string& env, Variant v) {
        return *std::find_if(report.begin(), report.end(),
                             [&](const ReportRow& r) { return r.env == env && r.variant == v; });
    };
    const auto a2c = find("cartpole", Variant::a2c);
    EXPECT_EQ(a2c.n, 4u);
    EXPECT_EQ(a2c.unsolved, 0u);
    EXPECT_DOUBLE_EQ(a2c.mean, 1150.0);
    EXPECT_DOUBLE_EQ(*a2c.speedup_vs_a2c, 1.0);
    const auto nog = find("cartpole", Variant::a2c_nog_te);
    EXPECT_EQ(nog.n, 2u);
    EXPECT_EQ(nog.unsolved, 1u);
    EXPECT_DOUBLE_EQ(nog.mean, 1000.0);
    EXPECT_DOUBLE_EQ(*nog.speedup_vs_a2c, 1.15);
    const auto emc = find("energy-mountain-car", Variant::a2c_nog_te);
    EXPECT_FALSE(emc.ci);
    EXPECT_FALSE(emc.speedup_vs_a2c);

    const auto csv = report_csv(report);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "env,variant,n,mean,ci95,speedup_vs_a2c,unsolved");
    EXPECT_NE(csv.find("cartpole,a2c-nog-te,2,1000.0,"), std::string::npos) << csv;
    EXPECT_NE(csv.find("energy-mountain-car,a2c-nog-te,1,2000.0,,,0\n"), std::string::npos) << csv;

    rows.push_back(run("cartpole", Variant::a2c, 2, 5));
    EXPECT_THROW(build_report(rows), std::invalid_argument);
}

TEST(Metrics, HeaderAndLineShape) {
    EXPECT_EQ(metrics_csv_header(), "step,episodes_done,mean_ep_reward,pg_loss,v_loss,entropy,epsilon,wall_ms\n");
    StepStats s;
    s.step = 12;
    s.episodes_total = 3;
    const auto line = metrics_csv_line(s);
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 7);
    EXPECT_EQ(line.rfind("12,3,", 0), 0u);
}

TEST(RunExperiment, DeterministicAcrossWorkerCounts) {
    const auto root = std::filesystem::temp_directory_path() / "nogte_harness_test";
    std::filesystem::remove_all(root);
    auto cfg = parse_config("preset = cartpole/a2c-nog-te\nseeds = 0..2\nmax_steps = 150\n");
    cfg.out = root / "a";
    cfg.workers = 1;
    const auto first = run_experiment(cfg);
    cfg.out = root / "b";
    cfg.workers = 3;
    const auto second = run_experiment(cfg);

    ASSERT_EQ(first.size(), 3u);
    for (std::uint64_t s = 0; s < 3; ++s) {
        EXPECT_EQ(std::count_if(first.begin(), first.end(), [&](const RunSummary& r) { return r.seed == s; }), 1);
    }
    EXPECT_EQ(drop_last_column(slurp(root / "a" / "summary.csv")),
              drop_last_column(slurp(root / "b" / "summary.csv")));
    for (int s = 0; s < 3; ++s) {
        const auto name = "metrics-seed-" + std::to_string(s) + ".csv";
        const auto a = drop_last_column(slurp(root / "a" / name));
        EXPECT_EQ(a, drop_last_column(slurp(root / "b" / name)));
        EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 151);
        EXPECT_EQ(slurp(root / "a" / ("checkpoint-seed-" + std::to_string(s) + ".txt")),
                  slurp(root / "b" / ("checkpoint-seed-" + std::to_string(s) + ".txt")));
    }
    std::filesystem::remove_all(root);
}
