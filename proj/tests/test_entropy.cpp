#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "nogte/entropy.hpp"

using namespace nogte;

namespace {

Categorical random_categorical(Rng& rng, std::size_t n) {
    Categorical p(n);
    double total = 0.0;
    for (double& x : p) {
        // Exponential weights give a Dirichlet(1) draw.
        x = -std::log(1.0 - rng.uniform());
        total += x;
    }
    for (double& x : p) {
        x /= total;
    }
    return p;
}

double sum(const Categorical& p) { return std::accumulate(p.begin(), p.end(), 0.0); }

}  // namespace

TEST(Entropy, KnownValues) {
    EXPECT_EQ(entropy(Categorical{1.0, 0.0, 0.0}), 0.0);
    EXPECT_NEAR(entropy(Categorical{0.25, 0.25, 0.25, 0.25}), std::log(4.0), 1e-15);
    EXPECT_NEAR(entropy(Categorical{0.9, 0.1}), 0.32508297339144826, 1e-15);
}

TEST(Entropy, ValidationRejectsBadDistributions) {
    EXPECT_THROW(validate_categorical(Categorical{0.5, 0.6}), std::invalid_argument);
    EXPECT_THROW(validate_categorical(Categorical{1.2, -0.2}), std::invalid_argument);
    EXPECT_THROW(validate_categorical(Categorical{}), std::invalid_argument);
    EXPECT_NO_THROW(validate_categorical(Categorical{0.3, 0.7}));
}

TEST(Entropy, ArgmaxTiesPickLowestIndex) {
    EXPECT_EQ(argmax(Categorical{0.4, 0.4, 0.2}), 0u);
    EXPECT_EQ(argmax(Categorical{0.2, 0.4, 0.4}), 1u);
}

TEST(TildeTransform, Examples) {
    const Categorical p{0.6, 0.4};
    EXPECT_EQ(tilde_transform(p, 0.0), p);
    const auto a = tilde_transform(p, 0.1);
    EXPECT_NEAR(a[0], 0.5, 1e-15);
    EXPECT_NEAR(a[1], 0.5, 1e-15);
    const auto b = tilde_transform(Categorical{0.7, 0.2, 0.1}, 0.12);
    EXPECT_NEAR(b[0], 0.58, 1e-15);
    EXPECT_NEAR(b[1], 0.26, 1e-15);
    EXPECT_NEAR(b[2], 0.16, 1e-15);
}

TEST(TildeTransform, OutOfRangeEpsilonRejected) {
    const Categorical p{0.7, 0.2, 0.1};
    EXPECT_THROW(tilde_transform(p, -1e-3), std::out_of_range);
    EXPECT_THROW(tilde_transform(p, max_admissible_epsilon(p) + 1e-6), std::out_of_range);
    EXPECT_NO_THROW(tilde_transform(p, max_admissible_epsilon(p)));
}

TEST(TildeTransform, AdmissibleBoundMeetsSecondLargest) {
    // For two actions the bound is where the pair becomes uniform.
    EXPECT_NEAR(max_admissible_epsilon(Categorical{0.9, 0.1}), 0.4, 1e-15);
    const Categorical p{0.7, 0.2, 0.1};
    const auto t = tilde_transform(p, max_admissible_epsilon(p));
    EXPECT_NEAR(t[0], t[1], 1e-12);
    EXPECT_EQ(max_admissible_epsilon(Categorical{0.5, 0.5}), 0.0);
}

TEST(TildeTransform, SumPreservedOnRandomPairs) {
    Rng rng(1);
    for (int i = 0; i < 100000; ++i) {
        const auto p = random_categorical(rng, 2 + rng.index(3));
        const double eps = rng.uniform() * max_admissible_epsilon(p);
        const auto t = tilde_transform(p, eps);
        ASSERT_NEAR(sum(t), 1.0, 1e-12);
        for (double x : t) {
            ASSERT_GE(x, 0.0);
            ASSERT_LE(x, 1.0);
        }
    }
}

TEST(TildeTransform, EntropyIncreasesMonotonically) {
    Rng rng(2);
    for (int i = 0; i < 500; ++i) {
        const auto p = random_categorical(rng, 2 + rng.index(3));
        const double hi = max_admissible_epsilon(p);
        double prev = entropy(p);
        for (int k = 1; k <= 50; ++k) {
            const double h = entropy(tilde_transform(p, hi * k / 50.0));
            ASSERT_GT(h, prev - 1e-15);
            prev = h;
        }
    }
}

TEST(FirstOrder, NoCorrectionWhenAlreadyAboveTarget) {
    const Categorical p{0.9, 0.1};
    EXPECT_EQ(epsilon_first_order(p, entropy(p)), 0.0);
    EXPECT_EQ(epsilon_first_order(p, 0.1), 0.0);
    EXPECT_THROW(epsilon_first_order(p, std::log(2.0)), UnreachableEntropyError);
}

TEST(FirstOrder, NearDeterministicWithinQuarterOfGap) {
    const Categorical p{0.99, 0.01};
    const double eps = epsilon_first_order(p, 0.2);
    EXPECT_GT(eps, 0.0);
    const double gap = 0.2 - entropy(p);
    EXPECT_LE(std::abs(entropy(tilde_transform(p, eps)) - 0.2), 0.25 * gap);
}

TEST(FirstOrder, LargeCorrectionAgainstBisection) {
    const Categorical p{0.9, 0.1};
    const double approx = epsilon_first_order(p, 0.5);
    const double exact = epsilon_bisection(p, 0.5, 1e-6);
    EXPECT_LE(std::abs(approx - exact) / exact, 0.35);
}

TEST(FirstOrder, SmallGapTightAgainstBisection) {
    const Categorical p{0.5, 0.3, 0.2};
    const double target = entropy(p) + 1e-4;
    const double approx = epsilon_first_order(p, target);
    const double exact = epsilon_bisection(p, target, 1e-10);
    EXPECT_LE(std::abs(approx - exact) / exact, 0.01);
}

// Second-order estimate of the first-order formula's relative error:
// |H''(0)| * gap / (2 H'(0)^2), with H'(0) = log p_max - mean log p_i and
// H''(0) = -1/p_max - sum_{i != max} 1/p_i / (N-1)^2.
double predicted_relative_error(const Categorical& p, double gap) {
    const std::size_t m = argmax(p);
    const double n1 = static_cast<double>(p.size() - 1);
    double mean_log = 0.0;
    double inv = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (i != m) {
            mean_log += std::log(p[i]) / n1;
            inv += 1.0 / p[i];
        }
    }
    const double d1 = std::log(p[m]) - mean_log;
    const double d2 = 1.0 / p[m] + inv / (n1 * n1);
    return d2 * gap / (2.0 * d1 * d1);
}

TEST(FirstOrder, ErrorTracksSecondOrderPrediction) {
    Rng rng(3);
    int checked = 0;
    while (checked < 1000) {
        const auto p = random_categorical(rng, 2 + rng.index(3));
        const double gap = 0.05 * rng.uniform() + 1e-6;
        const double target = entropy(p) + gap;
        if (predicted_relative_error(p, gap) > 0.02 ||
            entropy(tilde_transform(p, max_admissible_epsilon(p))) <= target) {
            continue;
        }
        const double approx = epsilon_first_order(p, target);
        const double exact = epsilon_bisection(p, target, 1e-13);
        ASSERT_LE(std::abs(approx - exact) / exact, 0.1) << "p0=" << p[0] << " gap=" << gap;
        ++checked;
    }
}

TEST(FirstOrder, LogFormIsExactInTheLimitAndRawFormIsNot) {
    Rng rng(4);
    int raw_off = 0;
    constexpr int trials = 200;
    for (int i = 0; i < trials; ++i) {
        const auto p = random_categorical(rng, 2 + rng.index(3));
        if (max_admissible_epsilon(p) < 1e-3) {
            continue;
        }
        const double target = entropy(p) + 1e-8;
        const double exact = epsilon_bisection(p, target, 1e-15);
        EXPECT_LE(std::abs(epsilon_first_order(p, target) - exact) / exact, 1e-3);
        raw_off += std::abs(epsilon_first_order_as_printed(p, target) - exact) / exact > 0.1 ? 1 : 0;
    }
    EXPECT_GE(raw_off, trials * 9 / 10);
    const Categorical p{0.9, 0.1};
    EXPECT_GT(epsilon_first_order_as_printed(p, 0.5), max_admissible_epsilon(p));
}

TEST(Bisection, HitsTargetFromAbove) {
    const Categorical p{0.9, 0.1};
    const double eps = epsilon_bisection(p, 0.5, 1e-6);
    const double h = entropy(tilde_transform(p, eps));
    EXPECT_GE(h, 0.5);
    EXPECT_LE(h, 0.5 + 1e-6);
}

TEST(Bisection, UniformInputNeedsNothing) {
    const Categorical p{0.25, 0.25, 0.25, 0.25};
    EXPECT_EQ(epsilon_bisection(p, 1.0), 0.0);
}

TEST(Bisection, UnreachableTargetReportsMaximum) {
    // The shrinking argmax meets 0.45 long before the distribution is uniform.
    const Categorical p{0.5, 0.45, 0.05};
    try {
        epsilon_bisection(p, 1.09);
        FAIL() << "expected UnreachableEntropyError";
    } catch (const UnreachableEntropyError& e) {
        EXPECT_LT(e.achievable_max, 1.09);
        EXPECT_GT(e.achievable_max, entropy(p));
    }
}

TEST(SampleWithFloor, ZeroTargetUsesRawDistribution) {
    Rng rng(5);
    const Categorical p{0.8, 0.15, 0.05};
    const auto s = sample_with_floor(p, 0.0, rng);
    EXPECT_EQ(s.correction.corrected, p);
    EXPECT_EQ(s.correction.method, CorrectionMethod::none);
    EXPECT_EQ(s.correction.epsilon, 0.0);
}

TEST(SampleWithFloor, NearDeterministicGetsLifted) {
    Rng rng(6);
    const Categorical p{1.0 - 1e-9, 1e-9};
    const auto s = sample_with_floor(p, 0.1, rng);
    EXPECT_GE(entropy(s.correction.corrected), 0.1 - 1e-6);
    EXPECT_EQ(s.correction.method, CorrectionMethod::bisection);
}

TEST(SampleWithFloor, FloorGuaranteeAndIdentity) {
    Rng rng(7);
    for (int i = 0; i < 2000; ++i) {
        const auto p = random_categorical(rng, 2 + rng.index(3));
        const double target = 0.2 * rng.uniform();
        const auto s = sample_with_floor(p, target, rng);
        EXPECT_GE(entropy(s.correction.corrected), std::min(target, entropy(p)) - 1e-6);
        if (entropy(p) >= target) {
            EXPECT_EQ(s.correction.corrected, p);
        }
        EXPECT_LT(s.action, p.size());
    }
}

TEST(SampleWithFloor, FrequenciesMatchDistributionUsed) {
    Rng rng(8);
    const Categorical p{0.97, 0.02, 0.01};
    constexpr int n = 100000;
    std::vector<int> counts(3, 0);
    Categorical used;
    for (int i = 0; i < n; ++i) {
        const auto s = sample_with_floor(p, 0.5, rng);
        used = s.correction.corrected;
        ++counts[s.action];
    }
    for (std::size_t a = 0; a < 3; ++a) {
        const double sd = std::sqrt(n * used[a] * (1.0 - used[a]));
        EXPECT_LE(std::abs(counts[a] - n * used[a]), 3.0 * sd) << "action " << a;
    }
}
