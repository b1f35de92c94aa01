#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "nogte/envs.hpp"

using namespace nogte;

TEST(CartPole, ResetIsSeededAndInBounds) {
    CartPole a;
    CartPole b;
    EXPECT_EQ(a.reset(7), b.reset(7));
    EXPECT_NE(a.reset(8), b.reset(7));
    const auto s = a.reset(3);
    ASSERT_EQ(s.size(), 4u);
    for (double x : s) {
        EXPECT_GT(x, -0.05);
        EXPECT_LT(x, 0.05);
    }
    EXPECT_FALSE(a.step(0).done());
}

TEST(CartPole, ResetMeanNearZero) {
    // Uniform(-0.05, 0.05): sd = 0.1/sqrt(12); 3 sigma of the mean of 1000 draws.
    CartPole env(11);
    constexpr int n = 1000;
    std::vector<double> mean(4, 0.0);
    for (int i = 0; i < n; ++i) {
        const auto s = env.reset();
        for (std::size_t k = 0; k < 4; ++k) {
            mean[k] += s[k] / n;
        }
    }
    const double bound = 3.0 * 0.1 / std::sqrt(12.0) / std::sqrt(static_cast<double>(n));
    for (double m : mean) {
        EXPECT_LT(std::abs(m), bound);
    }
}

TEST(CartPole, AlternatingActionsSurviveFromUpright) {
    std::vector<double> s{0, 0, 0, 0};
    int survived = 0;
    for (int t = 0; t < 100; ++t) {
        const auto r = step_cartpole(s, static_cast<std::size_t>(t % 2));
        EXPECT_EQ(r.reward, 1.0);
        ++survived;
        if (r.done()) {
            break;
        }
        s = r.next_state;
    }
    EXPECT_GT(survived, 20);
}

TEST(CartPole, AngleBoundary) {
    const double limit = 15.0 * std::numbers::pi / 180.0;
    const auto past = step_cartpole(std::vector<double>{0, 0, limit + 0.01, 0}, 1);
    EXPECT_TRUE(past.terminated);
    EXPECT_EQ(past.reward, 1.0);
    const auto inside = step_cartpole(std::vector<double>{0, 0, limit - 0.01, -0.1}, 0);
    EXPECT_FALSE(inside.terminated);
    const auto off_track = step_cartpole(std::vector<double>{2.39, 1.0, 0, 0}, 1);
    EXPECT_TRUE(off_track.terminated);
}

TEST(CartPole, MirrorSymmetry) {
    const std::vector<double> s{0.1, -0.2, 0.03, 0.4};
    const std::vector<double> m{-0.1, 0.2, -0.03, -0.4};
    const auto a = step_cartpole(s, 1);
    const auto b = step_cartpole(m, 0);
    for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_DOUBLE_EQ(a.next_state[k], -b.next_state[k]);
    }
}

TEST(CartPole, StepAfterDoneThrowsAndCapTruncates) {
    CartPole env(0);
    env.reset(0);
    StepResult r;
    do {
        r = env.step(0);
    } while (!r.done());
    EXPECT_TRUE(r.terminated);
    EXPECT_THROW(env.step(0), EpisodeFinishedError);
    EXPECT_THROW(env.step(5), std::exception);

    // A balancing controller reaches the cap; the cap is truncation, not termination.
    env.reset(1);
    std::size_t steps = 0;
    do {
        const auto& s = env.state();
        r = env.step(s[2] + 0.5 * s[3] + 0.01 * s[0] + 0.1 * s[1] > 0 ? 1 : 0);
        ++steps;
    } while (!r.done());
    EXPECT_EQ(steps, cartpole::episode_cap);
    EXPECT_TRUE(r.truncated);
    EXPECT_FALSE(r.terminated);
}

TEST(CartPole, StateStaysFiniteUnderAnyActions) {
    std::vector<double> s{0, 0, 0, 0};
    for (int t = 0; t < 500; ++t) {
        s = step_cartpole(s, 1).next_state;
        for (double x : s) {
            ASSERT_TRUE(std::isfinite(x));
        }
    }
}

TEST(EnergyMountainCar, ResetDistribution) {
    EnergyMountainCar env(5);
    for (int i = 0; i < 200; ++i) {
        const auto s = env.reset();
        EXPECT_GT(s[0], -0.6);
        EXPECT_LT(s[0], -0.4);
        EXPECT_EQ(s[1], 0.0);
    }
    EnergyMountainCar a;
    EnergyMountainCar b;
    EXPECT_EQ(a.reset(9), b.reset(9));
}

TEST(EnergyMountainCar, RestingAtValleyBottomEarnsNothing) {
    const double bottom = -std::numbers::pi / 6.0;  // argmin of 0.45 sin(3x)
    const auto r = step_energy_mountain_car(std::vector<double>{bottom, 0.0}, 1);
    EXPECT_NEAR(r.reward, 0.0, 1e-9);
    EXPECT_FALSE(r.done());
}

TEST(EnergyMountainCar, DynamicsAndClamping) {
    const auto r = step_energy_mountain_car(std::vector<double>{-0.5, 0.01}, 2);
    const double v = 0.01 + 0.001 - 0.0025 * std::cos(3 * -0.5);
    EXPECT_DOUBLE_EQ(r.next_state[1], v);
    EXPECT_DOUBLE_EQ(r.next_state[0], -0.5 + v);
    const auto wall = step_energy_mountain_car(std::vector<double>{-1.19, -0.07}, 0);
    EXPECT_EQ(wall.next_state[0], mountain_car::min_position);
    EXPECT_EQ(wall.next_state[1], 0.0);
    const auto fast = step_energy_mountain_car(std::vector<double>{-0.5, 0.0699}, 2);
    EXPECT_LE(fast.next_state[1], mountain_car::max_speed);
    const auto goal = step_energy_mountain_car(std::vector<double>{0.49, 0.03}, 2);
    EXPECT_TRUE(goal.terminated);
}

TEST(EnergyMountainCar, RewardIsEnergyDifference) {
    const std::vector<double> s{-0.3, 0.02};
    const auto r = step_energy_mountain_car(s, 0);
    EXPECT_DOUBLE_EQ(r.reward, mountain_car_energy(r.next_state) - mountain_car_energy(s));
    EXPECT_DOUBLE_EQ(mountain_car_height(0.0), 0.55);
}

TEST(EnergyMountainCar, BangBangEpisodeTelescopesAndClearsThreshold) {
    // Push along the velocity; ties push right.
    EnergyMountainCar env(0);
    env.reset(0);
    const State start = env.state();
    double total = 0.0;
    StepResult r;
    do {
        r = env.step(env.state()[1] >= 0.0 ? 2 : 0);
        total += r.reward;
    } while (!r.done());
    EXPECT_TRUE(r.terminated);
    EXPECT_NEAR(total, mountain_car_energy(r.next_state) - mountain_car_energy(start), 1e-9);
    EXPECT_GT(total, default_solve_threshold("energy-mountain-car"));
    EXPECT_GT(mountain_car_height(r.next_state[0]) - mountain_car_height(start[0]), 0.85);
}

TEST(EnergyMountainCar, TruncatesAtCap) {
    EnergyMountainCar env(1);
    env.reset(1);
    StepResult r;
    std::size_t steps = 0;
    do {
        r = env.step(1);
        ++steps;
    } while (!r.done());
    EXPECT_EQ(steps, mountain_car::episode_cap);
    EXPECT_TRUE(r.truncated);
    EXPECT_FALSE(r.terminated);
    EXPECT_THROW(env.step(1), EpisodeFinishedError);
}

TEST(MakeEnv, NamesAndDescriptors) {
    const auto cp = make_env("cartpole", 0);
    EXPECT_EQ(cp->state_dim(), 4u);
    EXPECT_EQ(cp->action_count(), 2u);
    const auto mc = make_env("energy-mountain-car", 0);
    EXPECT_EQ(mc->state_dim(), 2u);
    EXPECT_EQ(mc->action_count(), 3u);
    EXPECT_THROW(make_env("lunar-lander", 0), std::invalid_argument);
    EXPECT_EQ(default_solve_threshold("cartpole"), 195.0);
    EXPECT_EQ(default_solve_threshold("energy-mountain-car"), 0.45);
}

TEST(EnergyMountainCar, CoastingConservesEnergyToFirstOrder) {
    // Away from the walls, a no-force step changes E only at second order in
    // the step size.
    double worst = 0.0;
    for (double x = -1.0; x <= 0.3; x += 0.05) {
        for (double v = -0.01; v <= 0.01; v += 0.002) {
            const std::vector<double> s{x, v};
            worst = std::max(worst, std::abs(step_energy_mountain_car(s, 1).reward));
        }
    }
    EXPECT_LT(worst, 2e-3);
    EXPECT_DOUBLE_EQ(mountain_car::kinetic_scale, 540.0);
}
