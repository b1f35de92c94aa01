#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "nogte/rng.hpp"

namespace nogte {

using State = std::vector<double>;

struct StepResult {
    State next_state;
    double reward = 0.0;
    bool terminated = false;  // absorbing state reached
    bool truncated = false;   // episode cap hit; the state is not absorbing

    [[nodiscard]] bool done() const noexcept { return terminated || truncated; }
};

class EpisodeFinishedError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Episodic environment with a discrete action set.
class Env {
public:
    virtual ~Env() = default;

    [[nodiscard]] virtual std::string_view name() const noexcept = 0;
    [[nodiscard]] virtual std::size_t state_dim() const noexcept = 0;
    [[nodiscard]] virtual std::size_t action_count() const noexcept = 0;
    [[nodiscard]] virtual std::size_t episode_cap() const noexcept = 0;

    // Reseeds the initial-state sampler and starts a new episode.
    State reset(std::uint64_t seed) {
        rng_.seed(seed);
        return reset();
    }
    // Starts a new episode drawing from the current sampler stream.
    virtual State reset() = 0;
    // Throws EpisodeFinishedError when the current episode already ended.
    virtual StepResult step(std::size_t action) = 0;

    [[nodiscard]] virtual const State& state() const noexcept = 0;
    [[nodiscard]] std::size_t elapsed_steps() const noexcept { return elapsed_; }

protected:
    Rng rng_{0};
    std::size_t elapsed_ = 0;
    bool finished_ = true;
};

namespace cartpole {
inline constexpr double gravity = 9.8;
inline constexpr double cart_mass = 1.0;
inline constexpr double pole_mass = 0.1;
inline constexpr double total_mass = cart_mass + pole_mass;
inline constexpr double half_length = 0.5;
inline constexpr double pole_mass_length = pole_mass * half_length;
inline constexpr double force_mag = 10.0;
inline constexpr double tau = 0.02;
inline constexpr double theta_threshold = 15.0 * 3.14159265358979323846 / 180.0;
inline constexpr double x_threshold = 2.4;
inline constexpr std::size_t episode_cap = 500;
}  // namespace cartpole

namespace mountain_car {
inline constexpr double min_position = -1.2;
inline constexpr double max_position = 0.6;
inline constexpr double max_speed = 0.07;
inline constexpr double goal_position = 0.5;
inline constexpr double force = 0.001;
inline constexpr double gravity = 0.0025;
// kappa in E = h(x) + kappa * v^2 / 2. With h'(x) = 1.35 cos 3x and the
// gravity term 0.0025 cos 3x, kappa = 1.35 / 0.0025 makes E invariant under
// coasting, so the reward measures only the work done by the engine.
inline constexpr double kinetic_scale = 0.45 * 3.0 / gravity;
inline constexpr std::size_t episode_cap = 1000;
}  // namespace mountain_car

// Pure transition functions. Actions: cart-pole {0: left, 1: right};
// mountain car {0: left, 1: none, 2: right}.
StepResult step_cartpole(std::span<const double> state, std::size_t action);
StepResult step_energy_mountain_car(std::span<const double> state, std::size_t action);

double mountain_car_height(double x) noexcept;
double mountain_car_energy(std::span<const double> state) noexcept;

class CartPole final : public Env {
public:
    explicit CartPole(std::uint64_t seed = 0) { rng_.seed(seed); }

    std::string_view name() const noexcept override { return "cartpole"; }
    std::size_t state_dim() const noexcept override { return 4; }
    std::size_t action_count() const noexcept override { return 2; }
    std::size_t episode_cap() const noexcept override { return cartpole::episode_cap; }

    using Env::reset;
    State reset() override;
    StepResult step(std::size_t action) override;
    const State& state() const noexcept override { return state_; }

private:
    State state_ = State(4, 0.0);
};

class EnergyMountainCar final : public Env {
public:
    explicit EnergyMountainCar(std::uint64_t seed = 0) { rng_.seed(seed); }

    std::string_view name() const noexcept override { return "energy-mountain-car"; }
    std::size_t state_dim() const noexcept override { return 2; }
    std::size_t action_count() const noexcept override { return 3; }
    std::size_t episode_cap() const noexcept override { return mountain_car::episode_cap; }

    using Env::reset;
    State reset() override;
    StepResult step(std::size_t action) override;
    const State& state() const noexcept override { return state_; }

private:
    State state_ = State(2, 0.0);
};

// "cartpole" or "energy-mountain-car".
std::unique_ptr<Env> make_env(std::string_view name, std::uint64_t seed);

// Default solve threshold on the 100-episode mean reward.
double default_solve_threshold(std::string_view env_name);

}  // namespace nogte
