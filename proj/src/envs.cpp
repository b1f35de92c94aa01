#include "nogte/envs.hpp"

#include <algorithm>
#include <cmath>

namespace nogte {

StepResult step_cartpole(std::span<const double> s, std::size_t action) {
    using namespace cartpole;
    if (s.size() != 4) {
        throw std::invalid_argument("step_cartpole: state must have 4 components");
    }
    if (action > 1) {
        throw std::invalid_argument("step_cartpole: action must be 0 (left) or 1 (right)");
    }
    double x = s[0], x_dot = s[1], theta = s[2], theta_dot = s[3];
    const double f = action == 1 ? force_mag : -force_mag;
    const double cos_t = std::cos(theta);
    const double sin_t = std::sin(theta);
    const double temp = (f + pole_mass_length * theta_dot * theta_dot * sin_t) / total_mass;
    const double theta_acc =
        (gravity * sin_t - cos_t * temp) / (half_length * (4.0 / 3.0 - pole_mass * cos_t * cos_t / total_mass));
    const double x_acc = temp - pole_mass_length * theta_acc * cos_t / total_mass;

    x += tau * x_dot;
    x_dot += tau * x_acc;
    theta += tau * theta_dot;
    theta_dot += tau * theta_acc;

    StepResult r;
    r.next_state = {x, x_dot, theta, theta_dot};
    r.reward = 1.0;
    r.terminated = x < -x_threshold || x > x_threshold || theta < -theta_threshold || theta > theta_threshold;
    return r;
}

double mountain_car_height(double x) noexcept { return 0.45 * std::sin(3.0 * x) + 0.55; }

double mountain_car_energy(std::span<const double> s) noexcept {
    return mountain_car_height(s[0]) + 0.5 * mountain_car::kinetic_scale * s[1] * s[1];
}

StepResult step_energy_mountain_car(std::span<const double> s, std::size_t action) {
    using namespace mountain_car;
    if (s.size() != 2) {
        throw std::invalid_argument("step_energy_mountain_car: state must have 2 components");
    }
    if (action > 2) {
        throw std::invalid_argument("step_energy_mountain_car: action must be 0, 1 or 2");
    }
    double x = s[0];
    double v = s[1];
    v += force * (static_cast<double>(action) - 1.0) - gravity * std::cos(3.0 * x);
    v = std::clamp(v, -max_speed, max_speed);
    x = std::clamp(x + v, min_position, max_position);
    if (x == min_position && v < 0.0) {
        v = 0.0;
    }
    StepResult r;
    r.next_state = {x, v};
    r.reward = mountain_car_energy(r.next_state) - mountain_car_energy(s);
    r.terminated = x >= goal_position;
    return r;
}

State CartPole::reset() {
    for (double& c : state_) {
        c = rng_.uniform(-0.05, 0.05);
    }
    elapsed_ = 0;
    finished_ = false;
    return state_;
}

StepResult CartPole::step(std::size_t action) {
    if (finished_) {
        throw EpisodeFinishedError("CartPole::step: episode already finished; call reset()");
    }
    StepResult r = step_cartpole(state_, action);
    state_ = r.next_state;
    ++elapsed_;
    if (!r.terminated && elapsed_ >= cartpole::episode_cap) {
        r.truncated = true;
    }
    finished_ = r.done();
    return r;
}

State EnergyMountainCar::reset() {
    state_ = {rng_.uniform(-0.6, -0.4), 0.0};
    elapsed_ = 0;
    finished_ = false;
    return state_;
}

StepResult EnergyMountainCar::step(std::size_t action) {
    if (finished_) {
        throw EpisodeFinishedError("EnergyMountainCar::step: episode already finished; call reset()");
    }
    StepResult r = step_energy_mountain_car(state_, action);
    state_ = r.next_state;
    ++elapsed_;
    if (!r.terminated && elapsed_ >= mountain_car::episode_cap) {
        r.truncated = true;
    }
    finished_ = r.done();
    return r;
}

std::unique_ptr<Env> make_env(std::string_view name, std::uint64_t seed) {
    if (name == "cartpole") {
        return std::make_unique<CartPole>(seed);
    }
    if (name == "energy-mountain-car") {
        return std::make_unique<EnergyMountainCar>(seed);
    }
    throw std::invalid_argument("unknown environment '" + std::string(name) + "'");
}

double default_solve_threshold(std::string_view env_name) {
    if (env_name == "cartpole") {
        return 195.0;
    }
    if (env_name == "energy-mountain-car") {
        return 0.45;
    }
    throw std::invalid_argument("unknown environment '" + std::string(env_name) + "'");
}

}  // namespace nogte
