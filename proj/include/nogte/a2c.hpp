#pragma once

// Advantage actor-critic with optional non-overlapping gradient routing (NOG)
// and target-entropy sampling (TE).
//
// Loss terms over an N-step window, with A_k = stop_gradient(R_k - V(f_k)):
//
//   policy  = -sum_k log pi(a_k | f_k) * A_k
//   value   = coef * mean_k (V(f_k) - R_k)^2
//   entropy = -alpha * sum_k H(pi(f_k))
//
// Routing per variant:
//
//   variant      value sees   entropy sees   value coef   entropy term
//   a2c          f            f              beta         yes
//   a2c-nog      sg(f)        sg(f)          1            yes
//   a2c-te       f            -              beta         no (floor sampling)
//   a2c-nog-te   sg(f)        -              1            no (floor sampling)

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "nogte/envs.hpp"
#include "nogte/nets.hpp"
#include "nogte/rng.hpp"
#include "nogte/tape.hpp"

namespace nogte {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class Variant : std::uint8_t { a2c, a2c_nog, a2c_te, a2c_nog_te };

std::string_view variant_name(Variant v) noexcept;
Variant parse_variant(std::string_view name);
constexpr bool uses_nog(Variant v) noexcept { return v == Variant::a2c_nog || v == Variant::a2c_nog_te; }
constexpr bool uses_te(Variant v) noexcept { return v == Variant::a2c_te || v == Variant::a2c_nog_te; }
constexpr bool uses_alpha(Variant v) noexcept { return v == Variant::a2c || v == Variant::a2c_nog; }
constexpr bool uses_beta(Variant v) noexcept { return v == Variant::a2c || v == Variant::a2c_te; }

struct Hyperparameters {
    double gamma = 0.99;
    std::size_t n_steps = 64;
    double lr = 1e-3;
    double max_grad_norm = 0.5;
    std::optional<double> alpha;
    std::optional<double> beta;
    std::optional<double> target_entropy;

    bool operator==(const Hyperparameters&) const = default;
};

// Checks every field against its search range and that exactly the
// coefficients the variant uses are present. Throws ConfigError.
void validate(const Hyperparameters& hp, Variant variant);

struct Transition {
    State state;
    std::size_t action = 0;
    double reward = 0.0;
    bool terminated = false;
    bool truncated = false;
    double log_prob = 0.0;  // under the network policy, not the floored one
    double value = 0.0;
};

// Up to N transitions. The window closes early at any episode end. A
// bootstrap state is present unless the last transition terminated.
struct Rollout {
    std::vector<Transition> steps;
    std::optional<State> bootstrap_state;

    [[nodiscard]] bool terminated() const noexcept { return !bootstrap_state.has_value(); }
};

using ValueFn = std::function<double(std::span<const double>)>;

// R_k = r_k + gamma * R_{k+1}, seeded with V(bootstrap) or 0 on termination.
std::vector<double> compute_returns(const Rollout& rollout, const ValueFn& value_fn, double gamma);
std::vector<double> discounted_returns(std::span<const double> rewards, double bootstrap, double gamma);

struct LossTerms {
    NetNodes nodes;
    NodeId features;
    NodeId policy;
    NodeId value;
    std::optional<NodeId> entropy;  // scaled by -alpha; absent for TE variants
    NodeId total;
    double mean_entropy = 0.0;      // mean H(pi(f_k)) over the window
};

// states: B x state_dim, one row per transition.
LossTerms build_loss(Tape& tape, const ActorCriticNet& net, const Matrix& states,
                     std::span<const std::size_t> actions, std::span<const double> returns,
                     const Hyperparameters& hp, Variant variant);
LossTerms build_loss(Tape& tape, const ActorCriticNet& net, const Rollout& rollout,
                     std::span<const double> returns, const Hyperparameters& hp, Variant variant);

struct StepStats {
    std::size_t step = 0;                 // optimizer steps so far, 1-based
    std::size_t env_steps = 0;            // transitions in this window
    std::size_t episodes_completed = 0;   // episodes that ended in this window
    std::size_t episodes_total = 0;
    double mean_ep_reward = std::numeric_limits<double>::quiet_NaN();  // last 100 episodes
    double pg_loss = 0.0;
    double v_loss = 0.0;
    double entropy = 0.0;       // mean H(p) of the network policy
    double entropy_used = 0.0;  // mean H of the distribution actually sampled
    double epsilon = 0.0;       // mean correction mass
    std::size_t corrections = 0;
    double grad_norm = 0.0;     // before clipping
    double wall_ms = 0.0;
};

// Exponential moving average of completed-episode rewards, starting at 0.
class RewardEma {
public:
    static constexpr double coefficient = 0.1;
    void add(double r) noexcept {
        value_ = (1.0 - coefficient) * value_ + coefficient * r;
        ++count_;
    }
    [[nodiscard]] double value() const noexcept { return value_; }
    [[nodiscard]] std::size_t count() const noexcept { return count_; }

private:
    double value_ = 0.0;
    std::size_t count_ = 0;
};

class Trainer {
public:
    Trainer(std::unique_ptr<Env> env, Hyperparameters hp, Variant variant, std::uint64_t seed,
            std::size_t hidden = 64);

    // Collects one window, updates the network and reports statistics.
    StepStats train_step();

    // Collects one window without updating; exposed for tests.
    Rollout collect(StepStats& stats);

    [[nodiscard]] const ActorCriticNet& net() const noexcept { return net_; }
    [[nodiscard]] ActorCriticNet& net() noexcept { return net_; }
    [[nodiscard]] const Adam& optimizer() const noexcept { return adam_; }
    [[nodiscard]] const Env& env() const noexcept { return *env_; }
    [[nodiscard]] const Hyperparameters& hyperparameters() const noexcept { return hp_; }
    [[nodiscard]] Variant variant() const noexcept { return variant_; }
    [[nodiscard]] std::size_t steps() const noexcept { return steps_; }
    [[nodiscard]] const std::vector<double>& episode_rewards() const noexcept { return episode_rewards_; }
    [[nodiscard]] const RewardEma& reward_ema() const noexcept { return ema_; }
    // Mean of the last `window` completed episodes; NaN if none.
    [[nodiscard]] double recent_mean_reward(std::size_t window = 100) const;

private:
    std::unique_ptr<Env> env_;
    Hyperparameters hp_;
    Variant variant_;
    Rng rng_;
    ActorCriticNet net_;
    Adam adam_;
    State state_;
    double episode_reward_ = 0.0;
    std::vector<double> episode_rewards_;
    RewardEma ema_;
    std::size_t steps_ = 0;
};

struct RunResult {
    bool solved = false;
    std::size_t steps_to_solve = 0;  // optimizer steps; valid iff solved
    std::size_t steps_run = 0;
    std::vector<double> episode_rewards;
    double wall_s = 0.0;
    ActorCriticNet net;
};

struct SolveCriteria {
    double threshold = 195.0;
    std::size_t window = 100;
    std::size_t max_steps = 20000;
};

using StepObserver = std::function<void(const StepStats&)>;

// Trains until the mean of the last `window` completed episodes reaches the
// threshold (checked after every optimizer step) or max_steps elapse.
RunResult train_until_solved(std::string_view env_name, const Hyperparameters& hp, Variant variant,
                             std::uint64_t seed, const SolveCriteria& criteria, const StepObserver& observer = {});

// Mean undiscounted reward over `episodes` episodes sampled from the raw
// network policy.
double evaluate_policy(const ActorCriticNet& net, Env& env, std::size_t episodes, std::uint64_t seed);

}  // namespace nogte
