#include "nogte/a2c.hpp"

#include <algorithm>
#include <cmath>

#include "nogte/entropy.hpp"

namespace nogte {

namespace {

bool in_open(double v, double lo, double hi) { return v > lo && v < hi; }

void require(bool ok, const std::string& msg) {
    if (!ok) {
        throw ConfigError(msg);
    }
}

void require_presence(const std::optional<double>& field, bool wanted, const char* name, Variant v) {
    if (wanted && !field) {
        throw ConfigError(std::string("hyperparameter '") + name + "' is required by variant " +
                          std::string(variant_name(v)));
    }
    if (!wanted && field) {
        throw ConfigError(std::string("hyperparameter '") + name + "' is not used by variant " +
                          std::string(variant_name(v)));
    }
}

}  // namespace

std::string_view variant_name(Variant v) noexcept {
    switch (v) {
        case Variant::a2c: return "a2c";
        case Variant::a2c_nog: return "a2c-nog";
        case Variant::a2c_te: return "a2c-te";
        case Variant::a2c_nog_te: return "a2c-nog-te";
    }
    return "unknown";
}

Variant parse_variant(std::string_view name) {
    for (Variant v : {Variant::a2c, Variant::a2c_nog, Variant::a2c_te, Variant::a2c_nog_te}) {
        if (name == variant_name(v)) {
            return v;
        }
    }
    throw ConfigError("unknown variant '" + std::string(name) + "' (expected a2c, a2c-nog, a2c-te, a2c-nog-te)");
}

void validate(const Hyperparameters& hp, Variant variant) {
    constexpr double kGammas[] = {0.9, 0.99, 0.999};
    const bool gamma_ok =
        std::any_of(std::begin(kGammas), std::end(kGammas), [&](double g) { return std::abs(hp.gamma - g) < 1e-12; });
    require(gamma_ok, "gamma must be one of 0.9, 0.99, 0.999");
    require(hp.n_steps == 8 || hp.n_steps == 16 || hp.n_steps == 32 || hp.n_steps == 64,
            "n_steps must be one of 8, 16, 32, 64");
    require(in_open(hp.lr, 1e-5, 1e-2), "lr must lie in (1e-5, 1e-2)");
    require(in_open(hp.max_grad_norm, 0.0, 2.0), "max_grad_norm must lie in (0, 2)");
    require_presence(hp.alpha, uses_alpha(variant), "alpha", variant);
    require_presence(hp.beta, uses_beta(variant), "beta", variant);
    require_presence(hp.target_entropy, uses_te(variant), "target_entropy", variant);
    if (hp.alpha) {
        require(in_open(*hp.alpha, 1e-4, 1e-1), "alpha must lie in (1e-4, 1e-1)");
    }
    if (hp.beta) {
        require(in_open(*hp.beta, 0.0, 1.0), "beta must lie in (0, 1)");
    }
    if (hp.target_entropy) {
        require(in_open(*hp.target_entropy, 0.0, 0.2), "target_entropy must lie in (0, 0.2)");
    }
}

std::vector<double> discounted_returns(std::span<const double> rewards, double bootstrap, double gamma) {
    std::vector<double> out(rewards.size());
    double running = bootstrap;
    for (std::size_t k = rewards.size(); k-- > 0;) {
        running = rewards[k] + gamma * running;
        out[k] = running;
    }
    return out;
}

std::vector<double> compute_returns(const Rollout& rollout, const ValueFn& value_fn, double gamma) {
    std::vector<double> rewards;
    rewards.reserve(rollout.steps.size());
    for (const auto& t : rollout.steps) {
        rewards.push_back(t.reward);
    }
    const double bootstrap = rollout.bootstrap_state ? value_fn(*rollout.bootstrap_state) : 0.0;
    return discounted_returns(rewards, bootstrap, gamma);
}

LossTerms build_loss(Tape& tape, const ActorCriticNet& net, const Matrix& states,
                     std::span<const std::size_t> actions, std::span<const double> returns,
                     const Hyperparameters& hp, Variant variant) {
    const std::size_t batch = states.rows;
    if (batch == 0 || actions.size() != batch || returns.size() != batch) {
        throw ShapeError("build_loss: " + std::to_string(batch) + " states, " + std::to_string(actions.size()) +
                         " actions, " + std::to_string(returns.size()) + " returns");
    }
    validate(hp, variant);

    LossTerms terms;
    terms.nodes = net.bind(tape);
    const NodeId s = tape.constant(states);
    const NodeId ret = tape.constant(Matrix::column(returns));

    const NodeId f = net.features(tape, terms.nodes, s);
    terms.features = f;
    const bool nog = uses_nog(variant);
    const NodeId f_heads = nog ? tape.stop_gradient(f) : f;

    // Policy term: features stay live in every variant.
    const NodeId logp = tape.log_softmax(net.policy_logits(tape, terms.nodes, f));
    const NodeId logp_taken = tape.gather(logp, actions);

    const NodeId v = net.value(tape, terms.nodes, f_heads);
    const NodeId advantage = tape.stop_gradient(tape.subtract(ret, v));
    terms.policy = tape.negate(tape.sum(tape.multiply(logp_taken, advantage)));

    const double value_coef = nog ? 1.0 : *hp.beta;
    const NodeId mse = tape.mean(tape.square(tape.subtract(v, ret)));
    terms.value = value_coef == 1.0 ? mse : tape.multiply(mse, tape.constant(Matrix::scalar(value_coef)));

    // Entropy statistics come from the policy evaluated on f; for NOG the
    // entropy term gets its own head pass over sg(f).
    {
        const Matrix& lp = tape.value(logp);
        double h = 0.0;
        for (std::size_t i = 0; i < lp.size(); ++i) {
            h -= std::exp(lp.data[i]) * lp.data[i];
        }
        terms.mean_entropy = h / static_cast<double>(batch);
    }

    terms.total = tape.add(terms.policy, terms.value);
    if (!uses_te(variant)) {
        const NodeId logp_h = nog ? tape.log_softmax(net.policy_logits(tape, terms.nodes, f_heads)) : logp;
        const NodeId p_h = tape.exp(logp_h);
        // sum_k H_k = -sum(p * log p); the term is -alpha * sum_k H_k.
        const NodeId plogp = tape.sum(tape.multiply(p_h, logp_h));
        terms.entropy = tape.multiply(plogp, tape.constant(Matrix::scalar(*hp.alpha)));
        terms.total = tape.add(terms.total, *terms.entropy);
    }
    return terms;
}

LossTerms build_loss(Tape& tape, const ActorCriticNet& net, const Rollout& rollout,
                     std::span<const double> returns, const Hyperparameters& hp, Variant variant) {
    const std::size_t batch = rollout.steps.size();
    const std::size_t dim = net.shape().state_dim;
    Matrix states(batch, dim);
    std::vector<std::size_t> actions(batch);
    for (std::size_t k = 0; k < batch; ++k) {
        const auto& t = rollout.steps[k];
        if (t.state.size() != dim) {
            throw ShapeError("build_loss: transition state has wrong dimension");
        }
        std::copy(t.state.begin(), t.state.end(), states.row_span(k).begin());
        actions[k] = t.action;
    }
    return build_loss(tape, net, states, actions, returns, hp, variant);
}

Trainer::Trainer(std::unique_ptr<Env> env, Hyperparameters hp, Variant variant, std::uint64_t seed,
                 std::size_t hidden)
    : env_(std::move(env)), hp_(hp), variant_(variant), rng_(seed) {
    if (!env_) {
        throw std::invalid_argument("Trainer: null environment");
    }
    validate(hp_, variant_);
    Rng init_rng(rng_.split());
    net_ = ActorCriticNet(NetShape{env_->state_dim(), env_->action_count(), hidden}, init_rng);
    adam_ = Adam(net_, hp_.lr);
    state_ = env_->reset(rng_.split());
}

double Trainer::recent_mean_reward(std::size_t window) const {
    if (episode_rewards_.empty() || window == 0) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    const std::size_t n = std::min(window, episode_rewards_.size());
    double s = 0.0;
    for (std::size_t i = episode_rewards_.size() - n; i < episode_rewards_.size(); ++i) {
        s += episode_rewards_[i];
    }
    return s / static_cast<double>(n);
}

Rollout Trainer::collect(StepStats& stats) {
    Rollout rollout;
    rollout.steps.reserve(hp_.n_steps);
    const double target = uses_te(variant_) ? *hp_.target_entropy : 0.0;
    double h_sum = 0.0, h_used_sum = 0.0, eps_sum = 0.0;
    for (std::size_t k = 0; k < hp_.n_steps; ++k) {
        const PolicyValue pv = net_.evaluate(state_);
        const FlooredSample pick = sample_with_floor(pv.probs, target, rng_);
        const double h = entropy(pv.probs);
        h_sum += h;
        if (pick.correction.method != CorrectionMethod::none) {
            ++stats.corrections;
            eps_sum += pick.correction.epsilon;
            h_used_sum += entropy(pick.correction.corrected);
        } else {
            h_used_sum += h;
        }

        StepResult r = env_->step(pick.action);
        Transition t;
        t.state = state_;
        t.action = pick.action;
        t.reward = r.reward;
        t.terminated = r.terminated;
        t.truncated = r.truncated;
        t.log_prob = pv.log_probs[pick.action];
        t.value = pv.value;
        rollout.steps.push_back(std::move(t));
        episode_reward_ += r.reward;

        if (r.done()) {
            episode_rewards_.push_back(episode_reward_);
            ema_.add(episode_reward_);
            episode_reward_ = 0.0;
            ++stats.episodes_completed;
            if (r.truncated) {
                rollout.bootstrap_state = r.next_state;
            }
            state_ = env_->reset();
            break;
        }
        state_ = std::move(r.next_state);
        if (k + 1 == hp_.n_steps) {
            rollout.bootstrap_state = state_;
        }
    }
    const double n = static_cast<double>(rollout.steps.size());
    stats.env_steps = rollout.steps.size();
    stats.entropy = h_sum / n;
    stats.entropy_used = h_used_sum / n;
    stats.epsilon = stats.corrections > 0 ? eps_sum / static_cast<double>(stats.corrections) : 0.0;
    return rollout;
}

StepStats Trainer::train_step() {
    const auto t0 = std::chrono::steady_clock::now();
    StepStats stats;
    const Rollout rollout = collect(stats);
    const std::vector<double> returns =
        compute_returns(rollout, [this](std::span<const double> s) { return net_.evaluate(s).value; }, hp_.gamma);

    Tape tape;
    const LossTerms terms = build_loss(tape, net_, rollout, returns, hp_, variant_);
    const double total = tape.value(terms.total)[0];
    if (!std::isfinite(total)) {
        throw NonFiniteError("train_step " + std::to_string(steps_ + 1) + ": non-finite loss (policy " +
                             std::to_string(tape.value(terms.policy)[0]) + ", value " +
                             std::to_string(tape.value(terms.value)[0]) + ")");
    }
    std::vector<GradBlock> grads = make_grad_blocks(net_, tape.backward(terms.total));
    const ClipResult clip = clip_global_norm(grads, hp_.max_grad_norm);
    adam_.step(net_, grads);
    ++steps_;

    stats.step = steps_;
    stats.episodes_total = episode_rewards_.size();
    stats.mean_ep_reward = recent_mean_reward(100);
    stats.pg_loss = tape.value(terms.policy)[0];
    stats.v_loss = tape.value(terms.value)[0];
    stats.grad_norm = clip.norm_before;
    stats.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return stats;
}

RunResult train_until_solved(std::string_view env_name, const Hyperparameters& hp, Variant variant,
                             std::uint64_t seed, const SolveCriteria& criteria, const StepObserver& observer) {
    if (criteria.max_steps == 0) {
        throw std::invalid_argument("train_until_solved: max_steps must be positive");
    }
    const auto t0 = std::chrono::steady_clock::now();
    Rng seeder(seed);
    Trainer trainer(make_env(env_name, seeder.split()), hp, variant, seeder.split());
    RunResult result;
    while (trainer.steps() < criteria.max_steps) {
        const StepStats stats = trainer.train_step();
        if (observer) {
            observer(stats);
        }
        const auto& rewards = trainer.episode_rewards();
        if (rewards.size() >= criteria.window && trainer.recent_mean_reward(criteria.window) >= criteria.threshold) {
            result.solved = true;
            result.steps_to_solve = trainer.steps();
            break;
        }
    }
    result.steps_run = trainer.steps();
    result.episode_rewards = trainer.episode_rewards();
    result.net = trainer.net();
    result.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

double evaluate_policy(const ActorCriticNet& net, Env& env, std::size_t episodes, std::uint64_t seed) {
    if (episodes == 0) {
        throw std::invalid_argument("evaluate_policy: need at least one episode");
    }
    Rng rng(seed);
    env.reset(rng.split());
    double total = 0.0;
    for (std::size_t e = 0; e < episodes; ++e) {
        State s = e == 0 ? env.state() : env.reset();
        while (true) {
            const PolicyValue pv = net.evaluate(s);
            StepResult r = env.step(rng.categorical(pv.probs));
            total += r.reward;
            if (r.done()) {
                break;
            }
            s = std::move(r.next_state);
        }
    }
    return total / static_cast<double>(episodes);
}

}  // namespace nogte
