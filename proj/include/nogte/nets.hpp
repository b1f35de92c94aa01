#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nogte/matrix.hpp"
#include "nogte/rng.hpp"
#include "nogte/tape.hpp"

namespace nogte {

enum class ParamGroup : std::uint8_t { features, policy, value };

const char* group_name(ParamGroup g) noexcept;

struct Parameter {
    std::string name;
    ParamGroup group;
    Matrix value;
};

struct NetShape {
    std::size_t state_dim = 0;
    std::size_t action_count = 0;
    std::size_t hidden = 64;
};

// Parameter nodes of one net registered on a tape.
struct NetNodes {
    std::vector<NodeId> params;  // same order as ActorCriticNet::params()
};

// Plain (tape-free) evaluation of a single state.
struct PolicyValue {
    std::vector<double> probs;
    std::vector<double> log_probs;
    double value = 0.0;
};

// Feature extractor C(s) = tanh(tanh(s W1 + b1) W2 + b2), a linear softmax
// policy head and a linear value head.
class ActorCriticNet {
public:
    ActorCriticNet() = default;
    ActorCriticNet(NetShape shape, Rng& rng);

    [[nodiscard]] const NetShape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::span<const Parameter> params() const noexcept { return params_; }
    [[nodiscard]] std::span<Parameter> params() noexcept { return params_; }
    [[nodiscard]] std::size_t parameter_count() const noexcept;

    // Registers every parameter on the tape as a differentiable leaf.
    NetNodes bind(Tape& tape) const;

    // states: B x state_dim. Returns features B x hidden.
    NodeId features(Tape& tape, const NetNodes& nodes, NodeId states) const;
    // Pre-softmax policy logits B x action_count.
    NodeId policy_logits(Tape& tape, const NetNodes& nodes, NodeId features) const;
    // Value estimates B x 1.
    NodeId value(Tape& tape, const NetNodes& nodes, NodeId features) const;

    [[nodiscard]] PolicyValue evaluate(std::span<const double> state) const;

    void zero_output_layers();

    void save(const std::filesystem::path& path) const;
    static ActorCriticNet load(const std::filesystem::path& path);

    bool operator==(const ActorCriticNet&) const;

private:
    enum Slot : std::size_t { w1, b1, w2, b2, wp, bp, wv, bv, slot_count };

    NetShape shape_;
    std::vector<Parameter> params_;
};

// Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
class Adam {
public:
    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;
    static constexpr double eps = 1e-8;

    Adam() = default;
    Adam(const ActorCriticNet& net, double lr);

    // grads must align with net.params(). Throws NonFiniteError if any update
    // would be non-finite; the net is left untouched in that case.
    void step(ActorCriticNet& net, std::span<const GradBlock> grads);

    [[nodiscard]] std::uint64_t step_count() const noexcept { return t_; }
    [[nodiscard]] double learning_rate() const noexcept { return lr_; }
    [[nodiscard]] const std::vector<Matrix>& first_moments() const noexcept { return m_; }
    [[nodiscard]] const std::vector<Matrix>& second_moments() const noexcept { return v_; }

private:
    double lr_ = 1e-3;
    std::uint64_t t_ = 0;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
};

// Gradient blocks named after the parameters, in parameter order.
std::vector<GradBlock> make_grad_blocks(const ActorCriticNet& net, std::vector<Matrix> adjoints);

}  // namespace nogte
