#pragma once

// Define-by-run reverse-mode differentiation over dense double matrices.
//
// A Tape is built fresh for every loss evaluation. Leaves are either
// constants (never receive adjoints) or parameters (adjoints are collected by
// backward()). stop_gradient() forwards its input's value unchanged and blocks
// the backward pass, which is how gradient routing between the feature
// extractor and the heads is expressed.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nogte/matrix.hpp"

namespace nogte {

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class OpKind : std::uint8_t {
    constant,
    parameter,
    add,
    subtract,
    multiply,
    matmul,
    negate,
    tanh,
    relu,
    exp,
    log,
    sum,
    mean,
    square,
    softmax,
    log_softmax,
    gather,
    stop_gradient,
};

const char* op_name(OpKind kind) noexcept;

struct NodeId {
    std::uint32_t index = 0;
    std::uint64_t tape_tag = 0;
    bool operator==(const NodeId&) const = default;
};

class Tape {
public:
    Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) noexcept = default;
    Tape& operator=(Tape&&) noexcept = default;

    NodeId constant(Matrix value);
    // Registers a differentiable leaf; its position in parameters() is the
    // registration order.
    NodeId parameter(Matrix value);

    // Elementwise ops accept equal shapes, a 1xC row broadcast over the rows
    // of the left operand, or a 1x1 scalar broadcast.
    NodeId add(NodeId a, NodeId b);
    NodeId subtract(NodeId a, NodeId b);
    NodeId multiply(NodeId a, NodeId b);
    NodeId matmul(NodeId a, NodeId b);
    NodeId negate(NodeId x);
    NodeId tanh(NodeId x);
    NodeId relu(NodeId x);
    NodeId exp(NodeId x);
    NodeId log(NodeId x);
    NodeId sum(NodeId x);
    NodeId mean(NodeId x);
    NodeId square(NodeId x);
    // Row-wise softmax / log-softmax with max subtraction.
    NodeId softmax(NodeId x);
    NodeId log_softmax(NodeId x);
    // Picks x(r, indices[r]) for every row; result is Rx1.
    NodeId gather(NodeId x, std::span<const std::size_t> indices);
    NodeId stop_gradient(NodeId x);

    [[nodiscard]] const Matrix& value(NodeId id) const;
    [[nodiscard]] OpKind kind(NodeId id) const;
    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
    [[nodiscard]] const std::vector<NodeId>& parameters() const noexcept { return params_; }

    // Zeroes all adjoints, seeds d(root)/d(root) = 1 and propagates in reverse
    // creation order. Returns one adjoint per parameter (registration order);
    // parameters with no live path to root get an all-zero matrix.
    std::vector<Matrix> backward(NodeId root);

    // Adjoint of any node from the most recent backward(); zeros if untouched.
    [[nodiscard]] Matrix adjoint(NodeId id) const;

private:
    struct Node {
        OpKind kind;
        std::uint32_t lhs = 0;
        std::uint32_t rhs = 0;
        Matrix value;
        std::vector<std::size_t> indices;  // gather only
    };

    NodeId push(Node node);
    const Node& node(NodeId id) const;
    void check(NodeId id) const;
    NodeId elementwise(OpKind kind, NodeId a, NodeId b);
    NodeId unary(OpKind kind, NodeId x, Matrix value);
    void accumulate(std::uint32_t target, const Matrix& grad);
    void propagate(std::uint32_t index);

    std::vector<Node> nodes_;
    std::vector<Matrix> adjoints_;
    std::vector<bool> touched_;
    std::vector<NodeId> params_;
    std::uint64_t tag_;
};

// Named gradient block, one per parameter tensor.
struct GradBlock {
    std::string name;
    Matrix grad;
};

struct ClipResult {
    double norm_before = 0.0;
    double norm_after = 0.0;
    bool clipped = false;
};

// Rescales every block by max_norm/g when the global L2 norm g exceeds
// max_norm. Throws NonFiniteError naming the first offending block.
ClipResult clip_global_norm(std::span<GradBlock> grads, double max_norm);

double global_norm(std::span<const GradBlock> grads);

}  // namespace nogte
