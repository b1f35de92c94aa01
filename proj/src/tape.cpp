#include "nogte/tape.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

namespace nogte {

namespace {

std::atomic<std::uint64_t> next_tape_tag{1};

enum class Broadcast { none, row, scalar };

Broadcast broadcast_kind(const Matrix& a, const Matrix& b) {
    if (a.same_shape(b)) {
        return Broadcast::none;
    }
    if (b.rows == 1 && b.cols == 1) {
        return Broadcast::scalar;
    }
    if (b.rows == 1 && b.cols == a.cols) {
        return Broadcast::row;
    }
    return Broadcast::none;
}

// Index into b matching element i of a under the given broadcast.
inline std::size_t bcast_index(Broadcast bc, std::size_t i, std::size_t cols) {
    switch (bc) {
        case Broadcast::none:
            return i;
        case Broadcast::row:
            return i % cols;
        case Broadcast::scalar:
            return 0;
    }
    return i;
}

Matrix matmul_values(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        double* orow = out.data.data() + i * out.cols;
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a.data[i * a.cols + k];
            if (aik == 0.0) {
                continue;
            }
            const double* brow = b.data.data() + k * b.cols;
            for (std::size_t j = 0; j < b.cols; ++j) {
                orow[j] += aik * brow[j];
            }
        }
    }
    return out;
}

// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    Matrix out(a.cols, b.cols);
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double* arow = a.data.data() + k * a.cols;
        const double* brow = b.data.data() + k * b.cols;
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double aki = arow[i];
            if (aki == 0.0) {
                continue;
            }
            double* orow = out.data.data() + i * out.cols;
            for (std::size_t j = 0; j < b.cols; ++j) {
                orow[j] += aki * brow[j];
            }
        }
    }
    return out;
}

// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + i * a.cols;
        for (std::size_t j = 0; j < b.rows; ++j) {
            const double* brow = b.data.data() + j * b.cols;
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) {
                acc += arow[k] * brow[k];
            }
            out.data[i * out.cols + j] = acc;
        }
    }
    return out;
}

// Reduces a gradient shaped like `a` down to the shape of a broadcast operand.
Matrix reduce_to(const Matrix& grad, Broadcast bc, const Matrix& target_shape) {
    switch (bc) {
        case Broadcast::none:
            return grad;
        case Broadcast::scalar: {
            double s = 0.0;
            for (double g : grad.data) {
                s += g;
            }
            return Matrix::scalar(s);
        }
        case Broadcast::row: {
            Matrix out(1, target_shape.cols);
            for (std::size_t r = 0; r < grad.rows; ++r) {
                for (std::size_t c = 0; c < grad.cols; ++c) {
                    out.data[c] += grad(r, c);
                }
            }
            return out;
        }
    }
    return grad;
}

void softmax_row(std::span<const double> in, std::span<double> out) {
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = std::exp(in[i] - mx);
        z += out[i];
    }
    for (double& v : out) {
        v /= z;
    }
}

void log_softmax_row(std::span<const double> in, std::span<double> out) {
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (double v : in) {
        z += std::exp(v - mx);
    }
    const double lse = mx + std::log(z);
    for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = in[i] - lse;
    }
}

}  // namespace

const char* op_name(OpKind kind) noexcept {
    switch (kind) {
        case OpKind::constant: return "constant";
        case OpKind::parameter: return "parameter";
        case OpKind::add: return "add";
        case OpKind::subtract: return "subtract";
        case OpKind::multiply: return "multiply";
        case OpKind::matmul: return "matmul";
        case OpKind::negate: return "negate";
        case OpKind::tanh: return "tanh";
        case OpKind::relu: return "relu";
        case OpKind::exp: return "exp";
        case OpKind::log: return "log";
        case OpKind::sum: return "sum";
        case OpKind::mean: return "mean";
        case OpKind::square: return "square";
        case OpKind::softmax: return "softmax";
        case OpKind::log_softmax: return "log_softmax";
        case OpKind::gather: return "gather";
        case OpKind::stop_gradient: return "stop_gradient";
    }
    return "unknown";
}

Tape::Tape() : tag_(next_tape_tag.fetch_add(1)) {}

NodeId Tape::push(Node n) {
    if (nodes_.size() >= std::numeric_limits<std::uint32_t>::max()) {
        throw std::length_error("Tape: node limit reached");
    }
    nodes_.push_back(std::move(n));
    return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1), tag_};
}

void Tape::check(NodeId id) const {
    if (id.tape_tag != tag_ || id.index >= nodes_.size()) {
        throw std::invalid_argument("Tape: node does not belong to this tape");
    }
}

const Tape::Node& Tape::node(NodeId id) const {
    check(id);
    return nodes_[id.index];
}

const Matrix& Tape::value(NodeId id) const { return node(id).value; }

OpKind Tape::kind(NodeId id) const { return node(id).kind; }

NodeId Tape::constant(Matrix value) { return push(Node{OpKind::constant, 0, 0, std::move(value), {}}); }

NodeId Tape::parameter(Matrix value) {
    const NodeId id = push(Node{OpKind::parameter, 0, 0, std::move(value), {}});
    params_.push_back(id);
    return id;
}

NodeId Tape::elementwise(OpKind kind, NodeId a, NodeId b) {
    const Matrix& va = value(a);
    const Matrix& vb = value(b);
    if (!va.same_shape(vb) && broadcast_kind(va, vb) == Broadcast::none) {
        throw ShapeError(std::string(op_name(kind)) + ": incompatible shapes " + va.shape_str() + " and " +
                         vb.shape_str());
    }
    const Broadcast bc = broadcast_kind(va, vb);
    Matrix out(va.rows, va.cols);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = va.data[i];
        const double y = vb.data[bcast_index(bc, i, va.cols)];
        switch (kind) {
            case OpKind::add: out.data[i] = x + y; break;
            case OpKind::subtract: out.data[i] = x - y; break;
            case OpKind::multiply: out.data[i] = x * y; break;
            default: break;
        }
    }
    return push(Node{kind, a.index, b.index, std::move(out), {}});
}

NodeId Tape::add(NodeId a, NodeId b) { return elementwise(OpKind::add, a, b); }
NodeId Tape::subtract(NodeId a, NodeId b) { return elementwise(OpKind::subtract, a, b); }
NodeId Tape::multiply(NodeId a, NodeId b) { return elementwise(OpKind::multiply, a, b); }

NodeId Tape::matmul(NodeId a, NodeId b) {
    const Matrix& va = value(a);
    const Matrix& vb = value(b);
    if (va.cols != vb.rows) {
        throw ShapeError("matmul: inner dimensions differ " + va.shape_str() + " x " + vb.shape_str());
    }
    return push(Node{OpKind::matmul, a.index, b.index, matmul_values(va, vb), {}});
}

NodeId Tape::unary(OpKind kind, NodeId x, Matrix out) { return push(Node{kind, x.index, 0, std::move(out), {}}); }

NodeId Tape::negate(NodeId x) {
    Matrix out = value(x);
    for (double& v : out.data) {
        v = -v;
    }
    return unary(OpKind::negate, x, std::move(out));
}

NodeId Tape::tanh(NodeId x) {
    Matrix out = value(x);
    for (double& v : out.data) {
        v = std::tanh(v);
    }
    return unary(OpKind::tanh, x, std::move(out));
}

NodeId Tape::relu(NodeId x) {
    Matrix out = value(x);
    for (double& v : out.data) {
        v = v > 0.0 ? v : 0.0;
    }
    return unary(OpKind::relu, x, std::move(out));
}

NodeId Tape::exp(NodeId x) {
    Matrix out = value(x);
    for (double& v : out.data) {
        v = std::exp(v);
    }
    return unary(OpKind::exp, x, std::move(out));
}

NodeId Tape::log(NodeId x) {
    Matrix out = value(x);
    for (double& v : out.data) {
        v = std::log(v);
    }
    return unary(OpKind::log, x, std::move(out));
}

NodeId Tape::square(NodeId x) {
    Matrix out = value(x);
    for (double& v : out.data) {
        v = v * v;
    }
    return unary(OpKind::square, x, std::move(out));
}

NodeId Tape::sum(NodeId x) {
    double s = 0.0;
    for (double v : value(x).data) {
        s += v;
    }
    return unary(OpKind::sum, x, Matrix::scalar(s));
}

NodeId Tape::mean(NodeId x) {
    const Matrix& vx = value(x);
    if (vx.empty()) {
        throw ShapeError("mean: empty input " + vx.shape_str());
    }
    double s = 0.0;
    for (double v : vx.data) {
        s += v;
    }
    return unary(OpKind::mean, x, Matrix::scalar(s / static_cast<double>(vx.size())));
}

NodeId Tape::softmax(NodeId x) {
    const Matrix& vx = value(x);
    if (vx.cols == 0) {
        throw ShapeError("softmax: zero-width input " + vx.shape_str());
    }
    Matrix out(vx.rows, vx.cols);
    for (std::size_t r = 0; r < vx.rows; ++r) {
        softmax_row(vx.row_span(r), out.row_span(r));
    }
    return unary(OpKind::softmax, x, std::move(out));
}

NodeId Tape::log_softmax(NodeId x) {
    const Matrix& vx = value(x);
    if (vx.cols == 0) {
        throw ShapeError("log_softmax: zero-width input " + vx.shape_str());
    }
    Matrix out(vx.rows, vx.cols);
    for (std::size_t r = 0; r < vx.rows; ++r) {
        log_softmax_row(vx.row_span(r), out.row_span(r));
    }
    return unary(OpKind::log_softmax, x, std::move(out));
}

NodeId Tape::gather(NodeId x, std::span<const std::size_t> indices) {
    const Matrix& vx = value(x);
    if (indices.size() != vx.rows) {
        throw ShapeError("gather: " + std::to_string(indices.size()) + " indices for input " + vx.shape_str());
    }
    Matrix out(vx.rows, 1);
    for (std::size_t r = 0; r < vx.rows; ++r) {
        if (indices[r] >= vx.cols) {
            throw ShapeError("gather: index " + std::to_string(indices[r]) + " out of range for input " +
                             vx.shape_str());
        }
        out.data[r] = vx(r, indices[r]);
    }
    Node n{OpKind::gather, x.index, 0, std::move(out), {}};
    n.indices.assign(indices.begin(), indices.end());
    return push(std::move(n));
}

NodeId Tape::stop_gradient(NodeId x) { return unary(OpKind::stop_gradient, x, value(x)); }

void Tape::accumulate(std::uint32_t target, const Matrix& grad) {
    Node& t = nodes_[target];
    if (t.kind == OpKind::constant) {
        return;
    }
    if (!touched_[target]) {
        adjoints_[target] = grad;
        touched_[target] = true;
        return;
    }
    double* dst = adjoints_[target].data.data();
    for (std::size_t i = 0; i < grad.size(); ++i) {
        dst[i] += grad.data[i];
    }
}

void Tape::propagate(std::uint32_t index) {
    const Node& n = nodes_[index];
    const Matrix& g = adjoints_[index];
    switch (n.kind) {
        case OpKind::constant:
        case OpKind::parameter:
        case OpKind::stop_gradient:
            return;
        case OpKind::add:
        case OpKind::subtract: {
            const Matrix& vb = nodes_[n.rhs].value;
            const Broadcast bc = broadcast_kind(nodes_[n.lhs].value, vb);
            accumulate(n.lhs, g);
            Matrix gb = reduce_to(g, bc, vb);
            if (n.kind == OpKind::subtract) {
                for (double& v : gb.data) {
                    v = -v;
                }
            }
            accumulate(n.rhs, gb);
            return;
        }
        case OpKind::multiply: {
            const Matrix& va = nodes_[n.lhs].value;
            const Matrix& vb = nodes_[n.rhs].value;
            const Broadcast bc = broadcast_kind(va, vb);
            Matrix ga(g.rows, g.cols);
            Matrix gfull(g.rows, g.cols);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga.data[i] = g.data[i] * vb.data[bcast_index(bc, i, va.cols)];
                gfull.data[i] = g.data[i] * va.data[i];
            }
            accumulate(n.lhs, ga);
            accumulate(n.rhs, reduce_to(gfull, bc, vb));
            return;
        }
        case OpKind::matmul: {
            const Matrix& va = nodes_[n.lhs].value;
            const Matrix& vb = nodes_[n.rhs].value;
            if (nodes_[n.lhs].kind != OpKind::constant) {
                accumulate(n.lhs, matmul_nt(g, vb));
            }
            if (nodes_[n.rhs].kind != OpKind::constant) {
                accumulate(n.rhs, matmul_tn(va, g));
            }
            return;
        }
        case OpKind::negate: {
            Matrix gx = g;
            for (double& v : gx.data) {
                v = -v;
            }
            accumulate(n.lhs, gx);
            return;
        }
        case OpKind::tanh: {
            Matrix gx(g.rows, g.cols);
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double y = n.value.data[i];
                gx.data[i] = g.data[i] * (1.0 - y * y);
            }
            accumulate(n.lhs, gx);
            return;
        }
        case OpKind::relu: {
            const Matrix& vx = nodes_[n.lhs].value;
            Matrix gx(g.rows, g.cols);
            for (std::size_t i = 0; i < g.size(); ++i) {
                gx.data[i] = vx.data[i] > 0.0 ? g.data[i] : 0.0;
            }
            accumulate(n.lhs, gx);
            return;
        }
        case OpKind::exp: {
            Matrix gx(g.rows, g.cols);
            for (std::size_t i = 0; i < g.size(); ++i) {
                gx.data[i] = g.data[i] * n.value.data[i];
            }
            accumulate(n.lhs, gx);
            return;
        }
        case OpKind::log: {
            const Matrix& vx = nodes_[n.lhs].value;
            Matrix gx(g.rows, g.cols);
            for (std::size_t i = 0; i < g.size(); ++i) {
                gx.data[i] = g.data[i] / vx.data[i];
            }
            accumulate(n.lhs, gx);
            return;
        }
        case OpKind::square: {
            const Matrix& vx = nodes_[n.lhs].value;
            Matrix gx(g.rows, g.cols);
            for (std::size_t i = 0; i < g.size(); ++i) {
                gx.data[i] = 2.0 * vx.data[i] * g.data[i];
            }
            accumulate(n.lhs, gx);
            return;
        }
        case OpKind::sum:
        case OpKind::mean: {
            const Matrix& vx = nodes_[n.lhs].value;
            double s = g.data[0];
            if (n.kind == OpKind::mean) {
                s /= static_cast<double>(vx.size());
            }
            accumulate(n.lhs, Matrix(vx.rows, vx.cols, s));
            return;
        }
        case OpKind::softmax: {
            const Matrix& y = n.value;
            Matrix gx(y.rows, y.cols);
            for (std::size_t r = 0; r < y.rows; ++r) {
                double dot = 0.0;
                for (std::size_t c = 0; c < y.cols; ++c) {
                    dot += g(r, c) * y(r, c);
                }
                for (std::size_t c = 0; c < y.cols; ++c) {
                    gx(r, c) = y(r, c) * (g(r, c) - dot);
                }
            }
            accumulate(n.lhs, gx);
            return;
        }
        case OpKind::log_softmax: {
            const Matrix& y = n.value;
            Matrix gx(y.rows, y.cols);
            for (std::size_t r = 0; r < y.rows; ++r) {
                double gs = 0.0;
                for (std::size_t c = 0; c < y.cols; ++c) {
                    gs += g(r, c);
                }
                for (std::size_t c = 0; c < y.cols; ++c) {
                    gx(r, c) = g(r, c) - std::exp(y(r, c)) * gs;
                }
            }
            accumulate(n.lhs, gx);
            return;
        }
        case OpKind::gather: {
            const Matrix& vx = nodes_[n.lhs].value;
            Matrix gx(vx.rows, vx.cols);
            for (std::size_t r = 0; r < vx.rows; ++r) {
                gx(r, n.indices[r]) = g.data[r];
            }
            accumulate(n.lhs, gx);
            return;
        }
    }
}

std::vector<Matrix> Tape::backward(NodeId root) {
    const Matrix& rv = value(root);
    if (rv.rows != 1 || rv.cols != 1) {
        throw ShapeError("backward: root must be scalar, got " + rv.shape_str());
    }
    adjoints_.assign(nodes_.size(), Matrix{});
    touched_.assign(nodes_.size(), false);
    adjoints_[root.index] = Matrix::scalar(1.0);
    touched_[root.index] = true;
    for (std::uint32_t i = root.index + 1; i-- > 0;) {
        if (touched_[i]) {
            propagate(i);
        }
    }
    std::vector<Matrix> out;
    out.reserve(params_.size());
    for (const NodeId& p : params_) {
        out.push_back(adjoint(p));
    }
    return out;
}

Matrix Tape::adjoint(NodeId id) const {
    const Node& n = node(id);
    if (id.index < touched_.size() && touched_[id.index]) {
        return adjoints_[id.index];
    }
    return Matrix(n.value.rows, n.value.cols);
}

double global_norm(std::span<const GradBlock> grads) {
    double ss = 0.0;
    for (const auto& b : grads) {
        for (double v : b.grad.data) {
            ss += v * v;
        }
    }
    return std::sqrt(ss);
}

ClipResult clip_global_norm(std::span<GradBlock> grads, double max_norm) {
    if (!(max_norm > 0.0)) {
        throw std::invalid_argument("clip_global_norm: max norm must be positive");
    }
    for (const auto& b : grads) {
        for (double v : b.grad.data) {
            if (!std::isfinite(v)) {
                throw NonFiniteError("clip_global_norm: non-finite gradient in '" + b.name + "'");
            }
        }
    }
    ClipResult res;
    res.norm_before = global_norm(grads);
    res.norm_after = res.norm_before;
    if (res.norm_before > max_norm) {
        const double scale = max_norm / res.norm_before;
        for (auto& b : grads) {
            for (double& v : b.grad.data) {
                v *= scale;
            }
        }
        res.clipped = true;
        res.norm_after = global_norm(grads);
    }
    return res;
}

}  // namespace nogte
