#include "nogte/nets.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nogte {

namespace {

constexpr const char* kCheckpointMagic = "nogte-checkpoint";
constexpr int kCheckpointVersion = 1;

Matrix uniform_init(std::size_t fan_in, std::size_t fan_out, double gain, Rng& rng) {
    // Glorot-uniform bound scaled by gain.
    const double bound = gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix m(fan_in, fan_out);
    for (double& v : m.data) {
        v = rng.uniform(-bound, bound);
    }
    return m;
}

void dense(std::span<const double> in, const Matrix& w, const Matrix& b, std::span<double> out) {
    for (std::size_t j = 0; j < w.cols; ++j) {
        out[j] = b.data[j];
    }
    for (std::size_t k = 0; k < w.rows; ++k) {
        const double x = in[k];
        const double* wrow = w.data.data() + k * w.cols;
        for (std::size_t j = 0; j < w.cols; ++j) {
            out[j] += x * wrow[j];
        }
    }
}

}  // namespace

const char* group_name(ParamGroup g) noexcept {
    switch (g) {
        case ParamGroup::features: return "features";
        case ParamGroup::policy: return "policy";
        case ParamGroup::value: return "value";
    }
    return "unknown";
}

ActorCriticNet::ActorCriticNet(NetShape shape, Rng& rng) : shape_(shape) {
    if (shape.state_dim == 0 || shape.action_count == 0 || shape.hidden == 0) {
        throw std::invalid_argument("ActorCriticNet: dimensions must be positive");
    }
    const std::size_t s = shape.state_dim;
    const std::size_t h = shape.hidden;
    const std::size_t a = shape.action_count;
    params_.reserve(slot_count);
    params_.push_back({"features.w1", ParamGroup::features, uniform_init(s, h, 1.0, rng)});
    params_.push_back({"features.b1", ParamGroup::features, Matrix(1, h)});
    params_.push_back({"features.w2", ParamGroup::features, uniform_init(h, h, 1.0, rng)});
    params_.push_back({"features.b2", ParamGroup::features, Matrix(1, h)});
    // Small final policy layer keeps the initial policy close to uniform.
    params_.push_back({"policy.w", ParamGroup::policy, uniform_init(h, a, 0.01, rng)});
    params_.push_back({"policy.b", ParamGroup::policy, Matrix(1, a)});
    params_.push_back({"value.w", ParamGroup::value, uniform_init(h, 1, 1.0, rng)});
    params_.push_back({"value.b", ParamGroup::value, Matrix(1, 1)});
}

std::size_t ActorCriticNet::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& p : params_) {
        n += p.value.size();
    }
    return n;
}

NetNodes ActorCriticNet::bind(Tape& tape) const {
    NetNodes nodes;
    nodes.params.reserve(params_.size());
    for (const auto& p : params_) {
        nodes.params.push_back(tape.parameter(p.value));
    }
    return nodes;
}

NodeId ActorCriticNet::features(Tape& tape, const NetNodes& n, NodeId states) const {
    NodeId h1 = tape.tanh(tape.add(tape.matmul(states, n.params[w1]), n.params[b1]));
    return tape.tanh(tape.add(tape.matmul(h1, n.params[w2]), n.params[b2]));
}

NodeId ActorCriticNet::policy_logits(Tape& tape, const NetNodes& n, NodeId f) const {
    return tape.add(tape.matmul(f, n.params[wp]), n.params[bp]);
}

NodeId ActorCriticNet::value(Tape& tape, const NetNodes& n, NodeId f) const {
    return tape.add(tape.matmul(f, n.params[wv]), n.params[bv]);
}

PolicyValue ActorCriticNet::evaluate(std::span<const double> state) const {
    if (state.size() != shape_.state_dim) {
        throw ShapeError("ActorCriticNet::evaluate: state has " + std::to_string(state.size()) +
                         " components, expected " + std::to_string(shape_.state_dim));
    }
    const std::size_t h = shape_.hidden;
    const std::size_t a = shape_.action_count;
    std::vector<double> h1(h), h2(h), logits(a);
    dense(state, params_[w1].value, params_[b1].value, h1);
    for (double& v : h1) {
        v = std::tanh(v);
    }
    dense(h1, params_[w2].value, params_[b2].value, h2);
    for (double& v : h2) {
        v = std::tanh(v);
    }
    dense(h2, params_[wp].value, params_[bp].value, logits);
    double value = 0.0;
    dense(h2, params_[wv].value, params_[bv].value, std::span<double>(&value, 1));

    PolicyValue out;
    out.probs.resize(a);
    out.log_probs.resize(a);
    double mx = logits[0];
    for (double l : logits) {
        mx = std::max(mx, l);
    }
    double z = 0.0;
    for (double l : logits) {
        z += std::exp(l - mx);
    }
    const double lse = mx + std::log(z);
    for (std::size_t i = 0; i < a; ++i) {
        out.log_probs[i] = logits[i] - lse;
        out.probs[i] = std::exp(out.log_probs[i]);
    }
    out.value = value;
    if (!std::isfinite(value) || !std::isfinite(lse)) {
        throw NonFiniteError("ActorCriticNet::evaluate: non-finite activation");
    }
    return out;
}

void ActorCriticNet::zero_output_layers() {
    for (Slot s : {wp, bp, wv, bv}) {
        for (double& v : params_[s].value.data) {
            v = 0.0;
        }
    }
}

bool ActorCriticNet::operator==(const ActorCriticNet& o) const {
    if (shape_.state_dim != o.shape_.state_dim || shape_.action_count != o.shape_.action_count ||
        shape_.hidden != o.shape_.hidden || params_.size() != o.params_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].name != o.params_[i].name || !(params_[i].value == o.params_[i].value)) {
            return false;
        }
    }
    return true;
}

void ActorCriticNet::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
    }
    out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
    out << "shape " << shape_.state_dim << ' ' << shape_.action_count << ' ' << shape_.hidden << '\n';
    out.precision(17);
    for (const auto& p : params_) {
        out << p.name << ' ' << p.value.rows << ' ' << p.value.cols << '\n';
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            out << p.value.data[i] << (i + 1 == p.value.size() ? '\n' : ' ');
        }
    }
    if (!out) {
        throw std::runtime_error("failed writing checkpoint: " + path.string());
    }
}

ActorCriticNet ActorCriticNet::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open checkpoint: " + path.string());
    }
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != kCheckpointMagic || version != kCheckpointVersion) {
        throw std::runtime_error("not a checkpoint file: " + path.string());
    }
    std::string tag;
    NetShape shape;
    in >> tag >> shape.state_dim >> shape.action_count >> shape.hidden;
    if (tag != "shape" || !in) {
        throw std::runtime_error("checkpoint missing shape line: " + path.string());
    }
    Rng scratch(0);
    ActorCriticNet net(shape, scratch);
    for (auto& p : net.params_) {
        std::string name;
        std::size_t r = 0, c = 0;
        in >> name >> r >> c;
        if (!in || name != p.name || r != p.value.rows || c != p.value.cols) {
            throw std::runtime_error("checkpoint entry mismatch at '" + p.name + "' in " + path.string());
        }
        for (double& v : p.value.data) {
            in >> v;
        }
        if (!in) {
            throw std::runtime_error("checkpoint truncated in '" + p.name + "': " + path.string());
        }
    }
    return net;
}

std::vector<GradBlock> make_grad_blocks(const ActorCriticNet& net, std::vector<Matrix> adjoints) {
    const auto params = net.params();
    if (adjoints.size() != params.size()) {
        throw std::invalid_argument("make_grad_blocks: adjoint count does not match parameter count");
    }
    std::vector<GradBlock> blocks;
    blocks.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        blocks.push_back({params[i].name, std::move(adjoints[i])});
    }
    return blocks;
}

Adam::Adam(const ActorCriticNet& net, double lr) : lr_(lr) {
    if (!(lr > 0.0)) {
        throw std::invalid_argument("Adam: learning rate must be positive");
    }
    for (const auto& p : net.params()) {
        m_.emplace_back(p.value.rows, p.value.cols);
        v_.emplace_back(p.value.rows, p.value.cols);
    }
}

void Adam::step(ActorCriticNet& net, std::span<const GradBlock> grads) {
    auto params = net.params();
    if (grads.size() != params.size() || m_.size() != params.size()) {
        throw std::invalid_argument("Adam::step: gradient blocks do not match parameters");
    }
    const std::uint64_t t = t_ + 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));

    std::vector<Matrix> m_next = m_;
    std::vector<Matrix> v_next = v_;
    std::vector<Matrix> updated;
    updated.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Matrix& g = grads[i].grad;
        if (!g.same_shape(params[i].value)) {
            throw ShapeError("Adam::step: gradient " + g.shape_str() + " for '" + params[i].name + "' of shape " +
                             params[i].value.shape_str());
        }
        Matrix w = params[i].value;
        for (std::size_t k = 0; k < g.size(); ++k) {
            double& m = m_next[i].data[k];
            double& v = v_next[i].data[k];
            m = beta1 * m + (1.0 - beta1) * g.data[k];
            v = beta2 * v + (1.0 - beta2) * g.data[k] * g.data[k];
            const double mhat = m / bc1;
            const double vhat = v / bc2;
            w.data[k] -= lr_ * mhat / (std::sqrt(vhat) + eps);
            if (!std::isfinite(w.data[k])) {
                throw NonFiniteError("Adam::step: non-finite update in '" + params[i].name + "'");
            }
        }
        updated.push_back(std::move(w));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i].value = std::move(updated[i]);
    }
    m_ = std::move(m_next);
    v_ = std::move(v_next);
    t_ = t;
}

}  // namespace nogte
