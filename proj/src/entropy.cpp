#include "nogte/entropy.hpp"

#include <cmath>
#include <string>

namespace nogte {

namespace {

constexpr double kBracketShrink = 1e-9;
constexpr int kMaxBisectionIters = 200;

std::size_t second_index(std::span<const double> p, std::size_t imax) {
    std::size_t best = imax == 0 ? 1 : 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (i != imax && p[i] > p[best]) {
            best = i;
        }
    }
    return best;
}

double corrected_entropy(std::span<const double> p, double eps) {
    const std::size_t imax = argmax(p);
    const double spread = eps / static_cast<double>(p.size() - 1);
    double h = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double q = i == imax ? p[i] - eps : p[i] + spread;
        if (q > 0.0) {
            h -= q * std::log(q);
        }
    }
    return h;
}

}  // namespace

void validate_categorical(std::span<const double> p) {
    if (p.empty()) {
        throw std::invalid_argument("categorical: empty probability vector");
    }
    double s = 0.0;
    for (double v : p) {
        if (!(v >= 0.0) || v > 1.0) {
            throw std::invalid_argument("categorical: component outside [0, 1]: " + std::to_string(v));
        }
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-12) {
        throw std::invalid_argument("categorical: components sum to " + std::to_string(s));
    }
}

double entropy(std::span<const double> p) {
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) {
            h -= v * std::log(v);
        }
    }
    return h;
}

std::size_t argmax(std::span<const double> p) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.size(); ++i) {
        if (p[i] > p[best]) {
            best = i;
        }
    }
    return best;
}

double max_admissible_epsilon(std::span<const double> p) {
    if (p.size() < 2) {
        return 0.0;
    }
    const std::size_t imax = argmax(p);
    const double n = static_cast<double>(p.size());
    return (p[imax] - p[second_index(p, imax)]) * (n - 1.0) / n;
}

Categorical tilde_transform(std::span<const double> p, double epsilon) {
    validate_categorical(p);
    if (epsilon == 0.0) {
        return Categorical(p.begin(), p.end());
    }
    const double limit = max_admissible_epsilon(p);
    if (!(epsilon >= 0.0) || epsilon > limit * (1.0 + 1e-12) + 1e-15) {
        throw std::out_of_range("tilde_transform: epsilon " + std::to_string(epsilon) + " outside [0, " +
                                std::to_string(limit) + "]");
    }
    const std::size_t imax = argmax(p);
    const double spread = epsilon / static_cast<double>(p.size() - 1);
    Categorical out(p.begin(), p.end());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = i == imax ? out[i] - epsilon : out[i] + spread;
        if (out[i] < 0.0) {
            out[i] = 0.0;  // only reachable through rounding at the boundary
        }
    }
    return out;
}

double epsilon_first_order(std::span<const double> p, double target) {
    validate_categorical(p);
    const double h = entropy(p);
    const double n = static_cast<double>(p.size());
    if (target >= std::log(n)) {
        throw UnreachableEntropyError("epsilon_first_order: target " + std::to_string(target) +
                                          " is not below ln N = " + std::to_string(std::log(n)),
                                      std::log(n));
    }
    if (target <= h) {
        return 0.0;
    }
    const std::size_t imax = argmax(p);
    double mean_log_rest = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (i != imax) {
            mean_log_rest += std::log(p[i]);
        }
    }
    mean_log_rest /= n - 1.0;
    return (target - h) / (std::log(p[imax]) - mean_log_rest);
}

double epsilon_first_order_as_printed(std::span<const double> p, double target) {
    validate_categorical(p);
    const double h = entropy(p);
    if (target <= h) {
        return 0.0;
    }
    const std::size_t imax = argmax(p);
    double mean_rest = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (i != imax) {
            mean_rest += p[i];
        }
    }
    mean_rest /= static_cast<double>(p.size()) - 1.0;
    return -(h - target) / (mean_rest - std::log(p[imax]));
}

double epsilon_bisection(std::span<const double> p, double target, double tol) {
    validate_categorical(p);
    if (!(tol > 0.0)) {
        throw std::invalid_argument("epsilon_bisection: tolerance must be positive");
    }
    const double h = entropy(p);
    if (target <= h) {
        return 0.0;
    }
    double lo = 0.0;
    double hi = max_admissible_epsilon(p) * (1.0 - kBracketShrink);
    const double h_hi = hi > 0.0 ? corrected_entropy(p, hi) : h;
    if (h_hi < target) {
        throw UnreachableEntropyError("epsilon_bisection: target " + std::to_string(target) +
                                          " exceeds achievable entropy " + std::to_string(h_hi),
                                      h_hi);
    }
    if (h_hi - target <= tol) {
        return hi;
    }

    // The first-order estimate narrows the bracket on one side.
    if (target < std::log(static_cast<double>(p.size()))) {
        const double hint = epsilon_first_order(p, target);
        if (hint > lo && hint < hi) {
            const double h_hint = corrected_entropy(p, hint);
            if (h_hint >= target) {
                if (h_hint - target <= tol) {
                    return hint;
                }
                hi = hint;
            } else {
                lo = hint;
            }
        }
    }

    for (int it = 0; it < kMaxBisectionIters; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) {
            break;
        }
        const double h_mid = corrected_entropy(p, mid);
        if (h_mid >= target) {
            hi = mid;
            if (h_mid - target <= tol) {
                break;
            }
        } else {
            lo = mid;
        }
    }
    return hi;
}

FlooredSample sample_with_floor(std::span<const double> p, double target, Rng& rng) {
    FlooredSample out;
    if (target <= 0.0 || entropy(p) >= target) {
        out.correction.corrected.assign(p.begin(), p.end());
        out.action = rng.categorical(p);
        return out;
    }
    out.correction.epsilon = epsilon_bisection(p, target, 1e-6);
    out.correction.corrected = tilde_transform(p, out.correction.epsilon);
    out.correction.method = CorrectionMethod::bisection;
    out.action = rng.categorical(out.correction.corrected);
    return out;
}

}  // namespace nogte
