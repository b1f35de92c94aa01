#pragma once

// Categorical-distribution math behind target-entropy sampling.
//
// The correction moves eps of probability mass off the most likely action and
// spreads it evenly over the other N-1 actions:
//
//     pt[max] = p[max] - eps,   pt[i] = p[i] + eps / (N - 1)  (i != max)
//
// which keeps sum(pt) = 1. Entropy of pt grows strictly with eps until the
// shrinking argmax meets the second-largest component, at
//
//     eps_cross = (p[max] - p[second]) * (N - 1) / N.
//
// That point bounds the admissible range.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "nogte/rng.hpp"

namespace nogte {

using Categorical = std::vector<double>;

class UnreachableEntropyError : public std::domain_error {
public:
    UnreachableEntropyError(const std::string& what, double achievable)
        : std::domain_error(what), achievable_max(achievable) {}
    double achievable_max;
};

enum class CorrectionMethod { none, closed_form, bisection };

struct EntropyCorrection {
    double epsilon = 0.0;
    Categorical corrected;
    CorrectionMethod method = CorrectionMethod::none;
};

// Throws std::invalid_argument unless components are >= 0 and sum to 1
// within 1e-9.
void validate_categorical(std::span<const double> p);

// Shannon entropy in nats, with 0 log 0 = 0.
double entropy(std::span<const double> p);

// Index of the largest component; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> p);

// Largest admissible eps for p (see header comment). Zero when the maximum
// is tied or p has a single action.
double max_admissible_epsilon(std::span<const double> p);

// Applies the correction. Throws std::out_of_range if eps < 0 or
// eps > max_admissible_epsilon(p); never clamps.
Categorical tilde_transform(std::span<const double> p, double epsilon);

// First-order estimate (target - H(p)) / (log p_max - mean_{i != max} log p_i).
// Returns 0 when target <= H(p). Throws UnreachableEntropyError when
// target >= ln N.
double epsilon_first_order(std::span<const double> p, double target);

// Variant of the closed form with the average taken over raw probabilities
// instead of log-probabilities:
// -(H(p) - target) / (mean_{i != max} p_i - log p_max). Kept only so tests can
// show it disagrees with the bisection oracle.
double epsilon_first_order_as_printed(std::span<const double> p, double target);

// Bisection on [0, eps_cross * (1 - 1e-9)] for H(tilde(p, eps)) = target.
// Returns 0 when target <= H(p). The result satisfies
// target <= H(tilde(p, eps)) <= target + tol. Throws UnreachableEntropyError
// carrying the achievable maximum if the bracket cannot reach target.
double epsilon_bisection(std::span<const double> p, double target, double tol = 1e-6);

struct FlooredSample {
    std::size_t action = 0;
    EntropyCorrection correction;  // corrected == p when no correction fired
};

// Samples from p when H(p) >= target, else from tilde(p, eps*) with eps* from
// bisection at tol 1e-6.
FlooredSample sample_with_floor(std::span<const double> p, double target, Rng& rng);

}  // namespace nogte
