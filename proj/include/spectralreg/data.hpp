#pragma once

// Synthetic datasets: separable regression targets and a two-class problem
// mixing a few robust features with many small, low-noise (non-robust) ones.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "spectralreg/errors.hpp"
#include "spectralreg/random.hpp"
#include "spectralreg/tensor.hpp"

namespace spectralreg::data {

enum class Elementwise { Sin, Square };
enum class TargetMode { Value, GradientField };

inline std::string_view to_string(Elementwise g) { return g == Elementwise::Sin ? "sin" : "square"; }

inline Elementwise parse_elementwise(std::string_view s) {
    if (s == "sin") return Elementwise::Sin;
    if (s == "square") return Elementwise::Square;
    throw ConfigError("unknown function '" + std::string(s) + "' (expected sin or square)");
}

/// f(x) = sum_i g(x_i) on R^n.
struct SeparableFunctionSpec {
    Elementwise g = Elementwise::Sin;
    std::size_t n = 64;
    TargetMode mode = TargetMode::Value;
};

struct Dataset {
    Tensor inputs;   // [count x n]
    Tensor targets;  // regression targets, or class labels as [count x 1]
};

inline double g_value(Elementwise g, double x) { return g == Elementwise::Sin ? std::sin(x) : x * x; }
inline double g_derivative(Elementwise g, double x) { return g == Elementwise::Sin ? std::cos(x) : 2.0 * x; }

/// Targets of f (value mode, [count x 1]) or of grad f (gradient mode, [count x n]).
inline Tensor separable_targets(const SeparableFunctionSpec& spec, const Tensor& x) {
    if (spec.mode == TargetMode::Value) {
        Tensor y = Tensor::zeros(x.rows(), 1);
        for (std::size_t r = 0; r < x.rows(); ++r)
            for (double v : x.row(r)) y(r, 0) += g_value(spec.g, v);
        return y;
    }
    return tensor_ops::map(x, [g = spec.g](double v) { return g_derivative(g, v); });
}

/// Inputs drawn from N(0, I).
inline Dataset gen_separable(const SeparableFunctionSpec& spec, std::size_t count, std::uint64_t seed) {
    if (spec.n < 1) throw ConfigError("separable function dimension must be at least 1");
    Rng rng = make_stream(seed, 0xda7a);
    Tensor x = gaussian_tensor(count, spec.n, rng);
    Tensor y = separable_targets(spec, x);
    return {std::move(x), std::move(y)};
}

/// Two Gaussian classes in [0, 1]^dim centred at 0.5. The first `robust`
/// coordinates shift by +-robust_shift with robust_noise; the rest shift by
/// +-weak_shift with weak_noise, so together they are highly predictive but
/// each can be flipped by a perturbation larger than weak_shift.
struct TwoClassSpec {
    std::size_t dim = 32;
    std::size_t robust = 4;
    double robust_shift = 0.25;
    double robust_noise = 0.3;
    double weak_shift = 0.02;
    double weak_noise = 0.02;
};

inline Dataset gen_two_class(const TwoClassSpec& spec, std::size_t count, std::uint64_t seed) {
    if (spec.robust > spec.dim) throw ConfigError("robust feature count exceeds dimension");
    Rng rng = make_stream(seed, 0xc1a55);
    std::bernoulli_distribution coin(0.5);
    std::normal_distribution<double> unit;
    Tensor x = Tensor::zeros(count, spec.dim);
    Tensor y = Tensor::zeros(count, 1);
    for (std::size_t r = 0; r < count; ++r) {
        const bool positive = coin(rng);
        const double sign = positive ? 1.0 : -1.0;
        y(r, 0) = positive ? 1.0 : 0.0;
        for (std::size_t c = 0; c < spec.dim; ++c) {
            const bool strong = c < spec.robust;
            const double shift = strong ? spec.robust_shift : spec.weak_shift;
            const double noise = strong ? spec.robust_noise : spec.weak_noise;
            x(r, c) = std::clamp(0.5 + sign * shift + noise * unit(rng), 0.0, 1.0);
        }
    }
    return {std::move(x), std::move(y)};
}

inline Tensor take_rows(const Tensor& t, const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end) {
    Tensor out = Tensor::zeros(end - begin, t.cols());
    for (std::size_t i = begin; i < end; ++i)
        std::copy(t.row(idx[i]).begin(), t.row(idx[i]).end(), out.row(i - begin).begin());
    return out;
}

}  // namespace spectralreg::data
