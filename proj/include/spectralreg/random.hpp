#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

#include "spectralreg/tensor.hpp"

namespace spectralreg {

using Rng = std::mt19937_64;

/// Independent stream for (seed, stream index). Used so that batch rows draw
/// their random vectors independently of how many rows exist or run in parallel.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      0x5eedu};
    return Rng(seq);
}

inline void fill_gaussian(std::span<double> out, Rng& rng, double stddev = 1.0) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : out) v = dist(rng);
}

inline void fill_rademacher(std::span<double> out, Rng& rng) {
    std::bernoulli_distribution coin(0.5);
    for (double& v : out) v = coin(rng) ? 1.0 : -1.0;
}

/// Uniform direction on the unit sphere: a normalized spherical Gaussian draw.
inline void fill_unit_sphere(std::span<double> out, Rng& rng) {
    double norm = 0.0;
    do {
        fill_gaussian(out, rng);
        norm = 0.0;
        for (double v : out) norm += v * v;
        norm = std::sqrt(norm);
    } while (norm == 0.0);
    for (double& v : out) v /= norm;
}

inline Tensor gaussian_tensor(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 1.0) {
    Tensor t = Tensor::zeros(rows, cols);
    fill_gaussian(t.values(), rng, stddev);
    return t;
}

}  // namespace spectralreg
