#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "spectralreg/autodiff.hpp"
#include "spectralreg/network.hpp"
#include "spectralreg/oracle.hpp"
#include "spectralreg/random.hpp"
#include "spectralreg/tensor.hpp"

namespace spectralreg::testing {

inline double rel_err(const Tensor& got, const Tensor& want) {
    got.require_same(want, "rel_err");
    const double denom = std::max(want.norm(), 1e-300);
    return (got - want).norm() / denom;
}

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

inline Tensor random_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed, double stddev = 1.0) {
    Rng rng = make_stream(seed, 77);
    return gaussian_tensor(rows, cols, rng, stddev);
}

inline oracle::DenseMatrix random_dense(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    return oracle::to_dense(random_tensor(rows, cols, seed));
}

/// f(x) = sum_i x_i^2 per row, as a [b x 1] output.
struct SumOfSquares {
    ad::Var operator()(const ad::Var& x) const { return ad::row_sum(ad::mul(x, x)); }
};

/// f(x) = 1/2 x^T D x with diagonal D.
struct DiagonalQuadratic {
    std::vector<double> diag;
    ad::Var operator()(const ad::Var& x) const {
        Tensor d = Tensor::zeros(1, diag.size());
        for (std::size_t i = 0; i < diag.size(); ++i) d(0, i) = 0.5 * diag[i];
        return ad::row_sum(ad::mul(ad::mul(x, x), ad::broadcast_rows(ad::constant(d), x.rows())));
    }
};

/// f(x) = sum_i sin(x_i).
struct SumOfSines {
    ad::Var operator()(const ad::Var& x) const { return ad::row_sum(ad::sin(x)); }
};

/// x -> x W^T for a fixed W.
struct LinearMap {
    Tensor weight;
    ad::Var operator()(const ad::Var& x) const { return ad::matmul(x, ad::constant(weight), false, true); }
};

/// Jacobian of a plain function at one point by central differences.
inline oracle::DenseMatrix fd_jacobian(const std::function<Tensor(const Tensor&)>& f, const Tensor& x_row,
                                       double step = 1e-6) {
    const Tensor y0 = f(x_row);
    oracle::DenseMatrix j(y0.cols(), x_row.cols());
    Tensor probe = x_row;
    for (std::size_t c = 0; c < x_row.cols(); ++c) {
        const double orig = probe(0, c);
        probe(0, c) = orig + step;
        const Tensor yp = f(probe);
        probe(0, c) = orig - step;
        const Tensor ym = f(probe);
        probe(0, c) = orig;
        for (std::size_t r = 0; r < y0.cols(); ++r) j(r, c) = (yp(0, r) - ym(0, r)) / (2 * step);
    }
    return j;
}

inline Tensor row_of(const Tensor& t, std::size_t r) {
    Tensor out = Tensor::zeros(1, t.cols());
    std::copy(t.row(r).begin(), t.row(r).end(), out.row(0).begin());
    return out;
}

inline oracle::DenseVector dense_row(const Tensor& t, std::size_t r) {
    oracle::DenseVector v(t.cols());
    for (std::size_t c = 0; c < t.cols(); ++c) v[c] = t(r, c);
    return v;
}

/// Flatten all parameters, perturb, rebuild: the finite-difference view of a network loss.
inline Tensor flatten(const std::vector<Tensor>& params) {
    std::vector<double> flat;
    for (const Tensor& p : params) flat.insert(flat.end(), p.values().begin(), p.values().end());
    return Tensor::row_vector(std::move(flat));
}

inline std::vector<Tensor> unflatten(const Tensor& flat, const std::vector<Tensor>& like) {
    std::vector<Tensor> out;
    std::size_t off = 0;
    for (const Tensor& p : like) {
        Tensor t(p.shape());
        std::copy(flat.values().begin() + off, flat.values().begin() + off + p.size(), t.values().begin());
        off += p.size();
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace spectralreg::testing
