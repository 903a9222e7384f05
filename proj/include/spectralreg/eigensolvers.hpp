#pragma once

// Extremal eigenpairs of batched symmetric operators.
//
// The Lanczos routine advances every batch row in lock-step with one batched
// operator application per iteration, then solves the small tridiagonal
// problems with implicit-shift QL. Power iteration and the normalized
// gradient-ascent recurrence are provided as baselines.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "spectralreg/errors.hpp"
#include "spectralreg/linops.hpp"
#include "spectralreg/random.hpp"
#include "spectralreg/tensor.hpp"

namespace spectralreg::eig {

/// Rows with a recurrence norm below this (or non-finite) are restarted.
inline constexpr double kBreakdownThreshold = 1e-12;

struct LanczosDecomposition {
    std::size_t batch = 0;
    std::size_t steps = 0;  // n
    std::size_t dim = 0;    // d
    Tensor basis;           // [b x n x d]; basis(i, j, :) is the j-th Lanczos vector of row i
    Tensor tridiagonal;     // [b x n x n]
    Tensor alphas;          // [b x n]
    Tensor betas;           // [b x n]; betas(i, 0) = 0, betas(i, j) couples vectors j-1 and j
    std::vector<std::size_t> restarts;  // breakdown restarts per row

    double basis_at(std::size_t row, std::size_t step, std::size_t k) const {
        return basis[(row * steps + step) * dim + k];
    }
    double t_at(std::size_t row, std::size_t r, std::size_t c) const {
        return tridiagonal[(row * steps + r) * steps + c];
    }
};

struct ExtremalEigenpair {
    Tensor lambda_max;  // [b], largest-magnitude eigenvalue estimate
    Tensor v_m;         // [b x d], unit rows
    Tensor residual;    // [b], ||M v_m - lambda v_m||_2

    /// sqrt(lambda) per row; the spectral norm when the operator is a Gram A A^T.
    std::vector<double> sigma() const {
        std::vector<double> s(lambda_max.size());
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::sqrt(std::max(lambda_max[i], 0.0));
        return s;
    }
};

/// Optional per-iteration record for the iterative baselines.
struct IterationTrace {
    std::vector<Tensor> iterates;                // unit iterate after each step, [b x d]
    std::vector<std::vector<double>> estimates;  // eigenvalue estimate available at each step, per row
};

struct TridiagonalEigen {
    Tensor eigenvalues;   // [b x n], ascending per row
    Tensor eigenvectors;  // [b x n x n]; column k of row i pairs with eigenvalues(i, k)
};

namespace detail {

inline void require_finite(const Tensor& t, const char* what) {
    for (double v : t.values()) {
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite value from ") + what, v);
    }
}

inline Tensor random_unit_rows(std::size_t batch, std::size_t dim, std::vector<Rng>& streams) {
    Tensor v = Tensor::zeros(batch, dim);
    for (std::size_t r = 0; r < batch; ++r) fill_unit_sphere(v.row(r), streams[r]);
    return v;
}

inline std::vector<Rng> row_streams(std::size_t batch, std::uint64_t seed) {
    std::vector<Rng> streams;
    streams.reserve(batch);
    for (std::size_t r = 0; r < batch; ++r) streams.push_back(make_stream(seed, r));
    return streams;
}

/// Fresh random unit vector orthogonal to `previous` (classical Gram-Schmidt, twice).
inline void restart_row(std::span<double> out, const std::vector<std::span<const double>>& previous, Rng& rng) {
    for (;;) {
        fill_unit_sphere(out, rng);
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& p : previous) {
                const double c = std::inner_product(out.begin(), out.end(), p.begin(), 0.0);
                for (std::size_t k = 0; k < out.size(); ++k) out[k] -= c * p[k];
            }
        }
        double norm = 0.0;
        for (double v : out) norm += v * v;
        norm = std::sqrt(norm);
        if (norm > 1e-8) {
            for (double& v : out) v /= norm;
            return;
        }
    }
}

/// Implicit-shift QL on one symmetric tridiagonal matrix (diag d, off-diagonal e
/// with e[i] coupling i and i+1). On return d holds eigenvalues and z (row-major
/// n x n, initially identity) holds eigenvectors as columns.
inline void tridiagonal_ql(std::vector<double>& d, std::vector<double>& e, std::vector<double>& z,
                           std::size_t n, int max_sweeps = 30) {
    if (n == 0) return;
    e.resize(n);
    e[n - 1] = 0.0;
    const double eps = std::numeric_limits<double>::epsilon();
    for (std::size_t l = 0; l < n; ++l) {
        int iter = 0;
        std::size_t m;
        do {
            for (m = l; m + 1 < n; ++m) {
                const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
                if (std::abs(e[m]) <= eps * dd) break;
            }
            if (m != l) {
                if (iter++ == max_sweeps) {
                    throw NumericError("tridiagonal QL did not converge for eigenvalue " + std::to_string(l), d[l]);
                }
                double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                double r = std::hypot(g, 1.0);
                g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
                double s = 1.0, c = 1.0, p = 0.0;
                bool underflow = false;
                for (std::size_t ii = m; ii-- > l;) {
                    const double f = s * e[ii];
                    const double b = c * e[ii];
                    r = std::hypot(f, g);
                    e[ii + 1] = r;
                    if (r == 0.0) {
                        d[ii + 1] -= p;
                        e[m] = 0.0;
                        underflow = true;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[ii + 1] - p;
                    r = (d[ii] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[ii + 1] = g + p;
                    g = c * r - b;
                    for (std::size_t k = 0; k < n; ++k) {
                        const double zf = z[k * n + ii + 1];
                        z[k * n + ii + 1] = s * z[k * n + ii] + c * zf;
                        z[k * n + ii] = c * z[k * n + ii] - s * zf;
                    }
                }
                if (underflow) continue;
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        } while (m != l);
    }
}

inline void normalize_rows(Tensor& v) {
    const auto norms = tensor_ops::row_norms(v);
    for (std::size_t r = 0; r < v.rows(); ++r)
        for (double& x : v.row(r)) x /= norms[r];
}

inline LanczosDecomposition lanczos_impl(const linops::BatchedLinearOperator& op, const Tensor& start, std::size_t n,
                                         std::vector<Rng>& streams) {
    const std::size_t b = op.batch;
    const std::size_t d = op.dim;
    if (!op.symmetric) throw ContractError("lanczos requires an operator flagged symmetric");
    if (n < 1) throw ContractError("lanczos needs at least one iteration");
    if (n > d) {
        throw ContractError("lanczos iteration count " + std::to_string(n) + " exceeds dimension " + std::to_string(d));
    }
    if (start.rank() != 2 || start.rows() != b || start.cols() != d) {
        throw DimensionError("lanczos start rows must be [" + std::to_string(b) + " x " + std::to_string(d) +
                             "], got " + shape_str(start.shape()));
    }

    std::vector<Tensor> v(n);
    std::vector<std::vector<double>> a(n, std::vector<double>(b, 0.0));
    std::vector<std::vector<double>> beta(n, std::vector<double>(b, 0.0));
    std::vector<std::size_t> restarts(b, 0);

    v[0] = start;
    detail::normalize_rows(v[0]);
    Tensor omega = op.apply(v[0]);
    detail::require_finite(omega, "operator");
    a[0] = tensor_ops::row_dots(omega, v[0]);
    for (std::size_t r = 0; r < b; ++r)
        for (std::size_t k = 0; k < d; ++k) omega(r, k) -= a[0][r] * v[0](r, k);

    for (std::size_t i = 1; i < n; ++i) {
        v[i] = Tensor::zeros(b, d);
        for (std::size_t r = 0; r < b; ++r) {
            double norm = 0.0;
            for (double w : omega.row(r)) norm += w * w;
            norm = std::sqrt(norm);
            beta[i][r] = std::isfinite(norm) ? norm : 0.0;
            if (!std::isfinite(norm) || norm < kBreakdownThreshold) {
                std::vector<std::span<const double>> previous;
                for (std::size_t j = 0; j < i; ++j) previous.push_back(v[j].row(r));
                detail::restart_row(v[i].row(r), previous, streams[r]);
                ++restarts[r];
            } else {
                for (std::size_t k = 0; k < d; ++k) v[i](r, k) = omega(r, k) / norm;
            }
        }
        omega = op.apply(v[i]);
        detail::require_finite(omega, "operator");
        a[i] = tensor_ops::row_dots(omega, v[i]);
        for (std::size_t r = 0; r < b; ++r)
            for (std::size_t k = 0; k < d; ++k)
                omega(r, k) -= a[i][r] * v[i](r, k) + beta[i][r] * v[i - 1](r, k);
    }

    LanczosDecomposition out;
    out.batch = b;
    out.steps = n;
    out.dim = d;
    out.basis = Tensor({b, n, d});
    out.tridiagonal = Tensor({b, n, n});
    out.alphas = Tensor({b, n});
    out.betas = Tensor({b, n});
    out.restarts = std::move(restarts);
    for (std::size_t r = 0; r < b; ++r) {
        for (std::size_t j = 0; j < n; ++j) {
            std::copy(v[j].row(r).begin(), v[j].row(r).end(), out.basis.values().begin() + (r * n + j) * d);
            out.alphas(r, j) = a[j][r];
            out.betas(r, j) = beta[j][r];
            out.tridiagonal[(r * n + j) * n + j] = a[j][r];
            if (j + 1 < n) {
                out.tridiagonal[(r * n + j) * n + j + 1] = beta[j + 1][r];
                out.tridiagonal[(r * n + j + 1) * n + j] = beta[j + 1][r];
            }
        }
    }
    return out;
}

}  // namespace detail

/// Parallel Lanczos: n steps of the three-term recurrence on every batch row,
/// without reorthogonalization. Start rows and breakdown restarts come from
/// per-row streams of `seed`.
inline LanczosDecomposition lanczos(const linops::BatchedLinearOperator& op, std::size_t n, std::uint64_t seed) {
    auto streams = detail::row_streams(op.batch, seed);
    return detail::lanczos_impl(op, detail::random_unit_rows(op.batch, op.dim, streams), n, streams);
}

/// Same recurrence from explicit start rows (normalized here).
inline LanczosDecomposition lanczos(const linops::BatchedLinearOperator& op, const Tensor& start, std::size_t n,
                                    std::uint64_t seed) {
    auto streams = detail::row_streams(op.batch, seed);
    return detail::lanczos_impl(op, start, n, streams);
}

/// Full spectrum of each symmetric tridiagonal [n x n] slice of a [b x n x n] tensor.
inline TridiagonalEigen tridiagonal_eigh(const Tensor& t) {
    if (t.rank() != 3 || t.shape()[1] != t.shape()[2]) {
        throw DimensionError("tridiagonal_eigh expects [b x n x n], got " + shape_str(t.shape()));
    }
    const std::size_t b = t.shape()[0];
    const std::size_t n = t.shape()[1];
    TridiagonalEigen out{Tensor({b, n}), Tensor({b, n, n})};
    for (std::size_t r = 0; r < b; ++r) {
        const double* m = t.values().data() + r * n * n;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t gap = i > j ? i - j : j - i;
                if (gap > 1 && m[i * n + j] != 0.0) {
                    throw ContractError("matrix is not tridiagonal at (" + std::to_string(i) + ", " +
                                        std::to_string(j) + ")");
                }
                if (std::abs(m[i * n + j] - m[j * n + i]) > 1e-9) {
                    throw ContractError("matrix is not symmetric at (" + std::to_string(i) + ", " +
                                        std::to_string(j) + ")");
                }
            }
        }
        std::vector<double> d(n), e(n, 0.0), z(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            d[i] = m[i * n + i];
            if (i + 1 < n) e[i] = m[i * n + i + 1];
            z[i * n + i] = 1.0;
        }
        detail::tridiagonal_ql(d, e, z, n);

        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return d[x] < d[y]; });
        for (std::size_t k = 0; k < n; ++k) {
            out.eigenvalues(r, k) = d[order[k]];
            for (std::size_t i = 0; i < n; ++i) out.eigenvectors[(r * n + i) * n + k] = z[i * n + order[k]];
        }
    }
    return out;
}

namespace detail {

inline std::size_t largest_magnitude_index(const Tensor& eigenvalues, std::size_t row, std::size_t n) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < n; ++k) {
        const double cand = eigenvalues(row, k);
        const double cur = eigenvalues(row, best);
        if (std::abs(cand) > std::abs(cur) || (std::abs(cand) == std::abs(cur) && cand > cur)) best = k;
    }
    return best;
}

inline Tensor residuals(const linops::BatchedLinearOperator& op, const Tensor& v, const Tensor& lambda,
                        const Tensor* mv_in = nullptr) {
    const Tensor mv = mv_in ? *mv_in : op.apply(v);
    Tensor res({v.rows()});
    for (std::size_t r = 0; r < v.rows(); ++r) {
        double s = 0.0;
        for (std::size_t k = 0; k < v.cols(); ++k) {
            const double diff = mv(r, k) - lambda[r] * v(r, k);
            s += diff * diff;
        }
        res[r] = std::sqrt(s);
    }
    return res;
}

}  // namespace detail

/// Largest-magnitude Ritz value of each leading k x k block of T, k = 1..n.
/// Entry [k-1][row] is the estimate available after k Lanczos iterations.
inline std::vector<std::vector<double>> ritz_history(const LanczosDecomposition& dec) {
    std::vector<std::vector<double>> out(dec.steps, std::vector<double>(dec.batch));
    for (std::size_t k = 1; k <= dec.steps; ++k) {
        Tensor block({dec.batch, k, k});
        for (std::size_t r = 0; r < dec.batch; ++r)
            for (std::size_t i = 0; i < k; ++i)
                for (std::size_t j = 0; j < k; ++j) block[(r * k + i) * k + j] = dec.t_at(r, i, j);
        const auto eig = tridiagonal_eigh(block);
        for (std::size_t r = 0; r < dec.batch; ++r)
            out[k - 1][r] = eig.eigenvalues(r, detail::largest_magnitude_index(eig.eigenvalues, r, k));
    }
    return out;
}

/// Lanczos followed by the tridiagonal eigensolve; the Ritz vector of the
/// largest-magnitude Ritz value is mapped back through the basis.
inline ExtremalEigenpair extremal_eigenpair(const linops::BatchedLinearOperator& op, std::size_t n,
                                            std::uint64_t seed, LanczosDecomposition* decomposition = nullptr) {
    LanczosDecomposition dec = lanczos(op, n, seed);
    const TridiagonalEigen eig = tridiagonal_eigh(dec.tridiagonal);
    const std::size_t b = dec.batch;
    const std::size_t d = dec.dim;

    ExtremalEigenpair out{Tensor({b}), Tensor::zeros(b, d), Tensor({b})};
    for (std::size_t r = 0; r < b; ++r) {
        const std::size_t k = detail::largest_magnitude_index(eig.eigenvalues, r, n);
        out.lambda_max[r] = eig.eigenvalues(r, k);
        auto row = out.v_m.row(r);
        for (std::size_t j = 0; j < n; ++j) {
            const double y = eig.eigenvectors[(r * n + j) * n + k];
            for (std::size_t c = 0; c < d; ++c) row[c] += y * dec.basis_at(r, j, c);
        }
    }
    detail::normalize_rows(out.v_m);
    out.residual = detail::residuals(op, out.v_m, out.lambda_max);
    if (decomposition) *decomposition = std::move(dec);
    return out;
}

/// n normalized matvec steps; the eigenvalue is the Rayleigh quotient of the final iterate.
inline ExtremalEigenpair power_iteration(const linops::BatchedLinearOperator& op, std::size_t n, std::uint64_t seed,
                                         IterationTrace* trace = nullptr) {
    if (n < 1) throw ContractError("power iteration needs at least one step");
    const std::size_t b = op.batch;
    const std::size_t d = op.dim;
    auto streams = detail::row_streams(b, seed);
    Tensor v = detail::random_unit_rows(b, d, streams);

    for (std::size_t i = 0; i < n; ++i) {
        Tensor w = op.apply(v);
        detail::require_finite(w, "operator");
        if (trace) trace->estimates.push_back(tensor_ops::row_dots(v, w));
        const auto norms = tensor_ops::row_norms(w);
        for (std::size_t r = 0; r < b; ++r) {
            if (norms[r] < kBreakdownThreshold) {
                fill_unit_sphere(v.row(r), streams[r]);
            } else {
                for (std::size_t k = 0; k < d; ++k) v(r, k) = w(r, k) / norms[r];
            }
        }
        if (trace) trace->iterates.push_back(v);
    }

    const Tensor mv = op.apply(v);
    detail::require_finite(mv, "operator");
    ExtremalEigenpair out{Tensor({b}, tensor_ops::row_dots(v, mv)), v, Tensor({b})};
    out.residual = detail::residuals(op, out.v_m, out.lambda_max, &mv);
    return out;
}

/// Normalized gradient ascent on ||A v||_2 using the closed-form gradient
/// A^T A v / ||A v||_2, so only matvecs are needed. Returns an eigenpair of A^T A.
inline ExtremalEigenpair gradient_ascent_spectral(const linops::RectangularOperatorPair& a, double alpha,
                                                  std::size_t n, std::uint64_t seed,
                                                  IterationTrace* trace = nullptr) {
    if (!(alpha > 0.0)) throw ContractError("gradient ascent step size must be positive");
    if (n < 1) throw ContractError("gradient ascent needs at least one step");
    const std::size_t b = a.batch;
    const std::size_t d = a.in_dim;
    auto streams = detail::row_streams(b, seed);
    Tensor v = detail::random_unit_rows(b, d, streams);

    for (std::size_t i = 0; i < n; ++i) {
        const Tensor av = a.apply(v);
        detail::require_finite(av, "operator");
        const Tensor ata_v = a.apply_adjoint(av);
        detail::require_finite(ata_v, "operator");
        const auto norms = tensor_ops::row_norms(av);
        if (trace) {
            std::vector<double> est(b);
            for (std::size_t r = 0; r < b; ++r) est[r] = norms[r] * norms[r];
            trace->estimates.push_back(std::move(est));
        }
        for (std::size_t r = 0; r < b; ++r) {
            if (norms[r] < kBreakdownThreshold) {
                fill_unit_sphere(v.row(r), streams[r]);
                continue;
            }
            double nn = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                v(r, k) += alpha * ata_v(r, k) / norms[r];
                nn += v(r, k) * v(r, k);
            }
            nn = std::sqrt(nn);
            for (std::size_t k = 0; k < d; ++k) v(r, k) /= nn;
        }
        if (trace) trace->iterates.push_back(v);
    }

    const Tensor av = a.apply(v);
    const Tensor ata_v = a.apply_adjoint(av);
    detail::require_finite(ata_v, "operator");
    ExtremalEigenpair out{Tensor({b}, tensor_ops::row_dots(av, av)), v, Tensor({b})};
    for (std::size_t r = 0; r < b; ++r) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double diff = ata_v(r, k) - out.lambda_max[r] * v(r, k);
            s += diff * diff;
        }
        out.residual[r] = std::sqrt(s);
    }
    return out;
}

}  // namespace spectralreg::eig
