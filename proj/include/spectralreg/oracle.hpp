#pragma once

// Brute-force ground truth for tests and evaluation metrics. Nothing in the
// training path depends on this header.

#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "spectralreg/errors.hpp"
#include "spectralreg/linops.hpp"
#include "spectralreg/network.hpp"
#include "spectralreg/tensor.hpp"

namespace spectralreg::oracle {

using DenseMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using DenseVector = Eigen::VectorXd;

inline DenseMatrix to_dense(const Tensor& t) {
    DenseMatrix m(t.rows(), t.cols());
    for (std::size_t r = 0; r < t.rows(); ++r)
        for (std::size_t c = 0; c < t.cols(); ++c) m(r, c) = t(r, c);
    return m;
}

inline Tensor to_tensor(const DenseMatrix& m) {
    Tensor t = Tensor::zeros(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) t(r, c) = m(r, c);
    return t;
}

inline Tensor basis_batch(std::size_t batch, std::size_t dim, std::size_t j) {
    Tensor e = Tensor::zeros(batch, dim);
    for (std::size_t r = 0; r < batch; ++r) e(r, j) = 1.0;
    return e;
}

/// Explicit Jacobian per batch row, column j = J e_j.
template <Model M>
std::vector<DenseMatrix> dense_jacobian(const M& model, const Tensor& x) {
    const JacobianTape tape(model, x);
    const std::size_t b = tape.batch();
    std::vector<DenseMatrix> out(b, DenseMatrix::Zero(tape.output_dim(), tape.input_dim()));
    for (std::size_t j = 0; j < tape.input_dim(); ++j) {
        const Tensor col = tape.jvp(ad::constant(basis_batch(b, tape.input_dim(), j))).value();
        for (std::size_t r = 0; r < b; ++r)
            for (std::size_t i = 0; i < tape.output_dim(); ++i) out[r](i, j) = col(r, i);
    }
    return out;
}

/// Same matrices assembled row by row, row i = e_i^T J.
template <Model M>
std::vector<DenseMatrix> dense_jacobian_by_rows(const M& model, const Tensor& x) {
    const JacobianTape tape(model, x);
    const std::size_t b = tape.batch();
    std::vector<DenseMatrix> out(b, DenseMatrix::Zero(tape.output_dim(), tape.input_dim()));
    for (std::size_t i = 0; i < tape.output_dim(); ++i) {
        const Tensor row = tape.vjp(ad::constant(basis_batch(b, tape.output_dim(), i))).value();
        for (std::size_t r = 0; r < b; ++r)
            for (std::size_t j = 0; j < tape.input_dim(); ++j) out[r](i, j) = row(r, j);
    }
    return out;
}

/// Explicit Hessian per batch row of a scalar model, column j = H e_j.
template <Model M>
std::vector<DenseMatrix> dense_hessian(const M& model, const Tensor& x) {
    const HessianTape tape(model, x);
    const std::size_t b = tape.batch();
    const std::size_t d = tape.dim();
    std::vector<DenseMatrix> out(b, DenseMatrix::Zero(d, d));
    for (std::size_t j = 0; j < d; ++j) {
        const Tensor col = tape.hvp(ad::constant(basis_batch(b, d, j))).value();
        for (std::size_t r = 0; r < b; ++r)
            for (std::size_t i = 0; i < d; ++i) out[r](i, j) = col(r, i);
    }
    for (const auto& h : out) {
        const double asym = (h - h.transpose()).norm();
        if (asym >= 1e-8 * std::max(1.0, h.norm())) throw NumericError("dense Hessian is not symmetric", asym);
    }
    return out;
}

struct SymmetricEigen {
    DenseVector eigenvalues;   // descending
    DenseMatrix eigenvectors;  // column k pairs with eigenvalues[k]
    int sweeps = 0;
    double off_diagonal = 0.0;  // Frobenius mass left off the diagonal
};

/// Cyclic Jacobi rotations until the off-diagonal Frobenius mass drops below
/// 1e-12 * max(1, ||M||_F).
inline SymmetricEigen dense_symm_eig(const DenseMatrix& m, int max_sweeps = 100) {
    if (m.rows() != m.cols()) throw ContractError("dense_symm_eig needs a square matrix");
    const Eigen::Index n = m.rows();
    if ((m - m.transpose()).norm() > 1e-9 * std::max(1.0, m.norm())) {
        throw ContractError("dense_symm_eig needs a symmetric matrix");
    }
    DenseMatrix a = 0.5 * (m + m.transpose());
    DenseMatrix v = DenseMatrix::Identity(n, n);
    const double tol = 1e-12 * std::max(1.0, a.norm());
    auto off_mass = [&] {
        double s = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                if (i != j) s += a(i, j) * a(i, j);
        return std::sqrt(s);
    };

    SymmetricEigen out;
    double off = off_mass();
    while (off >= tol) {
        if (out.sweeps++ >= max_sweeps) throw NumericError("Jacobi eigensolver did not converge", off);
        for (Eigen::Index p = 0; p + 1 < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
        off = off_mass();
    }
    out.off_diagonal = off;

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return a(x, x) > a(y, y); });
    out.eigenvalues.resize(n);
    out.eigenvectors.resize(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        out.eigenvalues[k] = a(order[k], order[k]);
        out.eigenvectors.col(k) = v.col(order[k]);
    }
    return out;
}

/// Eigenvalue of largest magnitude.
inline double largest_magnitude_eigenvalue(const DenseMatrix& m) {
    const auto eig = dense_symm_eig(m);
    double best = 0.0;
    for (Eigen::Index k = 0; k < eig.eigenvalues.size(); ++k)
        if (std::abs(eig.eigenvalues[k]) > std::abs(best)) best = eig.eigenvalues[k];
    return best;
}

inline double spectral_norm(const DenseMatrix& a) {
    const DenseMatrix gram = a * a.transpose();
    return std::sqrt(std::max(0.0, dense_symm_eig(gram).eigenvalues[0]));
}

/// B = A - D(A 1).
inline DenseMatrix row_sum_defect(const DenseMatrix& a) {
    if (a.rows() != a.cols()) throw ContractError("row_sum_defect needs a square matrix");
    DenseMatrix b = a;
    for (Eigen::Index i = 0; i < a.rows(); ++i) b(i, i) -= a.row(i).sum();
    return b;
}

inline double off_diagonal_mass(const DenseMatrix& a) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            if (i != j) s += a(i, j) * a(i, j);
    return s;
}

struct BoundSides {
    double lower;   // ||A - D(A1)||_F^2 / N
    double middle;  // sum_{i != j} A_ij^2
    double upper;   // ||A - D(A1)||_F^2
};

inline BoundSides offdiag_bound_sides(const DenseMatrix& a) {
    if (a.rows() != a.cols()) {
        throw ContractError("bound check needs a square matrix, got " + std::to_string(a.rows()) + " x " +
                            std::to_string(a.cols()));
    }
    const double b2 = row_sum_defect(a).squaredNorm();
    return BoundSides{b2 / static_cast<double>(a.rows()), off_diagonal_mass(a), b2};
}

/// Central differences of a scalar function, one coordinate at a time.
inline Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& point,
                               double step = 1e-4) {
    Tensor g(point.shape());
    Tensor probe = point;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + step;
        const double fp = f(probe);
        probe[i] = orig - step;
        const double fm = f(probe);
        probe[i] = orig;
        g[i] = (fp - fm) / (2.0 * step);
    }
    return g;
}

/// Batched operator from explicit matrices, one per row.
inline linops::BatchedLinearOperator dense_batched_operator(std::vector<DenseMatrix> mats, bool symmetric = true) {
    if (mats.empty()) throw ContractError("need at least one matrix");
    const auto d = static_cast<std::size_t>(mats.front().rows());
    const std::size_t b = mats.size();
    return linops::BatchedLinearOperator{d, b,
                                         [mats = std::move(mats)](const Tensor& v) {
                                             Tensor out = Tensor::zeros(v.rows(), v.cols());
                                             for (std::size_t r = 0; r < v.rows(); ++r) {
                                                 Eigen::Map<const DenseVector> x(v.row(r).data(), v.cols());
                                                 Eigen::Map<DenseVector> y(out.row(r).data(), v.cols());
                                                 y = mats[r] * x;
                                             }
                                             return out;
                                         },
                                         symmetric};
}

}  // namespace spectralreg::oracle
