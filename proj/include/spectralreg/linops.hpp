#pragma once

// Matrix-free operators built on recorded network linearizations.
//
// A RectangularOperatorPair exposes v -> A v and u -> u^T A for a batch of
// matrices A (one per input row). Gram-type BatchedLinearOperators realize
// (A - A0)(A - A0)^T without ever forming A.

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <utility>

#include "spectralreg/autodiff.hpp"
#include "spectralreg/errors.hpp"
#include "spectralreg/network.hpp"
#include "spectralreg/tensor.hpp"

namespace spectralreg::linops {

/// Batched map R^{b x d} -> R^{b x d}, linear in each row.
struct BatchedLinearOperator {
    std::size_t dim = 0;
    std::size_t batch = 0;
    std::function<Tensor(const Tensor&)> apply_fn;
    bool symmetric = false;

    Tensor apply(const Tensor& v) const {
        if (v.rank() != 2 || v.rows() != batch || v.cols() != dim) {
            throw DimensionError("operator expects [" + std::to_string(batch) + " x " + std::to_string(dim) +
                                 "], got " + shape_str(v.shape()));
        }
        Tensor out = apply_fn(v);
        if (out.shape() != v.shape()) throw DimensionError("operator returned " + shape_str(out.shape()));
        return out;
    }
    Tensor operator()(const Tensor& v) const { return apply(v); }
};

using VarMap = std::function<ad::Var(const ad::Var&)>;

/// A batch of (out_dim x in_dim) matrices known only through their products.
struct RectangularOperatorPair {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    std::size_t batch = 0;
    VarMap forward;  // v [b x in]  -> A v    [b x out]
    VarMap adjoint;  // u [b x out] -> u^T A  [b x in]

    ad::Var apply(const ad::Var& v) const {
        check(v, in_dim, "apply");
        return forward(v);
    }
    ad::Var apply_adjoint(const ad::Var& u) const {
        check(u, out_dim, "apply_adjoint");
        return adjoint(u);
    }
    Tensor apply(const Tensor& v) const { return apply(ad::constant(v)).value(); }
    Tensor apply_adjoint(const Tensor& u) const { return apply_adjoint(ad::constant(u)).value(); }

    bool square() const noexcept { return in_dim == out_dim; }

private:
    void check(const ad::Var& v, std::size_t width, const char* what) const {
        if (v.value().rank() != 2 || v.rows() != batch || v.cols() != width) {
            throw DimensionError(std::string(what) + " expects [" + std::to_string(batch) + " x " +
                                 std::to_string(width) + "], got " + shape_str(v.shape()));
        }
    }
};

// ---------------------------------------------------------------------------
// Rectangular operators.

/// J_f(x) through a shared recording of f at x.
template <Model M>
RectangularOperatorPair jacobian_operator(const M& model, const Tensor& x) {
    auto tape = std::make_shared<const JacobianTape>(model, x);
    return RectangularOperatorPair{tape->input_dim(), tape->output_dim(), tape->batch(),
                                   [tape](const ad::Var& v) { return tape->jvp(v); },
                                   [tape](const ad::Var& u) { return tape->vjp(u); }};
}

/// H_f(x) of a scalar model; symmetric, so both products are the HVP.
template <Model M>
RectangularOperatorPair hessian_operator(const M& model, const Tensor& x) {
    auto tape = std::make_shared<const HessianTape>(model, x);
    auto product = [tape](const ad::Var& v) { return tape->hvp(v); };
    return RectangularOperatorPair{tape->dim(), tape->dim(), tape->batch(), product, product};
}

inline RectangularOperatorPair transpose(const RectangularOperatorPair& a) {
    return RectangularOperatorPair{a.out_dim, a.in_dim, a.batch, a.adjoint, a.forward};
}

/// The same constant matrix for every batch row.
inline RectangularOperatorPair dense_operator(const Tensor& matrix, std::size_t batch) {
    auto m = ad::constant(matrix);
    return RectangularOperatorPair{matrix.cols(), matrix.rows(), batch,
                                   [m](const ad::Var& v) { return ad::matmul(v, m, false, true); },
                                   [m](const ad::Var& u) { return ad::matmul(u, m); }};
}

inline RectangularOperatorPair zero_operator(std::size_t in_dim, std::size_t out_dim, std::size_t batch) {
    return RectangularOperatorPair{
        in_dim, out_dim, batch,
        [batch, out_dim](const ad::Var&) { return ad::constant(Tensor::zeros(batch, out_dim)); },
        [batch, in_dim](const ad::Var&) { return ad::constant(Tensor::zeros(batch, in_dim)); }};
}

/// D(A 1): the diagonal matrix holding A's row sums. The row sums are computed
/// once here; every later product is elementwise since
/// v^T D(a) = D(a) v = a (.) v.
inline RectangularOperatorPair row_sum_diagonal(const RectangularOperatorPair& a) {
    if (!a.square()) {
        throw ContractError("D(A1) needs a square matrix, got " + std::to_string(a.out_dim) + " x " +
                            std::to_string(a.in_dim));
    }
    const ad::Var row_sums = a.apply(ad::constant(Tensor::ones(a.batch, a.in_dim)));
    auto product = [row_sums](const ad::Var& v) { return ad::mul(row_sums, v); };
    return RectangularOperatorPair{a.in_dim, a.out_dim, a.batch, product, product};
}

inline void require_conformal(const RectangularOperatorPair& a, const RectangularOperatorPair& target) {
    if (a.in_dim != target.in_dim || a.out_dim != target.out_dim || a.batch != target.batch) {
        throw DimensionError("target operator is " + std::to_string(target.out_dim) + " x " +
                             std::to_string(target.in_dim) + " (batch " + std::to_string(target.batch) +
                             "), expected " + std::to_string(a.out_dim) + " x " + std::to_string(a.in_dim) +
                             " (batch " + std::to_string(a.batch) + ")");
    }
}

/// A - A0 as a pair of products.
inline RectangularOperatorPair difference(const RectangularOperatorPair& a, const RectangularOperatorPair& target) {
    require_conformal(a, target);
    return RectangularOperatorPair{a.in_dim, a.out_dim, a.batch,
                                   [a, target](const ad::Var& v) { return ad::sub(a.apply(v), target.apply(v)); },
                                   [a, target](const ad::Var& u) {
                                       return ad::sub(a.apply_adjoint(u), target.apply_adjoint(u));
                                   }};
}

// ---------------------------------------------------------------------------
// Gram-type symmetric operators.

/// v -> A A^T v.
inline BatchedLinearOperator gram(const RectangularOperatorPair& a) {
    return BatchedLinearOperator{a.out_dim, a.batch,
                                 [a](const Tensor& v) {
                                     const ad::Var at_v = a.apply_adjoint(ad::constant(v));
                                     return a.apply(at_v).value();
                                 },
                                 true};
}

template <Model M>
BatchedLinearOperator jacobian_gram(const M& model, const Tensor& x) {
    return gram(jacobian_operator(model, x));
}

template <Model M>
BatchedLinearOperator hessian_gram(const M& model, const Tensor& x) {
    return gram(hessian_operator(model, x));
}

/// v -> (A - A0)(A - A0)^T v = A A^T v - A A0^T v - A0 A^T v + A0 A0^T v.
inline BatchedLinearOperator target_difference_gram(const RectangularOperatorPair& a,
                                                    const RectangularOperatorPair& target) {
    require_conformal(a, target);
    return BatchedLinearOperator{a.out_dim, a.batch,
                                 [a, target](const Tensor& v) {
                                     const ad::Var vv = ad::constant(v);
                                     const ad::Var at_v = a.apply_adjoint(vv);
                                     const ad::Var a0t_v = target.apply_adjoint(vv);
                                     Tensor out = a.apply(at_v).value();
                                     out -= a.apply(a0t_v).value();
                                     out -= target.apply(at_v).value();
                                     out += target.apply(a0t_v).value();
                                     return out;
                                 },
                                 true};
}

/// (J - J^T)(J - J^T)^T v = J J^T v - J J v - J^T J^T v + J^T J v
/// with J J v = jvp(jvp(v)) and J^T J^T v = vjp(vjp(v)).
inline BatchedLinearOperator symmetry_defect_gram(const RectangularOperatorPair& j) {
    if (!j.square()) {
        throw ContractError("symmetry regularization needs a square Jacobian, got " + std::to_string(j.out_dim) +
                            " x " + std::to_string(j.in_dim));
    }
    return BatchedLinearOperator{j.out_dim, j.batch,
                                 [j](const Tensor& v) {
                                     const ad::Var vv = ad::constant(v);
                                     const ad::Var jt_v = j.apply_adjoint(vv);
                                     const ad::Var j_v = j.apply(vv);
                                     Tensor out = j.apply(jt_v).value();
                                     out -= j.apply(j_v).value();
                                     out -= j.apply_adjoint(jt_v).value();
                                     out += j.apply_adjoint(j_v).value();
                                     return out;
                                 },
                                 true};
}

template <Model M>
BatchedLinearOperator symmetry_defect_gram(const M& model, const Tensor& x) {
    return symmetry_defect_gram(jacobian_operator(model, x));
}

/// (A - D(A1))(A - D(A1))^T v for square A (a Jacobian or a Hessian).
inline BatchedLinearOperator diagonality_defect_gram(const RectangularOperatorPair& a) {
    return target_difference_gram(a, row_sum_diagonal(a));
}

}  // namespace spectralreg::linops
