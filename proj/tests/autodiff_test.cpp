#include <cmath>
#include <functional>

#include <gtest/gtest.h>

#include "spectralreg/autodiff.hpp"
#include "spectralreg/oracle.hpp"
#include "test_support.hpp"

namespace spectralreg {
namespace {

using testing::random_tensor;
using testing::rel_err;

// Reverse-mode gradient of a scalar-valued recorded function against central differences.
void expect_gradient_matches(const std::function<ad::Var(const ad::Var&)>& fn, const Tensor& x, double tol = 1e-7) {
    const ad::Var xv = ad::constant(x);
    const ad::Var y = fn(xv);
    ASSERT_EQ(y.value().size(), 1u);
    const Tensor g = ad::grad(y, ad::constant(Tensor::scalar(1.0)), xv).value();
    const Tensor fd = oracle::finite_diff_grad(
        [&](const Tensor& p) { return fn(ad::constant(p)).value()[0]; }, x, 1e-5);
    EXPECT_LT(rel_err(g, fd), tol);
}

TEST(Autodiff, SoftplusAtZero) {
    const ad::Var y = ad::softplus(ad::constant(Tensor::scalar(0.0)), 8.0);
    EXPECT_NEAR(y.value()[0], std::log(2.0) / 8.0, 1e-15);
    EXPECT_NEAR(y.value()[0], 0.0866434, 1e-7);
}

TEST(Autodiff, SoftplusStableAtLargeMagnitude) {
    const ad::Var y = ad::softplus(ad::constant(Tensor::row_vector({1000.0, -1000.0, 50.0})), 8.0);
    EXPECT_DOUBLE_EQ(y.value()[0], 1000.0);
    EXPECT_GE(y.value()[1], 0.0);
    EXPECT_LT(y.value()[1], 1e-300);
    EXPECT_TRUE(y.value().all_finite());
}

TEST(Autodiff, ElementwiseGradients) {
    const Tensor x = random_tensor(3, 4, 1);
    expect_gradient_matches([](const ad::Var& v) { return ad::sum_all(ad::softplus(v, 8.0)); }, x);
    expect_gradient_matches([](const ad::Var& v) { return ad::sum_all(ad::sigmoid(v, 2.0)); }, x);
    expect_gradient_matches([](const ad::Var& v) { return ad::sum_all(ad::mul(ad::sin(v), ad::cos(v))); }, x);
    expect_gradient_matches([](const ad::Var& v) { return ad::sum_all(ad::exp(ad::scale(v, 0.3))); }, x);
    expect_gradient_matches(
        [](const ad::Var& v) { return ad::sum_all(ad::log(ad::affine(ad::mul(v, v), 1.0, 1.0))); }, x);
    expect_gradient_matches(
        [](const ad::Var& v) { return ad::sum_all(ad::reciprocal(ad::affine(ad::mul(v, v), 1.0, 0.5))); }, x);
}

TEST(Autodiff, ReductionAndBroadcastGradients) {
    const Tensor x = random_tensor(3, 5, 2);
    const Tensor w = random_tensor(1, 5, 3);
    expect_gradient_matches(
        [&](const ad::Var& v) {
            return ad::sum_all(ad::mul(ad::row_norm(v), ad::row_sum(ad::add_bias(v, ad::constant(w)))));
        },
        x);
    expect_gradient_matches([](const ad::Var& v) { return ad::sum_all(ad::logsumexp_rows(v)); }, x);
    expect_gradient_matches(
        [](const ad::Var& v) {
            const ad::Var s = ad::sum_rows(ad::mul(v, v));
            return ad::sum_all(ad::mul(ad::broadcast_rows(s, 2), ad::broadcast_rows(s, 2)));
        },
        x);
    expect_gradient_matches(
        [](const ad::Var& v) {
            const ad::Var c = ad::row_sum(v);
            return ad::mean_all(ad::mul(ad::broadcast_cols(c, 4), ad::broadcast_cols(c, 4)));
        },
        x);
}

TEST(Autodiff, ReshapeGradient) {
    const Tensor w = random_tensor(2, 6, 3);
    expect_gradient_matches(
        [&](const ad::Var& v) {
            const ad::Var r = ad::reshape(v, {2, 6});
            return ad::sum_all(ad::mul(ad::sin(r), ad::constant(w)));
        },
        random_tensor(4, 3, 2));
    EXPECT_THROW(ad::reshape(ad::constant(Tensor::zeros(2, 3)), {4, 2}), DimensionError);
}

TEST(Autodiff, MatmulTransposeVariants) {
    // op(a) is 3x4 and op(b) is 4x5 for every flag combination.
    for (bool ta : {false, true}) {
        for (bool tb : {false, true}) {
            const Tensor a = ta ? random_tensor(4, 3, 4) : random_tensor(3, 4, 4);
            const Tensor b = tb ? random_tensor(5, 4, 5) : random_tensor(4, 5, 5);
            expect_gradient_matches(
                [&](const ad::Var& v) {
                    const ad::Var p = ad::matmul(v, ad::constant(b), ta, tb);
                    return ad::sum_all(ad::mul(p, p));
                },
                a);
            expect_gradient_matches(
                [&](const ad::Var& v) { return ad::sum_all(ad::sin(ad::matmul(ad::constant(a), v, ta, tb))); }, b);
        }
    }
}

TEST(Autodiff, ForwardModeMatchesReverseMode) {
    // For y = F(x): u . (J v) == (u^T J) . v.
    const Tensor x = random_tensor(4, 3, 7);
    const Tensor w = random_tensor(5, 3, 8);
    const ad::Var xv = ad::constant(x);
    const ad::Var y = ad::logsumexp_rows(ad::softplus(ad::matmul(xv, ad::constant(w), false, true), 4.0));
    const Tensor v = random_tensor(4, 3, 9);
    const Tensor u = random_tensor(4, 1, 10);
    const Tensor jv = ad::jvp(y, xv, ad::constant(v)).value();
    const Tensor ujt = ad::grad(y, ad::constant(u), xv).value();
    EXPECT_LT(testing::rel_diff(tensor_ops::dot(u, jv), tensor_ops::dot(ujt, v)), 1e-12);
}

TEST(Autodiff, SecondDerivativesAreRecorded) {
    // d/dx sin(x) = cos(x), d2/dx2 = -sin(x).
    const Tensor x = Tensor::row_vector({0.3, -1.2, 2.0});
    const ad::Var xv = ad::constant(x);
    const ad::Var y = ad::sin(xv);
    const ad::Var dy = ad::grad(y, ad::constant(Tensor::ones(1, 3)), xv);
    const ad::Var d2y = ad::grad(dy, ad::constant(Tensor::ones(1, 3)), xv);
    const ad::Var d2y_fwd = ad::jvp(dy, xv, ad::constant(Tensor::ones(1, 3)));
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_NEAR(dy.value()[i], std::cos(x[i]), 1e-15);
        EXPECT_NEAR(d2y.value()[i], -std::sin(x[i]), 1e-15);
        EXPECT_NEAR(d2y_fwd.value()[i], -std::sin(x[i]), 1e-15);
    }
}

TEST(Autodiff, ThirdOrderThroughSoftplus) {
    // Gradient of an HVP-based quantity must match finite differences of it.
    const Tensor w = random_tensor(4, 3, 11);
    const Tensor x = random_tensor(2, 3, 12);
    const Tensor v = random_tensor(2, 3, 13);
    auto build = [&](const ad::Var& wv) {
        const ad::Var xv = ad::constant(x);
        const ad::Var y = ad::row_sum(ad::softplus(ad::matmul(xv, wv, false, true), 8.0));
        const ad::Var g = ad::grad(y, ad::constant(Tensor::ones(2, 1)), xv);
        const ad::Var hv = ad::jvp(g, xv, ad::constant(v));
        return ad::sum_all(ad::row_norm(hv));
    };
    expect_gradient_matches(build, w, 1e-6);
}

TEST(Autodiff, RowNormGradientAtZeroIsZero) {
    const ad::Var x = ad::constant(Tensor::zeros(2, 3));
    const ad::Var y = ad::sum_all(ad::row_norm(x));
    const Tensor g = ad::grad(y, ad::constant(Tensor::scalar(1.0)), x).value();
    EXPECT_TRUE(g.all_finite());
    EXPECT_EQ(g.norm(), 0.0);
}

TEST(Autodiff, UnrelatedTargetsGetZeroGradient) {
    const ad::Var a = ad::constant(Tensor::ones(2, 2));
    const ad::Var b = ad::constant(Tensor::ones(2, 2));
    const ad::Var y = ad::sum_all(ad::mul(a, a));
    const Tensor gb = ad::grad(y, ad::constant(Tensor::scalar(1.0)), b).value();
    EXPECT_EQ(gb, Tensor::zeros(2, 2));
    const Tensor tb = ad::jvp(y, b, ad::constant(Tensor::ones(2, 2))).value();
    EXPECT_EQ(tb, Tensor::zeros(1, 1));
}

TEST(Autodiff, DetachBlocksGradient) {
    const ad::Var x = ad::constant(Tensor::row_vector({2.0}));
    const ad::Var y = ad::mul(x, ad::detach(x));
    EXPECT_DOUBLE_EQ(ad::grad(y, ad::constant(Tensor::scalar(1.0)), x).value()[0], 2.0);
}

TEST(Autodiff, ShapeMismatchIsDimensionError) {
    const ad::Var a = ad::constant(Tensor::ones(2, 2));
    const ad::Var b = ad::constant(Tensor::ones(2, 3));
    EXPECT_THROW(ad::add(a, b), DimensionError);
    EXPECT_THROW(ad::matmul(b, b), DimensionError);
    EXPECT_THROW(ad::grad(a, ad::constant(Tensor::ones(3, 3)), a), DimensionError);
}

}  // namespace
}  // namespace spectralreg
