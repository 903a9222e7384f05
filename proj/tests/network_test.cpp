#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "spectralreg/checkpoint.hpp"
#include "spectralreg/network.hpp"
#include "spectralreg/oracle.hpp"
#include "test_support.hpp"

namespace spectralreg {
namespace {

using testing::random_tensor;
using testing::rel_err;

// Straight-line evaluation written independently of Network::forward.
Tensor reference_forward(const Network& net, const Tensor& x) {
    Tensor out = Tensor::zeros(x.rows(), net.output_dim());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        std::vector<double> h(x.row(r).begin(), x.row(r).end());
        for (std::size_t l = 0; l < net.layers().size(); ++l) {
            const Layer& layer = net.layers()[l];
            std::vector<double> z(layer.weight.rows());
            for (std::size_t i = 0; i < z.size(); ++i) {
                double s = layer.bias(0, i);
                for (std::size_t j = 0; j < h.size(); ++j) s += layer.weight(i, j) * h[j];
                if (l + 1 < net.layers().size()) {
                    const double bz = net.beta() * s;
                    s = bz > 30 ? s : std::log(1.0 + std::exp(bz)) / net.beta();
                }
                z[i] = s;
            }
            h = std::move(z);
        }
        std::copy(h.begin(), h.end(), out.row(r).begin());
    }
    return out;
}

TEST(Network, LinearForward) {
    const Network net = Network::linear(Tensor::from_rows({{2.0}}));
    EXPECT_EQ(forward(net, Tensor::from_rows({{3.0}})), Tensor::from_rows({{6.0}}));
    EXPECT_DOUBLE_EQ(net(ad::constant(Tensor::from_rows({{3.0}}))).value()[0], 6.0);
}

TEST(Network, ForwardMatchesStraightLineEvaluation) {
    const Network net = Network::random({5, 7, 6, 3}, 42);
    const Tensor x = random_tensor(8, 5, 1);
    EXPECT_LT(rel_err(net.forward(x), reference_forward(net, x)), 1e-12);
    EXPECT_LT(rel_err(net(ad::constant(x)).value(), reference_forward(net, x)), 1e-12);
}

TEST(Network, ShapeErrors) {
    const Network net = Network::random({3, 4, 2}, 1);
    EXPECT_THROW(net.forward(Tensor::zeros(2, 4)), DimensionError);
    EXPECT_THROW(vjp(net, Tensor::zeros(2, 3), Tensor::zeros(2, 3)), DimensionError);
    EXPECT_THROW(jvp(net, Tensor::zeros(2, 3), Tensor::zeros(2, 2)), DimensionError);
    EXPECT_THROW(Network({Layer{Tensor::zeros(2, 3), Tensor::zeros(1, 3)}}), DimensionError);
    EXPECT_THROW(Network::random({3, 2}, 1, 0.0), ContractError);
}

TEST(Network, IdentityProducts) {
    const Network id = Network::identity(3);
    const Tensor x = random_tensor(2, 3, 2);
    const Tensor u = random_tensor(2, 3, 3);
    EXPECT_EQ(vjp(id, x, u), u);
    EXPECT_EQ(jvp(id, x, u), u);
}

TEST(Network, LinearLayerProducts) {
    const Tensor w = Tensor::from_rows({{1.0, 2.0, 3.0}, {-1.0, 0.5, 4.0}});
    const Network net = Network::linear(w);
    const Tensor x = random_tensor(1, 3, 4);
    const Tensor u = Tensor::from_rows({{2.0, -1.0}});
    const Tensor v = Tensor::from_rows({{1.0, 1.0, -2.0}});
    EXPECT_LT(rel_err(vjp(net, x, u), Tensor::from_rows({{3.0, 3.5, 2.0}})), 1e-15);
    EXPECT_LT(rel_err(jvp(net, x, v), Tensor::from_rows({{-3.0, -8.5}})), 1e-15);
}

TEST(Network, VjpJvpMatchDenseAndFiniteDifferenceJacobian) {
    const Network net = Network::random({5, 16, 16, 5}, 7);
    const Tensor x = random_tensor(3, 5, 5);
    const Tensor u = random_tensor(3, 5, 6);
    const Tensor v = random_tensor(3, 5, 7);
    const auto dense = oracle::dense_jacobian(net, x);
    const Tensor got_vjp = vjp(net, x, u);
    const Tensor got_jvp = jvp(net, x, v);
    for (std::size_t r = 0; r < 3; ++r) {
        const auto fd = testing::fd_jacobian([&](const Tensor& p) { return net.forward(p); }, testing::row_of(x, r));
        EXPECT_LT((dense[r] - fd).norm() / fd.norm(), 1e-8);
        const oracle::DenseVector want_vjp = dense[r].transpose() * testing::dense_row(u, r);
        const oracle::DenseVector want_jvp = dense[r] * testing::dense_row(v, r);
        EXPECT_LT((testing::dense_row(got_vjp, r) - want_vjp).norm() / want_vjp.norm(), 1e-8);
        EXPECT_LT((testing::dense_row(got_jvp, r) - want_jvp).norm() / want_jvp.norm(), 1e-8);
    }
}

TEST(Network, AdjointIdentityHolds) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Network net = Network::random({4, 9, 3}, seed);
        const Tensor x = random_tensor(5, 4, seed + 100);
        const Tensor u = random_tensor(5, 3, seed + 200);
        const Tensor v = random_tensor(5, 4, seed + 300);
        const double lhs = tensor_ops::dot(u, jvp(net, x, v));
        const double rhs = tensor_ops::dot(vjp(net, x, u), v);
        EXPECT_LT(testing::rel_diff(lhs, rhs), 1e-10) << "seed " << seed;
    }
}

TEST(Network, LinearizeReturnsPrimalAndTangent) {
    const Network net = Network::random({3, 5, 2}, 3);
    const Tensor x = random_tensor(2, 3, 1);
    const Tensor v = random_tensor(2, 3, 2);
    const DualValue dual = linearize(net, x, v);
    EXPECT_EQ(dual.primal.shape(), dual.tangent.shape());
    EXPECT_LT(rel_err(dual.primal, net.forward(x)), 1e-14);
    EXPECT_LT(rel_err(dual.tangent, jvp(net, x, v)), 1e-14);
}

TEST(Hvp, QuadraticForms) {
    const Tensor x = random_tensor(2, 4, 1);
    const Tensor v = random_tensor(2, 4, 2);
    EXPECT_LT(rel_err(hvp(testing::SumOfSquares{}, x, v), 2.0 * v), 1e-15);

    const Tensor big_x = random_tensor(1, 1024, 3);
    const Tensor big_v = random_tensor(1, 1024, 4);
    EXPECT_LT(rel_err(hvp(testing::SumOfSquares{}, big_x, big_v), 2.0 * big_v), 1e-15);
}

TEST(Hvp, MatchesFiniteDifferenceHessian) {
    const Network net = Network::random({6, 12, 12, 1}, 9);
    const Tensor x = random_tensor(2, 6, 8);
    const Tensor v = random_tensor(2, 6, 9);
    const Tensor got = hvp(net, x, v);
    auto gradient = [&](const Tensor& p) { return vjp(net, p, Tensor::ones(p.rows(), 1)); };
    for (std::size_t r = 0; r < 2; ++r) {
        const auto h = testing::fd_jacobian(gradient, testing::row_of(x, r), 1e-5);
        const oracle::DenseVector want = h * testing::dense_row(v, r);
        EXPECT_LT((testing::dense_row(got, r) - want).norm() / want.norm(), 1e-5);
    }
}

TEST(Hvp, IsSymmetric) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Network net = Network::random({5, 8, 8, 1}, seed);
        const Tensor x = random_tensor(3, 5, seed + 1);
        const Tensor v = random_tensor(3, 5, seed + 2);
        const Tensor w = random_tensor(3, 5, seed + 3);
        const double a = tensor_ops::dot(w, hvp(net, x, v));
        const double b = tensor_ops::dot(v, hvp(net, x, w));
        EXPECT_LT(testing::rel_diff(a, b), 1e-10);
    }
}

TEST(Hvp, RejectsVectorOutput) {
    const Network net = Network::random({3, 4, 2}, 1);
    EXPECT_THROW(hvp(net, Tensor::zeros(1, 3), Tensor::zeros(1, 3)), ContractError);
}

TEST(Network, BatchRowsAreIndependent) {
    const Network net = Network::random({4, 8, 3}, 5);
    const Tensor x = random_tensor(6, 4, 10);
    const Tensor u = random_tensor(6, 3, 11);
    std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
    Tensor xp = Tensor::zeros(6, 4);
    Tensor up = Tensor::zeros(6, 3);
    for (std::size_t i = 0; i < 6; ++i) {
        std::copy(x.row(perm[i]).begin(), x.row(perm[i]).end(), xp.row(i).begin());
        std::copy(u.row(perm[i]).begin(), u.row(perm[i]).end(), up.row(i).begin());
    }
    const Tensor y = net.forward(x);
    const Tensor yp = net.forward(xp);
    const Tensor g = vjp(net, x, u);
    const Tensor gp = vjp(net, xp, up);
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(yp(i, c), y(perm[i], c));
        for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(gp(i, c), g(perm[i], c), 1e-15);
    }
}

TEST(ParamGrad, QuadraticFormGradient) {
    // loss = ||W x||^2 -> dW = 2 (W x) x^T.
    const Tensor w = Tensor::from_rows({{1.0, -2.0}, {0.5, 3.0}, {2.0, 1.0}});
    const Network net = Network::linear(w);
    const Tensor x = Tensor::from_rows({{0.7, -1.3}});
    const auto grads = param_grad(net, [&](const BoundNetwork& f) {
        const ad::Var y = f(ad::constant(x));
        return ad::sum_all(ad::mul(y, y));
    });
    const Tensor wx = tensor_ops::matmul(x, w, false, true);
    const Tensor want = 2.0 * tensor_ops::matmul(wx, x, true, false);
    EXPECT_LT(rel_err(grads.gradients[0], want), 1e-15);
    EXPECT_LT(rel_err(grads.gradients[1], 2.0 * wx), 1e-15);
}

TEST(ParamGrad, ConstantLossHasZeroGradient) {
    const Network net = Network::random({2, 3, 1}, 1);
    const auto grads = param_grad(net, [](const BoundNetwork&) { return ad::constant(Tensor::scalar(5.0)); });
    EXPECT_DOUBLE_EQ(grads.loss, 5.0);
    for (const Tensor& g : grads.gradients) EXPECT_EQ(g.norm(), 0.0);
}

TEST(ParamGrad, NonFiniteLossIsNumericError) {
    const Network net = Network::random({2, 3, 1}, 1);
    try {
        param_grad(net, [](const BoundNetwork&) { return ad::constant(Tensor::scalar(NAN)); });
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_TRUE(std::isnan(e.value()));
    }
}

TEST(ParamGrad, VjpBasedLossMatchesFiniteDifferences) {
    const Network net = Network::random({4, 10, 4}, 12);
    const Tensor x = random_tensor(3, 4, 1);
    const Tensor u = random_tensor(3, 4, 2);
    const Tensor v = random_tensor(3, 4, 3);
    auto loss_of = [&](const auto& model) {
        JacobianTape tape(model, x);
        const ad::Var a = tape.vjp(ad::constant(u));
        const ad::Var b = tape.jvp(ad::constant(v));
        return ad::mean_all(ad::add(ad::row_norm(a), ad::row_sum(ad::mul(b, b))));
    };
    const auto grads = param_grad(net, [&](const BoundNetwork& f) { return loss_of(f); });
    const auto params = net.parameters();
    const Tensor fd = oracle::finite_diff_grad(
        [&](const Tensor& flat) {
            const Network moved = net.with_parameters(testing::unflatten(flat, params));
            return loss_of(moved).value()[0];
        },
        testing::flatten(params));
    EXPECT_LT(rel_err(testing::flatten(grads.gradients), fd), 1e-6);
}

TEST(GradientField, JacobianIsSymmetric) {
    const GradientField field(Network::random({5, 8, 1}, 3));
    const Tensor x = random_tensor(2, 5, 1);
    for (const auto& j : oracle::dense_jacobian(field, x)) EXPECT_LT((j - j.transpose()).norm(), 1e-12 * j.norm());
}

TEST(Checkpoint, RoundTripsBitExactly) {
    const Network net = Network::random({3, 5, 2}, 17, 6.5);
    const std::string bytes = encode_checkpoint(net);
    const Network back = decode_checkpoint(bytes);
    EXPECT_EQ(back.layer_dims(), net.layer_dims());
    EXPECT_EQ(back.beta(), net.beta());
    EXPECT_EQ(back.parameters(), net.parameters());
    EXPECT_EQ(encode_checkpoint(back), bytes);
}

TEST(Checkpoint, RejectsCorruptInput) {
    const std::string bytes = encode_checkpoint(Network::random({2, 2}, 1));
    std::string bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(decode_checkpoint(bad), ConfigError);
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), ConfigError);
    EXPECT_THROW(decode_checkpoint(bytes + "x"), ConfigError);
}

}  // namespace
}  // namespace spectralreg
