#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "spectralreg/oracle.hpp"
#include "test_support.hpp"

namespace spectralreg {
namespace {

using oracle::DenseMatrix;
using testing::random_tensor;

TEST(DenseJacobian, LinearAndIdentity) {
    const Tensor w = random_tensor(3, 5, 1);
    const auto j = oracle::dense_jacobian(Network::linear(w), random_tensor(2, 5, 2));
    ASSERT_EQ(j.size(), 2u);
    EXPECT_EQ(oracle::to_tensor(j[0]), w);
    EXPECT_EQ(oracle::to_tensor(j[1]), w);
    const auto id = oracle::dense_jacobian(Network::identity(4), random_tensor(1, 4, 3));
    EXPECT_EQ(id[0], DenseMatrix::Identity(4, 4));
}

TEST(DenseJacobian, RowAndColumnConstructionsAgree) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Network net = Network::random({6, 10, 10, 4}, seed);
        const Tensor x = random_tensor(3, 6, seed + 10);
        const auto cols = oracle::dense_jacobian(net, x);
        const auto rows = oracle::dense_jacobian_by_rows(net, x);
        for (std::size_t r = 0; r < 3; ++r) EXPECT_LT((cols[r] - rows[r]).norm(), 1e-12 * cols[r].norm());
    }
}

TEST(DenseHessian, ClosedForms) {
    const Tensor x = random_tensor(2, 4, 1);
    for (const auto& h : oracle::dense_hessian(testing::SumOfSquares{}, x))
        EXPECT_EQ(h, DenseMatrix(2.0 * DenseMatrix::Identity(4, 4)));
    const auto hs = oracle::dense_hessian(testing::SumOfSines{}, x);
    for (std::size_t r = 0; r < 2; ++r) {
        DenseMatrix want = DenseMatrix::Zero(4, 4);
        for (std::size_t i = 0; i < 4; ++i) want(i, i) = -std::sin(x(r, i));
        EXPECT_LT((hs[r] - want).norm(), 1e-15);
    }
}

TEST(DenseHessian, MatchesFiniteDifferences) {
    const Network net = Network::random({5, 12, 12, 1}, 4);
    const Tensor x = random_tensor(2, 5, 5);
    const auto hs = oracle::dense_hessian(net, x);
    auto gradient = [&](const Tensor& p) { return vjp(net, p, Tensor::ones(p.rows(), 1)); };
    for (std::size_t r = 0; r < 2; ++r) {
        const DenseMatrix fd = testing::fd_jacobian(gradient, testing::row_of(x, r), 1e-5);
        EXPECT_LT((hs[r] - fd).norm() / hs[r].norm(), 1e-5);
        EXPECT_LT((hs[r] - hs[r].transpose()).norm(), 1e-8);
    }
}

TEST(DenseSymmEig, Diagonal) {
    DenseMatrix m = DenseMatrix::Zero(3, 3);
    m(0, 0) = 1.0;
    m(1, 1) = 2.0;
    m(2, 2) = 3.0;
    const auto e = oracle::dense_symm_eig(m);
    EXPECT_EQ(e.eigenvalues[0], 3.0);
    EXPECT_EQ(e.eigenvalues[1], 2.0);
    EXPECT_EQ(e.eigenvalues[2], 1.0);
}

TEST(DenseSymmEig, ReconstructsRandomSymmetric) {
    const DenseMatrix a = testing::random_dense(32, 32, 7);
    const DenseMatrix m = a + a.transpose();
    const auto e = oracle::dense_symm_eig(m);
    const DenseMatrix& q = e.eigenvectors;
    EXPECT_LT((q * e.eigenvalues.asDiagonal() * q.transpose() - m).norm(), 1e-10);
    EXPECT_LT((q.transpose() * q - DenseMatrix::Identity(32, 32)).norm(), 1e-10);
    EXPECT_LT(e.off_diagonal, 1e-12 * std::max(1.0, m.norm()));
    for (Eigen::Index k = 1; k < 32; ++k) EXPECT_GE(e.eigenvalues[k - 1], e.eigenvalues[k]);
}

TEST(DenseSymmEig, GramIsPsd) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const DenseMatrix w = testing::random_dense(12, 5, seed);
        const auto e = oracle::dense_symm_eig(w * w.transpose());
        EXPECT_GE(e.eigenvalues.minCoeff(), -1e-12);
    }
}

TEST(DenseSymmEig, GramEigenvaluesAreSquaredSingularValues) {
    // At each eigenvector v of A A^T, ||v^T A||^2 equals the eigenvalue.
    const DenseMatrix a = testing::random_dense(7, 9, 11);
    const auto e = oracle::dense_symm_eig(a * a.transpose());
    for (Eigen::Index k = 0; k < 7; ++k) {
        const double s2 = (e.eigenvectors.col(k).transpose() * a).squaredNorm();
        EXPECT_NEAR(s2, e.eigenvalues[k], 1e-9 * std::max(1.0, e.eigenvalues[0]));
    }
    EXPECT_NEAR(oracle::spectral_norm(a), std::sqrt(e.eigenvalues[0]), 1e-12);
}

TEST(DenseSymmEig, RejectsAsymmetric) {
    DenseMatrix m = DenseMatrix::Identity(2, 2);
    m(0, 1) = 1.0;
    EXPECT_THROW(oracle::dense_symm_eig(m), ContractError);
    EXPECT_THROW(oracle::dense_symm_eig(DenseMatrix::Zero(2, 3)), ContractError);
}

TEST(BoundSides, DiagonalIsAllZero) {
    DenseMatrix a = DenseMatrix::Zero(3, 3);
    a(0, 0) = 2.0;
    a(1, 1) = -1.0;
    a(2, 2) = 5.0;
    const auto s = oracle::offdiag_bound_sides(a);
    EXPECT_EQ(s.lower, 0.0);
    EXPECT_EQ(s.middle, 0.0);
    EXPECT_EQ(s.upper, 0.0);
}

TEST(BoundSides, AllOnes) {
    const auto s = oracle::offdiag_bound_sides(DenseMatrix::Ones(2, 2));
    EXPECT_EQ(s.lower, 2.0);
    EXPECT_EQ(s.middle, 2.0);
    EXPECT_EQ(s.upper, 4.0);
    DenseMatrix b(2, 2);
    b << -1.0, 1.0, 1.0, -1.0;
    EXPECT_EQ(oracle::row_sum_defect(DenseMatrix::Ones(2, 2)), b);
}

TEST(BoundSides, RandomChainHolds) {
    Rng rng = make_stream(2024, 0);
    std::uniform_int_distribution<int> dim(2, 32);
    for (int trial = 0; trial < 2000; ++trial) {
        const auto n = static_cast<std::size_t>(dim(rng));
        const DenseMatrix a = oracle::to_dense(gaussian_tensor(n, n, rng));
        const auto s = oracle::offdiag_bound_sides(a);
        EXPECT_GE(s.middle - s.lower, -1e-9);
        EXPECT_GE(s.upper - s.middle, -1e-9);
    }
}

TEST(BoundSides, NonSquareIsContractError) {
    EXPECT_THROW(oracle::offdiag_bound_sides(DenseMatrix::Ones(2, 3)), ContractError);
}

TEST(FiniteDiff, ScalarExamples) {
    const Tensor g = oracle::finite_diff_grad([](const Tensor& p) { return p[0] * p[0]; }, Tensor::scalar(3.0));
    EXPECT_NEAR(g[0], 6.0, 1e-7);
    const Tensor x = random_tensor(1, 6, 1);
    const Tensor g2 = oracle::finite_diff_grad([](const Tensor& p) { return p.squared_norm(); }, x);
    EXPECT_LT(testing::rel_err(g2, 2.0 * x), 1e-9);
}

TEST(DenseBatchedOperator, AppliesEachMatrixToItsRow) {
    const std::vector<DenseMatrix> mats = {testing::random_dense(3, 3, 1), testing::random_dense(3, 3, 2)};
    const auto op = oracle::dense_batched_operator(mats, false);
    const Tensor v = random_tensor(2, 3, 3);
    const Tensor out = op.apply(v);
    for (std::size_t r = 0; r < 2; ++r) {
        const oracle::DenseVector want = mats[r] * testing::dense_row(v, r);
        EXPECT_LT((testing::dense_row(out, r) - want).norm(), 1e-14 * want.norm());
    }
}

}  // namespace
}  // namespace spectralreg
