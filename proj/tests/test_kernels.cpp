#include "support.hpp"

#include <gtest/gtest.h>

using namespace nsgp;
using namespace nsgp::testing;

namespace {

CorrelationSpec spec(std::initializer_list<double> delta, std::initializer_list<double> phi) {
    CorrelationSpec s;
    s.lengthscales = Eigen::Map<const Vector>(delta.begin(), static_cast<Eigen::Index>(delta.size()));
    s.exponents = Eigen::Map<const Vector>(phi.begin(), static_cast<Eigen::Index>(phi.size()));
    return s;
}

Vector vec(std::initializer_list<double> v) { return Eigen::Map<const Vector>(v.begin(), static_cast<Eigen::Index>(v.size())); }

}  // namespace

TEST(PowerExpCorr, ZeroDistanceIsOne) {
    std::mt19937_64 rng(1);
    for (int p = 1; p <= 5; ++p) {
        Vector x = uniform_points(1, p, rng).row(0).transpose();
        EXPECT_EQ(power_exp_corr(x, x, CorrelationSpec::squared_exponential(Vector::Constant(p, 0.3))), 1.0);
    }
}

TEST(PowerExpCorr, UnitDistanceOneDimension) {
    EXPECT_NEAR(power_exp_corr(vec({0.0}), vec({1.0}), spec({1.0}, {2.0})), 0.367879441171442, 1e-12);
}

TEST(PowerExpCorr, MixedExponents) {
    EXPECT_NEAR(power_exp_corr(vec({0.0, 0.3}), vec({2.0, 0.3}), spec({2.0, 1.0}, {1.0, 2.0})), 0.367879441171442, 1e-12);
}

TEST(PowerExpCorr, Errors) {
    EXPECT_THROW(power_exp_corr(vec({0.0, 1.0}), vec({0.0}), spec({1.0}, {2.0})), ArgumentError);
    EXPECT_THROW(power_exp_corr(vec({0.0}), vec({1.0}), spec({0.0}, {2.0})), DomainError);
    EXPECT_THROW(power_exp_corr(vec({0.0}), vec({1.0}), spec({-1.0}, {2.0})), DomainError);
    EXPECT_THROW(power_exp_corr(vec({0.0}), vec({1.0}), spec({1.0}, {2.5})), DomainError);
}

TEST(StationaryCov, DiagonalValue) {
    StationaryKernelSpec k{spec({0.7, 0.4}, {2.0, 2.0}), 1.0, 1e-4};
    EXPECT_NEAR(stationary_cov(vec({0.1, 0.2}), vec({0.1, 0.2}), k), 1.0001, 1e-15);
}

TEST(StationaryCov, LinearInVariance) {
    // |dx| chosen so that the correlation is exactly 0.5
    const double d = std::sqrt(std::log(2.0));
    StationaryKernelSpec k{spec({1.0}, {2.0}), 2.0, 1e-4};
    EXPECT_NEAR(stationary_cov(vec({0.0}), vec({d}), k), 1.0, 1e-14);
}

TEST(StationaryCov, DistanceTwo) {
    StationaryKernelSpec k{spec({1.0}, {2.0}), 1.0, 0.0};
    EXPECT_NEAR(stationary_cov(vec({-1.0}), vec({1.0}), k), 0.018315638888734, 1e-13);
}

TEST(StationaryCov, NuggetOnlyOnExactCoincidence) {
    StationaryKernelSpec k{spec({1.0}, {2.0}), 1.0, 0.5};
    const double x = 0.25;
    EXPECT_DOUBLE_EQ(stationary_cov(vec({x}), vec({x}), k), 1.5);
    EXPECT_LT(stationary_cov(vec({x}), vec({std::nextafter(x, 1.0)}), k), 1.0 + 1e-12);
}

TEST(KernelMatrix, SymmetricWithDiagonal) {
    std::mt19937_64 rng(2);
    const Matrix X = uniform_points(3, 2, rng);
    StationaryKernelSpec k = se_kernel(vec({0.5, 1.5}), 1.7, 1e-4);
    const Matrix K = stationary_kernel_matrix(X, X, k);
    EXPECT_EQ((K - K.transpose()).cwiseAbs().maxCoeff(), 0.0);
    for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(K(i, i), 1.7 + 1e-4);
}

TEST(KernelMatrix, ScalarCase) {
    StationaryKernelSpec k = se_kernel(vec({0.5}), 1.3, 1e-4);
    Matrix a(1, 1), b(1, 1);
    a << 0.1;
    b << 0.4;
    const Matrix K = stationary_kernel_matrix(a, b, k);
    ASSERT_EQ(K.rows(), 1);
    ASSERT_EQ(K.cols(), 1);
    EXPECT_DOUBLE_EQ(K(0, 0), stationary_cov(a.row(0), b.row(0), k));
}

TEST(KernelMatrix, MatchesDoubleLoop) {
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 20; ++rep) {
        const Matrix X = uniform_points(3, 3, rng);
        const Matrix Y = uniform_points(4, 3, rng);
        StationaryKernelSpec k{spec({0.4, 0.9, 1.3}, {2.0, 1.5, 1.0}), 0.8, 1e-4};
        const Matrix K = stationary_kernel_matrix(X, Y, k);
        const Matrix G = kernel_matrix(X, Y, [&](const auto& a, const auto& b) { return stationary_cov(a, b, k); });
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 4; ++j) {
                double s = 0.0;
                for (int d = 0; d < 3; ++d)
                    s += std::pow(std::abs(X(i, d) - Y(j, d)) / k.corr.lengthscales(d), k.corr.exponents(d));
                const double oracle = 0.8 * std::exp(-s);
                EXPECT_NEAR(K(i, j), oracle, 1e-14);
                EXPECT_NEAR(G(i, j), oracle, 1e-14);
            }
    }
}

TEST(KernelMatrix, DimensionMismatch) {
    StationaryKernelSpec k = se_kernel(vec({0.5, 0.5}), 1.0, 0.0);
    EXPECT_THROW(stationary_kernel_matrix(Matrix::Zero(2, 2), Matrix::Zero(2, 3), k), ArgumentError);
    EXPECT_THROW(kernel_matrix(Matrix::Zero(2, 2), Matrix::Zero(2, 3), [](const auto&, const auto&) { return 0.0; }),
                 ArgumentError);
}

TEST(SafeCholesky, Identity) {
    const CholeskyFactor c = safe_cholesky(Matrix::Identity(4, 4));
    EXPECT_EQ(c.jitter, 0.0);
    EXPECT_EQ((c.lower - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(SafeCholesky, HandFactor) {
    Matrix M(2, 2);
    M << 4, 2, 2, 3;
    const CholeskyFactor c = safe_cholesky(M);
    EXPECT_EQ(c.jitter, 0.0);
    EXPECT_NEAR(c.lower(0, 0), 2.0, 1e-15);
    EXPECT_NEAR(c.lower(1, 0), 1.0, 1e-15);
    EXPECT_NEAR(c.lower(0, 1), 0.0, 0.0);
    EXPECT_NEAR(c.lower(1, 1), std::sqrt(2.0), 1e-15);
}

TEST(SafeCholesky, SingularNeedsJitter) {
    const CholeskyFactor c = safe_cholesky(Matrix::Ones(2, 2));
    EXPECT_GT(c.jitter, 0.0);
    Matrix M = Matrix::Ones(2, 2);
    M.diagonal().array() += c.jitter;
    EXPECT_LT((c.lower * c.lower.transpose() - M).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(SafeCholesky, IndefiniteFails) {
    Matrix M(2, 2);
    M << 1, 0, 0, -1;
    try {
        safe_cholesky(M);
        FAIL() << "expected a factorization error";
    } catch (const FactorizationError& e) {
        EXPECT_LT(e.min_pivot(), 0.0);
    }
}

TEST(KernelProperties, PositiveSemidefinite) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> np(1, 50), pp(1, 5);
    for (int rep = 0; rep < 200; ++rep) {
        const int n = np(rng), p = pp(rng);
        CorrelationSpec c;
        c.lengthscales = (0.05 + 3.0 * Vector::NullaryExpr(p, [&] { return u(rng); }).array()).matrix();
        c.exponents = (0.1 + 1.9 * Vector::NullaryExpr(p, [&] { return u(rng); }).array()).matrix();
        StationaryKernelSpec k{c, 0.1 + 3.0 * u(rng), rep % 2 ? 0.0 : 1e-4};
        const Matrix X = uniform_points(n, p, rng);
        const Matrix K = stationary_kernel_matrix(X, X, k);
        Eigen::SelfAdjointEigenSolver<Matrix> es(K, Eigen::EigenvaluesOnly);
        EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10) << "case " << rep;
    }
}

TEST(KernelProperties, ExactSymmetry) {
    std::mt19937_64 rng(12);
    for (int rep = 0; rep < 100; ++rep) {
        const Matrix P = uniform_points(2, 3, rng);
        CorrelationSpec c = spec({0.3, 0.7, 1.1}, {1.3, 2.0, 0.7});
        EXPECT_EQ(power_exp_corr(P.row(0), P.row(1), c), power_exp_corr(P.row(1), P.row(0), c));
    }
}

TEST(KernelProperties, MonotoneInDistance) {
    for (double phi : {0.5, 1.0, 1.5, 2.0}) {
        CorrelationSpec c = spec({0.6}, {phi});
        double prev = 1.0;
        for (int i = 1; i <= 400; ++i) {
            const double r = power_exp_corr(vec({0.0}), vec({i * 0.01}), c);
            EXPECT_LE(r, prev);
            prev = r;
        }
    }
}

TEST(KernelProperties, CholeskyReconstruction) {
    std::mt19937_64 rng(13);
    for (int rep = 0; rep < 50; ++rep) {
        const Matrix X = uniform_points(20, 2, rng);
        const Matrix M = stationary_kernel_matrix(X, X, se_kernel(vec({0.8, 0.8}), 1.0, rep % 3 ? 0.0 : 1e-4));
        const CholeskyFactor c = safe_cholesky(M);
        Matrix Mj = M;
        Mj.diagonal().array() += c.jitter;
        EXPECT_LT((c.lower * c.lower.transpose() - Mj).cwiseAbs().maxCoeff(), 1e-10 * M.cwiseAbs().maxCoeff());
    }
}
