#include "support.hpp"

#include <gtest/gtest.h>

using namespace nsgp;
using namespace nsgp::testing;

namespace {

Vector vec(std::initializer_list<double> v) { return Eigen::Map<const Vector>(v.begin(), static_cast<Eigen::Index>(v.size())); }

std::shared_ptr<const MixingFunction> softmax_function(const Matrix& A) {
    return std::make_shared<const MixingFunction>(FeatureMap{A.cols(), false}, std::vector<Matrix>{A});
}

RegionKernelSet random_regions(Eigen::Index L, Eigen::Index p, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    RegionKernelSet k;
    for (Eigen::Index l = 0; l < L; ++l) {
        CorrelationSpec c;
        c.lengthscales = (0.1 + 2.0 * Vector::NullaryExpr(p, [&] { return u(rng); }).array()).matrix();
        c.exponents = (0.5 + 1.5 * Vector::NullaryExpr(p, [&] { return u(rng); }).array()).matrix();
        k.regions.push_back({c, 0.2 + 2.0 * u(rng), 1e-4});
    }
    return k;
}

Matrix dense_mixture_matrix(const Matrix& X, const Matrix& Y, const MixingFunction& lam, const RegionKernelSet& k) {
    Matrix K(X.rows(), Y.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = 0; j < Y.rows(); ++j) K(i, j) = mixture_cov(X.row(i), Y.row(j), lam, k);
    return K;
}

}  // namespace

TEST(RegionIndicator, Examples) {
    EXPECT_EQ(region_indicator(vec({0.7, 0.3})), vec({1.0, 0.0}));
    EXPECT_EQ(region_indicator(vec({0.5, 0.5})), vec({1.0, 0.0}));
    EXPECT_EQ(region_indicator(vec({0.2, 0.3, 0.5})), vec({0.0, 0.0, 1.0}));
}

TEST(RegionIndicator, RejectsNonSimplex) {
    EXPECT_THROW(region_indicator(vec({0.7, 0.7})), DomainError);
    EXPECT_THROW(region_indicator(vec({1.2, -0.2})), DomainError);
    EXPECT_THROW(region_indicator(Vector()), ArgumentError);
}

TEST(MixtureCov, SingleRegionDegenerate) {
    RegionKernelSet k;
    k.regions.push_back(se_kernel(vec({0.5}), 2.0, 1e-4));
    k.regions.push_back(se_kernel(vec({0.9}), 1.0, 1e-4));
    EXPECT_NEAR(mixture_cov(vec({0.3}), vec({0.3}), vec({1.0, 0.0}), vec({1.0, 0.0}), k), 2.0001, 1e-15);
}

TEST(MixtureCov, EqualWeightsUnitCorrelation) {
    RegionKernelSet k;
    // lengthscales so large that the correlation rounds to exactly one
    k.regions.push_back(se_kernel(vec({1e300}), 1.0, 1e-4));
    k.regions.push_back(se_kernel(vec({1e300}), 1.0, 1e-4));
    EXPECT_NEAR(mixture_cov(vec({0.1}), vec({0.4}), vec({0.5, 0.5}), vec({0.5, 0.5}), k), 0.5, 1e-15);
}

TEST(MixtureCov, DisjointWeightsDecorrelate) {
    std::mt19937_64 rng(1);
    for (int rep = 0; rep < 10; ++rep) {
        const RegionKernelSet k = random_regions(2, 2, rng);
        const Matrix P = uniform_points(2, 2, rng);
        EXPECT_EQ(mixture_cov(P.row(0), P.row(1), vec({1.0, 0.0}), vec({0.0, 1.0}), k), 0.0);
    }
}

TEST(MixtureCov, NuggetUsesDominantRegion) {
    RegionKernelSet k;
    k.regions.push_back(se_kernel(vec({0.5}), 1.0, 0.1));
    k.regions.push_back(se_kernel(vec({0.5}), 1.0, 0.3));
    const double base = 0.2 * 0.2 + 0.8 * 0.8;
    EXPECT_NEAR(mixture_cov(vec({0.0}), vec({0.0}), vec({0.2, 0.8}), vec({0.2, 0.8}), k), base + 0.3, 1e-15);
}

TEST(MixtureCov, Errors) {
    RegionKernelSet k;
    k.regions.push_back(se_kernel(vec({0.5, 0.5}), 1.0, 1e-4));
    k.regions.push_back(se_kernel(vec({0.5, 0.5}), 1.0, 1e-4));
    EXPECT_THROW(mixture_cov(vec({0.0}), vec({0.0}), vec({0.5, 0.5}), vec({0.5, 0.5}), k), ArgumentError);
    EXPECT_THROW(mixture_cov(vec({0.0, 0.0}), vec({0.0, 0.0}), vec({1.0}), vec({1.0}), k), ArgumentError);
}

TEST(MixtureKernelMatrix, MatchesPairwise) {
    std::mt19937_64 rng(2);
    const auto lam = softmax_function(normal_vector(6, rng, 2.0).reshaped(3, 2));
    const RegionKernelSet k = random_regions(3, 2, rng);
    Matrix X = uniform_points(8, 2, rng);
    X.row(7) = X.row(2);
    const MixtureKernelModel m{lam};
    const Matrix K = m.cov(k, m.prepare(X), m.prepare(X));
    EXPECT_LT((K - dense_mixture_matrix(X, X, *lam, k)).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT((m.prior_var(k, m.prepare(X)) - K.diagonal()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(MixtureKernelProperties, PositiveSemidefinite) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> nd(1, 50), ld(2, 4), pd(1, 4);
    for (int rep = 0; rep < 200; ++rep) {
        const int n = nd(rng), L = ld(rng), p = pd(rng);
        const auto lam = softmax_function(normal_vector(L * p, rng, 3.0).reshaped(L, p));
        const RegionKernelSet k = random_regions(L, p, rng);
        const Matrix X = uniform_points(n, p, rng);
        const MixtureKernelModel m{lam};
        const auto w = m.prepare(X);
        Eigen::SelfAdjointEigenSolver<Matrix> es(m.cov(k, w, w), Eigen::EigenvaluesOnly);
        EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10) << "case " << rep;
    }
}

TEST(MixtureKernelProperties, ContinuousOffDiagonal) {
    std::mt19937_64 rng(4);
    const double h = 1e-5;
    double worst = 0.0;
    for (int rep = 0; rep < 200; ++rep) {
        const auto lam = softmax_function(normal_vector(4, rng, 3.0).reshaped(2, 2));
        const RegionKernelSet k = random_regions(2, 2, rng);
        const Matrix P = uniform_points(2, 2, rng);
        Vector x = P.row(0).transpose(), xh = x;
        xh(rep % 2) += h;
        const double jump = std::abs(mixture_cov(x, P.row(1), *lam, k) - mixture_cov(xh, P.row(1), *lam, k));
        worst = std::max(worst, jump / h);
        EXPECT_LT(jump, 1e-3);
    }
    EXPECT_TRUE(std::isfinite(worst));
    EXPECT_LT(worst, 1e3);
}

TEST(MixtureKernelProperties, SharedHyperparametersScaleSingleKernel) {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 50; ++rep) {
        const auto lam = softmax_function(normal_vector(6, rng, 2.0).reshaped(3, 2));
        const StationaryKernelSpec single = se_kernel(vec({0.6, 0.3}), 1.4, 0.0);
        const RegionKernelSet k{{single, single, single}};
        const Matrix P = uniform_points(2, 2, rng);
        const Vector lx = (*lam)(P.row(0).transpose()), ly = (*lam)(P.row(1).transpose());
        const double c = lx.dot(ly);
        EXPECT_NEAR(mixture_cov(P.row(0), P.row(1), *lam, k), c * stationary_cov(P.row(0), P.row(1), single), 1e-12);
    }
}

TEST(PredictNonstationary, DenseFormulaOracle) {
    std::mt19937_64 rng(6);
    for (int rep = 0; rep < 10; ++rep) {
        const Ensemble ens{uniform_points(4, 2, rng), normal_vector(4, rng)};
        const auto lam = softmax_function(normal_vector(4, rng, 2.0).reshaped(2, 2));
        const RegionKernelSet k = random_regions(2, 2, rng);
        const Vector beta = normal_vector(3, rng);
        const auto fit = fixed_nonstationary(ens, lam, k, beta);
        const Matrix Xs = uniform_points(6, 2, rng);
        const auto p = fit.predict(Xs);
        const Matrix Kinv = dense_mixture_matrix(ens.X, ens.X, *lam, k).inverse();
        const Matrix kx = dense_mixture_matrix(Xs, ens.X, *lam, k);
        const LinearBasis b{2};
        const Vector m = b.design_matrix(Xs) * beta + kx * Kinv * (ens.F - b.design_matrix(ens.X) * beta);
        const Vector v = (dense_mixture_matrix(Xs, Xs, *lam, k) - kx * Kinv * kx.transpose()).diagonal();
        for (Eigen::Index i = 0; i < 6; ++i) {
            EXPECT_NEAR(p.mean(i), m(i), 1e-8);
            EXPECT_NEAR(p.sd(i) * p.sd(i), v(i), 1e-8);
        }
    }
}

TEST(PredictNonstationary, UniformWeightsMatchScaledStationary) {
    std::mt19937_64 rng(7);
    const Ensemble ens{uniform_points(20, 2, rng), normal_vector(20, rng)};
    const auto lam = softmax_function(Matrix::Zero(2, 2));
    const StationaryKernelSpec region = se_kernel(vec({0.6, 0.8}), 1.2, 1e-4);
    const Vector beta = normal_vector(3, rng);
    const auto ns = fixed_nonstationary(ens, lam, RegionKernelSet{{region, region}}, beta);
    const auto st = fixed_stationary(ens, se_kernel(vec({0.6, 0.8}), 0.25 * 1.2 * 2.0, 1e-4), beta);
    const Matrix Xs = uniform_points(50, 2, rng);
    const auto a = ns.predict(Xs);
    const auto b = st.predict(Xs);
    EXPECT_LT((a.mean - b.mean).cwiseAbs().mean(), 0.05);
    EXPECT_LT((a.mean - b.mean).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((a.sd - b.sd).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(PredictNonstationary, NearInterpolation) {
    std::mt19937_64 rng(8);
    const Ensemble ens{uniform_points(10, 1, rng), normal_vector(10, rng)};
    const auto lam = softmax_function(vec({3.0, -3.0}));
    RegionKernelSet k{{se_kernel(vec({0.4}), 1.0, 1e-4), se_kernel(vec({0.2}), 1.0, 1e-4)}};
    const auto p = fixed_nonstationary(ens, lam, k, Vector::Zero(2)).predict(ens.X);
    EXPECT_LT((p.mean - ens.F).cwiseAbs().maxCoeff(), 1e-2);
    EXPECT_LT(p.sd.maxCoeff(), 1e-2 + 1e-2);
}

TEST(PredictNonstationary, VarianceBoundedByPrior) {
    std::mt19937_64 rng(9);
    const Ensemble ens{uniform_points(15, 2, rng), normal_vector(15, rng)};
    const auto lam = softmax_function(normal_vector(4, rng, 2.0).reshaped(2, 2));
    const RegionKernelSet k = random_regions(2, 2, rng);
    const auto fit = fixed_nonstationary(ens, lam, k, Vector::Zero(3));
    const Matrix Xs = uniform_points(100, 2, rng);
    const auto p = fit.predict(Xs);
    const MixtureKernelModel m{lam};
    const Vector prior = m.prior_var(k, m.prepare(Xs));
    for (Eigen::Index i = 0; i < 100; ++i) EXPECT_LE(p.sd(i) * p.sd(i), prior(i) + 1e-12);
    const auto again = fit.predict(Xs);
    EXPECT_EQ((again.mean - p.mean).cwiseAbs().maxCoeff(), 0.0);
}

TEST(FitNonstationary, SingleRegionFallsBack) {
    std::mt19937_64 rng(10);
    const Ensemble ens{uniform_points(15, 1, rng), normal_vector(15, rng)};
    NonstationaryPriorSpec prior;
    const auto fit = fit_nonstationary(ens, constant_mixing_function(1), prior, quick_sampler(10, 100, 2));
    ASSERT_FALSE(fit.notices().empty());
    EXPECT_NE(fit.notices().back().find("stationary"), std::string::npos);
    EXPECT_EQ(fit.params().front().size(), 1);
}

TEST(FitNonstationary, TwoRegionDraws) {
    std::mt19937_64 rng(11);
    Matrix X = Vector::LinSpaced(24, -1.0, 1.0);
    Vector F(24);
    for (Eigen::Index i = 0; i < 24; ++i) F(i) = X(i, 0) < 0.0 ? std::sin(8.0 * X(i, 0)) : 0.3 * X(i, 0);
    const Ensemble ens{X, F};
    const auto lam = softmax_function(vec({-4.0, 4.0}));
    NonstationaryPriorSpec prior;
    const auto fit = fit_nonstationary(ens, lam, prior, quick_sampler(11, 300));
    EXPECT_EQ(fit.draw_count(), 1200u);
    EXPECT_EQ(fit.betas().rows(), 1200);
    for (const auto& k : fit.params()) {
        ASSERT_EQ(k.size(), 2);
        for (const auto& r : k.regions) {
            EXPECT_GT(r.variance, 0.0);
            EXPECT_GT(r.corr.lengthscales.minCoeff(), 0.0);
            EXPECT_EQ(r.nugget, 1e-4);
        }
    }
    const Matrix m = region_lengthscale_means(fit);
    // region 2 covers the smooth half
    EXPECT_GT(m(1, 0), m(0, 0));
    EXPECT_TRUE(fit.predict(Vector::LinSpaced(30, -1.0, 1.0)).mean.allFinite());
}

TEST(FitNonstationary, EstimatedNuggets) {
    std::mt19937_64 rng(12);
    const Ensemble ens{uniform_points(20, 1, rng), normal_vector(20, rng)};
    NonstationaryPriorSpec prior;
    prior.estimate_nuggets = true;
    const auto fit = fit_nonstationary(ens, softmax_function(vec({-2.0, 2.0})), prior, quick_sampler(12, 100, 2));
    bool varied = false;
    for (const auto& k : fit.params()) varied |= k.regions[0].nugget != 1e-4;
    EXPECT_TRUE(varied);
}

TEST(FitNonstationary, MismatchedMixingFunction) {
    std::mt19937_64 rng(13);
    const Ensemble ens{uniform_points(10, 2, rng), normal_vector(10, rng)};
    EXPECT_THROW(fit_nonstationary(ens, softmax_function(vec({1.0, -1.0})), {}, quick_sampler(1, 50, 2)), ArgumentError);
    EXPECT_THROW(fit_nonstationary(ens, nullptr, {}, quick_sampler(1, 50, 2)), ArgumentError);
}
