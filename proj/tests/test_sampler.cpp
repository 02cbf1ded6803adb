#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace nsgp;
using namespace nsgp::testing;

namespace {

LogDensity standard_normal() {
    LogDensity d;
    d.value = [](const Vector& t) { return -0.5 * t.squaredNorm(); };
    d.value_and_gradient = [](const Vector& t, Vector& g) {
        g = -t;
        return -0.5 * t.squaredNorm();
    };
    return d;
}

ParameterLayout real_layout(Eigen::Index d) {
    ParameterLayout l;
    l.add("theta", d, Constraint::real);
    return l;
}

DrawSet from_chains(const Matrix& per_chain) {
    DrawSet d;
    d.names = {"x"};
    d.chains = static_cast<int>(per_chain.cols());
    d.keep_per_chain = static_cast<int>(per_chain.rows());
    d.draws.resize(per_chain.size(), 1);
    for (Eigen::Index c = 0; c < per_chain.cols(); ++c) d.draws.col(0).segment(c * per_chain.rows(), per_chain.rows()) = per_chain.col(c);
    return d;
}

}  // namespace

TEST(SamplePosterior, StandardNormalMoments) {
    const DrawSet d = sample_posterior(standard_normal(), real_layout(1), Vector::Zero(1), quick_sampler(1, 1000));
    ASSERT_EQ(d.size(), 4000);
    const double m = d.draws.col(0).mean();
    const double sd = std::sqrt((d.draws.col(0).array() - m).square().sum() / (d.size() - 1.0));
    const double ess = d.diagnostics.ess(0);
    EXPECT_LT(std::abs(m), 3.0 * sd / std::sqrt(ess));
    EXPECT_NEAR(sd, 1.0, 0.05);
    EXPECT_TRUE(d.converged());
}

TEST(SamplePosterior, CorrelatedNormal) {
    const double rho = 0.8;
    Matrix P(2, 2);
    P << 1, rho, rho, 1;
    const Matrix Pinv = P.inverse();
    LogDensity d;
    d.value_and_gradient = [Pinv](const Vector& t, Vector& g) {
        g = -Pinv * t;
        return -0.5 * t.dot(Pinv * t);
    };
    const DrawSet s = sample_posterior(d, real_layout(2), Vector::Zero(2), quick_sampler(2, 1000));
    const Matrix c = s.draws.rowwise() - s.draws.colwise().mean();
    const Matrix cov = c.transpose() * c / (s.size() - 1.0);
    EXPECT_NEAR(cov(0, 1) / std::sqrt(cov(0, 0) * cov(1, 1)), rho, 0.05);
}

TEST(SamplePosterior, OrderedConstraintHolds) {
    ParameterLayout l;
    l.add("zeta", 2, Constraint::positive_ordered);
    LogDensity d;
    d.value = [](const Vector& z) {
        const LogNormalPrior p{-1.0, 1.0};
        return p.log_pdf(z(0)) + p.log_pdf(z(1));
    };
    Vector init(2);
    init << 0.3, 0.6;
    const DrawSet s = sample_posterior(d, l, init, quick_sampler(3, 500));
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        EXPECT_GT(s.draws(i, 0), 0.0);
        EXPECT_LE(s.draws(i, 0), s.draws(i, 1));
    }
}

TEST(SamplePosterior, PositiveConstraintHolds) {
    ParameterLayout l;
    l.add("s", 3, Constraint::positive);
    LogDensity d;
    d.value = [](const Vector& s) {
        double lp = 0.0;
        for (Eigen::Index k = 0; k < s.size(); ++k) lp += GammaPrior{2.0, 1.0}.log_pdf(s(k));
        return lp;
    };
    const DrawSet s = sample_posterior(d, l, Vector::Ones(3), quick_sampler(4, 300));
    EXPECT_GT(s.draws.minCoeff(), 0.0);
}

TEST(SamplePosterior, Deterministic) {
    for (auto kernel : {SamplerKernel::nuts, SamplerKernel::adaptive_metropolis}) {
        SamplerConfig c = quick_sampler(5, 200);
        c.kernel = kernel;
        const DrawSet a = sample_posterior(standard_normal(), real_layout(3), Vector::Zero(3), c);
        const DrawSet b = sample_posterior(standard_normal(), real_layout(3), Vector::Zero(3), c);
        EXPECT_EQ((a.draws - b.draws).cwiseAbs().maxCoeff(), 0.0);
        c.seed = 6;
        const DrawSet e = sample_posterior(standard_normal(), real_layout(3), Vector::Zero(3), c);
        EXPECT_GT((a.draws - e.draws).cwiseAbs().maxCoeff(), 0.0);
    }
}

TEST(SamplePosterior, AdaptiveMetropolisRecoversMoments) {
    SamplerConfig c = quick_sampler(7, 2000);
    c.kernel = SamplerKernel::adaptive_metropolis;
    const DrawSet s = sample_posterior(standard_normal(), real_layout(2), Vector::Zero(2), c);
    EXPECT_NEAR(s.draws.col(0).mean(), 0.0, 0.1);
    const double m = s.draws.col(1).mean();
    EXPECT_NEAR(std::sqrt((s.draws.col(1).array() - m).square().mean()), 1.0, 0.1);
}

TEST(SamplePosterior, NanGradientFallsBack) {
    LogDensity d;
    d.value_and_gradient = [](const Vector& t, Vector& g) {
        g = -t;
        if (t(0) > 1.0) g(0) = std::nan("");
        return -0.5 * t.squaredNorm();
    };
    const DrawSet s = sample_posterior(d, real_layout(1), Vector::Zero(1), quick_sampler(8, 300, 2));
    ASSERT_FALSE(s.warnings.empty());
    EXPECT_NE(s.warnings.front().find("adaptive Metropolis"), std::string::npos);
    EXPECT_TRUE(s.draws.allFinite());
}

TEST(SamplePosterior, NonFiniteInitFails) {
    LogDensity d;
    d.value = [](const Vector&) { return -kInf; };
    EXPECT_THROW(sample_posterior(d, real_layout(1), Vector::Zero(1), quick_sampler(9, 100)), InitializationError);
}

TEST(SamplePosterior, KolmogorovSmirnov) {
    const DrawSet s = sample_posterior(standard_normal(), real_layout(1), Vector::Zero(1), quick_sampler(10, 2500));
    ASSERT_GE(s.size(), 10000);
    std::vector<double> x(s.draws.data(), s.draws.data() + s.size());
    std::sort(x.begin(), x.end());
    double ks = 0.0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double F = normal_cdf(x[i]);
        ks = std::max({ks, std::abs(F - i / n), std::abs(F - (i + 1) / n)});
    }
    EXPECT_LT(ks, 0.03);
}

TEST(Diagnostics, IidChainsAgree) {
    std::mt19937_64 rng(20);
    const Matrix ch = Matrix::NullaryExpr(1000, 4, [&] { return normal_vector(1, rng)(0); });
    const ConvergenceReport r = convergence_diagnostics(from_chains(ch));
    EXPECT_GE(r.rhat(0), 0.99);
    EXPECT_LE(r.rhat(0), 1.02);
    EXPECT_NEAR(r.ess(0), 4000.0, 0.2 * 4000.0);
    EXPECT_TRUE(r.flagged_names().empty());
}

TEST(Diagnostics, DisagreeingChainsFlagged) {
    std::mt19937_64 rng(21);
    Matrix ch = Matrix::NullaryExpr(500, 2, [&] { return 0.01 * normal_vector(1, rng)(0); });
    ch.col(1).array() += 5.0;
    const ConvergenceReport r = convergence_diagnostics(from_chains(ch));
    // ranks saturate, so the bound for two fully separated chains is near 1.8
    EXPECT_GT(r.rhat(0), 1.5);
    EXPECT_EQ(r.flagged_names(), std::vector<std::string>{"x"});
}

TEST(Diagnostics, SingleChainRejected) {
    EXPECT_THROW(convergence_diagnostics(from_chains(Matrix::Random(100, 1))), ArgumentError);
}
