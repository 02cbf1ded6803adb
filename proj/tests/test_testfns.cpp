#include "support.hpp"

#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>

using namespace nsgp;
using namespace nsgp::testing;
using namespace nsgp::testfns;

TEST(Wavy2d, Examples) {
    // sin(1/0.09) and sin(1/0.4225), evaluated to 7 places
    EXPECT_NEAR(wavy2d(0.0, 0.0), -0.9933330, 1e-6);
    EXPECT_NEAR(wavy2d(1.0, 1.0), 0.841471, 1e-6);
    EXPECT_NEAR(wavy2d(0.5, 0.5), 0.6995223, 1e-6);
    EXPECT_DOUBLE_EQ(wavy2d(1.0, 1.0), std::sin(1.0));
}

TEST(Wavy2d, MatchesHighPrecision) {
    using big = boost::multiprecision::cpp_bin_float_50;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 1000; ++k) {
        const double x1 = u(rng), x2 = u(rng);
        const big a = big(7) / 10 * big(x1) + big(3) / 10;
        const big b = big(7) / 10 * big(x2) + big(3) / 10;
        const big ref = sin(1 / (a * b));
        EXPECT_NEAR(wavy2d(x1, x2), ref.convert_to<double>(), 1e-12);
    }
}

TEST(Wavy2d, OutsideDomain) {
    EXPECT_THROW(wavy2d(-0.1, 0.5), ArgumentError);
    EXPECT_THROW(wavy2d(0.5, 1.5), ArgumentError);
}

TEST(Piecewise5d, ContinuousAtBlendBoundaries) {
    const Piecewise5D f;
    Vector x = Vector::Zero(5);
    for (int k = 0; k < 4; ++k) {
        for (double b : {f.buffer_start(k), f.buffer_start(k) + f.buffer}) {
            x(4) = std::nextafter(b, -2.0);
            const double left = f(x);
            x(4) = std::nextafter(b, 2.0);
            const double right = f(x);
            EXPECT_LT(std::abs(left - right), 1e-10) << "buffer " << k << " at " << b;
        }
    }
}

TEST(Piecewise5d, NoJumpsOnDenseGrid) {
    const Piecewise5D f;
    Vector x = Vector::Zero(5);
    double worst = 0.0;
    for (int i = 0; i <= 100000; ++i) {
        const double t = -1.0 + 2.0 * i / 100000.0;
        x(4) = std::max(-1.0, std::nextafter(t, -2.0));
        const double a = f(x);
        x(4) = std::min(1.0, std::nextafter(t, 2.0));
        worst = std::max(worst, std::abs(f(x) - a));
    }
    EXPECT_LT(worst, 1e-8);
}

TEST(Piecewise5d, LinearPartIsAdditive) {
    const Piecewise5D f;
    std::mt19937_64 rng(2);
    for (int k = 0; k < 100; ++k) {
        Vector x = uniform_points(1, 5, rng).row(0).transpose();
        Vector flipped = x;
        flipped(0) = -x(0);
        EXPECT_NEAR(f(x) - f(flipped), 2.0 * f.linear[1] * x(0), 1e-14);
    }
}

TEST(Piecewise5d, RoughnessDecreasesLeftToRight) {
    const Piecewise5D f;
    auto variance_in = [&](int k) {
        Vector x = Vector::Zero(5);
        const int m = 2000;
        Vector v(m);
        for (int i = 0; i < m; ++i) {
            x(4) = f.region_start(k) + f.region_width() * (i + 0.5) / m;
            v(i) = f(x);
        }
        return (v.array() - v.mean()).square().sum() / (m - 1.0);
    };
    EXPECT_GT(variance_in(0), 3.0 * variance_in(4));
    EXPECT_GT(variance_in(0), variance_in(2));
}

TEST(Piecewise5d, Layout) {
    const Piecewise5D f;
    EXPECT_DOUBLE_EQ(f.region_start(0), -1.0);
    EXPECT_NEAR(f.buffer_start(3) + f.buffer + f.region_width(), 1.0, 1e-15);
    EXPECT_THROW(f(Vector::Constant(5, 1.5)), ArgumentError);
    EXPECT_THROW(f(Vector::Zero(4)), ArgumentError);
    Piecewise5D bad;
    bad.buffer = 0.0;
    EXPECT_THROW(bad.validate(), ArgumentError);
}

TEST(TestFunction, Registry) {
    const TestFunctionSpec w = test_function("wavy2d");
    EXPECT_EQ(w.dim, 2);
    EXPECT_EQ(w.to_native(Vector::Constant(2, -1.0)), Vector::Zero(2));
    EXPECT_EQ(w.to_native(Vector::Ones(2)), Vector::Ones(2));
    Matrix P(1, 2);
    P << 0.5, 0.5;
    EXPECT_DOUBLE_EQ(w.evaluate(P)(0), wavy2d(0.5, 0.5));
    const TestFunctionSpec p = test_function("piecewise5d");
    EXPECT_EQ(p.dim, 5);
    EXPECT_DOUBLE_EQ(p.f(Vector::Zero(5)), Piecewise5D{}(Vector::Zero(5)));
    EXPECT_THROW(test_function("branin"), ArgumentError);
}
