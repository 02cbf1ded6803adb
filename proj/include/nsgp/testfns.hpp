#ifndef NSGP_TESTFNS_HPP
#define NSGP_TESTFNS_HPP

#include "nsgp/core.hpp"

#include <array>
#include <functional>
#include <string>

namespace nsgp::testfns {

/// sin(1 / ((0.7 x1 + 0.3)(0.7 x2 + 0.3))) on [0, 1]^2: rough near the origin, smooth near (1, 1).
inline double wavy2d(double x1, double x2) {
    if (!(x1 >= 0.0 && x1 <= 1.0 && x2 >= 0.0 && x2 <= 1.0)) throw ArgumentError("wavy2d: input outside [0, 1]^2");
    return std::sin(1.0 / ((0.7 * x1 + 0.3) * (0.7 * x2 + 0.3)));
}

/// Linear trend in x1..x4 plus amp(x5) * sin(freq(x5) * x5), where (amp, freq) is constant on five
/// equal-width regions of x5 and neighbouring regions are blended with a cosine ramp across
/// buffers of fixed width. Roughness decreases from left to right.
struct Piecewise5D {
    std::array<double, 5> linear{1.0, 0.5, 0.5, 0.5, 0.5};
    std::array<double, 5> amplitude{2.0, 1.5, 1.0, 0.6, 0.3};
    std::array<double, 5> frequency{40.0, 20.0, 10.0, 5.0, 2.0};
    double buffer = 0.08;

    void validate() const {
        if (!(buffer > 0.0 && buffer < 0.5)) throw ArgumentError("piecewise5d: buffer width must lie in (0, 0.5)");
        for (std::size_t k = 0; k < 5; ++k)
            if (!std::isfinite(linear[k]) || !std::isfinite(amplitude[k]) || !std::isfinite(frequency[k]))
                throw ArgumentError("piecewise5d: constants must be finite");
    }

    double region_width() const { return (2.0 - 4.0 * buffer) / 5.0; }

    /// Left end of plain region k (k = 0..4).
    double region_start(int k) const { return -1.0 + k * (region_width() + buffer); }

    /// Buffer k lies between region k and k + 1 (k = 0..3): [start, start + buffer].
    double buffer_start(int k) const { return region_start(k) + region_width(); }

    double component(int k, double x5) const {
        return amplitude[static_cast<std::size_t>(k)] * std::sin(frequency[static_cast<std::size_t>(k)] * x5);
    }

    double oscillation(double x5) const {
        for (int k = 0; k < 4; ++k) {
            const double b = buffer_start(k);
            if (x5 < b) return component(k, x5);
            if (x5 <= b + buffer) {
                const double t = (x5 - b) / buffer;
                const double w = 0.5 * (1.0 - std::cos(std::numbers::pi * t));
                return (1.0 - w) * component(k, x5) + w * component(k + 1, x5);
            }
        }
        return component(4, x5);
    }

    double operator()(const Vector& x) const {
        if (x.size() != 5) throw ArgumentError("piecewise5d: expects 5 inputs");
        for (Eigen::Index j = 0; j < 5; ++j)
            if (!(x(j) >= -1.0 && x(j) <= 1.0)) throw ArgumentError("piecewise5d: input outside [-1, 1]^5");
        double f = linear[0];
        for (std::size_t j = 1; j < 5; ++j) f += linear[j] * x(static_cast<Eigen::Index>(j - 1));
        return f + oscillation(x(4));
    }
};

struct TestFunctionSpec {
    std::string name;
    Eigen::Index dim = 0;
    Vector lower;
    Vector upper;
    std::function<double(const Vector&)> f;

    /// Map a point from [-1, 1]^p to the native domain.
    Vector to_native(const Vector& unit) const {
        return lower + ((unit.array() + 1.0) * 0.5 * (upper - lower).array()).matrix();
    }

    Vector evaluate(const Matrix& native_points) const {
        Vector y(native_points.rows());
        for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = f(native_points.row(i).transpose());
        return y;
    }
};

inline TestFunctionSpec test_function(const std::string& name, const Piecewise5D& constants = {}) {
    if (name == "wavy2d") {
        return {name, 2, Vector::Zero(2), Vector::Ones(2),
                [](const Vector& x) {
                    if (x.size() != 2) throw ArgumentError("wavy2d: expects 2 inputs");
                    return wavy2d(x(0), x(1));
                }};
    }
    if (name == "piecewise5d") {
        constants.validate();
        return {name, 5, Vector::Constant(5, -1.0), Vector::Ones(5), constants};
    }
    throw ArgumentError("unknown test function '" + name + "' (known: wavy2d, piecewise5d)");
}

}  // namespace nsgp::testfns

#endif  // NSGP_TESTFNS_HPP
