#ifndef NSGP_DISTRIBUTIONS_HPP
#define NSGP_DISTRIBUTIONS_HPP

#include "nsgp/core.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <cmath>

namespace nsgp {

// Normalized log densities together with their derivative in x.
// Scale conventions: Normal(mean, sd), Gamma(shape, rate), InverseGamma(shape, scale),
// LogNormal(meanlog, sdlog).

struct NormalPrior {
    double mean = 0.0;
    double sd = 1.0;

    double log_pdf(double x) const {
        const double z = (x - mean) / sd;
        return -0.5 * z * z - std::log(sd) - kLogSqrt2Pi;
    }
    double d_log_pdf(double x) const { return -(x - mean) / (sd * sd); }
};

struct GammaPrior {
    double shape = 1.0;
    double rate = 1.0;

    double log_pdf(double x) const {
        if (!(x > 0.0)) return -kInf;
        return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
    }
    double d_log_pdf(double x) const { return (shape - 1.0) / x - rate; }
};

struct InverseGammaPrior {
    double shape = 1.0;
    double scale = 1.0;

    double log_pdf(double x) const {
        if (!(x > 0.0)) return -kInf;
        return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - scale / x;
    }
    double d_log_pdf(double x) const { return -(shape + 1.0) / x + scale / (x * x); }
};

struct LogNormalPrior {
    double meanlog = 0.0;
    double sdlog = 1.0;

    double log_pdf(double x) const {
        if (!(x > 0.0)) return -kInf;
        const double lx = std::log(x);
        const double z = (lx - meanlog) / sdlog;
        return -0.5 * z * z - lx - std::log(sdlog) - kLogSqrt2Pi;
    }
    double d_log_pdf(double x) const { return -1.0 / x - (std::log(x) - meanlog) / (sdlog * sdlog * x); }
};

/// log N(x; 0, sd) where sd is a standard deviation.
inline double log_normal_density(double x, double sd) {
    const double z = x / sd;
    return -0.5 * z * z - std::log(sd) - kLogSqrt2Pi;
}

inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: probability must lie in (0, 1)");
    return std::numbers::sqrt2 * boost::math::erf_inv(2.0 * p - 1.0);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace nsgp

#endif  // NSGP_DISTRIBUTIONS_HPP
