#ifndef NSGP_TEST_SUPPORT_HPP
#define NSGP_TEST_SUPPORT_HPP

#include "nsgp/nsgp.hpp"

#include <random>

namespace nsgp::testing {

inline Matrix uniform_points(Eigen::Index n, Eigen::Index p, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix X(n, p);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < p; ++j) X(i, j) = u(rng);
    return X;
}

inline Vector normal_vector(Eigen::Index n, std::mt19937_64& rng, double sd = 1.0) {
    std::normal_distribution<double> z(0.0, sd);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = z(rng);
    return v;
}

inline StationaryKernelSpec se_kernel(const Vector& delta, double sigma2, double nugget) {
    return {CorrelationSpec::squared_exponential(delta), sigma2, nugget};
}

/// Single draw set (one chain, one row) holding the given constrained values.
inline DrawSet single_draw(const Vector& row, std::vector<std::string> names = {}) {
    DrawSet d;
    d.draws = row.transpose();
    d.chains = 1;
    d.keep_per_chain = 1;
    if (names.empty())
        for (Eigen::Index k = 0; k < row.size(); ++k) names.push_back("theta[" + std::to_string(k + 1) + "]");
    d.names = std::move(names);
    return d;
}

/// Stationary emulator at fixed hyperparameters and coefficients.
inline FittedStationaryGP fixed_stationary(const Ensemble& ens, const StationaryKernelSpec& k, const Vector& beta) {
    Vector row(1 + ens.dim() + beta.size());
    row << k.variance, k.corr.lengthscales, beta;
    GPPriorSpec prior;
    prior.nugget = k.nugget;
    return FittedStationaryGP(StationaryModel{prior}, ens, {k}, beta.transpose(), single_draw(row));
}

inline FittedNonstationaryGP fixed_nonstationary(const Ensemble& ens, std::shared_ptr<const MixingFunction> lambda,
                                                 const RegionKernelSet& k, const Vector& beta) {
    return FittedNonstationaryGP(MixtureKernelModel{std::move(lambda)}, ens, {k}, beta.transpose(), single_draw(beta));
}

/// Draw F ~ N(H beta, K) for the given design.
inline Vector simulate_gp(const Matrix& X, const StationaryKernelSpec& k, const Vector& beta, std::mt19937_64& rng) {
    const CholeskyFactor c = safe_cholesky(stationary_kernel_matrix(X, X, k));
    return LinearBasis{X.cols()}.design_matrix(X) * beta + c.lower * normal_vector(X.rows(), rng);
}

inline SamplerConfig quick_sampler(std::uint64_t seed, int iters = 300, int chains = 4) {
    SamplerConfig c;
    c.seed = seed;
    c.chains = chains;
    c.warmup_iters = iters;
    c.keep_iters = iters;
    return c;
}

}  // namespace nsgp::testing

#endif  // NSGP_TEST_SUPPORT_HPP
