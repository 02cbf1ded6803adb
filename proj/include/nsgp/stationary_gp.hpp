#ifndef NSGP_STATIONARY_GP_HPP
#define NSGP_STATIONARY_GP_HPP

#include "nsgp/distributions.hpp"
#include "nsgp/emulator.hpp"
#include "nsgp/kernels.hpp"
#include "nsgp/sampler.hpp"

#include <map>
#include <memory>

namespace nsgp {

/// Priors for the stationary emulator: beta_k ~ N(0, beta_sd), delta_j ~ Gamma(shape, rate)
/// (overridable per input), sigma2 ~ InverseGamma(2, 1), nugget fixed.
struct GPPriorSpec {
    double beta_sd = 10.0;
    GammaPrior lengthscale{4.0, 4.0};
    std::map<Eigen::Index, GammaPrior> lengthscale_overrides;
    InverseGammaPrior variance{2.0, 1.0};
    double nugget = 1e-4;
    /// Power-exponential exponent per input; empty means 2 everywhere.
    Vector exponents;

    GammaPrior lengthscale_prior(Eigen::Index j) const {
        auto it = lengthscale_overrides.find(j);
        return it == lengthscale_overrides.end() ? lengthscale : it->second;
    }

    Vector exponents_for(Eigen::Index p) const {
        if (exponents.size() == 0) return Vector::Constant(p, 2.0);
        if (exponents.size() != p) throw ArgumentError("prior exponent vector length does not match input dimension");
        return exponents;
    }

    void validate(Eigen::Index p) const {
        if (!(beta_sd > 0.0)) throw DomainError("beta prior sd must be positive");
        for (Eigen::Index j = 0; j < p; ++j) {
            GammaPrior g = lengthscale_prior(j);
            if (!(g.shape > 0.0 && g.rate > 0.0)) throw DomainError("lengthscale prior parameters must be positive");
        }
        for (const auto& [j, g] : lengthscale_overrides)
            if (j < 0 || j >= p) throw ArgumentError("lengthscale prior override for nonexistent input " + std::to_string(j));
        if (!(variance.shape > 0.0 && variance.scale > 0.0)) throw DomainError("variance prior parameters must be positive");
        if (!(nugget >= 0.0)) throw DomainError("nugget must be nonnegative");
        Vector phi = exponents_for(p);
        for (Eigen::Index j = 0; j < p; ++j)
            if (!(phi(j) > 0.0 && phi(j) <= 2.0)) throw DomainError("exponent must lie in (0, 2]");
    }

    double log_prior(double sigma2, const Vector& delta) const {
        double lp = variance.log_pdf(sigma2);
        for (Eigen::Index j = 0; j < delta.size(); ++j) lp += lengthscale_prior(j).log_pdf(delta(j));
        return lp;
    }
};

struct StationaryModel {
    using Params = StationaryKernelSpec;
    using Points = Matrix;

    GPPriorSpec prior;

    Points prepare(const Matrix& X) const { return X; }
    Matrix cov(const Params& k, const Points& a, const Points& b) const { return stationary_kernel_matrix(a, b, k); }
    Vector prior_var(const Params& k, const Points& a) const { return Vector::Constant(a.rows(), k.variance + k.nugget); }

    Params average(const std::vector<Params>& ps) const {
        Params m = ps.front();
        m.variance = 0.0;
        m.corr.lengthscales.setZero();
        for (const auto& k : ps) {
            m.variance += k.variance;
            m.corr.lengthscales += k.corr.lengthscales;
        }
        m.variance /= static_cast<double>(ps.size());
        m.corr.lengthscales /= static_cast<double>(ps.size());
        return m;
    }
};

using FittedStationaryGP = FittedEmulator<StationaryModel>;

/// Joint log posterior of (beta, sigma2, delta): log N(F; H beta, K) plus log priors.
/// Returns -inf when K cannot be factorized.
inline double stationary_log_posterior(const Vector& beta, double sigma2, const Vector& delta, const Ensemble& ens,
                                       const GPPriorSpec& prior) {
    const LinearBasis basis{ens.dim()};
    if (beta.size() != basis.size()) throw ArgumentError("beta length must be p + 1");
    if (delta.size() != ens.dim()) throw ArgumentError("lengthscale vector length must equal input dimension");
    if (!(sigma2 > 0.0) || !(delta.array() > 0.0).all()) throw DomainError("variance and lengthscales must be positive");
    StationaryKernelSpec k{CorrelationSpec{CorrelationFamily::power_exponential, prior.exponents_for(ens.dim()), delta},
                           sigma2, prior.nugget};
    CholeskyFactor chol;
    try {
        chol = safe_cholesky(stationary_kernel_matrix(ens.X, ens.X, k));
    } catch (const FactorizationError&) {
        return -kInf;
    }
    const Vector r = ens.F - basis.design_matrix(ens.X) * beta;
    const Vector y = chol.lower.triangularView<Eigen::Lower>().solve(r);
    double lp = -0.5 * y.squaredNorm() - 0.5 * chol.log_determinant() -
                static_cast<double>(ens.size()) * kLogSqrt2Pi;
    const NormalPrior bp{0.0, prior.beta_sd};
    for (Eigen::Index k2 = 0; k2 < beta.size(); ++k2) lp += bp.log_pdf(beta(k2));
    return lp + prior.log_prior(sigma2, delta);
}

namespace detail {

/// Pairwise |x_i,j - x_k,j| for every input j.
inline std::vector<Matrix> abs_differences(const Matrix& X) {
    std::vector<Matrix> out;
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        Matrix D(X.rows(), X.rows());
        for (Eigen::Index b = 0; b < X.rows(); ++b)
            for (Eigen::Index a = 0; a < X.rows(); ++a) D(a, b) = std::abs(X(a, j) - X(b, j));
        out.push_back(std::move(D));
    }
    return out;
}

/// S = sum_j (D_j / delta_j)^phi_j, and per input the derivative factor of r wrt delta_j:
/// dr/ddelta_j = r * phi_j * (D_j/delta_j)^phi_j / delta_j.
struct ScaledDistances {
    Matrix total;
    std::vector<Matrix> terms;
};

inline ScaledDistances scaled_distances(const std::vector<Matrix>& D, const Vector& delta, const Vector& phi) {
    ScaledDistances s;
    s.total = Matrix::Zero(D.front().rows(), D.front().cols());
    for (std::size_t j = 0; j < D.size(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        Matrix t;
        if (phi(jj) == 2.0) {
            t = (D[j] / delta(jj)).array().square().matrix();
        } else {
            t = (D[j] / delta(jj)).array().pow(phi(jj)).matrix();
        }
        s.total += t;
        s.terms.push_back(std::move(t));
    }
    return s;
}

/// Collapsed posterior over theta = (sigma2, delta_1..p) for the stationary model.
class StationaryCollapsedPosterior {
public:
    StationaryCollapsedPosterior(const Ensemble& ens, const GPPriorSpec& prior)
        : F_(ens.F),
          H_(LinearBasis{ens.dim()}.design_matrix(ens.X)),
          D_(abs_differences(ens.X)),
          E_(coincidence_matrix(ens.X, ens.X)),
          phi_(prior.exponents_for(ens.dim())),
          prior_(prior) {}

    double operator()(const Vector& theta, Vector* grad) const {
        const double sigma2 = theta(0);
        const Vector delta = theta.tail(theta.size() - 1);
        const ScaledDistances s = scaled_distances(D_, delta, phi_);
        const Matrix R = (-s.total.array()).exp().matrix();
        const Matrix K = sigma2 * R + prior_.nugget * E_;
        CollapsedLikelihood like = collapsed_likelihood(K, H_, F_, prior_.beta_sd, grad != nullptr);
        if (!like.ok()) return -kInf;
        double lp = like.value + prior_.log_prior(sigma2, delta);
        if (grad) {
            grad->resize(theta.size());
            (*grad)(0) = like.gradient_term(R) + prior_.variance.d_log_pdf(sigma2);
            for (Eigen::Index j = 0; j < delta.size(); ++j) {
                const auto& t = s.terms[static_cast<std::size_t>(j)];
                const Matrix dK = (sigma2 * phi_(j) / delta(j)) *
                                  (R.array() > 0.0).select(R.array() * t.array(), 0.0).matrix();
                (*grad)(j + 1) = like.gradient_term(dK) + prior_.lengthscale_prior(j).d_log_pdf(delta(j));
            }
            if (!grad->allFinite()) return -kInf;
        }
        return lp;
    }

private:
    Vector F_;
    Matrix H_;
    std::vector<Matrix> D_;
    Matrix E_;
    Vector phi_;
    GPPriorSpec prior_;
};

inline void check_regression_design(const Ensemble& ens) {
    const LinearBasis basis{ens.dim()};
    if (ens.size() <= basis.size())
        throw ArgumentError("need more runs (" + std::to_string(ens.size()) + ") than mean coefficients (" +
                            std::to_string(basis.size()) + ")");
    Eigen::ColPivHouseholderQR<Matrix> qr(basis.design_matrix(ens.X));
    if (qr.rank() < basis.size()) throw ArgumentError("regression design matrix is rank deficient");
}

inline std::mt19937_64 coefficient_rng(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                      0x62657461u};
    return std::mt19937_64(seq);
}

}  // namespace detail

/// Posterior sampling of (sigma2, delta) with beta integrated out, followed by an exact draw of
/// beta given each hyperparameter draw.
inline FittedStationaryGP fit_stationary(const Ensemble& ens, const GPPriorSpec& prior, const SamplerConfig& cfg) {
    ens.validate();
    prior.validate(ens.dim());
    detail::check_regression_design(ens);
    const Eigen::Index p = ens.dim();

    auto posterior = std::make_shared<detail::StationaryCollapsedPosterior>(ens, prior);
    LogDensity density;
    density.value = [posterior](const Vector& t) { return (*posterior)(t, nullptr); };
    density.value_and_gradient = [posterior](const Vector& t, Vector& g) { return (*posterior)(t, &g); };

    ParameterLayout layout;
    layout.add("sigma2", 1, Constraint::positive).add("delta", p, Constraint::positive);
    Vector init(1 + p);
    init(0) = 1.0;
    for (Eigen::Index j = 0; j < p; ++j) {
        const GammaPrior g = prior.lengthscale_prior(j);
        init(1 + j) = g.shape / g.rate;
    }

    DrawSet hyper = sample_posterior(density, layout, init, cfg);

    const Matrix H = LinearBasis{p}.design_matrix(ens.X);
    const Vector phi = prior.exponents_for(p);
    std::vector<StationaryKernelSpec> params;
    params.reserve(static_cast<std::size_t>(hyper.size()));
    Matrix betas(hyper.size(), p + 1);
    auto rng = detail::coefficient_rng(cfg.seed);
    for (Eigen::Index d = 0; d < hyper.size(); ++d) {
        StationaryKernelSpec k{CorrelationSpec{CorrelationFamily::power_exponential, phi,
                                               hyper.draws.row(d).tail(p).transpose()},
                               hyper.draws(d, 0), prior.nugget};
        CholeskyFactor chol = safe_cholesky(stationary_kernel_matrix(ens.X, ens.X, k));
        betas.row(d) = detail::draw_coefficients(chol, H, ens.F, prior.beta_sd, rng).transpose();
        params.push_back(std::move(k));
    }
    DrawSet all = append_coefficients(std::move(hyper), betas, cfg);
    FittedStationaryGP fit(StationaryModel{prior}, ens, std::move(params), std::move(betas), std::move(all));
    for (const auto& w : fit.draws().warnings) fit.add_notice(w);
    if (!fit.converged()) fit.add_notice("unconverged: flagged parameters " + std::to_string(fit.draws().diagnostics.flagged_names().size()));
    return fit;
}

inline PredictiveSummary predict_stationary(const FittedStationaryGP& fit, const Matrix& Xnew, bool keep_draws = false) {
    return fit.predict(Xnew, keep_draws);
}

inline Vector loo_standardized_residuals(const FittedStationaryGP& fit, LooMode mode = LooMode::average_over_draws) {
    return fit.loo_residuals(mode);
}

}  // namespace nsgp

#endif  // NSGP_STATIONARY_GP_HPP
