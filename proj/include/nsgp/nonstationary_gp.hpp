#ifndef NSGP_NONSTATIONARY_GP_HPP
#define NSGP_NONSTATIONARY_GP_HPP

// GP emulator whose covariance mixes region-specific stationary kernels with frozen weights:
//   k(x, x') = sum_l lambda_l(x) lambda_l(x') k_l(x, x') + 1{x == x'} tau^2_{z(x)},
// z(x) being the dominant region at x.

#include "nsgp/emulator.hpp"
#include "nsgp/mixture.hpp"
#include "nsgp/stationary_gp.hpp"

#include <memory>
#include <string>
#include <vector>

namespace nsgp {

/// Per-region stationary kernels (correlation, variance sigma_l^2, nugget tau_l^2).
struct RegionKernelSet {
    std::vector<StationaryKernelSpec> regions;

    Eigen::Index size() const { return static_cast<Eigen::Index>(regions.size()); }
    Eigen::Index dim() const { return regions.empty() ? 0 : regions.front().corr.dim(); }

    void validate() const {
        if (regions.empty()) throw ArgumentError("region kernel set is empty");
        for (const auto& k : regions) {
            k.validate();
            if (k.corr.dim() != dim()) throw ArgumentError("region kernels differ in input dimension");
        }
    }
};

namespace detail {

inline void check_simplex(const Vector& lambda) {
    if (lambda.size() < 1) throw ArgumentError("weight vector is empty");
    if (!lambda.allFinite() || (lambda.array() < -1e-12).any() || std::abs(lambda.sum() - 1.0) > 1e-9)
        throw DomainError("weights must lie on the unit simplex");
}

}  // namespace detail

/// Index of the largest weight; ties go to the lowest index.
inline Eigen::Index dominant_region(const Vector& lambda) {
    detail::check_simplex(lambda);
    Eigen::Index best = 0;
    for (Eigen::Index l = 1; l < lambda.size(); ++l)
        if (lambda(l) > lambda(best)) best = l;
    return best;
}

/// One-hot z(x) at the dominant region.
inline Vector region_indicator(const Vector& lambda) {
    Vector z = Vector::Zero(lambda.size());
    z(dominant_region(lambda)) = 1.0;
    return z;
}

/// Mixture covariance for two points given their weights.
template <class A, class B>
double mixture_cov(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y, const Vector& lambda_x,
                   const Vector& lambda_y, const RegionKernelSet& kernels) {
    kernels.validate();
    if (x.size() != kernels.dim() || y.size() != kernels.dim())
        throw ArgumentError("mixture_cov: point dimension does not match kernel dimension");
    if (lambda_x.size() != kernels.size() || lambda_y.size() != kernels.size())
        throw ArgumentError("mixture_cov: weight length does not match number of regions");
    detail::check_simplex(lambda_x);
    detail::check_simplex(lambda_y);
    double k = 0.0;
    for (Eigen::Index l = 0; l < kernels.size(); ++l) {
        const auto& r = kernels.regions[static_cast<std::size_t>(l)];
        k += lambda_x(l) * lambda_y(l) * r.variance * detail::corr_unchecked(x, y, r.corr);
    }
    if (same_point(x, y)) {
        const Eigen::Index zx = dominant_region(lambda_x);
        if (zx == dominant_region(lambda_y)) k += kernels.regions[static_cast<std::size_t>(zx)].nugget;
    }
    return k;
}

/// Mixture covariance with weights taken from a mixing function.
template <class A, class B>
double mixture_cov(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y, const MixingFunction& lambda_hat,
                   const RegionKernelSet& kernels) {
    return mixture_cov(x, y, lambda_hat(Vector(x)), lambda_hat(Vector(y)), kernels);
}

/// Points with their frozen weights (n x L) and dominant regions.
struct WeightedPoints {
    Matrix X;
    Matrix lambda;
    std::vector<Eigen::Index> region;

    Eigen::Index rows() const { return X.rows(); }
};

inline WeightedPoints weighted_points(const Matrix& X, const Matrix& lambda) {
    if (lambda.rows() != X.rows()) throw ArgumentError("weights and points differ in row count");
    WeightedPoints p{X, lambda, {}};
    p.region.reserve(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) p.region.push_back(dominant_region(lambda.row(i).transpose()));
    return p;
}

inline Matrix mixture_kernel_matrix(const WeightedPoints& a, const WeightedPoints& b, const RegionKernelSet& k) {
    if (a.X.cols() != k.dim() || b.X.cols() != k.dim())
        throw ArgumentError("mixture kernel matrix: point dimension does not match kernel dimension");
    if (a.lambda.cols() != k.size() || b.lambda.cols() != k.size())
        throw ArgumentError("mixture kernel matrix: weight columns do not match number of regions");
    Matrix K = Matrix::Zero(a.rows(), b.rows());
    for (Eigen::Index l = 0; l < k.size(); ++l) {
        const auto& r = k.regions[static_cast<std::size_t>(l)];
        K.array() += ((a.lambda.col(l) * b.lambda.col(l).transpose()).array() *
                      (r.variance * correlation_matrix(a.X, b.X, r.corr)).array());
    }
    for (Eigen::Index j = 0; j < b.rows(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            if (a.region[static_cast<std::size_t>(i)] == b.region[static_cast<std::size_t>(j)] &&
                same_point(a.X.row(i), b.X.row(j)))
                K(i, j) += k.regions[static_cast<std::size_t>(a.region[static_cast<std::size_t>(i)])].nugget;
    return K;
}

struct MixtureKernelModel {
    using Params = RegionKernelSet;
    using Points = WeightedPoints;

    std::shared_ptr<const MixingFunction> lambda_hat;

    Points prepare(const Matrix& X) const { return weighted_points(X, lambda_hat->evaluate(X)); }
    Matrix cov(const Params& k, const Points& a, const Points& b) const { return mixture_kernel_matrix(a, b, k); }

    Vector prior_var(const Params& k, const Points& a) const {
        Vector v = Vector::Zero(a.rows());
        for (Eigen::Index l = 0; l < k.size(); ++l)
            v.array() += a.lambda.col(l).array().square() * k.regions[static_cast<std::size_t>(l)].variance;
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            v(i) += k.regions[static_cast<std::size_t>(a.region[static_cast<std::size_t>(i)])].nugget;
        return v;
    }

    Params average(const std::vector<Params>& ps) const {
        Params m = ps.front();
        for (auto& r : m.regions) {
            r.variance = 0.0;
            r.nugget = 0.0;
            r.corr.lengthscales.setZero();
        }
        for (const auto& p : ps) {
            for (std::size_t l = 0; l < m.regions.size(); ++l) {
                m.regions[l].variance += p.regions[l].variance;
                m.regions[l].nugget += p.regions[l].nugget;
                m.regions[l].corr.lengthscales += p.regions[l].corr.lengthscales;
            }
        }
        const double M = static_cast<double>(ps.size());
        for (auto& r : m.regions) {
            r.variance /= M;
            r.nugget /= M;
            r.corr.lengthscales /= M;
        }
        return m;
    }
};

using FittedNonstationaryGP = FittedEmulator<MixtureKernelModel>;

/// Region priors: each region gets the stationary priors; nuggets fixed at region.nugget
/// unless estimated, in which case tau_l^2 ~ InverseGamma(2, 0.01).
struct NonstationaryPriorSpec {
    GPPriorSpec region;
    bool estimate_nuggets = false;
    InverseGammaPrior nugget_prior{2.0, 0.01};

    void validate(Eigen::Index p) const {
        region.validate(p);
        if (estimate_nuggets && !(nugget_prior.shape > 0.0 && nugget_prior.scale > 0.0))
            throw DomainError("nugget prior parameters must be positive");
    }
};

namespace detail {

/// Collapsed posterior over theta = (sigma2[L], delta_1[p], ..., delta_L[p], tau2[L]?).
class MixtureCollapsedPosterior {
public:
    MixtureCollapsedPosterior(const Ensemble& ens, const Matrix& lambda, const NonstationaryPriorSpec& prior)
        : F_(ens.F),
          H_(LinearBasis{ens.dim()}.design_matrix(ens.X)),
          D_(abs_differences(ens.X)),
          phi_(prior.region.exponents_for(ens.dim())),
          prior_(prior),
          L_(lambda.cols()),
          p_(ens.dim()) {
        const WeightedPoints pts = weighted_points(ens.X, lambda);
        const Matrix E = coincidence_matrix(ens.X, ens.X);
        for (Eigen::Index l = 0; l < L_; ++l) {
            weights_.push_back(lambda.col(l) * lambda.col(l).transpose());
            Matrix N = Matrix::Zero(E.rows(), E.cols());
            for (Eigen::Index j = 0; j < E.cols(); ++j)
                for (Eigen::Index i = 0; i < E.rows(); ++i)
                    if (E(i, j) != 0.0 && pts.region[static_cast<std::size_t>(i)] == l &&
                        pts.region[static_cast<std::size_t>(j)] == l)
                        N(i, j) = 1.0;
            nugget_masks_.push_back(std::move(N));
        }
    }

    double operator()(const Vector& theta, Vector* grad) const {
        const Eigen::Index n = F_.size();
        Matrix K = Matrix::Zero(n, n);
        std::vector<Matrix> WR(static_cast<std::size_t>(L_));
        std::vector<ScaledDistances> S;
        S.reserve(static_cast<std::size_t>(L_));
        double lp = 0.0;
        for (Eigen::Index l = 0; l < L_; ++l) {
            const auto ll = static_cast<std::size_t>(l);
            const double sigma2 = theta(l);
            const Vector delta = theta.segment(L_ + l * p_, p_);
            S.push_back(scaled_distances(D_, delta, phi_));
            WR[ll] = (weights_[ll].array() * (-S.back().total.array()).exp()).matrix();
            K += sigma2 * WR[ll];
            K += nugget(theta, l) * nugget_masks_[ll];
            lp += prior_.region.log_prior(sigma2, delta);
            if (prior_.estimate_nuggets) lp += prior_.nugget_prior.log_pdf(nugget(theta, l));
        }
        CollapsedLikelihood like = collapsed_likelihood(K, H_, F_, prior_.region.beta_sd, grad != nullptr);
        if (!like.ok()) return -kInf;
        lp += like.value;
        if (grad) {
            grad->resize(theta.size());
            for (Eigen::Index l = 0; l < L_; ++l) {
                const auto ll = static_cast<std::size_t>(l);
                const double sigma2 = theta(l);
                (*grad)(l) = like.gradient_term(WR[ll]) + prior_.region.variance.d_log_pdf(sigma2);
                for (Eigen::Index j = 0; j < p_; ++j) {
                    const Eigen::Index idx = L_ + l * p_ + j;
                    const double delta = theta(idx);
                    const auto& t = S[ll].terms[static_cast<std::size_t>(j)];
                    const Matrix dK = (sigma2 * phi_(j) / delta) *
                                      (WR[ll].array() != 0.0).select(WR[ll].array() * t.array(), 0.0).matrix();
                    (*grad)(idx) = like.gradient_term(dK) + prior_.region.lengthscale_prior(j).d_log_pdf(delta);
                }
                if (prior_.estimate_nuggets) {
                    const Eigen::Index idx = L_ + L_ * p_ + l;
                    (*grad)(idx) = like.gradient_term(nugget_masks_[ll]) + prior_.nugget_prior.d_log_pdf(theta(idx));
                }
            }
            if (!grad->allFinite()) return -kInf;
        }
        return lp;
    }

private:
    double nugget(const Vector& theta, Eigen::Index l) const {
        return prior_.estimate_nuggets ? theta(L_ + L_ * p_ + l) : prior_.region.nugget;
    }

    Vector F_;
    Matrix H_;
    std::vector<Matrix> D_;
    Vector phi_;
    NonstationaryPriorSpec prior_;
    Eigen::Index L_;
    Eigen::Index p_;
    std::vector<Matrix> weights_;
    std::vector<Matrix> nugget_masks_;
};

inline RegionKernelSet region_kernels_from(const Vector& theta, Eigen::Index L, Eigen::Index p, const Vector& phi,
                                           const NonstationaryPriorSpec& prior) {
    RegionKernelSet k;
    for (Eigen::Index l = 0; l < L; ++l) {
        StationaryKernelSpec r;
        r.corr = CorrelationSpec{CorrelationFamily::power_exponential, phi, theta.segment(L + l * p, p)};
        r.variance = theta(l);
        r.nugget = prior.estimate_nuggets ? theta(L + L * p + l) : prior.region.nugget;
        k.regions.push_back(std::move(r));
    }
    return k;
}

}  // namespace detail

/// A single-component mixing function (lambda == 1 everywhere).
inline std::shared_ptr<const MixingFunction> constant_mixing_function(Eigen::Index inputs) {
    return std::make_shared<const MixingFunction>(FeatureMap{inputs, false},
                                                  std::vector<Matrix>{Matrix::Zero(1, inputs)});
}

/// Sample (sigma_l^2, delta_l, optionally tau_l^2) with beta integrated out under the mixture
/// kernel with frozen weights, then draw beta exactly per draw. With one component this is the
/// stationary fit.
inline FittedNonstationaryGP fit_nonstationary(const Ensemble& ens, std::shared_ptr<const MixingFunction> lambda_hat,
                                               const NonstationaryPriorSpec& prior, const SamplerConfig& cfg) {
    ens.validate();
    if (!lambda_hat) throw ArgumentError("fit_nonstationary: mixing function is missing");
    if (lambda_hat->inputs() != ens.dim()) throw ArgumentError("fit_nonstationary: mixing function input dimension mismatch");
    prior.validate(ens.dim());
    detail::check_regression_design(ens);
    const Eigen::Index L = lambda_hat->components();
    const Eigen::Index p = ens.dim();
    const Vector phi = prior.region.exponents_for(p);

    if (L == 1) {
        FittedStationaryGP st = fit_stationary(ens, prior.region, cfg);
        std::vector<RegionKernelSet> params;
        params.reserve(st.params().size());
        for (const auto& k : st.params()) params.push_back(RegionKernelSet{{k}});
        FittedNonstationaryGP fit(MixtureKernelModel{constant_mixing_function(p)}, ens, std::move(params), st.betas(),
                                  st.draws());
        for (const auto& s : st.notices()) fit.add_notice(s);
        fit.add_notice("single region requested: fitted the stationary emulator");
        return fit;
    }

    const Matrix lambda = lambda_hat->evaluate(ens.X);
    auto posterior = std::make_shared<detail::MixtureCollapsedPosterior>(ens, lambda, prior);
    LogDensity density;
    density.value = [posterior](const Vector& t) { return (*posterior)(t, nullptr); };
    density.value_and_gradient = [posterior](const Vector& t, Vector& g) { return (*posterior)(t, &g); };

    ParameterLayout layout;
    layout.add("sigma2", L, Constraint::positive);
    for (Eigen::Index l = 0; l < L; ++l) layout.add("delta_" + std::to_string(l + 1), p, Constraint::positive);
    if (prior.estimate_nuggets) layout.add("tau2", L, Constraint::positive);

    Vector init(layout.dim());
    init.head(L).setOnes();
    for (Eigen::Index l = 0; l < L; ++l)
        for (Eigen::Index j = 0; j < p; ++j) {
            const GammaPrior g = prior.region.lengthscale_prior(j);
            init(L + l * p + j) = g.shape / g.rate;
        }
    if (prior.estimate_nuggets) init.tail(L).setConstant(std::max(prior.region.nugget, 1e-6));

    DrawSet hyper = sample_posterior(density, layout, init, cfg);

    const WeightedPoints train = weighted_points(ens.X, lambda);
    const Matrix H = LinearBasis{p}.design_matrix(ens.X);
    std::vector<RegionKernelSet> params;
    params.reserve(static_cast<std::size_t>(hyper.size()));
    Matrix betas(hyper.size(), p + 1);
    auto rng = detail::coefficient_rng(cfg.seed);
    for (Eigen::Index d = 0; d < hyper.size(); ++d) {
        RegionKernelSet k = detail::region_kernels_from(hyper.draws.row(d).transpose(), L, p, phi, prior);
        CholeskyFactor chol = safe_cholesky(mixture_kernel_matrix(train, train, k));
        betas.row(d) = detail::draw_coefficients(chol, H, ens.F, prior.region.beta_sd, rng).transpose();
        params.push_back(std::move(k));
    }
    DrawSet all = append_coefficients(std::move(hyper), betas, cfg);
    FittedNonstationaryGP fit(MixtureKernelModel{std::move(lambda_hat)}, ens, std::move(params), std::move(betas),
                              std::move(all));
    for (const auto& w : fit.draws().warnings) fit.add_notice(w);
    if (!fit.converged())
        fit.add_notice("unconverged: flagged parameters " + std::to_string(fit.draws().diagnostics.flagged_names().size()));
    return fit;
}

inline PredictiveSummary predict_nonstationary(const FittedNonstationaryGP& fit, const Matrix& Xnew,
                                               bool keep_draws = false) {
    return fit.predict(Xnew, keep_draws);
}

/// Posterior mean lengthscales per region (L x p).
inline Matrix region_lengthscale_means(const FittedNonstationaryGP& fit) {
    const auto& ps = fit.params();
    const Eigen::Index L = ps.front().size();
    Matrix m = Matrix::Zero(L, ps.front().dim());
    for (const auto& k : ps)
        for (Eigen::Index l = 0; l < L; ++l) m.row(l) += k.regions[static_cast<std::size_t>(l)].corr.lengthscales.transpose();
    return m / static_cast<double>(ps.size());
}

}  // namespace nsgp

#endif  // NSGP_NONSTATIONARY_GP_HPP
