#ifndef NSGP_EMULATOR_HPP
#define NSGP_EMULATOR_HPP

// Machinery shared by the stationary and mixture-kernel emulators: the linear mean basis,
// the beta-collapsed Gaussian likelihood used while sampling covariance hyperparameters, and
// FittedEmulator, which caches one factorization per posterior draw and averages predictions
// over draws.

#include "nsgp/core.hpp"
#include "nsgp/kernels.hpp"
#include "nsgp/sampler.hpp"

#include <random>
#include <string>
#include <vector>

namespace nsgp {

/// h(x) = (1, x_1, ..., x_p).
struct LinearBasis {
    Eigen::Index inputs = 1;

    Eigen::Index size() const { return inputs + 1; }

    Vector operator()(const Vector& x) const {
        if (x.size() != inputs) throw ArgumentError("basis: point dimension mismatch");
        Vector h(size());
        h(0) = 1.0;
        h.tail(inputs) = x;
        return h;
    }

    Matrix design_matrix(const Matrix& X) const {
        if (X.cols() != inputs) throw ArgumentError("basis: design dimension mismatch");
        Matrix H(X.rows(), size());
        H.col(0).setOnes();
        H.rightCols(inputs) = X;
        return H;
    }
};

struct PredictiveSummary {
    Vector mean;
    Vector sd;
    /// Optional per-draw conditional means and variances (draws x points).
    Matrix draw_means;
    Matrix draw_vars;

    Vector variance() const { return sd.array().square().matrix(); }
};

enum class LooMode { average_over_draws, posterior_mean };

namespace detail {

/// log N(F; 0, K + beta_sd^2 H H^T), i.e. the Gaussian likelihood with the N(0, beta_sd^2)
/// coefficients integrated out. On success also returns W = C^{-1} and a = C^{-1} F, from
/// which d/dtheta = 0.5 * (a^T dK a - tr(W dK)).
struct CollapsedLikelihood {
    double value = -kInf;
    Matrix W;
    Vector a;

    bool ok() const { return std::isfinite(value); }

    double gradient_term(const Matrix& dK) const {
        return 0.5 * (a.dot(dK * a) - (W.array() * dK.array()).sum());
    }
};

inline CollapsedLikelihood collapsed_likelihood(const Matrix& K, const Matrix& H, const Vector& F, double beta_sd,
                                                bool want_gradient) {
    CollapsedLikelihood out;
    Matrix C = K;
    C.noalias() += (beta_sd * beta_sd) * (H * H.transpose());
    CholeskyFactor chol;
    try {
        chol = safe_cholesky(C);
    } catch (const FactorizationError&) {
        return out;
    }
    Vector y = chol.lower.triangularView<Eigen::Lower>().solve(F);
    const double n = static_cast<double>(F.size());
    out.value = -0.5 * y.squaredNorm() - 0.5 * chol.log_determinant() - n * kLogSqrt2Pi;
    if (want_gradient) {
        out.a = chol.lower.transpose().triangularView<Eigen::Upper>().solve(y);
        out.W = chol.inverse();
    }
    return out;
}

/// Exact draw of beta | F, K under beta ~ N(0, beta_sd^2 I).
inline Vector draw_coefficients(const CholeskyFactor& Kchol, const Matrix& H, const Vector& F, double beta_sd,
                                std::mt19937_64& rng) {
    Matrix KiH = Kchol.solve(H);
    Matrix P = H.transpose() * KiH;
    P.diagonal().array() += 1.0 / (beta_sd * beta_sd);
    Eigen::LLT<Matrix> llt(P);
    if (llt.info() != Eigen::Success) throw NumericalError("coefficient posterior precision is not positive definite");
    Vector mean = llt.solve(KiH.transpose() * F);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector z(mean.size());
    for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = normal(rng);
    Matrix U = llt.matrixU();
    return mean + U.triangularView<Eigen::Upper>().solve(z);
}

}  // namespace detail

/// A fitted Gaussian-process emulator: ensemble, posterior draws of (beta, kernel parameters)
/// and one cached factorization of the training covariance per draw.
///
/// Model must provide
///   using Params; using Points;
///   Points prepare(const Matrix& X) const;
///   Matrix cov(const Params&, const Points& a, const Points& b) const;   // includes nugget indicator
///   Vector prior_var(const Params&, const Points& a) const;              // k(x, x)
///   Params average(const std::vector<Params>&) const;
template <class Model>
class FittedEmulator {
public:
    using Params = typename Model::Params;
    using Points = typename Model::Points;

    FittedEmulator(Model model, Ensemble ensemble, std::vector<Params> params, Matrix betas, DrawSet draws)
        : model_(std::move(model)),
          ensemble_(std::move(ensemble)),
          basis_{ensemble_.dim()},
          params_(std::move(params)),
          betas_(std::move(betas)),
          draws_(std::move(draws)),
          train_(model_.prepare(ensemble_.X)) {
        if (params_.empty()) throw ArgumentError("emulator needs at least one posterior draw");
        if (betas_.rows() != static_cast<Eigen::Index>(params_.size()) || betas_.cols() != basis_.size())
            throw ArgumentError("coefficient draws do not match parameter draws");
        const Matrix H = basis_.design_matrix(ensemble_.X);
        cache_.reserve(params_.size());
        for (std::size_t d = 0; d < params_.size(); ++d) {
            Matrix K = model_.cov(params_[d], train_, train_);
            CholeskyFactor chol = safe_cholesky(K);
            max_jitter_ = std::max(max_jitter_, chol.jitter);
            Vector resid = ensemble_.F - H * betas_.row(static_cast<Eigen::Index>(d)).transpose();
            Vector alpha = chol.solve(resid);
            cache_.push_back({std::move(chol), std::move(alpha)});
        }
        if (max_jitter_ > 0.0)
            notices_.push_back("covariance factorization needed jitter up to " + std::to_string(max_jitter_));
    }

    const Model& model() const { return model_; }
    const Ensemble& ensemble() const { return ensemble_; }
    const LinearBasis& basis() const { return basis_; }
    const std::vector<Params>& params() const { return params_; }
    const Matrix& betas() const { return betas_; }
    const DrawSet& draws() const { return draws_; }
    std::size_t draw_count() const { return params_.size(); }
    double max_jitter() const { return max_jitter_; }
    bool converged() const { return draws_.chains >= 2 && draws_.converged(); }
    const std::vector<std::string>& notices() const { return notices_; }
    void add_notice(std::string s) { notices_.push_back(std::move(s)); }

    /// Posterior predictive mean and sd averaged over draws; the variance is the mean of the
    /// per-draw variances plus the variance of the per-draw means.
    PredictiveSummary predict(const Matrix& Xnew, bool keep_draws = false) const {
        if (Xnew.cols() != ensemble_.dim()) throw ArgumentError("predict: point dimension mismatch");
        const Eigen::Index m = Xnew.rows();
        const Eigen::Index M = static_cast<Eigen::Index>(params_.size());
        const Points pts = model_.prepare(Xnew);
        const Matrix Hnew = basis_.design_matrix(Xnew);

        PredictiveSummary out;
        if (keep_draws) {
            out.draw_means.resize(M, m);
            out.draw_vars.resize(M, m);
        }
        Vector mean_acc = Vector::Zero(m);
        Vector m2_acc = Vector::Zero(m);
        Vector var_acc = Vector::Zero(m);
        for (Eigen::Index d = 0; d < M; ++d) {
            const auto& par = params_[static_cast<std::size_t>(d)];
            const auto& c = cache_[static_cast<std::size_t>(d)];
            Matrix Kx = model_.cov(par, train_, pts);
            Vector mu = Hnew * betas_.row(d).transpose() + Kx.transpose() * c.alpha;
            Matrix V = c.chol.lower.template triangularView<Eigen::Lower>().solve(Kx);
            const Vector prior = model_.prior_var(par, pts);
            Vector var = prior - V.colwise().squaredNorm().transpose();
            for (Eigen::Index j = 0; j < m; ++j) {
                if (var(j) < 0.0) {
                    if (var(j) < -1e-8 * std::max(1.0, prior(j)))
                        throw NumericalError("negative predictive variance " + std::to_string(var(j)));
                    var(j) = 0.0;
                }
            }
            if (keep_draws) {
                out.draw_means.row(d) = mu.transpose();
                out.draw_vars.row(d) = var.transpose();
            }
            const double k = static_cast<double>(d + 1);
            Vector delta = mu - mean_acc;
            mean_acc += delta / k;
            m2_acc += (delta.array() * (mu - mean_acc).array()).matrix();
            var_acc += var;
        }
        out.mean = mean_acc;
        const Vector total = var_acc / static_cast<double>(M) + m2_acc / static_cast<double>(M);
        out.sd = total.array().max(0.0).sqrt().matrix();
        return out;
    }

    /// Closed-form leave-one-out standardized residuals
    ///   e_i = [K^{-1}(F - H beta)]_i / sqrt([K^{-1}]_ii)
    /// per draw, then averaged; or once at the posterior-mean parameters.
    Vector loo_residuals(LooMode mode = LooMode::average_over_draws) const {
        const Matrix H = basis_.design_matrix(ensemble_.X);
        if (mode == LooMode::posterior_mean) {
            Params mean_par = model_.average(params_);
            Vector beta = betas_.colwise().mean().transpose();
            CholeskyFactor chol = safe_cholesky(model_.cov(mean_par, train_, train_));
            return loo_from(chol, ensemble_.F - H * beta);
        }
        Vector acc = Vector::Zero(ensemble_.size());
        for (std::size_t d = 0; d < params_.size(); ++d) {
            Vector resid = ensemble_.F - H * betas_.row(static_cast<Eigen::Index>(d)).transpose();
            acc += loo_from(cache_[d].chol, resid);
        }
        return acc / static_cast<double>(params_.size());
    }

private:
    struct Cache {
        CholeskyFactor chol;
        Vector alpha;
    };

    static Vector loo_from(const CholeskyFactor& chol, const Vector& resid) {
        const Matrix Kinv = chol.inverse();
        const Vector a = Kinv * resid;
        Vector e(resid.size());
        for (Eigen::Index i = 0; i < e.size(); ++i) {
            if (!(Kinv(i, i) > 0.0)) throw NumericalError("nonpositive diagonal in inverse covariance");
            e(i) = a(i) / std::sqrt(Kinv(i, i));
        }
        return e;
    }

    Model model_;
    Ensemble ensemble_;
    LinearBasis basis_;
    std::vector<Params> params_;
    Matrix betas_;
    DrawSet draws_;
    Points train_;
    std::vector<Cache> cache_;
    double max_jitter_ = 0.0;
    std::vector<std::string> notices_;
};

/// Attach exact coefficient draws to a hyperparameter draw set and recompute diagnostics over
/// all columns.
inline DrawSet append_coefficients(DrawSet hyper, const Matrix& betas, const SamplerConfig& cfg) {
    const Eigen::Index d0 = hyper.dim();
    Matrix all(hyper.size(), d0 + betas.cols());
    all.leftCols(d0) = hyper.draws;
    all.rightCols(betas.cols()) = betas;
    hyper.draws = std::move(all);
    for (Eigen::Index k = 0; k < betas.cols(); ++k) hyper.names.push_back("beta[" + std::to_string(k + 1) + "]");
    if (hyper.chains >= 2) hyper.diagnostics = convergence_diagnostics(hyper, cfg.rhat_threshold, cfg.ess_threshold);
    return hyper;
}

}  // namespace nsgp

#endif  // NSGP_EMULATOR_HPP
