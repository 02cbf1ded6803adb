#ifndef NSGP_MIXTURE_HPP
#define NSGP_MIXTURE_HPP

// Finite mixture model for standardized LOO residuals: e_i | s(x_i) = l ~ N(0, zeta_l) with
// softmax mixing weights lambda_l(x) = exp(g(x)^T alpha_l) / sum exp(g(x)^T alpha_l'), the
// allocation s integrated out. Also WAIC and the choice of the number of regions L.

#include "nsgp/core.hpp"
#include "nsgp/distributions.hpp"
#include "nsgp/sampler.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace nsgp {

/// g(x) = (x_1, ..., x_p), optionally with a leading 1.
struct FeatureMap {
    Eigen::Index inputs = 1;
    bool intercept = false;

    Eigen::Index size() const { return inputs + (intercept ? 1 : 0); }

    Vector operator()(const Vector& x) const {
        if (x.size() != inputs) throw ArgumentError("feature map: point dimension mismatch");
        Vector g(size());
        if (intercept) {
            g(0) = 1.0;
            g.tail(inputs) = x;
        } else {
            g = x;
        }
        return g;
    }

    Matrix features(const Matrix& X) const {
        if (X.cols() != inputs) throw ArgumentError("feature map: design dimension mismatch");
        Matrix G(X.rows(), size());
        if (intercept) {
            G.col(0).setOnes();
            G.rightCols(inputs) = X;
        } else {
            G = X;
        }
        return G;
    }
};

/// alpha_lj ~ N(0, 5); zeta_l ~ LogNormal(-1, 1) restricted to zeta_1 <= ... <= zeta_L.
struct MixturePriorSpec {
    NormalPrior coefficient{0.0, 5.0};
    LogNormalPrior scale{-1.0, 1.0};

    void validate() const {
        if (!(coefficient.sd > 0.0)) throw DomainError("mixture coefficient prior sd must be positive");
        if (!(scale.sdlog > 0.0)) throw DomainError("mixture scale prior sdlog must be positive");
    }
};

/// Softmax of A g, A being L x dim(g). Max-subtracted.
inline Vector mixing_weights(const Matrix& A, const Vector& g) {
    if (A.cols() != g.size()) throw ArgumentError("mixing_weights: coefficient columns must equal feature length");
    if (A.rows() < 1) throw ArgumentError("mixing_weights: need at least one component");
    if (!g.allFinite()) throw ArgumentError("mixing_weights: non-finite features");
    Vector eta = A * g;
    if (!eta.allFinite()) throw ArgumentError("mixing_weights: non-finite linear predictor");
    eta.array() -= eta.maxCoeff();
    Vector w = eta.array().exp().matrix();
    return w / w.sum();
}

inline Vector mixing_weights(const Matrix& A, const Vector& x, const FeatureMap& fm) { return mixing_weights(A, fm(x)); }

namespace detail {

/// Row-wise softmax of G A^T (n x L).
inline Matrix softmax_rows(const Matrix& G, const Matrix& A) {
    Matrix eta = G * A.transpose();
    for (Eigen::Index i = 0; i < eta.rows(); ++i) {
        eta.row(i).array() -= eta.row(i).maxCoeff();
        eta.row(i) = eta.row(i).array().exp().matrix();
        eta.row(i) /= eta.row(i).sum();
    }
    return eta;
}

/// log of the max-subtracted softmax, row-wise.
inline Matrix log_softmax_rows(const Matrix& G, const Matrix& A) {
    Matrix eta = G * A.transpose();
    for (Eigen::Index i = 0; i < eta.rows(); ++i) {
        const double lse = log_sum_exp(eta.row(i));
        eta.row(i).array() -= lse;
    }
    return eta;
}

/// Parameter vector layout: alpha (L x q, row-major: alpha[l * q + j]) then zeta (L, ordered).
inline Matrix unpack_coefficients(const Vector& theta, Eigen::Index L, Eigen::Index q) {
    Matrix A(L, q);
    for (Eigen::Index l = 0; l < L; ++l)
        for (Eigen::Index j = 0; j < q; ++j) A(l, j) = theta(l * q + j);
    return A;
}

}  // namespace detail

/// log p(e_i | A, zeta) = log sum_l lambda_l(x_i) N(e_i; 0, zeta_l), for G = g(X).
inline Vector mixture_pointwise_log_likelihood(const Matrix& A, const Vector& zeta, const Vector& e, const Matrix& G) {
    if (A.rows() != zeta.size()) throw ArgumentError("mixture: coefficient rows must equal number of components");
    if (G.rows() != e.size()) throw ArgumentError("mixture: residual count does not match design rows");
    for (Eigen::Index l = 0; l < zeta.size(); ++l)
        if (!(zeta(l) > 0.0)) throw DomainError("mixture: component scales must be positive");
    const Matrix logw = detail::log_softmax_rows(G, A);
    Vector out(e.size());
    Vector terms(zeta.size());
    for (Eigen::Index i = 0; i < e.size(); ++i) {
        for (Eigen::Index l = 0; l < zeta.size(); ++l) terms(l) = logw(i, l) + log_normal_density(e(i), zeta(l));
        out(i) = log_sum_exp(terms);
    }
    return out;
}

/// Log posterior (up to a constant) of (A, zeta) with the allocation integrated out.
inline double mixture_marginal_log_posterior(const Matrix& A, const Vector& zeta, const Vector& e, const Matrix& X,
                                             const MixturePriorSpec& priors, const FeatureMap& fm) {
    if (zeta.size() > 1)
        for (Eigen::Index l = 1; l < zeta.size(); ++l)
            if (zeta(l) < zeta(l - 1)) throw DomainError("mixture: component scales must be ordered");
    double lp = mixture_pointwise_log_likelihood(A, zeta, e, fm.features(X)).sum();
    for (Eigen::Index k = 0; k < A.size(); ++k) lp += priors.coefficient.log_pdf(A.data()[k]);
    for (Eigen::Index l = 0; l < zeta.size(); ++l) lp += priors.scale.log_pdf(zeta(l));
    return lp;
}

inline double mixture_marginal_log_posterior(const Matrix& A, const Vector& zeta, const Vector& e, const Matrix& X,
                                             const MixturePriorSpec& priors) {
    return mixture_marginal_log_posterior(A, zeta, e, X, priors, FeatureMap{X.cols(), false});
}

namespace detail {

class MixturePosterior {
public:
    MixturePosterior(Matrix G, Vector e, Eigen::Index L, MixturePriorSpec priors)
        : G_(std::move(G)), e_(std::move(e)), L_(L), q_(G_.cols()), priors_(priors) {}

    double operator()(const Vector& theta, Vector* grad) const {
        const Matrix A = unpack_coefficients(theta, L_, q_);
        const Vector zeta = theta.tail(L_);
        const Matrix eta = G_ * A.transpose();
        const Eigen::Index n = e_.size();
        double lp = 0.0;
        Matrix dA = Matrix::Zero(L_, q_);
        Vector dz = Vector::Zero(L_);
        Vector lognorm(L_), w(L_), lam(L_);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double m = eta.row(i).maxCoeff();
            lam = (eta.row(i).array() - m).exp().transpose();
            const double lam_sum = lam.sum();
            lam /= lam_sum;
            const double log_norm_lam = m + std::log(lam_sum);
            for (Eigen::Index l = 0; l < L_; ++l) lognorm(l) = eta(i, l) - log_norm_lam + log_normal_density(e_(i), zeta(l));
            const double li = log_sum_exp(lognorm);
            lp += li;
            if (grad) {
                w = (lognorm.array() - li).exp().matrix();
                const double e2 = e_(i) * e_(i);
                for (Eigen::Index l = 0; l < L_; ++l) {
                    dA.row(l) += (w(l) - lam(l)) * G_.row(i);
                    const double z = zeta(l);
                    dz(l) += w(l) * (-1.0 / z + e2 / (z * z * z));
                }
            }
        }
        for (Eigen::Index k = 0; k < L_ * q_; ++k) lp += priors_.coefficient.log_pdf(theta(k));
        for (Eigen::Index l = 0; l < L_; ++l) lp += priors_.scale.log_pdf(zeta(l));
        if (grad) {
            grad->resize(theta.size());
            for (Eigen::Index l = 0; l < L_; ++l)
                for (Eigen::Index j = 0; j < q_; ++j)
                    (*grad)(l * q_ + j) = dA(l, j) + priors_.coefficient.d_log_pdf(theta(l * q_ + j));
            for (Eigen::Index l = 0; l < L_; ++l) (*grad)(L_ * q_ + l) = dz(l) + priors_.scale.d_log_pdf(zeta(l));
            if (!grad->allFinite()) return -kInf;
        }
        return std::isfinite(lp) ? lp : -kInf;
    }

private:
    Matrix G_;
    Vector e_;
    Eigen::Index L_;
    Eigen::Index q_;
    MixturePriorSpec priors_;
};

}  // namespace detail

/// The frozen weight function lambda-hat(x): the average over stored draws of softmax(A_m g(x)).
class MixingFunction {
public:
    MixingFunction() = default;
    MixingFunction(FeatureMap fm, std::vector<Matrix> coefficient_draws)
        : fm_(fm), draws_(std::move(coefficient_draws)) {
        if (draws_.empty()) throw ArgumentError("mixing function needs at least one coefficient draw");
        for (const auto& A : draws_)
            if (A.rows() != draws_.front().rows() || A.cols() != fm_.size())
                throw ArgumentError("mixing function: inconsistent coefficient draw shape");
    }

    Eigen::Index components() const { return draws_.empty() ? 0 : draws_.front().rows(); }
    Eigen::Index inputs() const { return fm_.inputs; }
    const FeatureMap& feature_map() const { return fm_; }
    const std::vector<Matrix>& coefficient_draws() const { return draws_; }

    Vector operator()(const Vector& x) const {
        const Vector g = fm_(x);
        if (!g.allFinite()) throw ArgumentError("mixing function: non-finite input");
        Vector acc = Vector::Zero(components());
        for (const auto& A : draws_) acc += mixing_weights(A, g);
        return acc / static_cast<double>(draws_.size());
    }

    /// lambda-hat at every row of X (n x L).
    Matrix evaluate(const Matrix& X) const {
        const Matrix G = fm_.features(X);
        if (!G.allFinite()) throw ArgumentError("mixing function: non-finite input");
        Matrix acc = Matrix::Zero(X.rows(), components());
        for (const auto& A : draws_) acc += detail::softmax_rows(G, A);
        return acc / static_cast<double>(draws_.size());
    }

private:
    FeatureMap fm_;
    std::vector<Matrix> draws_;
};

struct WaicResult {
    double waic = kInf;
    double lppd = -kInf;
    double p_waic = 0.0;
    Vector pointwise;
};

/// WAIC from a draws x points log-likelihood matrix: -2 (lppd - p_waic), with the per-point
/// variance over draws using the M - 1 divisor (zero for a single draw).
inline WaicResult waic_from_log_likelihood(const Matrix& loglik) {
    const Eigen::Index M = loglik.rows();
    const Eigen::Index n = loglik.cols();
    if (M < 1 || n < 1) throw ArgumentError("waic: empty log-likelihood matrix");
    WaicResult r;
    r.lppd = 0.0;
    r.pointwise.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double li = log_sum_exp(loglik.col(i)) - std::log(static_cast<double>(M));
        if (!std::isfinite(li))
            throw NumericalError("waic: zero predictive density for residual " + std::to_string(i + 1));
        double v = 0.0;
        if (M > 1) {
            const double mean = loglik.col(i).mean();
            v = (loglik.col(i).array() - mean).square().sum() / static_cast<double>(M - 1);
        }
        r.lppd += li;
        r.p_waic += v;
        r.pointwise(i) = -2.0 * (li - v);
    }
    r.waic = -2.0 * (r.lppd - r.p_waic);
    return r;
}

struct MixtureFit {
    Eigen::Index L = 1;
    FeatureMap feature_map;
    MixturePriorSpec priors;
    DrawSet draws;
    /// Per draw: L x dim(g) coefficients, and the ordered scales (draws x L).
    std::vector<Matrix> coefficients;
    Matrix scales;
    MixingFunction lambda_hat;
    WaicResult waic;

    bool converged() const { return draws.chains >= 2 && draws.converged(); }
};

/// Pointwise log-likelihood over all stored draws (draws x n).
inline Matrix mixture_log_likelihood_matrix(const MixtureFit& fit, const Vector& e, const Matrix& X) {
    const Matrix G = fit.feature_map.features(X);
    Matrix ll(static_cast<Eigen::Index>(fit.coefficients.size()), e.size());
    for (std::size_t m = 0; m < fit.coefficients.size(); ++m)
        ll.row(static_cast<Eigen::Index>(m)) =
            mixture_pointwise_log_likelihood(fit.coefficients[m], fit.scales.row(static_cast<Eigen::Index>(m)).transpose(), e, G)
                .transpose();
    return ll;
}

inline WaicResult waic(const MixtureFit& fit, const Vector& e, const Matrix& X) {
    if (e.size() != X.rows()) throw ArgumentError("waic: residual count does not match design rows");
    return waic_from_log_likelihood(mixture_log_likelihood_matrix(fit, e, X));
}

inline MixtureFit fit_mixture(const Matrix& X, const Vector& e, Eigen::Index L, const MixturePriorSpec& priors,
                              const SamplerConfig& cfg, const FeatureMap& fm) {
    if (L < 1) throw ArgumentError("mixture: L must be at least 1");
    if (X.rows() != e.size()) throw ArgumentError("mixture: residual count does not match design rows");
    if (fm.inputs != X.cols()) throw ArgumentError("mixture: feature map dimension does not match design");
    if (e.size() < 5 * L)
        throw ArgumentError("mixture: need at least 5 residuals per component (n = " + std::to_string(e.size()) +
                            ", L = " + std::to_string(L) + ")");
    if (!e.allFinite() || !X.allFinite()) throw ArgumentError("mixture: non-finite residuals or inputs");
    priors.validate();
    const Eigen::Index q = fm.size();

    auto post = std::make_shared<detail::MixturePosterior>(fm.features(X), e, L, priors);
    LogDensity density;
    density.value = [post](const Vector& t) { return (*post)(t, nullptr); };
    density.value_and_gradient = [post](const Vector& t, Vector& g) { return (*post)(t, &g); };

    ParameterLayout layout;
    layout.add("alpha", L * q, Constraint::real).add("zeta", L, Constraint::positive_ordered);

    Vector init = Vector::Zero(L * q + L);
    const double rms = std::max(std::sqrt(e.squaredNorm() / static_cast<double>(e.size())), 1e-3);
    for (Eigen::Index l = 0; l < L; ++l) {
        const double t = L == 1 ? 0.0 : -0.5 + static_cast<double>(l) / static_cast<double>(L - 1);
        init(L * q + l) = rms * std::exp(t);
    }

    MixtureFit fit;
    fit.L = L;
    fit.feature_map = fm;
    fit.priors = priors;
    fit.draws = sample_posterior(density, layout, init, cfg);
    const Eigen::Index M = fit.draws.size();
    fit.coefficients.reserve(static_cast<std::size_t>(M));
    fit.scales.resize(M, L);
    for (Eigen::Index m = 0; m < M; ++m) {
        const Vector theta = fit.draws.draws.row(m).transpose();
        fit.coefficients.push_back(detail::unpack_coefficients(theta, L, q));
        fit.scales.row(m) = theta.tail(L).transpose();
    }
    fit.lambda_hat = MixingFunction(fm, fit.coefficients);
    fit.waic = waic(fit, e, X);
    return fit;
}

inline MixtureFit fit_mixture(const Matrix& X, const Vector& e, Eigen::Index L, const MixturePriorSpec& priors,
                              const SamplerConfig& cfg) {
    return fit_mixture(X, e, L, priors, cfg, FeatureMap{X.cols(), false});
}

struct SelectionOptions {
    Eigen::Index L_max = 4;
    double threshold = 2.0;
    bool extend = true;
    FeatureMap feature_map{1, false};
};

struct ModelSelectionReport {
    std::vector<Eigen::Index> candidates;
    /// NaN for candidates that were infeasible (n < 5L) or failed.
    std::vector<double> waic;
    std::vector<bool> converged;
    std::vector<std::string> warnings;
    Eigen::Index selected = 1;
    bool extended = false;
    /// True when no candidate converged and the selection used unconverged fits.
    bool selected_unconverged = false;
    std::vector<MixtureFit> fits;

    /// WAIC(L) - WAIC(L + 1) for consecutive candidates.
    std::vector<double> improvements() const {
        std::vector<double> d;
        for (std::size_t k = 1; k < waic.size(); ++k) d.push_back(waic[k - 1] - waic[k]);
        return d;
    }

    const MixtureFit* fit_for(Eigen::Index L) const {
        for (const auto& f : fits)
            if (f.L == L) return &f;
        return nullptr;
    }
};

namespace detail {

inline SamplerConfig candidate_config(const SamplerConfig& cfg, Eigen::Index L) {
    SamplerConfig c = cfg;
    c.seed = cfg.seed + 104729u * static_cast<std::uint64_t>(L);
    return c;
}

/// Smallest L whose WAIC is within `threshold` of the minimum over the eligible candidates.
inline std::optional<std::size_t> within_threshold(const std::vector<double>& waic, const std::vector<bool>& eligible,
                                                   double threshold) {
    double best = kInf;
    for (std::size_t k = 0; k < waic.size(); ++k)
        if (eligible[k] && std::isfinite(waic[k])) best = std::min(best, waic[k]);
    if (!std::isfinite(best)) return std::nullopt;
    for (std::size_t k = 0; k < waic.size(); ++k)
        if (eligible[k] && std::isfinite(waic[k]) && waic[k] <= best + threshold) return k;
    return std::nullopt;
}

}  // namespace detail

/// Fit L = 1..L_max, select the smallest L within `threshold` WAIC units of the minimum over
/// converged candidates. When the minimum sits at L_max, two more candidates are fitted first.
inline ModelSelectionReport select_regions(const Matrix& X, const Vector& e, const MixturePriorSpec& priors,
                                           const SamplerConfig& cfg, SelectionOptions opt) {
    if (opt.L_max < 1) throw ArgumentError("select_regions: L_max must be at least 1");
    if (!(opt.threshold >= 0.0)) throw ArgumentError("select_regions: threshold must be nonnegative");
    if (opt.feature_map.inputs != X.cols()) opt.feature_map.inputs = X.cols();
    ModelSelectionReport rep;

    auto run = [&](Eigen::Index L) {
        rep.candidates.push_back(L);
        if (e.size() < 5 * L) {
            rep.waic.push_back(std::numeric_limits<double>::quiet_NaN());
            rep.converged.push_back(false);
            rep.warnings.push_back("L = " + std::to_string(L) + ": skipped, fewer than 5 residuals per component");
            return;
        }
        try {
            MixtureFit f = fit_mixture(X, e, L, priors, detail::candidate_config(cfg, L), opt.feature_map);
            rep.waic.push_back(f.waic.waic);
            rep.converged.push_back(f.converged());
            if (!f.converged()) {
                std::string names;
                for (const auto& s : f.draws.diagnostics.flagged_names()) names += (names.empty() ? "" : ", ") + s;
                rep.warnings.push_back("L = " + std::to_string(L) + ": unconverged (" + names + "), excluded");
            }
            rep.fits.push_back(std::move(f));
        } catch (const NumericalError& err) {
            rep.waic.push_back(std::numeric_limits<double>::quiet_NaN());
            rep.converged.push_back(false);
            rep.warnings.push_back("L = " + std::to_string(L) + ": " + err.what());
        }
    };

    for (Eigen::Index L = 1; L <= opt.L_max; ++L) run(L);

    auto argmin = [&](const std::vector<bool>& eligible) {
        std::optional<std::size_t> k;
        for (std::size_t i = 0; i < rep.waic.size(); ++i)
            if (eligible[i] && std::isfinite(rep.waic[i]) && (!k || rep.waic[i] < rep.waic[*k])) k = i;
        return k;
    };

    std::vector<bool> eligible = rep.converged;
    if (opt.extend) {
        auto k = argmin(eligible);
        if (k && rep.candidates[*k] == opt.L_max) {
            rep.extended = true;
            run(opt.L_max + 1);
            run(opt.L_max + 2);
            eligible = rep.converged;
        }
    }

    auto pick = detail::within_threshold(rep.waic, eligible, opt.threshold);
    if (!pick) {
        std::vector<bool> all(rep.waic.size(), true);
        pick = detail::within_threshold(rep.waic, all, opt.threshold);
        if (!pick) throw NumericalError("select_regions: no candidate produced a finite WAIC");
        rep.selected_unconverged = true;
        rep.warnings.push_back("no candidate converged; selection uses unconverged fits");
    }
    rep.selected = rep.candidates[*pick];
    return rep;
}

inline ModelSelectionReport select_regions(const Matrix& X, const Vector& e, Eigen::Index L_max,
                                           const MixturePriorSpec& priors, const SamplerConfig& cfg) {
    SelectionOptions opt;
    opt.L_max = L_max;
    opt.feature_map = FeatureMap{X.cols(), false};
    return select_regions(X, e, priors, cfg, opt);
}

}  // namespace nsgp

#endif  // NSGP_MIXTURE_HPP
