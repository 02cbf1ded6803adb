#ifndef NSGP_SAMPLER_HPP
#define NSGP_SAMPLER_HPP

// Generic MCMC engine: constrained parameter layouts, a multinomial no-U-turn sampler with
// windowed step-size / diagonal-metric adaptation, an adaptive random-walk Metropolis
// fallback, and rank-normalized split-Rhat / ESS diagnostics.

#include "nsgp/core.hpp"
#include "nsgp/distributions.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace nsgp {

enum class Constraint { real, positive, positive_ordered };

struct ParameterBlock {
    std::string name;
    Eigen::Index size = 1;
    Constraint constraint = Constraint::real;
};

/// Ordered list of named parameter blocks and the bijections between the constrained
/// parameter vector and the unconstrained space the samplers move in.
class ParameterLayout {
public:
    ParameterLayout& add(std::string name, Eigen::Index size, Constraint constraint) {
        if (size < 1) throw ArgumentError("parameter block '" + name + "' must have positive size");
        blocks_.push_back({std::move(name), size, constraint});
        dim_ += size;
        return *this;
    }

    Eigen::Index dim() const { return dim_; }
    const std::vector<ParameterBlock>& blocks() const { return blocks_; }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& b : blocks_) {
            if (b.size == 1) {
                out.push_back(b.name);
            } else {
                for (Eigen::Index k = 0; k < b.size; ++k) out.push_back(b.name + "[" + std::to_string(k + 1) + "]");
            }
        }
        return out;
    }

    Vector constrain(const Vector& u) const {
        check_size(u);
        Vector theta(dim_);
        Eigen::Index o = 0;
        for (const auto& b : blocks_) {
            switch (b.constraint) {
                case Constraint::real:
                    theta.segment(o, b.size) = u.segment(o, b.size);
                    break;
                case Constraint::positive:
                    theta.segment(o, b.size) = u.segment(o, b.size).array().exp();
                    break;
                case Constraint::positive_ordered: {
                    double acc = 0.0;
                    for (Eigen::Index k = 0; k < b.size; ++k) {
                        acc += std::exp(u(o + k));
                        theta(o + k) = acc;
                    }
                    break;
                }
            }
            o += b.size;
        }
        return theta;
    }

    Vector unconstrain(const Vector& theta) const {
        check_size(theta);
        if (!satisfies(theta)) throw DomainError("parameter vector violates its declared constraints");
        Vector u(dim_);
        Eigen::Index o = 0;
        for (const auto& b : blocks_) {
            switch (b.constraint) {
                case Constraint::real:
                    u.segment(o, b.size) = theta.segment(o, b.size);
                    break;
                case Constraint::positive:
                    u.segment(o, b.size) = theta.segment(o, b.size).array().log();
                    break;
                case Constraint::positive_ordered:
                    u(o) = std::log(theta(o));
                    for (Eigen::Index k = 1; k < b.size; ++k) u(o + k) = std::log(theta(o + k) - theta(o + k - 1));
                    break;
            }
            o += b.size;
        }
        return u;
    }

    /// Strict positivity and strict ordering, as produced by constrain().
    bool satisfies(const Vector& theta) const {
        if (theta.size() != dim_) return false;
        Eigen::Index o = 0;
        for (const auto& b : blocks_) {
            for (Eigen::Index k = 0; k < b.size; ++k) {
                const double v = theta(o + k);
                if (!std::isfinite(v)) return false;
                if (b.constraint != Constraint::real && !(v > 0.0)) return false;
                if (b.constraint == Constraint::positive_ordered && k > 0 && !(v > theta(o + k - 1))) return false;
            }
            o += b.size;
        }
        return true;
    }

    /// Non-strict check used on stored draws, where rounding may collapse adjacent ordered values.
    bool satisfies_weak(const Vector& theta) const {
        if (theta.size() != dim_) return false;
        Eigen::Index o = 0;
        for (const auto& b : blocks_) {
            for (Eigen::Index k = 0; k < b.size; ++k) {
                const double v = theta(o + k);
                if (!std::isfinite(v)) return false;
                if (b.constraint != Constraint::real && !(v > 0.0)) return false;
                if (b.constraint == Constraint::positive_ordered && k > 0 && v < theta(o + k - 1)) return false;
            }
            o += b.size;
        }
        return true;
    }

    double log_jacobian(const Vector& u) const {
        double lj = 0.0;
        Eigen::Index o = 0;
        for (const auto& b : blocks_) {
            if (b.constraint != Constraint::real) lj += u.segment(o, b.size).sum();
            o += b.size;
        }
        return lj;
    }

    /// Chain rule: gradient of log p(constrain(u)) + log|J(u)| from the constrained gradient.
    Vector unconstrained_gradient(const Vector& u, const Vector& theta, const Vector& grad_theta) const {
        Vector g(dim_);
        Eigen::Index o = 0;
        for (const auto& b : blocks_) {
            switch (b.constraint) {
                case Constraint::real:
                    g.segment(o, b.size) = grad_theta.segment(o, b.size);
                    break;
                case Constraint::positive:
                    g.segment(o, b.size) =
                        (grad_theta.segment(o, b.size).array() * theta.segment(o, b.size).array()).matrix();
                    g.segment(o, b.size).array() += 1.0;
                    break;
                case Constraint::positive_ordered: {
                    double tail = 0.0;
                    for (Eigen::Index k = b.size - 1; k >= 0; --k) {
                        tail += grad_theta(o + k);
                        g(o + k) = std::exp(u(o + k)) * tail + 1.0;
                    }
                    break;
                }
            }
            o += b.size;
        }
        return g;
    }

private:
    void check_size(const Vector& v) const {
        if (v.size() != dim_) throw ArgumentError("parameter vector length does not match layout");
    }

    std::vector<ParameterBlock> blocks_;
    Eigen::Index dim_ = 0;
};

/// Log density over the constrained parameter vector. The gradient callable is optional;
/// without it only the random-walk kernel is available. Both must be safe to call repeatedly
/// and return -inf (not throw) for states the model rejects.
struct LogDensity {
    std::function<double(const Vector&)> value;
    std::function<double(const Vector&, Vector&)> value_and_gradient;
};

enum class SamplerKernel { automatic, nuts, adaptive_metropolis };

struct SamplerConfig {
    int chains = 4;
    int warmup_iters = 1000;
    int keep_iters = 1000;
    std::uint64_t seed = 1;
    double target_accept = 0.8;
    int max_tree_depth = 10;
    SamplerKernel kernel = SamplerKernel::automatic;
    /// Chains start at the supplied init plus uniform(-r, r) noise in unconstrained space.
    double init_radius = 0.5;
    double rhat_threshold = 1.05;
    double ess_threshold = 100.0;

    void validate() const {
        if (chains < 1) throw ArgumentError("sampler needs at least one chain");
        if (warmup_iters < 0) throw ArgumentError("warmup_iters must be nonnegative");
        if (keep_iters < 4) throw ArgumentError("keep_iters must be at least 4");
        if (!(target_accept > 0.0 && target_accept < 1.0)) throw ArgumentError("target_accept must lie in (0, 1)");
        if (max_tree_depth < 1) throw ArgumentError("max_tree_depth must be positive");
    }
};

struct ConvergenceReport {
    std::vector<std::string> names;
    Vector rhat;
    Vector ess;
    double rhat_threshold = 1.05;
    double ess_threshold = 100.0;

    bool flagged(Eigen::Index k) const {
        return !(rhat(k) <= rhat_threshold) || !(ess(k) >= ess_threshold);
    }

    std::vector<std::string> flagged_names() const {
        std::vector<std::string> out;
        for (Eigen::Index k = 0; k < rhat.size(); ++k)
            if (flagged(k)) out.push_back(names[static_cast<std::size_t>(k)]);
        return out;
    }

    bool converged() const { return flagged_names().empty(); }

    double max_rhat() const { return rhat.size() ? rhat.maxCoeff() : 1.0; }
    double min_ess() const { return ess.size() ? ess.minCoeff() : 0.0; }
};

struct ChainInfo {
    std::string kernel;
    double step_size = 0.0;
    double mean_accept = 0.0;
    int divergences = 0;
};

/// Posterior draws in constrained space, stored chain-major: rows [c*keep, (c+1)*keep) belong
/// to chain c.
struct DrawSet {
    std::vector<std::string> names;
    Matrix draws;
    int chains = 0;
    int keep_per_chain = 0;
    std::vector<ChainInfo> chain_info;
    ConvergenceReport diagnostics;
    std::vector<std::string> warnings;

    Eigen::Index size() const { return draws.rows(); }
    Eigen::Index dim() const { return draws.cols(); }
    int chain_of(Eigen::Index row) const { return static_cast<int>(row / keep_per_chain); }

    /// keep_per_chain x chains matrix for one parameter.
    Matrix by_chain(Eigen::Index param) const {
        Matrix m(keep_per_chain, chains);
        for (int c = 0; c < chains; ++c)
            m.col(c) = draws.col(param).segment(static_cast<Eigen::Index>(c) * keep_per_chain, keep_per_chain);
        return m;
    }

    bool converged() const { return diagnostics.converged(); }
    int divergences() const {
        int d = 0;
        for (const auto& c : chain_info) d += c.divergences;
        return d;
    }
};

namespace diagnostics {

/// Ranks with ties averaged, 1-based.
inline Vector average_ranks(const Vector& v) {
    const Eigen::Index n = v.size();
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return v(a) < v(b); });
    Vector r(n);
    Eigen::Index i = 0;
    while (i < n) {
        Eigen::Index j = i;
        while (j + 1 < n && v(idx[static_cast<std::size_t>(j + 1)]) == v(idx[static_cast<std::size_t>(i)])) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (Eigen::Index k = i; k <= j; ++k) r(idx[static_cast<std::size_t>(k)]) = avg;
        i = j + 1;
    }
    return r;
}

/// Normal scores of the pooled ranks (Blom offset), same shape as the input.
inline Matrix rank_normalize(const Matrix& chains) {
    const Eigen::Index S = chains.size();
    Vector flat = Eigen::Map<const Vector>(chains.data(), S);
    Vector r = average_ranks(flat);
    Matrix z(chains.rows(), chains.cols());
    for (Eigen::Index k = 0; k < S; ++k)
        z.data()[k] = normal_quantile((r(k) - 0.375) / (static_cast<double>(S) + 0.25));
    return z;
}

/// Halve every chain (dropping the middle draw when the length is odd).
inline Matrix split_chains(const Matrix& chains) {
    const Eigen::Index n = chains.rows() / 2;
    const Eigen::Index off = chains.rows() - n;
    Matrix out(n, 2 * chains.cols());
    for (Eigen::Index c = 0; c < chains.cols(); ++c) {
        out.col(2 * c) = chains.col(c).head(n);
        out.col(2 * c + 1) = chains.col(c).segment(off, n);
    }
    return out;
}

/// Classic potential scale reduction on already-split chains (rows = draws).
inline double rhat_basic(const Matrix& chains) {
    const double n = static_cast<double>(chains.rows());
    const Eigen::Index m = chains.cols();
    Vector means = chains.colwise().mean().transpose();
    Vector vars(m);
    for (Eigen::Index c = 0; c < m; ++c) vars(c) = (chains.col(c).array() - means(c)).square().sum() / (n - 1.0);
    const double W = vars.mean();
    const double B_over_n = m > 1 ? (means.array() - means.mean()).square().sum() / static_cast<double>(m - 1) : 0.0;
    if (W <= 0.0) return B_over_n > 0.0 ? kInf : 1.0;
    return std::sqrt(((n - 1.0) / n * W + B_over_n) / W);
}

/// Rank-normalized split-Rhat: max of the bulk and folded (tail) versions.
inline double split_rhat(const Matrix& chains) {
    if (chains.cols() < 2) throw ArgumentError("split-Rhat requires at least two chains");
    Matrix split = split_chains(chains);
    const double bulk = rhat_basic(rank_normalize(split));
    Vector flat = Eigen::Map<const Vector>(split.data(), split.size());
    std::vector<double> sorted(flat.data(), flat.data() + flat.size());
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
    const double median = sorted[sorted.size() / 2];
    Matrix folded = (split.array() - median).abs().matrix();
    const double tail = rhat_basic(rank_normalize(folded));
    return std::max(bulk, tail);
}

/// Effective sample size with Geyer's initial monotone sequence over multiple chains
/// (rows = draws, columns = chains).
inline double ess_basic(const Matrix& chains) {
    const Eigen::Index n = chains.rows();
    const Eigen::Index m = chains.cols();
    if (n < 4) return 0.0;
    const double dn = static_cast<double>(n);
    Matrix acov(n, m);
    Vector means(m);
    for (Eigen::Index c = 0; c < m; ++c) {
        means(c) = chains.col(c).mean();
        Vector x = chains.col(c).array() - means(c);
        for (Eigen::Index lag = 0; lag < n; ++lag) {
            acov(lag, c) = x.head(n - lag).dot(x.tail(n - lag)) / dn;
        }
    }
    const double mean_var = acov.row(0).mean() * dn / (dn - 1.0);
    double var_plus = mean_var * (dn - 1.0) / dn;
    if (m > 1) var_plus += (means.array() - means.mean()).square().sum() / static_cast<double>(m - 1);
    if (!(var_plus > 0.0)) return static_cast<double>(n * m);

    Vector acov_mean = acov.rowwise().mean();
    Vector rho = Vector::Zero(n);
    double rho_even = 1.0;
    rho(0) = rho_even;
    double rho_odd = 1.0 - (mean_var - acov_mean(1)) / var_plus;
    rho(1) = rho_odd;
    Eigen::Index t = 1;
    while (t < n - 4 && (rho_even + rho_odd) > 0.0) {
        rho_even = 1.0 - (mean_var - acov_mean(t + 1)) / var_plus;
        rho_odd = 1.0 - (mean_var - acov_mean(t + 2)) / var_plus;
        if ((rho_even + rho_odd) >= 0.0) {
            rho(t + 1) = rho_even;
            rho(t + 2) = rho_odd;
        }
        t += 2;
    }
    const Eigen::Index max_t = t;
    if (rho_even > 0.0 && max_t + 1 < n) rho(max_t + 1) = rho_even;
    for (Eigen::Index s = 1; s + 3 <= max_t; s += 2) {
        if (rho(s + 1) + rho(s + 2) > rho(s - 1) + rho(s)) {
            rho(s + 1) = 0.5 * (rho(s - 1) + rho(s));
            rho(s + 2) = rho(s + 1);
        }
    }
    const double total = static_cast<double>(n * m);
    double tau = -1.0 + 2.0 * rho.head(max_t).sum() + (max_t + 1 < n ? rho(max_t + 1) : 0.0);
    tau = std::max(tau, 1.0 / std::log10(total));
    return total / tau;
}

/// Bulk ESS: rank-normalized split chains.
inline double bulk_ess(const Matrix& chains) { return ess_basic(rank_normalize(split_chains(chains))); }

}  // namespace diagnostics

inline ConvergenceReport convergence_diagnostics(const DrawSet& set, double rhat_threshold = 1.05,
                                                 double ess_threshold = 100.0) {
    if (set.chains < 2) throw ArgumentError("convergence diagnostics require at least two chains");
    ConvergenceReport rep;
    rep.names = set.names;
    rep.rhat_threshold = rhat_threshold;
    rep.ess_threshold = ess_threshold;
    rep.rhat.resize(set.dim());
    rep.ess.resize(set.dim());
    for (Eigen::Index k = 0; k < set.dim(); ++k) {
        Matrix ch = set.by_chain(k);
        rep.rhat(k) = diagnostics::split_rhat(ch);
        rep.ess(k) = diagnostics::bulk_ess(ch);
    }
    return rep;
}

namespace detail {

struct NanGradient : std::runtime_error {
    NanGradient() : std::runtime_error("non-finite gradient at a finite log density") {}
};

/// The target seen by the kernels: log density in unconstrained coordinates including the
/// log-Jacobian of the transform.
class UnconstrainedTarget {
public:
    UnconstrainedTarget(const LogDensity& density, const ParameterLayout& layout)
        : density_(density), layout_(layout) {}

    Eigen::Index dim() const { return layout_.dim(); }
    bool has_gradient() const { return static_cast<bool>(density_.value_and_gradient); }

    double value(const Vector& u) const {
        Vector theta = layout_.constrain(u);
        if (!layout_.satisfies_weak(theta)) return -kInf;
        double lp = density_.value ? density_.value(theta) : value_via_gradient(theta);
        if (std::isnan(lp)) return -kInf;
        return lp + layout_.log_jacobian(u);
    }

    double value_and_gradient(const Vector& u, Vector& grad_u) const {
        Vector theta = layout_.constrain(u);
        if (!layout_.satisfies_weak(theta)) {
            grad_u = Vector::Zero(dim());
            return -kInf;
        }
        Vector g(dim());
        double lp = density_.value_and_gradient(theta, g);
        if (!std::isfinite(lp)) {
            grad_u = Vector::Zero(dim());
            return -kInf;
        }
        grad_u = layout_.unconstrained_gradient(u, theta, g);
        if (grad_u.hasNaN()) throw NanGradient();
        if (!grad_u.allFinite()) {
            grad_u = Vector::Zero(dim());
            return -kInf;
        }
        return lp + layout_.log_jacobian(u);
    }

private:
    double value_via_gradient(const Vector& theta) const {
        Vector g(dim());
        return density_.value_and_gradient(theta, g);
    }

    const LogDensity& density_;
    const ParameterLayout& layout_;
};

/// Windowed warm-up schedule: fast initial buffer, doubling slow windows for the metric,
/// terminal buffer for the final step size.
class WarmupWindows {
public:
    explicit WarmupWindows(int num_warmup) : num_warmup_(num_warmup) {
        if (num_warmup_ < 20) {
            enabled_ = false;
            return;
        }
        if (init_buffer_ + base_window_ + term_buffer_ > num_warmup_) {
            init_buffer_ = static_cast<int>(0.15 * num_warmup_);
            term_buffer_ = static_cast<int>(0.1 * num_warmup_);
            base_window_ = num_warmup_ - (init_buffer_ + term_buffer_);
        }
        window_size_ = base_window_;
        next_window_ = init_buffer_ + window_size_ - 1;
    }

    bool in_window() const {
        return enabled_ && counter_ >= init_buffer_ && counter_ < num_warmup_ - term_buffer_ && counter_ != num_warmup_;
    }

    bool end_of_window() const { return enabled_ && counter_ == next_window_ && counter_ != num_warmup_; }

    void advance() {
        if (end_of_window()) compute_next_window();
        ++counter_;
    }

private:
    void compute_next_window() {
        if (next_window_ == num_warmup_ - term_buffer_ - 1) return;
        window_size_ *= 2;
        next_window_ = counter_ + window_size_;
        if (next_window_ != num_warmup_ - term_buffer_ - 1) {
            const int next_boundary = next_window_ + 2 * window_size_;
            if (next_boundary >= num_warmup_ - term_buffer_) next_window_ = num_warmup_ - term_buffer_ - 1;
        }
    }

    int num_warmup_;
    bool enabled_ = true;
    int init_buffer_ = 75;
    int term_buffer_ = 50;
    int base_window_ = 25;
    int window_size_ = 25;
    int next_window_ = 0;
    int counter_ = 0;
};

class DualAveraging {
public:
    explicit DualAveraging(double delta) : delta_(delta) {}

    void restart(double step) {
        counter_ = 0;
        s_bar_ = 0.0;
        x_bar_ = 0.0;
        mu_ = std::log(10.0 * step);
    }

    double learn(double accept_stat) {
        ++counter_;
        accept_stat = std::min(1.0, accept_stat);
        const double c = static_cast<double>(counter_);
        const double eta = 1.0 / (c + t0_);
        s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - accept_stat);
        const double x = mu_ - s_bar_ * std::sqrt(c) / gamma_;
        const double x_eta = std::pow(c, -kappa_);
        x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
        return std::exp(x);
    }

    double final_step() const { return std::exp(x_bar_); }

private:
    double delta_;
    double gamma_ = 0.05;
    double t0_ = 10.0;
    double kappa_ = 0.75;
    double mu_ = 0.0;
    double s_bar_ = 0.0;
    double x_bar_ = 0.0;
    int counter_ = 0;
};

class WelfordVariance {
public:
    explicit WelfordVariance(Eigen::Index d) : mean_(Vector::Zero(d)), m2_(Vector::Zero(d)) {}

    void add(const Vector& x) {
        ++n_;
        Vector delta = x - mean_;
        mean_ += delta / static_cast<double>(n_);
        m2_ += (delta.array() * (x - mean_).array()).matrix();
    }

    /// Shrunk toward 1e-3 as in the usual diagonal metric regularization.
    Vector regularized_variance() const {
        const double n = static_cast<double>(n_);
        Vector var = m2_ / std::max(n - 1.0, 1.0);
        return (n / (n + 5.0)) * var.array() + 1e-3 * (5.0 / (n + 5.0));
    }

    void restart() {
        n_ = 0;
        mean_.setZero();
        m2_.setZero();
    }

private:
    long n_ = 0;
    Vector mean_;
    Vector m2_;
};

struct PhasePoint {
    Vector q;
    Vector p;
    Vector grad;
    double logp = -kInf;
};

struct Trajectory {
    PhasePoint minus;  // earliest in time
    PhasePoint plus;   // latest in time
    PhasePoint proposal;
    Vector rho;
    double log_weight = -kInf;
    double sum_accept = 0.0;
    int n_leapfrog = 0;
    bool valid = true;
    bool divergent = false;
};

class Nuts {
public:
    Nuts(const UnconstrainedTarget& target, std::mt19937_64& rng, int max_depth)
        : target_(target), rng_(rng), max_depth_(max_depth), inv_metric_(Vector::Ones(target.dim())) {}

    double step_size = 1.0;

    void set_inv_metric(const Vector& v) { inv_metric_ = v; }

    PhasePoint make_point(const Vector& q) const {
        PhasePoint z;
        z.q = q;
        z.logp = target_.value_and_gradient(q, z.grad);
        return z;
    }

    struct Result {
        PhasePoint point;
        double accept_stat = 0.0;
        bool divergent = false;
    };

    Result transition(const PhasePoint& start) {
        PhasePoint z0 = start;
        z0.p = sample_momentum();
        const double H0 = hamiltonian(z0);

        Trajectory traj;
        traj.minus = z0;
        traj.plus = z0;
        traj.proposal = z0;
        traj.rho = z0.p;
        traj.log_weight = 0.0;

        double sum_accept = 0.0;
        int n_leapfrog = 0;
        bool divergent = false;

        for (int depth = 0; depth < max_depth_; ++depth) {
            const int dir = uniform_(rng_) > 0.5 ? 1 : -1;
            const PhasePoint& edge = dir > 0 ? traj.plus : traj.minus;
            Trajectory sub = build_tree(edge, dir, depth, H0);
            sum_accept += sub.sum_accept;
            n_leapfrog += sub.n_leapfrog;
            if (sub.divergent) divergent = true;
            if (!sub.valid) break;

            if (sub.log_weight > traj.log_weight ||
                uniform_(rng_) < std::exp(sub.log_weight - traj.log_weight)) {
                traj.proposal = sub.proposal;
            }
            traj.log_weight = log_sum_exp(traj.log_weight, sub.log_weight);

            const bool keep_going = dir > 0 ? merge(traj, sub, traj) : merge(sub, traj, traj);
            if (!keep_going) break;
        }
        Result r;
        r.point = traj.proposal;
        r.point.p.resize(0);
        r.accept_stat = n_leapfrog > 0 ? sum_accept / n_leapfrog : 0.0;
        r.divergent = divergent;
        return r;
    }

    /// Doubling/halving heuristic for a reasonable initial step size.
    void init_step_size(const PhasePoint& start) {
        PhasePoint z = start;
        z.p = sample_momentum();
        double H0 = hamiltonian(z);
        PhasePoint z1 = leapfrog(z, step_size);
        double delta_H = H0 - hamiltonian(z1);
        const int direction = delta_H > std::log(0.8) ? 1 : -1;
        for (int it = 0; it < 100; ++it) {
            z = start;
            z.p = sample_momentum();
            H0 = hamiltonian(z);
            z1 = leapfrog(z, step_size);
            delta_H = H0 - hamiltonian(z1);
            if (direction == 1 && !(delta_H > std::log(0.8))) break;
            if (direction == -1 && !(delta_H < std::log(0.8))) break;
            step_size = direction == 1 ? 2.0 * step_size : 0.5 * step_size;
            if (step_size > 1e7 || step_size < 1e-12) break;
        }
        step_size = std::clamp(step_size, 1e-12, 1e7);
    }

private:
    Vector sample_momentum() {
        Vector p(target_.dim());
        for (Eigen::Index k = 0; k < p.size(); ++k) p(k) = normal_(rng_) / std::sqrt(inv_metric_(k));
        return p;
    }

    double hamiltonian(const PhasePoint& z) const {
        const double kinetic = 0.5 * (z.p.array().square() * inv_metric_.array()).sum();
        const double H = -z.logp + kinetic;
        return std::isnan(H) ? kInf : H;
    }

    PhasePoint leapfrog(const PhasePoint& z, double eps) const {
        PhasePoint out;
        out.p = z.p + 0.5 * eps * z.grad;
        out.q = z.q + eps * (inv_metric_.array() * out.p.array()).matrix();
        out.logp = target_.value_and_gradient(out.q, out.grad);
        out.p += 0.5 * eps * out.grad;
        return out;
    }

    bool no_u_turn(const Vector& p_minus, const Vector& p_plus, const Vector& rho) const {
        const Vector sharp_minus = (inv_metric_.array() * p_minus.array()).matrix();
        const Vector sharp_plus = (inv_metric_.array() * p_plus.array()).matrix();
        return sharp_plus.dot(rho) > 0.0 && sharp_minus.dot(rho) > 0.0;
    }

    // Merge two time-adjacent trajectories (left earlier than right) into out; returns whether
    // the merged trajectory still satisfies the no-U-turn criterion, including across the seam.
    bool merge(const Trajectory& left, const Trajectory& right, Trajectory& out) const {
        Vector rho = left.rho + right.rho;
        bool ok = no_u_turn(left.minus.p, right.plus.p, rho);
        ok = ok && no_u_turn(left.minus.p, right.minus.p, left.rho + right.minus.p);
        ok = ok && no_u_turn(left.plus.p, right.plus.p, right.rho + left.plus.p);
        PhasePoint minus = left.minus;
        PhasePoint plus = right.plus;
        out.minus = std::move(minus);
        out.plus = std::move(plus);
        out.rho = std::move(rho);
        return ok;
    }

    Trajectory build_tree(const PhasePoint& edge, int dir, int depth, double H0) {
        if (depth == 0) {
            Trajectory leaf;
            PhasePoint z = leapfrog(edge, dir * step_size);
            const double H = std::isfinite(z.logp) ? hamiltonian(z) : kInf;
            leaf.n_leapfrog = 1;
            leaf.divergent = !(H - H0 <= 1000.0);
            leaf.valid = !leaf.divergent;
            leaf.log_weight = std::isfinite(H) ? H0 - H : -kInf;
            leaf.sum_accept = H0 - H > 0.0 ? 1.0 : std::exp(H0 - H);
            leaf.rho = z.p;
            leaf.minus = z;
            leaf.plus = z;
            leaf.proposal = std::move(z);
            return leaf;
        }
        Trajectory first = build_tree(edge, dir, depth - 1, H0);
        if (!first.valid) return first;
        const PhasePoint& next_edge = dir > 0 ? first.plus : first.minus;
        Trajectory second = build_tree(next_edge, dir, depth - 1, H0);

        Trajectory out;
        out.n_leapfrog = first.n_leapfrog + second.n_leapfrog;
        out.sum_accept = first.sum_accept + second.sum_accept;
        out.divergent = second.divergent;
        if (!second.valid) {
            out.valid = false;
            return out;
        }
        out.log_weight = log_sum_exp(first.log_weight, second.log_weight);
        out.proposal = uniform_(rng_) < std::exp(second.log_weight - out.log_weight) ? second.proposal
                                                                                      : first.proposal;
        out.valid = dir > 0 ? merge(first, second, out) : merge(second, first, out);
        return out;
    }

    const UnconstrainedTarget& target_;
    std::mt19937_64& rng_;
    int max_depth_;
    Vector inv_metric_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Random-walk Metropolis with a Gaussian proposal whose covariance tracks the warm-up draws
/// and whose global scale is tuned toward 0.234 acceptance. Both freeze after warm-up.
class AdaptiveMetropolis {
public:
    AdaptiveMetropolis(const UnconstrainedTarget& target, std::mt19937_64& rng)
        : target_(target),
          rng_(rng),
          d_(target.dim()),
          mean_(Vector::Zero(d_)),
          m2_(Matrix::Zero(d_, d_)),
          chol_(Matrix::Identity(d_, d_) * 0.1),
          log_scale_(std::log(2.38 / std::sqrt(static_cast<double>(d_)))) {}

    struct Result {
        Vector q;
        double logp;
        bool accepted;
    };

    Result step(const Vector& q, double logp) {
        Vector z(d_);
        for (Eigen::Index k = 0; k < d_; ++k) z(k) = normal_(rng_);
        Vector prop = q + std::exp(log_scale_) * (chol_ * z);
        const double lp = target_.value(prop);
        if (std::isfinite(lp) && std::log(uniform_(rng_)) < lp - logp) return {prop, lp, true};
        return {q, logp, false};
    }

    void adapt(const Vector& q, bool accepted, int iter, int num_warmup) {
        const double gamma = 1.0 / std::pow(static_cast<double>(iter) + 1.0, 0.6);
        log_scale_ += gamma * ((accepted ? 1.0 : 0.0) - 0.234);
        if (iter < num_warmup / 10) return;
        ++n_;
        Vector delta = q - mean_;
        mean_ += delta / static_cast<double>(n_);
        m2_ += delta * (q - mean_).transpose();
        if (n_ >= 2 * d_ + 10 && n_ % 50 == 0) {
            Matrix cov = m2_ / static_cast<double>(n_ - 1);
            cov.diagonal().array() += 1e-8;
            Eigen::LLT<Matrix> llt(cov);
            if (llt.info() == Eigen::Success) {
                chol_ = llt.matrixL();
                log_scale_ = std::log(2.38 / std::sqrt(static_cast<double>(d_)));
            }
        }
    }

    double scale() const { return std::exp(log_scale_); }

private:
    const UnconstrainedTarget& target_;
    std::mt19937_64& rng_;
    Eigen::Index d_;
    long n_ = 0;
    Vector mean_;
    Matrix m2_;
    Matrix chol_;
    double log_scale_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

inline Vector initial_point(const UnconstrainedTarget& target, const Vector& u_init, double radius,
                            std::mt19937_64& rng, bool need_gradient) {
    std::uniform_real_distribution<double> jitter(-radius, radius);
    auto finite_at = [&](const Vector& u) {
        if (need_gradient) {
            Vector g;
            return std::isfinite(target.value_and_gradient(u, g));
        }
        return std::isfinite(target.value(u));
    };
    for (int attempt = 0; attempt < 100; ++attempt) {
        Vector u = u_init;
        for (Eigen::Index k = 0; k < u.size(); ++k) u(k) += jitter(rng);
        if (finite_at(u)) return u;
    }
    if (finite_at(u_init)) return u_init;
    throw InitializationError("log density is not finite at any initial point tried");
}

struct ChainOutput {
    Matrix draws;  // keep x d, unconstrained
    ChainInfo info;
};

inline ChainOutput run_nuts_chain(const UnconstrainedTarget& target, const Vector& u_init,
                                  const SamplerConfig& cfg, std::mt19937_64& rng) {
    Nuts nuts(target, rng, cfg.max_tree_depth);
    PhasePoint z = nuts.make_point(initial_point(target, u_init, cfg.init_radius, rng, true));
    nuts.init_step_size(z);
    DualAveraging da(cfg.target_accept);
    da.restart(nuts.step_size);
    WarmupWindows windows(cfg.warmup_iters);
    WelfordVariance var(target.dim());

    for (int it = 0; it < cfg.warmup_iters; ++it) {
        auto r = nuts.transition(z);
        z = std::move(r.point);
        nuts.step_size = da.learn(r.accept_stat);
        if (windows.in_window()) var.add(z.q);
        if (windows.end_of_window()) {
            nuts.set_inv_metric(var.regularized_variance());
            var.restart();
            nuts.init_step_size(z);
            da.restart(nuts.step_size);
        }
        windows.advance();
    }
    if (cfg.warmup_iters > 0) nuts.step_size = da.final_step();

    ChainOutput out;
    out.draws.resize(cfg.keep_iters, target.dim());
    out.info.kernel = "nuts";
    double accept = 0.0;
    for (int it = 0; it < cfg.keep_iters; ++it) {
        auto r = nuts.transition(z);
        z = std::move(r.point);
        accept += r.accept_stat;
        if (r.divergent) ++out.info.divergences;
        out.draws.row(it) = z.q.transpose();
    }
    out.info.step_size = nuts.step_size;
    out.info.mean_accept = accept / cfg.keep_iters;
    return out;
}

inline ChainOutput run_metropolis_chain(const UnconstrainedTarget& target, const Vector& u_init,
                                        const SamplerConfig& cfg, std::mt19937_64& rng) {
    AdaptiveMetropolis am(target, rng);
    Vector q = initial_point(target, u_init, cfg.init_radius, rng, false);
    double lp = target.value(q);
    for (int it = 0; it < cfg.warmup_iters; ++it) {
        auto r = am.step(q, lp);
        q = std::move(r.q);
        lp = r.logp;
        am.adapt(q, r.accepted, it, cfg.warmup_iters);
    }
    ChainOutput out;
    out.draws.resize(cfg.keep_iters, target.dim());
    out.info.kernel = "adaptive_metropolis";
    int accepted = 0;
    for (int it = 0; it < cfg.keep_iters; ++it) {
        auto r = am.step(q, lp);
        q = std::move(r.q);
        lp = r.logp;
        accepted += r.accepted ? 1 : 0;
        out.draws.row(it) = q.transpose();
    }
    out.info.step_size = am.scale();
    out.info.mean_accept = static_cast<double>(accepted) / cfg.keep_iters;
    return out;
}

}  // namespace detail

/// Draw from the posterior defined by `density` over the constrained parameters in `layout`,
/// starting every chain near `init` (constrained space). Output depends only on the inputs and
/// cfg.seed.
inline DrawSet sample_posterior(const LogDensity& density, const ParameterLayout& layout, const Vector& init,
                                const SamplerConfig& cfg) {
    cfg.validate();
    if (!density.value && !density.value_and_gradient) throw ArgumentError("log density has no callable");
    if (init.size() != layout.dim()) throw ArgumentError("init length does not match parameter layout");
    const Vector u_init = layout.unconstrain(init);
    detail::UnconstrainedTarget target(density, layout);

    const bool use_nuts = cfg.kernel == SamplerKernel::nuts ||
                          (cfg.kernel == SamplerKernel::automatic && target.has_gradient());
    if (cfg.kernel == SamplerKernel::nuts && !target.has_gradient())
        throw ArgumentError("NUTS kernel requested but the density has no gradient");

    DrawSet out;
    out.names = layout.names();
    out.chains = cfg.chains;
    out.keep_per_chain = cfg.keep_iters;
    out.draws.resize(static_cast<Eigen::Index>(cfg.chains) * cfg.keep_iters, layout.dim());

    for (int c = 0; c < cfg.chains; ++c) {
        std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed & 0xffffffffu), static_cast<std::uint32_t>(cfg.seed >> 32),
                          static_cast<std::uint32_t>(c), 0x6e736770u};
        std::mt19937_64 rng(seq);
        detail::ChainOutput chain;
        if (use_nuts) {
            try {
                chain = detail::run_nuts_chain(target, u_init, cfg, rng);
            } catch (const detail::NanGradient&) {
                out.warnings.push_back("chain " + std::to_string(c) +
                                       ": non-finite gradient, rerun with adaptive Metropolis");
                std::seed_seq seq2{static_cast<std::uint32_t>(cfg.seed & 0xffffffffu),
                                   static_cast<std::uint32_t>(cfg.seed >> 32), static_cast<std::uint32_t>(c),
                                   0x616d6574u};
                std::mt19937_64 rng2(seq2);
                chain = detail::run_metropolis_chain(target, u_init, cfg, rng2);
            }
        } else {
            chain = detail::run_metropolis_chain(target, u_init, cfg, rng);
        }
        for (Eigen::Index i = 0; i < cfg.keep_iters; ++i) {
            out.draws.row(static_cast<Eigen::Index>(c) * cfg.keep_iters + i) =
                layout.constrain(chain.draws.row(i).transpose()).transpose();
        }
        out.chain_info.push_back(chain.info);
        if (chain.info.divergences > 0)
            out.warnings.push_back("chain " + std::to_string(c) + ": " + std::to_string(chain.info.divergences) +
                                   " divergent transitions after warm-up");
    }
    if (cfg.chains >= 2) {
        out.diagnostics = convergence_diagnostics(out, cfg.rhat_threshold, cfg.ess_threshold);
    } else {
        out.diagnostics.names = out.names;
        out.diagnostics.rhat = Vector::Constant(layout.dim(), std::nan(""));
        out.diagnostics.ess = Vector::Zero(layout.dim());
        out.warnings.push_back("single chain: convergence diagnostics unavailable");
    }
    return out;
}

}  // namespace nsgp

#endif  // NSGP_SAMPLER_HPP
