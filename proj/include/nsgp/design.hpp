#ifndef NSGP_DESIGN_HPP
#define NSGP_DESIGN_HPP

#include "nsgp/core.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <vector>

namespace nsgp {

/// Points in [-1, 1]^p with a sub-design label per row (0 for a single Latin hypercube,
/// 0..k-1 for a k-extended design).
struct Design {
    Matrix points;
    std::vector<int> labels;
    std::uint64_t seed = 0;
    double min_distance = 0.0;

    Eigen::Index size() const { return points.rows(); }
    Eigen::Index dim() const { return points.cols(); }

    int folds() const { return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1; }

    std::vector<Eigen::Index> rows_with_label(int label) const {
        std::vector<Eigen::Index> out;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == label) out.push_back(static_cast<Eigen::Index>(i));
        return out;
    }
};

inline double min_pairwise_distance(const Matrix& X) {
    double best = kInf;
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index k = i + 1; k < X.rows(); ++k) best = std::min(best, (X.row(i) - X.row(k)).norm());
    return best;
}

/// True when every column puts exactly one point in each of n equal cells of [-1, 1].
inline bool is_latin_hypercube(const Matrix& X) {
    const Eigen::Index n = X.rows();
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        std::vector<int> seen(static_cast<std::size_t>(n), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!(X(i, j) >= -1.0 && X(i, j) <= 1.0)) return false;
            auto cell = static_cast<Eigen::Index>(std::floor((X(i, j) + 1.0) * 0.5 * static_cast<double>(n)));
            cell = std::clamp<Eigen::Index>(cell, 0, n - 1);
            if (seen[static_cast<std::size_t>(cell)]++) return false;
        }
    }
    return true;
}

namespace detail {

inline Matrix random_lhc(Eigen::Index n, Eigen::Index p, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Matrix X(n, p);
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < p; ++j) {
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        for (Eigen::Index i = 0; i < n; ++i)
            X(i, j) = -1.0 + 2.0 * (static_cast<double>(perm[static_cast<std::size_t>(i)]) + u(rng)) / static_cast<double>(n);
    }
    return X;
}

// Morris-Mitchell phi_q, written relative to the minimum distance so large q cannot overflow:
// phi = (1/dmin) * (sum (dmin/d)^q)^(1/q). Only pairs with at least one row >= first_free count.
inline double phi_criterion(const Matrix& X, Eigen::Index first_free, double q = 50.0) {
    std::vector<double> d;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (Eigen::Index k = std::max(i + 1, first_free); k < X.rows(); ++k) d.push_back((X.row(i) - X.row(k)).norm());
    }
    if (d.empty()) return 0.0;
    const double dmin = *std::min_element(d.begin(), d.end());
    if (!(dmin > 0.0)) return kInf;
    double s = 0.0;
    for (double v : d) s += std::pow(dmin / v, q);
    return std::pow(s, 1.0 / q) / dmin;
}

/// Greedy column-exchange optimization of phi_q over rows [first_free, n). Swapping two
/// coordinates in the same column keeps the Latin property of the free block.
inline void optimize_exchange(Matrix& X, Eigen::Index first_free, int iters, std::mt19937_64& rng) {
    const Eigen::Index n_free = X.rows() - first_free;
    if (n_free < 2) return;
    std::uniform_int_distribution<Eigen::Index> row(first_free, X.rows() - 1);
    std::uniform_int_distribution<Eigen::Index> col(0, X.cols() - 1);
    double best = phi_criterion(X, first_free);
    for (int it = 0; it < iters; ++it) {
        const Eigen::Index j = col(rng);
        const Eigen::Index a = row(rng);
        Eigen::Index b = row(rng);
        if (a == b) continue;
        std::swap(X(a, j), X(b, j));
        const double c = phi_criterion(X, first_free);
        if (c < best) {
            best = c;
        } else {
            std::swap(X(a, j), X(b, j));
        }
    }
}

inline void check_design_args(Eigen::Index n, Eigen::Index p, int optim_iters) {
    if (n < 2) throw ArgumentError("design needs at least two points");
    if (p < 1) throw ArgumentError("design needs at least one input");
    if (optim_iters <= 0) throw ArgumentError("optim_iters must be positive");
}

}  // namespace detail

/// Maximin Latin hypercube on [-1, 1]^p: random restarts, each improved by coordinate
/// exchanges; the restart with the largest minimum distance wins (ties to the lowest index).
inline Design maximin_lhc(Eigen::Index n, Eigen::Index p, std::uint64_t seed, int optim_iters = 2000,
                          int restarts = 10) {
    detail::check_design_args(n, p, optim_iters);
    if (restarts < 1) throw ArgumentError("restarts must be positive");
    std::mt19937_64 rng(seed);
    Design best;
    best.min_distance = -1.0;
    for (int r = 0; r < restarts; ++r) {
        Matrix X = detail::random_lhc(n, p, rng);
        detail::optimize_exchange(X, 0, optim_iters, rng);
        const double d = min_pairwise_distance(X);
        if (d > best.min_distance) {
            best.points = std::move(X);
            best.min_distance = d;
        }
    }
    best.labels.assign(static_cast<std::size_t>(n), 0);
    best.seed = seed;
    return best;
}

/// Append a new Latin hypercube of n_add points whose placement maximizes the maximin
/// criterion of the union; the existing rows and labels are unchanged.
inline Design extend_lhc(const Design& existing, Eigen::Index n_add, std::uint64_t seed, int optim_iters = 2000,
                         int restarts = 10) {
    detail::check_design_args(n_add, existing.dim(), optim_iters);
    if (existing.size() < 1 || static_cast<Eigen::Index>(existing.labels.size()) != existing.size())
        throw ArgumentError("extend_lhc: existing design is empty or unlabeled");
    std::mt19937_64 rng(seed);
    const Eigen::Index n0 = existing.size();
    Design best;
    best.min_distance = -1.0;
    for (int r = 0; r < restarts; ++r) {
        Matrix X(n0 + n_add, existing.dim());
        X.topRows(n0) = existing.points;
        X.bottomRows(n_add) = detail::random_lhc(n_add, existing.dim(), rng);
        detail::optimize_exchange(X, n0, optim_iters, rng);
        const double d = min_pairwise_distance(X);
        if (d > best.min_distance) {
            best.points = std::move(X);
            best.min_distance = d;
        }
    }
    best.labels = existing.labels;
    best.labels.insert(best.labels.end(), static_cast<std::size_t>(n_add), existing.folds());
    best.seed = seed;
    return best;
}

/// k sequentially extended Latin hypercubes of `fold_size` points each.
inline Design extended_lhc(Eigen::Index fold_size, int folds, Eigen::Index p, std::uint64_t seed, int optim_iters = 2000) {
    if (folds < 1) throw ArgumentError("need at least one fold");
    Design d = maximin_lhc(fold_size, p, seed, optim_iters);
    for (int k = 1; k < folds; ++k) d = extend_lhc(d, fold_size, seed + static_cast<std::uint64_t>(k) * 7919u, optim_iters);
    d.seed = seed;
    return d;
}

/// Affine input map onto [-1, 1]^p and response centring/scaling (sample sd, n - 1 divisor).
struct Standardizer {
    Vector lower;
    Vector upper;
    double response_mean = 0.0;
    double response_sd = 1.0;

    Eigen::Index dim() const { return lower.size(); }

    Matrix inputs_forward(const Matrix& raw) const {
        if (raw.cols() != dim()) throw ArgumentError("standardizer: input dimension mismatch");
        Matrix out(raw.rows(), raw.cols());
        for (Eigen::Index j = 0; j < dim(); ++j)
            out.col(j) = (2.0 * (raw.col(j).array() - lower(j)) / (upper(j) - lower(j)) - 1.0).matrix();
        return out;
    }

    Matrix inputs_inverse(const Matrix& unit) const {
        if (unit.cols() != dim()) throw ArgumentError("standardizer: input dimension mismatch");
        Matrix out(unit.rows(), unit.cols());
        for (Eigen::Index j = 0; j < dim(); ++j)
            out.col(j) = (lower(j) + (unit.col(j).array() + 1.0) * 0.5 * (upper(j) - lower(j))).matrix();
        return out;
    }

    Vector response_forward(const Vector& F) const { return ((F.array() - response_mean) / response_sd).matrix(); }
    Vector response_inverse(const Vector& y) const { return (y.array() * response_sd + response_mean).matrix(); }
    Vector sd_inverse(const Vector& sd) const { return sd * response_sd; }
};

/// Build the standardizer from declared input ranges (or observed min/max) and the response.
inline std::pair<Standardizer, Ensemble> standardize(const Matrix& raw_X, const Vector& raw_F,
                                                     const std::optional<std::pair<Vector, Vector>>& ranges = std::nullopt) {
    if (raw_X.rows() != raw_F.size()) throw ArgumentError("standardize: response length does not match design rows");
    if (raw_X.rows() < 2) throw ArgumentError("standardize: need at least two runs");
    Standardizer s;
    if (ranges) {
        s.lower = ranges->first;
        s.upper = ranges->second;
        if (s.lower.size() != raw_X.cols() || s.upper.size() != raw_X.cols())
            throw ArgumentError("standardize: declared range dimension mismatch");
    } else {
        s.lower = raw_X.colwise().minCoeff().transpose();
        s.upper = raw_X.colwise().maxCoeff().transpose();
    }
    for (Eigen::Index j = 0; j < s.dim(); ++j)
        if (!(s.upper(j) > s.lower(j))) throw DomainError("standardize: degenerate range for input x" + std::to_string(j + 1));
    const double n = static_cast<double>(raw_F.size());
    s.response_mean = raw_F.mean();
    s.response_sd = std::sqrt((raw_F.array() - s.response_mean).square().sum() / (n - 1.0));
    if (!(s.response_sd > 0.0)) throw DomainError("standardize: constant response, emulation is degenerate");
    Ensemble ens{s.inputs_forward(raw_X), s.response_forward(raw_F)};
    return {s, ens};
}

}  // namespace nsgp

#endif  // NSGP_DESIGN_HPP
