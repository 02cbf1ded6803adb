#ifndef NSGP_KERNELS_HPP
#define NSGP_KERNELS_HPP

#include "nsgp/core.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <array>
#include <span>

namespace nsgp {

enum class CorrelationFamily { power_exponential };

/// Separable power-exponential correlation
///   r(x, x') = exp(-sum_j (|x_j - x'_j| / lengthscale_j)^exponent_j).
struct CorrelationSpec {
    CorrelationFamily family = CorrelationFamily::power_exponential;
    Vector exponents;
    Vector lengthscales;

    static CorrelationSpec squared_exponential(Vector lengthscales) {
        CorrelationSpec s;
        s.exponents = Vector::Constant(lengthscales.size(), 2.0);
        s.lengthscales = std::move(lengthscales);
        return s;
    }

    Eigen::Index dim() const { return lengthscales.size(); }

    void validate() const {
        if (lengthscales.size() < 1) throw ArgumentError("correlation needs at least one input dimension");
        if (exponents.size() != lengthscales.size())
            throw ArgumentError("exponent and lengthscale vectors differ in length");
        for (Eigen::Index j = 0; j < dim(); ++j) {
            if (!(lengthscales(j) > 0.0) || !std::isfinite(lengthscales(j)))
                throw DomainError("lengthscale " + std::to_string(j) + " must be positive and finite");
            if (!(exponents(j) > 0.0 && exponents(j) <= 2.0))
                throw DomainError("exponent " + std::to_string(j) + " must lie in (0, 2]");
        }
    }
};

/// Stationary covariance sigma2 * r(x, x') + nugget * 1{x == x'}.
struct StationaryKernelSpec {
    CorrelationSpec corr;
    double variance = 1.0;
    double nugget = 1e-4;

    void validate() const {
        corr.validate();
        if (!(variance > 0.0) || !std::isfinite(variance)) throw DomainError("kernel variance must be positive");
        if (!(nugget >= 0.0) || !std::isfinite(nugget)) throw DomainError("kernel nugget must be nonnegative");
    }
};

namespace detail {

inline double scaled_power(double diff, double lengthscale, double exponent) {
    const double u = std::abs(diff) / lengthscale;
    if (exponent == 2.0) return u * u;
    if (exponent == 1.0) return u;
    return std::pow(u, exponent);
}

template <class A, class B>
double corr_unchecked(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y, const CorrelationSpec& spec) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < spec.dim(); ++j) {
        s += scaled_power(x(j) - y(j), spec.lengthscales(j), spec.exponents(j));
    }
    return std::exp(-s);
}

}  // namespace detail

template <class A, class B>
double power_exp_corr(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y, const CorrelationSpec& spec) {
    spec.validate();
    if (x.size() != spec.dim() || y.size() != spec.dim())
        throw ArgumentError("point dimension does not match correlation dimension");
    return detail::corr_unchecked(x, y, spec);
}

template <class A, class B>
double stationary_cov(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y, const StationaryKernelSpec& spec) {
    spec.validate();
    if (x.size() != spec.corr.dim() || y.size() != spec.corr.dim())
        throw ArgumentError("point dimension does not match kernel dimension");
    double k = spec.variance * detail::corr_unchecked(x, y, spec.corr);
    if (same_point(x, y)) k += spec.nugget;
    return k;
}

/// Assemble cov(X.row(i), Y.row(j)) for every pair.
template <class Cov>
Matrix kernel_matrix(const Matrix& X, const Matrix& Y, Cov&& cov) {
    if (X.cols() != Y.cols()) throw ArgumentError("kernel_matrix: column counts differ");
    Matrix K(X.rows(), Y.rows());
    for (Eigen::Index j = 0; j < Y.rows(); ++j) {
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            K(i, j) = cov(X.row(i), Y.row(j));
        }
    }
    return K;
}

/// Symmetric assembly over a single point set; evaluates each unordered pair once.
template <class Cov>
Matrix kernel_matrix(const Matrix& X, Cov&& cov) {
    const Eigen::Index n = X.rows();
    Matrix K(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = j; i < n; ++i) {
            K(i, j) = cov(X.row(i), X.row(j));
            K(j, i) = K(i, j);
        }
    }
    return K;
}

/// Correlation matrix between the rows of X and Y without validation or nugget.
inline Matrix correlation_matrix(const Matrix& X, const Matrix& Y, const CorrelationSpec& spec) {
    Matrix S = Matrix::Zero(X.rows(), Y.rows());
    for (Eigen::Index d = 0; d < spec.dim(); ++d) {
        const double ell = spec.lengthscales(d);
        const double phi = spec.exponents(d);
        for (Eigen::Index j = 0; j < Y.rows(); ++j) {
            const double yj = Y(j, d);
            for (Eigen::Index i = 0; i < X.rows(); ++i) {
                S(i, j) += detail::scaled_power(X(i, d) - yj, ell, phi);
            }
        }
    }
    return (-S.array()).exp().matrix();
}

/// Indicator matrix 1{X.row(i) == Y.row(j)}.
inline Matrix coincidence_matrix(const Matrix& X, const Matrix& Y) {
    Matrix E = Matrix::Zero(X.rows(), Y.rows());
    for (Eigen::Index j = 0; j < Y.rows(); ++j) {
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            if (same_point(X.row(i), Y.row(j))) E(i, j) = 1.0;
        }
    }
    return E;
}

inline Matrix stationary_kernel_matrix(const Matrix& X, const Matrix& Y, const StationaryKernelSpec& spec) {
    if (X.cols() != spec.corr.dim() || Y.cols() != spec.corr.dim())
        throw ArgumentError("kernel matrix: point dimension does not match kernel dimension");
    Matrix K = spec.variance * correlation_matrix(X, Y, spec.corr);
    if (spec.nugget != 0.0) K += spec.nugget * coincidence_matrix(X, Y);
    return K;
}

inline constexpr std::array<double, 4> kDefaultJitterSchedule{0.0, 1e-10, 1e-8, 1e-6};

/// Lower Cholesky factor together with the diagonal jitter that was needed.
struct CholeskyFactor {
    Matrix lower;
    double jitter = 0.0;

    Eigen::Index size() const { return lower.rows(); }

    Vector solve(const Vector& b) const {
        Vector y = lower.triangularView<Eigen::Lower>().solve(b);
        return lower.transpose().triangularView<Eigen::Upper>().solve(y);
    }

    Matrix solve(const Matrix& B) const {
        Matrix Y = lower.triangularView<Eigen::Lower>().solve(B);
        return lower.transpose().triangularView<Eigen::Upper>().solve(Y);
    }

    double log_determinant() const { return 2.0 * lower.diagonal().array().log().sum(); }

    Matrix inverse() const { return solve(Matrix(Matrix::Identity(size(), size()))); }
};

namespace detail {

// Unblocked factorization used only to report where a failing matrix breaks down.
inline double min_cholesky_pivot(const Matrix& M) {
    const Eigen::Index n = M.rows();
    Matrix L = Matrix::Zero(n, n);
    double min_pivot = kInf;
    for (Eigen::Index j = 0; j < n; ++j) {
        double d = M(j, j) - L.row(j).head(j).squaredNorm();
        min_pivot = std::min(min_pivot, d);
        if (!(d > 0.0)) return min_pivot;
        L(j, j) = std::sqrt(d);
        for (Eigen::Index i = j + 1; i < n; ++i) {
            L(i, j) = (M(i, j) - L.row(i).head(j).dot(L.row(j).head(j))) / L(j, j);
        }
    }
    return min_pivot;
}

}  // namespace detail

/// Factor M + jI for the first jitter j in the schedule that yields a positive definite matrix.
inline CholeskyFactor safe_cholesky(const Matrix& M, std::span<const double> schedule = kDefaultJitterSchedule) {
    if (M.rows() != M.cols()) throw ArgumentError("safe_cholesky: matrix is not square");
    if (!M.allFinite()) throw FactorizationError("safe_cholesky: matrix has non-finite entries", std::nan(""));
    for (double jitter : schedule) {
        Matrix A = M;
        if (jitter != 0.0) A.diagonal().array() += jitter;
        Eigen::LLT<Matrix> llt(A);
        if (llt.info() != Eigen::Success) continue;
        Matrix L = llt.matrixL();
        if (L.diagonal().minCoeff() > 0.0) return CholeskyFactor{std::move(L), jitter};
    }
    const double largest = schedule.empty() ? 0.0 : schedule.back();
    Matrix A = M;
    A.diagonal().array() += largest;
    throw FactorizationError("Cholesky factorization failed for every jitter in the schedule",
                             detail::min_cholesky_pivot(A));
}

}  // namespace nsgp

#endif  // NSGP_KERNELS_HPP
