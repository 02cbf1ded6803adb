#ifndef NSGP_CORE_HPP
#define NSGP_CORE_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nsgp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2*pi))

// Error hierarchy. The CLI maps these onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

class FactorizationError : public NumericalError {
public:
    FactorizationError(const std::string& what, double min_pivot)
        : NumericalError(what + " (min diagonal pivot " + std::to_string(min_pivot) + ")"),
          min_pivot_(min_pivot) {}

    double min_pivot() const noexcept { return min_pivot_; }

private:
    double min_pivot_;
};

class InitializationError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

enum class ErrorKind { argument, domain, parse, numerical, other };

/// Thrown by the pipeline; carries the name of the stage that failed and the kind of the
/// underlying error.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what, ErrorKind kind = ErrorKind::other)
        : Error(stage + ": " + what), stage_(std::move(stage)), kind_(kind) {}

    const std::string& stage() const noexcept { return stage_; }
    ErrorKind kind() const noexcept { return kind_; }

private:
    std::string stage_;
    ErrorKind kind_;
};

inline double log_sum_exp(double a, double b) {
    if (a == -kInf) return b;
    if (b == -kInf) return a;
    return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

template <class Derived>
double log_sum_exp(const Eigen::MatrixBase<Derived>& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

/// True when two points have bitwise-identical coordinates.
template <class A, class B>
bool same_point(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) {
    if (x.size() != y.size()) return false;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        if (x(j) != y(j)) return false;
    }
    return true;
}

/// A set of model runs in standardized space: design rows X (n x p) and responses F.
struct Ensemble {
    Matrix X;
    Vector F;

    Eigen::Index size() const { return X.rows(); }
    Eigen::Index dim() const { return X.cols(); }

    void validate() const {
        if (X.rows() < 1 || X.cols() < 1) throw ArgumentError("ensemble must have at least one run and one input");
        if (F.size() != X.rows()) throw ArgumentError("ensemble response length does not match design rows");
        if (!X.allFinite() || !F.allFinite()) throw ArgumentError("ensemble contains non-finite values");
    }
};

inline Ensemble subset(const Ensemble& ens, const std::vector<Eigen::Index>& rows) {
    Ensemble out{Matrix(static_cast<Eigen::Index>(rows.size()), ens.dim()),
                 Vector(static_cast<Eigen::Index>(rows.size()))};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.X.row(static_cast<Eigen::Index>(i)) = ens.X.row(rows[i]);
        out.F(static_cast<Eigen::Index>(i)) = ens.F(rows[i]);
    }
    return out;
}

}  // namespace nsgp

#endif  // NSGP_CORE_HPP
