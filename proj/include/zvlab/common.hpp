#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

namespace zvlab {

template <int D>
using Vec = Eigen::Matrix<double, D, 1>;

template <int D>
using Mat = Eigen::Matrix<double, D, D>;

/// Space-time evaluators. Every field in the library is a pure function of (t, x).
template <int D>
using ScalarField = std::function<double(double, const Vec<D>&)>;
template <int D>
using VectorField = std::function<Vec<D>(double, const Vec<D>&)>;
template <int D>
using MatrixField = std::function<Mat<D>(double, const Vec<D>&)>;

/// Base of every error thrown by the library. The message is the stable
/// machine-readable reason ("non-finite field", "empty window", ...).
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Raised by iterative linear solves that fail to converge.
class SolverError : public Error {
public:
    SolverError(const std::string& what, int iterations, double residual)
        : Error(what + " (iterations=" + std::to_string(iterations) +
                ", residual=" + std::to_string(residual) + ")"),
          iterations_(iterations), residual_(residual) {}

    int iterations() const noexcept { return iterations_; }
    double residual() const noexcept { return residual_; }

private:
    int iterations_;
    double residual_;
};

template <int D>
inline bool all_finite(const Vec<D>& v) {
    for (int i = 0; i < D; ++i)
        if (!std::isfinite(v[i])) return false;
    return true;
}

template <int D>
inline double max_abs_coord(const Vec<D>& v) {
    return v.cwiseAbs().maxCoeff();
}

/// Spectral (operator) norm of a small matrix.
template <int D>
inline double operator_norm(const Mat<D>& m) {
    if constexpr (D == 1) {
        return std::abs(m(0, 0));
    } else {
        Eigen::JacobiSVD<Mat<D>> svd(m);
        return svd.singularValues()(0);
    }
}

template <int D>
inline double condition_number(const Mat<D>& m) {
    if constexpr (D == 1) {
        return std::abs(m(0, 0)) > 0 ? 1.0 : std::numeric_limits<double>::infinity();
    } else {
        Eigen::JacobiSVD<Mat<D>> svd(m);
        const auto& s = svd.singularValues();
        return s(D - 1) > 0 ? s(0) / s(D - 1) : std::numeric_limits<double>::infinity();
    }
}

}  // namespace zvlab
