#pragma once

// Independent reference computations used only by the tests.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <numbers>

namespace oracle {

/// Adaptive Simpson quadrature on [a, b].
inline double simpson(const std::function<double(double)>& f, double a, double b, double tol = 1e-12, int depth = 50) {
    auto rule = [&](double lo, double flo, double hi, double fhi, double& mid, double& fmid) {
        mid = 0.5 * (lo + hi);
        fmid = f(mid);
        return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
    };
    std::function<double(double, double, double, double, double, double, double, int)> rec =
        [&](double lo, double flo, double hi, double fhi, double whole, double mid, double fmid, int d) {
            double lm, flm, rm, frm;
            const double left = rule(lo, flo, mid, fmid, lm, flm);
            const double right = rule(mid, fmid, hi, fhi, rm, frm);
            const double delta = left + right - whole;
            if (d <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
            return rec(lo, flo, mid, fmid, left, lm, flm, d - 1) + rec(mid, fmid, hi, fhi, right, rm, frm, d - 1);
        };
    const double fa = f(a), fb = f(b);
    double mid, fmid;
    const double whole = rule(a, fa, b, fb, mid, fmid);
    return rec(a, fa, b, fb, whole, mid, fmid, depth);
}

/// Composite Gauss-Legendre (5 points) on n panels; for piecewise-smooth integrands.
inline double gauss(const std::function<double(double)>& f, double a, double b, int panels = 2000) {
    static const double x[5] = {0.0, -0.5384693101056831, 0.5384693101056831, -0.9061798459386640, 0.9061798459386640};
    static const double w[5] = {0.5688888888888889, 0.4786286704993665, 0.4786286704993665, 0.2369268850561891,
                                0.2369268850561891};
    const double hp = (b - a) / panels;
    double acc = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double c = a + (p + 0.5) * hp;
        for (int i = 0; i < 5; ++i) acc += 0.5 * hp * w[i] * f(c + 0.5 * hp * x[i]);
    }
    return acc;
}

/// Matrix exponential by scaling and squaring with a Taylor core.
inline Eigen::Matrix2d expm(const Eigen::Matrix2d& A) {
    const double norm = A.cwiseAbs().rowwise().sum().maxCoeff();
    int s = 0;
    while (norm / std::pow(2.0, s) > 0.25) ++s;
    const Eigen::Matrix2d B = A / std::pow(2.0, s);
    Eigen::Matrix2d term = Eigen::Matrix2d::Identity(), sum = Eigen::Matrix2d::Identity();
    for (int k = 1; k < 25; ++k) {
        term = term * B / k;
        sum += term;
    }
    for (int i = 0; i < s; ++i) sum = sum * sum;
    return sum;
}

/// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace oracle
