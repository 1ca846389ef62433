#pragma once

#include "zvlab/field/grid.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace zvlab {

/// The coefficient tuple (a, sigma, b1, b2, b0, c, f) of the parabolic
/// problem and of the SDE, with the regularity metadata the theory needs.
/// a defaults to sigma sigma^T / 2 when not given.
template <int D>
struct CoefficientSet {
    MatrixField<D> sigma;
    MatrixField<D> a;
    VectorField<D> b1;  ///< Lipschitz part
    VectorField<D> b2;  ///< bounded part
    VectorField<D> b0;  ///< singular part
    ScalarField<D> c;
    ScalarField<D> f;
    /// Jacobian of b1; finite differences are used when absent.
    MatrixField<D> b1_jacobian;

    double kappa1 = 0.5;          ///< ellipticity lower bound of a
    double kappa2 = 0.5;          ///< ellipticity upper bound of a
    double lip_b1 = 0.0;
    double sup_b2 = 0.0;
    double sup_c = 0.0;
    double holder_sigma = 1.0;    ///< Hoelder exponent of sigma
    bool monotone_b = false;      ///< b = b1 + b2 is one-sided Lipschitz
    /// Location of a point singularity of b0, if any (node cap applies there).
    std::optional<Vec<D>> b0_singularity;

    /// Constant-coefficient default: sigma = I, everything else zero.
    static CoefficientSet standard() {
        CoefficientSet cs;
        cs.sigma = [](double, const Vec<D>&) { return Mat<D>::Identity().eval(); };
        cs.b1 = [](double, const Vec<D>&) { return Vec<D>::Zero().eval(); };
        cs.b2 = cs.b1;
        cs.b0 = cs.b1;
        cs.c = [](double, const Vec<D>&) { return 0.0; };
        cs.f = cs.c;
        return cs;
    }

    Mat<D> eval_a(double t, const Vec<D>& x) const {
        if (a) return a(t, x);
        const Mat<D> s = sigma(t, x);
        return 0.5 * s * s.transpose();
    }

    Mat<D> eval_b1_jacobian(double t, const Vec<D>& x) const {
        if (b1_jacobian) return b1_jacobian(t, x);
        Mat<D> j;
        for (int col = 0; col < D; ++col) {
            const double step = 1e-6 * std::max(1.0, std::abs(x[col]));
            Vec<D> xp = x, xm = x;
            xp[col] += step;
            xm[col] -= step;
            j.col(col) = (b1(t, xp) - b1(t, xm)) / (2.0 * step);
        }
        return j;
    }

    /// The regular drift b = b1 + b2 of the SDE.
    Vec<D> regular_drift(double t, const Vec<D>& x) const { return b1(t, x) + b2(t, x); }
};

/// Node cap for a point singularity of b0: inside the mesh-width ball around
/// the singular point, b0 is replaced by its value on the ball's boundary in
/// the same direction (the symmetric average at the point itself). Used
/// identically by the PDE solver and the SDE engine.
template <int D>
VectorField<D> capped_b0(const CoefficientSet<D>& cs, double mesh) {
    if (!cs.b0_singularity) return cs.b0;
    const Vec<D> s = *cs.b0_singularity;
    auto b0 = cs.b0;
    return [b0, s, mesh](double t, const Vec<D>& x) -> Vec<D> {
        const Vec<D> r = x - s;
        const double dist = r.norm();
        if (dist >= mesh) return b0(t, x);
        if (dist > 0.0) return b0(t, (s + r * (mesh / dist)).eval());
        Vec<D> acc = Vec<D>::Zero();
        for (int a = 0; a < D; ++a) {
            Vec<D> e = Vec<D>::Zero();
            e[a] = mesh;
            acc += b0(t, (s + e).eval()) + b0(t, (s - e).eval());
        }
        return acc / (2.0 * D);
    };
}

/// Outcome of the sampled hypothesis checks on a coefficient set.
struct CoefficientCheck {
    double min_ellipticity = 0.0;   ///< min <a v, v>/|v|^2 observed
    double max_ellipticity = 0.0;
    double max_b1_quotient = 0.0;   ///< max |b1(x) - b1(y)| / |x - y|
    double max_a_mismatch = 0.0;    ///< max relative |a - sigma sigma^T/2|
    std::size_t samples = 0;
    std::vector<std::string> violations;

    bool ok() const { return violations.empty(); }
};

/// Samples (t, x, v) in [0, T] x [-L, L]^D x S^{D-1} and checks the declared
/// ellipticity bounds, the Lipschitz constant of b1 (with relative tolerance
/// tol) and a = sigma sigma^T / 2 to 1e-12 relative.
template <int D>
CoefficientCheck check_coefficients(const CoefficientSet<D>& cs, double half_width, double horizon,
                                    std::size_t samples = 2000, std::uint64_t seed = 12345, double tol = 1e-6) {
    CoefficientCheck out;
    out.samples = samples;
    out.min_ellipticity = std::numeric_limits<double>::infinity();
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> ux(-half_width, half_width), ut(0.0, horizon);
    std::normal_distribution<double> nv(0.0, 1.0);
    for (std::size_t s = 0; s < samples; ++s) {
        const double t = ut(gen);
        Vec<D> x, y, v;
        for (int a = 0; a < D; ++a) {
            x[a] = ux(gen);
            y[a] = ux(gen);
            v[a] = nv(gen);
        }
        if (s % 2 == 1) y = x + (y - x) * 1e-3;  // probe small scales too
        v.normalize();
        const Mat<D> a = cs.eval_a(t, x);
        const double e = v.dot(a * v);
        out.min_ellipticity = std::min(out.min_ellipticity, e);
        out.max_ellipticity = std::max(out.max_ellipticity, e);
        const Mat<D> sg = cs.sigma(t, x);
        const Mat<D> half = 0.5 * sg * sg.transpose();
        const double scale = std::max(half.norm(), 1e-300);
        out.max_a_mismatch = std::max(out.max_a_mismatch, (a - half).norm() / scale);
        const double dxy = (x - y).norm();
        if (dxy > 0) out.max_b1_quotient = std::max(out.max_b1_quotient, (cs.b1(t, x) - cs.b1(t, y)).norm() / dxy);
    }
    if (out.min_ellipticity < cs.kappa1 * (1.0 - 1e-12)) out.violations.push_back("ellipticity below kappa1");
    if (out.max_ellipticity > cs.kappa2 * (1.0 + 1e-12)) out.violations.push_back("ellipticity above kappa2");
    if (out.max_b1_quotient > cs.lip_b1 * (1.0 + tol) + 1e-12) out.violations.push_back("b1 exceeds declared Lipschitz constant");
    if (out.max_a_mismatch > 1e-12) out.violations.push_back("a differs from sigma sigma^T / 2");
    return out;
}

}  // namespace zvlab
