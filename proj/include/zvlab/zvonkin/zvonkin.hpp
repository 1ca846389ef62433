#pragma once

#include "zvlab/parallel.hpp"
#include "zvlab/pde/solver.hpp"

#include <random>
#include <vector>

namespace zvlab {

/// Largest spatial slope of the stored phi: the maximum of the central
/// differences at nodes and of the exact gradient of the multilinear
/// interpolant over every cell (attained at cell corners).
template <int D>
double phi_gradient_sup(const GridFunction<D>& phi, const GridFunction<D>& grad) {
    const auto& g = phi.grid();
    const double h = g.h();
    const int n = g.nodes_per_axis();
    double sup = 0.0;
    for (int k = 0; k < g.time_slices(); ++k) {
        for (std::size_t i = 0; i < g.node_count(); ++i) {
            Mat<D> J;
            for (int a = 0; a < D; ++a)
                for (int b = 0; b < D; ++b) J(a, b) = grad.at(k, i, a * D + b);
            sup = std::max(sup, operator_norm<D>(J));
        }
        for (std::size_t i = 0; i < g.node_count(); ++i) {
            const auto idx = g.unflatten(i);
            bool base = true;
            for (int a = 0; a < D; ++a) base = base && idx[a] < n - 1;
            if (!base) continue;
            // corners of the cell with lower corner idx
            for (int corner = 0; corner < (1 << D); ++corner) {
                Mat<D> J;
                for (int b = 0; b < D; ++b) {
                    // edge along axis b through this corner
                    std::array<int, D> lo = idx;
                    for (int a = 0; a < D; ++a)
                        if (a != b && ((corner >> a) & 1)) lo[a] += 1;
                    std::array<int, D> hi = lo;
                    hi[b] += 1;
                    for (int c = 0; c < D; ++c) J(c, b) = (phi.at(k, g.flatten(hi), c) - phi.at(k, g.flatten(lo), c)) / h;
                }
                sup = std::max(sup, operator_norm<D>(J));
            }
        }
    }
    return sup;
}

/// Phi_t(x) = x + phi(t, x) with phi interpolated (multilinear in space,
/// linear in time), its fixed-point inverse and the transformed coefficients
///   Z(s, y) = (b + lambda phi)(s, x),  Sigma(s, y) = (I + grad phi)(s, x) sigma(s, x),
/// where x = Phi_s^{-1}(y).
template <int D>
class ZvonkinMap {
public:
    ZvonkinMap(CoefficientSet<D> coeffs, GridFunction<D> phi, GridFunction<D> grad, double lambda)
        : coeffs_(std::move(coeffs)), phi_(std::move(phi)), grad_(std::move(grad)), lambda_(lambda) {
        if (phi_.components() != D || grad_.components() != D * D) throw Error("zvonkin: phi must be a d-vector field");
        phi_.require_finite();
        sup_grad_ = phi_gradient_sup(phi_, grad_);
        zero_ = std::all_of(phi_.values().begin(), phi_.values().end(), [](double v) { return v == 0.0; });
    }

    /// Synthetic map from a given phi; node gradients by central differences.
    static ZvonkinMap from_phi(const CoefficientSet<D>& coeffs, const GridFunction<D>& phi, double lambda) {
        const auto& g = phi.grid();
        GridFunction<D> grad(g, D * D);
        for (int k = 0; k < g.time_slices(); ++k) {
            const auto s = phi.slice(k);
            for (std::size_t i = 0; i < g.node_count(); ++i)
                for (int c = 0; c < D; ++c)
                    for (int j = 0; j < D; ++j) grad.at(k, i, c * D + j) = detail::d1(g, s, D, c, i, j);
        }
        return ZvonkinMap(coeffs, phi, std::move(grad), lambda);
    }

    const GridSpec<D>& grid() const { return phi_.grid(); }
    const GridFunction<D>& phi() const { return phi_; }
    const GridFunction<D>& grad() const { return grad_; }
    const CoefficientSet<D>& coefficients() const { return coeffs_; }
    double lambda() const { return lambda_; }
    double sup_grad() const { return sup_grad_; }
    bool contractive() const { return sup_grad_ < 0.5; }
    bool identity() const { return zero_; }

    Vec<D> phi_at(double t, const Vec<D>& x) const {
        if (zero_) return Vec<D>::Zero();
        return phi_.interpolate_vec_st(t, x);
    }

    Vec<D> forward(double t, const Vec<D>& x) const { return x + phi_at(t, x); }

    /// Central difference (step h) of the interpolated phi.
    Mat<D> grad_phi_at(double t, const Vec<D>& x) const {
        if (zero_) return Mat<D>::Zero();
        const double h = grid().h();
        Mat<D> J;
        for (int b = 0; b < D; ++b) {
            Vec<D> xp = x, xm = x;
            xp[b] += h;
            xm[b] -= h;
            J.col(b) = (phi_at(t, xp) - phi_at(t, xm)) / (2.0 * h);
        }
        return J;
    }

    /// Fixed point x <- y - phi(t, x). Stops when the update is below 1e-12
    /// (relative to 1 + |y|); at most 60 iterations.
    Vec<D> inverse(double t, const Vec<D>& y, int* iterations = nullptr) const {
        if (zero_) {
            if (iterations) *iterations = 0;
            return y;
        }
        const double bound = 2.0 * grid().half_width();
        Vec<D> x = y;
        int it = 0;
        for (; it < 60; ++it) {
            const Vec<D> next = y - phi_at(t, x);
            if (!all_finite<D>(next) || max_abs_coord<D>(next) > bound) throw Error("inverse escape");
            const double step = (next - x).norm();
            x = next;
            if (step <= 1e-12 * (1.0 + y.norm())) {
                ++it;
                break;
            }
        }
        if (iterations) *iterations = it;
        return x;
    }

    Vec<D> Z(double s, const Vec<D>& y) const {
        const Vec<D> x = inverse(s, y);
        return coeffs_.regular_drift(s, x) + lambda_ * phi_at(s, x);
    }

    Mat<D> Sigma(double s, const Vec<D>& y) const {
        const Vec<D> x = inverse(s, y);
        return (Mat<D>::Identity() + grad_phi_at(s, x)) * coeffs_.sigma(s, x);
    }

    /// (Z, Sigma) at y with a single inversion.
    std::pair<Vec<D>, Mat<D>> transformed(double s, const Vec<D>& y) const {
        const Vec<D> x = inverse(s, y);
        return {coeffs_.regular_drift(s, x) + lambda_ * phi_at(s, x),
                (Mat<D>::Identity() + grad_phi_at(s, x)) * coeffs_.sigma(s, x)};
    }

    VectorField<D> Z_field() const {
        return [self = *this](double s, const Vec<D>& y) { return self.Z(s, y); };
    }
    MatrixField<D> Sigma_field() const {
        return [self = *this](double s, const Vec<D>& y) { return self.Sigma(s, y); };
    }

private:
    CoefficientSet<D> coeffs_;
    GridFunction<D> phi_;
    GridFunction<D> grad_;
    double lambda_;
    double sup_grad_ = 0.0;
    bool zero_ = false;
};

struct LambdaStep {
    double lambda;
    double sup_grad;
};

struct ZvonkinOptions {
    double lambda_start = 10.0;
    double lambda_factor = 4.0;
    int max_steps = 12;
    std::optional<double> fixed_lambda;  ///< skip the search
    PdeOptions pde;
};

template <int D>
struct ZvonkinBuild {
    ZvonkinMap<D> map;
    std::vector<LambdaStep> trace;
    PdeSolution<D> solution;
};

/// Solves the phi system for increasing lambda until sup |grad phi| < 1/2.
template <int D>
ZvonkinBuild<D> build_zvonkin(const CoefficientSet<D>& coeffs, const GridSpec<D>& grid, const NormSpec& ns,
                              const ZvonkinOptions& opt = {}) {
    std::vector<LambdaStep> trace;
    double lambda = opt.fixed_lambda.value_or(opt.lambda_start);
    const int steps = opt.fixed_lambda ? 1 : opt.max_steps + 1;
    for (int s = 0; s < steps; ++s, lambda *= opt.lambda_factor) {
        auto sol = solve_phi_system(coeffs, lambda, grid, ns, opt.pde);
        const double sup = phi_gradient_sup(sol.u, sol.grad);
        trace.push_back({lambda, sup});
        if (sup < 0.5) {
            ZvonkinMap<D> zm(coeffs, sol.u, sol.grad, lambda);
            return {std::move(zm), std::move(trace), std::move(sol)};
        }
    }
    throw Error("transform not contractive at this resolution");
}

struct SandwichReport {
    std::size_t pairs = 0;
    std::size_t violations = 0;
    std::size_t escapes = 0;  ///< inverse evaluations that left the box (flagged, skipped)
    double min_ratio = std::numeric_limits<double>::infinity();
    double max_ratio = 0.0;
};

namespace detail {

/// Random pair at one of several scales; both points in the given fraction of the box.
template <int D>
std::pair<Vec<D>, Vec<D>> random_pair(std::mt19937_64& gen, double half_width, double h) {
    std::uniform_real_distribution<double> u(-half_width, half_width);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    Vec<D> x, y;
    for (int a = 0; a < D; ++a) x[a] = u(gen);
    const int scale = static_cast<int>(gen() % 4);
    if (scale == 0) {
        for (int a = 0; a < D; ++a) y[a] = u(gen);
    } else {
        const double r = scale == 1 ? 5.0 * h : scale == 2 ? h : 0.1 * h;
        for (int a = 0; a < D; ++a) y[a] = std::clamp(x[a] + r * unit(gen), -half_width, half_width);
    }
    return {x, y};
}

}  // namespace detail

/// 1/2 |x - y| <= |Phi_s(x) - Phi_s(y)| <= 3/2 |x - y| on random pairs of
/// every time slice, tolerance 1e-6 |x - y| + 1e-9.
template <int D>
SandwichReport certify_bilipschitz(const ZvonkinMap<D>& zm, std::size_t pairs_per_slice = 10000,
                                   std::uint64_t seed = 404) {
    const auto& g = zm.grid();
    std::vector<SandwichReport> per(g.time_slices());
    parallel_for(g.time_slices(), [&](std::size_t k) {
        std::mt19937_64 gen(seed + 7919 * k);
        auto& r = per[k];
        const double t = g.time(static_cast<int>(k));
        for (std::size_t s = 0; s < pairs_per_slice; ++s) {
            const auto [x, y] = detail::random_pair<D>(gen, g.half_width(), g.h());
            const double d = (x - y).norm();
            if (d == 0.0) continue;
            const double img = (zm.forward(t, x) - zm.forward(t, y)).norm();
            const double tol = 1e-6 * d + 1e-9;
            ++r.pairs;
            r.min_ratio = std::min(r.min_ratio, img / d);
            r.max_ratio = std::max(r.max_ratio, img / d);
            if (img < 0.5 * d - tol || img > 1.5 * d + tol) ++r.violations;
        }
    }, 1);
    SandwichReport out;
    for (const auto& r : per) {
        out.pairs += r.pairs;
        out.violations += r.violations;
        out.min_ratio = std::min(out.min_ratio, r.min_ratio);
        out.max_ratio = std::max(out.max_ratio, r.max_ratio);
    }
    return out;
}

/// 2/3 |x - y| <= |Phi_s^{-1}(x) - Phi_s^{-1}(y)| <= 2 |x - y| on random pairs
/// in the inner 90% of the box.
template <int D>
SandwichReport certify_inverse(const ZvonkinMap<D>& zm, std::size_t pairs_per_slice = 10000, std::uint64_t seed = 505) {
    const auto& g = zm.grid();
    std::vector<SandwichReport> per(g.time_slices());
    parallel_for(g.time_slices(), [&](std::size_t k) {
        std::mt19937_64 gen(seed + 7919 * k);
        auto& r = per[k];
        const double t = g.time(static_cast<int>(k));
        for (std::size_t s = 0; s < pairs_per_slice; ++s) {
            const auto [x, y] = detail::random_pair<D>(gen, 0.9 * g.half_width(), g.h());
            const double d = (x - y).norm();
            if (d == 0.0) continue;
            double img;
            try {
                img = (zm.inverse(t, x) - zm.inverse(t, y)).norm();
            } catch (const Error&) {
                ++r.escapes;
                continue;
            }
            const double tol = 1e-6 * d + 1e-9;
            ++r.pairs;
            r.min_ratio = std::min(r.min_ratio, img / d);
            r.max_ratio = std::max(r.max_ratio, img / d);
            if (img < 2.0 / 3.0 * d - tol || img > 2.0 * d + tol) ++r.violations;
        }
    }, 1);
    SandwichReport out;
    for (const auto& r : per) {
        out.pairs += r.pairs;
        out.violations += r.violations;
        out.escapes += r.escapes;
        out.min_ratio = std::min(out.min_ratio, r.min_ratio);
        out.max_ratio = std::max(out.max_ratio, r.max_ratio);
    }
    return out;
}

/// Sampled certificates for the transformed coefficients.
struct TransformCertificate {
    std::size_t samples = 0;
    double z_lipschitz = 0.0;        ///< max |Z(s, y1) - Z(s, y2)| / |y1 - y2|
    double z_one_sided = -std::numeric_limits<double>::infinity();  ///< max <Z1 - Z2, y1 - y2> / |y1 - y2|^2
    double b_one_sided = -std::numeric_limits<double>::infinity();  ///< same for the raw b = b1 + b2
    double min_sigma_form = std::numeric_limits<double>::infinity();  ///< min |Sigma^T v|^2 / |v|^2
    double max_sigma_form = 0.0;
    double lower_bound = 0.0;   ///< kappa1 / 4 in sigma sigma^T units
    double upper_bound = 0.0;   ///< 9 kappa2 / 4 in sigma sigma^T units
    std::size_t ellipticity_violations = 0;
    std::size_t escapes = 0;
    bool same_sign = true;      ///< sign of the one-sided constant preserved
};

/// The ellipticity sandwich is stated for sigma sigma^T, whose bounds are
/// 2 kappa1 and 2 kappa2 when kappa bounds a = sigma sigma^T / 2.
template <int D>
TransformCertificate certify_transform(const ZvonkinMap<D>& zm, std::size_t samples = 100000, double core = 0.8,
                                       std::uint64_t seed = 606, double tol = 1e-9) {
    const auto& g = zm.grid();
    const auto& cs = zm.coefficients();
    const std::size_t chunks = 64;
    std::vector<TransformCertificate> per(chunks);
    const std::size_t per_chunk = (samples + chunks - 1) / chunks;
    parallel_for(chunks, [&](std::size_t c) {
        std::mt19937_64 gen(seed + 104729 * c);
        std::uniform_real_distribution<double> ut(0.0, g.horizon());
        std::normal_distribution<double> nv;
        auto& r = per[c];
        for (std::size_t s = 0; s < per_chunk && c * per_chunk + s < samples; ++s) {
            const double t = ut(gen);
            const auto [y1, y2] = detail::random_pair<D>(gen, core * g.half_width(), g.h());
            const double d = (y1 - y2).norm();
            Vec<D> v;
            for (int a = 0; a < D; ++a) v[a] = nv(gen);
            v.normalize();
            try {
                const Vec<D> z1 = zm.Z(t, y1), z2 = zm.Z(t, y2);
                if (d > 0.0) {
                    r.z_lipschitz = std::max(r.z_lipschitz, (z1 - z2).norm() / d);
                    r.z_one_sided = std::max(r.z_one_sided, (z1 - z2).dot(y1 - y2) / (d * d));
                    const Vec<D> b1 = cs.regular_drift(t, y1), b2 = cs.regular_drift(t, y2);
                    r.b_one_sided = std::max(r.b_one_sided, (b1 - b2).dot(y1 - y2) / (d * d));
                }
                const Mat<D> S = zm.Sigma(t, y1);
                const double form = (S.transpose() * v).squaredNorm();
                r.min_sigma_form = std::min(r.min_sigma_form, form);
                r.max_sigma_form = std::max(r.max_sigma_form, form);
                if (form < 0.25 * 2.0 * cs.kappa1 - tol || form > 2.25 * 2.0 * cs.kappa2 + tol) ++r.ellipticity_violations;
                ++r.samples;
            } catch (const Error&) {
                ++r.escapes;
            }
        }
    }, 1);
    TransformCertificate out;
    for (const auto& r : per) {
        out.samples += r.samples;
        out.escapes += r.escapes;
        out.ellipticity_violations += r.ellipticity_violations;
        out.z_lipschitz = std::max(out.z_lipschitz, r.z_lipschitz);
        out.z_one_sided = std::max(out.z_one_sided, r.z_one_sided);
        out.b_one_sided = std::max(out.b_one_sided, r.b_one_sided);
        out.min_sigma_form = std::min(out.min_sigma_form, r.min_sigma_form);
        out.max_sigma_form = std::max(out.max_sigma_form, r.max_sigma_form);
    }
    out.lower_bound = 0.25 * 2.0 * cs.kappa1;
    out.upper_bound = 2.25 * 2.0 * cs.kappa2;
    out.same_sign = (out.z_one_sided <= 0.0) == (out.b_one_sided <= 0.0);
    return out;
}

}  // namespace zvlab
