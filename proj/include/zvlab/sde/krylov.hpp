#pragma once

#include "zvlab/field/norms.hpp"
#include "zvlab/pde/solver.hpp"
#include "zvlab/sde/engine.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

namespace zvlab {

/// Smallest integer strictly greater than log2(2 / (2 - d/p - 2/q)).
inline int k_pq(int d, double p, double q) {
    const double budget = d / p + 2.0 / q;
    if (!(budget < 2.0)) throw Error("krylov: requires d/p + 2/q < 2");
    return static_cast<int>(std::floor(std::log2(2.0 / (2.0 - budget)))) + 1;
}

/// E int_{t0}^{t1} f_i(s, X_s) ds for several f at once, left-point rule on
/// the Euler grid, escaped paths excluded. One replay of the ensemble.
template <int D>
std::vector<MeanStat> occupation_estimates(const PathEnsemble<D>& ens, const std::vector<ScalarField<D>>& fs, double t0,
                                           double t1) {
    if (!(t0 < t1)) throw Error("empty window");
    const std::size_t N = ens.spec().paths, F = fs.size();
    const double h = ens.h();
    std::vector<double> acc(N * F, 0.0);
    std::vector<unsigned char> esc(N, 0);
    parallel_for(N, [&](std::size_t p) {
        double* row = acc.data() + p * F;
        const auto [xT, escaped] = ens.replay(p, [&](int, double t, const Vec<D>& x, const Vec<D>&) {
            if (t < t0 - 1e-12 || t >= t1 - 1e-12) return;
            for (std::size_t i = 0; i < F; ++i) row[i] += fs[i](t, x) * h;
        });
        esc[p] = escaped ? 1 : 0;
    });
    std::vector<MeanStat> out;
    for (std::size_t i = 0; i < F; ++i) {
        std::vector<double> v;
        v.reserve(N);
        for (std::size_t p = 0; p < N; ++p)
            if (!esc[p]) v.push_back(acc[p * F + i]);
        out.push_back(mean_and_se(v));
    }
    return out;
}

struct KrylovReport {
    MeanStat estimate;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double norm = 0.0;   ///< ||f||_{L^p_q(t0, t1)}
    double ratio = 0.0;  ///< estimate / norm (0 when the norm vanishes)
    int k = 0;           ///< k_{p,q}
};

/// Krylov functional of a grid function (interpolated along the paths).
template <int D>
KrylovReport krylov_estimate(const PathEnsemble<D>& ens, const GridFunction<D>& f, const NormSpec& ns, double t0,
                             double t1) {
    if (!ns.krylov_admissible(D)) throw Error("krylov: requires d/p + 2/q < 2");
    if (f.components() != 1) throw Error("krylov: f must be scalar");
    const ScalarField<D> fn = [&f](double t, const Vec<D>& x) { return f.interpolate_st(t, x); };
    KrylovReport r;
    r.estimate = occupation_estimates<D>(ens, {fn}, t0, t1)[0];
    r.ci_low = r.estimate.mean - 1.96 * r.estimate.se;
    r.ci_high = r.estimate.mean + 1.96 * r.estimate.se;
    r.norm = lp_lq_norm(f, ns, t0, t1);
    r.ratio = r.norm > 0.0 ? r.estimate.mean / r.norm : 0.0;
    r.k = k_pq(D, ns.p, ns.q);
    return r;
}

/// Smooth bump of unit height supported in the ball of radius r around c.
template <int D>
ScalarField<D> bump(const Vec<D>& c, double r) {
    return [c, r](double, const Vec<D>& x) {
        const double s = (x - c).squaredNorm() / (r * r);
        return s < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - s)) : 0.0;
    };
}

struct BumpFamilyReport {
    std::vector<double> radii;
    std::vector<double> estimates;
    std::vector<double> norms;
    std::vector<double> ratios;
    double median_ratio = 0.0;
    double max_ratio = 0.0;  ///< empirical Krylov constant
    bool pass = false;       ///< max <= 3 median
};

/// Krylov ratios over bumps of shrinking radius centred at c; norms from the
/// bump sampled on the grid.
template <int D>
BumpFamilyReport bump_family(const PathEnsemble<D>& ens, const GridSpec<D>& grid, const NormSpec& ns, const Vec<D>& c,
                             const std::vector<double>& radii) {
    if (!ns.krylov_admissible(D)) throw Error("krylov: requires d/p + 2/q < 2");
    if (radii.empty()) throw Error("krylov: empty bump family");
    std::vector<ScalarField<D>> fs;
    for (double r : radii) {
        if (!(r >= 2.0 * grid.h())) throw Error("krylov: bump radius below two mesh widths");
        fs.push_back(bump<D>(c, r));
    }
    const double T = ens.spec().horizon;
    const auto est = occupation_estimates<D>(ens, fs, 0.0, T);
    BumpFamilyReport rep;
    rep.radii = radii;
    for (std::size_t i = 0; i < radii.size(); ++i) {
        const auto g = GridFunction<D>::sample(grid, fs[i]);
        const double nrm = lp_lq_norm(g, ns, 0.0, std::min(T, grid.horizon()));
        rep.estimates.push_back(est[i].mean);
        rep.norms.push_back(nrm);
        rep.ratios.push_back(est[i].mean / nrm);
    }
    std::vector<double> sorted = rep.ratios;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    rep.median_ratio = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    rep.max_ratio = sorted.back();
    rep.pass = rep.max_ratio <= 3.0 * rep.median_ratio;
    return rep;
}

/// A C^{1,2} function with the derivatives the Ito identity needs.
template <int D>
struct ItoFunction {
    ScalarField<D> u;
    ScalarField<D> u_t;
    VectorField<D> grad;
    MatrixField<D> hess;

    bool constant = false;  ///< all derivatives vanish identically

    static ItoFunction constant_value(double c) {
        ItoFunction f;
        f.u = [c](double, const Vec<D>&) { return c; };
        f.u_t = [](double, const Vec<D>&) { return 0.0; };
        f.grad = [](double, const Vec<D>&) { return Vec<D>::Zero().eval(); };
        f.hess = [](double, const Vec<D>&) { return Mat<D>::Zero().eval(); };
        f.constant = true;
        return f;
    }

    /// Interpolated scalar PDE solution; u_t from slice differences.
    static ItoFunction from_solution(const PdeSolution<D>& sol) {
        if (sol.u.components() != 1) throw Error("ito: scalar solution required");
        auto s = std::make_shared<PdeSolution<D>>(sol);
        ItoFunction f;
        f.u = [s](double t, const Vec<D>& x) { return s->u.interpolate_st(t, x); };
        f.u_t = [s](double t, const Vec<D>& x) {
            const auto& g = s->u.grid();
            int k = std::min(static_cast<int>(std::floor(t / g.dt())), g.time_steps() - 1);
            k = std::max(k, 0);
            return (s->u.interpolate(k + 1, x) - s->u.interpolate(k, x)) / g.dt();
        };
        f.grad = [s](double t, const Vec<D>& x) {
            Vec<D> v;
            for (int j = 0; j < D; ++j) v[j] = s->grad.interpolate_st(t, x, j);
            return v;
        };
        f.hess = [s](double t, const Vec<D>& x) {
            Mat<D> m;
            for (int j = 0; j < D; ++j)
                for (int l = 0; l < D; ++l) m(j, l) = s->hessian.interpolate_st(t, x, j * D + l);
            return m;
        };
        return f;
    }
};

struct ItoResidual {
    MeanStat signed_defect;
    MeanStat abs_defect;
    std::size_t positives = 0;
    std::size_t negatives = 0;
    double sign_p_value = 1.0;  ///< two-sided sign test
    double h = 0.0;
};

/// Per path: u(T, X_T) - u(0, X_0) - sum (u_t + b.grad u + a:hess u) h - sum grad u . sigma dW,
/// with a = sigma sigma^T / 2 and the ensemble's own increments.
template <int D>
ItoResidual ito_residual(const ItoFunction<D>& fn, const PathEnsemble<D>& ens) {
    const std::size_t N = ens.spec().paths;
    const double h = ens.h(), T = ens.spec().horizon;
    const auto& model = ens.model();
    std::vector<double> defect(N, 0.0);
    std::vector<unsigned char> esc(N, 0);
    parallel_for(N, [&](std::size_t p) {
        if (fn.constant) return;
        double drift_sum = 0.0, mart = 0.0;
        const auto [xT, escaped] = ens.replay(p, [&](int, double t, const Vec<D>& x, const Vec<D>& dw) {
            auto [b, sg] = model.coefficients(t, x);
            if (model.xi) b += model.xi(t);
            const Vec<D> g = fn.grad(t, x);
            const Mat<D> a = 0.5 * sg * sg.transpose();
            drift_sum += (fn.u_t(t, x) + b.dot(g) + (a.cwiseProduct(fn.hess(t, x))).sum()) * h;
            mart += g.dot(sg * dw);
        });
        esc[p] = escaped ? 1 : 0;
        defect[p] = fn.u(T, xT) - fn.u(0.0, ens.start()) - drift_sum - mart;
    });
    ItoResidual r;
    r.h = h;
    std::vector<double> kept, absd;
    for (std::size_t p = 0; p < N; ++p) {
        if (esc[p]) continue;
        kept.push_back(defect[p]);
        absd.push_back(std::abs(defect[p]));
        if (defect[p] > 0) ++r.positives;
        else if (defect[p] < 0) ++r.negatives;
    }
    r.signed_defect = mean_and_se(kept);
    r.abs_defect = mean_and_se(absd);
    const double n = static_cast<double>(r.positives + r.negatives);
    if (n > 0) {
        const double z = std::max(0.0, std::abs(r.positives - 0.5 * n) - 0.5) / std::sqrt(0.25 * n);
        r.sign_p_value = std::erfc(z / std::sqrt(2.0));
    }
    return r;
}

struct ItoCurve {
    std::vector<ItoResidual> points;
    double slope = 0.0;  ///< log-log slope of mean |defect| against h
};

/// Itô residuals for a list of step counts on fresh ensembles of the same model.
template <int D>
ItoCurve ito_curve(const ItoFunction<D>& fn, const SdeModel<D>& model, const Vec<D>& x0, EnsembleSpec spec,
                   const std::vector<int>& step_counts) {
    ItoCurve c;
    for (int m : step_counts) {
        spec.steps = m;
        const auto ens = integrate(model, x0, spec);
        c.points.push_back(ito_residual(fn, ens));
    }
    std::vector<double> lx, ly;
    for (const auto& p : c.points)
        if (p.abs_defect.mean > 0) {
            lx.push_back(std::log(p.h));
            ly.push_back(std::log(p.abs_defect.mean));
        }
    if (lx.size() >= 2) {
        const double n = static_cast<double>(lx.size());
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < lx.size(); ++i) {
            sx += lx[i];
            sy += ly[i];
            sxx += lx[i] * lx[i];
            sxy += lx[i] * ly[i];
        }
        c.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    }
    return c;
}

}  // namespace zvlab
