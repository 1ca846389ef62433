#pragma once

#include "zvlab/parallel.hpp"
#include "zvlab/pde/solver.hpp"

#include <limits>
#include <string>
#include <vector>

namespace zvlab {

/// Target space of the lambda-decay estimate. p2 = q2 = inf selects sup-norm
/// (alpha = 0) or sup-norm plus Hoelder seminorm (alpha > 0).
struct DecayPrediction {
    double alpha = 0.0;
    double p2 = std::numeric_limits<double>::infinity();
    double q2 = std::numeric_limits<double>::infinity();

    /// beta0 = (2 - alpha + 2/q2 + d/p2 - 2/q - d/p) / 2.
    double beta0(int d, const NormSpec& ns) const {
        const double inv_q2 = std::isinf(q2) ? 0.0 : 1.0 / q2;
        const double inv_p2 = std::isinf(p2) ? 0.0 : 1.0 / p2;
        return 0.5 * (2.0 - alpha + 2.0 * inv_q2 + d * inv_p2 - 2.0 / ns.q - d / ns.p);
    }
};

template <int D>
double decay_target_norm(const PdeSolution<D>& sol, const DecayPrediction& target) {
    if (std::isinf(target.p2)) {
        if (target.alpha == 0.0) return sol.report.sup_u;
        double h = 0.0;
        const auto& g = sol.u.grid();
        for (int k = 0; k < g.time_slices(); k += std::max(1, g.time_steps() / 8))
            h = std::max(h, holder_seminorm(sol.u, g.time(k), target.alpha, 8, 2000));
        return sol.report.sup_u + h;
    }
    const NormSpec ns(target.p2, std::isinf(target.q2) ? 1e6 : target.q2);
    double v = lp_lq_norm(sol.u, ns, 0.0, sol.u.grid().horizon());
    if (target.alpha >= 1.0) v += lp_lq_norm(sol.grad, ns, 0.0, sol.u.grid().horizon());
    return v;
}

struct SweepReport {
    std::vector<double> lambdas;
    std::vector<double> norms;
    double beta0 = 0.0;
    double slope = std::numeric_limits<double>::quiet_NaN();  ///< least-squares log-log slope
    double constant = 0.0;  ///< C fitted at the smallest lambda
    bool non_increasing = false;
    bool bounded = false;
    bool degenerate_zero = false;
    bool pass = false;
    std::string verdict;
};

/// Solves the problem for each lambda (concurrently, merged in lambda order)
/// and checks norms <= C lambda^(-beta0 + 0.2) with C fitted at the smallest
/// lambda, plus monotonicity and the fitted slope.
template <int D>
SweepReport lambda_sweep(const PdeProblem<D>& problem, const std::vector<double>& lambdas,
                         const DecayPrediction& target) {
    if (lambdas.size() < 4) throw Error("lambda sweep needs at least 4 values");
    if (!std::is_sorted(lambdas.begin(), lambdas.end()) || lambdas.front() <= 0.0)
        throw Error("lambda sweep values must be positive and ascending");
    if (lambdas.back() / lambdas.front() < 100.0 * (1.0 - 1e-12)) throw Error("lambda sweep must span two decades");
    SweepReport r;
    r.lambdas = lambdas;
    r.beta0 = target.beta0(D, problem.norms);
    if (!(r.beta0 > 0.0)) throw Error("decay prediction has beta0 <= 0");
    r.norms.assign(lambdas.size(), 0.0);
    parallel_for(
        lambdas.size(),
        [&](std::size_t i) {
            PdeProblem<D> pb = problem;
            pb.lambda = lambdas[i];
            r.norms[i] = decay_target_norm(solve_backward(pb), target);
        },
        1);
    const double exponent = -r.beta0 + 0.2;
    if (std::all_of(r.norms.begin(), r.norms.end(), [](double v) { return v == 0.0; })) {
        r.degenerate_zero = true;
        r.non_increasing = r.bounded = r.pass = true;
        r.verdict = "degenerate-zero";
        return r;
    }
    r.non_increasing = true;
    for (std::size_t i = 1; i < r.norms.size(); ++i)
        if (r.norms[i] > r.norms[i - 1] * (1.0 + 1e-12)) r.non_increasing = false;
    r.constant = r.norms[0] * std::pow(lambdas[0], -exponent);
    r.bounded = true;
    for (std::size_t i = 0; i < r.norms.size(); ++i)
        if (r.norms[i] > r.constant * std::pow(lambdas[i], exponent) * (1.0 + 1e-12)) r.bounded = false;
    // least-squares slope of log norm against log lambda
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(lambdas.size());
    bool positive = true;
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        if (r.norms[i] <= 0.0) {
            positive = false;
            break;
        }
        const double x = std::log(lambdas[i]), y = std::log(r.norms[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    if (positive) r.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    r.pass = r.non_increasing && r.bounded && (!positive || r.slope <= exponent + 1e-9);
    r.verdict = r.pass ? "pass" : "fail";
    return r;
}

/// (lambda ||u|| + ||(d_t + b1 . grad) u|| + Sobolev proxy) / ||f||, all in L^p_q.
template <int D>
double apriori_ratio(const PdeSolution<D>& sol, const PdeProblem<D>& pb) {
    GridFunction<D> f(pb.grid, pb.arity);
    const VectorField<D> b0cap = capped_b0(pb.coeffs, pb.grid.h());
    for (int k = 0; k < pb.grid.time_slices(); ++k)
        for (std::size_t i = 0; i < pb.grid.node_count(); ++i) {
            const double t = pb.grid.time(k);
            const Vec<D> x = pb.grid.node(i);
            if (!pb.drift_source) {
                f.at(k, i) = pb.coeffs.f(t, x);
            } else {
                const Vec<D> v = b0cap(t, x);
                for (int c = 0; c < D; ++c) f.at(k, i, c) = -v[c];
            }
        }
    const double T = pb.grid.horizon();
    const double fn = lp_lq_norm(f, pb.norms, 0.0, T);
    if (!(fn > 0.0)) throw Error("degenerate ratio");
    return (pb.lambda * sol.report.lp_lq + sol.report.transport_lp_lq + sol.report.sobolev_proxy) / fn;
}

struct AprioriReport {
    double ratio = 0.0;
    double ratio_refined = 0.0;
    double relative_change = 0.0;
    bool pass = false;
};

/// Shape check of the a priori estimate: the ratio is grid independent,
/// i.e. it changes by less than 25% under one refinement (n -> 2n-1, m -> 2m).
template <int D>
AprioriReport verify_apriori(const PdeSolution<D>& sol, const PdeProblem<D>& pb) {
    AprioriReport r;
    r.ratio = apriori_ratio(sol, pb);
    PdeProblem<D> fine = pb;
    fine.grid = pb.grid.refined();
    if (!pb.terminal.empty()) throw Error("a priori check supports zero terminal data only");
    r.ratio_refined = apriori_ratio(solve_backward(fine), fine);
    r.relative_change = std::abs(r.ratio_refined - r.ratio) / r.ratio;
    r.pass = std::isfinite(r.ratio) && r.relative_change < 0.25;
    return r;
}

struct DoublingOutcome {
    std::vector<double> base;     ///< ratio with b0
    std::vector<double> doubled;  ///< ratio with 2 b0
    double not_smaller_fraction = 0.0;
};

/// For every problem, compares the a priori ratio with b0 and with 2 b0.
template <int D>
DoublingOutcome b0_doubling_suite(const std::vector<PdeProblem<D>>& problems) {
    DoublingOutcome out;
    out.base.assign(problems.size(), 0.0);
    out.doubled.assign(problems.size(), 0.0);
    parallel_for(
        problems.size(),
        [&](std::size_t i) {
            out.base[i] = apriori_ratio(solve_backward(problems[i]), problems[i]);
            PdeProblem<D> twice = problems[i];
            auto b0 = twice.coeffs.b0;
            twice.coeffs.b0 = [b0](double t, const Vec<D>& x) { return (2.0 * b0(t, x)).eval(); };
            out.doubled[i] = apriori_ratio(solve_backward(twice), twice);
        },
        1);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < problems.size(); ++i)
        if (out.doubled[i] >= out.base[i] * (1.0 - 1e-12)) ++ok;
    out.not_smaller_fraction = problems.empty() ? 0.0 : static_cast<double>(ok) / problems.size();
    return out;
}

}  // namespace zvlab
