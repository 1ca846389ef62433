#pragma once

#include "zvlab/field/coefficients.hpp"
#include "zvlab/field/norms.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace zvlab {

struct PdeOptions {
    double theta = 0.5;              ///< 1/2 = Crank-Nicolson
    int rannacher_steps = 2;         ///< leading intervals taken as two backward-Euler half steps
    double peclet_threshold = 2.0;   ///< upwind first-order terms above this cell Peclet number
    bool b0_advection = true;        ///< false freezes the b0 . grad u coupling (linear-regime checks)
    double linear_tolerance = 1e-10;
    int max_iterations = 10000;
    double holder_alpha = 0.5;       ///< exponent of the reported Hoelder seminorm
};

/// Terminal-value problem
///   d_t u + tr(a D^2 u) + (b1 + b2 + b0) . grad u + c u = lambda u + f,  u(T) = u_T
/// on the truncated box with u = u_T on the boundary. Vector arity solves the
/// system whose i-th right-hand side is -b0^i (and c = 0).
template <int D>
struct PdeProblem {
    CoefficientSet<D> coeffs;
    double lambda = 0.0;
    GridSpec<D> grid;
    NormSpec norms;
    int arity = 1;
    std::vector<double> terminal;  ///< node-major, arity components; empty means u_T = 0
    PdeOptions options;
    /// Source -b0 with c = 0 (the transform system) instead of f with c.
    bool drift_source = false;

    PdeProblem(CoefficientSet<D> cs, double lam, GridSpec<D> g, NormSpec ns, int arity_ = 1)
        : coeffs(std::move(cs)), lambda(lam), grid(g), norms(ns), arity(arity_) {
        if (!(lambda >= 0.0)) throw Error("pde: lambda must be >= 0");
        if (arity != 1 && arity != D) throw Error("pde: arity must be scalar or d-vector");
    }
};

/// Norms of a solution, all computed on [0, T].
struct NormReport {
    double lp_lq = 0.0;            ///< ||u||_{L^p_q}
    double sobolev_proxy = 0.0;    ///< ||u|| + ||grad u|| + ||D^2 u|| in L^p_q
    double transport_lp_lq = 0.0;  ///< ||(d_t + b1 . grad) u||_{L^p_q}
    double sup_u = 0.0;
    double sup_grad = 0.0;
    double holder = 0.0;           ///< Hoelder seminorm of u(0, .)
    double contamination = 0.0;    ///< boundary-shell mass fraction
};

template <int D>
struct PdeSolution {
    GridFunction<D> u;
    GridFunction<D> grad;       ///< component (i, j) = d_j u^i at index i * D + j
    GridFunction<D> hessian;    ///< component (i, j, l) = d_j d_l u^i
    GridFunction<D> transport;  ///< (d_t + b1 . grad) u
    NormReport report;
    double lambda = 0.0;
    double max_residual = 0.0;  ///< max interior residual of the implicit systems
    double sup_source = 0.0;    ///< sup |f| over the sampled nodes
    double max_peclet = 0.0;
    std::size_t upwinded = 0;   ///< (node, axis, level) triples that used upwinding
    int max_linear_iterations = 0;
    bool max_principle_ok = true;
    double max_principle_bound = 0.0;

    explicit PdeSolution(const GridSpec<D>& g, int arity)
        : u(g, arity), grad(g, arity * D), hessian(g, arity * D * D), transport(g, arity) {}
};

namespace detail {

/// Operator with a fixed 3^D stencil per node. Row entries are ordered by the
/// offset index sum_a (o_a + 1) 3^a.
template <int D>
struct StencilOperator {
    static constexpr int width = D == 1 ? 3 : 9;
    std::vector<std::array<double, width>> coef;
    std::vector<unsigned char> boundary;

    static constexpr int center() { return D == 1 ? 1 : 4; }
    static int slot(const std::array<int, D>& o) {
        int s = 0, mul = 1;
        for (int a = 0; a < D; ++a) {
            s += (o[a] + 1) * mul;
            mul *= 3;
        }
        return s;
    }
    static std::array<int, D> offset(int slot) {
        std::array<int, D> o;
        for (int a = 0; a < D; ++a) {
            o[a] = slot % 3 - 1;
            slot /= 3;
        }
        return o;
    }
};

template <int D>
struct LevelData {
    StencilOperator<D> op;
    std::vector<double> source;  ///< node-major, arity components
};

template <int D>
LevelData<D> assemble_level(const PdeProblem<D>& pb, const VectorField<D>& b0cap, double t, double& max_peclet,
                            std::size_t& upwinded) {
    const auto& g = pb.grid;
    const auto& cs = pb.coeffs;
    const std::size_t N = g.node_count();
    const double h = g.h();
    LevelData<D> lv;
    lv.op.coef.assign(N, {});
    lv.op.boundary.assign(N, 0);
    lv.source.assign(N * pb.arity, 0.0);
    using Op = StencilOperator<D>;
    for (std::size_t i = 0; i < N; ++i) {
        const Vec<D> x = g.node(i);
        const Vec<D> b0 = b0cap(t, x);
        if (!pb.drift_source) {
            lv.source[i] = cs.f(t, x);
        } else {
            for (int c = 0; c < D; ++c) lv.source[i * D + c] = -b0[c];
        }
        if (g.on_boundary(i)) {
            lv.op.boundary[i] = 1;
            continue;
        }
        auto& row = lv.op.coef[i];
        const Mat<D> a = cs.eval_a(t, x);
        Vec<D> B = cs.b1(t, x) + cs.b2(t, x);
        if (pb.options.b0_advection) B += b0;
        const double zeroth = (pb.drift_source ? 0.0 : cs.c(t, x)) - pb.lambda;
        row[Op::center()] += zeroth;
        for (int ax = 0; ax < D; ++ax) {
            std::array<int, D> plus{}, minus{};
            plus[ax] = 1;
            minus[ax] = -1;
            const double diff = a(ax, ax);
            row[Op::slot(plus)] += diff / (h * h);
            row[Op::slot(minus)] += diff / (h * h);
            row[Op::center()] -= 2.0 * diff / (h * h);
            const double pe = diff > 0 ? std::abs(B[ax]) * h / diff : std::numeric_limits<double>::infinity();
            if (B[ax] != 0.0) max_peclet = std::max(max_peclet, pe);
            if (B[ax] != 0.0 && pe > pb.options.peclet_threshold) {
                ++upwinded;
                if (B[ax] > 0) {
                    row[Op::slot(plus)] += B[ax] / h;
                    row[Op::center()] -= B[ax] / h;
                } else {
                    row[Op::slot(minus)] -= B[ax] / h;
                    row[Op::center()] += B[ax] / h;
                }
            } else {
                row[Op::slot(plus)] += B[ax] / (2.0 * h);
                row[Op::slot(minus)] -= B[ax] / (2.0 * h);
            }
        }
        if constexpr (D == 2) {
            const double cross = 2.0 * a(0, 1) / (4.0 * h * h);
            row[Op::slot({1, 1})] += cross;
            row[Op::slot({-1, -1})] += cross;
            row[Op::slot({1, -1})] -= cross;
            row[Op::slot({-1, 1})] -= cross;
        }
    }
    return lv;
}

template <int D>
double apply_row(const GridSpec<D>& g, const StencilOperator<D>& op, std::span<const double> u, std::size_t i) {
    using Op = StencilOperator<D>;
    if (op.boundary[i]) return 0.0;
    const auto idx = g.unflatten(i);
    double acc = 0.0;
    for (int s = 0; s < Op::width; ++s) {
        const double c = op.coef[i][s];
        if (c == 0.0) continue;
        const auto o = Op::offset(s);
        std::array<int, D> j;
        for (int a = 0; a < D; ++a) j[a] = idx[a] + o[a];
        acc += c * u[g.flatten(j)];
    }
    return acc;
}

/// Solves (I - w L) x = rhs with boundary rows fixed to the identity.
/// Returns the residual sup-norm over interior rows; iterations via out-param.
template <int D>
double solve_shifted(const GridSpec<D>& g, const StencilOperator<D>& op, double w, std::span<const double> rhs,
                     std::span<double> x, const PdeOptions& opt, int& iterations) {
    using Op = StencilOperator<D>;
    const std::size_t N = g.node_count();
    iterations = 0;
    if constexpr (D == 1) {
        // tridiagonal: lower (offset -1), diag, upper (offset +1)
        std::vector<double> lo(N, 0.0), di(N, 1.0), up(N, 0.0), r(rhs.begin(), rhs.end());
        for (std::size_t i = 0; i < N; ++i) {
            if (op.boundary[i]) continue;
            lo[i] = -w * op.coef[i][0];
            di[i] = 1.0 - w * op.coef[i][1];
            up[i] = -w * op.coef[i][2];
        }
        // Thomas algorithm
        std::vector<double> cp(N, 0.0), dp(N, 0.0);
        cp[0] = up[0] / di[0];
        dp[0] = r[0] / di[0];
        for (std::size_t i = 1; i < N; ++i) {
            const double den = di[i] - lo[i] * cp[i - 1];
            if (den == 0.0 || !std::isfinite(den)) throw SolverError("pde: singular tridiagonal system", 0, den);
            cp[i] = up[i] / den;
            dp[i] = (r[i] - lo[i] * dp[i - 1]) / den;
        }
        x[N - 1] = dp[N - 1];
        for (std::size_t i = N - 1; i-- > 0;) x[i] = dp[i] - cp[i] * x[i + 1];
    } else {
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(N * Op::width);
        for (std::size_t i = 0; i < N; ++i) {
            if (op.boundary[i]) {
                trips.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0);
                continue;
            }
            const auto idx = g.unflatten(i);
            for (int s = 0; s < Op::width; ++s) {
                double c = -w * op.coef[i][s];
                if (s == Op::center()) c += 1.0;
                if (c == 0.0) continue;
                const auto o = Op::offset(s);
                std::array<int, D> j;
                for (int a = 0; a < D; ++a) j[a] = idx[a] + o[a];
                trips.emplace_back(static_cast<int>(i), static_cast<int>(g.flatten(j)), c);
            }
        }
        Eigen::SparseMatrix<double, Eigen::RowMajor> M(static_cast<int>(N), static_cast<int>(N));
        M.setFromTriplets(trips.begin(), trips.end());
        Eigen::BiCGSTAB<Eigen::SparseMatrix<double, Eigen::RowMajor>, Eigen::DiagonalPreconditioner<double>> solver;
        solver.setTolerance(opt.linear_tolerance);
        solver.setMaxIterations(opt.max_iterations);
        solver.compute(M);
        Eigen::Map<const Eigen::VectorXd> b(rhs.data(), static_cast<Eigen::Index>(N));
        Eigen::Map<Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(N));
        Eigen::VectorXd guess = xv;
        xv = solver.solveWithGuess(b, guess);
        iterations = static_cast<int>(solver.iterations());
        if (solver.info() != Eigen::Success)
            throw SolverError("pde: iterative solve did not converge", iterations, solver.error());
    }
    double res = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        if (op.boundary[i]) continue;
        res = std::max(res, std::abs(x[i] - w * apply_row(g, op, x, i) - rhs[i]));
    }
    return res;
}

/// First derivative along an axis; central inside, one-sided at the edges.
template <int D>
double d1(const GridSpec<D>& g, std::span<const double> v, int comps, int c, std::size_t i, int axis) {
    const auto idx = g.unflatten(i);
    const std::size_t st = g.stride(axis);
    const int n = g.nodes_per_axis();
    const double h = g.h();
    auto val = [&](std::size_t j) { return v[j * comps + c]; };
    if (idx[axis] == 0) return (val(i + st) - val(i)) / h;
    if (idx[axis] == n - 1) return (val(i) - val(i - st)) / h;
    return (val(i + st) - val(i - st)) / (2.0 * h);
}

template <int D>
double d2(const GridSpec<D>& g, std::span<const double> v, int comps, int c, std::size_t i, int axis) {
    const auto idx = g.unflatten(i);
    const std::size_t st = g.stride(axis);
    const int n = g.nodes_per_axis();
    const double h2 = g.h() * g.h();
    auto val = [&](std::size_t j) { return v[j * comps + c]; };
    if (idx[axis] == 0) return (val(i) - 2.0 * val(i + st) + val(i + 2 * st)) / h2;
    if (idx[axis] == n - 1) return (val(i) - 2.0 * val(i - st) + val(i - 2 * st)) / h2;
    return (val(i + st) - 2.0 * val(i) + val(i - st)) / h2;
}

}  // namespace detail

/// Spatial derivatives, transport field and norm report of a solved u.
template <int D>
void finish_solution(PdeSolution<D>& sol, const PdeProblem<D>& pb) {
    const auto& g = pb.grid;
    const int ar = pb.arity;
    const std::size_t N = g.node_count();
    for (int k = 0; k < g.time_slices(); ++k) {
        const auto u = sol.u.slice(k);
        for (std::size_t i = 0; i < N; ++i)
            for (int c = 0; c < ar; ++c)
                for (int j = 0; j < D; ++j) sol.grad.at(k, i, c * D + j) = detail::d1(g, u, ar, c, i, j);
        const auto gr = sol.grad.slice(k);
        for (std::size_t i = 0; i < N; ++i)
            for (int c = 0; c < ar; ++c)
                for (int j = 0; j < D; ++j)
                    for (int l = 0; l < D; ++l) {
                        const double v = j == l ? detail::d2(g, u, ar, c, i, j)
                                                : detail::d1(g, gr, ar * D, c * D + j, i, l);
                        sol.hessian.at(k, i, (c * D + j) * D + l) = v;
                    }
    }
    // symmetrize mixed second derivatives
    if constexpr (D == 2) {
        for (int k = 0; k < g.time_slices(); ++k)
            for (std::size_t i = 0; i < N; ++i)
                for (int c = 0; c < ar; ++c) {
                    const double m = 0.5 * (sol.hessian.at(k, i, (c * 2 + 0) * 2 + 1) + sol.hessian.at(k, i, (c * 2 + 1) * 2 + 0));
                    sol.hessian.at(k, i, (c * 2 + 0) * 2 + 1) = m;
                    sol.hessian.at(k, i, (c * 2 + 1) * 2 + 0) = m;
                }
    }
    const int m = g.time_steps();
    const double dt = g.dt();
    for (int k = 0; k <= m; ++k) {
        const double t = g.time(k);
        for (std::size_t i = 0; i < N; ++i) {
            const Vec<D> b1 = pb.coeffs.b1(t, g.node(i));
            for (int c = 0; c < ar; ++c) {
                double ut;
                if (k == 0) ut = (sol.u.at(1, i, c) - sol.u.at(0, i, c)) / dt;
                else if (k == m) ut = (sol.u.at(m, i, c) - sol.u.at(m - 1, i, c)) / dt;
                else ut = (sol.u.at(k + 1, i, c) - sol.u.at(k - 1, i, c)) / (2.0 * dt);
                double adv = 0.0;
                for (int j = 0; j < D; ++j) adv += b1[j] * sol.grad.at(k, i, c * D + j);
                sol.transport.at(k, i, c) = ut + adv;
            }
        }
    }
    const double T = g.horizon();
    auto& r = sol.report;
    r.lp_lq = lp_lq_norm(sol.u, pb.norms, 0.0, T);
    r.sobolev_proxy = r.lp_lq + lp_lq_norm(sol.grad, pb.norms, 0.0, T) + lp_lq_norm(sol.hessian, pb.norms, 0.0, T);
    r.transport_lp_lq = lp_lq_norm(sol.transport, pb.norms, 0.0, T);
    r.sup_u = sol.u.sup_norm();
    r.sup_grad = 0.0;
    for (int k = 0; k < g.time_slices(); ++k)
        for (std::size_t i = 0; i < N; ++i) {
            if (g.on_boundary(i)) continue;
            Mat<D> J;
            for (int c = 0; c < D; ++c)
                for (int j = 0; j < D; ++j) J(c, j) = c < ar ? sol.grad.at(k, i, c * D + j) : 0.0;
            r.sup_grad = std::max(r.sup_grad, ar == 1 ? J.row(0).norm() : operator_norm<D>(J));
        }
    r.holder = holder_seminorm(sol.u, 0.0, pb.options.holder_alpha, 8, 2000);
    r.contamination = boundary_contamination(sol.u);
}

/// Backward-in-time theta-scheme solve (Crank-Nicolson with Rannacher start).
template <int D>
PdeSolution<D> solve_backward(const PdeProblem<D>& pb) {
    const auto& g = pb.grid;
    const std::size_t N = g.node_count();
    const int ar = pb.arity;
    const auto& opt = pb.options;
    if (!pb.terminal.empty() && pb.terminal.size() != N * ar) throw Error("pde: terminal data has wrong size");
    if (pb.drift_source && ar != D) throw Error("pde: drift source needs a d-vector solution");
    const VectorField<D> b0cap = capped_b0(pb.coeffs, g.h());

    PdeSolution<D> sol(g, ar);
    sol.lambda = pb.lambda;
    const int m = g.time_steps();
    for (std::size_t i = 0; i < N * ar; ++i) sol.u.slice(m)[i] = pb.terminal.empty() ? 0.0 : pb.terminal[i];

    auto level = [&](double t) {
        auto lv = detail::assemble_level(pb, b0cap, t, sol.max_peclet, sol.upwinded);
        for (double v : lv.source) {
            if (!std::isfinite(v)) throw Error("pde: non-finite coefficient");
            sol.sup_source = std::max(sol.sup_source, std::abs(v));
        }
        for (const auto& row : lv.op.coef)
            for (double c : row)
                if (!std::isfinite(c)) throw Error("pde: non-finite coefficient");
        return lv;
    };

    std::vector<double> cur(N), next(N), rhs(N);
    // one backward step of size dt from level `hi` (values in cur) to `lo`
    auto step = [&](const detail::LevelData<D>& hi, const detail::LevelData<D>& lo, double dt, double theta,
                     std::span<const double> from, std::span<double> to, int c) {
        for (std::size_t i = 0; i < N; ++i) {
            if (hi.op.boundary[i]) {
                rhs[i] = from[i];
                continue;
            }
            rhs[i] = from[i] + (1.0 - theta) * dt * detail::apply_row(g, hi.op, from, i) -
                     dt * (theta * lo.source[i * ar + c] + (1.0 - theta) * hi.source[i * ar + c]);
        }
        std::copy(from.begin(), from.end(), to.begin());
        int iters = 0;
        const double res = detail::solve_shifted(g, lo.op, theta * dt, rhs, to, opt, iters);
        sol.max_residual = std::max(sol.max_residual, res);
        sol.max_linear_iterations = std::max(sol.max_linear_iterations, iters);
    };

    auto hi = level(g.time(m));
    const double dt = g.dt();
    for (int k = m - 1; k >= 0; --k) {
        const double t_lo = g.time(k);
        auto lo = level(t_lo);
        const bool startup = (m - 1 - k) < opt.rannacher_steps;
        std::optional<detail::LevelData<D>> mid;
        if (startup) mid = level(t_lo + 0.5 * dt);
        for (int c = 0; c < ar; ++c) {
            for (std::size_t i = 0; i < N; ++i) cur[i] = sol.u.at(k + 1, i, c);
            if (startup) {
                std::vector<double> half(N);
                step(hi, *mid, 0.5 * dt, 1.0, cur, half, c);
                step(*mid, lo, 0.5 * dt, 1.0, half, next, c);
            } else {
                step(hi, lo, dt, opt.theta, cur, next, c);
            }
            for (std::size_t i = 0; i < N; ++i) sol.u.at(k, i, c) = next[i];
        }
        hi = std::move(lo);
    }
    sol.u.require_finite();
    finish_solution(sol, pb);

    double sup_terminal = 0.0;
    for (double v : pb.terminal) sup_terminal = std::max(sup_terminal, std::abs(v));
    const double T = g.horizon();
    sol.max_principle_bound = sup_terminal + T * sol.sup_source / std::max(1.0, pb.lambda * T);
    sol.max_principle_ok = sol.report.sup_u <= 1.05 * sol.max_principle_bound + 1e-14;
    return sol;
}

/// Vector system for the transform: component i has source -b0^i, c = 0,
/// zero terminal data.
template <int D>
PdeSolution<D> solve_phi_system(const CoefficientSet<D>& cs, double lambda, const GridSpec<D>& grid,
                                const NormSpec& ns, const PdeOptions& opt = {}) {
    if (!ns.singular_admissible(D)) throw Error("phi system requires d/p + 2/q < 1");
    PdeProblem<D> pb(cs, lambda, grid, ns, D);
    pb.options = opt;
    pb.drift_source = true;
    return solve_backward(pb);
}

}  // namespace zvlab
