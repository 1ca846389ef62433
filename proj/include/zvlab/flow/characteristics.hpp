#pragma once

#include "zvlab/field/coefficients.hpp"
#include "zvlab/field/norms.hpp"
#include "zvlab/parallel.hpp"

#include <atomic>
#include <random>
#include <vector>

namespace zvlab {

struct FlowOptions {
    double local_tolerance = 1e-8;  ///< step-doubling bound on the per-substep error
    double tol_flow = 1e-7;         ///< composition tolerance
    int max_refinements = 24;
    double escape_factor = 2.0;     ///< the flow must stay in the box enlarged by this factor
};

/// Characteristic flow of the Lipschitz drift b1: psi(T, x) = x and
/// d psi / dt = b1(t, psi), run backward from T. Node samples of psi, its
/// Jacobian (variational equation) and of the inverse flow are stored; the
/// pointwise evaluators integrate from scratch.
template <int D>
class FlowMap {
public:
    using State = Eigen::Matrix<double, D, D + 1>;  ///< column 0: position, rest: Jacobian

    FlowMap(VectorField<D> b1, MatrixField<D> b1_jacobian, const GridSpec<D>& grid, FlowOptions opt)
        : b1_(std::move(b1)), jac_(std::move(b1_jacobian)), grid_(grid), opt_(opt), psi_(grid, D), grad_(grid, D * D),
          det_(grid, 1), inv_(grid, D), inv_grad_(grid, D * D) {}

    const GridSpec<D>& grid() const { return grid_; }
    const FlowOptions& options() const { return opt_; }
    const GridFunction<D>& psi() const { return psi_; }
    const GridFunction<D>& grad() const { return grad_; }
    const GridFunction<D>& det() const { return det_; }
    const GridFunction<D>& inverse() const { return inv_; }
    const GridFunction<D>& inverse_grad() const { return inv_grad_; }
    bool has_inverse() const { return has_inverse_; }
    std::size_t steps() const { return steps_; }
    const VectorField<D>& drift() const { return b1_; }

    Vec<D> psi_node(int k, std::size_t i) const { return node_vec(psi_, k, i); }
    Mat<D> grad_node(int k, std::size_t i) const { return node_mat(grad_, k, i); }
    Vec<D> inverse_node(int k, std::size_t i) const { return node_vec(inv_, k, i); }
    Mat<D> inverse_grad_node(int k, std::size_t i) const { return node_mat(inv_grad_, k, i); }

    /// psi(t, x) and its Jacobian by direct integration from T down to t.
    State flow_at(double t, const Vec<D>& x) const {
        std::size_t steps = 0;
        return integrate(grid_.horizon(), t, start(x), steps);
    }

    /// psi^{-1}(t, x) and its Jacobian: the forward solution from (t, x) at T.
    State inverse_at(double t, const Vec<D>& x) const {
        std::size_t steps = 0;
        return integrate(t, grid_.horizon(), start(x), steps);
    }

    /// Adaptive RK4 for position and Jacobian from s0 to s1 (either direction).
    State integrate(double s0, double s1, State y, std::size_t& steps) const {
        if (s0 == s1) return y;
        const double bound = opt_.escape_factor * grid_.half_width();
        int pieces = std::max(1, static_cast<int>(std::ceil(std::abs(s1 - s0) / grid_.dt() - 1e-9)));
        const double H = (s1 - s0) / pieces;
        for (int p = 0; p < pieces; ++p) {
            const double a = s0 + p * H;
            const double b = p + 1 == pieces ? s1 : a + H;
            int sub = 1;
            State next;
            for (int r = 0;; ++r) {
                const State coarse = run(a, b, y, sub);
                const State fine = run(a, b, y, 2 * sub);
                const double err = (fine - coarse).cwiseAbs().maxCoeff() / 15.0;
                if (err <= opt_.local_tolerance * std::max(1.0, fine.cwiseAbs().maxCoeff()) || r >= opt_.max_refinements) {
                    next = fine + (fine - coarse) / 15.0;
                    steps += 3 * sub;
                    break;
                }
                sub *= 2;
            }
            if (!next.allFinite() || max_abs_coord<D>(next.col(0).eval()) > bound) throw Error("flow escape");
            y = next;
        }
        return y;
    }

    /// Populates psi and grad psi on every node.
    void solve_forward_samples() {
        const int m = grid_.time_steps();
        const std::size_t N = grid_.node_count();
        std::vector<std::size_t> counts(N, 0);
        parallel_for(N, [&](std::size_t i) {
            State y = start(grid_.node(i));
            store(psi_, grad_, m, i, y);
            for (int k = m - 1; k >= 0; --k) {
                y = integrate(grid_.time(k + 1), grid_.time(k), y, counts[i]);
                store(psi_, grad_, k, i, y);
                const Mat<D> J = y.template rightCols<D>();
                det_.at(k, i) = J.determinant();
            }
            det_.at(m, i) = 1.0;
        }, 8);
        for (auto c : counts) steps_ += c;
    }

    /// Populates psi^{-1} and its Jacobian on every node by forward integration.
    void solve_inverse_samples() {
        const int m = grid_.time_steps();
        const std::size_t N = grid_.node_count();
        std::vector<std::size_t> counts(N, 0);
        parallel_for(N, [&](std::size_t i) {
            for (int k = 0; k <= m; ++k) {
                const State y = integrate(grid_.time(k), grid_.horizon(), start(grid_.node(i)), counts[i]);
                const Mat<D> J = y.template rightCols<D>();
                if (condition_number<D>(J) > 1e8) throw Error("degenerate Jacobian");
                store(inv_, inv_grad_, k, i, y);
            }
        }, 8);
        for (auto c : counts) steps_ += c;
        has_inverse_ = true;
    }

private:
    static State start(const Vec<D>& x) {
        State y;
        y.col(0) = x;
        y.template rightCols<D>() = Mat<D>::Identity();
        return y;
    }

    State rhs(double s, const State& y) const {
        State out;
        const Vec<D> x = y.col(0);
        out.col(0) = b1_(s, x);
        out.template rightCols<D>() = jac_(s, x) * y.template rightCols<D>();
        return out;
    }

    State run(double a, double b, State y, int sub) const {
        const double h = (b - a) / sub;
        for (int j = 0; j < sub; ++j) {
            const double s = a + j * h;
            const State k1 = rhs(s, y);
            const State k2 = rhs(s + 0.5 * h, y + 0.5 * h * k1);
            const State k3 = rhs(s + 0.5 * h, y + 0.5 * h * k2);
            const State k4 = rhs(s + h, y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        return y;
    }

    static void store(GridFunction<D>& pos, GridFunction<D>& jac, int k, std::size_t i, const State& y) {
        for (int a = 0; a < D; ++a) {
            pos.at(k, i, a) = y(a, 0);
            for (int b = 0; b < D; ++b) jac.at(k, i, a * D + b) = y(a, 1 + b);
        }
    }

    static Vec<D> node_vec(const GridFunction<D>& g, int k, std::size_t i) {
        Vec<D> v;
        for (int a = 0; a < D; ++a) v[a] = g.at(k, i, a);
        return v;
    }
    static Mat<D> node_mat(const GridFunction<D>& g, int k, std::size_t i) {
        Mat<D> m;
        for (int a = 0; a < D; ++a)
            for (int b = 0; b < D; ++b) m(a, b) = g.at(k, i, a * D + b);
        return m;
    }

    VectorField<D> b1_;
    MatrixField<D> jac_;
    GridSpec<D> grid_;
    FlowOptions opt_;
    GridFunction<D> psi_, grad_, det_, inv_, inv_grad_;
    bool has_inverse_ = false;
    std::size_t steps_ = 0;
};

/// Forward flow on the grid. A missing Jacobian evaluator falls back to
/// central differences of b1.
template <int D>
FlowMap<D> solve_flow(const VectorField<D>& b1, const GridSpec<D>& grid, MatrixField<D> b1_jacobian = {},
                      FlowOptions opt = {}) {
    if (!b1_jacobian) {
        CoefficientSet<D> tmp;
        tmp.b1 = b1;
        b1_jacobian = [tmp](double t, const Vec<D>& x) { return tmp.eval_b1_jacobian(t, x); };
    }
    FlowMap<D> fm(b1, std::move(b1_jacobian), grid, opt);
    fm.solve_forward_samples();
    return fm;
}

struct InverseCheck {
    double composition_defect = 0.0;  ///< max |psi^{-1}(t, psi(t, x)) - x| over the core
    double root_defect = 0.0;         ///< max gap to Newton root-finding on the random sample
    std::size_t samples = 0;
};

/// Inverse flow on the grid, then the composition invariant on the inner 80%
/// core and a Newton cross-check psi(t, z) = x on random nodes.
template <int D>
InverseCheck solve_inverse_flow(FlowMap<D>& fm, std::size_t root_samples = 200, std::uint64_t seed = 11) {
    fm.solve_inverse_samples();
    const auto& g = fm.grid();
    InverseCheck out;
    for (int k = 0; k < g.time_slices(); k += std::max(1, g.time_steps() / 10)) {
        for (std::size_t i = 0; i < g.node_count(); ++i) {
            if (!g.in_core(g.node(i), 0.8)) continue;
            const Vec<D> y = fm.psi_node(k, i);
            const Vec<D> back = fm.inverse_at(g.time(k), y).col(0);
            out.composition_defect = std::max(out.composition_defect, (back - g.node(i)).norm());
        }
    }
    std::mt19937_64 gen(seed);
    for (std::size_t s = 0; s < root_samples; ++s) {
        const int k = static_cast<int>(gen() % g.time_slices());
        const std::size_t i = gen() % g.node_count();
        const Vec<D> x = g.node(i);
        if (!g.in_core(x, 0.8)) continue;
        Vec<D> z = fm.inverse_node(k, i);
        for (int it = 0; it < 50; ++it) {
            const auto st = fm.flow_at(g.time(k), z);
            const Mat<D> J = st.template rightCols<D>();
            if (condition_number<D>(J) > 1e8) throw Error("degenerate Jacobian");
            const Vec<D> r = st.col(0) - x;
            z -= J.inverse() * r;
            if (r.norm() < 1e-13 * (1.0 + x.norm())) break;
        }
        out.root_defect = std::max(out.root_defect, (z - fm.inverse_node(k, i)).norm());
        ++out.samples;
    }
    return out;
}

/// max ||(grad psi)^{-1}(t, x) - (grad psi^{-1})(t, psi(t, x))|| over nodes of
/// every slice, with the right side evaluated pointwise.
template <int D>
double gradient_identity_check(const FlowMap<D>& fm, double core = 0.8) {
    const auto& g = fm.grid();
    double worst = 0.0;
    for (int k = 0; k < g.time_slices(); k += std::max(1, g.time_steps() / 10))
        for (std::size_t i = 0; i < g.node_count(); ++i) {
            if (!g.in_core(g.node(i), core)) continue;
            const Mat<D> J = fm.grad_node(k, i);
            const Mat<D> right = fm.inverse_at(g.time(k), fm.psi_node(k, i)).template rightCols<D>();
            worst = std::max(worst, operator_norm<D>(J.inverse() - right));
        }
    return worst;
}

enum class JDirection { forward, inverse };

template <int D>
struct JResult {
    GridFunction<D> values;
    std::size_t extrapolated = 0;  ///< nodes whose source point left the box
    std::vector<unsigned char> flags;
};

/// (J g)(t, x) = g(t, psi^{-1}(t, x)); (J^{-1} g)(t, x) = g(t, psi(t, x)).
template <int D>
JResult<D> apply_J(const GridFunction<D>& g, const FlowMap<D>& fm, JDirection dir) {
    if (!(g.grid() == fm.grid())) throw Error("apply_J: grid mismatch");
    if (dir == JDirection::forward && !fm.has_inverse()) throw Error("apply_J: inverse flow not populated");
    const auto& grid = g.grid();
    JResult<D> out{GridFunction<D>(grid, g.components()), 0,
                   std::vector<unsigned char>(grid.time_slices() * grid.node_count(), 0)};
    for (int k = 0; k < grid.time_slices(); ++k)
        for (std::size_t i = 0; i < grid.node_count(); ++i) {
            const Vec<D> src = dir == JDirection::forward ? fm.inverse_node(k, i) : fm.psi_node(k, i);
            bool outside = false;
            for (int c = 0; c < g.components(); ++c) out.values.at(k, i, c) = g.interpolate(k, src, c, &outside);
            if (outside) {
                out.flags[k * grid.node_count() + i] = 1;
                ++out.extrapolated;
            }
        }
    return out;
}

/// Chain rule grad(J g) = J([(grad psi)^{-1}]^T grad g) at random core points:
/// the left side by central differences of the pointwise J g.
template <int D>
double chain_rule_defect(const FlowMap<D>& fm, const ScalarField<D>& g, const VectorField<D>& grad_g,
                         std::size_t samples = 100, std::uint64_t seed = 5, double step = 1e-4) {
    const auto& grid = fm.grid();
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> ux(-0.5 * grid.half_width(), 0.5 * grid.half_width());
    std::uniform_real_distribution<double> ut(0.0, grid.horizon());
    double worst = 0.0;
    auto Jg = [&](double t, const Vec<D>& x) { return g(t, fm.inverse_at(t, x).col(0)); };
    for (std::size_t s = 0; s < samples; ++s) {
        const double t = ut(gen);
        Vec<D> x;
        for (int a = 0; a < D; ++a) x[a] = ux(gen);
        Vec<D> fd;
        for (int a = 0; a < D; ++a) {
            Vec<D> xp = x, xm = x;
            xp[a] += step;
            xm[a] -= step;
            fd[a] = (Jg(t, xp) - Jg(t, xm)) / (2.0 * step);
        }
        const Vec<D> z = fm.inverse_at(t, x).col(0);
        const Mat<D> J = fm.flow_at(t, z).template rightCols<D>();
        const Vec<D> rhs = J.inverse().transpose() * grad_g(t, z);
        worst = std::max(worst, (fd - rhs).norm());
    }
    return worst;
}

struct TransportReport {
    double identity_defect = 0.0;  ///< sup |(d_t + b1 . grad)(J g) - J(d_t g)|
    double ratio = 0.0;            ///< ||(d_t + b1 . grad) J g|| / ||d_t g|| in L^p_q
};

/// Empirical form of the transport equivalence: the left side by finite
/// differences of the pointwise J g on the grid, both norms in L^p_q.
template <int D>
TransportReport transport_equivalence(const FlowMap<D>& fm, const ScalarField<D>& g, const ScalarField<D>& dg_dt,
                                      const NormSpec& ns, double step = 1e-4) {
    const auto& grid = fm.grid();
    GridFunction<D> lhs(grid, 1), base(grid, 1);
    TransportReport r;
    auto Jg = [&](double t, const Vec<D>& x) { return g(t, fm.inverse_at(t, x).col(0)); };
    for (int k = 0; k < grid.time_slices(); ++k) {
        const double t = grid.time(k);
        for (std::size_t i = 0; i < grid.node_count(); ++i) {
            const Vec<D> x = grid.node(i);
            const Vec<D> b = fm.drift()(t, x);
            // derivative along (1, b1) in space-time, second order (one-sided at the ends)
            auto along = [&](double e) { return Jg(t + e, (x + e * b).eval()); };
            double v;
            if (t - step < 0.0) v = (-3.0 * along(0.0) + 4.0 * along(step) - along(2.0 * step)) / (2.0 * step);
            else if (t + step > grid.horizon()) v = (3.0 * along(0.0) - 4.0 * along(-step) + along(-2.0 * step)) / (2.0 * step);
            else v = (along(step) - along(-step)) / (2.0 * step);
            lhs.at(k, i) = v;
            base.at(k, i) = dg_dt(t, x);
            r.identity_defect = std::max(r.identity_defect, std::abs(v - dg_dt(t, fm.inverse_node(k, i))));
        }
    }
    const double denom = lp_lq_norm(base, ns, 0.0, grid.horizon());
    r.ratio = denom > 0 ? lp_lq_norm(lhs, ns, 0.0, grid.horizon()) / denom : 0.0;
    return r;
}

struct FlowDiagnostics {
    double sup_grad = 0.0;
    double gronwall_bound = 0.0;
    double min_det = 0.0;
    bool gronwall_ok = false;
    bool orientation_ok = false;
    bool terminal_identity = false;
};

template <int D>
FlowDiagnostics flow_diagnostics(const FlowMap<D>& fm, double lip_b1) {
    const auto& g = fm.grid();
    FlowDiagnostics d;
    d.min_det = std::numeric_limits<double>::infinity();
    d.terminal_identity = true;
    for (int k = 0; k < g.time_slices(); ++k)
        for (std::size_t i = 0; i < g.node_count(); ++i) {
            d.sup_grad = std::max(d.sup_grad, operator_norm<D>(fm.grad_node(k, i)));
            d.min_det = std::min(d.min_det, fm.det().at(k, i));
        }
    const int m = g.time_steps();
    for (std::size_t i = 0; i < g.node_count(); ++i)
        if (fm.psi_node(m, i) != g.node(i)) d.terminal_identity = false;
    d.gronwall_bound = std::exp(lip_b1 * g.horizon());
    d.gronwall_ok = d.sup_grad <= d.gronwall_bound * (1.0 + 1e-6);
    d.orientation_ok = d.min_det > 0.0;
    return d;
}

}  // namespace zvlab
