#pragma once

#include "zvlab/field/grid_function.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace zvlab {

namespace detail {

/// Slice values at time t, linear in time between stored slices.
template <int D>
std::vector<double> slice_at(const GridFunction<D>& g, double t) {
    const auto [k, w] = g.time_cell(t);
    const auto a = g.slice(k);
    std::vector<double> out(a.begin(), a.end());
    if (w != 0.0) {
        const auto b = g.slice(k + 1);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - w) * a[i] + w * b[i];
    }
    return out;
}

inline double magnitude(std::span<const double> slice, std::size_t node, int comps) {
    if (comps == 1) return std::abs(slice[node]);
    double s = 0.0;
    for (int c = 0; c < comps; ++c) s += slice[node * comps + c] * slice[node * comps + c];
    return std::sqrt(s);
}

/// Trapezoid integral of |g(t_k, .)|^p over the box.
template <int D>
double spatial_power_integral(const GridFunction<D>& g, std::span<const double> slice, double p) {
    const auto& grid = g.grid();
    double acc = 0.0;
    for (std::size_t i = 0; i < grid.node_count(); ++i) {
        const double m = magnitude(slice, i, g.components());
        if (m != 0.0) acc += grid.quadrature_weight(i) * std::pow(m, p);
    }
    return acc;
}

}  // namespace detail

/// ||g||_{L^p_q(t0, t1)}: trapezoid in space of |g|^p, raised to q/p, then
/// integrated in time over the piecewise-linear interpolant between slices.
/// Vector fields use the pointwise Euclidean magnitude.
template <int D>
double lp_lq_norm(const GridFunction<D>& g, const NormSpec& ns, double t0, double t1) {
    ns.validate();
    g.require_finite();
    if (!(t0 < t1)) throw Error("empty window");
    const auto& grid = g.grid();
    t0 = std::max(t0, 0.0);
    t1 = std::min(t1, grid.horizon());
    if (!(t0 < t1)) throw Error("empty window");

    std::vector<double> F(grid.time_slices());
    for (int k = 0; k < grid.time_slices(); ++k)
        F[k] = std::pow(detail::spatial_power_integral(g, g.slice(k), ns.p), ns.q / ns.p);

    const double dt = grid.dt();
    auto value_at = [&](double t) {
        const auto [k, w] = g.time_cell(t);
        return w == 0.0 ? F[k] : (1.0 - w) * F[k] + w * F[k + 1];
    };
    // integrate the piecewise-linear F over [t0, t1] exactly
    double acc = 0.0;
    double a = t0;
    while (a < t1) {
        const int k = std::min(static_cast<int>(std::floor(a / dt + 1e-12)), grid.time_steps() - 1);
        const double b = std::min(t1, grid.time(k + 1));
        if (b <= a) break;
        acc += 0.5 * (b - a) * (value_at(a) + value_at(b));
        a = b;
    }
    return std::pow(acc, 1.0 / ns.q);
}

/// (int |g(t, x)|^p (1 + |x|^2)^(-p/2) dx)^(1/p) at one time.
template <int D>
double weighted_lp_norm(const GridFunction<D>& g, const NormSpec& ns, double t) {
    ns.validate();
    if (!ns.weighted) throw Error("weighted norm requested without weight flag");
    g.require_finite();
    const auto slice = detail::slice_at(g, t);
    const auto& grid = g.grid();
    double acc = 0.0;
    for (std::size_t i = 0; i < grid.node_count(); ++i) {
        const double m = detail::magnitude(slice, i, g.components());
        if (m == 0.0) continue;
        const Vec<D> x = grid.node(i);
        acc += grid.quadrature_weight(i) * std::pow(m, ns.p) * std::pow(1.0 + x.squaredNorm(), -0.5 * ns.p);
    }
    return std::pow(acc, 1.0 / ns.p);
}

/// Spatial L^p norm of one slice (no time integration).
template <int D>
double spatial_lp_norm(const GridFunction<D>& g, double p, double t) {
    const auto slice = detail::slice_at(g, t);
    return std::pow(detail::spatial_power_integral(g, slice, p), 1.0 / p);
}

/// Discrete Hoelder seminorm of g(t, .): sup |g(x) - g(y)| / |x - y|^alpha over
/// all node pairs within 2h * near_window of each other plus far_pairs
/// uniformly random node pairs.
template <int D>
double holder_seminorm(const GridFunction<D>& g, double t, double alpha, int near_window = 8,
                       std::size_t far_pairs = 10000, std::uint64_t seed = 0x5eed) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw Error("holder exponent must lie in (0, 1]");
    g.require_finite();
    const auto& grid = g.grid();
    const auto slice = detail::slice_at(g, t);
    const int comps = g.components();
    const int n = grid.nodes_per_axis();
    const double h = grid.h();
    const int reach = 2 * near_window;

    auto diff = [&](std::size_t i, std::size_t j) {
        double s = 0.0;
        for (int c = 0; c < comps; ++c) {
            const double d = slice[i * comps + c] - slice[j * comps + c];
            s += d * d;
        }
        return std::sqrt(s);
    };

    double best = 0.0;
    // near pairs: offsets o with 0 < |o| * h <= 2h * near_window, half space only
    std::vector<std::array<int, D>> offsets;
    if constexpr (D == 1) {
        for (int o = 1; o <= reach; ++o) offsets.push_back({o});
    } else {
        for (int oy = 0; oy <= reach; ++oy)
            for (int ox = -reach; ox <= reach; ++ox) {
                if (oy == 0 && ox <= 0) continue;
                if (ox * ox + oy * oy > reach * reach) continue;
                offsets.push_back({ox, oy});
            }
    }
    for (std::size_t i = 0; i < grid.node_count(); ++i) {
        const auto idx = grid.unflatten(i);
        for (const auto& o : offsets) {
            std::array<int, D> jdx;
            bool inside = true;
            double dist2 = 0.0;
            for (int a = 0; a < D; ++a) {
                jdx[a] = idx[a] + o[a];
                if (jdx[a] < 0 || jdx[a] >= n) inside = false;
                dist2 += static_cast<double>(o[a]) * o[a];
            }
            if (!inside) continue;
            const double dist = std::sqrt(dist2) * h;
            best = std::max(best, diff(i, grid.flatten(jdx)) / std::pow(dist, alpha));
        }
    }
    std::mt19937_64 gen(seed);
    const std::size_t N = grid.node_count();
    for (std::size_t s = 0; s < far_pairs; ++s) {
        const std::size_t i = gen() % N;
        const std::size_t j = gen() % N;
        if (i == j) continue;
        const double dist = (grid.node(i) - grid.node(j)).norm();
        best = std::max(best, diff(i, j) / std::pow(dist, alpha));
    }
    return best;
}

/// Fraction of the L^1 mass of g(t, .) that sits in the outer 10% shell of the
/// box, maximized over time slices. Makes domain-truncation error visible.
template <int D>
double boundary_contamination(const GridFunction<D>& g, double shell_fraction = 0.1) {
    const auto& grid = g.grid();
    double worst = 0.0;
    for (int k = 0; k < grid.time_slices(); ++k) {
        double total = 0.0, shell = 0.0;
        for (std::size_t i = 0; i < grid.node_count(); ++i) {
            const double m = grid.quadrature_weight(i) * g.magnitude(k, i);
            total += m;
            if (grid.in_outer_shell(grid.node(i), shell_fraction)) shell += m;
        }
        if (total > 0.0) worst = std::max(worst, shell / total);
    }
    return worst;
}

}  // namespace zvlab
