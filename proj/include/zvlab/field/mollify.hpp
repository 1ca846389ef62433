#pragma once

#include "zvlab/field/grid_function.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace zvlab {

/// Lattice-offset weights of the normalized bump exp(-1 / (1 - |x/r|^2)) on
/// |x| < r, sampled at multiples of the mesh width and scaled to unit sum.
template <int D>
struct MollifierStencil {
    std::vector<std::array<int, D>> offsets;
    std::vector<double> weights;

    MollifierStencil(double radius, double mesh) {
        if (!(radius >= mesh * (1.0 - 1e-12))) throw Error("sub-mesh mollification");
        const int reach = static_cast<int>(std::ceil(radius / mesh));
        double total = 0.0;
        auto add = [&](const std::array<int, D>& o) {
            double r2 = 0.0;
            for (int a = 0; a < D; ++a) r2 += (o[a] * mesh) * (o[a] * mesh);
            const double s = r2 / (radius * radius);
            if (s >= 1.0) return;
            const double w = std::exp(-1.0 / (1.0 - s));
            offsets.push_back(o);
            weights.push_back(w);
            total += w;
        };
        if constexpr (D == 1) {
            for (int i = -reach; i <= reach; ++i) add({i});
        } else {
            for (int j = -reach; j <= reach; ++j)
                for (int i = -reach; i <= reach; ++i) add({i, j});
        }
        for (double& w : weights) w /= total;
    }
};

/// Discrete convolution with the bump of the given radius on every slice and
/// component. Values beyond the box are taken from the nearest edge node, so
/// constants are reproduced exactly and the sup-norm never grows.
template <int D>
GridFunction<D> mollify(const GridFunction<D>& g, double radius) {
    const auto& grid = g.grid();
    const MollifierStencil<D> st(radius, grid.h());
    g.require_finite();
    GridFunction<D> out(grid, g.components());
    const int n = grid.nodes_per_axis();
    for (int k = 0; k < grid.time_slices(); ++k) {
        for (std::size_t i = 0; i < grid.node_count(); ++i) {
            const auto idx = grid.unflatten(i);
            for (int c = 0; c < g.components(); ++c) {
                double acc = 0.0;
                for (std::size_t s = 0; s < st.offsets.size(); ++s) {
                    std::array<int, D> j;
                    for (int a = 0; a < D; ++a) j[a] = std::clamp(idx[a] + st.offsets[s][a], 0, n - 1);
                    acc += st.weights[s] * g.at(k, grid.flatten(j), c);
                }
                out.at(k, i, c) = acc;
            }
        }
    }
    return out;
}

/// Smooth + bounded split of a Lipschitz drift: smooth = b1 * bump (evaluated
/// through the evaluator, so no boundary extension is needed), remainder =
/// b1 - smooth. For a Lipschitz b1 the remainder is bounded by Lip(b1) * radius.
template <int D>
struct DriftSplit {
    GridFunction<D> smooth;
    GridFunction<D> remainder;
    double remainder_sup = 0.0;
};

template <int D>
DriftSplit<D> decompose_lipschitz_drift(const VectorField<D>& b1, const GridSpec<D>& grid, double radius) {
    const MollifierStencil<D> st(radius, grid.h());
    GridFunction<D> smooth(grid, D), remainder(grid, D);
    const double h = grid.h();
    double sup = 0.0;
    for (int k = 0; k < grid.time_slices(); ++k) {
        const double t = grid.time(k);
        for (std::size_t i = 0; i < grid.node_count(); ++i) {
            const Vec<D> x = grid.node(i);
            Vec<D> acc = Vec<D>::Zero();
            for (std::size_t s = 0; s < st.offsets.size(); ++s) {
                Vec<D> y = x;
                for (int a = 0; a < D; ++a) y[a] += st.offsets[s][a] * h;
                acc += st.weights[s] * b1(t, y);
            }
            const Vec<D> v = b1(t, x);
            double mag = 0.0;
            for (int c = 0; c < D; ++c) {
                smooth.at(k, i, c) = acc[c];
                remainder.at(k, i, c) = v[c] - acc[c];
                mag += remainder.at(k, i, c) * remainder.at(k, i, c);
            }
            sup = std::max(sup, std::sqrt(mag));
        }
    }
    return {std::move(smooth), std::move(remainder), sup};
}

}  // namespace zvlab
