#pragma once

#include "zvlab/field/grid.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

namespace zvlab {

/// Values of a scalar, vector or matrix field at every (time slice, node).
/// Layout: slice-major, then node, then component.
template <int D>
class GridFunction {
public:
    static constexpr int scalar = 1;
    static constexpr int vector = D;
    static constexpr int matrix = D * D;

    GridFunction(const GridSpec<D>& grid, int components)
        : grid_(grid), components_(components),
          values_(static_cast<std::size_t>(grid.time_slices()) * grid.node_count() * components, 0.0) {
        if (components < 1) throw Error("grid function: components must be >= 1");
    }

    /// Samples fn(t, x) -> double on every node (scalar arity).
    static GridFunction sample(const GridSpec<D>& grid, const ScalarField<D>& fn) {
        GridFunction g(grid, scalar);
        for (int k = 0; k < grid.time_slices(); ++k)
            for (std::size_t i = 0; i < grid.node_count(); ++i) g.at(k, i) = fn(grid.time(k), grid.node(i));
        return g;
    }

    static GridFunction sample(const GridSpec<D>& grid, const VectorField<D>& fn) {
        GridFunction g(grid, vector);
        for (int k = 0; k < grid.time_slices(); ++k)
            for (std::size_t i = 0; i < grid.node_count(); ++i) {
                const Vec<D> v = fn(grid.time(k), grid.node(i));
                for (int c = 0; c < D; ++c) g.at(k, i, c) = v[c];
            }
        return g;
    }

    const GridSpec<D>& grid() const { return grid_; }
    int components() const { return components_; }
    std::size_t size() const { return values_.size(); }

    double& at(int k, std::size_t node, int c = 0) { return values_[offset(k, node, c)]; }
    double at(int k, std::size_t node, int c = 0) const { return values_[offset(k, node, c)]; }

    std::span<double> slice(int k) {
        return {values_.data() + offset(k, 0, 0), grid_.node_count() * components_};
    }
    std::span<const double> slice(int k) const {
        return {values_.data() + offset(k, 0, 0), grid_.node_count() * components_};
    }

    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }

    bool all_finite() const {
        return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
    }

    void require_finite() const {
        if (!all_finite()) throw Error("non-finite field");
    }

    /// Pointwise Euclidean magnitude over components.
    double magnitude(int k, std::size_t node) const {
        if (components_ == 1) return std::abs(at(k, node));
        double s = 0.0;
        for (int c = 0; c < components_; ++c) s += at(k, node, c) * at(k, node, c);
        return std::sqrt(s);
    }

    double sup_norm() const {
        double s = 0.0;
        for (int k = 0; k < grid_.time_slices(); ++k)
            for (std::size_t i = 0; i < grid_.node_count(); ++i) s = std::max(s, magnitude(k, i));
        return s;
    }

    GridFunction& operator*=(double s) {
        for (double& v : values_) v *= s;
        return *this;
    }

    GridFunction operator+(const GridFunction& o) const {
        check_compatible(o);
        GridFunction r = *this;
        for (std::size_t i = 0; i < values_.size(); ++i) r.values_[i] += o.values_[i];
        return r;
    }

    GridFunction operator-(const GridFunction& o) const {
        check_compatible(o);
        GridFunction r = *this;
        for (std::size_t i = 0; i < values_.size(); ++i) r.values_[i] -= o.values_[i];
        return r;
    }

    /// Multilinear interpolation of component c on slice k. Points outside the
    /// box take the nearest boundary value and set *outside.
    double interpolate(int k, const Vec<D>& x, int c = 0, bool* outside = nullptr) const {
        Cell cell = locate(x, outside);
        double acc = 0.0;
        for (int corner = 0; corner < (1 << D); ++corner) {
            double w = 1.0;
            std::size_t flat = 0;
            for (int a = 0; a < D; ++a) {
                const bool hi = (corner >> a) & 1;
                w *= hi ? cell.frac[a] : 1.0 - cell.frac[a];
                flat += static_cast<std::size_t>(cell.base[a] + (hi ? 1 : 0)) * grid_.stride(a);
            }
            if (w != 0.0) acc += w * at(k, flat, c);
        }
        return acc;
    }

    /// Linear in time, multilinear in space.
    double interpolate_st(double t, const Vec<D>& x, int c = 0, bool* outside = nullptr) const {
        const auto [k, w] = time_cell(t);
        if (w == 0.0) return interpolate(k, x, c, outside);
        return (1.0 - w) * interpolate(k, x, c, outside) + w * interpolate(k + 1, x, c, outside);
    }

    Vec<D> interpolate_vec_st(double t, const Vec<D>& x, bool* outside = nullptr) const {
        Vec<D> v;
        for (int c = 0; c < D; ++c) v[c] = interpolate_st(t, x, c, outside);
        return v;
    }

    /// Slice index k and weight w so that t = (1 - w) t_k + w t_{k+1}.
    std::pair<int, double> time_cell(double t) const {
        const int m = grid_.time_steps();
        double s = t / grid_.dt();
        if (!(s > 0.0)) return {0, 0.0};
        if (s >= m) return {m, 0.0};
        const double nearest = std::round(s);
        if (std::abs(s - nearest) < 1e-10) {
            const int kn = static_cast<int>(nearest);
            return kn >= m ? std::pair<int, double>{m, 0.0} : std::pair<int, double>{kn, 0.0};
        }
        int k = static_cast<int>(std::floor(s));
        if (k >= m) k = m - 1;
        return {k, s - k};
    }

    bool operator==(const GridFunction& o) const {
        return grid_ == o.grid_ && components_ == o.components_ && values_ == o.values_;
    }

private:
    struct Cell {
        std::array<int, D> base;
        std::array<double, D> frac;
    };

    Cell locate(const Vec<D>& x, bool* outside) const {
        Cell cell{};
        const double L = grid_.half_width();
        const double h = grid_.h();
        const int n = grid_.nodes_per_axis();
        for (int a = 0; a < D; ++a) {
            double xa = x[a];
            if (xa < -L || xa > L || !std::isfinite(xa)) {
                if (outside) *outside = true;
                xa = std::isfinite(xa) ? std::clamp(xa, -L, L) : 0.0;
            }
            const double s = (xa + L) / h;
            const double nearest = std::round(s);
            if (std::abs(s - nearest) < 1e-10) {
                // snap to the node so nodal evaluation is exact
                const int i = std::clamp(static_cast<int>(nearest), 0, n - 2);
                cell.base[a] = i;
                cell.frac[a] = nearest - i;
                continue;
            }
            int i = static_cast<int>(std::floor(s));
            i = std::clamp(i, 0, n - 2);
            cell.base[a] = i;
            cell.frac[a] = std::clamp(s - i, 0.0, 1.0);
        }
        return cell;
    }

    std::size_t offset(int k, std::size_t node, int c) const {
        return (static_cast<std::size_t>(k) * grid_.node_count() + node) * components_ + c;
    }

    void check_compatible(const GridFunction& o) const {
        if (!(grid_ == o.grid_) || components_ != o.components_) throw Error("grid function: incompatible operands");
    }

    GridSpec<D> grid_;
    int components_;
    std::vector<double> values_;
};

}  // namespace zvlab
