#pragma once

#include "zvlab/common.hpp"

#include <array>
#include <cstddef>
#include <optional>
#include <string>

namespace zvlab {

/// Uniform space-time grid on [-L, L]^D x [0, T]. Nodes per axis is odd so the
/// origin is a node.
template <int D>
class GridSpec {
    static_assert(D == 1 || D == 2, "grids are one- or two-dimensional");

public:
    using Index = std::array<int, D>;

    GridSpec(double half_width, int nodes_per_axis, double horizon, int time_steps)
        : half_width_(half_width), n_(nodes_per_axis), horizon_(horizon), m_(time_steps) {
        if (!(half_width > 0) || !std::isfinite(half_width)) throw Error("grid: half-width must be positive");
        if (nodes_per_axis < 3 || nodes_per_axis % 2 == 0) throw Error("grid: nodes per axis must be odd and >= 3");
        if (!(horizon > 0) || !std::isfinite(horizon)) throw Error("grid: horizon must be positive");
        if (time_steps < 1) throw Error("grid: time steps must be >= 1");
    }

    static constexpr int dimension() { return D; }
    double half_width() const { return half_width_; }
    int nodes_per_axis() const { return n_; }
    double horizon() const { return horizon_; }
    int time_steps() const { return m_; }

    double h() const { return 2.0 * half_width_ / (n_ - 1); }
    double dt() const { return horizon_ / m_; }
    int time_slices() const { return m_ + 1; }

    std::size_t node_count() const {
        std::size_t c = 1;
        for (int i = 0; i < D; ++i) c *= static_cast<std::size_t>(n_);
        return c;
    }

    double coord(int i) const { return -half_width_ + i * h(); }
    double time(int k) const { return k == m_ ? horizon_ : k * dt(); }

    Index unflatten(std::size_t flat) const {
        Index idx{};
        for (int a = 0; a < D; ++a) {
            idx[a] = static_cast<int>(flat % n_);
            flat /= n_;
        }
        return idx;
    }

    std::size_t flatten(const Index& idx) const {
        std::size_t flat = 0;
        for (int a = D - 1; a >= 0; --a) flat = flat * n_ + static_cast<std::size_t>(idx[a]);
        return flat;
    }

    /// Stride of axis a in the flattened node index.
    std::size_t stride(int axis) const {
        std::size_t s = 1;
        for (int a = 0; a < axis; ++a) s *= static_cast<std::size_t>(n_);
        return s;
    }

    Vec<D> node(std::size_t flat) const {
        const Index idx = unflatten(flat);
        Vec<D> x;
        for (int a = 0; a < D; ++a) x[a] = coord(idx[a]);
        return x;
    }

    bool on_boundary(std::size_t flat) const {
        const Index idx = unflatten(flat);
        for (int a = 0; a < D; ++a)
            if (idx[a] == 0 || idx[a] == n_ - 1) return true;
        return false;
    }

    /// Outer shell used by the boundary-contamination diagnostic.
    bool in_outer_shell(const Vec<D>& x, double fraction = 0.1) const {
        return max_abs_coord<D>(x) > (1.0 - fraction) * half_width_;
    }

    bool in_core(const Vec<D>& x, double fraction) const { return max_abs_coord<D>(x) <= fraction * half_width_; }

    bool contains(const Vec<D>& x) const { return max_abs_coord<D>(x) <= half_width_; }

    /// Index of the node at the origin (exists because n is odd).
    std::size_t origin() const {
        Index idx{};
        idx.fill((n_ - 1) / 2);
        return flatten(idx);
    }

    /// Trapezoid weight of a node for integration over the box.
    double quadrature_weight(std::size_t flat) const {
        const Index idx = unflatten(flat);
        double w = 1.0;
        for (int a = 0; a < D; ++a) w *= (idx[a] == 0 || idx[a] == n_ - 1) ? 0.5 * h() : h();
        return w;
    }

    /// Refined grid: (n, m) -> (2n - 1, 2m), same box and horizon.
    GridSpec refined() const { return GridSpec(half_width_, 2 * n_ - 1, horizon_, 2 * m_); }

    bool operator==(const GridSpec&) const = default;

private:
    double half_width_;
    int n_;
    double horizon_;
    int m_;
};

/// Integrability exponents for L^p-L^q norms.
struct NormSpec {
    double p = 2.0;
    double q = 2.0;
    std::optional<double> p1;  ///< exponent of the singular drift, p1 >= p
    bool weighted = false;     ///< weight (1 + |x|^2)^(-p/2)

    NormSpec() = default;
    NormSpec(double p_, double q_, bool weighted_ = false) : p(p_), q(q_), weighted(weighted_) { validate(); }

    void validate() const {
        if (!(p > 1.0) || !std::isfinite(p)) throw Error("norm: p must lie in (1, inf)");
        if (!(q > 1.0) || !std::isfinite(q)) throw Error("norm: q must lie in (1, inf)");
        if (p1 && !(*p1 >= p)) throw Error("norm: p1 must be >= p");
    }

    /// Integrability budget d/p + 2/q.
    double budget(int d) const { return d / p + 2.0 / q; }
    bool krylov_admissible(int d) const { return budget(d) < 2.0; }
    bool singular_admissible(int d) const { return budget(d) < 1.0; }
    bool harnack_power_admissible(int d) const { return budget(d) < 0.5; }
};

}  // namespace zvlab
