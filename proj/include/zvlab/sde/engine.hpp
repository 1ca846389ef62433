#pragma once

#include "zvlab/field/coefficients.hpp"
#include "zvlab/parallel.hpp"
#include "zvlab/sde/rng.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace zvlab {

/// dX = drift dt + diffusion dW (+ xi(t) dt). Drift and diffusion are
/// produced together so transformed models can share one inversion.
template <int D>
struct SdeModel {
    using Coefficients = std::function<std::pair<Vec<D>, Mat<D>>(double, const Vec<D>&)>;
    Coefficients coefficients;
    std::function<Vec<D>(double)> xi;  ///< optional extra control

    static SdeModel from(VectorField<D> drift, MatrixField<D> diffusion) {
        SdeModel m;
        m.coefficients = [drift = std::move(drift), diffusion = std::move(diffusion)](double t, const Vec<D>& x) {
            return std::make_pair(drift(t, x), diffusion(t, x));
        };
        return m;
    }

    /// Original singular SDE: drift b1 + b2 + b0, with b0 capped at the mesh.
    static SdeModel original(const CoefficientSet<D>& cs, double mesh) {
        auto b0 = capped_b0(cs, mesh);
        SdeModel m;
        m.coefficients = [cs, b0](double t, const Vec<D>& x) {
            return std::make_pair((cs.regular_drift(t, x) + b0(t, x)).eval(), cs.sigma(t, x));
        };
        return m;
    }
};

struct EnsembleSpec {
    std::size_t paths = 10000;
    int steps = 1000;
    double horizon = 1.0;
    std::uint64_t seed = 1;
    double box_half_width = 4.0;  ///< paths leaving twice this box are frozen
    double max_escape_fraction = 0.2;
};

/// Lazily stored ensemble: summaries are kept, full trajectories are
/// regenerated on demand from (seed, path index), bit for bit.
template <int D>
class PathEnsemble {
public:
    /// visitor(step j, t_j, x_j, dW_j) is called before each Euler update.
    using Visitor = std::function<void(int, double, const Vec<D>&, const Vec<D>&)>;

    PathEnsemble(SdeModel<D> model, Vec<D> x0, EnsembleSpec spec)
        : model_(std::move(model)), x0_(x0), spec_(spec), noise_(spec.seed) {
        if (spec_.steps < 1 || spec_.paths < 1) throw Error("ensemble: need at least one path and one step");
        if (spec_.steps < 100) throw Error("ensemble: step must be at most T/100");
        if (max_abs_coord<D>(x0_) > 0.5 * spec_.box_half_width) throw Error("ensemble: start outside the inner half of the box");
    }

    const EnsembleSpec& spec() const { return spec_; }
    const Vec<D>& start() const { return x0_; }
    const SdeModel<D>& model() const { return model_; }
    double h() const { return spec_.horizon / spec_.steps; }
    const std::vector<Vec<D>>& terminal() const { return terminal_; }
    const std::vector<unsigned char>& escaped() const { return escaped_; }
    std::size_t escape_count() const { return escapes_; }
    double escape_fraction() const { return static_cast<double>(escapes_) / spec_.paths; }

    /// Brownian increment of (path, step): sqrt(h) times standard normals.
    Vec<D> increment(std::size_t path, int step) const {
        const auto z = noise_.pair(path, static_cast<std::uint64_t>(step));
        Vec<D> dw;
        for (int a = 0; a < D; ++a) dw[a] = std::sqrt(h()) * z[a];
        return dw;
    }

    /// Simulates one path; returns (terminal state, escaped).
    std::pair<Vec<D>, bool> replay(std::size_t path, const Visitor& visit = {}) const {
        const double hh = h();
        const double bound = 2.0 * spec_.box_half_width;
        Vec<D> x = x0_;
        for (int j = 0; j < spec_.steps; ++j) {
            const double t = j * hh;
            const Vec<D> dw = increment(path, j);
            if (visit) visit(j, t, x, dw);
            const auto [drift, diff] = model_.coefficients(t, x);
            Vec<D> next = x + drift * hh + diff * dw;
            if (model_.xi) next += model_.xi(t) * hh;
            if (!all_finite<D>(next) || max_abs_coord<D>(next) > bound) return {x, true};
            x = next;
        }
        return {x, false};
    }

    void run() {
        terminal_.assign(spec_.paths, Vec<D>::Zero());
        escaped_.assign(spec_.paths, 0);
        parallel_for(spec_.paths, [&](std::size_t p) {
            const auto [x, esc] = replay(p);
            terminal_[p] = x;
            escaped_[p] = esc ? 1 : 0;
        });
        escapes_ = 0;
        for (auto e : escaped_) escapes_ += e;
        if (escape_fraction() > spec_.max_escape_fraction) throw Error("domain too small for scenario");
    }

private:
    SdeModel<D> model_;
    Vec<D> x0_;
    EnsembleSpec spec_;
    CounterNormal noise_;
    std::vector<Vec<D>> terminal_;
    std::vector<unsigned char> escaped_;
    std::size_t escapes_ = 0;
};

template <int D>
PathEnsemble<D> integrate(const SdeModel<D>& model, const Vec<D>& x0, const EnsembleSpec& spec) {
    PathEnsemble<D> ens(model, x0, spec);
    ens.run();
    return ens;
}

/// Terminal mean and variance per coordinate over non-escaped paths.
template <int D>
std::pair<MeanStat, MeanStat> terminal_moments(const PathEnsemble<D>& ens, int coord = 0) {
    std::vector<double> v, sq;
    const auto& term = ens.terminal();
    for (std::size_t p = 0; p < term.size(); ++p)
        if (!ens.escaped()[p]) v.push_back(term[p][coord]);
    const MeanStat m = mean_and_se(v);
    sq.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - m.mean) * (v[i] - m.mean) * v.size() / (v.size() - 1.0);
    return {m, mean_and_se(sq)};
}

struct IncrementSanity {
    double mean = 0.0;            ///< pooled over all paths and steps
    double variance = 0.0;
    double mean_bound = 0.0;      ///< 4 sqrt(h / N)
    bool ok = false;
};

/// Pooled moments of the Brownian increments of one coordinate.
template <int D>
IncrementSanity increment_sanity(const PathEnsemble<D>& ens, int coord = 0) {
    const std::size_t N = ens.spec().paths;
    const int m = ens.spec().steps;
    std::vector<double> s1(N), s2(N);
    parallel_for(N, [&](std::size_t p) {
        double a = 0.0, b = 0.0;
        for (int j = 0; j < m; ++j) {
            const double w = ens.increment(p, j)[coord];
            a += w;
            b += w * w;
        }
        s1[p] = a;
        s2[p] = b;
    });
    IncrementSanity r;
    const double total = static_cast<double>(N) * m;
    r.mean = tree_sum(s1) / total;
    r.variance = tree_sum(s2) / total - r.mean * r.mean;
    r.mean_bound = 4.0 * std::sqrt(ens.h() / N);
    r.ok = std::abs(r.mean) <= r.mean_bound && std::abs(r.variance / ens.h() - 1.0) <= 0.05;
    return r;
}

/// Trajectory dump: little-endian int64 header {d, N, m_sde, seed}, then per
/// path (m_sde + 1) states of d float64 values. Escaped paths repeat their
/// frozen state after the exit step.
template <int D>
void dump_trajectories(const PathEnsemble<D>& ens, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open dump file: " + path);
    auto put64 = [&](std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        out.write(reinterpret_cast<const char*>(b), 8);
    };
    auto putf = [&](double v) { put64(std::bit_cast<std::uint64_t>(v)); };
    const auto& s = ens.spec();
    put64(D);
    put64(s.paths);
    put64(static_cast<std::uint64_t>(s.steps));
    put64(s.seed);
    std::vector<double> buf;
    for (std::size_t p = 0; p < s.paths; ++p) {
        buf.clear();
        const auto [xT, esc] = ens.replay(p, [&](int, double, const Vec<D>& x, const Vec<D>&) {
            for (int a = 0; a < D; ++a) buf.push_back(x[a]);
        });
        const std::size_t want = static_cast<std::size_t>(s.steps + 1) * D;
        while (buf.size() < want)
            for (int a = 0; a < D; ++a) buf.push_back(xT[a]);
        for (double v : buf) putf(v);
    }
    if (!out) throw Error("failed writing dump file: " + path);
}

struct ConsistencyCurve {
    std::vector<int> steps;
    std::vector<double> h;
    std::vector<double> mean_error;  ///< E max_t |Phi_t(X_t) - Y_t|
    std::vector<double> se;
    double slope = 0.0;              ///< log-log slope of error against h
    bool decreasing = false;
    std::size_t escapes = 0;
};

/// Runs X (original model) and Y (transformed model, Y_0 = Phi_0(x0)) on the
/// same Brownian increments and records E max_t |Phi_t(X_t) - Y_t| for each
/// step count.
template <int D, class PhiFn>
ConsistencyCurve transform_consistency(const SdeModel<D>& original, const SdeModel<D>& transformed, PhiFn&& phi,
                                       const Vec<D>& x0, const std::vector<int>& step_counts, std::size_t paths,
                                       double horizon, std::uint64_t seed, double box_half_width) {
    ConsistencyCurve c;
    const CounterNormal noise(seed);
    const double bound = 2.0 * box_half_width;
    for (int m : step_counts) {
        const double h = horizon / m;
        std::vector<double> err(paths, 0.0);
        std::vector<unsigned char> esc(paths, 0);
        parallel_for(paths, [&](std::size_t p) {
            Vec<D> x = x0, y = phi(0.0, x0);
            double worst = 0.0;
            for (int j = 0; j < m; ++j) {
                const double t = j * h;
                const auto z = noise.pair(p, static_cast<std::uint64_t>(j));
                Vec<D> dw;
                for (int a = 0; a < D; ++a) dw[a] = std::sqrt(h) * z[a];
                const auto [bx, sx] = original.coefficients(t, x);
                const auto [by, sy] = transformed.coefficients(t, y);
                x += bx * h + sx * dw;
                y += by * h + sy * dw;
                if (!all_finite<D>(x) || !all_finite<D>(y) || max_abs_coord<D>(x) > bound || max_abs_coord<D>(y) > bound) {
                    esc[p] = 1;
                    return;
                }
                worst = std::max(worst, (phi(t + h, x) - y).norm());
            }
            err[p] = worst;
        });
        std::vector<double> kept;
        for (std::size_t p = 0; p < paths; ++p) {
            if (esc[p]) ++c.escapes;
            else kept.push_back(err[p]);
        }
        const auto ms = mean_and_se(kept);
        c.steps.push_back(m);
        c.h.push_back(h);
        c.mean_error.push_back(ms.mean);
        c.se.push_back(ms.se);
    }
    c.decreasing = true;
    for (std::size_t i = 1; i < c.mean_error.size(); ++i)
        if (!(c.mean_error[i] < c.mean_error[i - 1])) c.decreasing = false;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(c.h.size());
    bool positive = true;
    for (std::size_t i = 0; i < c.h.size(); ++i) {
        if (!(c.mean_error[i] > 0)) positive = false;
        const double lx = std::log(c.h[i]), ly = std::log(std::max(c.mean_error[i], 1e-300));
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    c.slope = positive && n > 1 ? (n * sxy - sx * sy) / (n * sxx - sx * sx) : 0.0;
    return c;
}

}  // namespace zvlab
