#pragma once

#include "zvlab/parallel.hpp"
#include "zvlab/sde/engine.hpp"
#include "zvlab/sde/rng.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

namespace zvlab {

/// Constants of the one-sided distance condition and of the coupling.
struct CouplingConfig {
    double K = 1.0;        ///< one-sided distance growth K_T
    double delta = 1.0;    ///< bound on |(sigma(x) - sigma(y))^* (x - y)| / |x - y|
    double lambda = 1.0;   ///< ellipticity floor of sigma sigma^*
    double alpha = 1.0;    ///< Hoelder order in (1/2, 1]
    double theta = 1.0;    ///< gain margin in (0, 2 alpha)
    double gamma = 0.0;    ///< Harnack power (0 when unused)
    double horizon = 1.0;
    double truncation = 1e3;
    double eps_stop_fraction = 0.02;
    int base_steps = 200;
    int halvings = 8;
    std::size_t paths = 10000;
    std::uint64_t seed = 1;
    double box_half_width = 4.0;  ///< exit when a member leaves twice this box
    double max_exit_fraction = 0.01;

    double eps_stop() const { return eps_stop_fraction * horizon; }

    void validate() const {
        if (!(alpha > 0.5 && alpha <= 1.0)) throw Error("coupling: alpha must lie in (1/2, 1]");
        if (!(theta > 0.0 && theta < 2.0 * alpha)) throw Error("coupling: theta must lie in (0, 2 alpha)");
        if (!(K > 0.0) || !(delta > 0.0) || !(lambda > 0.0)) throw Error("coupling: K, delta and lambda must be positive");
        if (!(horizon > 0.0)) throw Error("coupling: horizon must be positive");
        if (!(eps_stop_fraction > 0.0 && eps_stop_fraction < 0.1)) throw Error("coupling: stop gap must lie in (0, T/10)");
        if (base_steps < 1 || halvings < 0 || paths < 1) throw Error("coupling: invalid discretisation");
        if (gamma != 0.0 && !(gamma > harnack_threshold())) throw Error("gamma below Harnack threshold");
    }

    /// (1 + 2 delta / (sqrt(lambda) alpha))^2.
    double harnack_threshold() const {
        const double r = 1.0 + 2.0 * delta / (std::sqrt(lambda) * alpha);
        return r * r;
    }
};

/// eta(t) = (2 alpha - theta) / K (1 - e^{K (t - T)}).
inline double eta(double t, const CouplingConfig& cfg) {
    if (!(t < cfg.horizon)) throw Error("eta: t must be below the horizon");
    return (2.0 * cfg.alpha - cfg.theta) * (-std::expm1(cfg.K * (t - cfg.horizon))) / cfg.K;
}

inline double gamma0(const CouplingConfig& cfg) {
    const double sl = std::sqrt(cfg.lambda);
    return cfg.lambda * cfg.theta * cfg.theta / (8.0 * (2.0 * cfg.delta + sl * cfg.theta) * cfg.delta);
}

/// delta_{gamma,T} = max(delta, sqrt(lambda) alpha (sqrt(gamma) - 1) / 4).
inline double delta_gamma(const CouplingConfig& cfg, double gamma) {
    return std::max(cfg.delta, std::sqrt(cfg.lambda) * cfg.alpha * (std::sqrt(gamma) - 1.0) / 4.0);
}

/// theta = 4 delta_{gamma,T} / (sqrt(lambda) (sqrt(gamma) - 1)).
inline double theta_for_gamma(const CouplingConfig& cfg, double gamma) {
    if (!(gamma > cfg.harnack_threshold())) throw Error("gamma below Harnack threshold");
    return 4.0 * delta_gamma(cfg, gamma) / (std::sqrt(cfg.lambda) * (std::sqrt(gamma) - 1.0));
}

/// Config with delta replaced by delta_{gamma,T} and theta from theta_for_gamma.
inline CouplingConfig harnack_config(CouplingConfig cfg, double gamma) {
    const double th = theta_for_gamma(cfg, gamma);
    cfg.delta = delta_gamma(cfg, gamma);
    cfg.theta = th;
    cfg.gamma = gamma;
    cfg.validate();
    return cfg;
}

/// |x - y|^2 v |x - y|^{2 alpha}.
inline double distance_power(double dist, double alpha) {
    return std::max(dist * dist, std::pow(dist, 2.0 * alpha));
}

/// Upper bound on sup_s E R_s^{1 + gamma0}.
inline double moment_rhs(const CouplingConfig& c, double dist) {
    const double sl = std::sqrt(c.lambda);
    const double num = (4.0 * c.delta + sl * c.theta) * c.theta * c.K * distance_power(dist, c.alpha);
    const double den = 16.0 * (2.0 * c.delta + sl * c.theta) * (2.0 * c.alpha - c.theta) *
                       (-std::expm1(-c.K * c.horizon)) * c.delta * c.delta;
    return std::exp(num / den);
}

/// Exponent of the power-Harnack factor at power gamma:
///   sqrt(g)(sqrt(g) - 1) K D / (4 d (sqrt(lambda) alpha (sqrt(g) - 1) - 2 d)(1 - e^{-KT})),
/// with d = delta_{gamma,T} and D = |x - y|^2 v |x - y|^{2 alpha}.
inline double power_exponent(const CouplingConfig& c, double gamma, double dist) {
    if (!(gamma > c.harnack_threshold())) throw Error("gamma below Harnack threshold");
    const double d = delta_gamma(c, gamma);
    const double sg = std::sqrt(gamma);
    const double den = 4.0 * d * (std::sqrt(c.lambda) * c.alpha * (sg - 1.0) - 2.0 * d) * (-std::expm1(-c.K * c.horizon));
    return sg * (sg - 1.0) * c.K * distance_power(dist, c.alpha) / den;
}

/// Upper bound on sup_s E R_s log R_s.
inline double entropy_bound(const CouplingConfig& c, double dist) {
    return 2.0 * c.K * distance_power(dist, c.alpha) /
           (c.lambda * c.theta * (2.0 * c.alpha - c.theta) * (-std::expm1(-c.K * c.horizon)));
}

/// pi_n(v) = v on |v| < n, n v / |v| otherwise.
template <int D>
Vec<D> truncate(const Vec<D>& v, double n, bool* active = nullptr) {
    const double r = v.norm();
    if (active) *active = r >= n;
    return r < n ? v : (n / r * v).eval();
}

/// Time grid of the coupled scheme: base step T/m, halved each time
/// T - 2^{-k} T is crossed (k <= halvings), stopping at T - eps. Every
/// requested event time is a grid node.
inline std::vector<double> coupling_time_grid(const CouplingConfig& cfg, std::vector<double> events) {
    const double T = cfg.horizon, stop = T - cfg.eps_stop(), h = T / cfg.base_steps;
    for (int k = 1; k <= cfg.halvings; ++k) events.push_back(T - std::ldexp(T, -k));
    events.push_back(stop);
    std::sort(events.begin(), events.end());
    std::vector<double> grid{0.0};
    double t = 0.0;
    while (t < stop - 1e-14 * T) {
        int k = 0;
        while (k < cfg.halvings && t >= T - std::ldexp(T, -(k + 1)) - 1e-14 * T) ++k;
        double next = t + std::ldexp(h, -k);
        for (double e : events)
            if (e > t + 1e-14 * T) {
                next = std::min(next, e);
                break;
            }
        next = std::min(next, stop);
        t = next;
        grid.push_back(t);
    }
    grid.back() = stop;
    return grid;
}

template <int D>
struct CouplingResult {
    CouplingConfig cfg;
    Vec<D> x0, y0;
    std::vector<double> grid;
    std::vector<double> sample_times;            ///< last entry is T - eps
    std::vector<std::vector<double>> log_weight; ///< [sample][path]
    std::vector<std::vector<double>> quadratic;  ///< [sample][path] half the integral of |u|^2
    std::vector<std::vector<double>> distance;   ///< [sample][path]
    std::vector<double> coalescence_eps;         ///< gaps as fractions of T
    std::vector<std::vector<double>> coalescence_distance;
    std::vector<Vec<D>> x_final, y_final;
    std::vector<unsigned char> exited, glued;
    std::size_t truncation_events = 0;
    std::size_t correction_events = 0;
    std::size_t exits = 0;
    std::size_t sign_glues = 0;  ///< 1D steps whose difference changed sign

    std::size_t paths() const { return x_final.size(); }
    double initial_distance() const { return (x0 - y0).norm(); }
};

/// Coupled pair: X from x, Y from y with the gain-eta correction, shared
/// increments, left-point log-weights. Pairs closer than the floor, or (in
/// 1D) whose difference changes sign within a step, are glued.
template <int D>
CouplingResult<D> simulate_pair(const SdeModel<D>& model, const Vec<D>& x, const Vec<D>& y, const CouplingConfig& cfg,
                                int sample_count = 8) {
    cfg.validate();
    if (sample_count < 1) throw Error("coupling: need at least one sample time");
    CouplingResult<D> res;
    res.cfg = cfg;
    res.x0 = x;
    res.y0 = y;
    const double T = cfg.horizon, stop = T - cfg.eps_stop();
    for (int k = 1; k <= sample_count; ++k) res.sample_times.push_back(stop * k / sample_count);
    res.coalescence_eps = {0.2, 0.1, 0.05, 0.02};
    std::vector<double> events = res.sample_times;
    for (double e : res.coalescence_eps)
        if (e >= cfg.eps_stop_fraction - 1e-12) events.push_back(T - e * T);
    res.grid = coupling_time_grid(cfg, events);
    const auto& grid = res.grid;
    const std::size_t steps = grid.size() - 1;

    auto index_of = [&](double t) {
        std::size_t best = 0;
        for (std::size_t i = 0; i < grid.size(); ++i)
            if (std::abs(grid[i] - t) < std::abs(grid[best] - t)) best = i;
        return best;
    };
    std::vector<std::size_t> sample_idx, coal_idx;
    for (double s : res.sample_times) sample_idx.push_back(index_of(s));
    std::vector<double> coal_eps;
    for (double e : res.coalescence_eps)
        if (e >= cfg.eps_stop_fraction - 1e-12) {
            coal_eps.push_back(e);
            coal_idx.push_back(index_of(T - e * T));
        }
    res.coalescence_eps = coal_eps;

    const std::size_t N = cfg.paths;
    const std::size_t S = sample_idx.size(), C = coal_idx.size();
    res.log_weight.assign(S, std::vector<double>(N, 0.0));
    res.quadratic.assign(S, std::vector<double>(N, 0.0));
    res.distance.assign(S, std::vector<double>(N, 0.0));
    res.coalescence_distance.assign(C, std::vector<double>(N, 0.0));
    res.x_final.assign(N, Vec<D>::Zero());
    res.y_final.assign(N, Vec<D>::Zero());
    res.exited.assign(N, 0);
    res.glued.assign(N, 0);
    std::vector<std::size_t> trunc(N, 0), corr(N, 0), signs(N, 0);

    std::vector<double> eta_at(steps);
    for (std::size_t i = 0; i < steps; ++i) eta_at[i] = eta(grid[i], cfg);

    const double floor = 1e-8 * (1.0 + (x - y).norm());
    const double bound = 2.0 * cfg.box_half_width;
    const CounterNormal noise(cfg.seed);

    parallel_for(N, [&](std::size_t p) {
        Vec<D> X = x, Y = y;
        double logR = 0.0, quad = 0.0;
        bool glued = (X - Y).norm() < floor;
        if (glued) Y = X;
        std::size_t si = 0, ci = 0;
        auto record = [&](std::size_t i) {
            while (si < S && sample_idx[si] == i) {
                res.log_weight[si][p] = logR;
                res.quadratic[si][p] = quad;
                res.distance[si][p] = (X - Y).norm();
                ++si;
            }
            while (ci < C && coal_idx[ci] == i) {
                res.coalescence_distance[ci][p] = (X - Y).norm();
                ++ci;
            }
        };
        record(0);
        for (std::size_t i = 0; i < steps; ++i) {
            const double t = grid[i], dt = grid[i + 1] - grid[i];
            const auto z = noise.pair(p, i, Stream::coupling);
            Vec<D> dw;
            for (int a = 0; a < D; ++a) dw[a] = std::sqrt(dt) * z[a];
            const auto [bx, sx] = model.coefficients(t, X);
            Vec<D> Xn = X + bx * dt + sx * dw;
            if (model.xi) Xn += model.xi(t) * dt;
            Vec<D> Yn;
            if (glued) {
                Yn = Xn;
            } else {
                const auto [by, sy] = model.coefficients(t, Y);
                const Vec<D> v = X - Y;
                const double r = v.norm();
                const double denom = eta_at[i] * std::min(std::pow(r, 2.0 - 2.0 * cfg.alpha), 1.0);
                bool active = false;
                const Vec<D> u = truncate<D>((sx.inverse() * v / denom).eval(), cfg.truncation, &active);
                ++corr[p];
                if (active) ++trunc[p];
                logR += -u.dot(dw) - 0.5 * u.squaredNorm() * dt;
                quad += 0.5 * u.squaredNorm() * dt;
                Yn = Y + by * dt + sy * dw + sy * u * dt;
                if (model.xi) Yn += model.xi(t) * dt;
                bool glue = (Xn - Yn).norm() < floor;
                if constexpr (D == 1) {
                    if (!glue && (Xn[0] - Yn[0]) * v[0] < 0.0) {
                        glue = true;
                        ++signs[p];
                    }
                }
                if (glue) {
                    Yn = Xn;
                    glued = true;
                }
            }
            if (!all_finite<D>(Xn) || !all_finite<D>(Yn) || max_abs_coord<D>(Xn) > bound || max_abs_coord<D>(Yn) > bound) {
                res.exited[p] = 1;
                for (; si < S; ++si) {
                    res.log_weight[si][p] = logR;
                    res.quadratic[si][p] = quad;
                    res.distance[si][p] = (X - Y).norm();
                }
                for (; ci < C; ++ci) res.coalescence_distance[ci][p] = (X - Y).norm();
                break;
            }
            X = Xn;
            Y = Yn;
            record(i + 1);
        }
        res.x_final[p] = X;
        res.y_final[p] = Y;
        res.glued[p] = glued ? 1 : 0;
    });
    for (std::size_t p = 0; p < N; ++p) {
        res.truncation_events += trunc[p];
        res.correction_events += corr[p];
        res.exits += res.exited[p];
        res.sign_glues += signs[p];
    }
    if (static_cast<double>(res.exits) > cfg.max_exit_fraction * N) throw Error("coupling: box exit on too many paths");
    return res;
}

/// Mean of exp(v) with its standard error, computed with a max shift.
inline MeanStat exp_mean(std::span<const double> logs) {
    MeanStat out;
    out.count = logs.size();
    if (logs.empty()) return out;
    const double m = *std::max_element(logs.begin(), logs.end());
    std::vector<double> e(logs.size());
    for (std::size_t i = 0; i < logs.size(); ++i) e[i] = std::exp(logs[i] - m);
    const MeanStat s = mean_and_se(e);
    out.mean = std::exp(m + std::log(s.mean));
    out.se = s.se > 0.0 ? std::exp(m + std::log(s.se)) : 0.0;
    return out;
}

template <int D>
std::vector<double> kept_values(const CouplingResult<D>& res, const std::vector<double>& v) {
    std::vector<double> out;
    out.reserve(v.size());
    for (std::size_t p = 0; p < v.size(); ++p)
        if (!res.exited[p]) out.push_back(v[p]);
    return out;
}

struct MartingaleReport {
    std::vector<double> times;
    std::vector<MeanStat> mean_weight;
    std::vector<double> failing_times;
    bool pass = false;
};

/// |E R_s - 1| <= 3 SE at every sample time. With drop_quadratic the -1/2
/// integral is removed from the log-weights (negative control).
template <int D>
MartingaleReport verify_martingale(const CouplingResult<D>& res, bool drop_quadratic = false) {
    MartingaleReport rep;
    rep.times = res.sample_times;
    for (std::size_t s = 0; s < res.sample_times.size(); ++s) {
        std::vector<double> logs = res.log_weight[s];
        if (drop_quadratic)
            for (std::size_t p = 0; p < logs.size(); ++p) logs[p] += res.quadratic[s][p];
        const MeanStat m = exp_mean(kept_values(res, logs));
        rep.mean_weight.push_back(m);
        if (!(std::abs(m.mean - 1.0) <= 3.0 * m.se)) rep.failing_times.push_back(res.sample_times[s]);
    }
    rep.pass = rep.failing_times.empty();
    return rep;
}

struct MomentReport {
    double gamma0 = 0.0;
    double lhs = 0.0;           ///< max over sample times of E R^{1 + gamma0}
    double lhs_relative_se = 0.0;
    double rhs = 0.0;
    bool pass = false;
};

template <int D>
MomentReport verify_moment_bound(const CouplingResult<D>& res, const CouplingConfig& cfg) {
    MomentReport rep;
    rep.gamma0 = gamma0(cfg);
    rep.rhs = moment_rhs(cfg, res.initial_distance());
    for (std::size_t s = 0; s < res.sample_times.size(); ++s) {
        std::vector<double> logs = kept_values(res, res.log_weight[s]);
        for (double& v : logs) v *= 1.0 + rep.gamma0;
        const MeanStat m = exp_mean(logs);
        if (m.mean > rep.lhs) {
            rep.lhs = m.mean;
            rep.lhs_relative_se = m.mean > 0 ? m.se / m.mean : 0.0;
        }
    }
    rep.pass = rep.lhs <= rep.rhs * (1.0 + 3.0 * rep.lhs_relative_se);
    return rep;
}

enum class Verdict { pass, fail, inconclusive };

inline const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::pass: return "pass";
        case Verdict::fail: return "fail";
        default: return "inconclusive";
    }
}

/// Self-normalised weighted mean sum R g / sum R with a delta-method SE.
inline MeanStat weighted_mean(std::span<const double> logs, std::span<const double> g) {
    MeanStat out;
    out.count = logs.size();
    if (logs.empty()) return out;
    const double m = *std::max_element(logs.begin(), logs.end());
    std::vector<double> w(logs.size()), wg(logs.size());
    for (std::size_t i = 0; i < logs.size(); ++i) {
        w[i] = std::exp(logs[i] - m);
        wg[i] = w[i] * g[i];
    }
    const double W = tree_sum(w) / w.size();
    const double A = tree_sum(wg) / w.size() / W;
    std::vector<double> z(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) z[i] = w[i] * (g[i] - A) / W;
    out.mean = A;
    out.se = mean_and_se(z).se;
    return out;
}

template <int D>
using Readout = std::function<Vec<D>(const Vec<D>&)>;

struct HarnackLine {
    double lhs = 0.0;
    double rhs = 0.0;
    double combined_se = 0.0;  ///< relative for power checks, absolute for log checks
    double margin = 0.0;       ///< rhs / lhs for power checks, rhs - lhs for log checks
    Verdict verdict = Verdict::inconclusive;
};

struct HarnackReport {
    double exponent = 0.0;  ///< cost term added in log units
    std::vector<HarnackLine> lines;
    Verdict verdict() const {
        bool inc = false;
        for (const auto& l : lines) {
            if (l.verdict == Verdict::fail) return Verdict::fail;
            if (l.verdict == Verdict::inconclusive) inc = true;
        }
        return inc ? Verdict::inconclusive : Verdict::pass;
    }
};

namespace detail {

template <int D>
void final_samples(const CouplingResult<D>& res, const ScalarField<D>& f, const Readout<D>& readout, std::vector<double>& logs,
                   std::vector<double>& fy, std::vector<double>& fx) {
    const double tf = res.sample_times.back();
    for (std::size_t p = 0; p < res.paths(); ++p) {
        if (res.exited[p]) continue;
        const Vec<D> ry = readout ? readout(res.y_final[p]) : res.y_final[p];
        const Vec<D> rx = readout ? readout(res.x_final[p]) : res.x_final[p];
        logs.push_back(res.log_weight.back()[p]);
        fy.push_back(f(tf, ry));
        fx.push_back(f(tf, rx));
    }
}

}  // namespace detail

/// (E[R f(Y)])^gamma <= E[f^gamma(X)] exp(power exponent) at T - eps, for each f.
/// res must come from harnack_config(cfg, gamma).
template <int D>
HarnackReport harnack_power_check(const CouplingResult<D>& res, const std::vector<ScalarField<D>>& fs,
                                  const Readout<D>& readout = {}) {
    const auto& cfg = res.cfg;
    const double gamma = cfg.gamma;
    if (!(gamma > 1.0)) throw Error("harnack: config carries no power");
    HarnackReport rep;
    const double dist = res.initial_distance();
    rep.exponent = dist == 0.0 ? 0.0 : power_exponent(cfg, gamma, dist);
    for (const auto& f : fs) {
        std::vector<double> logs, fy, fx;
        detail::final_samples(res, f, readout, logs, fy, fx);
        for (double v : fy)
            if (!(v > 0.0)) throw Error("harnack: test function must be positive");
        const MeanStat a = weighted_mean(logs, fy);
        for (double& v : fx) v = std::pow(v, gamma);
        const MeanStat b = mean_and_se(fx);
        HarnackLine line;
        line.lhs = std::pow(a.mean, gamma);
        line.rhs = b.mean * std::exp(rep.exponent);
        const double rl = gamma * a.se / a.mean, rr = b.se / b.mean;
        line.combined_se = std::sqrt(rl * rl + rr * rr);
        line.margin = line.rhs / line.lhs;
        // a wide interval only matters when its upper end crosses the bound
        if (line.lhs > line.rhs * (1.0 + 3.0 * line.combined_se + 1e-12)) line.verdict = Verdict::fail;
        else if (line.combined_se > 0.1 && line.lhs * (1.0 + 3.0 * line.combined_se) > line.rhs) line.verdict = Verdict::inconclusive;
        else line.verdict = Verdict::pass;
        rep.lines.push_back(line);
    }
    return rep;
}

/// E[R log f(Y)] <= log E[f(X)] + quadratic_term at T - eps, for each f.
template <int D>
HarnackReport log_harnack_check(const CouplingResult<D>& res, const std::vector<ScalarField<D>>& fs,
                                double quadratic_term, const Readout<D>& readout = {}) {
    HarnackReport rep;
    rep.exponent = quadratic_term;
    for (const auto& f : fs) {
        std::vector<double> logs, fy, fx;
        detail::final_samples(res, f, readout, logs, fy, fx);
        for (double& v : fy) {
            if (!(v > 0.0)) throw Error("harnack: test function must be positive");
            v = std::log(v);
        }
        const MeanStat a = weighted_mean(logs, fy);
        const MeanStat b = mean_and_se(fx);
        HarnackLine line;
        line.lhs = a.mean;
        line.rhs = std::log(b.mean) + quadratic_term;
        const double sb = b.se / b.mean;
        line.combined_se = std::sqrt(a.se * a.se + sb * sb);
        line.margin = line.rhs - line.lhs;
        if (line.lhs > line.rhs + 3.0 * line.combined_se + 1e-12 * (1.0 + std::abs(line.rhs))) line.verdict = Verdict::fail;
        else if (line.combined_se > 0.1 && line.lhs + 3.0 * line.combined_se > line.rhs) line.verdict = Verdict::inconclusive;
        else line.verdict = Verdict::pass;
        rep.lines.push_back(line);
    }
    return rep;
}

/// Self-normalised E[R log R] at T - eps.
template <int D>
MeanStat entropy_estimate(const CouplingResult<D>& res) {
    const auto logs = kept_values(res, res.log_weight.back());
    return weighted_mean(logs, logs);
}

/// K1 surrogate from one calibration pair: safety * kappa1 T E[R log R] / |x - y|^2.
template <int D>
double calibrate_log_harnack(const CouplingResult<D>& res, double kappa1, double safety = 2.0) {
    const double d = res.initial_distance();
    if (!(d > 0.0)) throw Error("harnack: calibration pair must be distinct");
    const MeanStat e = entropy_estimate(res);
    return safety * kappa1 * res.cfg.horizon * std::max(0.0, e.mean + 3.0 * e.se) / (d * d);
}

struct CoalescenceReport {
    std::vector<double> eps;     ///< fractions of T, decreasing
    std::vector<double> median;  ///< median |X - Y| at T - eps T
    double scale = 0.0;          ///< 10 sqrt(eta(T - eps_min T))
    bool decreasing = false;
    bool below_scale = false;
    bool pass() const { return decreasing && below_scale; }
};

template <int D>
CoalescenceReport coalescence(const CouplingResult<D>& res) {
    CoalescenceReport rep;
    rep.eps = res.coalescence_eps;
    for (const auto& d : res.coalescence_distance) {
        auto v = kept_values(res, d);
        if (v.empty()) throw Error("coalescence: no paths");
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        rep.median.push_back(n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]));
    }
    if (rep.eps.empty()) return rep;
    rep.decreasing = true;
    for (std::size_t i = 1; i < rep.median.size(); ++i)
        if (!(rep.median[i] < rep.median[i - 1] || (rep.median[i] == 0.0 && rep.median[i - 1] == 0.0)))
            rep.decreasing = false;
    const double T = res.cfg.horizon;
    rep.scale = 10.0 * std::sqrt(eta(T - rep.eps.back() * T, res.cfg));
    rep.below_scale = rep.median.back() < rep.scale;
    return rep;
}

/// Sampled constants of the one-sided distance condition for a model.
struct H5Certificate {
    double alpha = 1.0;
    double K = 0.0;       ///< sup (2<b(x)-b(y), x-y> + |sigma(x)-sigma(y)|_HS^2) / (|x-y|^2 v |x-y|^{2 alpha})
    double delta = 0.0;   ///< sup |(sigma(x)-sigma(y))^* (x-y)| / |x-y|
    double lambda = 0.0;  ///< inf smallest eigenvalue of sigma sigma^*
    std::size_t samples = 0;

    /// Config with safety margins: K and delta inflated, lambda deflated.
    /// The floors keep the formulas finite when a constant vanishes.
    CouplingConfig config(CouplingConfig base, double margin = 1.1, double k_floor = 1e-2, double delta_floor = 0.1) const {
        base.alpha = alpha;
        base.K = std::max(K * margin, k_floor);
        base.delta = std::max(delta * margin, delta_floor);
        base.lambda = lambda / margin;
        return base;
    }
};

template <int D>
H5Certificate certify_h5(const SdeModel<D>& model, double half_width, double horizon, double alpha,
                         std::size_t samples = 100000, std::uint64_t seed = 808, double small_scale = 1e-3) {
    const std::size_t chunks = 64, per = (samples + chunks - 1) / chunks;
    std::vector<H5Certificate> part(chunks);
    parallel_for(chunks, [&](std::size_t c) {
        std::mt19937_64 gen(seed + 7907 * c);
        std::uniform_real_distribution<double> ux(-half_width, half_width), ut(0.0, horizon), unit(-1.0, 1.0);
        auto& r = part[c];
        r.lambda = std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < per && c * per + s < samples; ++s) {
            const double t = ut(gen);
            Vec<D> x, y;
            for (int a = 0; a < D; ++a) x[a] = ux(gen);
            const int scale = static_cast<int>(gen() % 4);
            const double radius = scale == 0 ? 2.0 * half_width : scale == 1 ? 0.1 : scale == 2 ? 0.01 : small_scale;
            for (int a = 0; a < D; ++a) y[a] = std::clamp(x[a] + radius * unit(gen), -half_width, half_width);
            const double d = (x - y).norm();
            const auto [bx, sx] = model.coefficients(t, x);
            const auto [by, sy] = model.coefficients(t, y);
            if (d > 0.0) {
                const Mat<D> ds = sx - sy;
                const double lhs = 2.0 * (bx - by).dot(x - y) + ds.squaredNorm();
                r.K = std::max(r.K, lhs / distance_power(d, alpha));
                r.delta = std::max(r.delta, (ds.transpose() * (x - y)).norm() / d);
            }
            const Mat<D> a = sx * sx.transpose();
            Eigen::SelfAdjointEigenSolver<Mat<D>> es(a);
            r.lambda = std::min(r.lambda, es.eigenvalues()(0));
            ++r.samples;
        }
    }, 1);
    H5Certificate out;
    out.alpha = alpha;
    out.lambda = std::numeric_limits<double>::infinity();
    for (const auto& r : part) {
        out.K = std::max(out.K, r.K);
        out.delta = std::max(out.delta, r.delta);
        out.lambda = std::min(out.lambda, r.lambda);
        out.samples += r.samples;
    }
    return out;
}

}  // namespace zvlab
