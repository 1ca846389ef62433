#pragma once

#include "zvlab/coupling/coupling.hpp"
#include "zvlab/flow/characteristics.hpp"
#include "zvlab/harness/config.hpp"
#include "zvlab/harness/report.hpp"
#include "zvlab/harness/scenarios.hpp"
#include "zvlab/pde/decay.hpp"
#include "zvlab/pde/solver.hpp"
#include "zvlab/sde/engine.hpp"
#include "zvlab/sde/krylov.hpp"
#include "zvlab/zvonkin/zvonkin.hpp"

#include <chrono>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace zvlab {

inline const std::vector<std::string>& pipeline_commands() {
    static const std::vector<std::string> c = {"solve-pde", "build-transform", "simulate", "krylov",
                                               "couple",    "harnack",         "full-pipeline", "list-scenarios"};
    return c;
}

/// Five positive bounded test functions.
template <int D>
std::vector<ScalarField<D>> harnack_test_functions() {
    return {
        [](double, const Vec<D>&) { return 1.0; },
        [](double, const Vec<D>& z) { return 1.0 + 0.5 * std::sin(z[0]); },
        [](double, const Vec<D>& z) { return 1.0 + 0.5 * std::cos(2.0 * z[D - 1]); },
        [](double, const Vec<D>& z) { return 1.5 + 0.5 * std::tanh(z.sum()); },
        [](double, const Vec<D>& z) { return 0.5 + std::exp(-z.squaredNorm()); },
    };
}

/// Four starting pairs around x0 with separations 0.25 and 0.5.
template <int D>
std::vector<std::pair<Vec<D>, Vec<D>>> harnack_pairs(const Vec<D>& x0) {
    Vec<D> e = Vec<D>::Zero();
    e[0] = 1.0;
    const Vec<D> diag = Vec<D>::Ones() / std::sqrt(static_cast<double>(D));
    return {
        {x0, (x0 + 0.25 * e).eval()},
        {(x0 + 0.25 * e).eval(), (x0 - 0.25 * e).eval()},
        {(x0 - 0.5 * e).eval(), x0},
        {(x0 + 0.25 * diag).eval(), (x0 - 0.25 * diag).eval()},
    };
}

template <int D>
class Pipeline {
public:
    Pipeline(Scenario<D> sc, const RunConfig& cfg) : sc_(std::move(sc)), cfg_(cfg), report_(sc_.name, cfg) {
        cfg_.validate();
        if (cfg_.grid_n > 0 || cfg_.grid_m > 0) {
            const auto& g = sc_.grid;
            sc_.grid = GridSpec<D>(g.half_width(), cfg_.grid_n > 0 ? cfg_.grid_n : g.nodes_per_axis(), g.horizon(),
                                   cfg_.grid_m > 0 ? cfg_.grid_m : g.time_steps());
        }
    }

    const Scenario<D>& scenario() const { return sc_; }
    RunReport& report() { return report_; }
    const RunReport& report() const { return report_; }

    /// Runs one command (not list-scenarios) and returns the exit code of the checks.
    int run(const std::string& command) {
        if (command == "solve-pde") timed("solve-pde", [&] { solve_pde(); });
        else if (command == "build-transform") timed("build-transform", [&] { build_transform(); });
        else if (command == "simulate") timed("simulate", [&] { simulate(); });
        else if (command == "krylov") timed("krylov", [&] { krylov(); });
        else if (command == "couple") timed("couple", [&] { couple(); });
        else if (command == "harnack") timed("harnack", [&] { harnack(); });
        else if (command == "full-pipeline") {
            for (const auto& c : pipeline_commands())
                if (c != "full-pipeline" && c != "list-scenarios") run(c);
        } else {
            throw Error("unknown command: " + command);
        }
        return report_.exit_code();
    }

    void solve_pde() {
        const auto& g = sc_.grid;
        PdeProblem<D> pb(sc_.coeffs, cfg_.lambda > 0.0 ? cfg_.lambda : 1.0, g, sc_.norms);
        const auto sol = solve_backward(pb);
        report_.exact("pde.lambda", pb.lambda);
        report_.exact("pde.sup_u", sol.report.sup_u);
        report_.exact("pde.sup_grad", sol.report.sup_grad);
        report_.exact("pde.lp_lq", sol.report.lp_lq);
        report_.exact("pde.sobolev_proxy", sol.report.sobolev_proxy);
        report_.exact("pde.boundary_contamination", sol.report.contamination);
        const double tol = pb.options.linear_tolerance * (1.0 + sol.sup_source);
        report_.check("pde.residual", sol.max_residual, tol, sol.max_residual <= tol);
        report_.check("pde.max_principle", sol.report.sup_u, sol.max_principle_bound, sol.max_principle_ok);

        const auto sweep = lambda_sweep(pb, {10.0, 100.0, 1000.0, 10000.0}, DecayPrediction{});
        report_.exact("pde.decay.beta0", sweep.beta0);
        for (std::size_t i = 0; i < sweep.lambdas.size(); ++i)
            report_.exact("pde.decay.sup_u.lambda=" + format_number(sweep.lambdas[i]), sweep.norms[i]);
        report_.check("pde.decay.non_increasing", sweep.non_increasing ? 1.0 : 0.0, 1.0, sweep.non_increasing);
        report_.check("pde.decay.bounded", sweep.constant, -sweep.beta0 + 0.2, sweep.bounded);
        report_.check("pde.decay.slope", sweep.degenerate_zero ? 0.0 : sweep.slope, -sweep.beta0 + 0.2, sweep.pass);

        // characteristics of b1 on a box small enough that the flow stays inside
        const double lip = std::max(sc_.coeffs.lip_b1, 0.0);
        const double L = g.half_width() * std::exp(-lip * g.horizon());
        const GridSpec<D> fg(L, g.nodes_per_axis(), g.horizon(), g.time_steps());
        FlowOptions fo;
        fo.escape_factor = std::max(fo.escape_factor, 1.05 * std::sqrt(double(D)) * std::exp(lip * g.horizon()));
        auto fm = solve_flow<D>(sc_.coeffs.b1, fg, sc_.coeffs.b1_jacobian, fo);
        const auto inv = solve_inverse_flow(fm);
        const auto d = flow_diagnostics(fm, lip);
        report_.exact("flow.half_width", L);
        report_.check("flow.gronwall", d.sup_grad, d.gronwall_bound * (1.0 + 1e-6), d.gronwall_ok);
        report_.check("flow.orientation", d.min_det, 0.0, d.orientation_ok);
        report_.check("flow.terminal_identity", d.terminal_identity ? 1.0 : 0.0, 1.0, d.terminal_identity);
        report_.check("flow.composition_defect", inv.composition_defect, fm.options().tol_flow,
                      inv.composition_defect <= fm.options().tol_flow);
    }

    void build_transform() {
        const auto& zm = transform();
        const std::size_t pairs = cfg_.fast ? 1000 : 10000;
        report_.exact("transform.lambda", zm.lambda());
        report_.exact("transform.identity", zm.identity() ? 1.0 : 0.0);
        report_.check("transform.sup_grad_phi", zm.sup_grad(), 0.5, zm.contractive());
        const auto fwd = certify_bilipschitz(zm, pairs);
        report_.check("transform.bilipschitz.violations", static_cast<double>(fwd.violations), 0.0, fwd.violations == 0);
        report_.exact("transform.bilipschitz.min_ratio", fwd.min_ratio);
        report_.exact("transform.bilipschitz.max_ratio", fwd.max_ratio);
        const auto inv = certify_inverse(zm, pairs / 5);
        report_.check("transform.inverse.violations", static_cast<double>(inv.violations), 0.0, inv.violations == 0);
        report_.exact("transform.inverse.escapes", static_cast<double>(inv.escapes));
        const auto tc = certify_transform(zm, cfg_.fast ? 5000 : 20000);
        report_.check("transform.ellipticity.violations", static_cast<double>(tc.ellipticity_violations), 0.0,
                      tc.ellipticity_violations == 0);
        report_.exact("transform.sigma_form.min", tc.min_sigma_form);
        report_.exact("transform.sigma_form.max", tc.max_sigma_form);
        report_.exact("transform.z_lipschitz", tc.z_lipschitz);
    }

    void simulate() {
        const auto& ens = ensemble();
        for (int a = 0; a < D; ++a) {
            const auto [mean, var] = terminal_moments(ens, a);
            const std::string c = std::to_string(a);
            report_.estimate("sde.terminal_mean." + c, mean.mean, mean.se, std::numeric_limits<double>::quiet_NaN(), "info");
            report_.estimate("sde.terminal_variance." + c, var.mean, var.se, std::numeric_limits<double>::quiet_NaN(), "info");
        }
        const auto inc = increment_sanity(ens);
        report_.check("sde.increment_mean", inc.mean, inc.mean_bound, std::abs(inc.mean) <= inc.mean_bound);
        report_.check("sde.increment_variance_ratio", inc.variance / ens.h(), 1.05, inc.ok);
        report_.exact("sde.escape_fraction", static_cast<double>(ens.escape_count()) / ens.spec().paths);
        if (cfg_.dump) {
            std::filesystem::create_directories(cfg_.out);
            dump_trajectories(ens, cfg_.out + "/trajectories.bin");
        }
        if (sc_.singular_drift) {
            const auto& zm = transform();
            SdeModel<D> tr;
            tr.coefficients = [&zm](double t, const Vec<D>& y) { return zm.transformed(t, y); };
            const std::vector<int> steps = cfg_.fast ? std::vector<int>{100, 200, 400} : std::vector<int>{100, 200, 400, 800, 1600};
            const auto c = transform_consistency<D>(original_model(), tr, [&zm](double t, const Vec<D>& x) { return zm.forward(t, x); },
                                                    sc_.x0, steps, cfg_.fast ? 2000 : cfg_.paths, sc_.grid.horizon(),
                                                    cfg_.seed + 17, sc_.grid.half_width());
            for (std::size_t i = 0; i < c.steps.size(); ++i)
                report_.estimate("sde.consistency.error.steps=" + std::to_string(c.steps[i]), c.mean_error[i], c.se[i],
                                 std::numeric_limits<double>::quiet_NaN(), "info");
            report_.check("sde.consistency.decreasing", c.decreasing ? 1.0 : 0.0, 1.0, c.decreasing);
            report_.check("sde.consistency.slope", c.slope, 0.3, c.slope >= 0.3);
        }
    }

    void krylov() {
        const auto& ens = ensemble();
        const double r0 = std::max(0.4, 8.0 * sc_.grid.h());
        const double s = 1.0 / std::sqrt(2.0);
        const auto rep = bump_family(ens, sc_.grid, sc_.norms, sc_.x0, {r0, r0 * s, r0 / 2, r0 * s / 2, r0 / 4});
        for (std::size_t i = 0; i < rep.radii.size(); ++i)
            report_.exact("krylov.bump_ratio.r=" + format_number(rep.radii[i]), rep.ratios[i]);
        report_.check("krylov.bump_family.max_ratio", rep.max_ratio, 3.0 * rep.median_ratio, rep.pass);
        report_.exact("krylov.k_pq", k_pq(D, sc_.norms.p, sc_.norms.q));
        if (sc_.singular_drift) {
            const auto b0 = capped_b0(sc_.coeffs, sc_.grid.h());
            const auto g = GridFunction<D>::sample(sc_.grid, ScalarField<D>([b0](double t, const Vec<D>& x) { return b0(t, x).norm(); }));
            const auto k = krylov_estimate(ens, g, sc_.norms, 0.0, sc_.grid.horizon());
            report_.estimate("krylov.b0.occupation", k.estimate.mean, k.estimate.se, std::numeric_limits<double>::quiet_NaN(), "info");
            report_.exact("krylov.b0.norm", k.norm);
            report_.exact("krylov.b0.ratio", k.ratio);
        }
    }

    void couple() {
        const auto cfg = coupling_config();
        report_.exact("coupling.K", cfg.K);
        report_.exact("coupling.delta", cfg.delta);
        report_.exact("coupling.lambda", cfg.lambda);
        report_.exact("coupling.alpha", cfg.alpha);
        report_.exact("coupling.theta", cfg.theta);
        report_.exact("coupling.gamma0", gamma0(cfg));
        Vec<D> e = Vec<D>::Zero();
        e[0] = 0.25;
        const auto res = simulate_coupled((sc_.x0 + e).eval(), (sc_.x0 - e).eval(), cfg);
        const auto m = verify_martingale(res);
        for (std::size_t s = 0; s < m.times.size(); ++s) {
            const auto& w = m.mean_weight[s];
            report_.estimate("coupling.martingale.t=" + format_number(m.times[s]), w.mean, w.se, 1.0,
                             std::abs(w.mean - 1.0) <= 3.0 * w.se ? "pass" : "fail");
        }
        const auto neg = verify_martingale(res, true);
        report_.check("coupling.martingale.negative_control", static_cast<double>(neg.failing_times.size()), 1.0, !neg.pass);
        const auto mb = verify_moment_bound(res, cfg);
        report_.estimate("coupling.moment_bound", mb.lhs, mb.lhs * mb.lhs_relative_se, mb.rhs, mb.pass ? "pass" : "fail");
        const auto co = coalescence(res);
        for (std::size_t i = 0; i < co.eps.size(); ++i)
            report_.exact("coupling.coalescence.median.eps=" + format_number(co.eps[i]), co.median[i]);
        report_.check("coupling.coalescence.decreasing", co.decreasing ? 1.0 : 0.0, 1.0, co.decreasing);
        report_.check("coupling.coalescence.scale", co.median.empty() ? 0.0 : co.median.back(), co.scale, co.below_scale);
        const double tf = res.correction_events ? static_cast<double>(res.truncation_events) / res.correction_events : 0.0;
        report_.check("coupling.truncation_fraction", tf, 1e-3, tf < 1e-3);
        report_.exact("coupling.exit_fraction", static_cast<double>(res.exits) / res.paths());
    }

    void harnack() {
        const auto base = coupling_config();
        const double gamma = cfg_.gamma > 0.0 ? cfg_.gamma : std::max(sc_.default_gamma, 2.0 * base.harnack_threshold());
        report_.exact("harnack.gamma", gamma);
        report_.exact("harnack.gamma_threshold", base.harnack_threshold());
        const auto hc = harnack_config(base, gamma);
        const double identity = std::abs(1.0 / (gamma - 1.0) - gamma0(hc));
        report_.check("harnack.gamma0_identity", identity, 1e-12, identity <= 1e-12);
        report_.exact("harnack.theta", hc.theta);

        const auto fs = harnack_test_functions<D>();
        const auto pairs = harnack_pairs<D>(sc_.x0);
        std::vector<CouplingResult<D>> runs;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            auto c = hc;
            c.seed = cfg_.seed + 101 * (i + 1);
            runs.push_back(simulate_coupled(pairs[i].first, pairs[i].second, c));
        }
        for (std::size_t i = 0; i < runs.size(); ++i) {
            const auto rep = harnack_power_check(runs[i], fs, readout());
            report_.exact("harnack.power.pair" + std::to_string(i) + ".exponent", rep.exponent);
            for (std::size_t j = 0; j < rep.lines.size(); ++j) {
                const auto& l = rep.lines[j];
                add_line("harnack.power.pair" + std::to_string(i) + ".f" + std::to_string(j), l, l.lhs * l.combined_se);
            }
        }

        // log form: K1 frozen from a separate calibration pair
        Vec<D> e = Vec<D>::Zero();
        e[0] = 0.2;
        auto cc = hc;
        cc.seed = cfg_.seed + 7777;
        const auto cal = simulate_coupled((sc_.x0 + e).eval(), (sc_.x0 - e).eval(), cc);
        const double kappa1 = sc_.coeffs.kappa1, T = hc.horizon;
        const double k1 = calibrate_log_harnack(cal, kappa1);
        report_.exact("harnack.log.K1", k1);
        const std::vector<ScalarField<D>> logfs(fs.begin() + 1, fs.begin() + 4);
        for (std::size_t i = 0; i < 3; ++i) {
            const double d = runs[i].initial_distance();
            const auto rep = log_harnack_check(runs[i], logfs, k1 * d * d / (kappa1 * T), readout());
            for (std::size_t j = 0; j < rep.lines.size(); ++j) {
                const auto& l = rep.lines[j];
                add_line("harnack.log.pair" + std::to_string(i) + ".f" + std::to_string(j + 1), l, l.combined_se);
            }
        }
        auto dc = hc;
        dc.seed = cfg_.seed + 8888;
        const auto same = simulate_coupled(sc_.x0, sc_.x0, dc);
        const auto deg = log_harnack_check(same, fs, 0.0, readout());
        bool exact_ok = true;
        for (const auto& l : deg.lines) exact_ok = exact_ok && l.lhs <= l.rhs + 1e-12;
        report_.check("harnack.log.coincident_starts", exact_ok ? 1.0 : 0.0, 1.0, exact_ok);
    }

    /// Transform built once per pipeline (lambda search unless fixed by config).
    const ZvonkinMap<D>& transform() {
        if (!transform_) {
            ZvonkinOptions opt;
            if (cfg_.lambda > 0.0) opt.fixed_lambda = cfg_.lambda;
            transform_.emplace(build_zvonkin(sc_.coeffs, sc_.grid, sc_.norms, opt).map);
        }
        return *transform_;
    }

    SdeModel<D> original_model() const { return SdeModel<D>::original(sc_.coeffs, sc_.grid.h()); }

    /// Coupling runs on the transformed coordinates when the drift is singular.
    SdeModel<D> coupling_model() {
        if (!sc_.singular_drift) return original_model();
        const auto& zm = transform();
        SdeModel<D> m;
        m.coefficients = [&zm](double t, const Vec<D>& y) { return zm.transformed(t, y); };
        return m;
    }

    Readout<D> readout() {
        if (!sc_.singular_drift) return {};
        const auto& zm = transform();
        const double t = sc_.grid.horizon() * (1.0 - cfg_.eps_stop_fraction);
        return [&zm, t](const Vec<D>& y) { return zm.inverse(t, y); };
    }

    /// Analytic constants when the scenario has them, measured otherwise.
    CouplingConfig coupling_config() {
        if (coupling_cfg_) return *coupling_cfg_;
        CouplingConfig c;
        if (sc_.coupling) c = *sc_.coupling;
        c.horizon = sc_.grid.horizon();
        c.paths = cfg_.fast ? std::min<std::size_t>(cfg_.coupling_paths, 2000) : cfg_.coupling_paths;
        c.seed = cfg_.seed;
        c.base_steps = sc_.coupling ? c.base_steps : cfg_.base_steps;
        c.eps_stop_fraction = cfg_.eps_stop_fraction;
        c.truncation = cfg_.truncation;
        c.box_half_width = sc_.grid.half_width();
        if (!sc_.coupling) {
            const auto cert = certify_h5(coupling_model(), 0.8 * sc_.grid.half_width(), sc_.grid.horizon(),
                                         sc_.coupling_alpha, cfg_.fast ? 20000 : 100000, cfg_.seed + 31);
            c = cert.config(c);
            c.theta = c.alpha;
            report_.exact("coupling.h5.K_measured", cert.K);
            report_.exact("coupling.h5.delta_measured", cert.delta);
            report_.exact("coupling.h5.lambda_measured", cert.lambda);
        }
        c.validate();
        coupling_cfg_ = c;
        return c;
    }

    /// Coupled pair started from original-coordinate points.
    CouplingResult<D> simulate_coupled(const Vec<D>& x, const Vec<D>& y, const CouplingConfig& cfg) {
        const auto model = coupling_model();
        if (!sc_.singular_drift) return simulate_pair(model, x, y, cfg);
        const auto& zm = transform();
        auto res = simulate_pair(model, zm.forward(0.0, x), zm.forward(0.0, y), cfg);
        return res;
    }

    const PathEnsemble<D>& ensemble() {
        if (!ensemble_) {
            EnsembleSpec es;
            es.paths = cfg_.fast ? std::min<std::size_t>(cfg_.paths, 2000) : cfg_.paths;
            es.steps = cfg_.steps;
            es.horizon = sc_.grid.horizon();
            es.seed = cfg_.seed;
            es.box_half_width = sc_.grid.half_width();
            ensemble_.emplace(integrate(original_model(), sc_.x0, es));
        }
        return *ensemble_;
    }

private:
    template <class F>
    void timed(const std::string& stage, F&& f) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        report_.time(stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }

    void add_line(const std::string& id, const HarnackLine& l, double se) {
        Record r{id, l.lhs, l.lhs - 3.0 * se, l.lhs + 3.0 * se, l.rhs, to_string(l.verdict), "mc-3se"};
        report_.add(std::move(r));
    }

    Scenario<D> sc_;
    RunConfig cfg_;
    RunReport report_;
    std::optional<ZvonkinMap<D>> transform_;
    std::optional<PathEnsemble<D>> ensemble_;
    std::optional<CouplingConfig> coupling_cfg_;
};

/// Dispatches on the scenario dimension; returns the report and exit code.
inline std::pair<RunReport, int> run_pipeline(const std::string& command, const RunConfig& cfg) {
    const int d = scenario_dimension(cfg.scenario);
    if (d == 1) {
        Pipeline<1> p(scenario_1d(cfg.scenario), cfg);
        const int code = p.run(command);
        return {p.report(), code};
    }
    Pipeline<2> p(scenario_2d(cfg.scenario), cfg);
    const int code = p.run(command);
    return {p.report(), code};
}

inline std::string list_scenarios() {
    std::ostringstream o;
    for (const auto& s : scenario_registry()) o << s.name << "\t" << s.dimension << "D\t" << s.summary << "\n";
    return o.str();
}

}  // namespace zvlab
