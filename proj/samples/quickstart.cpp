// Builds the transform for the singular scenario, simulates both SDEs and
// runs one coupled pair.
#include "zvlab/coupling/coupling.hpp"
#include "zvlab/harness/scenarios.hpp"
#include "zvlab/sde/engine.hpp"
#include "zvlab/zvonkin/zvonkin.hpp"

#include <iostream>

int main() {
    using namespace zvlab;
    const auto sc = scenario_1d("singular-1d");
    const auto build = build_zvonkin(sc.coeffs, sc.grid, sc.norms);
    const auto& zm = build.map;
    std::cout << "lambda = " << zm.lambda() << ", sup |grad phi| = " << zm.sup_grad() << "\n";

    EnsembleSpec spec;
    spec.paths = 2000;
    spec.steps = 400;
    const auto ens = integrate(SdeModel<1>::original(sc.coeffs, sc.grid.h()), sc.x0, spec);
    const auto [mean, var] = terminal_moments(ens);
    std::cout << "E X_T = " << mean.mean << " +- " << mean.se << ", Var X_T = " << var.mean << "\n";

    SdeModel<1> transformed;
    transformed.coefficients = [&zm](double t, const Vec<1>& y) { return zm.transformed(t, y); };
    const auto cert = certify_h5(transformed, 3.2, 1.0, sc.coupling_alpha, 20000);
    CouplingConfig cfg = cert.config(CouplingConfig{});
    cfg.theta = cfg.alpha;
    cfg.paths = 2000;
    const auto res = simulate_pair(transformed, zm.forward(0.0, Vec<1>(0.25)), zm.forward(0.0, Vec<1>(-0.25)), cfg);
    const auto m = verify_martingale(res);
    std::cout << "E R at T - eps = " << m.mean_weight.back().mean << " +- " << m.mean_weight.back().se << "\n";
    const auto co = coalescence(res);
    for (std::size_t i = 0; i < co.eps.size(); ++i)
        std::cout << "median |X - Y| at T - " << co.eps[i] << " T: " << co.median[i] << "\n";
}
