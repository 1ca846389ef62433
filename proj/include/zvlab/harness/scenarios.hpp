#pragma once

#include "zvlab/coupling/coupling.hpp"
#include "zvlab/field/coefficients.hpp"
#include "zvlab/field/grid.hpp"

#include <optional>
#include <string>
#include <vector>

namespace zvlab {

/// Which integrability classes a scenario's singular drift belongs to.
struct Admissibility {
    bool krylov = false;         ///< d/p + 2/q < 2
    bool singular = false;       ///< d/p + 2/q < 1
    bool harnack_power = false;  ///< d/p + 2/q < 1/2

    static Admissibility derive(int d, const NormSpec& ns) {
        return {ns.krylov_admissible(d), ns.singular_admissible(d), ns.harnack_power_admissible(d)};
    }
    bool operator==(const Admissibility&) const = default;
};

template <int D>
struct Scenario {
    std::string name;
    std::string summary;
    NormSpec norms;
    GridSpec<D> grid;
    CoefficientSet<D> coeffs;
    Vec<D> x0 = Vec<D>::Zero();
    Admissibility declared;
    bool singular_drift = false;
    /// Analytic coupling constants, when the model itself satisfies the
    /// distance condition with known constants.
    std::optional<CouplingConfig> coupling;
    /// Hoelder order used when the constants are measured instead.
    double coupling_alpha = 1.0;
    double default_gamma = 16.0;

    /// Declared flags must match the flags derived from (d, p, q).
    void check() const {
        if (!(Admissibility::derive(D, norms) == declared)) throw Error("scenario " + name + ": admissibility flags mismatch");
    }
};

struct ScenarioInfo {
    std::string name;
    int dimension;
    std::string summary;
};

namespace scenarios {

template <int D>
inline Vec<D> zero_vec(double, const Vec<D>&) {
    return Vec<D>::Zero();
}

/// 0.5 |x|^{-0.2} sign(x) on |x| <= 1.
inline VectorField<1> singular_b0() {
    return [](double, const Vec<1>& x) {
        const double r = std::abs(x[0]);
        Vec<1> v;
        v[0] = (r > 0.0 && r <= 1.0) ? 0.5 * std::pow(r, -0.2) * (x[0] > 0 ? 1.0 : -1.0) : 0.0;
        return v;
    };
}

inline Scenario<1> trivial_zero() {
    Scenario<1> s{"trivial-zero", "sigma = 1, all drifts zero", NormSpec(4.0, 16.0), GridSpec<1>(4.0, 161, 1.0, 200),
                  CoefficientSet<1>::standard()};
    s.declared = {true, true, true};
    return s;
}

inline Scenario<1> singular_1d() {
    auto cs = CoefficientSet<1>::standard();
    cs.b0 = singular_b0();
    cs.b0_singularity = Vec<1>::Zero();
    Scenario<1> s{"singular-1d", "sigma = 1, b0 = 0.5 |x|^-0.2 sign(x) on |x| <= 1", NormSpec(4.0, 16.0),
                  GridSpec<1>(4.0, 401, 1.0, 400), cs};
    s.declared = {true, true, true};
    s.singular_drift = true;
    s.coupling_alpha = 0.6;
    return s;
}

inline Scenario<1> ou_lipschitz() {
    auto cs = CoefficientSet<1>::standard();
    cs.b1 = [](double, const Vec<1>& x) { return (-x).eval(); };
    cs.b1_jacobian = [](double, const Vec<1>&) { return (-Mat<1>::Identity()).eval(); };
    cs.f = [](double, const Vec<1>& x) { return 1.0 / (1.0 + x[0] * x[0]); };
    cs.lip_b1 = 1.0;
    cs.monotone_b = true;
    Scenario<1> s{"ou-lipschitz", "b1 = -x, sigma = 1, f = 1 / (1 + x^2)", NormSpec(4.0, 16.0),
                  GridSpec<1>(6.0, 161, 1.0, 200), cs};
    s.declared = {true, true, true};
    return s;
}

inline Scenario<1> holder_sigma() {
    auto cs = CoefficientSet<1>::standard();
    cs.sigma = [](double, const Vec<1>& x) {
        Mat<1> m;
        m(0, 0) = 1.0 + 0.3 * std::pow(std::abs(std::sin(x[0])), 0.6) / (1.0 + x[0] * x[0]);
        return m;
    };
    cs.b1 = [](double, const Vec<1>& x) { return (-0.5 * x).eval(); };
    cs.b1_jacobian = [](double, const Vec<1>&) { return (-0.5 * Mat<1>::Identity()).eval(); };
    cs.b0 = singular_b0();
    cs.b0_singularity = Vec<1>::Zero();
    cs.kappa1 = 0.5;
    cs.kappa2 = 0.5 * 1.3 * 1.3;
    cs.lip_b1 = 0.5;
    cs.holder_sigma = 0.6;
    cs.monotone_b = true;
    Scenario<1> s{"holder-sigma", "sigma = 1 + 0.3 |sin x|^0.6 / (1 + x^2), b1 = -x/2, singular b0",
                  NormSpec(4.0, 16.0), GridSpec<1>(4.0, 401, 1.0, 400), cs};
    s.declared = {true, true, true};
    s.singular_drift = true;
    s.coupling_alpha = 0.6;
    return s;
}

inline Scenario<1> additive_1d() {
    Scenario<1> s{"additive-1d", "sigma = 1, zero drift, analytic coupling constants", NormSpec(4.0, 16.0),
                  GridSpec<1>(8.0, 161, 1.0, 200), CoefficientSet<1>::standard()};
    s.declared = {true, true, true};
    CouplingConfig c;
    c.K = 0.01;
    c.delta = 0.75;
    c.lambda = 1.0;
    c.alpha = 1.0;
    c.theta = 1.0;
    c.horizon = 1.0;
    c.box_half_width = 8.0;
    c.base_steps = 200;
    s.coupling = c;
    s.coupling_alpha = 1.0;
    s.default_gamma = 16.0;
    return s;
}

inline Scenario<2> linear_2d() {
    auto cs = CoefficientSet<2>::standard();
    Mat<2> A;
    A << -0.5, 1.0, -1.0, -0.5;
    cs.b1 = [A](double, const Vec<2>& x) { return (A * x).eval(); };
    cs.b1_jacobian = [A](double, const Vec<2>&) { return A; };
    cs.lip_b1 = A.norm();
    cs.monotone_b = true;
    Scenario<2> s{"linear-2d", "b1 = A x with a stable rotation, sigma = I", NormSpec(8.0, 16.0),
                  GridSpec<2>(4.0, 41, 1.0, 100), cs};
    s.declared = {true, true, true};
    return s;
}

}  // namespace scenarios

inline std::vector<ScenarioInfo> scenario_registry() {
    return {
        {"trivial-zero", 1, scenarios::trivial_zero().summary},
        {"singular-1d", 1, scenarios::singular_1d().summary},
        {"ou-lipschitz", 1, scenarios::ou_lipschitz().summary},
        {"holder-sigma", 1, scenarios::holder_sigma().summary},
        {"additive-1d", 1, scenarios::additive_1d().summary},
        {"linear-2d", 2, scenarios::linear_2d().summary},
    };
}

inline std::string scenario_names() {
    std::string out;
    for (const auto& s : scenario_registry()) out += (out.empty() ? "" : ", ") + s.name;
    return out;
}

inline Scenario<1> scenario_1d(const std::string& name) {
    using namespace scenarios;
    Scenario<1> s = name == "trivial-zero"   ? trivial_zero()
                    : name == "singular-1d"  ? singular_1d()
                    : name == "ou-lipschitz" ? ou_lipschitz()
                    : name == "holder-sigma" ? holder_sigma()
                    : name == "additive-1d"  ? additive_1d()
                                             : throw Error("unknown scenario: " + name + " (available: " + scenario_names() + ")");
    s.check();
    return s;
}

inline Scenario<2> scenario_2d(const std::string& name) {
    if (name != "linear-2d") throw Error("unknown scenario: " + name + " (available: " + scenario_names() + ")");
    auto s = scenarios::linear_2d();
    s.check();
    return s;
}

inline int scenario_dimension(const std::string& name) {
    for (const auto& s : scenario_registry())
        if (s.name == name) return s.dimension;
    throw Error("unknown scenario: " + name + " (available: " + scenario_names() + ")");
}

}  // namespace zvlab
