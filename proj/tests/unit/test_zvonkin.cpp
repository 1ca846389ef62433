#include "zvlab/harness/scenarios.hpp"
#include "zvlab/zvonkin/zvonkin.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace zvlab;

namespace {

const ZvonkinBuild<1>& singular_build() {
    static const ZvonkinBuild<1> b = [] {
        const auto sc = scenario_1d("singular-1d");
        return build_zvonkin(sc.coeffs, sc.grid, sc.norms);
    }();
    return b;
}

}  // namespace

TEST(Zvonkin, ZeroSingularDriftGivesIdentity) {
    const auto sc = scenario_1d("trivial-zero");
    const auto b = build_zvonkin(sc.coeffs, sc.grid, sc.norms);
    const auto& zm = b.map;
    EXPECT_TRUE(zm.identity());
    EXPECT_EQ(zm.sup_grad(), 0.0);
    const auto& g = sc.grid;
    for (int k = 0; k < g.time_slices(); k += 20)
        for (std::size_t i = 0; i < g.node_count(); ++i) {
            const double t = g.time(k);
            const Vec<1> x = g.node(i);
            EXPECT_EQ(zm.forward(t, x), x);
            EXPECT_EQ(zm.inverse(t, x), x);
            EXPECT_EQ(zm.Z(t, x), sc.coeffs.regular_drift(t, x));
            EXPECT_EQ(zm.Sigma(t, x), sc.coeffs.sigma(t, x));
        }
}

TEST(Zvonkin, LinearPhiInvertsExactly) {
    GridSpec<1> g(2.0, 41, 1.0, 4);
    auto phi = GridFunction<1>::sample(g, VectorField<1>([](double, const Vec<1>& x) { return (0.4 * x).eval(); }));
    const auto zm = ZvonkinMap<1>::from_phi(CoefficientSet<1>::standard(), phi, 1.0);
    EXPECT_NEAR(zm.sup_grad(), 0.4, 1e-12);
    for (double y = -1.5; y <= 1.5; y += 0.01) {
        int iters = 0;
        const Vec<1> x = zm.inverse(0.3, Vec<1>(y), &iters);
        EXPECT_NEAR(x[0], y / 1.4, 1e-10);
        EXPECT_LE(iters, 60);
    }
}

TEST(Zvonkin, TwoDimensionalRoundTrip) {
    GridSpec<2> g(2.0, 41, 1.0, 4);
    auto phi = GridFunction<2>::sample(g, VectorField<2>([](double t, const Vec<2>& x) {
        return Vec<2>(0.15 * std::sin(x[1] + t), 0.15 * std::cos(x[0])).eval();
    }));
    const auto zm = ZvonkinMap<2>::from_phi(CoefficientSet<2>::standard(), phi, 1.0);
    ASSERT_TRUE(zm.contractive());
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (int s = 0; s < 2000; ++s) {
        const Vec<2> x(u(gen), u(gen));
        const double t = 0.25 * (s % 5);
        EXPECT_LE((zm.inverse(t, zm.forward(t, x)) - x).norm(), 1e-10);
    }
}

TEST(Zvonkin, InverseEscapeIsReported) {
    GridSpec<1> g(1.0, 21, 1.0, 2);
    auto phi = GridFunction<1>::sample(g, VectorField<1>([](double, const Vec<1>&) { return Vec<1>(-1.9); }));
    const auto zm = ZvonkinMap<1>::from_phi(CoefficientSet<1>::standard(), phi, 1.0);
    try {
        zm.inverse(0.0, Vec<1>(0.5));
        FAIL() << "expected an escape";
    } catch (const Error& e) {
        EXPECT_STREQ(e.what(), "inverse escape");
    }
}

TEST(Zvonkin, SingularScenarioIsContractiveWithModestLambda) {
    const auto& b = singular_build();
    EXPECT_LE(b.map.lambda(), 640.0);
    EXPECT_LT(b.map.sup_grad(), 0.5);
    EXPECT_FALSE(b.trace.empty());
    EXPECT_GT(b.map.sup_grad(), 0.0);
}

TEST(Zvonkin, SingularBiLipschitzSandwich) {
    const auto& zm = singular_build().map;
    const auto fwd = certify_bilipschitz(zm, 10000);
    EXPECT_EQ(fwd.violations, 0u);
    EXPECT_GE(fwd.min_ratio, 0.5);
    EXPECT_LE(fwd.max_ratio, 1.5);
    const auto inv = certify_inverse(zm, 2000);
    EXPECT_EQ(inv.violations, 0u);
    EXPECT_EQ(inv.escapes, 0u);
}

TEST(Zvonkin, SingularRoundTrip) {
    const auto& zm = singular_build().map;
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> u(-3.6, 3.6), ut(0.0, 1.0);
    double worst = 0.0;
    for (int s = 0; s < 10000; ++s) {
        const Vec<1> x(u(gen));
        const double t = ut(gen);
        worst = std::max(worst, (zm.inverse(t, zm.forward(t, x)) - x).norm());
    }
    EXPECT_LE(worst, 1e-8);
}

TEST(Zvonkin, TransformedCoefficientsCertificate) {
    const auto& zm = singular_build().map;
    const auto c = certify_transform(zm, 20000);
    EXPECT_EQ(c.ellipticity_violations, 0u);
    EXPECT_EQ(c.escapes, 0u);
    EXPECT_GT(c.z_lipschitz, 0.0);
    EXPECT_TRUE(std::isfinite(c.z_lipschitz));
    EXPECT_GE(c.min_sigma_form, c.lower_bound);
    EXPECT_LE(c.max_sigma_form, c.upper_bound);
}

TEST(Zvonkin, JointEvaluationMatchesSeparateCalls) {
    const auto& zm = singular_build().map;
    for (double y = -2.0; y <= 2.0; y += 0.37) {
        const auto [z, s] = zm.transformed(0.41, Vec<1>(y));
        EXPECT_EQ(z, zm.Z(0.41, Vec<1>(y)));
        EXPECT_EQ(s, zm.Sigma(0.41, Vec<1>(y)));
    }
}

TEST(Zvonkin, LargerLambdaShrinksGradient) {
    const auto sc = scenario_1d("singular-1d");
    double prev = std::numeric_limits<double>::infinity();
    for (double lam : {10.0, 40.0, 160.0}) {
        ZvonkinOptions opt;
        opt.fixed_lambda = lam;
        const auto b = build_zvonkin(sc.coeffs, sc.grid, sc.norms, opt);
        EXPECT_LT(b.map.sup_grad(), prev);
        prev = b.map.sup_grad();
    }
}

TEST(Zvonkin, ZLipschitzStableUnderRefinement) {
    const auto sc = scenario_1d("singular-1d");
    ZvonkinOptions opt;
    opt.fixed_lambda = singular_build().map.lambda();
    const auto coarse = build_zvonkin(sc.coeffs, GridSpec<1>(4.0, 201, 1.0, 200), sc.norms, opt);
    const auto c1 = certify_transform(coarse.map, 20000);
    const auto c2 = certify_transform(singular_build().map, 20000);
    EXPECT_LT(c2.z_lipschitz, 2.0 * c1.z_lipschitz);
    EXPECT_LT(c1.z_lipschitz, 2.0 * c2.z_lipschitz);
}

TEST(Zvonkin, NonContractiveBuildThrows) {
    auto cs = CoefficientSet<1>::standard();
    const auto b0 = scenarios::singular_b0();
    cs.b0 = [b0](double t, const Vec<1>& x) { return (40.0 * b0(t, x)).eval(); };
    cs.b0_singularity = Vec<1>::Zero();
    ZvonkinOptions opt;
    opt.lambda_start = 0.01;
    opt.max_steps = 0;
    try {
        build_zvonkin(cs, GridSpec<1>(4.0, 101, 1.0, 50), NormSpec(4.0, 16.0), opt);
        FAIL() << "expected a non-contractive transform";
    } catch (const Error& e) {
        EXPECT_STREQ(e.what(), "transform not contractive at this resolution");
    }
}
