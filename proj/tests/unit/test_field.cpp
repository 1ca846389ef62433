#include "oracles.hpp"
#include "zvlab/field/coefficients.hpp"
#include "zvlab/field/mollify.hpp"
#include "zvlab/field/norms.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace zvlab;

namespace {

GridFunction<1> random_field(const GridSpec<1>& g, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd;
    GridFunction<1> f(g, 1);
    for (double& v : f.values()) v = nd(gen);
    return f;
}

double bump(double s) { return s < 1.0 ? std::exp(-1.0 / (1.0 - s)) : 0.0; }

}  // namespace

TEST(GridSpec, MeshAndOrigin) {
    GridSpec<2> g(3.0, 31, 2.0, 40);
    EXPECT_DOUBLE_EQ(g.h(), 0.2);
    EXPECT_DOUBLE_EQ(g.dt(), 0.05);
    EXPECT_EQ(g.node(g.origin()), Vec<2>::Zero());
    EXPECT_THROW(GridSpec<1>(1.0, 4, 1.0, 10), Error);
    EXPECT_THROW(GridSpec<1>(1.0, 5, 1.0, 0), Error);
}

TEST(NormSpec, BudgetClassification) {
    NormSpec ns(4.0, 16.0);
    EXPECT_DOUBLE_EQ(ns.budget(1), 0.375);
    EXPECT_TRUE(ns.singular_admissible(1));
    EXPECT_TRUE(ns.harnack_power_admissible(1));
    NormSpec wide(2.0, 2.0);
    EXPECT_TRUE(wide.krylov_admissible(1));
    EXPECT_FALSE(wide.singular_admissible(1));
    EXPECT_THROW(NormSpec(1.0, 2.0), Error);
}

TEST(GridFunction, ArityAndLayout) {
    GridSpec<2> g(1.0, 5, 1.0, 3);
    GridFunction<2> m(g, GridFunction<2>::matrix);
    EXPECT_EQ(m.size(), 4u * 25u * 4u);
    EXPECT_TRUE(m.all_finite());
    m.at(1, 3, 2) = std::nan("");
    EXPECT_THROW(m.require_finite(), Error);
}

TEST(LpLqNorm, ZeroAndConstant) {
    GridSpec<1> g(1.0, 21, 1.0, 10);
    GridFunction<1> zero(g, 1);
    EXPECT_EQ(lp_lq_norm(zero, NormSpec(3.0, 5.0), 0.0, 1.0), 0.0);
    const auto one = GridFunction<1>::sample(g, ScalarField<1>([](double, const Vec<1>&) { return 1.0; }));
    for (double p : {1.5, 2.0, 4.0})
        for (double q : {2.0, 7.0}) EXPECT_NEAR(lp_lq_norm(one, NormSpec(p, q), 0.0, 1.0), std::pow(2.0, 1.0 / p), 1e-13);
}

TEST(LpLqNorm, GaussianAgainstQuadrature) {
    GridSpec<1> g(8.0, 161, 1.0, 4);
    const auto f = GridFunction<1>::sample(g, ScalarField<1>([](double, const Vec<1>& x) { return std::exp(-x[0] * x[0]); }));
    const double ref = std::sqrt(oracle::simpson([](double x) { return std::exp(-2 * x * x); }, -8.0, 8.0));
    EXPECT_NEAR(lp_lq_norm(f, NormSpec(2.0, 2.0), 0.0, 1.0) / ref, 1.0, 1e-4);
}

TEST(LpLqNorm, Errors) {
    GridSpec<1> g(1.0, 5, 1.0, 4);
    GridFunction<1> f(g, 1);
    EXPECT_THROW(lp_lq_norm(f, NormSpec(2, 2), 0.5, 0.5), Error);
    f.at(0, 0) = std::numeric_limits<double>::infinity();
    try {
        lp_lq_norm(f, NormSpec(2, 2), 0.0, 1.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_STREQ(e.what(), "non-finite field");
    }
}

TEST(LpLqNorm, VectorUsesEuclideanMagnitude) {
    GridSpec<2> g(1.0, 11, 1.0, 2);
    const auto v = GridFunction<2>::sample(g, VectorField<2>([](double, const Vec<2>&) { return Vec<2>(3.0, 4.0); }));
    EXPECT_NEAR(lp_lq_norm(v, NormSpec(2, 3), 0.0, 1.0), 5.0 * std::pow(4.0, 0.5), 1e-12);
}

TEST(LpLqNormProperty, Homogeneity) {
    GridSpec<1> g(2.0, 41, 1.0, 20);
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> uc(-5, 5);
    for (int trial = 0; trial < 20; ++trial) {
        auto f = random_field(g, 100 + trial);
        const double c = uc(gen);
        const NormSpec ns(1.5 + trial * 0.2, 2.0 + trial * 0.3);
        const double base = lp_lq_norm(f, ns, 0.0, 1.0);
        f *= c;
        EXPECT_NEAR(lp_lq_norm(f, ns, 0.0, 1.0), std::abs(c) * base, 1e-12 * std::abs(c) * base);
    }
}

TEST(LpLqNormProperty, WindowMonotone) {
    GridSpec<1> g(2.0, 41, 1.0, 20);
    std::mt19937_64 gen(9);
    std::uniform_real_distribution<double> ut(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const auto f = random_field(g, trial);
        double t0 = ut(gen) * 0.5, t1 = t0 + 1e-3 + ut(gen) * 0.2, t2 = t1 + ut(gen) * 0.3;
        t2 = std::min(t2, 1.0);
        EXPECT_LE(lp_lq_norm(f, NormSpec(3, 4), t0, t1), lp_lq_norm(f, NormSpec(3, 4), t0, t2) * (1 + 1e-14));
    }
}

TEST(WeightedNorm, Cases) {
    const NormSpec ns(2.0, 2.0, true);
    GridSpec<1> g(1.0, 201, 1.0, 2);
    GridFunction<1> zero(g, 1);
    EXPECT_EQ(weighted_lp_norm(zero, ns, 0.5), 0.0);
    const auto s = GridFunction<1>::sample(g, ScalarField<1>([](double, const Vec<1>& x) { return std::sqrt(1 + x[0] * x[0]); }));
    EXPECT_NEAR(weighted_lp_norm(s, ns, 0.5), std::sqrt(2.0), 1e-12);
    GridSpec<1> g4(4.0, 401, 1.0, 2);
    const auto lin = GridFunction<1>::sample(g4, ScalarField<1>([](double, const Vec<1>& x) { return x[0]; }));
    const double ref = std::sqrt(oracle::simpson([](double x) { return x * x / (1 + x * x); }, -4.0, 4.0));
    EXPECT_NEAR(weighted_lp_norm(lin, ns, 0.0) / ref, 1.0, 1e-4);
    EXPECT_THROW(weighted_lp_norm(lin, NormSpec(2.0, 2.0), 0.0), Error);
}

TEST(HolderSeminorm, Cases) {
    GridSpec<1> g(1.0, 201, 1.0, 1);
    const auto c = GridFunction<1>::sample(g, ScalarField<1>([](double, const Vec<1>&) { return 3.0; }));
    EXPECT_EQ(holder_seminorm(c, 0.0, 0.5), 0.0);
    const auto lin = GridFunction<1>::sample(g, ScalarField<1>([](double, const Vec<1>& x) { return x[0]; }));
    EXPECT_NEAR(holder_seminorm(lin, 0.0, 1.0), 1.0, 1e-12);
    const auto root = GridFunction<1>::sample(g, ScalarField<1>([](double, const Vec<1>& x) { return std::sqrt(std::abs(x[0])); }));
    EXPECT_NEAR(holder_seminorm(root, 0.0, 0.5), 1.0, 0.05);
    EXPECT_THROW(holder_seminorm(lin, 0.0, 0.0), Error);
}

TEST(HolderSeminormProperty, NonDecreasingInExponentOnUnitDiameterGrid) {
    // |x - y| <= 1, so |x - y|^alpha shrinks as alpha grows
    GridSpec<1> g(0.5, 101, 1.0, 1);
    for (int trial = 0; trial < 5; ++trial) {
        const double w = 1.0 + trial;
        const auto f = GridFunction<1>::sample(g, ScalarField<1>([w](double, const Vec<1>& x) { return std::sin(w * x[0]) + x[0]; }));
        double prev = 0.0;
        for (double a : {0.1, 0.25, 0.5, 0.75, 1.0}) {
            const double s = holder_seminorm(f, 0.0, a);
            EXPECT_TRUE(std::isfinite(s));
            EXPECT_GE(s, prev);
            prev = s;
        }
    }
}

TEST(Mollify, ConstantAndErrors) {
    GridSpec<1> g(1.0, 41, 1.0, 2);
    const auto c = GridFunction<1>::sample(g, ScalarField<1>([](double, const Vec<1>&) { return 2.5; }));
    const auto m = mollify(c, 0.2);
    for (double v : m.values()) EXPECT_NEAR(v, 2.5, 1e-14);
    EXPECT_THROW(mollify(c, 0.01), Error);
}

TEST(Mollify, SupNormNonIncreasingAndLinear) {
    GridSpec<2> g(1.0, 21, 1.0, 1);
    std::mt19937_64 gen(3);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 5; ++trial) {
        GridFunction<2> f(g, 1), h(g, 1);
        for (double& v : f.values()) v = nd(gen);
        for (double& v : h.values()) v = nd(gen);
        const auto mf = mollify(f, 0.3);
        EXPECT_LE(mf.sup_norm(), f.sup_norm() * (1 + 1e-14));
        auto combo = f;
        combo *= 2.0;
        const auto lhs = mollify(combo + h, 0.3);
        auto rhs = mf;
        rhs *= 2.0;
        rhs = rhs + mollify(h, 0.3);
        for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs.values()[i], rhs.values()[i], 1e-12);
    }
}

TEST(Mollify, StepMatchesDirectConvolution) {
    GridSpec<1> g(1.0, 201, 1.0, 1);
    auto step = [](double x) { return x > 0.1 ? 1.0 : 0.0; };
    const auto f = GridFunction<1>::sample(g, ScalarField<1>([&](double, const Vec<1>& x) { return step(x[0]); }));
    const auto m = mollify(f, 0.1);
    // dense direct sum over every node pair, edge values extended
    const double r = 0.1, h = g.h();
    for (int i = 0; i < 201; ++i) {
        double num = 0.0, den = 0.0;
        for (int j = -400; j <= 600; ++j) {
            const double d = (j - i) * h;
            const double w = bump(d * d / (r * r));
            if (w == 0.0) continue;
            num += w * step(g.coord(std::clamp(j, 0, 200)));
            den += w;
        }
        EXPECT_NEAR(m.at(0, i), num / den, 1e-10) << i;
    }
}

TEST(DriftSplit, AffineAndConstantHaveZeroRemainder) {
    GridSpec<2> g(2.0, 21, 1.0, 2);
    Mat<2> A;
    A << -0.3, 0.5, -0.5, -0.3;
    const auto lin = decompose_lipschitz_drift<2>([A](double, const Vec<2>& x) { return (A * x).eval(); }, g, 0.5);
    EXPECT_LT(lin.remainder_sup, 1e-12);
    const auto cst = decompose_lipschitz_drift<2>([](double, const Vec<2>&) { return Vec<2>(1.0, -2.0); }, g, 0.5);
    EXPECT_LT(cst.remainder_sup, 1e-14);
}

TEST(DriftSplit, AbsoluteValueAgainstConvolutionOracle) {
    GridSpec<1> g(2.0, 81, 1.0, 1);
    const double r = 0.5;
    const auto s = decompose_lipschitz_drift<1>([](double, const Vec<1>& x) { return Vec<1>(std::abs(x[0])); }, g, r);
    EXPECT_LE(s.remainder_sup, 1.0 * r);
    const double h = g.h();
    for (int i = 0; i < 81; ++i) {
        const double x = g.coord(i);
        double num = 0.0, den = 0.0;
        for (int j = -20; j <= 20; ++j) {
            const double w = bump((j * h) * (j * h) / (r * r));
            num += w * std::abs(x + j * h);
            den += w;
        }
        EXPECT_NEAR(s.smooth.at(0, i), num / den, 1e-13);
    }
}

TEST(DriftSplitProperty, ReconstructionExactAfterOneRounding) {
    GridSpec<1> g(3.0, 61, 1.0, 3);
    auto b1 = [](double t, const Vec<1>& x) { return Vec<1>(std::sin(3 * x[0]) + std::abs(x[0] - t)); };
    const auto s = decompose_lipschitz_drift<1>(b1, g, 0.3);
    for (int k = 0; k < g.time_slices(); ++k)
        for (std::size_t i = 0; i < g.node_count(); ++i) {
            const double v = b1(g.time(k), g.node(i))[0];
            const double sum = s.smooth.at(k, i) + s.remainder.at(k, i);
            EXPECT_LE(std::abs(sum - v), std::numeric_limits<double>::epsilon() * std::abs(v) + 1e-300);
        }
}

TEST(Coefficients, SampledHypotheses) {
    auto cs = CoefficientSet<2>::standard();
    cs.kappa1 = cs.kappa2 = 0.5;
    Mat<2> A;
    A << -0.3, 0.5, -0.5, -0.3;
    cs.b1 = [A](double, const Vec<2>& x) { return (A * x).eval(); };
    cs.lip_b1 = operator_norm<2>(A);
    const auto ok = check_coefficients(cs, 4.0, 1.0);
    EXPECT_TRUE(ok.ok());
    cs.lip_b1 = 0.5;
    EXPECT_FALSE(check_coefficients(cs, 4.0, 1.0).ok());
    cs.lip_b1 = 1.0;
    cs.kappa1 = 0.6;
    EXPECT_FALSE(check_coefficients(cs, 4.0, 1.0).ok());
    cs.kappa1 = 0.5;
    cs.a = [](double, const Vec<2>&) { return Mat<2>::Identity().eval(); };
    EXPECT_FALSE(check_coefficients(cs, 4.0, 1.0).ok());
}

TEST(Coefficients, NodeCap) {
    auto cs = CoefficientSet<1>::standard();
    cs.b0 = [](double, const Vec<1>& x) { return Vec<1>(x[0] == 0 ? INFINITY : std::copysign(std::pow(std::abs(x[0]), -0.2), x[0])); };
    cs.b0_singularity = Vec<1>::Zero();
    const auto capped = capped_b0(cs, 0.01);
    EXPECT_EQ(capped(0.0, Vec<1>(0.0))[0], 0.0);
    EXPECT_DOUBLE_EQ(capped(0.0, Vec<1>(0.005))[0], std::pow(0.01, -0.2));
    EXPECT_DOUBLE_EQ(capped(0.0, Vec<1>(-0.5))[0], -std::pow(0.5, -0.2));
}
