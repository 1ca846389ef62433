#include "zvlab/pde/decay.hpp"
#include "zvlab/pde/solver.hpp"

#include <gtest/gtest.h>

using namespace zvlab;

namespace {

CoefficientSet<1> heat1d() {
    auto cs = CoefficientSet<1>::standard();
    cs.kappa1 = cs.kappa2 = 0.5;
    return cs;
}

// G(t, x) = (c + T - t) exp(-x^2 / 2); f = d_t G + G'' / 2
struct Manufactured {
    double T = 1.0, c = 0.0;
    double G(double t, double x) const { return (c + T - t) * std::exp(-0.5 * x * x); }
    double f(double t, double x) const {
        const double e = std::exp(-0.5 * x * x);
        return -e + 0.5 * (c + T - t) * (x * x - 1.0) * e;
    }
};

double manufactured_error(int n, int m, double c) {
    Manufactured ms{1.0, c};
    auto cs = heat1d();
    cs.f = [ms](double t, const Vec<1>& x) { return ms.f(t, x[0]); };
    GridSpec<1> g(8.0, n, 1.0, m);
    PdeProblem<1> pb(cs, 0.0, g, NormSpec(2, 2));
    if (c != 0.0) {
        pb.terminal.resize(g.node_count());
        for (std::size_t i = 0; i < g.node_count(); ++i) pb.terminal[i] = ms.G(1.0, g.node(i)[0]);
    }
    const auto sol = solve_backward(pb);
    double err = 0.0;
    for (int k = 0; k <= m; ++k)
        for (std::size_t i = 0; i < g.node_count(); ++i)
            err = std::max(err, std::abs(sol.u.at(k, i) - ms.G(g.time(k), g.node(i)[0])));
    return err;
}

}  // namespace

TEST(SolveBackward, ZeroDataGivesZero) {
    GridSpec<2> g(2.0, 11, 1.0, 5);
    PdeProblem<2> pb(CoefficientSet<2>::standard(), 3.0, g, NormSpec(4, 4));
    const auto sol = solve_backward(pb);
    for (double v : sol.u.values()) EXPECT_EQ(v, 0.0);
}

TEST(SolveBackward, ManufacturedHeatSolution) {
    EXPECT_LE(manufactured_error(161, 200, 0.0), 1e-3);
    EXPECT_LE(manufactured_error(161, 200, 1.0), 1e-3);
}

TEST(SolveBackward, SelfConvergenceFactor) {
    for (double c : {0.0, 1.0}) {
        const double coarse = manufactured_error(81, 100, c);
        const double fine = manufactured_error(161, 200, c);
        EXPECT_GE(coarse / fine, 2.5) << "c=" << c;
    }
}

TEST(SolveBackward, TerminalSliceBitExactAndResidual) {
    auto cs = heat1d();
    cs.b1 = [](double, const Vec<1>& x) { return Vec<1>(-x[0]); };
    cs.f = [](double t, const Vec<1>& x) { return std::cos(x[0] + t); };
    GridSpec<1> g(4.0, 81, 1.0, 50);
    PdeProblem<1> pb(cs, 1.0, g, NormSpec(4, 4));
    pb.terminal.resize(g.node_count());
    for (std::size_t i = 0; i < g.node_count(); ++i) pb.terminal[i] = std::exp(-g.node(i)[0] * g.node(i)[0]) / 3.0;
    const auto sol = solve_backward(pb);
    for (std::size_t i = 0; i < g.node_count(); ++i) EXPECT_EQ(sol.u.at(50, i), pb.terminal[i]);
    EXPECT_LE(sol.max_residual, pb.options.linear_tolerance * (1.0 + sol.sup_source));
}

TEST(SolveBackward, OrnsteinUhlenbeckSelfConvergence) {
    auto cs = heat1d();
    cs.b1 = [](double, const Vec<1>& x) { return Vec<1>(-x[0]); };
    cs.f = [](double, const Vec<1>&) { return 1.0; };
    auto solve_at = [&](int n, int m) {
        PdeProblem<1> pb(cs, 1.0, GridSpec<1>(6.0, n, 1.0, m), NormSpec(4, 4));
        return solve_backward(pb);
    };
    const auto s1 = solve_at(61, 50), s2 = solve_at(121, 100), s3 = solve_at(241, 200);
    // compare on the coarse nodes, interior core only
    double e12 = 0.0, e23 = 0.0;
    const GridSpec<1>& g = s1.u.grid();
    for (int k = 0; k <= 50; ++k)
        for (std::size_t i = 0; i < g.node_count(); ++i) {
            if (!g.in_core(g.node(i), 0.5)) continue;
            const double a = s1.u.at(k, i), b = s2.u.at(2 * k, 2 * i), c = s3.u.at(4 * k, 4 * i);
            e12 = std::max(e12, std::abs(a - b));
            e23 = std::max(e23, std::abs(b - c));
        }
    // Richardson estimate of the fine-grid error from the observed ratio
    const double ratio = e12 / e23;
    ASSERT_GT(ratio, 1.0);
    const double est = e23 / (ratio - 1.0);
    double err = 0.0;
    for (int k = 0; k <= 100; k += 2)
        for (std::size_t i = 0; i < s2.u.grid().node_count(); i += 2) {
            if (!s2.u.grid().in_core(s2.u.grid().node(i), 0.5)) continue;
            err = std::max(err, std::abs(s2.u.at(k, i) - s3.u.at(2 * k, 2 * i)));
        }
    EXPECT_LE(err, 4.0 * (est + e23));
}

TEST(SolveBackward, MaximumPrinciple) {
    auto cs = heat1d();
    cs.f = [](double t, const Vec<1>& x) { return std::sin(5 * x[0]) * (1 + t); };
    for (double lam : {0.0, 1.0, 100.0}) {
        PdeProblem<1> pb(cs, lam, GridSpec<1>(3.0, 61, 1.0, 40), NormSpec(2, 2));
        const auto sol = solve_backward(pb);
        EXPECT_TRUE(sol.max_principle_ok) << lam;
    }
}

TEST(SolveBackward, LinearityInSourceWithFrozenCoupling) {
    auto cs = heat1d();
    cs.b1 = [](double, const Vec<1>& x) { return Vec<1>(-0.5 * x[0]); };
    cs.b0 = [](double, const Vec<1>& x) { return Vec<1>(std::abs(x[0]) < 1 ? 0.7 : 0.0); };
    auto f1 = [](double, const Vec<1>& x) { return std::exp(-x[0] * x[0]); };
    auto f2 = [](double t, const Vec<1>& x) { return t * std::cos(x[0]); };
    const double alpha = -2.5;
    GridSpec<1> g(4.0, 81, 1.0, 40);
    auto solve_with = [&](ScalarField<1> f) {
        auto c = cs;
        c.f = f;
        PdeProblem<1> pb(c, 2.0, g, NormSpec(2, 2));
        pb.options.b0_advection = false;
        return solve_backward(pb).u;
    };
    const auto u1 = solve_with(f1), u2 = solve_with(f2);
    const auto u12 = solve_with([&](double t, const Vec<1>& x) { return alpha * f1(t, x) + f2(t, x); });
    const double scale = u12.sup_norm();
    for (std::size_t i = 0; i < u12.size(); ++i)
        EXPECT_NEAR(u12.values()[i], alpha * u1.values()[i] + u2.values()[i], 1e-8 * scale);
}

TEST(SolveBackward, TwoDimensionalIterativeSolve) {
    auto cs = CoefficientSet<2>::standard();
    Mat<2> A;
    A << -0.3, 0.5, -0.5, -0.3;
    cs.b1 = [A](double, const Vec<2>& x) { return (A * x).eval(); };
    cs.a = [](double, const Vec<2>&) {
        Mat<2> a;
        a << 0.5, 0.1, 0.1, 0.4;
        return a;
    };
    cs.f = [](double, const Vec<2>& x) { return std::exp(-x.squaredNorm()); };
    PdeProblem<2> pb(cs, 1.0, GridSpec<2>(4.0, 41, 1.0, 20), NormSpec(4, 4));
    const auto sol = solve_backward(pb);
    EXPECT_TRUE(sol.u.all_finite());
    EXPECT_GT(sol.max_linear_iterations, 0);
    EXPECT_LE(sol.max_residual, 1e-8);
    EXPECT_TRUE(sol.max_principle_ok);
    EXPECT_LT(sol.report.contamination, 1e-2);
}

TEST(SolvePhiSystem, ZeroSourceGivesZero) {
    auto cs = heat1d();
    const auto sol = solve_phi_system(cs, 10.0, GridSpec<1>(2.0, 21, 1.0, 10), NormSpec(4, 16));
    for (double v : sol.u.values()) EXPECT_EQ(v, 0.0);
}

TEST(SolvePhiSystem, IndicatorMaximumPrincipleBound) {
    auto cs = heat1d();
    cs.b0 = [](double, const Vec<1>& x) { return Vec<1>(std::abs(x[0]) <= 1 ? 1.0 : 0.0); };
    const auto sol = solve_phi_system(cs, 50.0, GridSpec<1>(4.0, 161, 1.0, 200), NormSpec(4, 16));
    EXPECT_LE(sol.report.sup_u, 0.02 * 1.1);
    for (std::size_t i = 0; i < sol.u.grid().node_count(); ++i) EXPECT_EQ(sol.u.at(200, i), 0.0);
}

TEST(SolvePhiSystem, DoublingSourceDoublesSolutionInLinearMode) {
    auto cs = heat1d();
    cs.b0 = [](double, const Vec<1>& x) { return Vec<1>(std::abs(x[0]) <= 1 ? std::cos(x[0]) : 0.0); };
    PdeOptions opt;
    opt.b0_advection = false;
    GridSpec<1> g(4.0, 81, 1.0, 40);
    const auto one = solve_phi_system(cs, 20.0, g, NormSpec(4, 16), opt);
    auto cs2 = cs;
    cs2.b0 = [b0 = cs.b0](double t, const Vec<1>& x) { return (2.0 * b0(t, x)).eval(); };
    const auto two = solve_phi_system(cs2, 20.0, g, NormSpec(4, 16), opt);
    for (std::size_t i = 0; i < one.u.size(); ++i) EXPECT_NEAR(two.u.values()[i], 2.0 * one.u.values()[i], 1e-10);
}

TEST(SolvePhiSystem, RejectsNonSingularAdmissibleNorms) {
    EXPECT_THROW(solve_phi_system(heat1d(), 10.0, GridSpec<1>(2.0, 21, 1.0, 10), NormSpec(2, 2)), Error);
}

TEST(DecayPrediction, Beta0Arithmetic) {
    DecayPrediction dp;
    EXPECT_DOUBLE_EQ(dp.beta0(1, NormSpec(4, 4)), 0.625);
}

TEST(LambdaSweep, ZeroSourceIsDegenerate) {
    PdeProblem<1> pb(heat1d(), 10.0, GridSpec<1>(2.0, 21, 1.0, 10), NormSpec(4, 4));
    const auto r = lambda_sweep(pb, {10, 100, 1000, 10000}, DecayPrediction{});
    EXPECT_TRUE(r.degenerate_zero);
    EXPECT_EQ(r.verdict, "degenerate-zero");
    EXPECT_THROW(lambda_sweep(pb, {10, 100, 1000}, DecayPrediction{}), Error);
    EXPECT_THROW(lambda_sweep(pb, {10, 20, 40, 80}, DecayPrediction{}), Error);
}

TEST(LambdaSweep, HeatWithBoundedSourceDecaysLikeInverseLambda) {
    auto cs = heat1d();
    cs.f = [](double, const Vec<1>& x) { return std::abs(x[0]) < 2 ? 1.0 : 0.0; };
    PdeProblem<1> pb(cs, 10.0, GridSpec<1>(6.0, 121, 1.0, 100), NormSpec(4, 4));
    const auto r = lambda_sweep(pb, {10, 100, 1000, 10000}, DecayPrediction{});
    EXPECT_TRUE(r.pass);
    EXPECT_LE(r.slope, -0.9);
    for (std::size_t i = 0; i < r.lambdas.size(); ++i) EXPECT_LE(r.norms[i], 1.0 / r.lambdas[i] * 1.05);
}

TEST(VerifyApriori, OrnsteinUhlenbeckRatioStable) {
    auto cs = heat1d();
    cs.b1 = [](double, const Vec<1>& x) { return Vec<1>(-x[0]); };
    cs.f = [](double, const Vec<1>& x) { return std::exp(-x[0] * x[0]); };
    PdeProblem<1> pb(cs, 1.0, GridSpec<1>(6.0, 81, 1.0, 50), NormSpec(4, 4));
    const auto rep = verify_apriori(solve_backward(pb), pb);
    EXPECT_TRUE(rep.pass) << rep.ratio << " " << rep.ratio_refined;
    PdeProblem<1> zero(heat1d(), 1.0, GridSpec<1>(6.0, 41, 1.0, 10), NormSpec(4, 4));
    EXPECT_THROW(verify_apriori(solve_backward(zero), zero), Error);
}
