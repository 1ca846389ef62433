#include "oracles.hpp"
#include "zvlab/field/norms.hpp"
#include "zvlab/harness/config.hpp"
#include "zvlab/harness/pipeline.hpp"
#include "zvlab/harness/report.hpp"
#include "zvlab/harness/scenarios.hpp"

#include <gtest/gtest.h>

#include <cstdlib>

using namespace zvlab;

namespace {

std::string csv_with_workers(const char* workers, const RunConfig& cfg, const std::string& command) {
    setenv("ZVLAB_THREADS", workers, 1);
    auto [report, code] = run_pipeline(command, cfg);
    unsetenv("ZVLAB_THREADS");
    (void)code;
    return report.csv();
}

const Record* find(const RunReport& r, const std::string& id) {
    for (const auto& rec : r.records())
        if (rec.check_id == id) return &rec;
    return nullptr;
}

}  // namespace

TEST(Registry, NonEmptyAndFlagsRederive) {
    const auto reg = scenario_registry();
    ASSERT_GE(reg.size(), 5u);
    for (const auto& info : reg) {
        if (info.dimension == 1) {
            const auto sc = scenario_1d(info.name);
            EXPECT_EQ(sc.declared, Admissibility::derive(1, sc.norms)) << info.name;
        } else {
            const auto sc = scenario_2d(info.name);
            EXPECT_EQ(sc.declared, Admissibility::derive(2, sc.norms)) << info.name;
        }
        EXPECT_EQ(scenario_dimension(info.name), info.dimension);
    }
    EXPECT_EQ(reg.front().name, scenario_registry().front().name);
}

TEST(Registry, MismatchedFlagsAreRejected) {
    auto sc = scenarios::singular_1d();
    sc.norms = NormSpec(2.0, 4.0);  // budget 1
    try {
        sc.check();
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("admissibility flags mismatch"), std::string::npos);
    }
}

TEST(Registry, UnknownScenarioListsAvailable) {
    try {
        scenario_1d("no-such-scenario");
        FAIL();
    } catch (const Error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("unknown scenario: no-such-scenario"), std::string::npos);
        for (const auto& s : scenario_registry()) EXPECT_NE(msg.find(s.name), std::string::npos);
    }
    EXPECT_THROW(scenario_2d("singular-1d"), Error);
    EXPECT_THROW(scenario_dimension("nope"), Error);
}

TEST(Registry, SingularDriftBudgetAndNorm) {
    const auto sc = scenario_1d("singular-1d");
    EXPECT_DOUBLE_EQ(sc.norms.budget(1), 0.375);
    // x = s^5 turns |x|^{-0.8} dx into 5 ds on (0, 1]
    const double half = oracle::simpson([](double s) {
        const double x = std::pow(s, 5.0);
        return std::pow(0.5, 4.0) * (x > 0.0 ? std::pow(x, -0.8) * 5.0 * std::pow(s, 4.0) : 5.0);
    }, 0.0, 1.0, 1e-14);
    const double exact = std::pow(2.0 * half, 0.25);
    EXPECT_NEAR(2.0 * half, 0.625, 1e-12);
    EXPECT_NEAR(exact, 0.889, 1e-3);
    // grid quadrature approaches the closed form as the mesh shrinks
    double prev = std::numeric_limits<double>::infinity();
    for (int n : {401, 1601, 6401}) {
        const GridSpec<1> g(4.0, n, 1.0, 1);
        const auto b = GridFunction<1>::sample(g, sc.coeffs.b0);
        const double err = std::abs(spatial_lp_norm(b, 4.0, 0.0) - exact);
        EXPECT_LT(err, prev) << n;
        prev = err;
    }
    EXPECT_LT(prev, 0.1 * exact);
}

TEST(Config, DefaultsAndOverrides) {
    const auto c = RunConfig::parse("[run]\nscenario = additive-1d\nseed = 7\n[coupling]\ngamma = 16\n[sde]\npaths=500\n");
    EXPECT_EQ(c.scenario, "additive-1d");
    EXPECT_EQ(c.seed, 7u);
    EXPECT_EQ(c.gamma, 16.0);
    EXPECT_EQ(c.paths, 500u);
    EXPECT_EQ(c.steps, RunConfig{}.steps);
    EXPECT_NO_THROW(c.validate());
    // every default is echoed
    const auto e = c.entries();
    EXPECT_EQ(e.size(), 15u);
    EXPECT_NE(c.canonical().find("coupling.truncation=1000\n"), std::string::npos);
}

TEST(Config, Errors) {
    EXPECT_THROW(RunConfig::parse("[run]\nscenaro = x\n"), Error);
    EXPECT_THROW(RunConfig::parse("[bogus]\nx = 1\n"), Error);
    EXPECT_THROW(RunConfig::parse("[run]\nseed = abc\n"), Error);
    EXPECT_THROW(RunConfig::parse("[run\n"), Error);
    EXPECT_THROW(RunConfig::load("/nonexistent/zvlab.ini"), Error);
    RunConfig c;
    c.format = "xml";
    EXPECT_THROW(c.validate(), Error);
    c = RunConfig{};
    c.steps = 10;
    EXPECT_THROW(c.validate(), Error);
}

TEST(Report, ContentHashMatchesGitBlobHash) {
    EXPECT_EQ(content_hash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    EXPECT_EQ(content_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
    RunConfig a, b;
    b.seed = 2;
    EXPECT_NE(RunReport("s", a).hash(), RunReport("s", b).hash());
    b.seed = 1;
    b.out = "/elsewhere";
    EXPECT_EQ(RunReport("s", a).hash(), RunReport("s", b).hash());
}

TEST(Report, CsvSchemaAndExitCodes) {
    RunReport r("demo", RunConfig{});
    r.exact("a", 1.5);
    EXPECT_EQ(r.exit_code(), 0);
    r.estimate("b", 1.0, 0.1, 2.0, "inconclusive");
    EXPECT_EQ(r.exit_code(), 3);
    r.check("c", 3.0, 2.0, false);
    EXPECT_EQ(r.exit_code(), 2);
    const auto csv = r.csv();
    EXPECT_NE(csv.find("check-id,value,ci-low,ci-high,threshold,verdict,provenance-tag\n"), std::string::npos);
    EXPECT_NE(csv.find("demo.a,1.5,,,,info,exact\n"), std::string::npos);
    EXPECT_NE(csv.find("demo.b,1,0.69999999999999996,1.3,2,inconclusive,mc-3se\n"), std::string::npos);
    const auto j = nlohmann::json::parse(r.json().dump());
    EXPECT_EQ(j["records"].size(), 3u);
    EXPECT_EQ(j["records"][2]["verdict"], "fail");
    EXPECT_EQ(j["config_hash"], r.hash());
}

TEST(Pipeline, TrivialScenarioIsIdentityAndPasses) {
    RunConfig cfg;
    cfg.scenario = "trivial-zero";
    cfg.fast = true;
    auto [report, code] = run_pipeline("full-pipeline", cfg);
    EXPECT_EQ(code, 0);
    ASSERT_NE(find(report, "transform.identity"), nullptr);
    EXPECT_EQ(find(report, "transform.identity")->value, 1.0);
    EXPECT_EQ(find(report, "transform.sup_grad_phi")->value, 0.0);
    EXPECT_EQ(find(report, "pde.sup_u")->value, 0.0);
    for (const auto& r : report.records()) EXPECT_NE(r.verdict, "fail") << r.check_id;
}

TEST(Pipeline, UnknownCommandAndScenario) {
    RunConfig cfg;
    EXPECT_THROW(run_pipeline("explode", cfg), Error);
    cfg.scenario = "missing";
    EXPECT_THROW(run_pipeline("simulate", cfg), Error);
}

TEST(Pipeline, ReportIndependentOfWorkerCount) {
    RunConfig cfg;
    cfg.scenario = "additive-1d";
    cfg.coupling_paths = 3000;
    cfg.seed = 5;
    const auto one = csv_with_workers("1", cfg, "couple");
    EXPECT_EQ(one, csv_with_workers("4", cfg, "couple"));
    EXPECT_EQ(one, csv_with_workers("8", cfg, "couple"));
}

TEST(Pipeline, TwoDimensionalScenarioRuns) {
    RunConfig cfg;
    cfg.scenario = "linear-2d";
    cfg.fast = true;
    auto [report, code] = run_pipeline("simulate", cfg);
    EXPECT_EQ(code, 0);
    EXPECT_NE(find(report, "sde.terminal_mean.1"), nullptr);
}
