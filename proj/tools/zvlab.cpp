#include "zvlab/harness/pipeline.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

int main(int argc, char** argv) {
    using namespace zvlab;
    CLI::App app{"zvlab: singular-drift SDE experiments"};
    std::string command, config_path, grid;
    std::optional<std::string> scenario, out, format;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    std::optional<double> lambda, gamma;
    bool fast = false;

    app.add_option("command", command, "solve-pde | build-transform | simulate | krylov | couple | harnack | full-pipeline | list-scenarios")
        ->required();
    app.add_option("--config", config_path, "INI configuration file");
    app.add_option("--scenario", scenario, "scenario name");
    app.add_option("--seed", seed, "master seed");
    app.add_option("--paths", paths, "Monte Carlo paths (ensemble and coupling)");
    app.add_option("--grid", grid, "space nodes and time steps as n,m");
    app.add_option("--lambda", lambda, "fixed transform lambda (default: search)");
    app.add_option("--gamma", gamma, "Harnack power");
    app.add_option("--out", out, "output directory");
    app.add_option("--format", format, "csv or json");
    app.add_flag("--fast", fast, "reduced sample sizes");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    const auto& cmds = pipeline_commands();
    if (std::find(cmds.begin(), cmds.end(), command) == cmds.end()) {
        std::cerr << "unknown command: " << command << "\n";
        return 1;
    }
    if (command == "list-scenarios") {
        std::cout << list_scenarios();
        return 0;
    }

    try {
        RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
        if (scenario) cfg.scenario = *scenario;
        if (seed) cfg.seed = *seed;
        if (paths) cfg.paths = cfg.coupling_paths = *paths;
        if (lambda) cfg.lambda = *lambda;
        if (gamma) cfg.gamma = *gamma;
        if (out) cfg.out = *out;
        if (format) cfg.format = *format;
        if (fast) cfg.fast = true;
        if (!grid.empty()) {
            const auto comma = grid.find(',');
            if (comma == std::string::npos) throw Error("--grid expects n,m");
            try {
                cfg.grid_n = std::stoi(grid.substr(0, comma));
                cfg.grid_m = std::stoi(grid.substr(comma + 1));
            } catch (const std::exception&) {
                throw Error("--grid expects n,m");
            }
        }
        cfg.validate();
        scenario_dimension(cfg.scenario);

        auto [report, code] = run_pipeline(command, cfg);
        std::filesystem::create_directories(cfg.out);
        report.write(cfg.out, cfg.format);
        std::size_t pass = 0, fail = 0, inconclusive = 0;
        for (const auto& r : report.records()) {
            if (r.verdict == "pass") ++pass;
            else if (r.verdict == "fail") {
                ++fail;
                std::cerr << "FAIL " << r.check_id << " value=" << format_number(r.value)
                          << " threshold=" << format_number(r.threshold) << "\n";
            } else if (r.verdict == "inconclusive") ++inconclusive;
        }
        std::cout << report.scenario() << " " << command << ": " << pass << " pass, " << fail << " fail, " << inconclusive
                  << " inconclusive; report in " << cfg.out << " (config " << report.hash().substr(0, 12) << ")\n";
        return code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
