#pragma once

#include "zvlab/common.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace zvlab {

/// Flat run configuration. Sections mirror the module types:
///   [run] scenario, seed, fast
///   [grid] n, m           (0 keeps the scenario grid)
///   [transform] lambda    (0 runs the lambda search)
///   [sde] paths, steps, dump
///   [coupling] paths, gamma, base_steps, eps_stop_fraction, truncation
///   [report] format, out
struct RunConfig {
    std::string scenario = "trivial-zero";
    std::uint64_t seed = 1;
    bool fast = false;

    int grid_n = 0;
    int grid_m = 0;

    double lambda = 0.0;

    std::size_t paths = 10000;
    int steps = 400;
    bool dump = false;

    std::size_t coupling_paths = 10000;
    double gamma = 0.0;  ///< 0 takes the scenario default
    int base_steps = 200;
    double eps_stop_fraction = 0.02;
    double truncation = 1e3;

    std::string format = "csv";
    std::string out = "zvlab-out";

    /// Reads an INI file; unknown keys are rejected.
    static RunConfig load(const std::string& path) {
        boost::property_tree::ptree pt;
        try {
            boost::property_tree::read_ini(path, pt);
        } catch (const boost::property_tree::ini_parser_error& e) {
            throw Error(std::string("config: ") + e.what());
        }
        RunConfig c;
        c.apply(pt);
        return c;
    }

    static RunConfig parse(const std::string& text) {
        boost::property_tree::ptree pt;
        std::istringstream in(text);
        try {
            boost::property_tree::read_ini(in, pt);
        } catch (const boost::property_tree::ini_parser_error& e) {
            throw Error(std::string("config: ") + e.what());
        }
        RunConfig c;
        c.apply(pt);
        return c;
    }

    /// Every key with its effective value, in a fixed order.
    std::vector<std::pair<std::string, std::string>> entries() const {
        auto num = [](double v) {
            std::ostringstream o;
            o.precision(17);
            o << v;
            return o.str();
        };
        return {
            {"run.scenario", scenario},
            {"run.seed", std::to_string(seed)},
            {"run.fast", fast ? "true" : "false"},
            {"grid.n", std::to_string(grid_n)},
            {"grid.m", std::to_string(grid_m)},
            {"transform.lambda", num(lambda)},
            {"sde.paths", std::to_string(paths)},
            {"sde.steps", std::to_string(steps)},
            {"sde.dump", dump ? "true" : "false"},
            {"coupling.paths", std::to_string(coupling_paths)},
            {"coupling.gamma", num(gamma)},
            {"coupling.base_steps", std::to_string(base_steps)},
            {"coupling.eps_stop_fraction", num(eps_stop_fraction)},
            {"coupling.truncation", num(truncation)},
            {"report.format", format},
        };
    }

    /// Canonical text hashed into the report; the output directory is excluded.
    std::string canonical() const {
        std::string s;
        for (const auto& [k, v] : entries()) s += k + "=" + v + "\n";
        return s;
    }

    void validate() const {
        if (grid_n != 0 && grid_n < 5) throw Error("config: grid.n must be 0 or at least 5");
        if (grid_m < 0) throw Error("config: grid.m must be >= 0");
        if (!(lambda >= 0.0)) throw Error("config: transform.lambda must be >= 0");
        if (paths < 2 || coupling_paths < 2) throw Error("config: paths must be at least 2");
        if (steps < 100) throw Error("config: sde.steps must be at least 100");
        if (format != "csv" && format != "json") throw Error("config: report.format must be csv or json");
    }

private:
    template <class T>
    static void read(const boost::property_tree::ptree& pt, const char* key, T& v) {
        if (pt.get_optional<std::string>(key)) v = pt.get<T>(key);
    }

    void apply(const boost::property_tree::ptree& pt) {
        static const std::vector<std::pair<std::string, std::vector<std::string>>> known = {
            {"run", {"scenario", "seed", "fast"}},
            {"grid", {"n", "m"}},
            {"transform", {"lambda"}},
            {"sde", {"paths", "steps", "dump"}},
            {"coupling", {"paths", "gamma", "base_steps", "eps_stop_fraction", "truncation"}},
            {"report", {"format", "out"}},
        };
        for (const auto& [section, body] : pt) {
            auto it = std::find_if(known.begin(), known.end(), [&](const auto& k) { return k.first == section; });
            if (it == known.end()) throw Error("config: unknown section [" + section + "]");
            for (const auto& [key, value] : body) {
                (void)value;
                if (std::find(it->second.begin(), it->second.end(), key) == it->second.end())
                    throw Error("config: unknown key " + section + "." + key);
            }
        }
        try {
            read(pt, "run.scenario", scenario);
            read(pt, "run.seed", seed);
            read(pt, "run.fast", fast);
            read(pt, "grid.n", grid_n);
            read(pt, "grid.m", grid_m);
            read(pt, "transform.lambda", lambda);
            read(pt, "sde.paths", paths);
            read(pt, "sde.steps", steps);
            read(pt, "sde.dump", dump);
            read(pt, "coupling.paths", coupling_paths);
            read(pt, "coupling.gamma", gamma);
            read(pt, "coupling.base_steps", base_steps);
            read(pt, "coupling.eps_stop_fraction", eps_stop_fraction);
            read(pt, "coupling.truncation", truncation);
            read(pt, "report.format", format);
            read(pt, "report.out", out);
        } catch (const boost::property_tree::ptree_error& e) {
            throw Error(std::string("config: ") + e.what());
        }
    }
};

}  // namespace zvlab
