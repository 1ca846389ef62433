#pragma once

#include "zvlab/common.hpp"
#include "zvlab/harness/config.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace zvlab {

/// One row of the report. Numbers are either tagged exact or carry a CI.
struct Record {
    std::string check_id;
    double value = 0.0;
    double ci_low = std::numeric_limits<double>::quiet_NaN();
    double ci_high = std::numeric_limits<double>::quiet_NaN();
    double threshold = std::numeric_limits<double>::quiet_NaN();
    std::string verdict = "info";  ///< pass, fail, inconclusive or info
    std::string tag = "exact";     ///< exact, or mc-3se for Monte Carlo values with a 3 SE interval
};

inline std::string format_number(double v) {
    if (std::isnan(v)) return "";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Git-style object hash: sha1("blob <len>\0" + text).
inline std::string content_hash(const std::string& text) {
    const std::string blob = "blob " + std::to_string(text.size()) + std::string(1, '\0') + text;
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(blob.data(), blob.size(), md, &len, EVP_sha1(), nullptr) != 1) throw Error("report: sha1 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

/// Append-only run report.
class RunReport {
public:
    RunReport(std::string scenario, const RunConfig& cfg)
        : scenario_(std::move(scenario)), seed_(cfg.seed), config_(cfg.entries()), hash_(content_hash(cfg.canonical())) {}

    void add(Record r) { records_.push_back(std::move(r)); }

    void exact(const std::string& id, double v) { add({id, v}); }

    void check(const std::string& id, double v, double threshold, bool pass) {
        Record r{id, v};
        r.threshold = threshold;
        r.verdict = pass ? "pass" : "fail";
        add(std::move(r));
    }

    void estimate(const std::string& id, double v, double se, double threshold, const std::string& verdict) {
        Record r{id, v, v - 3.0 * se, v + 3.0 * se, threshold, verdict, "mc-3se"};
        add(std::move(r));
    }

    void time(const std::string& stage, double seconds) { wall_[stage] += seconds; }

    const std::vector<Record>& records() const { return records_; }
    const std::string& hash() const { return hash_; }
    const std::string& scenario() const { return scenario_; }

    /// 0 all pass, 2 any failure, 3 inconclusive without failure.
    int exit_code() const {
        bool inconclusive = false;
        for (const auto& r : records_) {
            if (r.verdict == "fail") return 2;
            if (r.verdict == "inconclusive") inconclusive = true;
        }
        return inconclusive ? 3 : 0;
    }

    /// Numeric payload: header comments plus one row per check. Wall times are
    /// kept out so the text depends only on (config, seed).
    std::string csv() const {
        std::string s = "# scenario=" + scenario_ + "\n# config-hash=" + hash_ + "\n# seed=" + std::to_string(seed_) + "\n";
        for (const auto& [k, v] : config_) s += "# " + k + "=" + v + "\n";
        s += "check-id,value,ci-low,ci-high,threshold,verdict,provenance-tag\n";
        for (const auto& r : records_)
            s += scenario_ + "." + r.check_id + "," + format_number(r.value) + "," + format_number(r.ci_low) + "," +
                 format_number(r.ci_high) + "," + format_number(r.threshold) + "," + r.verdict + "," + r.tag + "\n";
        return s;
    }

    nlohmann::ordered_json json(bool with_timing = true) const {
        nlohmann::ordered_json j;
        j["scenario"] = scenario_;
        j["config_hash"] = hash_;
        j["seed"] = seed_;
        auto& cfg = j["config"] = nlohmann::ordered_json::object();
        for (const auto& [k, v] : config_) cfg[k] = v;
        auto& rows = j["records"] = nlohmann::ordered_json::array();
        for (const auto& r : records_) {
            nlohmann::ordered_json row;
            row["check_id"] = r.check_id;
            row["value"] = format_number(r.value);
            row["ci_low"] = format_number(r.ci_low);
            row["ci_high"] = format_number(r.ci_high);
            row["threshold"] = format_number(r.threshold);
            row["verdict"] = r.verdict;
            row["provenance_tag"] = r.tag;
            rows.push_back(row);
        }
        if (with_timing) {
            auto& w = j["wall_seconds"] = nlohmann::ordered_json::object();
            for (const auto& [k, v] : wall_) w[k] = v;
        }
        return j;
    }

    /// Writes report.csv (with timings.csv) or report.json into dir.
    void write(const std::string& dir, const std::string& format) const {
        if (format == "json") {
            std::ofstream(dir + "/report.json") << json().dump(2) << "\n";
        } else {
            std::ofstream(dir + "/report.csv") << csv();
            std::ofstream t(dir + "/timings.csv");
            t << "stage,seconds\n";
            for (const auto& [k, v] : wall_) t << k << "," << v << "\n";
        }
    }

private:
    std::string scenario_;
    std::uint64_t seed_;
    std::vector<std::pair<std::string, std::string>> config_;
    std::string hash_;
    std::vector<Record> records_;
    std::map<std::string, double> wall_;
};

}  // namespace zvlab
