// Command implementations behind the `windtl` executable: gen, run, eval.
#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "windtl/dataset_io.hpp"
#include "windtl/lifecycle.hpp"
#include "windtl/metrics.hpp"
#include "windtl/scenario.hpp"
#include "windtl/synthdata.hpp"

namespace windtl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) out.push_back(item);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

/// Parses "terrain:count,terrain:count".
inline std::vector<scenario::PoolSpec> parse_pool(const std::string& text) {
    if (text.empty()) throw ValidationError("--pool: at least one terrain:count entry required");
    std::vector<scenario::PoolSpec> pool;
    for (const auto& item : split(text, ',')) {
        auto colon = item.find(':');
        if (colon == std::string::npos) throw ValidationError("--pool: expected terrain:count, got '" + item + "'");
        scenario::PoolSpec p;
        try {
            p.terrain = terrain_from_string(item.substr(0, colon));
        } catch (const ValidationError&) {
            throw ValidationError("--pool: unknown terrain '" + item.substr(0, colon) + "'");
        }
        const auto count = item.substr(colon + 1);
        if (count.empty() || count.find_first_not_of("0123456789") != std::string::npos || std::stoull(count) == 0)
            throw ValidationError("--pool: count must be a positive integer in '" + item + "'");
        p.count = std::stoull(count);
        pool.push_back(p);
    }
    return pool;
}

inline std::vector<std::string> parse_list(const std::string& text, const std::string& flag) {
    auto items = split(text, ',');
    if (items.empty()) throw ValidationError(flag + ": empty list");
    for (const auto& i : items)
        if (i.empty()) throw ValidationError(flag + ": empty entry in '" + text + "'");
    return items;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io::IoError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw io::IoError("write to '" + path.string() + "' failed");
}

inline void make_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
        throw io::IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

inline nlohmann::json to_json(const FarmConfig& c) {
    return {{"farm_id", c.farm_id},         {"terrain", to_string(c.terrain)}, {"rotor_area", c.rotor_area},
            {"rated_power", c.rated_power}, {"v_cut_in", c.v_cut_in},          {"v_rated", c.v_rated},
            {"v_cut_out", c.v_cut_out},     {"latitude", c.latitude},          {"longitude", c.longitude},
            {"turbulence_scale", c.turbulence_scale}};
}

// ============================================================================
// gen
// ============================================================================

struct GenOptions {
    std::string pool;
    std::size_t months = 12;
    std::uint64_t seed = 1;
    std::string nwp_models = "nwpA";
    std::string out;
};

/// One labeled CSV per (farm, NWP model) plus manifest.json. Farm i of the
/// pool gets the same seed it has as pool farm i in a lifecycle run.
inline int cmd_gen(const GenOptions& o, std::ostream& out, std::ostream& err) {
    try {
        auto pool = parse_pool(o.pool);
        auto models = parse_list(o.nwp_models, "--nwp-models");
        if (o.months < 1) throw ValidationError("--months: must be >= 1");
        if (o.out.empty()) throw ValidationError("--out: output directory required");
        const std::filesystem::path dir(o.out);
        make_dir(dir);

        const std::size_t hours = o.months * lifecycle::kMonthHours;
        const Instant start = synth::default_series_start();
        nlohmann::json farms = nlohmann::json::array();
        std::size_t index = 0, files = 0;
        for (const auto& spec : pool)
            for (std::size_t c = 0; c < spec.count; ++c, ++index) {
                const auto seed = synth::mix_seed(o.seed, index + 1);
                auto config = synth::generate_farm_config(seed, spec.terrain);
                auto truth = synth::generate_nwp_series(config, hours, synth::kTruthModelId, seed, start);
                auto observed = synth::generate_power_series(config, truth, {}, seed);
                nlohmann::json entry = to_json(config);
                entry["files"] = nlohmann::json::object();
                for (const auto& id : models) {
                    auto ds = synth::attach_power(synth::generate_nwp_series(config, hours, id, seed, start), observed);
                    const std::string name = config.farm_id + "__" + id + ".csv";
                    io::write_csv_file((dir / name).string(), ds);
                    entry["files"][id] = name;
                    ++files;
                }
                farms.push_back(entry);
            }
        nlohmann::json manifest{{"format", "windtl.farm_pool"}, {"version", 1},
                                {"seed", o.seed},               {"months", o.months},
                                {"hours", hours},               {"start", format_iso(start)},
                                {"nwp_models", models},         {"farms", farms}};
        write_text(dir / "manifest.json", manifest.dump(2) + "\n");
        out << "wrote " << files << " farm files and manifest.json to " << dir.string() << '\n';
        return kExitOk;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

// ============================================================================
// run
// ============================================================================

struct RunOptions {
    std::string scenario; // empty: the bundled default scenario
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> months;
    std::string methods; // comma list overriding the scenario's methods
    std::string out;
};

inline constexpr std::string_view kReportFile = "report.json";
inline constexpr std::string_view kMetricsFile = "metrics.csv";

inline scenario::ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("--scenario: cannot read '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("--scenario: '" + path + "' is not valid JSON: " + e.what());
    }
    return scenario::from_json(j);
}

/// Scenario after applying the command-line overrides.
inline scenario::ScenarioConfig resolve_scenario(const RunOptions& o) {
    auto sc = o.scenario.empty() ? scenario::default_scenario() : load_scenario(o.scenario);
    if (o.seed) sc.seed = *o.seed;
    if (o.months) sc.months = *o.months;
    if (!o.methods.empty()) sc.methods = parse_list(o.methods, "--methods");
    scenario::validate(sc);
    return sc;
}

inline int cmd_run(const RunOptions& o, std::ostream& out, std::ostream& err) {
    scenario::ScenarioConfig sc;
    try {
        if (o.out.empty()) throw ValidationError("--out: output directory required");
        sc = resolve_scenario(o);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    try {
        auto report = lifecycle::run_lifecycle(sc);
        const std::filesystem::path dir(o.out);
        make_dir(dir);
        write_text(dir / kReportFile, lifecycle::to_json(report).dump(2) + "\n");
        std::ostringstream csv;
        lifecycle::write_metrics_csv(csv, report);
        write_text(dir / kMetricsFile, csv.str());
        out << "months: " << report.months.size() << ", events: " << report.events.size()
            << ", audit violations: " << report.audit_violations() << ", crossover month: "
            << (report.crossover_month ? std::to_string(*report.crossover_month) : "none") << '\n';
        out << "wrote " << (dir / kReportFile).string() << " and " << (dir / kMetricsFile).string() << '\n';
        return kExitOk;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: lifecycle run failed: " << e.what() << '\n';
        return kExitRuntime;
    }
}

// ============================================================================
// eval
// ============================================================================

struct MethodSummary {
    std::string method;
    std::size_t months = 0;
    double rmse_median = 0.0;
    double rmse_iqr = 0.0;
    double skill_median = 0.0;
    double skill_iqr = 0.0;
};

/// Per-method median and IQR across the months in which the method reported.
inline std::vector<MethodSummary> summarize(const nlohmann::json& report) {
    if (!report.is_object() || !report.contains("months") || !report.at("months").is_array())
        throw ValidationError("report: missing 'months' array");
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> values;
    for (const auto& month : report.at("months")) {
        if (!month.contains("methods") || !month.at("methods").is_object())
            throw ValidationError("report: month without 'methods' object");
        for (const auto& [name, m] : month.at("methods").items()) {
            if (!m.contains("rmse") || !m.contains("skill") || !m.at("rmse").is_number() || !m.at("skill").is_number())
                throw ValidationError("report: method '" + name + "' lacks numeric rmse/skill");
            values[name].first.push_back(m.at("rmse").get<double>());
            values[name].second.push_back(m.at("skill").get<double>());
        }
    }
    std::vector<MethodSummary> rows;
    for (const auto& [name, v] : values)
        rows.push_back({name, v.first.size(), metrics::median(v.first), metrics::iqr(v.first), metrics::median(v.second),
                        metrics::iqr(v.second)});
    return rows;
}

struct EvalOptions {
    std::string report;
    std::string format = "table";
};

inline constexpr std::string_view kSummaryCsvHeader = "method,months,rmse_median,rmse_iqr,skill_median,skill_iqr";

inline void write_summary(std::ostream& out, const std::vector<MethodSummary>& rows, const std::string& format) {
    if (format == "json") {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& r : rows)
            j.push_back({{"method", r.method},           {"months", r.months},
                         {"rmse_median", r.rmse_median}, {"rmse_iqr", r.rmse_iqr},
                         {"skill_median", r.skill_median}, {"skill_iqr", r.skill_iqr}});
        out << j.dump(2) << '\n';
    } else if (format == "csv") {
        out << kSummaryCsvHeader << '\n';
        for (const auto& r : rows)
            out << r.method << ',' << r.months << ',' << io::format_double(r.rmse_median) << ','
                << io::format_double(r.rmse_iqr) << ',' << io::format_double(r.skill_median) << ','
                << io::format_double(r.skill_iqr) << '\n';
    } else if (format == "table") {
        std::size_t width = 6;
        for (const auto& r : rows) width = std::max(width, r.method.size());
        out << std::left << std::setw(static_cast<int>(width)) << "method" << std::right << std::setw(8) << "months"
            << std::setw(13) << "rmse_median" << std::setw(11) << "rmse_iqr" << std::setw(14) << "skill_median"
            << std::setw(11) << "skill_iqr" << '\n';
        out << std::fixed << std::setprecision(4);
        for (const auto& r : rows)
            out << std::left << std::setw(static_cast<int>(width)) << r.method << std::right << std::setw(8) << r.months
                << std::setw(13) << r.rmse_median << std::setw(11) << r.rmse_iqr << std::setw(14) << r.skill_median
                << std::setw(11) << r.skill_iqr << '\n';
        out << std::defaultfloat;
    } else {
        throw ValidationError("--format: expected json, csv or table, got '" + format + "'");
    }
}

inline int cmd_eval(const EvalOptions& o, std::ostream& out, std::ostream& err) {
    try {
        if (o.format != "json" && o.format != "csv" && o.format != "table")
            throw ValidationError("--format: expected json, csv or table, got '" + o.format + "'");
        std::ifstream in(o.report, std::ios::binary);
        if (!in) throw ValidationError("report: cannot read '" + o.report + "'");
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw ValidationError("report: '" + o.report + "' is not valid JSON: " + e.what());
        }
        write_summary(out, summarize(j), o.format);
        return kExitOk;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

} // namespace windtl::cli
