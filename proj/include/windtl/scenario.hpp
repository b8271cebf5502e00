// Lifecycle scenario definition: JSON schema "1", validation with field paths.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "windtl/types.hpp"

namespace windtl::scenario {

inline constexpr std::string_view kSchemaVersion = "1";

inline const std::vector<std::string>& known_methods() {
    static const std::vector<std::string> m{"physical", "wp1_naive", "wp1_universal", "csge",
                                            "self_train", "mtl",       "multicross",    "target_only"};
    return m;
}

/// Tunables with their defaults; scenario "hyper" may override any of them.
inline const std::map<std::string, double>& default_hyper() {
    static const std::map<std::string, double> h{
        {"history_days", 180},     // pool history and target NWP before commissioning
        {"epochs", 60},            // single-task regressors
        {"replicas", 5},           // source replicas for pseudo-labels
        {"universal_code_dim", 4},
        {"mtl_epochs", 20},
        {"multicross_epochs", 15},
        {"multicross_lambda", 0.5},
        {"self_train_rounds", 3},
        {"self_train_threshold", 0.9},
        {"self_train_epochs", 30},
        {"window_hours", 2160},    // cap on recent labeled hours for heads and self-training
        {"csge_eta", 2.0},
        {"csge_neighbors", 50},
        {"retrieval_k", 5},
        {"adapt_epochs", 40},
    };
    return h;
}

struct PoolSpec {
    Terrain terrain = Terrain::onshore;
    std::size_t count = 0;
};

/// Event with its farm ("target" or "pool:<index>") and times in days
/// relative to the target's commissioning.
struct ScenarioEvent {
    std::string farm = "target";
    EventKind kind = EventKind::maintenance;
    double start_day = 0.0;
    std::optional<double> end_day;
    int clock_start = 0;
    int clock_end = 0;
    std::string new_nwp_model_id;
};

struct ScenarioConfig {
    std::uint64_t seed = 1;
    std::vector<PoolSpec> pool;
    Terrain target_terrain = Terrain::onshore;
    std::size_t months = 12;
    std::vector<std::string> nwp_models{"nwpA", "nwpB"};
    std::vector<ScenarioEvent> events;
    std::vector<std::string> methods = known_methods();
    std::map<std::string, double> hyper;

    std::size_t pool_size() const {
        std::size_t n = 0;
        for (const auto& p : pool) n += p.count;
        return n;
    }
    bool uses(std::string_view method) const {
        return std::find(methods.begin(), methods.end(), method) != methods.end();
    }
    double param(const std::string& key) const {
        auto it = hyper.find(key);
        return it != hyper.end() ? it->second : default_hyper().at(key);
    }
};

namespace detail {

[[noreturn]] inline void fail(const std::string& path, const std::string& message) {
    throw ValidationError(path + ": " + message);
}

inline const nlohmann::json& field(const nlohmann::json& j, const std::string& key, const std::string& path) {
    if (!j.contains(key)) fail(path + "." + key, "required field missing");
    return j.at(key);
}

inline std::string string_at(const nlohmann::json& j, const std::string& path) {
    if (!j.is_string()) fail(path, "expected a string");
    return j.get<std::string>();
}

inline double number_at(const nlohmann::json& j, const std::string& path) {
    if (!j.is_number()) fail(path, "expected a number");
    return j.get<double>();
}

inline std::uint64_t count_at(const nlohmann::json& j, const std::string& path) {
    if (!j.is_number_integer() && !j.is_number_unsigned()) fail(path, "expected a non-negative integer");
    if (j.is_number_integer() && j.get<std::int64_t>() < 0) fail(path, "expected a non-negative integer");
    return j.get<std::uint64_t>();
}

inline Terrain terrain_at(const nlohmann::json& j, const std::string& path) {
    auto s = string_at(j, path);
    try {
        return terrain_from_string(s);
    } catch (const ValidationError&) {
        fail(path, "unknown terrain '" + s + "'");
    }
}

inline int clock_at(const nlohmann::json& j, const std::string& path) {
    auto v = count_at(j, path);
    if (v >= 24) fail(path, "clock hour must lie in [0, 24)");
    return static_cast<int>(v);
}

} // namespace detail

/// Checks invariants; every message starts with the offending field's path.
inline void validate(const ScenarioConfig& sc) {
    if (sc.months > 120) detail::fail("scenario.months", "must be <= 120");
    if (sc.pool.empty()) detail::fail("scenario.pool", "at least one pool entry required");
    for (std::size_t i = 0; i < sc.pool.size(); ++i)
        if (sc.pool[i].count == 0) detail::fail("scenario.pool[" + std::to_string(i) + "].count", "must be >= 1");
    if (sc.nwp_models.empty()) detail::fail("scenario.nwp_models", "at least one NWP model required");
    std::set<std::string> models;
    for (std::size_t i = 0; i < sc.nwp_models.size(); ++i) {
        const auto& id = sc.nwp_models[i];
        auto path = "scenario.nwp_models[" + std::to_string(i) + "]";
        if (id.empty()) detail::fail(path, "empty id");
        if (id == "truth") detail::fail(path, "'truth' is reserved");
        if (!models.insert(id).second) detail::fail(path, "duplicate id '" + id + "'");
    }
    if (sc.methods.empty()) detail::fail("scenario.methods", "at least one method required");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < sc.methods.size(); ++i) {
        auto path = "scenario.methods[" + std::to_string(i) + "]";
        const auto& m = sc.methods[i];
        if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end())
            detail::fail(path, "unknown method '" + m + "'");
        if (!seen.insert(m).second) detail::fail(path, "duplicate method '" + m + "'");
    }
    for (const auto& [key, value] : sc.hyper) {
        auto path = "scenario.hyper." + key;
        if (!default_hyper().count(key)) detail::fail(path, "unknown parameter");
        if (!std::isfinite(value) || value < 0.0) detail::fail(path, "must be a finite non-negative number");
    }
    const double history_days = sc.param("history_days");
    if (history_days < 7.0) detail::fail("scenario.hyper.history_days", "must be >= 7");
    for (const char* key : {"epochs", "mtl_epochs", "multicross_epochs", "self_train_epochs", "adapt_epochs"})
        if (sc.param(key) < 1.0) detail::fail(std::string("scenario.hyper.") + key, "must be >= 1");
    if (sc.param("replicas") < 2.0) detail::fail("scenario.hyper.replicas", "must be >= 2");
    if (sc.param("universal_code_dim") < 1.0) detail::fail("scenario.hyper.universal_code_dim", "must be >= 1");
    if (sc.param("self_train_threshold") <= 0.0 || sc.param("self_train_threshold") > 1.0)
        detail::fail("scenario.hyper.self_train_threshold", "must lie in (0, 1]");
    if (sc.param("retrieval_k") < 1.0) detail::fail("scenario.hyper.retrieval_k", "must be >= 1");
    if (sc.param("csge_neighbors") < 1.0) detail::fail("scenario.hyper.csge_neighbors", "must be >= 1");
    if (sc.param("window_hours") < 168.0) detail::fail("scenario.hyper.window_hours", "must be >= 168");

    const double horizon_days = 30.0 * static_cast<double>(sc.months);
    for (std::size_t i = 0; i < sc.events.size(); ++i) {
        const auto& e = sc.events[i];
        auto path = "scenario.events[" + std::to_string(i) + "]";
        if (e.farm != "target") {
            auto ok = e.farm.rfind("pool:", 0) == 0 && e.farm.size() > 5 &&
                      std::all_of(e.farm.begin() + 5, e.farm.end(), [](char c) { return c >= '0' && c <= '9'; });
            if (!ok || std::stoull(e.farm.substr(5)) >= sc.pool_size())
                detail::fail(path + ".farm", "expected 'target' or 'pool:<index>' within the pool");
        }
        if (!std::isfinite(e.start_day) || e.start_day < -history_days || e.start_day > horizon_days)
            detail::fail(path + ".start_day", "must lie within the simulated span");
        if (e.end_day && !(*e.end_day > e.start_day)) detail::fail(path + ".end_day", "must follow start_day");
        if (e.kind == EventKind::night_shutoff && e.clock_start == e.clock_end)
            detail::fail(path + ".clock_end", "empty clock interval");
        if (e.kind == EventKind::nwp_model_change) {
            if (e.farm != "target") detail::fail(path + ".farm", "NWP model changes apply to the target only");
            if (e.new_nwp_model_id.empty() || e.new_nwp_model_id == "truth")
                detail::fail(path + ".new_nwp_model_id", "a new model id is required");
            if (e.start_day < 0.0) detail::fail(path + ".start_day", "NWP model change must follow commissioning");
        }
    }
}

inline ScenarioConfig from_json(const nlohmann::json& j) {
    using namespace detail;
    const std::string root = "scenario";
    if (!j.is_object()) fail(root, "expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        static const std::set<std::string> allowed{"schema_version", "seed",   "pool",    "target_terrain", "months",
                                                   "nwp_models",     "events", "methods", "hyper"};
        if (!allowed.count(key)) fail(root + "." + key, "unknown field");
    }
    auto version = string_at(field(j, "schema_version", root), root + ".schema_version");
    if (version != kSchemaVersion) fail(root + ".schema_version", "unsupported version '" + version + "'");

    ScenarioConfig sc;
    sc.seed = count_at(field(j, "seed", root), root + ".seed");
    const auto& pool = field(j, "pool", root);
    if (!pool.is_array()) fail(root + ".pool", "expected an array");
    for (std::size_t i = 0; i < pool.size(); ++i) {
        auto path = root + ".pool[" + std::to_string(i) + "]";
        PoolSpec p;
        p.terrain = terrain_at(field(pool[i], "terrain", path), path + ".terrain");
        p.count = count_at(field(pool[i], "count", path), path + ".count");
        sc.pool.push_back(p);
    }
    sc.target_terrain = terrain_at(field(j, "target_terrain", root), root + ".target_terrain");
    sc.months = count_at(field(j, "months", root), root + ".months");
    if (j.contains("nwp_models")) {
        const auto& m = j.at("nwp_models");
        if (!m.is_array()) fail(root + ".nwp_models", "expected an array");
        sc.nwp_models.clear();
        for (std::size_t i = 0; i < m.size(); ++i)
            sc.nwp_models.push_back(string_at(m[i], root + ".nwp_models[" + std::to_string(i) + "]"));
    }
    if (j.contains("methods")) {
        const auto& m = j.at("methods");
        if (!m.is_array()) fail(root + ".methods", "expected an array");
        sc.methods.clear();
        for (std::size_t i = 0; i < m.size(); ++i)
            sc.methods.push_back(string_at(m[i], root + ".methods[" + std::to_string(i) + "]"));
    }
    if (j.contains("hyper")) {
        const auto& h = j.at("hyper");
        if (!h.is_object()) fail(root + ".hyper", "expected an object");
        for (const auto& [key, value] : h.items()) sc.hyper[key] = number_at(value, root + ".hyper." + key);
    }
    if (j.contains("events")) {
        const auto& ev = j.at("events");
        if (!ev.is_array()) fail(root + ".events", "expected an array");
        for (std::size_t i = 0; i < ev.size(); ++i) {
            auto path = root + ".events[" + std::to_string(i) + "]";
            const auto& x = ev[i];
            if (!x.is_object()) fail(path, "expected an object");
            ScenarioEvent e;
            auto kind = string_at(field(x, "kind", path), path + ".kind");
            try {
                e.kind = event_kind_from_string(kind);
            } catch (const ValidationError&) {
                fail(path + ".kind", "unknown event kind '" + kind + "'");
            }
            if (x.contains("farm")) e.farm = string_at(x.at("farm"), path + ".farm");
            e.start_day = number_at(field(x, "start_day", path), path + ".start_day");
            if (x.contains("end_day") && !x.at("end_day").is_null())
                e.end_day = number_at(x.at("end_day"), path + ".end_day");
            if (e.kind == EventKind::night_shutoff) {
                e.clock_start = clock_at(field(x, "clock_start", path), path + ".clock_start");
                e.clock_end = clock_at(field(x, "clock_end", path), path + ".clock_end");
            }
            if (e.kind == EventKind::nwp_model_change)
                e.new_nwp_model_id = string_at(field(x, "new_nwp_model_id", path), path + ".new_nwp_model_id");
            sc.events.push_back(e);
        }
    }
    validate(sc);
    return sc;
}

inline nlohmann::json to_json(const ScenarioConfig& sc) {
    nlohmann::json pool = nlohmann::json::array();
    for (const auto& p : sc.pool) pool.push_back({{"terrain", to_string(p.terrain)}, {"count", p.count}});
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : sc.events) {
        nlohmann::json x{{"kind", to_string(e.kind)}, {"farm", e.farm}, {"start_day", e.start_day}};
        if (e.end_day) x["end_day"] = *e.end_day;
        if (e.kind == EventKind::night_shutoff) {
            x["clock_start"] = e.clock_start;
            x["clock_end"] = e.clock_end;
        }
        if (e.kind == EventKind::nwp_model_change) x["new_nwp_model_id"] = e.new_nwp_model_id;
        events.push_back(x);
    }
    nlohmann::json hyper = nlohmann::json::object();
    for (const auto& [k, v] : sc.hyper) hyper[k] = v;
    return {{"schema_version", kSchemaVersion}, {"seed", sc.seed},     {"pool", pool},
            {"target_terrain", to_string(sc.target_terrain)},         {"months", sc.months},
            {"nwp_models", sc.nwp_models},      {"events", events},    {"methods", sc.methods},
            {"hyper", hyper}};
}

/// The bundled 12-month scenario: five same-terrain pool farms, one of which
/// ran a night shut-off for 90 days of its history, and a night shut-off at
/// the target from day 120 (day 30 of the growing phase).
inline ScenarioConfig default_scenario() {
    ScenarioConfig sc;
    sc.seed = 1;
    sc.pool = {{Terrain::onshore, 5}};
    sc.target_terrain = Terrain::onshore;
    sc.months = 12;
    ScenarioEvent pool_shutoff;
    pool_shutoff.farm = "pool:4";
    pool_shutoff.kind = EventKind::night_shutoff;
    pool_shutoff.start_day = -180;
    pool_shutoff.end_day = -90;
    pool_shutoff.clock_start = 22;
    pool_shutoff.clock_end = 6;
    ScenarioEvent target_shutoff = pool_shutoff;
    target_shutoff.farm = "target";
    target_shutoff.start_day = 120;
    target_shutoff.end_day.reset();
    sc.events = {pool_shutoff, target_shutoff};
    return sc;
}

} // namespace windtl::scenario
