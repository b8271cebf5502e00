// Core value types shared by every windtl module: farms, NWP features,
// aligned time series and operational events.
#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace windtl {

// ============================================================================
// Errors
// ============================================================================

/// Precondition or invariant violated by caller-supplied data.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A generator was asked for zero records.
class EmptyRequestError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// ============================================================================
// Time
// ============================================================================

using Instant = std::chrono::sys_seconds;
using Hours = std::chrono::hours;

inline Instant make_instant(int y, unsigned m, unsigned d, int hour = 0) {
    using namespace std::chrono;
    return Instant{sys_days{year{y} / month{m} / day{d}}} + hours{hour};
}

/// Hour of day (UTC), 0..23.
inline int hour_of_day(Instant t) {
    using namespace std::chrono;
    auto since_midnight = t - floor<days>(t);
    return static_cast<int>(duration_cast<hours>(since_midnight).count());
}

/// Whole days since the Unix epoch (floor).
inline std::int64_t day_index(Instant t) {
    using namespace std::chrono;
    return floor<days>(t).time_since_epoch().count();
}

/// Day of year, 0-based.
inline int day_of_year(Instant t) {
    using namespace std::chrono;
    auto d = floor<days>(t);
    year_month_day ymd{d};
    return static_cast<int>((d - sys_days{ymd.year() / January / 1}).count());
}

/// ISO-8601 UTC, e.g. 2021-01-01T00:00:00Z
inline std::string format_iso(Instant t) {
    using namespace std::chrono;
    auto d = floor<days>(t);
    year_month_day ymd{d};
    hh_mm_ss hms{t - d};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

inline Instant parse_iso(std::string_view text) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    std::string buf{text};
    int n = std::sscanf(buf.c_str(), "%d-%d-%dT%d:%d:%d", &y, &mo, &d, &h, &mi, &s);
    if (n < 3 || mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59 ||
        s < 0 || s > 60)
        throw ValidationError("malformed ISO-8601 timestamp: '" + buf + "'");
    using namespace std::chrono;
    year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) throw ValidationError("invalid calendar date: '" + buf + "'");
    return Instant{sys_days{ymd}} + hours{h} + minutes{mi} + seconds{s};
}

// ============================================================================
// Farms
// ============================================================================

enum class Terrain { onshore, offshore, forest, farmland, mountain };

inline constexpr std::array<Terrain, 5> kAllTerrains{Terrain::onshore, Terrain::offshore,
                                                     Terrain::forest, Terrain::farmland,
                                                     Terrain::mountain};

inline std::string_view to_string(Terrain t) {
    switch (t) {
    case Terrain::onshore: return "onshore";
    case Terrain::offshore: return "offshore";
    case Terrain::forest: return "forest";
    case Terrain::farmland: return "farmland";
    case Terrain::mountain: return "mountain";
    }
    return "unknown";
}

inline Terrain terrain_from_string(std::string_view s) {
    for (auto t : kAllTerrains)
        if (to_string(t) == s) return t;
    throw ValidationError("unknown terrain '" + std::string{s} + "'");
}

struct FarmConfig {
    std::string farm_id;
    Terrain terrain = Terrain::onshore;
    double rotor_area = 0.0;  // m^2, summed over turbines
    double rated_power = 0.0; // kW
    double v_cut_in = 3.0;    // m/s
    double v_rated = 12.0;    // m/s
    double v_cut_out = 25.0;  // m/s
    double latitude = 0.0;    // deg
    double longitude = 0.0;   // deg
    double turbulence_scale = 0.0;

    bool operator==(const FarmConfig&) const = default;
};

inline void validate(const FarmConfig& c) {
    if (!(0.0 < c.v_cut_in && c.v_cut_in < c.v_rated && c.v_rated < c.v_cut_out))
        throw ValidationError("farm '" + c.farm_id + "': require 0 < v_cut_in < v_rated < v_cut_out");
    if (!(c.rotor_area > 0.0) || !(c.rated_power > 0.0))
        throw ValidationError("farm '" + c.farm_id + "': rotor_area and rated_power must be positive");
    if (!(c.turbulence_scale >= 0.0))
        throw ValidationError("farm '" + c.farm_id + "': turbulence_scale must be >= 0");
}

// ============================================================================
// NWP features and datasets
// ============================================================================

struct NwpFeatureVector {
    double ws100 = 0.0;       // m/s
    double ws10 = 0.0;        // m/s
    double wdir_sin = 0.0;
    double wdir_cos = 1.0;
    double pressure = 1013.25; // hPa
    double temperature = 288.15; // K
    double humidity = 0.5;    // [0,1]

    bool operator==(const NwpFeatureVector&) const = default;
};

inline constexpr std::size_t kNwpFeatureCount = 7;

inline const std::array<std::string_view, kNwpFeatureCount>& nwp_feature_names() {
    static const std::array<std::string_view, kNwpFeatureCount> names{
        "ws100", "ws10", "wdir_sin", "wdir_cos", "pressure", "temperature", "humidity"};
    return names;
}

inline std::array<double, kNwpFeatureCount> as_array(const NwpFeatureVector& f) {
    return {f.ws100, f.ws10, f.wdir_sin, f.wdir_cos, f.pressure, f.temperature, f.humidity};
}

inline bool satisfies_invariants(const NwpFeatureVector& f) {
    double norm = f.wdir_sin * f.wdir_sin + f.wdir_cos * f.wdir_cos;
    return f.ws100 >= 0.0 && f.ws10 >= 0.0 && std::abs(norm - 1.0) <= 1e-9 && f.humidity >= 0.0 &&
           f.humidity <= 1.0 && std::isfinite(f.pressure) && std::isfinite(f.temperature);
}

/// Hourly, aligned NWP features (and optionally normalized power) for one farm
/// and one NWP model.
struct TimeSeriesDataset {
    std::string farm_id;
    std::string nwp_model_id;
    std::vector<Instant> timestamps;
    std::vector<NwpFeatureVector> features;
    std::vector<double> lead_time; // hours
    /// Empty when the dataset carries no labels at all; otherwise one entry per
    /// record, absent entries allowed.
    std::vector<std::optional<double>> power;

    std::size_t size() const { return timestamps.size(); }
    bool empty() const { return timestamps.empty(); }
    bool has_power() const { return !power.empty(); }

    std::size_t labeled_count() const {
        std::size_t n = 0;
        for (const auto& p : power) n += p.has_value();
        return n;
    }

    bool operator==(const TimeSeriesDataset&) const = default;
};

inline void validate(const TimeSeriesDataset& ds) {
    if (ds.features.size() != ds.timestamps.size() || ds.lead_time.size() != ds.timestamps.size())
        throw ValidationError("dataset '" + ds.farm_id + "': column lengths differ");
    if (ds.has_power() && ds.power.size() != ds.timestamps.size())
        throw ValidationError("dataset '" + ds.farm_id + "': power length differs from timestamps");
    for (std::size_t i = 1; i < ds.timestamps.size(); ++i)
        if (!(ds.timestamps[i - 1] < ds.timestamps[i]))
            throw ValidationError("dataset '" + ds.farm_id + "': timestamps not strictly increasing");
    for (const auto& p : ds.power)
        if (p && !(*p >= 0.0 && *p <= 1.0))
            throw ValidationError("dataset '" + ds.farm_id + "': power outside [0,1]");
    for (double l : ds.lead_time)
        if (!(l >= 0.0)) throw ValidationError("dataset '" + ds.farm_id + "': negative lead time");
}

/// Records with first <= timestamp < last.
inline TimeSeriesDataset slice(const TimeSeriesDataset& ds, Instant first, Instant last) {
    TimeSeriesDataset out;
    out.farm_id = ds.farm_id;
    out.nwp_model_id = ds.nwp_model_id;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.timestamps[i] < first || !(ds.timestamps[i] < last)) continue;
        out.timestamps.push_back(ds.timestamps[i]);
        out.features.push_back(ds.features[i]);
        out.lead_time.push_back(ds.lead_time[i]);
        if (ds.has_power()) out.power.push_back(ds.power[i]);
    }
    return out;
}

/// Copy with the power column removed.
inline TimeSeriesDataset without_power(TimeSeriesDataset ds) {
    ds.power.clear();
    return ds;
}

/// Only records that carry a label.
inline TimeSeriesDataset labeled_only(const TimeSeriesDataset& ds) {
    TimeSeriesDataset out;
    out.farm_id = ds.farm_id;
    out.nwp_model_id = ds.nwp_model_id;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (!ds.has_power() || !ds.power[i]) continue;
        out.timestamps.push_back(ds.timestamps[i]);
        out.features.push_back(ds.features[i]);
        out.lead_time.push_back(ds.lead_time[i]);
        out.power.push_back(ds.power[i]);
    }
    return out;
}

/// The model input vector: the seven NWP features plus the hour of day
/// encoded on the unit circle.
inline constexpr std::size_t kModelInputCount = kNwpFeatureCount + 2;

inline const std::array<std::string_view, kModelInputCount>& model_input_names() {
    static const std::array<std::string_view, kModelInputCount> names{
        "ws100",    "ws10",     "wdir_sin", "wdir_cos", "pressure",
        "temperature", "humidity", "hour_sin", "hour_cos"};
    return names;
}

inline std::array<double, kModelInputCount> model_inputs(const NwpFeatureVector& f, Instant t) {
    constexpr double kTwoPi = 6.283185307179586;
    double angle = kTwoPi * hour_of_day(t) / 24.0;
    return {f.ws100,       f.ws10,     f.wdir_sin,      f.wdir_cos,     f.pressure,
            f.temperature, f.humidity, std::sin(angle), std::cos(angle)};
}

// ============================================================================
// Lifecycle events
// ============================================================================

enum class EventKind { night_shutoff, maintenance, nwp_model_change };

inline std::string_view to_string(EventKind k) {
    switch (k) {
    case EventKind::night_shutoff: return "night_shutoff";
    case EventKind::maintenance: return "maintenance";
    case EventKind::nwp_model_change: return "nwp_model_change";
    }
    return "unknown";
}

inline EventKind event_kind_from_string(std::string_view s) {
    for (auto k : {EventKind::night_shutoff, EventKind::maintenance, EventKind::nwp_model_change})
        if (to_string(k) == s) return k;
    throw ValidationError("unknown event kind '" + std::string{s} + "'");
}

struct LifecycleEvent {
    EventKind kind = EventKind::maintenance;
    Instant start{};
    std::optional<Instant> end;
    // night_shutoff: daily clock interval [clock_start, clock_end), wraps past midnight
    int clock_start = 0;
    int clock_end = 0;
    // nwp_model_change: id of the model that takes over
    std::string new_nwp_model_id;

    bool active_at(Instant t) const { return !(t < start) && (!end || t < *end); }

    bool operator==(const LifecycleEvent&) const = default;
};

/// True when hour h lies in the daily interval [start, end) (wrapping at 24).
inline bool in_clock_interval(int h, int start, int end) {
    if (start == end) return false;
    if (start < end) return h >= start && h < end;
    return h >= start || h < end;
}

inline void validate(const LifecycleEvent& e) {
    if (e.end && !(e.start < *e.end)) throw ValidationError("event: start must precede end");
    if (e.kind == EventKind::night_shutoff) {
        if (e.clock_start < 0 || e.clock_start >= 24 || e.clock_end < 0 || e.clock_end >= 24)
            throw ValidationError("night_shutoff: clock hours must lie in [0, 24)");
        if (e.clock_start == e.clock_end)
            throw ValidationError("night_shutoff: empty clock interval");
    }
    if (e.kind == EventKind::nwp_model_change && e.new_nwp_model_id.empty())
        throw ValidationError("nwp_model_change: new_nwp_model_id required");
}

inline bool overlaps(const LifecycleEvent& a, const LifecycleEvent& b) {
    bool a_before_b = a.end && !(b.start < *a.end);
    bool b_before_a = b.end && !(a.start < *b.end);
    return !a_before_b && !b_before_a;
}

/// Rejects malformed events and same-kind events that overlap in time with
/// differing parameters.
inline void validate_events(const std::vector<LifecycleEvent>& events) {
    for (const auto& e : events) validate(e);
    for (std::size_t i = 0; i < events.size(); ++i)
        for (std::size_t j = i + 1; j < events.size(); ++j) {
            const auto& a = events[i];
            const auto& b = events[j];
            if (a.kind != b.kind || !overlaps(a, b)) continue;
            bool same = a.clock_start == b.clock_start && a.clock_end == b.clock_end &&
                        a.new_nwp_model_id == b.new_nwp_model_id;
            if (!same)
                throw ValidationError("contradictory overlapping " + std::string{to_string(a.kind)} +
                                      " events");
        }
}

} // namespace windtl
