// Reproducible synthetic wind farms, NWP feature series and power
// observations, including night shut-off, maintenance and NWP-model changes.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "windtl/baseline.hpp"
#include "windtl/types.hpp"

namespace windtl::synth {

// ============================================================================
// Seeding helpers
// ============================================================================

/// FNV-1a; stable across platforms and runs (std::hash is not).
inline std::uint64_t stable_hash(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ splitmix64(b + 0x632be59bd9b4e019ULL));
}

// ============================================================================
// Generator constants
// ============================================================================

/// Per-terrain parameter ranges. Configs draw uniformly inside [lo, hi].
struct TerrainProfile {
    Terrain terrain;
    double weibull_scale;     // m/s at 100 m
    double shear_exponent;    // power-law exponent between 10 m and 100 m
    double turbulence_lo, turbulence_hi;
    double v_rated_lo, v_rated_hi;
    double rotor_area_lo, rotor_area_hi; // m^2
    double rated_power_lo, rated_power_hi; // kW
    double lat_lo, lat_hi, lon_lo, lon_hi;
    double pressure_mean; // hPa
};

inline constexpr std::array<TerrainProfile, 5> kTerrainProfiles{{
    {Terrain::onshore, 8.5, 0.16, 0.30, 0.50, 11.5, 12.5, 30000, 60000, 20000, 40000, 51.0, 54.0, 7.0, 11.0, 1012.0},
    {Terrain::offshore, 11.0, 0.11, 0.02, 0.15, 12.0, 13.0, 80000, 150000, 200000, 400000, 53.5, 55.5, 5.5, 8.0, 1013.0},
    {Terrain::forest, 6.0, 0.30, 0.90, 1.30, 11.0, 12.0, 20000, 45000, 15000, 30000, 49.0, 51.5, 8.0, 12.0, 985.0},
    {Terrain::farmland, 8.0, 0.18, 0.20, 0.40, 11.5, 12.5, 30000, 60000, 20000, 40000, 51.5, 53.5, 9.0, 13.0, 1010.0},
    {Terrain::mountain, 9.0, 0.22, 0.60, 0.90, 11.5, 12.5, 15000, 35000, 10000, 25000, 47.5, 49.0, 9.0, 13.0, 900.0},
}};

inline const TerrainProfile& profile_for(Terrain t) {
    for (const auto& p : kTerrainProfiles)
        if (p.terrain == t) return p;
    throw ValidationError("no profile for terrain");
}

inline constexpr double kWeibullShape = 2.0;
inline constexpr double kWindAutoregression = 0.95;
inline constexpr double kNwpBiasMagnitude = 0.5;  // m/s, sign fixed per model id
inline constexpr double kNwpWindNoise = 0.4;      // m/s
inline constexpr std::string_view kTruthModelId = "truth";

/// Reference connection instant of the simulated target farm.
inline Instant default_series_start() { return make_instant(2021, 1, 1); }

/// Weibull scale at the farm's location: terrain scale modulated by +-6 %
/// across the terrain's latitude band.
inline double location_weibull_scale(const FarmConfig& c) {
    const auto& p = profile_for(c.terrain);
    double mid = 0.5 * (p.lat_lo + p.lat_hi);
    double half = std::max(1e-9, 0.5 * (p.lat_hi - p.lat_lo));
    double rel = std::clamp((c.latitude - mid) / half, -1.0, 1.0);
    return p.weibull_scale * (1.0 + 0.06 * rel);
}

// ============================================================================
// Farm configuration
// ============================================================================

inline FarmConfig generate_farm_config(std::uint64_t seed, Terrain terrain) {
    const auto& p = profile_for(terrain);
    std::mt19937_64 rng(mix_seed(seed, stable_hash(to_string(terrain))));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto draw = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    FarmConfig c;
    c.farm_id = std::string{to_string(terrain)} + "-" + std::to_string(seed);
    c.terrain = terrain;
    c.turbulence_scale = draw(p.turbulence_lo, p.turbulence_hi);
    c.v_rated = draw(p.v_rated_lo, p.v_rated_hi);
    c.v_cut_in = draw(2.5, 3.5);
    c.v_cut_out = draw(24.0, 26.0);
    c.rotor_area = draw(p.rotor_area_lo, p.rotor_area_hi);
    c.rated_power = draw(p.rated_power_lo, p.rated_power_hi);
    c.latitude = draw(p.lat_lo, p.lat_hi);
    c.longitude = draw(p.lon_lo, p.lon_hi);
    validate(c);
    return c;
}

// ============================================================================
// NWP series
// ============================================================================

namespace detail {

inline double standard_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Stationary AR(1) with unit marginal variance.
class Ar1 {
public:
    Ar1(double phi, double initial) : phi_(phi), innovation_(std::sqrt(1.0 - phi * phi)), x_(initial) {}
    double step(double noise) {
        x_ = phi_ * x_ + innovation_ * noise;
        return x_;
    }
    double value() const { return x_; }

private:
    double phi_;
    double innovation_;
    double x_;
};

} // namespace detail

/// Hourly NWP features for `config`. All model ids share one latent weather
/// realization per (config, seed); ids other than "truth" add a constant
/// per-model wind bias and white noise on top of it.
inline TimeSeriesDataset generate_nwp_series(const FarmConfig& config, std::size_t n_steps,
                                             std::string_view nwp_model_id, std::uint64_t seed,
                                             Instant start = default_series_start()) {
    if (n_steps == 0) throw EmptyRequestError("generate_nwp_series: n_steps must be >= 1");
    validate(config);
    const auto& profile = profile_for(config.terrain);
    const double scale = location_weibull_scale(config);

    std::mt19937_64 truth_rng(mix_seed(seed, stable_hash(config.farm_id)));
    std::normal_distribution<double> gauss(0.0, 1.0);

    detail::Ar1 wind(kWindAutoregression, gauss(truth_rng));
    detail::Ar1 pressure(0.99, gauss(truth_rng));
    detail::Ar1 temperature(0.97, gauss(truth_rng));
    detail::Ar1 humidity(0.97, gauss(truth_rng));
    double direction = 6.283185307179586 * detail::standard_normal_cdf(gauss(truth_rng));

    const bool is_truth = nwp_model_id == kTruthModelId;
    const std::uint64_t model_hash = stable_hash(nwp_model_id);
    std::mt19937_64 model_rng(mix_seed(mix_seed(seed, stable_hash(config.farm_id)), model_hash));
    std::normal_distribution<double> model_gauss(0.0, 1.0);
    const double bias = (model_hash >> 7) & 1 ? kNwpBiasMagnitude : -kNwpBiasMagnitude;

    TimeSeriesDataset ds;
    ds.farm_id = config.farm_id;
    ds.nwp_model_id = std::string{nwp_model_id};
    ds.timestamps.reserve(n_steps);
    ds.features.reserve(n_steps);
    ds.lead_time.reserve(n_steps);

    const double shear = std::pow(0.1, profile.shear_exponent);
    const double lat_offset = -0.3 * (std::abs(config.latitude) - 50.0);
    for (std::size_t i = 0; i < n_steps; ++i) {
        Instant t = start + Hours{static_cast<long>(i)};
        double z = i == 0 ? wind.value() : wind.step(gauss(truth_rng));
        double u = std::clamp(detail::standard_normal_cdf(z), 1e-12, 1.0 - 1e-12);
        double ws100 = scale * std::pow(-std::log1p(-u), 1.0 / kWeibullShape);
        direction += 0.15 * gauss(truth_rng);
        double p = profile.pressure_mean + 8.0 * (i == 0 ? pressure.value() : pressure.step(gauss(truth_rng)));
        int doy = day_of_year(t);
        int hour = hour_of_day(t);
        double temp = 283.15 + lat_offset + 10.0 * std::sin(6.283185307179586 * (doy - 100) / 365.0) +
                      4.0 * std::sin(6.283185307179586 * (hour - 9) / 24.0) +
                      2.0 * (i == 0 ? temperature.value() : temperature.step(gauss(truth_rng)));
        double h_latent = 0.5 + (i == 0 ? humidity.value() : humidity.step(gauss(truth_rng)));

        NwpFeatureVector f;
        f.ws100 = ws100;
        f.ws10 = ws100 * shear;
        double dir = direction;
        f.pressure = p;
        f.temperature = temp;
        f.humidity = 1.0 / (1.0 + std::exp(-h_latent));
        if (!is_truth) {
            f.ws100 = std::max(0.0, ws100 + bias + kNwpWindNoise * model_gauss(model_rng));
            f.ws10 = std::max(0.0, f.ws10 + shear * bias + 0.3 * model_gauss(model_rng));
            dir += 0.1 * model_gauss(model_rng);
            f.pressure += 1.0 * model_gauss(model_rng);
            f.temperature += 0.5 * model_gauss(model_rng);
            f.humidity = std::clamp(f.humidity + 0.03 * model_gauss(model_rng), 0.0, 1.0);
        }
        f.wdir_sin = std::sin(dir);
        f.wdir_cos = std::cos(dir);

        ds.timestamps.push_back(t);
        ds.features.push_back(f);
        // day-ahead run issued 12:00 UTC the previous day
        ds.lead_time.push_back(12.0 + hour);
    }
    return ds;
}

// ============================================================================
// Power observations
// ============================================================================

/// True when an event forces the farm's output to zero at t.
inline bool forced_zero(const std::vector<LifecycleEvent>& events, Instant t) {
    for (const auto& e : events) {
        if (!e.active_at(t)) continue;
        if (e.kind == EventKind::maintenance) return true;
        if (e.kind == EventKind::night_shutoff &&
            in_clock_interval(hour_of_day(t), e.clock_start, e.clock_end))
            return true;
    }
    return false;
}

/// Power observations from the true weather: physical curve times bounded
/// lognormal noise, clipped to [0,1], zero inside shut-off and maintenance
/// windows. Noise sigma is 0.05 * (1 + turbulence_scale); turbulence_scale == 0
/// denotes an idealized noise-free farm.
inline TimeSeriesDataset generate_power_series(const FarmConfig& config,
                                               const TimeSeriesDataset& nwp_truth,
                                               const std::vector<LifecycleEvent>& events,
                                               std::uint64_t seed) {
    if (nwp_truth.has_power())
        throw ValidationError("generate_power_series: input dataset already carries power");
    validate(config);
    validate(nwp_truth);
    validate_events(events);

    const double sigma = config.turbulence_scale > 0.0 ? 0.05 * (1.0 + config.turbulence_scale) : 0.0;
    std::mt19937_64 rng(mix_seed(mix_seed(seed, stable_hash(config.farm_id)), stable_hash("power")));
    std::normal_distribution<double> gauss(0.0, 1.0);

    TimeSeriesDataset out = nwp_truth;
    out.power.resize(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto& f = out.features[i];
        double rho = baseline::air_density(f.pressure, f.temperature);
        double clean = baseline::physical_power(f.ws100, rho, config);
        double noise = std::clamp(gauss(rng), -3.0, 3.0);
        double value = sigma > 0.0 ? clean * std::exp(sigma * noise - 0.5 * sigma * sigma) : clean;
        if (forced_zero(events, out.timestamps[i])) value = 0.0;
        out.power[i] = std::clamp(value, 0.0, 1.0);
    }
    return out;
}

/// Features from `nwp` with power labels taken from `observed` (same timestamps).
inline TimeSeriesDataset attach_power(TimeSeriesDataset nwp, const TimeSeriesDataset& observed) {
    if (nwp.timestamps != observed.timestamps)
        throw ValidationError("attach_power: timestamps differ");
    nwp.power = observed.power;
    return nwp;
}

} // namespace windtl::synth
