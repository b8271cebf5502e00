// Physical power-curve model: the no-training fallback and skill reference.
#pragma once

#include <algorithm>
#include <vector>

#include "windtl/types.hpp"

namespace windtl::baseline {

inline constexpr double kReferenceDensity = 1.225; // kg/m^3
inline constexpr double kDryAirGasConstant = 287.05; // J/(kg K)

/// Ideal-gas density from pressure [hPa] and temperature [K].
inline double air_density(double pressure_hpa, double temperature_k) {
    if (!(temperature_k > 0.0) || !(pressure_hpa > 0.0))
        throw DomainError("air_density: pressure and temperature must be positive");
    return pressure_hpa * 100.0 / (kDryAirGasConstant * temperature_k);
}

/// Normalized cubic power curve with a hard cap at rated power.
inline double physical_power(double v, double rho, const FarmConfig& config,
                             double rho0 = kReferenceDensity) {
    if (!(rho > 0.0)) throw DomainError("physical_power: air density must be positive");
    if (!(v >= 0.0)) throw DomainError("physical_power: wind speed must be non-negative");
    if (v < config.v_cut_in || v >= config.v_cut_out) return 0.0;
    double ratio = v / config.v_rated;
    return std::min(1.0, (rho / rho0) * ratio * ratio * ratio);
}

struct PhysicalModel {
    FarmConfig config;
    double rho0 = kReferenceDensity;

    double operator()(const NwpFeatureVector& f) const {
        return physical_power(f.ws100, air_density(f.pressure, f.temperature), config, rho0);
    }
};

inline std::vector<double> forecast_physical(const PhysicalModel& model,
                                             const TimeSeriesDataset& dataset) {
    if (!(model.rho0 > 0.0)) throw DomainError("PhysicalModel: rho0 must be positive");
    std::vector<double> out;
    out.reserve(dataset.size());
    for (const auto& f : dataset.features) out.push_back(model(f));
    return out;
}

} // namespace windtl::baseline
