// Error metrics and order statistics used across evaluation code.
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "windtl/types.hpp"

namespace windtl::metrics {

/// RMSE over records with a label.
inline double rmse(std::span<const double> prediction, const std::vector<std::optional<double>>& labels) {
    if (prediction.size() != labels.size()) throw ValidationError("rmse: length mismatch");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!labels[i]) continue;
        double d = prediction[i] - *labels[i];
        sum += d * d;
        ++n;
    }
    if (n == 0) throw ValidationError("rmse: no labeled records");
    return std::sqrt(sum / static_cast<double>(n));
}

inline double mae(std::span<const double> prediction, const std::vector<std::optional<double>>& labels) {
    if (prediction.size() != labels.size()) throw ValidationError("mae: length mismatch");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!labels[i]) continue;
        sum += std::abs(prediction[i] - *labels[i]);
        ++n;
    }
    if (n == 0) throw ValidationError("mae: no labeled records");
    return sum / static_cast<double>(n);
}

inline double rmse(std::span<const double> prediction, std::span<const double> truth) {
    if (prediction.size() != truth.size() || truth.empty()) throw ValidationError("rmse: bad lengths");
    double sum = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) sum += (prediction[i] - truth[i]) * (prediction[i] - truth[i]);
    return std::sqrt(sum / static_cast<double>(truth.size()));
}

/// Linear-interpolation quantile (type 7), q in [0, 1].
inline double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw ValidationError("quantile: empty input");
    std::sort(values.begin(), values.end());
    double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    auto hi = std::min(lo + 1, values.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

inline double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

inline double iqr(const std::vector<double>& values) { return quantile(values, 0.75) - quantile(values, 0.25); }

} // namespace windtl::metrics
