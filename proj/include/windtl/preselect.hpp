// Source-farm pre-selection: terrain rules, NWP marginal distances and
// feature-influence ranking.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "windtl/nnet.hpp"
#include "windtl/synthdata.hpp"
#include "windtl/types.hpp"

namespace windtl::preselect {

/// 1-D Wasserstein-1 between two empirical samples: mean absolute difference
/// of their quantile functions on the grid (i + 1/2) / n, n = max(|a|, |b|).
/// Exact optimal transport cost when |a| == |b|.
inline double wasserstein1(std::span<const double> sample_a, std::span<const double> sample_b) {
    if (sample_a.empty() || sample_b.empty()) throw ValidationError("wasserstein1: empty sample");
    std::vector<double> a(sample_a.begin(), sample_a.end());
    std::vector<double> b(sample_b.begin(), sample_b.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const std::size_t n = std::max(a.size(), b.size());
    auto quantile = [n](const std::vector<double>& s, std::size_t i) {
        auto idx = static_cast<std::size_t>((static_cast<double>(i) + 0.5) * static_cast<double>(s.size()) /
                                            static_cast<double>(n));
        return s[std::min(idx, s.size() - 1)];
    };
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += std::abs(quantile(a, i) - quantile(b, i));
    return total / static_cast<double>(n);
}

struct TerrainSelection {
    std::vector<FarmConfig> farms;
    bool terrain_match = false;
};

/// Farms whose terrain equals the target's; the full pool (flagged) when none
/// match.
inline TerrainSelection terrain_filter(std::span<const FarmConfig> pool, Terrain target_terrain) {
    TerrainSelection out;
    for (const auto& c : pool)
        if (c.terrain == target_terrain) out.farms.push_back(c);
    out.terrain_match = !out.farms.empty();
    if (out.farms.empty()) out.farms.assign(pool.begin(), pool.end());
    return out;
}

struct RankingEntry {
    std::string source_farm_id;
    double distance = 0.0;
    bool terrain_match = false;
};

struct SimilarityRanking {
    std::string target_farm_id;
    std::vector<RankingEntry> entries; // ascending distance
};

/// A candidate source farm and its historical NWP (labels optional).
struct SourceFarm {
    FarmConfig config;
    TimeSeriesDataset history;
};

inline std::vector<double> ws100_values(const TimeSeriesDataset& ds) {
    std::vector<double> v;
    v.reserve(ds.size());
    for (const auto& f : ds.features) v.push_back(f.ws100);
    return v;
}

/// Terrain pre-filter, then ascending ws100 Wasserstein distance to the
/// target's NWP; ties broken by farm id. Returns the top k.
inline SimilarityRanking rank_sources(std::span<const SourceFarm> pool, Terrain target_terrain,
                                      const TimeSeriesDataset& target_nwp, std::size_t k) {
    if (pool.empty()) throw ValidationError("rank_sources: empty pool");
    if (k < 1) throw ValidationError("rank_sources: k must be >= 1");
    if (target_nwp.empty()) throw ValidationError("rank_sources: empty target dataset");

    std::vector<FarmConfig> configs;
    for (const auto& s : pool) {
        if (s.history.empty()) throw ValidationError("rank_sources: empty history for '" + s.config.farm_id + "'");
        configs.push_back(s.config);
    }
    auto selection = terrain_filter(configs, target_terrain);
    const auto target_ws = ws100_values(target_nwp);

    SimilarityRanking ranking;
    ranking.target_farm_id = target_nwp.farm_id;
    for (const auto& s : pool) {
        bool selected = std::any_of(selection.farms.begin(), selection.farms.end(),
                                    [&](const FarmConfig& c) { return c.farm_id == s.config.farm_id; });
        if (!selected) continue;
        ranking.entries.push_back(
            {s.config.farm_id, wasserstein1(ws100_values(s.history), target_ws), selection.terrain_match});
    }
    std::sort(ranking.entries.begin(), ranking.entries.end(), [](const RankingEntry& x, const RankingEntry& y) {
        if (x.distance != y.distance) return x.distance < y.distance;
        return x.source_farm_id < y.source_farm_id;
    });
    if (ranking.entries.size() > k) ranking.entries.resize(k);
    return ranking;
}

inline nlohmann::json to_json(const SimilarityRanking& r) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : r.entries)
        entries.push_back({{"source_farm_id", e.source_farm_id}, {"distance", e.distance}, {"terrain_match", e.terrain_match}});
    return {{"target_farm_id", r.target_farm_id}, {"entries", entries}};
}

struct FeatureImportance {
    std::string feature;
    double importance = 0.0;
};

inline constexpr int kImportanceShuffles = 5;

/// Permutation importance: mean RMSE increase over five seeded shuffles of a
/// single input column, clamped at zero, sorted descending.
inline std::vector<FeatureImportance> rank_feature_influence(const nnet::DenseNetwork& model,
                                                             const TimeSeriesDataset& data, std::uint64_t seed) {
    nnet::Samples s = nnet::labeled_samples(data);
    if (s.size() == 0) throw ValidationError("rank_feature_influence: no labeled records");
    if (model.input_dim() != kModelInputCount)
        throw ValidationError("rank_feature_influence: model input dim differs from feature count");
    auto rmse_of = [&](const nnet::Matrix& x) {
        return std::sqrt((nnet::forward_batch(model, x) - s.targets).array().square().mean());
    };
    const double base = rmse_of(s.inputs);

    std::vector<FeatureImportance> out;
    for (std::size_t j = 0; j < kModelInputCount; ++j) {
        double increase = 0.0;
        for (int r = 0; r < kImportanceShuffles; ++r) {
            std::mt19937_64 rng(synth::mix_seed(seed, j * 131 + static_cast<std::size_t>(r)));
            std::vector<Eigen::Index> perm(static_cast<std::size_t>(s.size()));
            std::iota(perm.begin(), perm.end(), Eigen::Index{0});
            std::shuffle(perm.begin(), perm.end(), rng);
            nnet::Matrix shuffled = s.inputs;
            shuffled.col(static_cast<Eigen::Index>(j)) = s.inputs.col(static_cast<Eigen::Index>(j))(perm);
            increase += rmse_of(shuffled) - base;
        }
        out.push_back({std::string{model_input_names()[j]}, std::max(0.0, increase / kImportanceShuffles)});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const FeatureImportance& a, const FeatureImportance& b) { return a.importance > b.importance; });
    return out;
}

} // namespace windtl::preselect
