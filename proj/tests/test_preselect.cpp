#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "windtl/preselect.hpp"

using namespace windtl;
using preselect::wasserstein1;

namespace {

// Optimal 1-D transport between equal-size samples by enumerating every
// assignment.
double brute_force_transport(std::vector<double> a, const std::vector<double>& b) {
    std::vector<std::size_t> perm(b.size());
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double cost = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) cost += std::abs(a[i] - b[perm[i]]);
        best = std::min(best, cost / static_cast<double>(a.size()));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

std::vector<double> random_sample(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> g(0.0, 3.0);
    std::vector<double> v(n);
    for (auto& x : v) x = g(rng);
    return v;
}

preselect::SourceFarm make_source(std::uint64_t seed, Terrain t, std::size_t n = 2000) {
    auto c = synth::generate_farm_config(seed, t);
    return {c, synth::generate_nwp_series(c, n, "nwpA", seed)};
}

} // namespace

TEST(Wasserstein, IdentityAndPointMasses) {
    std::vector<double> a{1.0, 4.0, 2.5, -3.0};
    EXPECT_EQ(wasserstein1(a, a), 0.0);
    EXPECT_DOUBLE_EQ(wasserstein1(std::vector<double>{5.0}, std::vector<double>{8.0}), 3.0);
    EXPECT_DOUBLE_EQ(brute_force_transport({5.0}, {8.0}), 3.0);
}

TEST(Wasserstein, MatchesBruteForceOnSmallSamples) {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<std::size_t> size(1, 7);
    for (int trial = 0; trial < 100; ++trial) {
        auto n = size(rng);
        auto a = random_sample(rng, n);
        auto b = random_sample(rng, n);
        EXPECT_NEAR(wasserstein1(a, b), brute_force_transport(a, b), 1e-9);
    }
}

TEST(Wasserstein, PseudometricProperties) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        auto a = random_sample(rng, 12);
        auto b = random_sample(rng, 12);
        auto c = random_sample(rng, 12);
        double ab = wasserstein1(a, b);
        EXPECT_GE(ab, 0.0);
        EXPECT_EQ(ab, wasserstein1(b, a));
        EXPECT_LE(ab, wasserstein1(a, c) + wasserstein1(c, b) + 1e-9);
    }
}

TEST(Wasserstein, LocationShift) {
    std::mt19937_64 rng(4);
    for (double shift : {0.0, 1.0, -2.5, 3.0}) {
        auto a = random_sample(rng, 50);
        auto b = a;
        for (auto& x : b) x += shift;
        EXPECT_NEAR(wasserstein1(a, b), std::abs(shift), 1e-12);
    }
}

TEST(Wasserstein, UnequalSizesAndErrors) {
    EXPECT_EQ(wasserstein1(std::vector<double>{1.0, 2.0}, std::vector<double>{2.0, 1.0, 1.0, 2.0}), 0.0);
    EXPECT_THROW(wasserstein1(std::vector<double>{}, std::vector<double>{1.0}), ValidationError);
}

TEST(TerrainFilter, SelectsMatchingTerrain) {
    std::vector<FarmConfig> pool;
    for (std::uint64_t s = 0; s < 3; ++s) pool.push_back(synth::generate_farm_config(s, Terrain::offshore));
    for (std::uint64_t s = 0; s < 2; ++s) pool.push_back(synth::generate_farm_config(s, Terrain::forest));
    auto sel = preselect::terrain_filter(pool, Terrain::offshore);
    EXPECT_TRUE(sel.terrain_match);
    ASSERT_EQ(sel.farms.size(), 3u);
    for (const auto& f : sel.farms) EXPECT_EQ(f.terrain, Terrain::offshore);

    auto fallback = preselect::terrain_filter(pool, Terrain::mountain);
    EXPECT_FALSE(fallback.terrain_match);
    EXPECT_EQ(fallback.farms.size(), pool.size());

    EXPECT_TRUE(preselect::terrain_filter({}, Terrain::mountain).farms.empty());
}

TEST(RankSources, IdenticalSourceFirst) {
    std::vector<preselect::SourceFarm> pool{make_source(1, Terrain::onshore), make_source(2, Terrain::onshore),
                                            make_source(3, Terrain::onshore)};
    auto target = pool[1].history;
    target.farm_id = "target";
    auto ranking = preselect::rank_sources(pool, Terrain::onshore, target, 2);
    ASSERT_EQ(ranking.entries.size(), 2u);
    EXPECT_EQ(ranking.entries[0].source_farm_id, pool[1].config.farm_id);
    EXPECT_EQ(ranking.entries[0].distance, 0.0);
    EXPECT_EQ(ranking.target_farm_id, "target");
}

TEST(RankSources, ShiftOrderingAndSaturation) {
    auto base = make_source(5, Terrain::farmland);
    auto plus1 = make_source(6, Terrain::farmland);
    auto plus3 = make_source(7, Terrain::farmland);
    plus1.history = base.history;
    plus3.history = base.history;
    for (auto& f : plus1.history.features) f.ws100 += 1.0;
    for (auto& f : plus3.history.features) f.ws100 += 3.0;
    std::vector<preselect::SourceFarm> pool{plus3, plus1};
    auto ranking = preselect::rank_sources(pool, Terrain::farmland, base.history, 10);
    ASSERT_EQ(ranking.entries.size(), 2u);
    EXPECT_EQ(ranking.entries[0].source_farm_id, plus1.config.farm_id);
    EXPECT_NEAR(ranking.entries[0].distance, 1.0, 1e-9);
    EXPECT_NEAR(ranking.entries[1].distance, 3.0, 1e-9);
}

TEST(RankSources, DeterministicTieBreakAndErrors) {
    auto a = make_source(11, Terrain::forest);
    auto b = make_source(12, Terrain::forest);
    b.history = a.history;
    std::vector<preselect::SourceFarm> pool{b, a};
    auto r1 = preselect::rank_sources(pool, Terrain::forest, a.history, 5);
    std::vector<preselect::SourceFarm> reversed{a, b};
    auto r2 = preselect::rank_sources(reversed, Terrain::forest, a.history, 5);
    ASSERT_EQ(r1.entries.size(), 2u);
    EXPECT_LT(r1.entries[0].source_farm_id, r1.entries[1].source_farm_id);
    EXPECT_EQ(to_json(r1), to_json(r2));
    EXPECT_THROW(preselect::rank_sources({}, Terrain::forest, a.history, 1), ValidationError);
    EXPECT_THROW(preselect::rank_sources(pool, Terrain::forest, a.history, 0), ValidationError);
}

TEST(RankSources, TerrainFallbackFlagged) {
    std::vector<preselect::SourceFarm> pool{make_source(1, Terrain::onshore), make_source(2, Terrain::forest)};
    auto target = make_source(3, Terrain::mountain).history;
    auto r = preselect::rank_sources(pool, Terrain::mountain, target, 5);
    EXPECT_EQ(r.entries.size(), 2u);
    for (const auto& e : r.entries) EXPECT_FALSE(e.terrain_match);
}

TEST(FeatureInfluence, DeadInputHasZeroImportance) {
    auto src = make_source(1, Terrain::onshore, 500);
    auto truth = synth::generate_nwp_series(src.config, 500, synth::kTruthModelId, 1);
    auto data = synth::attach_power(src.history, synth::generate_power_series(src.config, truth, {}, 1));
    auto net = nnet::init_network({kModelInputCount, 6, 1}, {nnet::Activation::tanh, nnet::Activation::sigmoid}, 3);
    net.layers[0].weights.col(4).setZero(); // pressure
    auto ranking = preselect::rank_feature_influence(net, data, 9);
    ASSERT_EQ(ranking.size(), kModelInputCount);
    for (const auto& f : ranking) {
        EXPECT_GE(f.importance, 0.0);
        if (f.feature == "pressure") EXPECT_NEAR(f.importance, 0.0, 1e-9);
    }
    for (std::size_t i = 1; i < ranking.size(); ++i) EXPECT_GE(ranking[i - 1].importance, ranking[i].importance);
}

TEST(FeatureInfluence, WindSpeedDominatesTrainedModel) {
    auto src = make_source(2, Terrain::onshore, 4000);
    auto truth = synth::generate_nwp_series(src.config, 4000, synth::kTruthModelId, 2);
    auto data = synth::attach_power(src.history, synth::generate_power_series(src.config, truth, {}, 2));
    auto net = nnet::init_network({kModelInputCount, 16, 1}, {nnet::Activation::tanh, nnet::Activation::sigmoid}, 3);
    nnet::TrainConfig cfg;
    cfg.epochs = 40;
    net = nnet::train(net, data, cfg).network;
    auto ranking = preselect::rank_feature_influence(net, data, 1);
    EXPECT_EQ(ranking.front().feature, "ws100");
    EXPECT_EQ(preselect::rank_feature_influence(net, data, 1).front().importance, ranking.front().importance);
}
