#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "windtl/synthdata.hpp"

using namespace windtl;

namespace {

double mean_ws100(const TimeSeriesDataset& ds) {
    double s = 0.0;
    for (const auto& f : ds.features) s += f.ws100;
    return s / static_cast<double>(ds.size());
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

std::vector<double> ws100(const TimeSeriesDataset& ds) {
    std::vector<double> v;
    for (const auto& f : ds.features) v.push_back(f.ws100);
    return v;
}

} // namespace

TEST(FarmConfig, DeterministicPerSeed) {
    EXPECT_EQ(synth::generate_farm_config(1, Terrain::offshore), synth::generate_farm_config(1, Terrain::offshore));
    EXPECT_NE(synth::generate_farm_config(1, Terrain::offshore), synth::generate_farm_config(2, Terrain::offshore));
}

TEST(FarmConfig, TerrainRangesRespected) {
    auto forest = synth::generate_farm_config(1, Terrain::forest);
    auto offshore = synth::generate_farm_config(1, Terrain::offshore);
    EXPECT_GT(forest.turbulence_scale, offshore.turbulence_scale);
    for (std::uint64_t seed = 0; seed < 200; ++seed)
        for (auto t : kAllTerrains) {
            auto c = synth::generate_farm_config(seed, t);
            const auto& p = synth::profile_for(t);
            EXPECT_GE(c.turbulence_scale, p.turbulence_lo);
            EXPECT_LE(c.turbulence_scale, p.turbulence_hi);
            EXPECT_NO_THROW(validate(c));
        }
    // ranges are disjoint, so the ordering holds for every seed pair
    EXPECT_LT(synth::profile_for(Terrain::offshore).turbulence_hi, synth::profile_for(Terrain::forest).turbulence_lo);
}

TEST(NwpSeries, ShapeAndInvariants) {
    auto c = synth::generate_farm_config(3, Terrain::onshore);
    auto ds = synth::generate_nwp_series(c, 24, "nwpA", 7);
    ASSERT_EQ(ds.size(), 24u);
    EXPECT_FALSE(ds.has_power());
    EXPECT_NO_THROW(validate(ds));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        EXPECT_TRUE(satisfies_invariants(ds.features[i]));
        if (i > 0) EXPECT_EQ(ds.timestamps[i] - ds.timestamps[i - 1], Hours{1});
    }
}

TEST(NwpSeries, Deterministic) {
    auto c = synth::generate_farm_config(3, Terrain::onshore);
    EXPECT_EQ(synth::generate_nwp_series(c, 500, "nwpA", 7), synth::generate_nwp_series(c, 500, "nwpA", 7));
    EXPECT_NE(synth::generate_nwp_series(c, 500, "nwpA", 7), synth::generate_nwp_series(c, 500, "nwpA", 8));
}

TEST(NwpSeries, ZeroStepsRejected) {
    auto c = synth::generate_farm_config(3, Terrain::onshore);
    EXPECT_THROW(synth::generate_nwp_series(c, 0, "nwpA", 7), EmptyRequestError);
}

TEST(NwpSeries, ModelsShareUnderlyingWeather) {
    auto c = synth::generate_farm_config(5, Terrain::farmland);
    auto a = synth::generate_nwp_series(c, 5000, "nwpA", 11);
    auto b = synth::generate_nwp_series(c, 5000, "nwpB", 11);
    EXPECT_GE(pearson(ws100(a), ws100(b)), 0.8);
    EXPECT_NE(ws100(a), ws100(b));
}

TEST(NwpSeries, TerrainSeparation) {
    for (std::uint64_t s1 : {1u, 4u, 9u})
        for (std::uint64_t s2 : {2u, 5u, 13u}) {
            auto off = synth::generate_nwp_series(synth::generate_farm_config(s1, Terrain::offshore), 5000, "nwpA", s1);
            auto forest = synth::generate_nwp_series(synth::generate_farm_config(s2, Terrain::forest), 5000, "nwpA", s2);
            EXPECT_GT(mean_ws100(off), mean_ws100(forest));
        }
}

TEST(PowerSeries, ZeroWindGivesZeroPower) {
    auto c = synth::generate_farm_config(1, Terrain::onshore);
    auto nwp = synth::generate_nwp_series(c, 48, synth::kTruthModelId, 1);
    for (auto& f : nwp.features) f.ws100 = 0.0;
    auto p = synth::generate_power_series(c, nwp, {}, 1);
    for (const auto& v : p.power) EXPECT_EQ(*v, 0.0);
}

TEST(PowerSeries, NightShutoffForcesZero) {
    auto c = synth::generate_farm_config(1, Terrain::offshore);
    auto nwp = synth::generate_nwp_series(c, 72, synth::kTruthModelId, 1);
    for (auto& f : nwp.features) f.ws100 = 10.0;
    LifecycleEvent shutoff;
    shutoff.kind = EventKind::night_shutoff;
    shutoff.start = nwp.timestamps.front();
    shutoff.clock_start = 22;
    shutoff.clock_end = 6;
    auto p = synth::generate_power_series(c, nwp, {shutoff}, 1);
    for (std::size_t i = 0; i < p.size(); ++i) {
        int h = hour_of_day(p.timestamps[i]);
        if (h == 23 || h < 6 || h == 22)
            EXPECT_EQ(*p.power[i], 0.0) << "hour " << h;
        else
            EXPECT_GT(*p.power[i], 0.0);
    }
}

TEST(PowerSeries, RatedPointNoiseFree) {
    auto c = synth::generate_farm_config(1, Terrain::offshore);
    c.turbulence_scale = 0.0;
    auto nwp = synth::generate_nwp_series(c, 10, synth::kTruthModelId, 1);
    for (auto& f : nwp.features) {
        f.ws100 = c.v_rated;
        f.temperature = 288.15;
        f.pressure = baseline::kReferenceDensity * baseline::kDryAirGasConstant * f.temperature / 100.0;
    }
    auto p = synth::generate_power_series(c, nwp, {}, 3);
    for (const auto& v : p.power) EXPECT_NEAR(*v, 1.0, 1e-12);
}

TEST(PowerSeries, MaintenanceAndBounds) {
    auto c = synth::generate_farm_config(2, Terrain::forest);
    auto nwp = synth::generate_nwp_series(c, 24 * 20, synth::kTruthModelId, 2);
    LifecycleEvent m;
    m.kind = EventKind::maintenance;
    m.start = nwp.timestamps[100];
    m.end = nwp.timestamps[148];
    auto p = synth::generate_power_series(c, nwp, {m}, 2);
    EXPECT_EQ(p, synth::generate_power_series(c, nwp, {m}, 2));
    for (std::size_t i = 0; i < p.size(); ++i) {
        ASSERT_TRUE(p.power[i].has_value());
        EXPECT_GE(*p.power[i], 0.0);
        EXPECT_LE(*p.power[i], 1.0);
        if (i >= 100 && i < 148) EXPECT_EQ(*p.power[i], 0.0);
    }
}

TEST(PowerSeries, ContradictoryEventsRejected) {
    auto c = synth::generate_farm_config(2, Terrain::forest);
    auto nwp = synth::generate_nwp_series(c, 48, synth::kTruthModelId, 2);
    LifecycleEvent a;
    a.kind = EventKind::night_shutoff;
    a.start = nwp.timestamps[0];
    a.clock_start = 22;
    a.clock_end = 6;
    LifecycleEvent b = a;
    b.clock_start = 20;
    EXPECT_THROW(synth::generate_power_series(c, nwp, {a, b}, 2), ValidationError);
    // identical overlapping events are consistent
    EXPECT_NO_THROW(synth::generate_power_series(c, nwp, {a, a}, 2));
    LifecycleEvent bad = a;
    bad.clock_end = 24;
    EXPECT_THROW(synth::generate_power_series(c, nwp, {bad}, 2), ValidationError);
}

TEST(PowerSeries, RejectsLabeledInput) {
    auto c = synth::generate_farm_config(2, Terrain::forest);
    auto nwp = synth::generate_nwp_series(c, 48, synth::kTruthModelId, 2);
    auto p = synth::generate_power_series(c, nwp, {}, 2);
    EXPECT_THROW(synth::generate_power_series(c, p, {}, 2), ValidationError);
}

TEST(Time, IsoRoundTrip) {
    auto t = make_instant(2021, 3, 14, 15);
    EXPECT_EQ(format_iso(t), "2021-03-14T15:00:00Z");
    EXPECT_EQ(parse_iso(format_iso(t)), t);
    EXPECT_THROW(parse_iso("not a date"), ValidationError);
}

#include <sstream>

#include "windtl/dataset_io.hpp"

TEST(Csv, RoundTripIsExact) {
    auto c = synth::generate_farm_config(4, Terrain::mountain);
    auto truth = synth::generate_nwp_series(c, 100, synth::kTruthModelId, 4);
    auto labeled = synth::generate_power_series(c, truth, {}, 4);
    labeled.power[5].reset();
    std::stringstream buf;
    io::write_csv(buf, labeled);
    EXPECT_EQ(io::read_csv(buf, labeled.farm_id, labeled.nwp_model_id), labeled);

    std::stringstream unlabeled;
    io::write_csv(unlabeled, truth);
    auto back = io::read_csv(unlabeled, truth.farm_id, truth.nwp_model_id);
    EXPECT_FALSE(back.has_power());
    EXPECT_EQ(back, truth);
}

TEST(Csv, HeaderAndConfidenceColumn) {
    auto c = synth::generate_farm_config(4, Terrain::mountain);
    auto truth = synth::generate_nwp_series(c, 3, synth::kTruthModelId, 4);
    std::stringstream buf;
    io::write_csv(buf, truth, {0.5, 1.0, 0.0});
    std::string header;
    std::getline(buf, header);
    EXPECT_EQ(header, std::string{io::kCsvHeader} + ",confidence");
    std::string row;
    std::getline(buf, row);
    EXPECT_EQ(row.rfind("2021-01-01T00:00:00Z,", 0), 0u);
    EXPECT_EQ(row.substr(row.size() - 5), ",,0.5");
    std::stringstream bad("nope\n");
    EXPECT_THROW(io::read_csv(bad, "x", "y"), ValidationError);
}
