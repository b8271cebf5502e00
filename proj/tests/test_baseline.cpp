#include <gtest/gtest.h>

#include "windtl/baseline.hpp"

using namespace windtl;

namespace {

FarmConfig reference_farm() {
    FarmConfig c;
    c.farm_id = "ref";
    c.rotor_area = 1000.0;
    c.rated_power = 2000.0;
    c.v_cut_in = 3.0;
    c.v_rated = 12.0;
    c.v_cut_out = 25.0;
    return c;
}

} // namespace

TEST(PhysicalPower, BelowCutInIsZero) {
    EXPECT_EQ(baseline::physical_power(0.0, baseline::kReferenceDensity, reference_farm()), 0.0);
}

TEST(PhysicalPower, RatedPointIsOne) {
    auto c = reference_farm();
    EXPECT_EQ(baseline::physical_power(c.v_rated, baseline::kReferenceDensity, c), 1.0);
}

TEST(PhysicalPower, CubicRegion) {
    // (6/12)^3
    EXPECT_DOUBLE_EQ(baseline::physical_power(6.0, baseline::kReferenceDensity, reference_farm()), 0.125);
}

TEST(PhysicalPower, CutOutAndCap) {
    auto c = reference_farm();
    EXPECT_EQ(baseline::physical_power(25.0, 1.225, c), 0.0);
    EXPECT_EQ(baseline::physical_power(20.0, 1.3, c), 1.0);
    EXPECT_GT(baseline::physical_power(24.999, 1.225, c), 0.0);
}

TEST(PhysicalPower, RejectsNonPositiveDensity) {
    EXPECT_THROW(baseline::physical_power(6.0, 0.0, reference_farm()), DomainError);
    EXPECT_THROW(baseline::physical_power(6.0, -1.0, reference_farm()), DomainError);
}

TEST(PhysicalPower, MonotoneBetweenCutInAndRated) {
    auto c = reference_farm();
    double prev = 0.0;
    for (double v = c.v_cut_in; v <= c.v_rated; v += 0.01) {
        double p = baseline::physical_power(v, 1.225, c);
        EXPECT_GE(p, prev);
        EXPECT_GE(p, 0.0);
        EXPECT_LE(p, 1.0);
        prev = p;
    }
}

TEST(ForecastPhysical, EmptyDatasetGivesEmptySeries) {
    baseline::PhysicalModel m{reference_farm()};
    EXPECT_TRUE(baseline::forecast_physical(m, TimeSeriesDataset{}).empty());
}

TEST(ForecastPhysical, Elementwise) {
    baseline::PhysicalModel m{reference_farm()};
    TimeSeriesDataset ds;
    NwpFeatureVector f;
    f.ws100 = 6.0;
    // density exactly rho0: p = rho0 * R * T / 100
    f.temperature = 288.15;
    f.pressure = baseline::kReferenceDensity * baseline::kDryAirGasConstant * f.temperature / 100.0;
    ds.timestamps.push_back(make_instant(2021, 1, 1));
    ds.features.push_back(f);
    ds.lead_time.push_back(12);
    auto out = baseline::forecast_physical(m, ds);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_NEAR(out[0], 0.125, 1e-12);

    for (auto& g : ds.features) g.ws100 = 30.0;
    EXPECT_EQ(baseline::forecast_physical(m, ds)[0], 0.0);
}

TEST(AirDensity, IdealGas) {
    EXPECT_NEAR(baseline::air_density(1013.25, 288.15), 1.225, 1e-3);
}
