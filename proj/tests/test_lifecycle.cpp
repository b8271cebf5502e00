#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "windtl/lifecycle.hpp"

using namespace windtl;
using lifecycle::Phase;

namespace {

constexpr long kMonth = 720;

scenario::ScenarioEvent night_shutoff(double start_day) {
    scenario::ScenarioEvent e;
    e.kind = EventKind::night_shutoff;
    e.start_day = start_day;
    e.clock_start = 22;
    e.clock_end = 6;
    return e;
}

/// Five months, three pool farms, short training: reaches the growing phase
/// with a night shut-off starting in month 3.
scenario::ScenarioConfig small_scenario() {
    scenario::ScenarioConfig sc;
    sc.seed = 7;
    sc.pool = {{Terrain::onshore, 3}};
    sc.months = 5;
    sc.hyper = {{"history_days", 90},     {"epochs", 20},       {"mtl_epochs", 5},        {"multicross_epochs", 5},
                {"self_train_epochs", 10}, {"adapt_epochs", 15}, {"self_train_rounds", 1}, {"replicas", 2}};
    sc.events = {night_shutoff(95)};
    return sc;
}

const lifecycle::LifecycleReport& small_report() {
    static const auto r = lifecycle::run_lifecycle(small_scenario());
    return r;
}

double plain_rmse(const std::vector<double>& p, const std::vector<std::optional<double>>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - *y[i]) * (p[i] - *y[i]);
    return std::sqrt(s / static_cast<double>(p.size()));
}

} // namespace

TEST(Lifecycle, PhaseThresholds) {
    EXPECT_EQ(lifecycle::phase_for(0), Phase::no_data);
    EXPECT_EQ(lifecycle::phase_for(167), Phase::no_data);
    EXPECT_EQ(lifecycle::phase_for(168), Phase::little_data);
    EXPECT_EQ(lifecycle::phase_for(2159), Phase::little_data);
    EXPECT_EQ(lifecycle::phase_for(2160), Phase::growing);
    EXPECT_EQ(lifecycle::to_string(Phase::growing), "growing");
}

TEST(Lifecycle, ZeroMonthsGivesEmptyReport) {
    auto sc = small_scenario();
    sc.months = 0;
    sc.events.clear();
    auto r = lifecycle::run_lifecycle(sc);
    EXPECT_TRUE(r.months.empty());
    EXPECT_TRUE(r.audit.empty());
    EXPECT_TRUE(r.events.empty());
    EXPECT_EQ(r.final_phase, Phase::no_data);
    EXPECT_FALSE(r.crossover_month.has_value());
    auto j = lifecycle::to_json(r);
    EXPECT_EQ(j["final_phase"], "no_data");
    EXPECT_TRUE(j["months"].empty());
}

TEST(Lifecycle, WorldLabelsStartAtCommissioning) {
    auto sc = small_scenario();
    auto w = lifecycle::build_world(sc);
    EXPECT_EQ(w.commissioning, w.series_start + Hours{90 * 24});
    EXPECT_EQ(w.hours, 90u * 24u + 5u * 720u);
    EXPECT_EQ(w.pool.size(), 3u);
    EXPECT_EQ(w.target_active.labeled_count(), 5u * 720u);
    for (std::size_t i = 0; i < w.hours; ++i)
        ASSERT_EQ(w.target_active.power[i].has_value(), !(w.target_active.timestamps[i] < w.commissioning)) << i;
    for (const auto& f : w.pool) {
        EXPECT_NE(f.config.farm_id, w.target.config.farm_id);
        EXPECT_EQ(f.by_model.size(), 2u);
    }
    ASSERT_EQ(w.target.events.size(), 1u);
    EXPECT_EQ(w.target.events[0].start, w.commissioning + Hours{95 * 24});
}

TEST(Lifecycle, ActiveFeaturesFollowModelChange) {
    auto sc = small_scenario();
    scenario::ScenarioEvent change;
    change.kind = EventKind::nwp_model_change;
    change.start_day = 40;
    change.new_nwp_model_id = "nwpC";
    sc.events = {change};
    auto w = lifecycle::build_world(sc);
    const Instant switch_at = w.commissioning + Hours{40 * 24};
    for (std::size_t i = 0; i < w.hours; ++i) {
        const bool after = !(w.target_active.timestamps[i] < switch_at);
        ASSERT_EQ(w.active_model[i], after ? "nwpC" : "nwpA");
        const auto& source = w.target.by_model.at(after ? "nwpC" : "nwpA");
        ASSERT_EQ(w.target_active.features[i], source.features[i]);
    }
    EXPECT_EQ(w.pool[0].by_model.count("nwpC"), 1u);
}

TEST(Lifecycle, PoolEventsReachOnlyTheirFarm) {
    auto sc = small_scenario();
    auto e = night_shutoff(-60);
    e.farm = "pool:1";
    e.end_day = -30;
    sc.events = {e};
    auto w = lifecycle::build_world(sc);
    EXPECT_TRUE(w.pool[0].events.empty());
    ASSERT_EQ(w.pool[1].events.size(), 1u);
    EXPECT_TRUE(w.target.events.empty());
    const auto& ds = w.pool[1].by_model.at("nwpA");
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (w.pool[1].events[0].active_at(ds.timestamps[i]) && in_clock_interval(hour_of_day(ds.timestamps[i]), 22, 6))
            ASSERT_EQ(*ds.power[i], 0.0);
}

TEST(Lifecycle, MonthsPhasesAndMethods) {
    const auto& r = small_report();
    ASSERT_EQ(r.months.size(), 5u);
    Phase previous = Phase::no_data;
    for (std::size_t m = 0; m < r.months.size(); ++m) {
        const auto& mr = r.months[m];
        EXPECT_EQ(mr.month, m);
        EXPECT_EQ(mr.state.labeled_hours, m * 720);
        EXPECT_EQ(mr.state.phase, lifecycle::phase_for(m * 720));
        EXPECT_GE(static_cast<int>(mr.state.phase), static_cast<int>(previous));
        previous = mr.state.phase;
        const std::size_t expected = m == 0 ? 3 : scenario::known_methods().size();
        EXPECT_EQ(mr.metrics.size(), expected) << m;
        EXPECT_EQ(mr.metrics.count("target_only"), m == 0 ? 0u : 1u);
        for (const auto& [name, mm] : mr.metrics) {
            EXPECT_TRUE(std::isfinite(mm.rmse)) << name;
            EXPECT_GE(mm.rmse, 0.0);
            EXPECT_LE(mm.mae, mm.rmse + 1e-12);
        }
    }
    EXPECT_EQ(r.final_phase, Phase::growing);
}

TEST(Lifecycle, PhysicalRmseAndSkillMatchDirectComputation) {
    const auto& r = small_report();
    auto w = lifecycle::build_world(small_scenario());
    for (const auto& mr : r.months) {
        const Instant b = w.commissioning + Hours{static_cast<long>(mr.month) * kMonth};
        auto data = slice(w.target_active, b, b + Hours{kMonth});
        ASSERT_EQ(data.size(), 720u);
        const double phys = plain_rmse(baseline::forecast_physical(baseline::PhysicalModel{w.target.config}, data), data.power);
        EXPECT_NEAR(mr.metrics.at("physical").rmse, phys, 1e-12);
        EXPECT_EQ(mr.metrics.at("physical").skill, 0.0);
        for (const auto& [name, mm] : mr.metrics) EXPECT_NEAR(mm.skill, 1.0 - mm.rmse / phys, 1e-12) << name;
    }
}

TEST(Lifecycle, AuditHasNoLeakage) {
    const auto& r = small_report();
    auto w = lifecycle::build_world(small_scenario());
    ASSERT_FALSE(r.audit.empty());
    EXPECT_EQ(r.audit_violations(), 0u);
    std::set<std::string> methods;
    for (const auto& a : r.audit) {
        methods.insert(a.method);
        EXPECT_EQ(a.boundary, w.commissioning + Hours{static_cast<long>(a.month) * kMonth});
        EXPECT_LT(a.max_timestamp, a.boundary) << a.method << " month " << a.month;
    }
    for (const char* m : {"wp1_naive", "wp1_universal", "csge", "self_train", "mtl", "multicross", "target_only", "adaptation"})
        EXPECT_TRUE(methods.count(m)) << m;
}

TEST(Lifecycle, AuditEntryFlagsLeak) {
    lifecycle::AuditEntry a{"x", 1, synth::default_series_start(), synth::default_series_start()};
    EXPECT_FALSE(a.ok());
    a.max_timestamp -= Hours{1};
    EXPECT_TRUE(a.ok());
}

TEST(Lifecycle, ShutoffDetectedAndAdaptationGuarded) {
    const auto& r = small_report();
    auto w = lifecycle::build_world(small_scenario());
    const Instant onset = w.commissioning + Hours{95 * 24};
    const novelty::NoveltyEvent* zero = nullptr;
    for (const auto& e : r.events)
        if (e.kind == novelty::NoveltyKind::repeated_zero_interval && !zero) zero = &e;
    ASSERT_NE(zero, nullptr);
    EXPECT_GE(zero->detected_at, onset);
    EXPECT_LE(zero->detected_at, onset + Hours{14 * 24});
    for (int h = 0; h < 24; ++h)
        if (in_clock_interval(h, zero->clock_start, zero->clock_end)) EXPECT_TRUE(in_clock_interval(h, 22, 6)) << h;

    ASSERT_FALSE(r.adaptations.empty());
    for (const auto& a : r.adaptations) {
        EXPECT_EQ(a.month, 4u);
        EXPECT_GT(a.retrieved, 0u);
        EXPECT_LE(a.guard_rmse_after, a.guard_rmse_before);
        if (a.adapted) EXPECT_LT(a.guard_rmse_after, a.guard_rmse_before);
        else EXPECT_EQ(a.guard_rmse_after, a.guard_rmse_before);
    }
}

TEST(Lifecycle, CrossoverIsFirstMonthOwnModelBeatsTransfer) {
    const auto& r = small_report();
    std::optional<std::size_t> expected;
    for (const auto& mr : r.months) {
        auto own = mr.metrics.find("target_only");
        if (own == mr.metrics.end()) continue;
        double best = INFINITY;
        for (const char* t : {"wp1_naive", "wp1_universal", "csge", "self_train", "mtl", "multicross"})
            if (mr.metrics.count(t)) best = std::min(best, mr.metrics.at(t).rmse);
        if (own->second.rmse < best) {
            expected = mr.month;
            break;
        }
    }
    EXPECT_EQ(r.crossover_month, expected);
}

TEST(Lifecycle, Deterministic) {
    auto again = lifecycle::run_lifecycle(small_scenario());
    EXPECT_EQ(lifecycle::to_json(again).dump(), lifecycle::to_json(small_report()).dump());
    std::ostringstream a, b;
    lifecycle::write_metrics_csv(a, again);
    lifecycle::write_metrics_csv(b, small_report());
    EXPECT_EQ(a.str(), b.str());
}

TEST(Lifecycle, SeedChangesResults) {
    auto sc = small_scenario();
    sc.seed = 8;
    sc.methods = {"physical"};
    auto r = lifecycle::run_lifecycle(sc);
    EXPECT_NE(r.months[1].metrics.at("physical").rmse, small_report().months[1].metrics.at("physical").rmse);
}

TEST(Lifecycle, MethodSubset) {
    auto sc = small_scenario();
    sc.methods = {"physical"};
    auto r = lifecycle::run_lifecycle(sc);
    ASSERT_EQ(r.months.size(), 5u);
    for (const auto& mr : r.months) {
        ASSERT_EQ(mr.metrics.size(), 1u);
        EXPECT_EQ(mr.metrics.begin()->first, "physical");
        EXPECT_EQ(mr.state.active_model_ids, std::vector<std::string>{"physical"});
    }
    EXPECT_TRUE(r.audit.empty());
    EXPECT_TRUE(r.events.empty());
}

TEST(Lifecycle, DeclaredModelChangeAddsAdapter) {
    auto sc = small_scenario();
    sc.months = 3;
    sc.methods = {"physical", "multicross"};
    scenario::ScenarioEvent change;
    change.kind = EventKind::nwp_model_change;
    change.start_day = 45;
    change.new_nwp_model_id = "nwpC";
    sc.events = {change};
    auto r = lifecycle::run_lifecycle(sc);
    auto w = lifecycle::build_world(sc);
    ASSERT_FALSE(r.events.empty());
    EXPECT_EQ(r.events[0].kind, novelty::NoveltyKind::nwp_change_declared);
    EXPECT_EQ(r.events[0].new_nwp_model_id, "nwpC");
    EXPECT_EQ(r.events[0].detected_at, w.commissioning + Hours{kMonth});
    EXPECT_EQ(r.audit_violations(), 0u);
    for (std::size_t m = 1; m < 3; ++m) {
        ASSERT_TRUE(r.months[m].metrics.count("multicross"));
        EXPECT_TRUE(std::isfinite(r.months[m].metrics.at("multicross").rmse));
    }
    std::size_t adapter_calls = 0;
    for (const auto& a : r.audit) adapter_calls += a.method == "multicross" && a.month == 1;
    EXPECT_EQ(adapter_calls, 2u); // new adapter, then the target head
}

TEST(Lifecycle, ReportJsonAndCsv) {
    const auto& r = small_report();
    auto j = lifecycle::to_json(r);
    EXPECT_EQ(j["format"], "windtl.lifecycle_report");
    EXPECT_EQ(j["months"].size(), 5u);
    EXPECT_EQ(j["audit_violations"], 0);
    EXPECT_EQ(j["final_phase"], "growing");
    EXPECT_EQ(scenario::to_json(scenario::from_json(j["config"])).dump(), j["config"].dump());
    EXPECT_EQ(j["months"][4]["phase"], "growing");
    EXPECT_DOUBLE_EQ(j["months"][2]["methods"]["csge"]["rmse"].get<double>(), r.months[2].metrics.at("csge").rmse);

    std::ostringstream out;
    lifecycle::write_metrics_csv(out, r);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, lifecycle::kMetricsCsvHeader);
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        auto cells = io::split_csv_line(line);
        ASSERT_EQ(cells.size(), 5u);
        const auto& mm = r.months.at(std::stoul(cells[0])).metrics.at(cells[1]);
        EXPECT_EQ(std::stod(cells[2]), mm.rmse);
        EXPECT_EQ(std::stod(cells[3]), mm.mae);
        EXPECT_EQ(std::stod(cells[4]), mm.skill);
        ++rows;
    }
    std::size_t expected = 0;
    for (const auto& mr : r.months) expected += mr.metrics.size();
    EXPECT_EQ(rows, expected);
}

TEST(Lifecycle, InvalidScenarioRejected) {
    auto sc = small_scenario();
    sc.pool.clear();
    EXPECT_THROW(lifecycle::run_lifecycle(sc), ValidationError);
    sc = small_scenario();
    auto a = night_shutoff(10);
    auto b = night_shutoff(20);
    b.clock_start = 1;
    sc.events = {a, b};
    EXPECT_THROW(lifecycle::run_lifecycle(sc), ValidationError);
}
