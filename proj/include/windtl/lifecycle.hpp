// Month-by-month lifecycle simulation of a new farm: WP1 before any labels,
// WP2 from the first week, WP3 novelty handling once the history grows.
#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "windtl/baseline.hpp"
#include "windtl/csge.hpp"
#include "windtl/dataset_io.hpp"
#include "windtl/metrics.hpp"
#include "windtl/multitask.hpp"
#include "windtl/novelty.hpp"
#include "windtl/preselect.hpp"
#include "windtl/scenario.hpp"
#include "windtl/synthdata.hpp"
#include "windtl/transfer.hpp"

namespace windtl::lifecycle {

using nnet::DenseNetwork;
using nnet::TrainConfig;
using scenario::ScenarioConfig;

inline constexpr std::size_t kMonthHours = 720;
inline constexpr std::size_t kLittleDataHours = 168;
inline constexpr std::size_t kGrowingHours = 2160;

enum class Phase { no_data, little_data, growing };

inline std::string_view to_string(Phase p) {
    switch (p) {
    case Phase::no_data: return "no_data";
    case Phase::little_data: return "little_data";
    case Phase::growing: return "growing";
    }
    return "?";
}

inline Phase phase_for(std::size_t labeled_hours) {
    if (labeled_hours >= kGrowingHours) return Phase::growing;
    if (labeled_hours >= kLittleDataHours) return Phase::little_data;
    return Phase::no_data;
}

struct PhaseState {
    Phase phase = Phase::no_data;
    std::size_t labeled_hours = 0;
    std::vector<std::string> active_model_ids;
};

struct MethodMetrics {
    double rmse = 0.0;
    double mae = 0.0;
    double skill = 0.0; // 1 - rmse / rmse_physical
};

struct MonthReport {
    std::size_t month = 0;
    Instant start;
    PhaseState state;
    std::map<std::string, MethodMetrics> metrics;
};

/// One training call: the latest timestamp it saw and the boundary it had to respect.
struct AuditEntry {
    std::string method;
    std::size_t month = 0;
    Instant boundary;
    Instant max_timestamp;
    bool ok() const { return max_timestamp < boundary; }
};

struct AdaptationRecord {
    std::size_t month = 0;
    std::string model;
    std::size_t episodes = 0;
    std::size_t retrieved = 0;
    bool adapted = false;
    double guard_rmse_before = 0.0;
    double guard_rmse_after = 0.0;
};

struct LifecycleReport {
    ScenarioConfig config;
    std::vector<MonthReport> months;
    std::vector<novelty::NoveltyEvent> events;
    std::vector<AuditEntry> audit;
    std::vector<AdaptationRecord> adaptations;
    std::optional<std::size_t> crossover_month;
    Phase final_phase = Phase::no_data;

    std::size_t audit_violations() const {
        return static_cast<std::size_t>(std::count_if(audit.begin(), audit.end(), [](const AuditEntry& a) { return !a.ok(); }));
    }
};

// ============================================================================
// Simulated world
// ============================================================================

struct FarmSeries {
    FarmConfig config;
    std::vector<LifecycleEvent> events;
    std::map<std::string, TimeSeriesDataset> by_model; // labeled over the whole span
};

struct World {
    Instant series_start;
    Instant commissioning;
    std::size_t hours = 0;
    std::vector<FarmSeries> pool;
    FarmSeries target;
    std::string primary_model;
    std::vector<std::string> active_model; // per hour: the NWP model feeding the target
    TimeSeriesDataset target_active;       // active-model features; power from commissioning on
};

inline Instant at_day(Instant commissioning, double day) {
    return commissioning + std::chrono::duration_cast<std::chrono::seconds>(std::chrono::duration<double>(day * 86400.0));
}

inline World build_world(const ScenarioConfig& sc) {
    scenario::validate(sc);
    World w;
    const auto history_hours = static_cast<std::size_t>(std::llround(sc.param("history_days") * 24.0));
    w.series_start = synth::default_series_start();
    w.commissioning = w.series_start + Hours{static_cast<long>(history_hours)};
    w.hours = history_hours + sc.months * kMonthHours;
    w.primary_model = sc.nwp_models.front();

    std::vector<std::string> models = sc.nwp_models;
    for (const auto& e : sc.events)
        if (e.kind == EventKind::nwp_model_change &&
            std::find(models.begin(), models.end(), e.new_nwp_model_id) == models.end())
            models.push_back(e.new_nwp_model_id);

    auto to_event = [&](const scenario::ScenarioEvent& e) {
        LifecycleEvent x;
        x.kind = e.kind;
        x.start = at_day(w.commissioning, e.start_day);
        if (e.end_day) x.end = at_day(w.commissioning, *e.end_day);
        x.clock_start = e.clock_start;
        x.clock_end = e.clock_end;
        x.new_nwp_model_id = e.new_nwp_model_id;
        return x;
    };
    auto make_farm = [&](std::uint64_t seed, Terrain terrain, const std::string& tag) {
        FarmSeries f;
        f.config = synth::generate_farm_config(seed, terrain);
        for (std::size_t i = 0; i < sc.events.size(); ++i) {
            if (sc.events[i].farm != tag) continue;
            f.events.push_back(to_event(sc.events[i]));
        }
        try {
            validate_events(f.events);
        } catch (const ValidationError& err) {
            throw ValidationError("scenario.events (" + tag + "): " + err.what());
        }
        if (w.hours == 0) return f;
        auto truth = synth::generate_nwp_series(f.config, w.hours, synth::kTruthModelId, seed, w.series_start);
        auto observed = synth::generate_power_series(f.config, truth, f.events, seed);
        for (const auto& id : models)
            f.by_model[id] = synth::attach_power(synth::generate_nwp_series(f.config, w.hours, id, seed, w.series_start), observed);
        return f;
    };

    std::size_t index = 0;
    for (const auto& spec : sc.pool)
        for (std::size_t c = 0; c < spec.count; ++c, ++index)
            w.pool.push_back(make_farm(synth::mix_seed(sc.seed, index + 1), spec.terrain, "pool:" + std::to_string(index)));
    w.target = make_farm(synth::mix_seed(sc.seed, 0), sc.target_terrain, "target");
    for (const auto& f : w.pool)
        if (f.config.farm_id == w.target.config.farm_id) throw ValidationError("scenario.seed: farm id collision");
    if (w.hours == 0) return w;

    w.active_model.assign(w.hours, w.primary_model);
    std::vector<const LifecycleEvent*> changes;
    for (const auto& e : w.target.events)
        if (e.kind == EventKind::nwp_model_change) changes.push_back(&e);
    std::sort(changes.begin(), changes.end(), [](const auto* a, const auto* b) { return a->start < b->start; });
    const auto& primary = w.target.by_model.at(w.primary_model);
    w.target_active = primary;
    w.target_active.nwp_model_id = "active";
    for (std::size_t i = 0; i < w.hours; ++i) {
        const Instant t = primary.timestamps[i];
        for (const auto* e : changes)
            if (e->active_at(t)) w.active_model[i] = e->new_nwp_model_id;
        w.target_active.features[i] = w.target.by_model.at(w.active_model[i]).features[i];
        if (t < w.commissioning) w.target_active.power[i].reset();
    }
    return w;
}

// ============================================================================
// Runner
// ============================================================================

namespace detail {

inline TrainConfig config_for(const ScenarioConfig& sc, const std::string& key, std::uint64_t seed) {
    TrainConfig c;
    c.epochs = static_cast<std::size_t>(sc.param(key));
    c.seed = seed;
    return c;
}

inline std::uint64_t seed_for(const ScenarioConfig& sc, std::string_view what, std::size_t month) {
    return synth::mix_seed(synth::mix_seed(sc.seed, synth::stable_hash(what)), month);
}

/// Records of `ds` at the given timestamps.
inline TimeSeriesDataset pick(const TimeSeriesDataset& ds, const std::vector<Instant>& times) {
    TimeSeriesDataset out = ds;
    out.timestamps.clear();
    out.features.clear();
    out.lead_time.clear();
    out.power.clear();
    std::size_t j = 0;
    for (std::size_t i = 0; i < ds.size() && j < times.size(); ++i) {
        while (j < times.size() && times[j] < ds.timestamps[i]) ++j;
        if (j < times.size() && times[j] == ds.timestamps[i]) {
            out.timestamps.push_back(ds.timestamps[i]);
            out.features.push_back(ds.features[i]);
            out.lead_time.push_back(ds.lead_time[i]);
            out.power.push_back(ds.power[i]);
        }
    }
    return out;
}

inline Instant last_time(const TimeSeriesDataset& ds) { return ds.empty() ? Instant::min() : ds.timestamps.back(); }

struct Episode {
    novelty::NoveltyEvent event;
    Instant start;
};

} // namespace detail

/// Simulates the target farm month by month. Before month m is evaluated,
/// every model is (re)trained only on records older than the month's start;
/// the audit log holds the latest timestamp each training call saw. The
/// target-only model exists when target_only, csge or mtl is requested; its
/// issued forecasts form the stream watched for novelty.
inline LifecycleReport run_lifecycle(const ScenarioConfig& sc) {
    using detail::last_time;
    LifecycleReport report;
    report.config = sc;
    World w = build_world(sc);
    if (sc.months == 0) return report;

    const std::string target_id = w.target.config.farm_id;
    const baseline::PhysicalModel physical{w.target.config};
    const std::vector<std::string> transfer_methods{"wp1_naive", "wp1_universal", "csge",
                                                    "self_train", "mtl",          "multicross"};
    auto wants = [&](std::string_view m) { return sc.uses(m); };
    const bool need_wp1 = wants("wp1_naive") || wants("self_train");
    const bool need_mtl = wants("mtl") && w.pool.size() >= 2;
    const bool need_universal = wants("wp1_universal") && w.pool.size() >= 2;
    const bool need_own = wants("target_only") || wants("csge") || need_mtl;

    auto audit = [&](const std::string& method, std::size_t month, Instant boundary,
                     std::initializer_list<Instant> seen) {
        Instant latest = Instant::min();
        for (auto t : seen) latest = std::max(latest, t);
        report.audit.push_back({method, month, boundary, latest});
    };

    // ---- state carried across months
    DenseNetwork wp1;
    transfer::UniversalModel universal;
    std::vector<DenseNetwork> source_models;
    mtl::MtlNetwork mtl_base;
    mtl::MultiCrossNetwork mc_base;
    std::vector<std::string> declared_models{w.primary_model};
    std::vector<novelty::StreamRecord> stream;
    std::vector<detail::Episode> episodes;
    Instant processed_until = w.commissioning;
    Phase phase = Phase::no_data;

    for (std::size_t m = 0; m < sc.months; ++m) {
        const Instant boundary = w.commissioning + Hours{static_cast<long>(m * kMonthHours)};
        const Instant month_end = boundary + Hours{static_cast<long>(kMonthHours)};
        const std::size_t labeled_hours = m * kMonthHours;
        const Phase now = phase_for(labeled_hours);
        if (now < phase) throw std::logic_error("run_lifecycle: phase moved backwards");
        phase = now;

        auto pool_primary = [&](std::size_t f) { return slice(w.pool[f].by_model.at(w.primary_model), w.series_start, boundary); };
        const TimeSeriesDataset labeled = slice(w.target_active, w.commissioning, boundary);
        const Instant window_start = boundary - Hours{static_cast<long>(sc.param("window_hours"))};
        const TimeSeriesDataset recent = slice(labeled, window_start, boundary);
        const TimeSeriesDataset target_history = without_power(slice(w.target.by_model.at(w.primary_model), w.series_start, w.commissioning));

        // ---- WP1: trained once, before commissioning
        if (m == 0) {
            std::vector<preselect::SourceFarm> sources;
            std::vector<TimeSeriesDataset> histories;
            for (std::size_t f = 0; f < w.pool.size(); ++f) {
                histories.push_back(pool_primary(f));
                sources.push_back({w.pool[f].config, histories.back()});
            }
            if (need_wp1) {
                auto ranking = preselect::rank_sources(sources, sc.target_terrain, target_history, sources.size());
                const auto& best = ranking.entries.front().source_farm_id;
                std::size_t best_index = 0;
                while (w.pool[best_index].config.farm_id != best) ++best_index;
                auto cfg = detail::config_for(sc, "epochs", detail::seed_for(sc, "wp1_naive", m));
                std::map<std::string, transfer::ReplicaEnsemble> ensembles;
                ensembles.emplace(best, transfer::train_replicas(histories[best_index], {},
                                                                 static_cast<std::size_t>(sc.param("replicas")), cfg));
                wp1 = transfer::train_wp1_naive(ranking, ensembles, target_history, {}, cfg);
                audit("wp1_naive", m, boundary, {last_time(histories[best_index]), last_time(target_history)});
            }
            if (need_universal) {
                auto cfg = detail::config_for(sc, "epochs", detail::seed_for(sc, "wp1_universal", m));
                universal = transfer::train_universal(histories, static_cast<std::size_t>(sc.param("universal_code_dim")), cfg);
                Instant latest = Instant::min();
                for (const auto& h : histories) latest = std::max(latest, last_time(h));
                audit("wp1_universal", m, boundary, {latest});
            }
            if (wants("csge")) {
                for (std::size_t f = 0; f < w.pool.size(); ++f) {
                    auto cfg = detail::config_for(sc, "epochs", detail::seed_for(sc, "source:" + w.pool[f].config.farm_id, m));
                    source_models.push_back(
                        nnet::train(transfer::make_regressor(kModelInputCount, {}, cfg.seed), histories[f], cfg).network);
                    audit("csge", m, boundary, {last_time(histories[f])});
                }
            }
            if (need_mtl) {
                auto cfg = detail::config_for(sc, "mtl_epochs", detail::seed_for(sc, "mtl", m));
                mtl_base = mtl::train_mtl(histories, {}, cfg);
                Instant latest = Instant::min();
                for (const auto& h : histories) latest = std::max(latest, last_time(h));
                audit("mtl", m, boundary, {latest});
            }
            if (wants("multicross")) {
                mtl::MultiCrossData data;
                Instant latest = Instant::min();
                for (const auto& id : sc.nwp_models)
                    for (const auto& f : w.pool) {
                        auto ds = slice(f.by_model.at(id), w.series_start, boundary);
                        latest = std::max(latest, last_time(ds));
                        data[{id, f.config.farm_id}] = std::move(ds);
                    }
                auto cfg = detail::config_for(sc, "multicross_epochs", detail::seed_for(sc, "multicross", m));
                mc_base = mtl::train_multicross(data, {}, sc.param("multicross_lambda"), cfg).network;
                declared_models = sc.nwp_models;
                audit("multicross", m, boundary, {latest});
            }
        }

        // ---- declared NWP model changes reaching into this month
        for (const auto& e : w.target.events) {
            if (e.kind != EventKind::nwp_model_change || !(e.start < month_end)) continue;
            if (std::find(declared_models.begin(), declared_models.end(), e.new_nwp_model_id) != declared_models.end())
                continue;
            novelty::NoveltyEvent declared;
            declared.kind = novelty::NoveltyKind::nwp_change_declared;
            declared.detected_at = boundary;
            declared.new_nwp_model_id = e.new_nwp_model_id;
            report.events.push_back(declared);
            declared_models.push_back(e.new_nwp_model_id);
            if (wants("multicross")) {
                std::map<std::string, TimeSeriesDataset> fresh;
                mtl::MultiCrossData reference;
                Instant latest = Instant::min();
                for (const auto& f : w.pool) {
                    auto ds = slice(f.by_model.at(e.new_nwp_model_id), w.series_start, boundary);
                    latest = std::max(latest, last_time(ds));
                    fresh[f.config.farm_id] = std::move(ds);
                    auto ref = slice(f.by_model.at(w.primary_model), w.series_start, boundary);
                    latest = std::max(latest, last_time(ref));
                    reference[{w.primary_model, f.config.farm_id}] = std::move(ref);
                }
                auto cfg = detail::config_for(sc, "multicross_epochs", detail::seed_for(sc, "multicross:" + e.new_nwp_model_id, m));
                mc_base = mtl::adapt_new_nwp(std::move(mc_base), e.new_nwp_model_id, fresh, cfg,
                                             sc.param("multicross_lambda"), reference);
                audit("multicross", m, boundary, {latest});
            }
        }

        // ---- WP2: models that use the target's own labels
        std::optional<DenseNetwork> own, own_deployed, self_trained;
        std::optional<mtl::MtlNetwork> mtl_month;
        std::optional<mtl::MultiCrossNetwork> mc_month;
        std::optional<csge::CsgeEnsemble> ensemble;
        if (phase != Phase::no_data) {
            if (need_own) {
                auto cfg = detail::config_for(sc, "epochs", detail::seed_for(sc, "target_only", m));
                own = nnet::train(transfer::make_regressor(kModelInputCount, {}, cfg.seed), labeled, cfg).network;
                own_deployed = own;
                audit("target_only", m, boundary, {last_time(labeled)});
            }

            if (wants("self_train")) {
                auto st_cfg = detail::config_for(sc, "self_train_epochs", detail::seed_for(sc, "self_train", m));
                transfer::SelfTrainOptions opts;
                opts.conf_threshold = sc.param("self_train_threshold");
                opts.max_rounds = static_cast<std::size_t>(sc.param("self_train_rounds"));
                opts.replicas = static_cast<std::size_t>(sc.param("replicas"));
                auto unlabeled = slice(target_history, w.commissioning - (boundary - window_start), w.commissioning);
                self_trained = transfer::self_train(wp1, recent, unlabeled, st_cfg, opts).model;
                audit("self_train", m, boundary, {last_time(recent), last_time(unlabeled)});
            }
            if (need_mtl) {
                auto cfg_h = detail::config_for(sc, "mtl_epochs", detail::seed_for(sc, "mtl_head", m));
                mtl_month = mtl::add_task_head(mtl_base, target_id, recent, cfg_h, true);
                audit("mtl", m, boundary, {last_time(recent)});
            }
            if (wants("multicross")) {
                std::map<std::string, TimeSeriesDataset> by_model;
                for (const auto& id : declared_models) {
                    std::vector<Instant> times;
                    for (std::size_t i = 0; i < recent.size(); ++i) {
                        auto idx = static_cast<std::size_t>((recent.timestamps[i] - w.series_start) / Hours{1});
                        if (w.active_model[idx] == id) times.push_back(recent.timestamps[i]);
                    }
                    if (!times.empty()) by_model[id] = detail::pick(recent, times);
                }
                auto cfg_h = detail::config_for(sc, "epochs", detail::seed_for(sc, "multicross_head", m));
                mc_month = mtl::add_multicross_head(mc_base, target_id, by_model, cfg_h);
                audit("multicross", m, boundary, {last_time(recent)});
            }
        }

        // ---- WP3: novelty detection on the deployed model's residual stream, then adaptation
        if (phase == Phase::growing && !stream.empty()) {
            for (const auto& e : novelty::detect_novelty(stream)) {
                if (e.detected_at < processed_until) continue;
                report.events.push_back(e);
                Instant start = e.detected_at - Hours{168};
                episodes.push_back({e, start});
            }
            processed_until = boundary;
            std::erase_if(episodes, [&](const detail::Episode& ep) { return ep.event.detected_at < window_start; });
            if (!episodes.empty()) {
                std::vector<TimeSeriesDataset> pool_data;
                Instant latest = Instant::min();
                for (std::size_t f = 0; f < w.pool.size(); ++f) {
                    pool_data.push_back(pool_primary(f));
                    latest = std::max(latest, last_time(pool_data.back()));
                }
                Instant earliest = boundary;
                std::vector<novelty::RetrievedRecord> retrieved;
                for (const auto& ep : episodes) {
                    earliest = std::min(earliest, ep.start);
                    std::vector<Instant> times;
                    const Instant from = std::max(ep.start, boundary - Hours{static_cast<long>(kMonthHours)});
                    for (const auto& r : stream) {
                        if (r.time < from) continue;
                        bool novel = ep.event.kind == novelty::NoveltyKind::repeated_zero_interval
                                         ? r.observed == 0.0 && r.prediction > 0.1 &&
                                               (ep.event.clock_end == 24 ||
                                                in_clock_interval(hour_of_day(r.time), ep.event.clock_start, ep.event.clock_end))
                                         : true;
                        if (novel) times.push_back(r.time);
                    }
                    if (times.empty()) continue;
                    auto got = novelty::retrieve_similar_situations(pool_data, detail::pick(labeled, times),
                                                                    static_cast<std::size_t>(sc.param("retrieval_k")));
                    retrieved.insert(retrieved.end(), got.begin(), got.end());
                }
                auto recent_target = slice(labeled, std::max(earliest, boundary - Hours{static_cast<long>(kMonthHours)}), boundary);
                auto cfg_a = detail::config_for(sc, "adapt_epochs", detail::seed_for(sc, "adapt", m));
                Instant seen = std::max({latest, last_time(recent_target), novelty::latest_timestamp(retrieved)});

                auto r = novelty::adapt_to_novelty(*own, std::vector<bool>(own->layer_count(), false), retrieved,
                                                   recent_target, cfg_a);
                own_deployed = r.model;
                audit("adaptation", m, boundary, {seen});
                report.adaptations.push_back({m, "target_only", episodes.size(), retrieved.size(), r.adapted,
                                              r.guard_rmse_before, r.guard_rmse_after});
                if (mtl_month) {
                    auto composed = mtl::compose(*mtl_month, target_id);
                    std::vector<bool> freeze(composed.layer_count(), false);
                    for (std::size_t l = 0; l < mtl_month->trunk.layer_count(); ++l) freeze[l] = true;
                    auto ra = novelty::adapt_to_novelty(composed, freeze, retrieved, recent_target, cfg_a);
                    auto& head = mtl_month->heads.at(target_id);
                    for (std::size_t l = 0; l < head.layer_count(); ++l)
                        head.layers[l] = ra.model.layers[mtl_month->trunk.layer_count() + l];
                    audit("adaptation", m, boundary, {seen});
                    report.adaptations.push_back({m, "mtl", episodes.size(), retrieved.size(), ra.adapted,
                                                  ra.guard_rmse_before, ra.guard_rmse_after});
                }
            }
        }

        if (wants("csge") && own_deployed) {
            std::vector<csge::Member> members;
            for (std::size_t f = 0; f < source_models.size(); ++f)
                members.push_back({"source:" + w.pool[f].config.farm_id, csge::network_predictor(source_models[f])});
            members.push_back({"physical", [physical](const TimeSeriesDataset& ds) { return baseline::forecast_physical(physical, ds); }});
            members.push_back({"target_own", csge::network_predictor(*own_deployed)});
            ensemble = csge::make_ensemble(std::move(members), sc.param("csge_eta"));
            auto reference = slice(labeled, boundary - Hours{static_cast<long>(csge::kDefaultWindow)}, boundary);
            ensemble = csge::fit_global(std::move(*ensemble), reference);
            audit("csge", m, boundary, {last_time(reference)});
        }

        // ---- evaluation on the month that follows
        const TimeSeriesDataset month_data = slice(w.target_active, boundary, month_end);
        MonthReport mr;
        mr.month = m;
        mr.start = boundary;
        mr.state.phase = phase;
        mr.state.labeled_hours = labeled_hours;
        const auto phys = baseline::forecast_physical(physical, month_data);
        const double phys_rmse = metrics::rmse(phys, month_data.power);

        std::map<std::string, std::vector<double>> predictions;
        if (wants("physical")) predictions["physical"] = phys;
        if (wants("wp1_naive")) predictions["wp1_naive"] = transfer::predict(wp1, month_data);
        if (need_universal) predictions["wp1_universal"] = transfer::predict(universal, month_data);
        if (phase != Phase::no_data) {
            if (wants("target_only") && own) predictions["target_only"] = transfer::predict(*own, month_data);
            if (self_trained) predictions["self_train"] = transfer::predict(*self_trained, month_data);
            if (mtl_month) predictions["mtl"] = mtl::predict(*mtl_month, target_id, month_data);
            if (ensemble)
                predictions["csge"] = csge::fused_values(
                    csge::predict_all(*ensemble, month_data, static_cast<std::size_t>(sc.param("csge_neighbors"))));
            if (mc_month) {
                std::vector<double> p(month_data.size());
                std::map<std::string, std::vector<Instant>> by_model;
                for (std::size_t i = 0; i < month_data.size(); ++i) {
                    auto idx = static_cast<std::size_t>((month_data.timestamps[i] - w.series_start) / Hours{1});
                    by_model[w.active_model[idx]].push_back(month_data.timestamps[i]);
                }
                for (const auto& [id, times] : by_model) {
                    auto part = detail::pick(month_data, times);
                    auto out = mtl::predict(*mc_month, mc_month->adapters.count(id) ? id : w.primary_model, target_id, part);
                    std::size_t j = 0;
                    for (std::size_t i = 0; i < month_data.size() && j < times.size(); ++i)
                        if (month_data.timestamps[i] == times[j]) p[i] = out[j++];
                }
                predictions["multicross"] = std::move(p);
            }
        }
        for (const auto& [method, p] : predictions) {
            MethodMetrics mm;
            mm.rmse = metrics::rmse(p, month_data.power);
            mm.mae = metrics::mae(p, month_data.power);
            mm.skill = 1.0 - mm.rmse / phys_rmse;
            mr.metrics[method] = mm;
            mr.state.active_model_ids.push_back(method);
        }

        if (own && !report.crossover_month) {
            double own_rmse = metrics::rmse(transfer::predict(*own, month_data), month_data.power);
            std::optional<double> best_transfer;
            for (const auto& t : transfer_methods) {
                auto it = mr.metrics.find(t);
                if (it != mr.metrics.end()) best_transfer = std::min(best_transfer.value_or(INFINITY), it->second.rmse);
            }
            if (best_transfer && own_rmse < *best_transfer) report.crossover_month = m;
        }
        if (own_deployed) {
            auto issued = transfer::predict(*own_deployed, month_data);
            for (std::size_t i = 0; i < month_data.size(); ++i)
                stream.push_back({month_data.timestamps[i], issued[i], *month_data.power[i]});
        }
        report.months.push_back(std::move(mr));
    }
    report.final_phase = phase;
    return report;
}

// ============================================================================
// Output
// ============================================================================

inline nlohmann::json to_json(const LifecycleReport& r) {
    nlohmann::json months = nlohmann::json::array();
    for (const auto& m : r.months) {
        nlohmann::json metrics = nlohmann::json::object();
        for (const auto& [name, mm] : m.metrics) metrics[name] = {{"rmse", mm.rmse}, {"mae", mm.mae}, {"skill", mm.skill}};
        months.push_back({{"month", m.month},
                          {"start", format_iso(m.start)},
                          {"phase", to_string(m.state.phase)},
                          {"labeled_hours", m.state.labeled_hours},
                          {"active_model_ids", m.state.active_model_ids},
                          {"methods", metrics}});
    }
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : r.events) events.push_back(novelty::to_json(e));
    nlohmann::json audit = nlohmann::json::array();
    for (const auto& a : r.audit)
        audit.push_back({{"method", a.method},
                         {"month", a.month},
                         {"boundary", format_iso(a.boundary)},
                         {"max_timestamp", a.max_timestamp == Instant::min() ? std::string{} : format_iso(a.max_timestamp)},
                         {"ok", a.ok()}});
    nlohmann::json adaptations = nlohmann::json::array();
    for (const auto& a : r.adaptations)
        adaptations.push_back({{"month", a.month},
                               {"model", a.model},
                               {"episodes", a.episodes},
                               {"retrieved", a.retrieved},
                               {"adapted", a.adapted},
                               {"guard_rmse_before", a.guard_rmse_before},
                               {"guard_rmse_after", a.guard_rmse_after}});
    return {{"format", "windtl.lifecycle_report"},
            {"version", 1},
            {"config", scenario::to_json(r.config)},
            {"final_phase", to_string(r.final_phase)},
            {"months", months},
            {"events", events},
            {"adaptations", adaptations},
            {"crossover_month", r.crossover_month ? nlohmann::json(*r.crossover_month) : nlohmann::json(nullptr)},
            {"audit", audit},
            {"audit_violations", r.audit_violations()}};
}

inline constexpr std::string_view kMetricsCsvHeader = "month,method,rmse,mae,skill";

/// One row per (month, method), months ascending, methods by name.
inline void write_metrics_csv(std::ostream& out, const LifecycleReport& r) {
    out << kMetricsCsvHeader << '\n';
    for (const auto& m : r.months)
        for (const auto& [name, mm] : m.metrics)
            out << m.month << ',' << name << ',' << io::format_double(mm.rmse) << ',' << io::format_double(mm.mae) << ','
                << io::format_double(mm.skill) << '\n';
}

} // namespace windtl::lifecycle
