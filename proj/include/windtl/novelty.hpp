// WP3 building blocks: novelty detection on the forecast/observation stream,
// retrieval of similar situations from the farm pool, guarded adaptation.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "windtl/metrics.hpp"
#include "windtl/nnet.hpp"
#include "windtl/types.hpp"

namespace windtl::novelty {

enum class NoveltyKind { regime_shift, repeated_zero_interval, nwp_change_declared };

inline std::string_view to_string(NoveltyKind k) {
    switch (k) {
    case NoveltyKind::regime_shift: return "regime_shift";
    case NoveltyKind::repeated_zero_interval: return "repeated_zero_interval";
    case NoveltyKind::nwp_change_declared: return "nwp_change_declared";
    }
    return "?";
}

struct NoveltyEvent {
    NoveltyKind kind = NoveltyKind::regime_shift;
    Instant detected_at;
    // regime shift evidence (squared-error scale)
    double window_rmse = 0.0;
    double reference_mean = 0.0;
    double reference_std = 0.0;
    double z = 0.0;
    // repeated zero interval
    int clock_start = 0;
    int clock_end = 0;
    // declared NWP change
    std::string new_nwp_model_id;
};

inline nlohmann::json to_json(const NoveltyEvent& e) {
    nlohmann::json j{{"kind", to_string(e.kind)}, {"detected_at", format_iso(e.detected_at)}};
    switch (e.kind) {
    case NoveltyKind::regime_shift:
        j["evidence"] = {{"window_rmse", e.window_rmse},
                         {"reference_mean", e.reference_mean},
                         {"reference_std", e.reference_std},
                         {"z", e.z}};
        break;
    case NoveltyKind::repeated_zero_interval:
        j["evidence"] = {{"clock_start", e.clock_start}, {"clock_end", e.clock_end}};
        break;
    case NoveltyKind::nwp_change_declared: j["evidence"] = {{"new_nwp_model_id", e.new_nwp_model_id}}; break;
    }
    return j;
}

/// One issued forecast and what was observed afterwards.
struct StreamRecord {
    Instant time;
    double prediction = 0.0;
    double observed = 0.0;
};

struct NoveltyParams {
    std::size_t window = 168;    // hours in the monitored window
    std::size_t reference = 720; // hours in the trailing reference before the window
    double z_threshold = 3.0;
    std::size_t persistence = 24; // consecutive steps above threshold
    std::size_t zero_days = 5;    // distinct days with the same anomalous zero hour
    std::size_t zero_lookback_days = 7;
    double zero_prediction_floor = 0.1;
};

namespace detail {

/// Maximal circular run of flagged hours containing `hour`; full day as [0, 24).
inline std::pair<int, int> circular_run(const std::array<bool, 24>& flagged, int hour) {
    if (std::all_of(flagged.begin(), flagged.end(), [](bool b) { return b; })) return {0, 24};
    int start = hour, end = hour;
    while (flagged[static_cast<std::size_t>((start + 23) % 24)]) start = (start + 23) % 24;
    while (flagged[static_cast<std::size_t>((end + 1) % 24)]) end = (end + 1) % 24;
    return {start, (end + 1) % 24};
}

} // namespace detail

/// Regime shifts: the mean squared residual of the last `window` steps is
/// compared with the `reference` steps before it by a two-sample z statistic,
/// z = (m_w - m_ref) / (s_ref * sqrt(1/W + 1/R)); an event fires once z has
/// exceeded the threshold for `persistence` consecutive steps and stays one
/// episode until z falls back.
///
/// Repeated zero intervals: an hour is anomalous when power is exactly 0 while
/// the forecast exceeds the floor. An hour of day is flagged when it was
/// anomalous on >= zero_days of the last zero_lookback_days days. The event
/// fires when a circular run of flagged hours closes (the current hour is not
/// flagged, the previous one is); its clock interval is the surrounding run of
/// hours anomalous on >= 2 of those days. The episode lasts while any of its
/// hours saw an anomaly within the look-back; runs touching it extend it
/// instead of firing again.
inline std::vector<NoveltyEvent> detect_novelty(const std::vector<StreamRecord>& stream, const NoveltyParams& p = {}) {
    if (stream.empty()) throw ValidationError("detect_novelty: empty stream");
    for (std::size_t i = 1; i < stream.size(); ++i)
        if (!(stream[i - 1].time < stream[i].time)) throw ValidationError("detect_novelty: stream not time-ordered");
    if (p.window < 2 || p.reference < 2 || p.persistence < 1 || p.zero_days < 1 ||
        p.zero_lookback_days < p.zero_days)
        throw ValidationError("detect_novelty: bad parameters");

    std::vector<NoveltyEvent> events;
    const std::size_t n = stream.size();
    std::vector<double> sq(n), c1(n + 1, 0.0), c2(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double r = stream[i].prediction - stream[i].observed;
        sq[i] = r * r;
        c1[i + 1] = c1[i] + sq[i];
        c2[i + 1] = c2[i] + sq[i] * sq[i];
    }

    const double W = static_cast<double>(p.window), R = static_cast<double>(p.reference);
    std::size_t run = 0;
    bool in_shift = false;
    for (std::size_t t = p.window + p.reference - 1; t < n; ++t) {
        const std::size_t w0 = t + 1 - p.window, r0 = w0 - p.reference;
        double m_w = (c1[t + 1] - c1[w0]) / W;
        double m_r = (c1[w0] - c1[r0]) / R;
        double var_r = std::max(0.0, (c2[w0] - c2[r0]) / R - m_r * m_r);
        double s_r = std::sqrt(var_r);
        double z = s_r > 0.0 ? (m_w - m_r) / (s_r * std::sqrt(1.0 / W + 1.0 / R)) : (m_w > m_r ? INFINITY : 0.0);
        if (z > p.z_threshold) {
            ++run;
            if (run >= p.persistence && !in_shift) {
                NoveltyEvent e;
                e.kind = NoveltyKind::regime_shift;
                e.detected_at = stream[t].time;
                e.window_rmse = std::sqrt(m_w);
                e.reference_mean = m_r;
                e.reference_std = s_r;
                e.z = std::isfinite(z) ? z : std::numeric_limits<double>::max();
                events.push_back(e);
                in_shift = true;
            }
        } else {
            run = 0;
            in_shift = false;
        }
    }

    // anomalous marks within the look-back, tracked per hour of day
    const auto lookback = Hours{24 * static_cast<long>(p.zero_lookback_days)};
    std::array<std::vector<Instant>, 24> marks;
    std::vector<std::array<bool, 24>> episodes;
    std::array<bool, 24> previous{};
    for (std::size_t i = 0; i < n; ++i) {
        const auto& r = stream[i];
        const int h = hour_of_day(r.time);
        if (r.observed == 0.0 && r.prediction > p.zero_prediction_floor) marks[static_cast<std::size_t>(h)].push_back(r.time);
        std::array<bool, 24> flagged{}, recurring{}, seen{};
        for (std::size_t k = 0; k < 24; ++k) {
            auto& v = marks[k];
            v.erase(std::remove_if(v.begin(), v.end(), [&](Instant x) { return !(r.time - x < lookback); }), v.end());
            flagged[k] = v.size() >= p.zero_days;
            recurring[k] = v.size() >= 2;
            seen[k] = !v.empty();
        }
        std::erase_if(episodes, [&](const std::array<bool, 24>& ep) {
            for (std::size_t k = 0; k < 24; ++k)
                if (ep[k] && seen[k]) return false;
            return true;
        });

        const auto hu = static_cast<std::size_t>(h), prev = static_cast<std::size_t>((h + 23) % 24);
        const bool full_day = std::all_of(flagged.begin(), flagged.end(), [](bool b) { return b; });
        if (!full_day && !(previous[prev] && flagged[prev] && !flagged[hu])) {
            previous = flagged;
            continue;
        }
        previous = flagged;
        auto [start, end] = detail::circular_run(recurring, full_day ? h : static_cast<int>(prev));
        std::array<bool, 24> hours{};
        for (int k = 0; k < 24; ++k)
            hours[static_cast<std::size_t>(k)] = (start == 0 && end == 24) || in_clock_interval(k, start, end);
        bool merged = false;
        for (auto& ep : episodes) {
            bool touches = false;
            for (std::size_t k = 0; k < 24 && !touches; ++k)
                touches = hours[k] && (ep[k] || ep[(k + 1) % 24] || ep[(k + 23) % 24]);
            if (!touches) continue;
            for (std::size_t k = 0; k < 24; ++k) ep[k] = ep[k] || hours[k];
            merged = true;
        }
        if (merged) continue;
        episodes.push_back(hours);
        NoveltyEvent e;
        e.kind = NoveltyKind::repeated_zero_interval;
        e.detected_at = r.time;
        e.clock_start = start;
        e.clock_end = end;
        events.push_back(e);
    }
    std::stable_sort(events.begin(), events.end(),
                     [](const NoveltyEvent& a, const NoveltyEvent& b) { return a.detected_at < b.detected_at; });
    return events;
}

// ============================================================================
// Similar-situation retrieval
// ============================================================================

struct RetrievedRecord {
    std::string farm_id;
    Instant timestamp;
    NwpFeatureVector features;
    double lead_time = 0.0;
    double power = 0.0;
    double distance = 0.0;
};

/// Retrieved records as training samples.
inline nnet::Samples to_samples(const std::vector<RetrievedRecord>& records) {
    nnet::Samples s;
    s.inputs.resize(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(kModelInputCount));
    s.targets.resize(static_cast<Eigen::Index>(records.size()), 1);
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto row = model_inputs(records[i].features, records[i].timestamp);
        for (std::size_t j = 0; j < kModelInputCount; ++j)
            s.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
        s.targets(static_cast<Eigen::Index>(i), 0) = records[i].power;
    }
    return s;
}

inline Instant latest_timestamp(const std::vector<RetrievedRecord>& records) {
    Instant t = Instant::min();
    for (const auto& r : records) t = std::max(t, r.timestamp);
    return t;
}

/// Model-input columns spanning the retrieval space by default: wind speeds
/// and the clock. Pass all of 0..kModelInputCount-1 for the full input space.
inline const std::vector<std::size_t>& default_retrieval_columns() {
    static const std::vector<std::size_t> columns{0, 1, 7, 8};
    return columns;
}

/// Selected model inputs followed by power.
inline std::vector<double> joint_vector(const NwpFeatureVector& f, Instant t, double power,
                                        const std::vector<std::size_t>& columns) {
    auto x = model_inputs(f, t);
    std::vector<double> v;
    v.reserve(columns.size() + 1);
    for (auto c : columns) v.push_back(x[c]);
    v.push_back(power);
    return v;
}

/// For every segment record, the k nearest labeled pool records in the joint
/// (inputs, power) space, each axis standardized by pool statistics; union
/// without duplicates, ordered by (distance, farm id, timestamp).
inline std::vector<RetrievedRecord> retrieve_similar_situations(
    const std::vector<TimeSeriesDataset>& pool, const TimeSeriesDataset& novel_segment, std::size_t k,
    const std::vector<std::size_t>& columns = default_retrieval_columns()) {
    if (pool.empty()) throw ValidationError("retrieve_similar_situations: empty pool");
    if (k < 1) throw ValidationError("retrieve_similar_situations: k must be >= 1");
    if (columns.empty()) throw ValidationError("retrieve_similar_situations: no input columns");
    for (auto c : columns)
        if (c >= kModelInputCount) throw ValidationError("retrieve_similar_situations: column out of range");
    auto segment = labeled_only(novel_segment);
    if (segment.empty()) throw ValidationError("retrieve_similar_situations: segment carries no labels");

    const std::size_t D = columns.size() + 1;
    struct Candidate {
        std::size_t farm;
        std::size_t row;
        std::vector<double> z;
    };
    std::vector<Candidate> cands;
    std::vector<double> mean(D, 0.0), sq(D, 0.0);
    for (std::size_t f = 0; f < pool.size(); ++f) {
        const auto& ds = pool[f];
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (!ds.has_power() || !ds.power[i]) continue;
            Candidate c{f, i, joint_vector(ds.features[i], ds.timestamps[i], *ds.power[i], columns)};
            for (std::size_t d = 0; d < D; ++d) {
                mean[d] += c.z[d];
                sq[d] += c.z[d] * c.z[d];
            }
            cands.push_back(std::move(c));
        }
    }
    if (cands.empty()) throw ValidationError("retrieve_similar_situations: pool carries no labels");
    std::vector<double> scale(D, 1.0);
    const double n = static_cast<double>(cands.size());
    for (std::size_t d = 0; d < D; ++d) {
        mean[d] /= n;
        double var = sq[d] / n - mean[d] * mean[d];
        if (var > 1e-24) scale[d] = std::sqrt(var);
    }
    for (auto& c : cands)
        for (std::size_t d = 0; d < D; ++d) c.z[d] = (c.z[d] - mean[d]) / scale[d];

    auto key = [&](const Candidate& c) { return std::tie(pool[c.farm].farm_id, pool[c.farm].timestamps[c.row]); };
    std::map<std::pair<std::size_t, std::size_t>, double> chosen; // (farm, row) -> best distance
    std::vector<std::pair<double, std::size_t>> dist(cands.size());
    for (std::size_t s = 0; s < segment.size(); ++s) {
        auto q = joint_vector(segment.features[s], segment.timestamps[s], *segment.power[s], columns);
        for (std::size_t d = 0; d < D; ++d) q[d] = (q[d] - mean[d]) / scale[d];
        for (std::size_t c = 0; c < cands.size(); ++c) {
            double acc = 0.0;
            for (std::size_t d = 0; d < D; ++d) acc += (cands[c].z[d] - q[d]) * (cands[c].z[d] - q[d]);
            dist[c] = {std::sqrt(acc), c};
        }
        const std::size_t take = std::min(k, dist.size());
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(take), dist.end(),
                          [&](const auto& a, const auto& b) {
                              if (a.first != b.first) return a.first < b.first;
                              return key(cands[a.second]) < key(cands[b.second]);
                          });
        for (std::size_t j = 0; j < take; ++j) {
            const auto& c = cands[dist[j].second];
            auto [it, fresh] = chosen.emplace(std::make_pair(c.farm, c.row), dist[j].first);
            if (!fresh) it->second = std::min(it->second, dist[j].first);
        }
    }
    std::vector<RetrievedRecord> out;
    out.reserve(chosen.size());
    for (const auto& [where, d] : chosen) {
        const auto& ds = pool[where.first];
        out.push_back({ds.farm_id, ds.timestamps[where.second], ds.features[where.second], ds.lead_time[where.second],
                       *ds.power[where.second], d});
    }
    std::sort(out.begin(), out.end(), [](const RetrievedRecord& a, const RetrievedRecord& b) {
        return std::tie(a.distance, a.farm_id, a.timestamp) < std::tie(b.distance, b.farm_id, b.timestamp);
    });
    return out;
}

// ============================================================================
// Guarded adaptation
// ============================================================================

struct AdaptationResult {
    nnet::DenseNetwork model;
    bool adapted = false; // false = original kept by the guard
    double guard_rmse_before = 0.0;
    double guard_rmse_after = 0.0;
    Instant guard_start;
};

inline double rmse_on(const nnet::DenseNetwork& net, const TimeSeriesDataset& labeled) {
    nnet::Samples s = nnet::labeled_samples(labeled);
    return std::sqrt((nnet::forward_batch(net, s.inputs) - s.targets).array().square().mean());
}

/// Finetunes `active` on retrieved + recent target records with `freeze`
/// installed (e.g. an MTL trunk), then keeps whichever of the adapted and the
/// original model has the lower RMSE on the most recent `guard_hours` labeled
/// target hours.
inline AdaptationResult adapt_to_novelty(const nnet::DenseNetwork& active, const std::vector<bool>& freeze,
                                         const std::vector<RetrievedRecord>& retrieved,
                                         const TimeSeriesDataset& recent_target, const nnet::TrainConfig& cfg,
                                         std::size_t guard_hours = 168) {
    auto recent = labeled_only(recent_target);
    if (retrieved.empty() && recent.empty()) throw ValidationError("adapt_to_novelty: nothing to adapt on");
    if (freeze.size() != active.layer_count()) throw ValidationError("adapt_to_novelty: freeze mask length mismatch");
    nnet::Samples data = nnet::concat(to_samples(retrieved), nnet::labeled_samples(recent));

    AdaptationResult r;
    nnet::DenseNetwork adapted = nnet::finetune(active, data, freeze, cfg);
    adapted.freeze_mask = active.freeze_mask;
    if (recent.empty()) {
        r.model = std::move(adapted);
        r.adapted = true;
        return r;
    }
    Instant last = recent.timestamps.back() + Hours{1};
    r.guard_start = last - Hours{static_cast<long>(guard_hours)};
    auto guard = slice(recent, r.guard_start, last);
    r.guard_rmse_before = rmse_on(active, guard);
    r.guard_rmse_after = rmse_on(adapted, guard);
    r.adapted = r.guard_rmse_after < r.guard_rmse_before;
    r.model = r.adapted ? std::move(adapted) : active;
    if (!r.adapted) r.guard_rmse_after = r.guard_rmse_before;
    return r;
}

} // namespace windtl::novelty
