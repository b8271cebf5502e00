// Coopetitive soft-gating ensemble: members are weighted by global, local
// (similar weather situations) and lead-time dependent error, fused by the
// renormalized product of the three weightings.
#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "windtl/nnet.hpp"
#include "windtl/types.hpp"

namespace windtl::csge {

inline constexpr double kDefaultEta = 2.0;
inline constexpr double kDefaultEpsilon = 1e-6;
inline constexpr std::size_t kDefaultWindow = 2160;
inline constexpr std::size_t kDefaultNeighbors = 50;

/// w_j = ((sum_k e_k + eps) / (e_j + eps))^eta, normalized to sum 1.
inline std::vector<double> soft_gate(std::span<const double> errors, double eta = kDefaultEta,
                                     double epsilon = kDefaultEpsilon) {
    if (errors.empty()) throw ValidationError("soft_gate: no errors");
    if (!(eta >= 0.0)) throw ValidationError("soft_gate: eta must be >= 0");
    if (!(epsilon > 0.0)) throw ValidationError("soft_gate: epsilon must be > 0");
    double total = 0.0;
    for (double e : errors) {
        if (!(e >= 0.0) || !std::isfinite(e)) throw ValidationError("soft_gate: errors must be finite and >= 0");
        total += e;
    }
    // computed in log space so large ratios cannot overflow
    std::vector<double> logs(errors.size());
    for (std::size_t j = 0; j < errors.size(); ++j) logs[j] = eta * (std::log(total + epsilon) - std::log(errors[j] + epsilon));
    const double top = *std::max_element(logs.begin(), logs.end());
    std::vector<double> w(errors.size());
    double sum = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) sum += (w[j] = std::exp(logs[j] - top));
    for (double& v : w) v /= sum;
    return w;
}

inline std::vector<double> uniform_weights(std::size_t n) { return std::vector<double>(n, 1.0 / static_cast<double>(n)); }

/// Horizon bucket index: [0,6), [6,12), [12,24), [24,48), [48,inf).
inline constexpr std::array<double, 4> kBucketEdges{6.0, 12.0, 24.0, 48.0};
inline constexpr std::size_t kBucketCount = kBucketEdges.size() + 1;

inline std::size_t horizon_bucket(double hours) {
    if (!(hours >= 0.0)) throw ValidationError("horizon must be >= 0");
    std::size_t b = 0;
    while (b < kBucketEdges.size() && hours >= kBucketEdges[b]) ++b;
    return b;
}

/// Batch predictor: one value per record of the dataset.
using Predictor = std::function<std::vector<double>(const TimeSeriesDataset&)>;

struct Member {
    std::string id;
    Predictor predict;
};

inline Predictor network_predictor(nnet::DenseNetwork net) {
    return [net = std::move(net)](const TimeSeriesDataset& ds) {
        if (ds.empty()) return std::vector<double>{};
        nnet::Matrix out = nnet::forward_batch(net, nnet::input_matrix(ds));
        return std::vector<double>(out.data(), out.data() + out.rows());
    };
}

/// One observed situation with every member's absolute error on it.
struct SituationRecord {
    Instant time;
    std::vector<double> features; // standardized NWP features
    double lead_time = 0.0;
    std::vector<double> abs_error; // per member
};

struct CsgeEnsemble {
    std::vector<Member> members;
    double eta = kDefaultEta;
    double epsilon = kDefaultEpsilon;
    std::size_t window = kDefaultWindow;
    std::size_t neighbors = kDefaultNeighbors;

    nnet::Standardizer feature_scaling; // fitted on the first reference set
    std::deque<SituationRecord> records; // most recent `window` observations
    std::vector<double> global_errors;
    std::vector<std::array<std::optional<double>, kBucketCount>> leadtime_errors;
    std::vector<bool> member_flagged; // a member failed on the reference data
    std::vector<std::string> diagnostics;

    std::size_t size() const { return members.size(); }
    bool fitted() const { return global_errors.size() == members.size() && !members.empty(); }
};

inline CsgeEnsemble make_ensemble(std::vector<Member> members, double eta = kDefaultEta,
                                  double epsilon = kDefaultEpsilon, std::size_t window = kDefaultWindow,
                                  std::size_t neighbors = kDefaultNeighbors) {
    if (members.empty()) throw ValidationError("csge: ensemble needs at least one member");
    if (!(eta >= 0.0)) throw ValidationError("csge: eta must be >= 0");
    if (!(epsilon > 0.0)) throw ValidationError("csge: epsilon must be > 0");
    if (window < 1 || neighbors < 1) throw ValidationError("csge: window and k must be >= 1");
    for (std::size_t i = 0; i < members.size(); ++i)
        for (std::size_t j = i + 1; j < members.size(); ++j)
            if (members[i].id == members[j].id) throw ValidationError("csge: duplicate member id '" + members[i].id + "'");
    CsgeEnsemble e;
    e.members = std::move(members);
    e.eta = eta;
    e.epsilon = epsilon;
    e.window = window;
    e.neighbors = neighbors;
    return e;
}

inline nnet::Matrix feature_matrix(const TimeSeriesDataset& ds) {
    nnet::Matrix x(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(kNwpFeatureCount));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        auto row = as_array(ds.features[i]);
        for (std::size_t j = 0; j < kNwpFeatureCount; ++j)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
    return x;
}

namespace detail {

/// Member predictions; a member that throws or returns anything non-finite or
/// of the wrong length yields nullopt.
inline std::vector<std::optional<std::vector<double>>> member_outputs(const CsgeEnsemble& e, const TimeSeriesDataset& ds) {
    std::vector<std::optional<std::vector<double>>> out(e.size());
    for (std::size_t m = 0; m < e.size(); ++m) {
        try {
            auto p = e.members[m].predict(ds);
            if (p.size() == ds.size() && std::all_of(p.begin(), p.end(), [](double v) { return std::isfinite(v); }))
                out[m] = std::move(p);
        } catch (const std::exception&) {
        }
    }
    return out;
}

inline void recompute(CsgeEnsemble& e) {
    const std::size_t n = e.size();
    std::vector<double> sq(n, 0.0);
    std::vector<std::array<double, kBucketCount>> bucket_sq(n);
    std::array<std::size_t, kBucketCount> bucket_n{};
    for (auto& b : bucket_sq) b.fill(0.0);
    for (const auto& r : e.records) {
        std::size_t b = horizon_bucket(r.lead_time);
        ++bucket_n[b];
        for (std::size_t m = 0; m < n; ++m) {
            double s = r.abs_error[m] * r.abs_error[m];
            sq[m] += s;
            bucket_sq[m][b] += s;
        }
    }
    e.global_errors.assign(n, 0.0);
    e.leadtime_errors.assign(n, {});
    if (e.records.empty()) return;
    for (std::size_t m = 0; m < n; ++m) {
        e.global_errors[m] = std::sqrt(sq[m] / static_cast<double>(e.records.size()));
        for (std::size_t b = 0; b < kBucketCount; ++b)
            if (bucket_n[b] > 0) e.leadtime_errors[m][b] = std::sqrt(bucket_sq[m][b] / static_cast<double>(bucket_n[b]));
    }
}

/// Appends labeled records with per-member absolute errors. Failed members get
/// twice the worst surviving member's error on each record and are flagged.
inline void append(CsgeEnsemble& e, const TimeSeriesDataset& observations) {
    auto labeled = labeled_only(observations);
    if (labeled.empty()) throw ValidationError("csge: observations carry no labels");
    auto outputs = member_outputs(e, labeled);
    if (std::none_of(outputs.begin(), outputs.end(), [](const auto& o) { return o.has_value(); }))
        throw ValidationError("csge: every member failed on the observations");
    if (e.member_flagged.size() != e.size()) e.member_flagged.assign(e.size(), false);
    for (std::size_t m = 0; m < e.size(); ++m)
        if (!outputs[m] && !e.member_flagged[m]) {
            e.member_flagged[m] = true;
            e.diagnostics.push_back("member '" + e.members[m].id + "' failed; error set to 2x worst");
        }
    nnet::Matrix z = e.feature_scaling.apply(feature_matrix(labeled));
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        SituationRecord r;
        r.time = labeled.timestamps[i];
        r.features.assign(z.cols(), 0.0);
        for (Eigen::Index j = 0; j < z.cols(); ++j) r.features[static_cast<std::size_t>(j)] = z(static_cast<Eigen::Index>(i), j);
        r.lead_time = labeled.lead_time[i];
        r.abs_error.assign(e.size(), 0.0);
        double worst = 0.0;
        for (std::size_t m = 0; m < e.size(); ++m)
            if (outputs[m]) worst = std::max(worst, r.abs_error[m] = std::abs((*outputs[m])[i] - *labeled.power[i]));
        for (std::size_t m = 0; m < e.size(); ++m)
            if (!outputs[m]) r.abs_error[m] = 2.0 * worst;
        e.records.push_back(std::move(r));
    }
    while (e.records.size() > e.window) e.records.pop_front();
    recompute(e);
}

} // namespace detail

/// Resets the ensemble's error store to the reference data (most recent
/// `window` records) and computes global and lead-time errors.
inline CsgeEnsemble fit_global(CsgeEnsemble e, const TimeSeriesDataset& reference) {
    if (reference.labeled_count() == 0) throw ValidationError("fit_global: reference has no labeled records");
    e.records.clear();
    e.member_flagged.assign(e.size(), false);
    e.diagnostics.clear();
    e.feature_scaling = nnet::Standardizer::fit(feature_matrix(labeled_only(reference)));
    detail::append(e, reference);
    return e;
}

/// Appends new observations and recomputes errors over the sliding window.
inline CsgeEnsemble update(CsgeEnsemble e, const TimeSeriesDataset& observations) {
    if (!e.feature_scaling.fitted()) return fit_global(std::move(e), observations);
    detail::append(e, observations);
    return e;
}

inline std::vector<double> global_weights(const CsgeEnsemble& e) {
    if (!e.fitted()) throw ValidationError("csge: ensemble not fitted");
    return soft_gate(e.global_errors, e.eta, e.epsilon);
}

/// Soft-gated mean absolute error over the k nearest stored situations
/// (standardized Euclidean, ties by insertion order).
inline std::vector<double> local_weights(const CsgeEnsemble& e, const NwpFeatureVector& query, std::size_t k,
                                         std::vector<std::string>* diagnostics = nullptr) {
    if (k < 1) throw ValidationError("local_weights: k must be >= 1");
    if (e.records.empty() || !e.feature_scaling.fitted()) {
        if (diagnostics) diagnostics->push_back("local index empty; uniform local weights");
        return uniform_weights(e.size());
    }
    auto raw = as_array(query);
    std::vector<double> q(kNwpFeatureCount);
    for (std::size_t j = 0; j < kNwpFeatureCount; ++j) {
        auto jj = static_cast<Eigen::Index>(j);
        q[j] = (raw[j] - e.feature_scaling.mean[jj]) / e.feature_scaling.scale[jj];
    }
    std::vector<std::pair<double, std::size_t>> dist(e.records.size());
    for (std::size_t i = 0; i < e.records.size(); ++i) {
        double d = 0.0;
        for (std::size_t j = 0; j < q.size(); ++j) d += (e.records[i].features[j] - q[j]) * (e.records[i].features[j] - q[j]);
        dist[i] = {d, i};
    }
    const std::size_t take = std::min(k, dist.size());
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(take), dist.end());
    std::vector<double> mae(e.size(), 0.0);
    for (std::size_t n = 0; n < take; ++n)
        for (std::size_t m = 0; m < e.size(); ++m) mae[m] += e.records[dist[n].second].abs_error[m] / static_cast<double>(take);
    return soft_gate(mae, e.eta, e.epsilon);
}

inline std::vector<double> leadtime_weights(const CsgeEnsemble& e, double horizon) {
    std::size_t b = horizon_bucket(horizon);
    if (e.leadtime_errors.size() != e.size()) return uniform_weights(e.size());
    std::vector<double> errs;
    for (const auto& row : e.leadtime_errors) {
        if (!row[b]) return uniform_weights(e.size());
        errs.push_back(*row[b]);
    }
    return soft_gate(errs, e.eta, e.epsilon);
}

/// Full attribution of one fused prediction.
struct Attribution {
    Instant time;
    double horizon = 0.0;
    std::vector<std::string> member_ids;
    std::vector<std::optional<double>> predictions; // nullopt = member failed
    std::vector<double> global, local, leadtime, weights;
    double unclipped = 0.0;
    double fused = 0.0;
    std::vector<std::string> diagnostics;
};

/// Renormalized product of the three weightings over members that produced a
/// prediction; failed members get weight 0.
inline std::vector<double> combine_weights(const std::vector<double>& g, const std::vector<double>& l,
                                           const std::vector<double>& t, const std::vector<bool>& alive) {
    std::vector<double> w(g.size(), 0.0);
    double sum = 0.0;
    for (std::size_t m = 0; m < w.size(); ++m)
        if (alive[m]) sum += (w[m] = g[m] * l[m] * t[m]);
    if (!(sum > 0.0)) {
        std::size_t live = static_cast<std::size_t>(std::count(alive.begin(), alive.end(), true));
        for (std::size_t m = 0; m < w.size(); ++m) w[m] = alive[m] ? 1.0 / static_cast<double>(live) : 0.0;
        return w;
    }
    for (double& v : w) v /= sum;
    return w;
}

/// Fused prediction for every record of `ds` (lead time from the dataset).
inline std::vector<Attribution> predict_all(const CsgeEnsemble& e, const TimeSeriesDataset& ds, std::size_t k) {
    if (!e.fitted()) throw ValidationError("csge: ensemble not fitted");
    auto outputs = detail::member_outputs(e, ds);
    const auto g = global_weights(e);
    std::vector<Attribution> out;
    out.reserve(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        Attribution a;
        a.time = ds.timestamps[i];
        a.horizon = ds.lead_time[i];
        std::vector<bool> alive(e.size());
        for (std::size_t m = 0; m < e.size(); ++m) {
            a.member_ids.push_back(e.members[m].id);
            if (outputs[m]) a.predictions.emplace_back((*outputs[m])[i]);
            else a.predictions.emplace_back();
            alive[m] = outputs[m].has_value();
        }
        if (std::none_of(alive.begin(), alive.end(), [](bool b) { return b; }))
            throw ValidationError("csge: every member failed to predict");
        a.global = g;
        a.local = local_weights(e, ds.features[i], k, &a.diagnostics);
        a.leadtime = leadtime_weights(e, a.horizon);
        a.weights = combine_weights(a.global, a.local, a.leadtime, alive);
        for (std::size_t m = 0; m < e.size(); ++m)
            if (alive[m]) a.unclipped += a.weights[m] * *a.predictions[m];
        a.fused = std::clamp(a.unclipped, 0.0, 1.0);
        out.push_back(std::move(a));
    }
    return out;
}

inline Attribution predict(const CsgeEnsemble& e, const NwpFeatureVector& query, Instant time, double horizon,
                           std::size_t k) {
    TimeSeriesDataset one;
    one.farm_id = "query";
    one.timestamps = {time};
    one.features = {query};
    one.lead_time = {horizon};
    return predict_all(e, one, k).front();
}

inline std::vector<double> fused_values(const std::vector<Attribution>& a) {
    std::vector<double> out;
    out.reserve(a.size());
    for (const auto& x : a) out.push_back(x.fused);
    return out;
}

// ============================================================================
// Serialization
// ============================================================================

inline nlohmann::json to_json(const CsgeEnsemble& e) {
    nlohmann::json j;
    j["format"] = "windtl.csge";
    j["version"] = 1;
    std::vector<std::string> ids;
    for (const auto& m : e.members) ids.push_back(m.id);
    j["member_ids"] = ids;
    j["eta"] = e.eta;
    j["epsilon"] = e.epsilon;
    j["window"] = e.window;
    j["k"] = e.neighbors;
    j["global_errors"] = e.global_errors;
    auto& lt = j["leadtime_errors"] = nlohmann::json::array();
    for (const auto& row : e.leadtime_errors) {
        nlohmann::json r = nlohmann::json::array();
        for (const auto& v : row) r.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
        lt.push_back(r);
    }
    j["member_flagged"] = e.member_flagged;
    j["diagnostics"] = e.diagnostics;
    if (e.feature_scaling.fitted())
        j["feature_scaling"] = {{"mean", nnet::vector_to_json(e.feature_scaling.mean)},
                                {"scale", nnet::vector_to_json(e.feature_scaling.scale)}};
    else
        j["feature_scaling"] = nullptr;
    auto& idx = j["index"] = nlohmann::json::array();
    for (const auto& r : e.records)
        idx.push_back({{"timestamp", format_iso(r.time)},
                       {"features", r.features},
                       {"lead_time", r.lead_time},
                       {"abs_error", r.abs_error}});
    return j;
}

/// Restores the state; predictors are re-attached by member id.
inline CsgeEnsemble ensemble_from_json(const nlohmann::json& j, std::vector<Member> members) {
    if (j.value("format", "") != "windtl.csge") throw ValidationError("not a windtl.csge document");
    auto ids = j.at("member_ids").get<std::vector<std::string>>();
    std::vector<Member> ordered;
    for (const auto& id : ids) {
        auto it = std::find_if(members.begin(), members.end(), [&](const Member& m) { return m.id == id; });
        if (it == members.end()) throw ValidationError("csge: no predictor for member '" + id + "'");
        ordered.push_back(*it);
    }
    CsgeEnsemble e = make_ensemble(std::move(ordered), j.at("eta").get<double>(), j.at("epsilon").get<double>(),
                                   j.at("window").get<std::size_t>(), j.at("k").get<std::size_t>());
    e.global_errors = j.at("global_errors").get<std::vector<double>>();
    for (const auto& row : j.at("leadtime_errors")) {
        std::array<std::optional<double>, kBucketCount> r{};
        for (std::size_t b = 0; b < kBucketCount; ++b)
            if (!row.at(b).is_null()) r[b] = row.at(b).get<double>();
        e.leadtime_errors.push_back(r);
    }
    e.member_flagged = j.at("member_flagged").get<std::vector<bool>>();
    e.diagnostics = j.at("diagnostics").get<std::vector<std::string>>();
    if (const auto& s = j.at("feature_scaling"); !s.is_null()) {
        e.feature_scaling.mean = nnet::vector_from_json(s.at("mean"));
        e.feature_scaling.scale = nnet::vector_from_json(s.at("scale"));
    }
    for (const auto& r : j.at("index"))
        e.records.push_back({parse_iso(r.at("timestamp").get<std::string>()), r.at("features").get<std::vector<double>>(),
                             r.at("lead_time").get<double>(), r.at("abs_error").get<std::vector<double>>()});
    return e;
}

inline nlohmann::json to_json(const Attribution& a) {
    nlohmann::json members = nlohmann::json::array();
    for (std::size_t m = 0; m < a.member_ids.size(); ++m)
        members.push_back({{"id", a.member_ids[m]},
                           {"prediction", a.predictions[m] ? nlohmann::json(*a.predictions[m]) : nlohmann::json(nullptr)},
                           {"w_global", a.global[m]},
                           {"w_local", a.local[m]},
                           {"w_leadtime", a.leadtime[m]},
                           {"weight", a.weights[m]}});
    return {{"timestamp", format_iso(a.time)}, {"horizon", a.horizon}, {"fused", a.fused}, {"members", members}};
}

/// One JSON document per line.
inline void write_attribution_lines(std::ostream& out, const std::vector<Attribution>& rows) {
    for (const auto& a : rows) out << to_json(a).dump() << '\n';
}

} // namespace windtl::csge
