// Transfer techniques for a target farm without (or with little) history:
// pseudo-labeling from replica ensembles, confidence-weighted WP1 training,
// the autoencoder-based universal model and guarded self-training.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "windtl/metrics.hpp"
#include "windtl/nnet.hpp"
#include "windtl/parallel.hpp"
#include "windtl/preselect.hpp"
#include "windtl/synthdata.hpp"

namespace windtl::transfer {

using nnet::Activation;
using nnet::DenseNetwork;
using nnet::Matrix;
using nnet::Samples;
using nnet::TrainConfig;

// ============================================================================
// Single-task regressors
// ============================================================================

/// Hidden widths of a single-task power regressor (tanh hidden, sigmoid out).
struct RegressorShape {
    std::vector<std::size_t> hidden{24};
};

inline DenseNetwork make_regressor(std::size_t input_dim, const RegressorShape& shape, std::uint64_t seed) {
    std::vector<std::size_t> dims{input_dim};
    std::vector<Activation> acts;
    for (auto h : shape.hidden) {
        dims.push_back(h);
        acts.push_back(Activation::tanh);
    }
    dims.push_back(1);
    acts.push_back(Activation::sigmoid);
    return nnet::init_network(std::span<const std::size_t>(dims), std::span<const Activation>(acts), seed);
}

/// Single-output predictions for every record of a dataset.
inline std::vector<double> predict(const DenseNetwork& net, const TimeSeriesDataset& ds) {
    if (ds.empty()) return {};
    Matrix out = nnet::forward_batch(net, nnet::input_matrix(ds));
    return {out.data(), out.data() + out.rows()};
}

inline double dataset_rmse(const DenseNetwork& net, const TimeSeriesDataset& labeled) {
    auto p = predict(net, labeled);
    return metrics::rmse(p, labeled.power);
}

/// First `fraction` of the labeled records in time order, and the rest.
inline std::pair<TimeSeriesDataset, TimeSeriesDataset> chronological_split(const TimeSeriesDataset& ds,
                                                                           double holdout_fraction) {
    auto labeled = labeled_only(ds);
    auto n = labeled.size();
    auto n_hold = static_cast<std::size_t>(std::floor(holdout_fraction * static_cast<double>(n)));
    if (n >= 2) n_hold = std::clamp<std::size_t>(n_hold, 1, n - 1);
    else n_hold = 0;
    if (n == 0) return {labeled, labeled};
    Instant cut = labeled.timestamps[n - n_hold - 1] + Hours{1};
    if (n_hold == 0) cut = labeled.timestamps.back() + Hours{1};
    return {slice(labeled, labeled.timestamps.front(), cut), slice(labeled, cut, labeled.timestamps.back() + Hours{1})};
}

// ============================================================================
// Replica ensembles and pseudo-labels
// ============================================================================

/// Several regressors trained on the same task with different seeds, plus the
/// disagreement scale used to turn replica spread into a confidence.
struct ReplicaEnsemble {
    std::string model_id;
    std::vector<DenseNetwork> replicas;
    double s_max = 1e-12; // 95th percentile of replica std on the source validation set
};

inline constexpr double kSpreadFloor = 1e-12;

/// Per-record replica predictions, rows = records, cols = replicas.
inline Matrix replica_predictions(const std::vector<DenseNetwork>& replicas, const Matrix& inputs) {
    Matrix out(inputs.rows(), static_cast<Eigen::Index>(replicas.size()));
    for (std::size_t b = 0; b < replicas.size(); ++b)
        out.col(static_cast<Eigen::Index>(b)) = nnet::forward_batch(replicas[b], inputs).col(0);
    return out;
}

/// Population standard deviation across replicas, per record.
inline Eigen::VectorXd replica_spread(const Matrix& predictions) {
    Eigen::VectorXd mean = predictions.rowwise().mean();
    return ((predictions.colwise() - mean).array().square().rowwise().mean()).sqrt().matrix();
}

inline ReplicaEnsemble calibrate_replicas(std::string model_id, std::vector<DenseNetwork> replicas,
                                          const TimeSeriesDataset& source_validation) {
    if (replicas.size() < 2) throw ValidationError("replica ensemble needs at least 2 replicas");
    ReplicaEnsemble ens{std::move(model_id), std::move(replicas), kSpreadFloor};
    if (!source_validation.empty()) {
        Eigen::VectorXd spread = replica_spread(replica_predictions(ens.replicas, nnet::input_matrix(source_validation)));
        ens.s_max = std::max(kSpreadFloor, metrics::quantile({spread.data(), spread.data() + spread.size()}, 0.95));
    }
    return ens;
}

inline std::vector<double> ensemble_mean(const ReplicaEnsemble& ens, const TimeSeriesDataset& ds) {
    if (ds.empty()) return {};
    Eigen::VectorXd m = replica_predictions(ens.replicas, nnet::input_matrix(ds)).rowwise().mean();
    return {m.data(), m.data() + m.size()};
}

/// Trains `count` replicas on the chronological head of a farm's labeled
/// history and calibrates their spread on the held-out tail.
inline ReplicaEnsemble train_replicas(const TimeSeriesDataset& history, const RegressorShape& shape,
                                      std::size_t count, const TrainConfig& cfg) {
    if (count < 2) throw ValidationError("train_replicas: need at least 2 replicas");
    auto [fit_part, calibration] = chronological_split(history, cfg.validation_fraction);
    if (fit_part.empty()) throw nnet::TrainingError("train_replicas: '" + history.farm_id + "' has no labels");
    std::vector<DenseNetwork> replicas(count);
    parallel_for(count, [&](std::size_t b) {
        TrainConfig c = cfg;
        c.seed = synth::mix_seed(cfg.seed, 7919 * (b + 1));
        replicas[b] = nnet::train(make_regressor(kModelInputCount, shape, c.seed), fit_part, c).network;
    });
    return calibrate_replicas(history.farm_id, std::move(replicas), calibration);
}

struct PseudoLabeledDataset {
    TimeSeriesDataset base;          // power filled with ensemble-mean predictions
    std::vector<double> confidence;  // per record, in [0, 1]
    std::string source_model_id;
};

/// Mean replica prediction as the label; confidence 1 - clamp(std / s_max, 0, 1).
inline PseudoLabeledDataset pseudo_label(const ReplicaEnsemble& ens, const TimeSeriesDataset& target_nwp) {
    if (ens.replicas.size() < 2) throw ValidationError("pseudo_label: need at least 2 replicas");
    if (target_nwp.labeled_count() > 0) throw ValidationError("pseudo_label: target dataset must be unlabeled");
    PseudoLabeledDataset out;
    out.base = without_power(target_nwp);
    out.source_model_id = ens.model_id;
    if (target_nwp.empty()) return out;
    Matrix preds = replica_predictions(ens.replicas, nnet::input_matrix(target_nwp));
    Eigen::VectorXd mean = preds.rowwise().mean();
    Eigen::VectorXd spread = replica_spread(preds);
    const double scale = std::max(ens.s_max, kSpreadFloor);
    out.base.power.resize(out.base.size());
    out.confidence.resize(out.base.size());
    for (std::size_t i = 0; i < out.base.size(); ++i) {
        auto r = static_cast<Eigen::Index>(i);
        out.base.power[i] = std::clamp(mean[r], 0.0, 1.0);
        out.confidence[i] = 1.0 - std::clamp(spread[r] / scale, 0.0, 1.0);
    }
    return out;
}

/// Pseudo-labeled records as weighted samples (weight = confidence).
inline Samples weighted_samples(const PseudoLabeledDataset& pl) {
    Samples s = nnet::labeled_samples(pl.base);
    s.weights = Eigen::Map<const Eigen::VectorXd>(pl.confidence.data(), static_cast<Eigen::Index>(pl.confidence.size()));
    return s;
}

// ============================================================================
// WP1: no target history
// ============================================================================

/// Pseudo-labels the target's NWP with the rank-1 source's replicas and trains
/// a fresh regressor on it, weighting each record by its confidence.
inline DenseNetwork train_wp1_naive(const preselect::SimilarityRanking& ranking,
                                    const std::map<std::string, ReplicaEnsemble>& source_models,
                                    const TimeSeriesDataset& target_nwp, const RegressorShape& shape,
                                    const TrainConfig& cfg) {
    if (ranking.entries.empty()) throw ValidationError("train_wp1_naive: empty ranking");
    const auto& best = ranking.entries.front().source_farm_id;
    auto it = source_models.find(best);
    if (it == source_models.end()) throw ValidationError("train_wp1_naive: no model for source '" + best + "'");
    auto pl = pseudo_label(it->second, target_nwp);
    Samples s = weighted_samples(pl);
    if (s.size() == 0 || !(s.weights.sum() > 0.0)) throw nnet::TrainingError("no usable pseudo-labels");
    DenseNetwork net = make_regressor(kModelInputCount, shape, cfg.seed);
    net.input_scaling = nnet::Standardizer::fit(s.inputs);
    return nnet::train(std::move(net), s, cfg).network;
}

// ============================================================================
// WP1: autoencoder representation + universal regressor
// ============================================================================

struct UniversalOptions {
    std::size_t autoencoder_hidden = 16;
    RegressorShape regressor{{16}};
};

struct UniversalModel {
    DenseNetwork encoder;   // carries the pooled input standardization
    DenseNetwork regressor; // code -> power
    double reconstruction_mse = 0.0;
};

inline std::vector<double> predict(const UniversalModel& m, const TimeSeriesDataset& ds) {
    if (ds.empty()) return {};
    Matrix codes = nnet::forward_batch(m.encoder, nnet::input_matrix(ds));
    Matrix out = nnet::forward_batch(m.regressor, codes);
    return {out.data(), out.data() + out.rows()};
}

/// Autoencoder on the pooled, standardized features of all sources; regressor
/// on (code, power) pooled over sources.
inline UniversalModel train_universal(std::span<const TimeSeriesDataset> sources, std::size_t code_dim,
                                      const TrainConfig& cfg, const UniversalOptions& opts = {}) {
    if (sources.size() < 2) throw ValidationError("train_universal: need at least 2 source datasets");
    Samples pooled;
    for (const auto& s : sources) pooled = nnet::concat(pooled, nnet::labeled_samples(s));
    if (pooled.size() == 0) throw nnet::TrainingError("train_universal: sources carry no labels");

    auto scaling = nnet::Standardizer::fit(pooled.inputs);
    nnet::AutoencoderShape shape;
    shape.hidden = opts.autoencoder_hidden;
    auto ae = nnet::train_autoencoder(scaling.apply(pooled.inputs), code_dim, cfg, shape);

    UniversalModel m;
    m.encoder = std::move(ae.encoder);
    m.encoder.input_scaling = scaling;
    m.reconstruction_mse = ae.reconstruction_mse;

    Samples coded{nnet::forward_batch(m.encoder, pooled.inputs), pooled.targets, {}};
    TrainConfig rc = cfg;
    rc.seed = synth::mix_seed(cfg.seed, 17);
    m.regressor = make_regressor(code_dim, opts.regressor, rc.seed);
    m.regressor.input_scaling = nnet::Standardizer::fit(coded.inputs);
    m.regressor = nnet::train(std::move(m.regressor), coded, rc).network;
    return m;
}

// ============================================================================
// WP2: self-training
// ============================================================================

struct SelfTrainOptions {
    double conf_threshold = 0.9;
    std::size_t max_rounds = 3;
    std::size_t replicas = 5;
    double holdout_fraction = 0.2; // chronological tail of the labeled data used as guard
};

struct SelfTrainResult {
    DenseNetwork model;
    double labeled_only_rmse = 0.0; // on the guard split
    double final_rmse = 0.0;
    std::size_t rounds = 0;
    std::size_t admitted = 0;
};

/// Finetunes `base` on labeled data, then repeatedly: finetune replicas on the
/// labeled + admitted pool, pseudo-label the remaining unlabeled records,
/// admit those with confidence >= threshold, retrain. Stops when nothing new
/// qualifies, after max_rounds, or when the guard-split RMSE worsens; the
/// best-so-far model is returned, so the result never underperforms the
/// labeled-only model on the guard split.
inline SelfTrainResult self_train(const DenseNetwork& base, const TimeSeriesDataset& labeled,
                                  const TimeSeriesDataset& unlabeled, const TrainConfig& cfg,
                                  const SelfTrainOptions& opts = {}) {
    if (labeled.labeled_count() == 0) throw ValidationError("self_train: labeled set is empty");
    if (!(opts.conf_threshold > 0.0 && opts.conf_threshold <= 1.0))
        throw ValidationError("self_train: conf_threshold must lie in (0, 1]");
    if (opts.replicas < 2) throw ValidationError("self_train: need at least 2 replicas");

    auto [fit_part, guard] = chronological_split(labeled, opts.holdout_fraction);
    if (guard.empty()) guard = fit_part;
    const Samples labeled_samples = nnet::labeled_samples(fit_part);
    const std::vector<bool> unfrozen(base.layer_count(), false);

    auto tune = [&](const Samples& data, std::uint64_t seed) {
        TrainConfig c = cfg;
        c.seed = seed;
        DenseNetwork start = base;
        if (!start.input_scaling.fitted()) start.input_scaling = nnet::Standardizer::fit(labeled_samples.inputs);
        return nnet::finetune(std::move(start), data, unfrozen, c);
    };

    SelfTrainResult result;
    result.model = tune(labeled_samples, cfg.seed);
    result.labeled_only_rmse = dataset_rmse(result.model, guard);
    result.final_rmse = result.labeled_only_rmse;

    TimeSeriesDataset remaining = without_power(unlabeled);
    Samples admitted;
    for (std::size_t round = 1; round <= opts.max_rounds && !remaining.empty(); ++round) {
        const Samples pool = nnet::concat(labeled_samples, admitted);
        std::vector<DenseNetwork> replicas(opts.replicas);
        parallel_for(opts.replicas, [&](std::size_t b) {
            replicas[b] = tune(pool, synth::mix_seed(cfg.seed, 1000 * round + b + 1));
        });
        auto ens = calibrate_replicas(labeled.farm_id, std::move(replicas), guard);
        auto pl = pseudo_label(ens, remaining);

        TimeSeriesDataset rest = remaining;
        rest.timestamps.clear();
        rest.features.clear();
        rest.lead_time.clear();
        std::vector<Eigen::Index> take;
        for (std::size_t i = 0; i < pl.base.size(); ++i) {
            if (pl.confidence[i] >= opts.conf_threshold) {
                take.push_back(static_cast<Eigen::Index>(i));
            } else {
                rest.timestamps.push_back(remaining.timestamps[i]);
                rest.features.push_back(remaining.features[i]);
                rest.lead_time.push_back(remaining.lead_time[i]);
            }
        }
        if (take.empty()) break;
        admitted = nnet::concat(admitted, nnet::take_rows(weighted_samples(pl), take));
        remaining = std::move(rest);
        result.rounds = round;

        DenseNetwork candidate = tune(nnet::concat(labeled_samples, admitted), cfg.seed);
        double candidate_rmse = dataset_rmse(candidate, guard);
        if (candidate_rmse > result.final_rmse) break;
        result.model = std::move(candidate);
        result.final_rmse = candidate_rmse;
        result.admitted = static_cast<std::size_t>(admitted.size());
    }
    return result;
}

} // namespace windtl::transfer
