// Parameter sharing across farms and weather models: hard-parameter-sharing
// MTL (shared trunk, one head per farm) and multi-cross-learning (per-NWP
// adapters, shared trunk, spatial abstraction layer, per-farm heads).
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "windtl/nnet.hpp"
#include "windtl/synthdata.hpp"

namespace windtl::mtl {

using nnet::Activation;
using nnet::DenseNetwork;
using nnet::Matrix;
using nnet::Samples;
using nnet::TrainConfig;
using nnet::Vector;

/// Stack of dense layers: `hidden` activation on every layer but the last.
inline DenseNetwork make_stack(std::size_t input_dim, const std::vector<std::size_t>& widths, Activation hidden,
                               Activation last, std::uint64_t seed) {
    std::vector<std::size_t> dims{input_dim};
    dims.insert(dims.end(), widths.begin(), widths.end());
    std::vector<Activation> acts(widths.size(), hidden);
    if (!acts.empty()) acts.back() = last;
    return nnet::init_network(std::span<const std::size_t>(dims), std::span<const Activation>(acts), seed);
}

/// Layers of several stages joined into one network; scaling from the first.
inline DenseNetwork join(std::initializer_list<const DenseNetwork*> stages) {
    DenseNetwork out;
    for (const auto* s : stages) {
        out.layers.insert(out.layers.end(), s->layers.begin(), s->layers.end());
        out.freeze_mask.insert(out.freeze_mask.end(), s->freeze_mask.begin(), s->freeze_mask.end());
    }
    out.input_scaling = (*stages.begin())->input_scaling;
    out.seed = (*stages.begin())->seed;
    return out;
}

// ============================================================================
// Chain training
// ============================================================================

/// One task: samples fed through a chain of networks. Only the first stage's
/// input scaling is applied. With `lambda > 0` and a partner chain, the output
/// of stage `abstraction_depth - 1` is pulled towards the partner chain's
/// output on row-aligned partner inputs.
struct ChainRoute {
    std::vector<DenseNetwork*> stages;
    Samples data;

    std::vector<DenseNetwork*> partner;
    Matrix partner_inputs;                  // raw inputs of the partner chain
    std::vector<Eigen::Index> partner_row;  // per data row, -1 = unaligned
    std::size_t abstraction_depth = 0;
    double lambda = 0.0;

    bool has_consistency() const { return lambda > 0.0 && !partner.empty() && abstraction_depth > 0; }
};

namespace detail {

inline std::vector<nnet::ForwardTrace> trace_chain(const std::vector<DenseNetwork*>& stages, Matrix x) {
    std::vector<nnet::ForwardTrace> traces;
    traces.reserve(stages.size());
    for (const auto* s : stages) {
        traces.push_back(nnet::trace_standardized(*s, std::move(x)));
        x = traces.back().output();
    }
    return traces;
}

inline Matrix chain_output(const std::vector<DenseNetwork*>& stages, Matrix x) {
    for (const auto* s : stages) x = nnet::trace_standardized(*s, std::move(x)).output();
    return x;
}

using GradientSink = std::unordered_map<DenseNetwork*, std::vector<nnet::LayerGradient>>;

inline void accumulate(GradientSink& sink, DenseNetwork* net, std::vector<nnet::LayerGradient>&& g) {
    auto [it, fresh] = sink.try_emplace(net, std::move(g));
    if (fresh) return;
    for (std::size_t l = 0; l < g.size(); ++l) {
        if (g[l].weights.size() == 0) continue;
        if (it->second[l].weights.size() == 0) {
            it->second[l] = std::move(g[l]);
        } else {
            it->second[l].weights += g[l].weights;
            it->second[l].bias += g[l].bias;
        }
    }
}

/// Backprop `d` from the last stage down to stage 0, adding `inject` at the
/// output of stage `inject_at` when given.
inline void backprop_chain(const std::vector<DenseNetwork*>& stages, const std::vector<nnet::ForwardTrace>& traces,
                           Matrix d, GradientSink& sink, const Matrix* inject = nullptr, std::size_t inject_at = 0) {
    for (std::size_t k = stages.size(); k-- > 0;) {
        if (inject && k == inject_at) d += *inject;
        auto g = nnet::backward(*stages[k], traces[k], d);
        accumulate(sink, stages[k], std::move(g.layers));
        if (k > 0) d = std::move(g.input);
    }
}

} // namespace detail

/// Round-robin multi-task SGD with momentum. Each epoch runs as many steps as
/// the largest route has batches; at each step every route, in order, takes
/// one mini-batch step on its own networks (a route that runs out reshuffles).
/// Early stopping on the mean validation loss restores the best weights of
/// every network involved. A single route follows `nnet::train` exactly.
inline nnet::TrainHistory train_chains(std::vector<ChainRoute>& routes, const TrainConfig& cfg) {
    nnet::validate(cfg);
    if (routes.empty()) throw ValidationError("train_chains: no routes");

    std::vector<DenseNetwork*> nets;
    auto remember = [&](DenseNetwork* n) {
        if (std::find(nets.begin(), nets.end(), n) == nets.end()) nets.push_back(n);
    };
    for (auto& r : routes) {
        if (r.stages.empty()) throw ValidationError("train_chains: empty route");
        if (r.data.size() == 0) throw nnet::TrainingError("train_chains: route without samples");
        if (!r.data.targets.allFinite()) throw nnet::TrainingError("train_chains: non-finite labels");
        for (std::size_t k = 0; k < r.stages.size(); ++k) {
            nnet::validate(*r.stages[k]);
            std::size_t want = k == 0 ? static_cast<std::size_t>(r.data.inputs.cols()) : r.stages[k - 1]->output_dim();
            if (r.stages[k]->input_dim() != want) throw ValidationError("train_chains: stage dimensions do not chain");
            remember(r.stages[k]);
        }
        if (r.stages.back()->output_dim() != static_cast<std::size_t>(r.data.targets.cols()))
            throw ValidationError("train_chains: target width differs from chain output");
        if (r.has_consistency()) {
            if (r.partner_row.size() != static_cast<std::size_t>(r.data.size()))
                throw ValidationError("train_chains: partner alignment length mismatch");
            for (auto* p : r.partner) remember(p);
        }
    }

    struct RouteState {
        std::mt19937_64 rng;
        std::vector<Eigen::Index> train_idx, val_idx;
        Matrix x_std, partner_std;
        std::size_t cursor = 0;
    };
    std::vector<RouteState> state(routes.size());
    for (std::size_t r = 0; r < routes.size(); ++r) {
        auto& s = state[r];
        s.rng.seed(r == 0 ? cfg.seed : synth::mix_seed(cfg.seed, r));
        std::tie(s.train_idx, s.val_idx) = nnet::split_indices(routes[r].data.size(), cfg.validation_fraction, s.rng);
        s.x_std = routes[r].stages.front()->input_scaling.apply(routes[r].data.inputs);
        if (routes[r].has_consistency())
            s.partner_std = routes[r].partner.front()->input_scaling.apply(routes[r].partner_inputs);
    }

    nnet::TrainHistory history;
    bool all_frozen = std::all_of(nets.begin(), nets.end(), [](const DenseNetwork* n) {
        return std::all_of(n->freeze_mask.begin(), n->freeze_mask.end(), [](bool f) { return f; });
    });
    if (all_frozen || cfg.epochs == 0) return history;

    std::unordered_map<DenseNetwork*, nnet::Momentum> opt;
    for (auto* n : nets) opt.emplace(n, nnet::Momentum(*n));
    std::vector<DenseNetwork> best;
    for (auto* n : nets) best.push_back(*n);
    const bool any_validation =
        std::any_of(state.begin(), state.end(), [](const RouteState& s) { return !s.val_idx.empty(); });
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;

    std::size_t steps = 0;
    for (const auto& s : state)
        steps = std::max(steps, (s.train_idx.size() + cfg.batch_size - 1) / cfg.batch_size);

    Matrix d_out;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (auto& s : state) {
            std::shuffle(s.train_idx.begin(), s.train_idx.end(), s.rng);
            s.cursor = 0;
        }
        double loss_sum = 0.0, weight_sum = 0.0;
        for (std::size_t step = 0; step < steps; ++step) {
            for (std::size_t r = 0; r < routes.size(); ++r) {
                auto& route = routes[r];
                auto& s = state[r];
                if (s.train_idx.empty()) continue;
                if (s.cursor >= s.train_idx.size()) {
                    std::shuffle(s.train_idx.begin(), s.train_idx.end(), s.rng);
                    s.cursor = 0;
                }
                std::size_t stop = std::min(s.train_idx.size(), s.cursor + cfg.batch_size);
                std::vector<Eigen::Index> batch(s.train_idx.begin() + static_cast<std::ptrdiff_t>(s.cursor),
                                                s.train_idx.begin() + static_cast<std::ptrdiff_t>(stop));
                s.cursor = stop;

                const bool weighted = route.data.weights.size() > 0;
                Vector wb;
                if (weighted) wb = route.data.weights(batch);
                auto traces = detail::trace_chain(route.stages, s.x_std(batch, Eigen::all));
                double loss = nnet::mse_loss(traces.back().output(), route.data.targets(batch, Eigen::all),
                                             weighted ? &wb : nullptr, d_out);
                if (!std::isfinite(loss))
                    throw nnet::TrainingError("train: loss became non-finite at epoch " + std::to_string(epoch) +
                                              " (learning_rate=" + std::to_string(cfg.learning_rate) + ")");
                double bw = weighted ? wb.sum() : static_cast<double>(batch.size());
                loss_sum += loss * bw;
                weight_sum += bw;

                detail::GradientSink sink;
                if (route.has_consistency()) {
                    std::vector<Eigen::Index> own, other;
                    for (std::size_t i = 0; i < batch.size(); ++i) {
                        auto p = route.partner_row[static_cast<std::size_t>(batch[i])];
                        if (p < 0) continue;
                        own.push_back(static_cast<Eigen::Index>(i));
                        other.push_back(p);
                    }
                    if (!own.empty()) {
                        const Matrix& z = traces[route.abstraction_depth - 1].output();
                        auto partner_traces = detail::trace_chain(route.partner, s.partner_std(other, Eigen::all));
                        Matrix diff = z(own, Eigen::all) - partner_traces.back().output();
                        const double scale =
                            2.0 * route.lambda / (static_cast<double>(batch.size()) * static_cast<double>(z.cols()));
                        Matrix inject = Matrix::Zero(z.rows(), z.cols());
                        inject(own, Eigen::all) = diff * scale;
                        detail::backprop_chain(route.stages, traces, d_out, sink, &inject,
                                               route.abstraction_depth - 1);
                        detail::backprop_chain(route.partner, partner_traces, -diff * scale, sink);
                    } else {
                        detail::backprop_chain(route.stages, traces, d_out, sink);
                    }
                } else {
                    detail::backprop_chain(route.stages, traces, d_out, sink);
                }
                for (auto* n : nets) {
                    auto it = sink.find(n);
                    if (it == sink.end()) continue;
                    nnet::Gradients g;
                    g.layers = std::move(it->second);
                    opt.at(n).step(*n, g, cfg.learning_rate, cfg.momentum, cfg.l2);
                }
            }
        }
        history.train_loss.push_back(weight_sum > 0.0 ? loss_sum / weight_sum : 0.0);

        if (!any_validation) continue;
        double val_sum = 0.0;
        std::size_t val_routes = 0;
        for (std::size_t r = 0; r < routes.size(); ++r) {
            const auto& s = state[r];
            if (s.val_idx.empty()) continue;
            const auto& data = routes[r].data;
            Vector wv;
            if (data.weights.size() > 0) wv = data.weights(s.val_idx);
            val_sum += nnet::mse_loss(detail::chain_output(routes[r].stages, s.x_std(s.val_idx, Eigen::all)),
                                      data.targets(s.val_idx, Eigen::all), wv.size() > 0 ? &wv : nullptr);
            ++val_routes;
        }
        double val_loss = val_sum / static_cast<double>(val_routes);
        if (!std::isfinite(val_loss))
            throw nnet::TrainingError("train: validation loss became non-finite at epoch " + std::to_string(epoch));
        history.validation_loss.push_back(val_loss);
        if (val_loss < best_val) {
            best_val = val_loss;
            for (std::size_t i = 0; i < nets.size(); ++i) best[i] = *nets[i];
            since_best = 0;
        } else if (cfg.early_stop_patience > 0 && ++since_best >= cfg.early_stop_patience) {
            break;
        }
    }
    if (any_validation)
        for (std::size_t i = 0; i < nets.size(); ++i) *nets[i] = std::move(best[i]);
    return history;
}

// ============================================================================
// Hard parameter sharing
// ============================================================================

struct MtlShape {
    std::vector<std::size_t> trunk{64, 64};
    std::vector<std::size_t> head_hidden{16};
};

struct MtlNetwork {
    DenseNetwork trunk;                        // carries the input scaling
    std::map<std::string, DenseNetwork> heads; // farm id -> output layers

    std::size_t input_dim() const { return trunk.input_dim(); }
    std::size_t trunk_out_dim() const { return trunk.output_dim(); }
};

inline void validate(const MtlNetwork& m) {
    nnet::validate(m.trunk);
    if (m.heads.empty()) throw ValidationError("mtl network has no heads");
    for (const auto& [id, h] : m.heads) {
        nnet::validate(h);
        if (h.input_dim() != m.trunk_out_dim()) throw ValidationError("head '" + id + "' does not fit the trunk");
    }
}

inline std::uint64_t part_seed(std::uint64_t seed, std::string_view part) {
    return synth::mix_seed(seed, synth::stable_hash(part));
}

inline DenseNetwork make_head(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::uint64_t seed) {
    auto widths = hidden;
    widths.push_back(1);
    return make_stack(input_dim, widths, Activation::tanh, Activation::sigmoid, seed);
}

/// Trunk followed by the farm's head as one network.
inline DenseNetwork compose(const MtlNetwork& m, const std::string& farm_id) {
    auto it = m.heads.find(farm_id);
    if (it == m.heads.end()) throw ValidationError("mtl: unknown farm '" + farm_id + "'");
    return join({&m.trunk, &it->second});
}

inline std::vector<double> predict(const MtlNetwork& m, const std::string& farm_id, const TimeSeriesDataset& ds) {
    if (ds.empty()) return {};
    auto it = m.heads.find(farm_id);
    if (it == m.heads.end()) throw ValidationError("mtl: unknown farm '" + farm_id + "'");
    Matrix out = nnet::forward_batch(it->second, nnet::forward_batch(m.trunk, nnet::input_matrix(ds)));
    return {out.data(), out.data() + out.rows()};
}

/// One trunk and one head per source, trained jointly with farm-level
/// round-robin mini-batches.
inline MtlNetwork train_mtl(std::span<const TimeSeriesDataset> sources, const MtlShape& shape, const TrainConfig& cfg) {
    if (sources.size() < 2) throw ValidationError("train_mtl: need at least 2 sources");
    std::map<std::string, const TimeSeriesDataset*> by_id;
    for (const auto& s : sources)
        if (!by_id.emplace(s.farm_id, &s).second) throw ValidationError("train_mtl: duplicate farm id '" + s.farm_id + "'");
    if (shape.trunk.empty()) throw ValidationError("train_mtl: trunk needs at least one layer");

    MtlNetwork m;
    m.trunk = make_stack(kModelInputCount, shape.trunk, Activation::tanh, Activation::tanh, part_seed(cfg.seed, "trunk"));
    std::map<std::string, Samples> samples;
    Samples pooled;
    for (const auto& [id, ds] : by_id) {
        samples[id] = nnet::labeled_samples(*ds);
        if (samples[id].size() == 0) throw nnet::TrainingError("train_mtl: source '" + id + "' has no labels");
        pooled = nnet::concat(pooled, samples[id]);
        m.heads[id] = make_head(m.trunk_out_dim(), shape.head_hidden, part_seed(cfg.seed, "head:" + id));
    }
    m.trunk.input_scaling = nnet::Standardizer::fit(pooled.inputs);

    std::vector<ChainRoute> routes;
    for (auto& [id, head] : m.heads) {
        ChainRoute r;
        r.stages = {&m.trunk, &head};
        r.data = std::move(samples[id]);
        routes.push_back(std::move(r));
    }
    train_chains(routes, cfg);
    return m;
}

enum class HeadInit { random, best_existing };

/// Adds a head for a new farm and trains it on `data`. The head starts either
/// from a seeded random init or from a copy of the existing head with the
/// lowest error on `data`. Existing heads are never touched; with
/// `freeze_trunk` the trunk is left bitwise unchanged too.
inline MtlNetwork add_task_head(MtlNetwork m, const std::string& farm_id, const TimeSeriesDataset& data,
                                const TrainConfig& cfg, bool freeze_trunk, HeadInit init = HeadInit::best_existing,
                                const MtlShape& shape = {}) {
    if (m.heads.count(farm_id)) throw ValidationError("add_task_head: farm '" + farm_id + "' already has a head");
    Samples s = nnet::labeled_samples(data);
    if (s.size() == 0) throw ValidationError("add_task_head: no labeled records");
    DenseNetwork head = make_head(m.trunk_out_dim(), shape.head_hidden, part_seed(cfg.seed, "head:" + farm_id));
    if (init == HeadInit::best_existing && !m.heads.empty()) {
        Matrix codes = nnet::forward_batch(m.trunk, s.inputs);
        double best = std::numeric_limits<double>::infinity();
        for (const auto& [id, h] : m.heads) {
            double e = nnet::mse_loss(nnet::forward_batch(h, codes), s.targets);
            if (e < best) {
                best = e;
                head = h;
            }
        }
        head.freeze_mask.assign(head.layer_count(), false);
        head.seed = part_seed(cfg.seed, "head:" + farm_id);
    }
    if (freeze_trunk) {
        Samples coded{nnet::forward_batch(m.trunk, s.inputs), s.targets, s.weights};
        head = nnet::train(std::move(head), coded, cfg).network;
    } else {
        std::vector<ChainRoute> routes(1);
        routes[0].stages = {&m.trunk, &head};
        routes[0].data = std::move(s);
        train_chains(routes, cfg);
    }
    m.heads.emplace(farm_id, std::move(head));
    return m;
}

inline nlohmann::json to_json(const MtlNetwork& m) {
    nlohmann::json heads = nlohmann::json::object();
    for (const auto& [id, h] : m.heads) heads[id] = nnet::to_json(h);
    return {{"format", "windtl.mtl_network"}, {"version", 1}, {"trunk", nnet::to_json(m.trunk)}, {"heads", heads}};
}

inline MtlNetwork mtl_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "windtl.mtl_network") throw ValidationError("not a windtl.mtl_network document");
    MtlNetwork m;
    m.trunk = nnet::network_from_json(j.at("trunk"));
    for (const auto& [id, h] : j.at("heads").items()) m.heads[id] = nnet::network_from_json(h);
    validate(m);
    return m;
}

// ============================================================================
// Multi-cross-learning
// ============================================================================

struct MultiCrossShape {
    std::vector<std::size_t> adapter_hidden{16};
    std::size_t abstraction = 16;
    std::vector<std::size_t> trunk{32};
    std::size_t spatial = 32;
    std::vector<std::size_t> head_hidden{16};
};

struct MultiCrossNetwork {
    std::map<std::string, DenseNetwork> adapters; // NWP model id -> adapter with its own input scaling
    DenseNetwork trunk;
    DenseNetwork spatial;                          // shared farm-embedding combiner
    std::map<std::string, DenseNetwork> heads;     // farm id -> output layers
};

inline void validate(const MultiCrossNetwork& m) {
    if (m.adapters.empty() || m.heads.empty()) throw ValidationError("multicross network needs adapters and heads");
    nnet::validate(m.trunk);
    nnet::validate(m.spatial);
    for (const auto& [id, a] : m.adapters) {
        nnet::validate(a);
        if (a.output_dim() != m.trunk.input_dim()) throw ValidationError("adapter '" + id + "' does not fit the trunk");
    }
    if (m.spatial.input_dim() != m.trunk.output_dim()) throw ValidationError("spatial layer does not fit the trunk");
    for (const auto& [id, h] : m.heads) {
        nnet::validate(h);
        if (h.input_dim() != m.spatial.output_dim()) throw ValidationError("head '" + id + "' does not fit");
    }
}

/// (NWP model id, farm id) -> labeled dataset.
using MultiCrossData = std::map<std::pair<std::string, std::string>, TimeSeriesDataset>;

inline DenseNetwork make_adapter(const MultiCrossShape& shape, std::uint64_t seed, const std::string& nwp_id) {
    auto widths = shape.adapter_hidden;
    widths.push_back(shape.abstraction);
    return make_stack(kModelInputCount, widths, Activation::tanh, Activation::tanh, part_seed(seed, "adapter:" + nwp_id));
}

inline MultiCrossNetwork init_multicross(const std::vector<std::string>& nwp_ids, const std::vector<std::string>& farm_ids,
                                         const MultiCrossShape& shape, std::uint64_t seed) {
    if (nwp_ids.empty() || farm_ids.empty()) throw ValidationError("init_multicross: need >= 1 NWP model and farm");
    MultiCrossNetwork m;
    for (const auto& id : nwp_ids) m.adapters[id] = make_adapter(shape, seed, id);
    m.trunk = make_stack(shape.abstraction, shape.trunk, Activation::tanh, Activation::tanh, part_seed(seed, "trunk"));
    m.spatial = make_stack(m.trunk.output_dim(), {shape.spatial}, Activation::tanh, Activation::tanh,
                           part_seed(seed, "spatial"));
    for (const auto& id : farm_ids) m.heads[id] = make_head(shape.spatial, shape.head_hidden, part_seed(seed, "head:" + id));
    return m;
}

/// adapter(nwp) -> trunk -> spatial -> head(farm) as one network.
inline DenseNetwork compose(const MultiCrossNetwork& m, const std::string& nwp_id, const std::string& farm_id) {
    auto a = m.adapters.find(nwp_id);
    auto h = m.heads.find(farm_id);
    if (a == m.adapters.end()) throw ValidationError("multicross: unknown NWP model '" + nwp_id + "'");
    if (h == m.heads.end()) throw ValidationError("multicross: unknown farm '" + farm_id + "'");
    return join({&a->second, &m.trunk, &m.spatial, &h->second});
}

inline std::vector<double> predict(const MultiCrossNetwork& m, const std::string& nwp_id, const std::string& farm_id,
                                   const TimeSeriesDataset& ds) {
    if (ds.empty()) return {};
    Matrix out = nnet::forward_batch(compose(m, nwp_id, farm_id), nnet::input_matrix(ds));
    return {out.data(), out.data() + out.rows()};
}

/// Shared abstraction trunk(adapter(x)) for every record.
inline Matrix abstraction(const MultiCrossNetwork& m, const std::string& nwp_id, const TimeSeriesDataset& ds) {
    auto a = m.adapters.find(nwp_id);
    if (a == m.adapters.end()) throw ValidationError("multicross: unknown NWP model '" + nwp_id + "'");
    return nnet::forward_batch(m.trunk, nnet::forward_batch(a->second, nnet::input_matrix(ds)));
}

/// Row indices into `b` for each record of `a` with the same timestamp, -1 if none.
inline std::vector<Eigen::Index> align_rows(const TimeSeriesDataset& a, const TimeSeriesDataset& b) {
    std::map<Instant, Eigen::Index> where;
    for (std::size_t i = 0; i < b.size(); ++i) where.emplace(b.timestamps[i], static_cast<Eigen::Index>(i));
    std::vector<Eigen::Index> out;
    out.reserve(a.size());
    for (auto t : a.timestamps) {
        auto it = where.find(t);
        out.push_back(it == where.end() ? -1 : it->second);
    }
    return out;
}

/// Mean squared distance between abstractions of timestamp-aligned records
/// of the same farm under different NWP models, over all model pairs.
inline double abstraction_gap(const MultiCrossNetwork& m, const MultiCrossData& data) {
    double total = 0.0;
    std::size_t pairs = 0;
    for (auto i = data.begin(); i != data.end(); ++i) {
        for (auto j = std::next(i); j != data.end(); ++j) {
            if (i->first.second != j->first.second || i->first.first == j->first.first) continue;
            if (!m.adapters.count(i->first.first) || !m.adapters.count(j->first.first)) continue;
            auto rows = align_rows(i->second, j->second);
            Matrix za = abstraction(m, i->first.first, i->second);
            Matrix zb = abstraction(m, j->first.first, j->second);
            for (std::size_t r = 0; r < rows.size(); ++r) {
                if (rows[r] < 0) continue;
                total += (za.row(static_cast<Eigen::Index>(r)) - zb.row(rows[r])).squaredNorm();
                ++pairs;
            }
        }
    }
    if (pairs == 0) throw ValidationError("abstraction_gap: no aligned records across NWP models");
    return total / static_cast<double>(pairs);
}

struct MultiCrossFit {
    MultiCrossNetwork network;
    nnet::TrainHistory history;
    std::vector<std::string> warnings;
};

namespace detail {

/// Routes for every (nwp, farm) dataset; consistency partners are the next
/// model id (cyclically) with data for the same farm among `partners`.
inline std::vector<ChainRoute> multicross_routes(MultiCrossNetwork& m, const MultiCrossData& data, double lambda,
                                                 const MultiCrossData& partners,
                                                 const std::vector<std::string>& route_models) {
    std::vector<ChainRoute> routes;
    for (const auto& [key, ds] : data) {
        const auto& [nwp_id, farm_id] = key;
        if (std::find(route_models.begin(), route_models.end(), nwp_id) == route_models.end()) continue;
        auto labeled = labeled_only(ds);
        if (labeled.empty()) continue;
        ChainRoute r;
        r.stages = {&m.adapters.at(nwp_id), &m.trunk, &m.spatial, &m.heads.at(farm_id)};
        r.data = nnet::labeled_samples(labeled);
        if (lambda > 0.0) {
            std::vector<const std::pair<const std::pair<std::string, std::string>, TimeSeriesDataset>*> same_farm;
            for (const auto& entry : partners)
                if (entry.first.second == farm_id && entry.first.first != nwp_id) same_farm.push_back(&entry);
            if (!same_farm.empty()) {
                const auto* pick = same_farm.front();
                for (const auto* e : same_farm)
                    if (e->first.first > nwp_id) {
                        pick = e;
                        break;
                    }
                r.partner = {&m.adapters.at(pick->first.first), &m.trunk};
                r.partner_inputs = nnet::input_matrix(pick->second);
                r.partner_row = align_rows(labeled, pick->second);
                r.abstraction_depth = 2;
                r.lambda = lambda;
            }
        }
        routes.push_back(std::move(r));
    }
    return routes;
}

} // namespace detail

/// Trains `init` on every (nwp, farm) pair jointly: prediction MSE per pair
/// plus lambda times the abstraction distance to another NWP model's view of
/// the same timestamps. Adapter input scaling is fitted on that model's data.
inline MultiCrossFit train_multicross(MultiCrossNetwork init, const MultiCrossData& data, double lambda,
                                      const TrainConfig& cfg) {
    if (!(lambda >= 0.0)) throw ValidationError("train_multicross: lambda must be >= 0");
    if (data.empty()) throw ValidationError("train_multicross: no data");
    MultiCrossFit fit;
    fit.network = std::move(init);
    auto& m = fit.network;
    std::vector<std::string> models;
    for (const auto& [key, ds] : data) {
        if (!m.adapters.count(key.first)) throw ValidationError("train_multicross: no adapter for '" + key.first + "'");
        if (!m.heads.count(key.second)) throw ValidationError("train_multicross: no head for '" + key.second + "'");
        if (std::find(models.begin(), models.end(), key.first) == models.end()) models.push_back(key.first);
    }
    if (models.size() < 2 && lambda > 0.0) {
        fit.warnings.push_back("single NWP model: consistency term skipped");
        lambda = 0.0;
    }
    for (const auto& id : models) {
        Samples pooled;
        for (const auto& [key, ds] : data)
            if (key.first == id) pooled = nnet::concat(pooled, Samples{nnet::input_matrix(ds), {}, {}});
        m.adapters.at(id).input_scaling = nnet::Standardizer::fit(pooled.inputs);
    }
    auto routes = detail::multicross_routes(m, data, lambda, data, models);
    if (routes.empty()) throw nnet::TrainingError("train_multicross: no labeled records");
    fit.history = train_chains(routes, cfg);
    return fit;
}

inline MultiCrossFit train_multicross(const MultiCrossData& data, const MultiCrossShape& shape, double lambda,
                                      const TrainConfig& cfg) {
    std::vector<std::string> nwp_ids, farm_ids;
    for (const auto& [key, ds] : data) {
        if (std::find(nwp_ids.begin(), nwp_ids.end(), key.first) == nwp_ids.end()) nwp_ids.push_back(key.first);
        if (std::find(farm_ids.begin(), farm_ids.end(), key.second) == farm_ids.end()) farm_ids.push_back(key.second);
    }
    return train_multicross(init_multicross(nwp_ids, farm_ids, shape, cfg.seed), data, lambda, cfg);
}

/// Adds an adapter for a new NWP model and trains only that adapter: warm
/// start from the first existing adapter, input scaling refitted on the new
/// model's data, everything else frozen. `reference` supplies existing-model
/// data for the consistency term on aligned timestamps.
inline MultiCrossNetwork adapt_new_nwp(MultiCrossNetwork m, const std::string& new_nwp_id,
                                       const std::map<std::string, TimeSeriesDataset>& new_data, const TrainConfig& cfg,
                                       double lambda = 0.0, const MultiCrossData& reference = {}) {
    if (m.adapters.empty()) throw ValidationError("adapt_new_nwp: network has no adapters");
    if (m.adapters.count(new_nwp_id)) throw ValidationError("adapt_new_nwp: NWP model '" + new_nwp_id + "' exists");
    if (new_data.empty()) throw ValidationError("adapt_new_nwp: no data");

    DenseNetwork adapter = m.adapters.begin()->second;
    Samples pooled;
    for (const auto& [farm, ds] : new_data) {
        if (!m.heads.count(farm)) throw ValidationError("adapt_new_nwp: unknown farm '" + farm + "'");
        pooled = nnet::concat(pooled, Samples{nnet::input_matrix(ds), {}, {}});
    }
    adapter.input_scaling = nnet::Standardizer::fit(pooled.inputs);
    adapter.freeze_mask.assign(adapter.layer_count(), false);
    adapter.seed = part_seed(cfg.seed, "adapter:" + new_nwp_id);

    auto freeze_all = [](DenseNetwork& n) {
        auto saved = n.freeze_mask;
        n.freeze_mask.assign(n.layer_count(), true);
        return saved;
    };
    std::map<DenseNetwork*, std::vector<bool>> saved;
    saved[&m.trunk] = freeze_all(m.trunk);
    saved[&m.spatial] = freeze_all(m.spatial);
    for (auto& [id, h] : m.heads) saved[&h] = freeze_all(h);
    for (auto& [id, a] : m.adapters) saved[&a] = freeze_all(a);
    m.adapters.emplace(new_nwp_id, std::move(adapter));

    MultiCrossData data;
    for (const auto& [farm, ds] : new_data) data[{new_nwp_id, farm}] = ds;
    MultiCrossData partners = reference;
    for (auto it = partners.begin(); it != partners.end();)
        it = m.adapters.count(it->first.first) && it->first.first != new_nwp_id ? std::next(it) : partners.erase(it);
    auto routes = detail::multicross_routes(m, data, partners.empty() ? 0.0 : lambda, partners, {new_nwp_id});
    if (routes.empty()) throw nnet::TrainingError("adapt_new_nwp: no labeled records");
    train_chains(routes, cfg);

    for (auto& [net, mask] : saved) net->freeze_mask = mask;
    return m;
}

/// Adds a head for a new farm on top of the frozen adapters, trunk and spatial
/// layer; `data` maps NWP model id to the farm's labeled records under that
/// model. Starts from the best existing head unless `init` is random.
inline MultiCrossNetwork add_multicross_head(MultiCrossNetwork m, const std::string& farm_id,
                                             const std::map<std::string, TimeSeriesDataset>& data,
                                             const TrainConfig& cfg, HeadInit init = HeadInit::best_existing,
                                             const MultiCrossShape& shape = {}) {
    if (m.heads.count(farm_id)) throw ValidationError("add_multicross_head: farm '" + farm_id + "' already has a head");
    Samples coded;
    for (const auto& [nwp_id, ds] : data) {
        if (!m.adapters.count(nwp_id)) throw ValidationError("add_multicross_head: no adapter for '" + nwp_id + "'");
        Samples s = nnet::labeled_samples(ds);
        if (s.size() == 0) continue;
        Matrix codes = nnet::forward_batch(m.spatial, abstraction(m, nwp_id, labeled_only(ds)));
        coded = nnet::concat(coded, Samples{std::move(codes), std::move(s.targets), {}});
    }
    if (coded.size() == 0) throw ValidationError("add_multicross_head: no labeled records");
    DenseNetwork head = make_head(m.spatial.output_dim(), shape.head_hidden, part_seed(cfg.seed, "head:" + farm_id));
    if (init == HeadInit::best_existing && !m.heads.empty()) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& [id, h] : m.heads) {
            double e = nnet::mse_loss(nnet::forward_batch(h, coded.inputs), coded.targets);
            if (e < best) {
                best = e;
                head = h;
            }
        }
        head.freeze_mask.assign(head.layer_count(), false);
        head.seed = part_seed(cfg.seed, "head:" + farm_id);
    }
    head = nnet::train(std::move(head), coded, cfg).network;
    m.heads.emplace(farm_id, std::move(head));
    return m;
}

inline nlohmann::json to_json(const MultiCrossNetwork& m) {
    nlohmann::json adapters = nlohmann::json::object(), heads = nlohmann::json::object();
    for (const auto& [id, a] : m.adapters) adapters[id] = nnet::to_json(a);
    for (const auto& [id, h] : m.heads) heads[id] = nnet::to_json(h);
    return {{"format", "windtl.multicross_network"}, {"version", 1},          {"adapters", adapters},
            {"trunk", nnet::to_json(m.trunk)},       {"spatial", nnet::to_json(m.spatial)}, {"heads", heads}};
}

inline MultiCrossNetwork multicross_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "windtl.multicross_network")
        throw ValidationError("not a windtl.multicross_network document");
    MultiCrossNetwork m;
    for (const auto& [id, a] : j.at("adapters").items()) m.adapters[id] = nnet::network_from_json(a);
    m.trunk = nnet::network_from_json(j.at("trunk"));
    m.spatial = nnet::network_from_json(j.at("spatial"));
    for (const auto& [id, h] : j.at("heads").items()) m.heads[id] = nnet::network_from_json(h);
    validate(m);
    return m;
}

} // namespace windtl::mtl
