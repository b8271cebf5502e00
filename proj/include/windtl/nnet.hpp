// Minimal dense feed-forward networks: regression heads, autoencoders and the
// shared trunks used by the multi-task models. Mini-batch SGD with momentum,
// per-layer freezing, finite-difference gradient verification.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "windtl/types.hpp"

namespace windtl::nnet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Training diverged or received unusable data.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Activation { identity, tanh, relu, sigmoid };

inline std::string_view to_string(Activation a) {
    switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    }
    return "identity";
}

inline Activation activation_from_string(std::string_view s) {
    for (auto a : {Activation::identity, Activation::tanh, Activation::relu, Activation::sigmoid})
        if (to_string(a) == s) return a;
    throw ValidationError("unknown activation '" + std::string{s} + "'");
}

// ============================================================================
// Network types
// ============================================================================

struct Layer {
    Matrix weights; // out x in
    Vector bias;    // out
    Activation activation = Activation::identity;

    Eigen::Index in() const { return weights.cols(); }
    Eigen::Index out() const { return weights.rows(); }
};

/// Per-feature z-score. Unfitted means identity.
struct Standardizer {
    Vector mean;
    Vector scale;

    bool fitted() const { return mean.size() > 0; }

    /// Statistics over the rows of `x`; constant columns get scale 1.
    static Standardizer fit(const Matrix& x) {
        Standardizer s;
        const auto n = static_cast<double>(std::max<Eigen::Index>(x.rows(), 1));
        s.mean = x.colwise().sum().transpose() / n;
        s.scale = ((x.rowwise() - s.mean.transpose()).array().square().colwise().sum() / n)
                      .sqrt()
                      .transpose();
        for (Eigen::Index j = 0; j < s.scale.size(); ++j)
            if (!(s.scale[j] > 1e-12)) s.scale[j] = 1.0;
        return s;
    }

    Matrix apply(const Matrix& x) const {
        if (!fitted()) return x;
        return ((x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array())
            .matrix();
    }

    Matrix invert(const Matrix& z) const {
        if (!fitted()) return z;
        return ((z.array().rowwise() * scale.transpose().array()).rowwise() + mean.transpose().array())
            .matrix();
    }
};

struct DenseNetwork {
    std::vector<Layer> layers;
    std::vector<bool> freeze_mask;
    Standardizer input_scaling;
    std::uint64_t seed = 0;

    std::size_t input_dim() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().in()); }
    std::size_t output_dim() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().out()); }
    std::size_t layer_count() const { return layers.size(); }
};

inline bool same_weights(const DenseNetwork& a, const DenseNetwork& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        const auto& x = a.layers[l];
        const auto& y = b.layers[l];
        if (x.activation != y.activation || x.weights.rows() != y.weights.rows() ||
            x.weights.cols() != y.weights.cols())
            return false;
        if (std::memcmp(x.weights.data(), y.weights.data(), sizeof(double) * x.weights.size()) != 0 ||
            std::memcmp(x.bias.data(), y.bias.data(), sizeof(double) * x.bias.size()) != 0)
            return false;
    }
    return true;
}

inline void validate(const DenseNetwork& net) {
    if (net.layers.empty()) throw ValidationError("network has no layers");
    if (net.freeze_mask.size() != net.layers.size())
        throw ValidationError("freeze mask length differs from layer count");
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& layer = net.layers[l];
        if (layer.bias.size() != layer.out()) throw ValidationError("bias length mismatch");
        if (l > 0 && layer.in() != net.layers[l - 1].out())
            throw ValidationError("layer dimensions do not chain");
        if (!layer.weights.allFinite() || !layer.bias.allFinite())
            throw ValidationError("non-finite weights");
    }
    if (net.input_scaling.fitted() &&
        static_cast<std::size_t>(net.input_scaling.mean.size()) != net.input_dim())
        throw ValidationError("standardization length differs from input dim");
}

struct TrainConfig {
    std::size_t epochs = 60;
    std::size_t batch_size = 32;
    double learning_rate = 0.02;
    double momentum = 0.9;
    double l2 = 0.0;
    std::uint64_t seed = 0;
    std::size_t early_stop_patience = 10;
    double validation_fraction = 0.2;
};

inline void validate(const TrainConfig& cfg) {
    if (!(cfg.learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
    if (cfg.batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (!(cfg.l2 >= 0.0)) throw ValidationError("l2 must be >= 0");
    if (!(cfg.validation_fraction >= 0.0 && cfg.validation_fraction < 1.0))
        throw ValidationError("validation_fraction must lie in [0, 1)");
}

// ============================================================================
// Construction and evaluation
// ============================================================================

/// Uniform fan-in initialization, limit sqrt(3 / fan_in); zero biases.
inline DenseNetwork init_network(std::span<const std::size_t> layer_dims,
                                 std::span<const Activation> activations, std::uint64_t seed) {
    if (layer_dims.size() < 2 || activations.size() != layer_dims.size() - 1)
        throw ValidationError("init_network: need |activations| = |layer_dims| - 1 >= 1");
    for (auto d : layer_dims)
        if (d == 0) throw ValidationError("init_network: zero-width layer");
    DenseNetwork net;
    net.seed = seed;
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        const auto in = static_cast<Eigen::Index>(layer_dims[l]);
        const auto out = static_cast<Eigen::Index>(layer_dims[l + 1]);
        const double limit = std::sqrt(3.0 / static_cast<double>(in));
        std::uniform_real_distribution<double> dist(-limit, limit);
        Layer layer;
        layer.weights.resize(out, in);
        for (Eigen::Index r = 0; r < out; ++r)
            for (Eigen::Index c = 0; c < in; ++c) layer.weights(r, c) = dist(rng);
        layer.bias = Vector::Zero(out);
        layer.activation = activations[l];
        net.layers.push_back(std::move(layer));
    }
    net.freeze_mask.assign(net.layers.size(), false);
    return net;
}

inline DenseNetwork init_network(std::initializer_list<std::size_t> dims,
                                 std::initializer_list<Activation> acts, std::uint64_t seed) {
    std::vector<std::size_t> d(dims);
    std::vector<Activation> a(acts);
    return init_network(std::span<const std::size_t>(d), std::span<const Activation>(a), seed);
}

inline void apply_activation(Matrix& z, Activation a) {
    switch (a) {
    case Activation::identity: break;
    case Activation::tanh: z = z.array().tanh().matrix(); break;
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::sigmoid: z = (1.0 / (1.0 + (-z.array()).exp())).matrix(); break;
    }
}

/// Derivative of the activation expressed through its output.
inline Matrix activation_slope(const Matrix& out, Activation a) {
    switch (a) {
    case Activation::identity: return Matrix::Ones(out.rows(), out.cols());
    case Activation::tanh: return (1.0 - out.array().square()).matrix();
    case Activation::relu: return (out.array() > 0.0).cast<double>().matrix();
    case Activation::sigmoid: return (out.array() * (1.0 - out.array())).matrix();
    }
    return Matrix::Ones(out.rows(), out.cols());
}

/// Layer outputs for a batch. activations[0] is the (standardized) input,
/// activations[l + 1] the output of layer l.
struct ForwardTrace {
    std::vector<Matrix> activations;
    const Matrix& output() const { return activations.back(); }
};

/// Forward pass on inputs that are already standardized.
inline ForwardTrace trace_standardized(const DenseNetwork& net, Matrix x) {
    ForwardTrace t;
    t.activations.reserve(net.layers.size() + 1);
    t.activations.push_back(std::move(x));
    for (const auto& layer : net.layers) {
        Matrix z = t.activations.back() * layer.weights.transpose();
        z.rowwise() += layer.bias.transpose();
        apply_activation(z, layer.activation);
        t.activations.push_back(std::move(z));
    }
    return t;
}

/// Batched forward pass; rows are samples.
inline Matrix forward_batch(const DenseNetwork& net, const Matrix& x) {
    if (static_cast<std::size_t>(x.cols()) != net.input_dim())
        throw ValidationError("forward: input has " + std::to_string(x.cols()) + " columns, network expects " +
                              std::to_string(net.input_dim()));
    Matrix a = net.input_scaling.apply(x);
    for (const auto& layer : net.layers) {
        Matrix z = a * layer.weights.transpose();
        z.rowwise() += layer.bias.transpose();
        apply_activation(z, layer.activation);
        a = std::move(z);
    }
    return a;
}

inline std::vector<double> forward(const DenseNetwork& net, std::span<const double> x) {
    if (x.size() != net.input_dim())
        throw ValidationError("forward: input length " + std::to_string(x.size()) + " != " +
                              std::to_string(net.input_dim()));
    Matrix row(1, static_cast<Eigen::Index>(x.size()));
    for (std::size_t j = 0; j < x.size(); ++j) row(0, static_cast<Eigen::Index>(j)) = x[j];
    Matrix out = forward_batch(net, row);
    return {out.data(), out.data() + out.size()};
}

/// Single-output convenience.
inline double predict_scalar(const DenseNetwork& net, std::span<const double> x) {
    return forward(net, x).front();
}

// ============================================================================
// Backpropagation
// ============================================================================

struct LayerGradient {
    Matrix weights;
    Vector bias;
};

struct Gradients {
    std::vector<LayerGradient> layers;
    Matrix input; // d loss / d (standardized) input, rows = samples
};

/// Gradients of a loss whose derivative w.r.t. the network output is `d_output`.
/// Frozen layers still propagate but their parameter gradients are left empty
/// unless `include_frozen`.
inline Gradients backward(const DenseNetwork& net, const ForwardTrace& trace, const Matrix& d_output,
                          bool include_frozen = false) {
    Gradients g;
    g.layers.resize(net.layers.size());
    Matrix delta = d_output;
    for (std::size_t l = net.layers.size(); l-- > 0;) {
        const auto& layer = net.layers[l];
        Matrix dz = (delta.array() * activation_slope(trace.activations[l + 1], layer.activation).array()).matrix();
        if (include_frozen || !net.freeze_mask[l]) {
            g.layers[l].weights = dz.transpose() * trace.activations[l];
            g.layers[l].bias = dz.colwise().sum().transpose();
        }
        delta = dz * layer.weights;
    }
    g.input = std::move(delta);
    return g;
}

/// Weighted mean squared error, averaged over outputs. Returns the loss and
/// writes d loss / d prediction into `d_output`.
inline double mse_loss(const Matrix& prediction, const Matrix& target, const Vector* weights,
                       Matrix& d_output) {
    Matrix diff = prediction - target;
    const double outs = static_cast<double>(prediction.cols());
    if (weights && weights->size() > 0) {
        const double total = weights->sum();
        if (!(total > 0.0)) {
            d_output = Matrix::Zero(prediction.rows(), prediction.cols());
            return 0.0;
        }
        double loss = (diff.array().square().rowwise().sum() * weights->array()).sum() / (total * outs);
        d_output = (diff.array().colwise() * weights->array()).matrix() * (2.0 / (total * outs));
        return loss;
    }
    const double n = static_cast<double>(prediction.rows());
    d_output = diff * (2.0 / (n * outs));
    return diff.array().square().sum() / (n * outs);
}

inline double mse_loss(const Matrix& prediction, const Matrix& target, const Vector* weights = nullptr) {
    Matrix unused;
    return mse_loss(prediction, target, weights, unused);
}

/// Velocity buffers for momentum SGD over one network.
struct Momentum {
    std::vector<LayerGradient> velocity;

    explicit Momentum(const DenseNetwork& net) {
        for (const auto& layer : net.layers)
            velocity.push_back({Matrix::Zero(layer.out(), layer.in()), Vector::Zero(layer.out())});
    }

    /// v <- mu v - lr (g + l2 W); W <- W + v. Frozen layers untouched.
    void step(DenseNetwork& net, const Gradients& g, double lr, double mu, double l2) {
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            if (net.freeze_mask[l]) continue;
            auto& layer = net.layers[l];
            auto& v = velocity[l];
            if (l2 > 0.0)
                v.weights = mu * v.weights - lr * (g.layers[l].weights + l2 * layer.weights);
            else
                v.weights = mu * v.weights - lr * g.layers[l].weights;
            v.bias = mu * v.bias - lr * g.layers[l].bias;
            layer.weights += v.weights;
            layer.bias += v.bias;
        }
    }
};

// ============================================================================
// Training
// ============================================================================

/// In-memory supervised samples; rows are records.
struct Samples {
    Matrix inputs;
    Matrix targets;
    Vector weights; // empty = uniform

    Eigen::Index size() const { return inputs.rows(); }
};

/// Rows `idx` of `s`.
inline Samples take_rows(const Samples& s, const std::vector<Eigen::Index>& idx) {
    Samples out;
    out.inputs = s.inputs(idx, Eigen::all);
    out.targets = s.targets(idx, Eigen::all);
    if (s.weights.size() > 0) out.weights = s.weights(idx);
    return out;
}

inline Samples concat(const Samples& a, const Samples& b) {
    if (a.size() == 0) return b;
    if (b.size() == 0) return a;
    Samples out;
    out.inputs.resize(a.inputs.rows() + b.inputs.rows(), a.inputs.cols());
    out.inputs << a.inputs, b.inputs;
    out.targets.resize(a.targets.rows() + b.targets.rows(), a.targets.cols());
    out.targets << a.targets, b.targets;
    if (a.weights.size() > 0 || b.weights.size() > 0) {
        Vector wa = a.weights.size() > 0 ? a.weights : Vector::Ones(a.size());
        Vector wb = b.weights.size() > 0 ? b.weights : Vector::Ones(b.size());
        out.weights.resize(wa.size() + wb.size());
        out.weights << wa, wb;
    }
    return out;
}

/// Model-input matrix for every record of a dataset.
inline Matrix input_matrix(const TimeSeriesDataset& ds) {
    Matrix x(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(kModelInputCount));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        auto row = model_inputs(ds.features[i], ds.timestamps[i]);
        for (std::size_t j = 0; j < kModelInputCount; ++j)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
    return x;
}

/// Labeled records of a dataset as samples (unlabeled records skipped).
inline Samples labeled_samples(const TimeSeriesDataset& ds) {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < ds.power.size(); ++i)
        if (ds.power[i]) rows.push_back(static_cast<Eigen::Index>(i));
    Samples s;
    Matrix all = input_matrix(ds);
    s.inputs = all(rows, Eigen::all);
    s.targets.resize(static_cast<Eigen::Index>(rows.size()), 1);
    for (std::size_t r = 0; r < rows.size(); ++r)
        s.targets(static_cast<Eigen::Index>(r), 0) = *ds.power[static_cast<std::size_t>(rows[r])];
    return s;
}

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> validation_loss; // empty when no validation split
};

struct TrainResult {
    DenseNetwork network;
    TrainHistory history;
};

/// Seeded split of [0, n) into (train, validation) index sets.
inline std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>>
split_indices(Eigen::Index n, double validation_fraction, std::mt19937_64& rng) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_val = static_cast<Eigen::Index>(std::floor(validation_fraction * static_cast<double>(n)));
    if (n - n_val < 1) n_val = 0;
    std::vector<Eigen::Index> val(idx.end() - n_val, idx.end());
    idx.resize(static_cast<std::size_t>(n - n_val));
    std::sort(val.begin(), val.end());
    return {idx, val};
}

/// Mini-batch SGD with momentum on weighted MSE. Inputs are standardized with
/// the network's own scaling (identity if unfitted). Frozen layers receive no
/// updates. With a validation split, the best-validation weights are returned
/// and training stops after `early_stop_patience` epochs without improvement.
inline TrainResult train(DenseNetwork net, const Samples& data, const TrainConfig& cfg) {
    validate(cfg);
    validate(net);
    if (data.size() == 0) throw TrainingError("train: empty dataset");
    if (static_cast<std::size_t>(data.inputs.cols()) != net.input_dim() ||
        static_cast<std::size_t>(data.targets.cols()) != net.output_dim())
        throw ValidationError("train: sample dimensions do not match the network");
    if (!data.targets.allFinite()) throw TrainingError("train: non-finite labels");

    TrainResult result;
    std::mt19937_64 rng(cfg.seed);
    auto [train_idx, val_idx] = split_indices(data.size(), cfg.validation_fraction, rng);
    const Matrix x_std = net.input_scaling.apply(data.inputs);
    const bool weighted = data.weights.size() > 0;

    Matrix x_val, y_val;
    Vector w_val;
    if (!val_idx.empty()) {
        x_val = x_std(val_idx, Eigen::all);
        y_val = data.targets(val_idx, Eigen::all);
        if (weighted) w_val = data.weights(val_idx);
    }

    bool all_frozen = std::all_of(net.freeze_mask.begin(), net.freeze_mask.end(), [](bool f) { return f; });
    if (all_frozen || cfg.epochs == 0) {
        result.network = std::move(net);
        return result;
    }

    Momentum opt(net);
    DenseNetwork best = net;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    Matrix d_out;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(train_idx.begin(), train_idx.end(), rng);
        double loss_sum = 0.0, weight_sum = 0.0;
        for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch_size) {
            std::size_t stop = std::min(train_idx.size(), start + cfg.batch_size);
            std::vector<Eigen::Index> batch(train_idx.begin() + static_cast<std::ptrdiff_t>(start),
                                            train_idx.begin() + static_cast<std::ptrdiff_t>(stop));
            Vector wb;
            if (weighted) wb = data.weights(batch);
            auto trace = trace_standardized(net, x_std(batch, Eigen::all));
            double loss = mse_loss(trace.output(), data.targets(batch, Eigen::all), weighted ? &wb : nullptr, d_out);
            if (!std::isfinite(loss))
                throw TrainingError("train: loss became non-finite at epoch " + std::to_string(epoch) +
                                    " (learning_rate=" + std::to_string(cfg.learning_rate) + ")");
            double bw = weighted ? wb.sum() : static_cast<double>(batch.size());
            loss_sum += loss * bw;
            weight_sum += bw;
            opt.step(net, backward(net, trace, d_out), cfg.learning_rate, cfg.momentum, cfg.l2);
        }
        double train_loss = weight_sum > 0.0 ? loss_sum / weight_sum : 0.0;
        result.history.train_loss.push_back(train_loss);

        if (val_idx.empty()) continue;
        double val_loss = mse_loss(trace_standardized(net, x_val).output(), y_val, weighted ? &w_val : nullptr);
        if (!std::isfinite(val_loss))
            throw TrainingError("train: validation loss became non-finite at epoch " + std::to_string(epoch));
        result.history.validation_loss.push_back(val_loss);
        if (val_loss < best_val) {
            best_val = val_loss;
            best = net;
            since_best = 0;
        } else if (cfg.early_stop_patience > 0 && ++since_best >= cfg.early_stop_patience) {
            break;
        }
    }
    result.network = val_idx.empty() ? std::move(net) : std::move(best);
    return result;
}

/// Trains on the labeled records of a dataset. An unfitted input scaling is
/// fitted on the training split first.
inline TrainResult train(DenseNetwork net, const TimeSeriesDataset& data, const TrainConfig& cfg) {
    Samples s = labeled_samples(data);
    if (s.size() == 0) throw TrainingError("train: dataset '" + data.farm_id + "' has no labeled records");
    if (!net.input_scaling.fitted()) {
        std::mt19937_64 rng(cfg.seed);
        auto [train_idx, val_idx] = split_indices(s.size(), cfg.validation_fraction, rng);
        net.input_scaling = Standardizer::fit(s.inputs(train_idx, Eigen::all));
    }
    return train(std::move(net), s, cfg);
}

/// `train` with `freeze` installed as the freeze mask.
inline DenseNetwork finetune(DenseNetwork net, const Samples& data, const std::vector<bool>& freeze,
                             const TrainConfig& cfg) {
    if (freeze.size() != net.layers.size())
        throw ValidationError("finetune: freeze mask length differs from layer count");
    net.freeze_mask = freeze;
    return train(std::move(net), data, cfg).network;
}

inline DenseNetwork finetune(DenseNetwork net, const TimeSeriesDataset& data, const std::vector<bool>& freeze,
                             const TrainConfig& cfg) {
    if (freeze.size() != net.layers.size())
        throw ValidationError("finetune: freeze mask length differs from layer count");
    net.freeze_mask = freeze;
    return train(std::move(net), data, cfg).network;
}

// ============================================================================
// Gradient verification
// ============================================================================

/// Analytic gradient of the per-sample loss mean((f(x) - y)^2) for every layer,
/// frozen or not.
inline Gradients sample_gradients(const DenseNetwork& net, std::span<const double> x, std::span<const double> y) {
    Matrix row(1, static_cast<Eigen::Index>(x.size()));
    for (std::size_t j = 0; j < x.size(); ++j) row(0, static_cast<Eigen::Index>(j)) = x[j];
    Matrix target(1, static_cast<Eigen::Index>(y.size()));
    for (std::size_t j = 0; j < y.size(); ++j) target(0, static_cast<Eigen::Index>(j)) = y[j];
    auto trace = trace_standardized(net, net.input_scaling.apply(row));
    Matrix d_out;
    mse_loss(trace.output(), target, nullptr, d_out);
    return backward(net, trace, d_out, true);
}

/// Max relative error between `analytic` and central differences over every
/// unfrozen parameter.
inline double gradient_error(const DenseNetwork& net, std::span<const double> x, std::span<const double> y,
                             const Gradients& analytic, double epsilon) {
    if (!(epsilon > 0.0)) throw ValidationError("grad_check: epsilon must be > 0");
    if (x.size() != net.input_dim() || y.size() != net.output_dim())
        throw ValidationError("grad_check: sample dimensions do not match the network");
    Matrix target(1, static_cast<Eigen::Index>(y.size()));
    for (std::size_t j = 0; j < y.size(); ++j) target(0, static_cast<Eigen::Index>(j)) = y[j];
    DenseNetwork probe = net;
    auto loss_at = [&]() {
        return mse_loss(forward_batch(probe, Eigen::Map<const Matrix>(x.data(), 1, static_cast<Eigen::Index>(x.size()))),
                        target);
    };
    double worst = 0.0;
    auto compare = [&](double& param, double g_a) {
        const double saved = param;
        param = saved + epsilon;
        const double up = loss_at();
        param = saved - epsilon;
        const double down = loss_at();
        param = saved;
        const double g_n = (up - down) / (2.0 * epsilon);
        worst = std::max(worst, std::abs(g_a - g_n) / std::max(std::abs(g_a) + std::abs(g_n), 1e-12));
    };
    for (std::size_t l = 0; l < probe.layers.size(); ++l) {
        if (net.freeze_mask[l]) continue;
        auto& layer = probe.layers[l];
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
                compare(layer.weights(r, c), analytic.layers[l].weights(r, c));
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) compare(layer.bias[r], analytic.layers[l].bias[r]);
    }
    return worst;
}

inline double grad_check(const DenseNetwork& net, std::span<const double> x, std::span<const double> y,
                         double epsilon = 1e-5) {
    return gradient_error(net, x, y, sample_gradients(net, x, y), epsilon);
}

// ============================================================================
// Autoencoder
// ============================================================================

struct Autoencoder {
    DenseNetwork encoder;
    DenseNetwork decoder;
    double reconstruction_mse = 0.0;
};

struct AutoencoderShape {
    std::size_t hidden = 0; // 0 = no hidden layer on either side
    Activation hidden_activation = Activation::tanh;
    Activation code_activation = Activation::tanh;
};

/// Trains encoder and decoder jointly on reconstruction MSE. `features` are
/// expected to be standardized already.
inline Autoencoder train_autoencoder(const Matrix& features, std::size_t code_dim, const TrainConfig& cfg,
                                     const AutoencoderShape& shape = {}) {
    const auto input_dim = static_cast<std::size_t>(features.cols());
    if (code_dim == 0 || code_dim >= input_dim)
        throw ValidationError("train_autoencoder: code_dim must satisfy 0 < code_dim < input_dim");
    std::vector<std::size_t> dims{input_dim};
    std::vector<Activation> acts;
    if (shape.hidden > 0) {
        dims.push_back(shape.hidden);
        acts.push_back(shape.hidden_activation);
    }
    dims.push_back(code_dim);
    acts.push_back(shape.code_activation);
    const std::size_t encoder_layers = acts.size();
    if (shape.hidden > 0) {
        dims.push_back(shape.hidden);
        acts.push_back(shape.hidden_activation);
    }
    dims.push_back(input_dim);
    acts.push_back(Activation::identity);

    DenseNetwork joint = init_network(std::span<const std::size_t>(dims), std::span<const Activation>(acts), cfg.seed);
    Samples s{features, features, {}};
    joint = train(std::move(joint), s, cfg).network;

    Autoencoder ae;
    ae.encoder.seed = ae.decoder.seed = cfg.seed;
    ae.encoder.layers.assign(joint.layers.begin(), joint.layers.begin() + static_cast<std::ptrdiff_t>(encoder_layers));
    ae.decoder.layers.assign(joint.layers.begin() + static_cast<std::ptrdiff_t>(encoder_layers), joint.layers.end());
    ae.encoder.freeze_mask.assign(ae.encoder.layers.size(), false);
    ae.decoder.freeze_mask.assign(ae.decoder.layers.size(), false);
    ae.reconstruction_mse = mse_loss(forward_batch(joint, features), features);
    return ae;
}

inline std::vector<double> encode(const DenseNetwork& encoder, std::span<const double> x) {
    return forward(encoder, x);
}

// ============================================================================
// Serialization
// ============================================================================

inline nlohmann::json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vector vector_from_json(const nlohmann::json& j) {
    auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

/// Self-describing document: dims, activations, row-major weights,
/// standardization and seed.
inline nlohmann::json to_json(const DenseNetwork& net) {
    nlohmann::json j;
    j["format"] = "windtl.dense_network";
    j["version"] = 1;
    j["seed"] = net.seed;
    j["input_dim"] = net.input_dim();
    j["output_dim"] = net.output_dim();
    j["freeze_mask"] = net.freeze_mask;
    auto& layers = j["layers"] = nlohmann::json::array();
    for (const auto& layer : net.layers) {
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(layer.weights.size()));
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) w.push_back(layer.weights(r, c));
        layers.push_back({{"in", layer.in()},
                          {"out", layer.out()},
                          {"activation", to_string(layer.activation)},
                          {"weights", w},
                          {"bias", vector_to_json(layer.bias)}});
    }
    if (net.input_scaling.fitted())
        j["standardization"] = {{"mean", vector_to_json(net.input_scaling.mean)},
                                {"scale", vector_to_json(net.input_scaling.scale)}};
    else
        j["standardization"] = nullptr;
    return j;
}

inline DenseNetwork network_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "windtl.dense_network")
        throw ValidationError("not a windtl.dense_network document");
    DenseNetwork net;
    net.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& lj : j.at("layers")) {
        Layer layer;
        auto in = lj.at("in").get<Eigen::Index>();
        auto out = lj.at("out").get<Eigen::Index>();
        auto w = lj.at("weights").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(w.size()) != in * out) throw ValidationError("weight count mismatch");
        layer.weights.resize(out, in);
        for (Eigen::Index r = 0; r < out; ++r)
            for (Eigen::Index c = 0; c < in; ++c) layer.weights(r, c) = w[static_cast<std::size_t>(r * in + c)];
        layer.bias = vector_from_json(lj.at("bias"));
        layer.activation = activation_from_string(lj.at("activation").get<std::string>());
        net.layers.push_back(std::move(layer));
    }
    net.freeze_mask = j.at("freeze_mask").get<std::vector<bool>>();
    if (const auto& s = j.at("standardization"); !s.is_null()) {
        net.input_scaling.mean = vector_from_json(s.at("mean"));
        net.input_scaling.scale = vector_from_json(s.at("scale"));
    }
    validate(net);
    return net;
}

} // namespace windtl::nnet
