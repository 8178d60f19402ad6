#include "waxsep/nn.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace waxsep {

using json = nlohmann::json;

std::string_view to_string(ModelKind kind) { return kind == ModelKind::berry ? "berry" : "wax"; }

ModelKind parse_model_kind(std::string_view text) {
    if (text == "berry") return ModelKind::berry;
    if (text == "wax") return ModelKind::wax;
    throw Error("unknown model kind '" + std::string(text) + "' (expected berry or wax)");
}

std::vector<LayerView> layer_table(const Architecture& a) {
    std::vector<LayerView> layers;
    std::size_t offset = 0;
    auto add = [&](std::string name, int outputs, int inputs) {
        layers.push_back({std::move(name), offset, outputs, inputs});
        offset += layers.back().size();
    };
    add("conv", a.conv_filters, a.crop_values());
    add("fc_hidden", a.hidden, a.conv_filters);
    if (a.coordinate_branch()) {
        add("fc_coord", a.coord_hidden, 2);
        add("fc_merge", a.merge, a.hidden + a.coord_hidden);
    } else {
        add("fc_merge", a.merge, a.hidden);
    }
    add("fc_out", a.classes(), a.merge);
    return layers;
}

// ---------------------------------------------------------------------------
// PixelBatch
// ---------------------------------------------------------------------------

void PixelBatch::append(std::span<const float> crop, float cx, float cy, int label) {
    if (crop.size() != crop_values()) throw Error("crop size does not match batch channel count");
    crops.insert(crops.end(), crop.begin(), crop.end());
    if (has_coords) {
        coords.push_back(cx);
        coords.push_back(cy);
    }
    labels.push_back(label);
}

PixelBatch PixelBatch::select(std::span<const std::size_t> indices) const {
    PixelBatch out;
    out.channels = channels;
    out.has_coords = has_coords;
    out.crops.reserve(indices.size() * crop_values());
    out.labels.reserve(indices.size());
    for (auto i : indices) {
        auto c = crop(i);
        out.crops.insert(out.crops.end(), c.begin(), c.end());
        if (has_coords) {
            out.coords.push_back(coords[2 * i]);
            out.coords.push_back(coords[2 * i + 1]);
        }
        out.labels.push_back(labels[i]);
    }
    return out;
}

PixelBatch PixelBatch::select_channels(std::span<const int> channel_indices) const {
    PixelBatch out;
    out.channels = static_cast<int>(channel_indices.size());
    out.has_coords = has_coords;
    out.coords = coords;
    out.labels = labels;
    out.crops.reserve(size() * 9 * channel_indices.size());
    for (std::size_t i = 0; i < size(); ++i) {
        auto c = crop(i);
        for (int p = 0; p < 9; ++p)
            for (int ch : channel_indices) {
                if (ch < 0 || ch >= channels) throw Error("channel index out of range");
                out.crops.push_back(c[static_cast<std::size_t>(p * channels + ch)]);
            }
    }
    return out;
}

void PixelBatch::validate() const {
    if (channels <= 0) throw Error("batch has no channels");
    if (crops.size() != size() * crop_values()) throw Error("batch crop storage does not match its size");
    if (has_coords && coords.size() != 2 * size()) throw Error("batch coordinate storage does not match its size");
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

CnnModel::CnnModel(Architecture arch, std::vector<float> parameters)
    : arch_(arch), layers_(layer_table(arch)), params_(std::move(parameters)) {
    const std::size_t expected = layers_.back().offset + layers_.back().size();
    if (params_.size() != expected)
        throw Error("parameter count " + std::to_string(params_.size()) + " does not match architecture (" +
                    std::to_string(expected) + ")");
    for (float p : params_)
        if (!std::isfinite(p)) throw Error("model parameters must be finite");
    mean_.assign(static_cast<std::size_t>(arch_.input_channels), 0.0);
    scale_.assign(static_cast<std::size_t>(arch_.input_channels), 1.0);
}

void CnnModel::set_input_normalization(std::vector<double> mean, std::vector<double> inv_std) {
    if (mean.size() != static_cast<std::size_t>(arch_.input_channels) || inv_std.size() != mean.size())
        throw Error("normalization size does not match input channels");
    mean_ = std::move(mean);
    scale_ = std::move(inv_std);
}

void CnnModel::fit_input_normalization(const PixelBatch& data) {
    const auto c = static_cast<std::size_t>(arch_.input_channels);
    if (data.channels != arch_.input_channels) throw Error("shape mismatch: batch channels vs model");
    std::vector<double> sum(c, 0.0), sq(c, 0.0);
    const std::size_t values = data.crops.size();
    if (values == 0) return;
    for (std::size_t i = 0; i < values; ++i) {
        const double v = data.crops[i];
        sum[i % c] += v;
        sq[i % c] += v * v;
    }
    const double n = static_cast<double>(values / c);
    std::vector<double> mean(c), inv(c);
    for (std::size_t k = 0; k < c; ++k) {
        mean[k] = sum[k] / n;
        const double var = std::max(sq[k] / n - mean[k] * mean[k], 0.0);
        inv[k] = 1.0 / std::sqrt(var + 1e-6);
    }
    set_input_normalization(std::move(mean), std::move(inv));
}

CnnModel init_model(ModelKind kind, int input_channels, std::uint64_t seed, Architecture widths) {
    if (input_channels != 3 && input_channels != 6 && input_channels != 15)
        throw Error("unsupported channel count " + std::to_string(input_channels) + " (expected 3, 6 or 15)");
    Architecture arch = widths;
    arch.kind = kind;
    arch.input_channels = input_channels;
    const auto layers = layer_table(arch);
    std::vector<float> params(layers.back().offset + layers.back().size(), 0.0f);
    std::mt19937_64 rng(seed);
    for (const auto& layer : layers) {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / layer.inputs));
        for (std::size_t i = 0; i < layer.weight_count(); ++i)
            params[layer.offset + i] = static_cast<float>(dist(rng));
    }
    return CnnModel(arch, std::move(params));
}

// ---------------------------------------------------------------------------
// Forward / backward engine (float64)
// ---------------------------------------------------------------------------

namespace {

struct Net {
    const Architecture& arch;
    const std::vector<LayerView>& layers;
    std::span<const double> params;
    std::span<const double> mean;
    std::span<const double> scale;

    const LayerView& layer(std::size_t i) const { return layers[i]; }
};

// out = W in + b, optionally rectified.
void dense(const double* p, const LayerView& l, const double* in, double* out, bool relu) {
    const double* w = p + l.offset;
    const double* b = p + l.bias_offset();
    for (int o = 0; o < l.outputs; ++o) {
        const double* row = w + static_cast<std::size_t>(o) * l.inputs;
        double acc = b[o];
        for (int i = 0; i < l.inputs; ++i) acc += row[i] * in[i];
        out[o] = relu ? std::max(acc, 0.0) : acc;
    }
}

// `dout` is the gradient w.r.t. the layer's pre-activation.
void dense_backward(const double* p, const LayerView& l, const double* in, const double* dout, double* grad,
                    double* din) {
    const double* w = p + l.offset;
    double* gw = grad + l.offset;
    double* gb = grad + l.bias_offset();
    if (din) std::fill(din, din + l.inputs, 0.0);
    for (int o = 0; o < l.outputs; ++o) {
        const double g = dout[o];
        if (g == 0.0) continue;
        gb[o] += g;
        double* grow = gw + static_cast<std::size_t>(o) * l.inputs;
        const double* row = w + static_cast<std::size_t>(o) * l.inputs;
        for (int i = 0; i < l.inputs; ++i) grow[i] += g * in[i];
        if (din)
            for (int i = 0; i < l.inputs; ++i) din[i] += g * row[i];
    }
}

void relu_mask(const double* post, double* grad, int n) {
    for (int i = 0; i < n; ++i)
        if (post[i] <= 0.0) grad[i] = 0.0;
}

struct Workspace {
    std::vector<double> input, conv, hidden, coord, concat, merge, logits, probs;
    std::vector<double> d_logits, d_merge, d_concat, d_hidden, d_coord, d_conv;

    explicit Workspace(const Architecture& a) {
        input.resize(static_cast<std::size_t>(a.crop_values()));
        conv.resize(static_cast<std::size_t>(a.conv_filters));
        hidden.resize(static_cast<std::size_t>(a.hidden));
        coord.resize(static_cast<std::size_t>(a.coord_hidden));
        concat.resize(static_cast<std::size_t>(a.hidden + a.coord_hidden));
        merge.resize(static_cast<std::size_t>(a.merge));
        logits.resize(static_cast<std::size_t>(a.classes()));
        probs.resize(logits.size());
        d_logits.resize(logits.size());
        d_merge.resize(merge.size());
        d_concat.resize(concat.size());
        d_hidden.resize(hidden.size());
        d_coord.resize(coord.size());
        d_conv.resize(conv.size());
    }
};

void forward_crop(const Net& net, std::span<const float> crop, const double* xy, Workspace& ws) {
    const auto& a = net.arch;
    const auto c = static_cast<std::size_t>(a.input_channels);
    for (std::size_t i = 0; i < crop.size(); ++i) ws.input[i] = (crop[i] - net.mean[i % c]) * net.scale[i % c];

    const double* p = net.params.data();
    dense(p, net.layer(0), ws.input.data(), ws.conv.data(), true);
    dense(p, net.layer(1), ws.conv.data(), ws.hidden.data(), true);
    if (a.coordinate_branch()) {
        dense(p, net.layer(2), xy, ws.coord.data(), true);
        std::copy(ws.hidden.begin(), ws.hidden.end(), ws.concat.begin());
        std::copy(ws.coord.begin(), ws.coord.end(), ws.concat.begin() + a.hidden);
        dense(p, net.layer(3), ws.concat.data(), ws.merge.data(), true);
        dense(p, net.layer(4), ws.merge.data(), ws.logits.data(), false);
    } else {
        dense(p, net.layer(2), ws.hidden.data(), ws.merge.data(), true);
        dense(p, net.layer(3), ws.merge.data(), ws.logits.data(), false);
    }
    const double top = *std::max_element(ws.logits.begin(), ws.logits.end());
    double z = 0.0;
    for (std::size_t k = 0; k < ws.logits.size(); ++k) z += (ws.probs[k] = std::exp(ws.logits[k] - top));
    for (double& v : ws.probs) v /= z;
}

void forward_sample(const Net& net, const PixelBatch& batch, std::size_t s, Workspace& ws) {
    double xy[2] = {0.0, 0.0};
    if (batch.has_coords) {
        xy[0] = batch.coords[2 * s];
        xy[1] = batch.coords[2 * s + 1];
    }
    forward_crop(net, batch.crop(s), xy, ws);
}

// Cross-entropy of the sample just forwarded (stable log-sum-exp form).
double sample_loss(const Workspace& ws, int label) {
    const double top = *std::max_element(ws.logits.begin(), ws.logits.end());
    double z = 0.0;
    for (double l : ws.logits) z += std::exp(l - top);
    return top + std::log(z) - ws.logits[static_cast<std::size_t>(label)];
}

void backward_sample(const Net& net, const PixelBatch& batch, std::size_t s, int label, double weight,
                     Workspace& ws, double* grad) {
    const auto& a = net.arch;
    const double* p = net.params.data();
    for (std::size_t k = 0; k < ws.probs.size(); ++k)
        ws.d_logits[k] = weight * (ws.probs[k] - (static_cast<int>(k) == label ? 1.0 : 0.0));
    if (a.coordinate_branch()) {
        dense_backward(p, net.layer(4), ws.merge.data(), ws.d_logits.data(), grad, ws.d_merge.data());
        relu_mask(ws.merge.data(), ws.d_merge.data(), a.merge);
        dense_backward(p, net.layer(3), ws.concat.data(), ws.d_merge.data(), grad, ws.d_concat.data());
        std::copy(ws.d_concat.begin(), ws.d_concat.begin() + a.hidden, ws.d_hidden.begin());
        std::copy(ws.d_concat.begin() + a.hidden, ws.d_concat.end(), ws.d_coord.begin());
        relu_mask(ws.coord.data(), ws.d_coord.data(), a.coord_hidden);
        const double xy[2] = {batch.coords[2 * s], batch.coords[2 * s + 1]};
        dense_backward(p, net.layer(2), xy, ws.d_coord.data(), grad, nullptr);
    } else {
        dense_backward(p, net.layer(3), ws.merge.data(), ws.d_logits.data(), grad, ws.d_merge.data());
        relu_mask(ws.merge.data(), ws.d_merge.data(), a.merge);
        dense_backward(p, net.layer(2), ws.hidden.data(), ws.d_merge.data(), grad, ws.d_hidden.data());
    }
    relu_mask(ws.hidden.data(), ws.d_hidden.data(), a.hidden);
    dense_backward(p, net.layer(1), ws.conv.data(), ws.d_hidden.data(), grad, ws.d_conv.data());
    relu_mask(ws.conv.data(), ws.d_conv.data(), a.conv_filters);
    dense_backward(p, net.layer(0), ws.input.data(), ws.d_conv.data(), grad, nullptr);
}

void append_pattern(const Workspace& ws, bool coords, std::vector<std::uint8_t>& pattern) {
    auto push = [&](const std::vector<double>& v) {
        for (double x : v) pattern.push_back(x > 0.0);
    };
    push(ws.conv);
    push(ws.hidden);
    if (coords) push(ws.coord);
    push(ws.merge);
}

void check_batch(const CnnModel& model, const PixelBatch& batch) {
    batch.validate();
    const auto& a = model.architecture();
    if (batch.channels != a.input_channels)
        throw Error("shape mismatch: batch has " + std::to_string(batch.channels) + " channels, model expects " +
                    std::to_string(a.input_channels));
    if (a.coordinate_branch() && !batch.has_coords) throw Error("shape mismatch: berry model needs coordinates");
}

std::vector<double> to_double(std::span<const float> p) { return {p.begin(), p.end()}; }

double objective_impl(const CnnModel& model, std::span<const double> params, const PixelBatch& batch,
                      double weight_decay, std::span<double> gradient, std::vector<std::uint8_t>* pattern) {
    const auto& a = model.architecture();
    const Net net{a, model.layers(), params, model.input_mean(), model.input_scale()};
    Workspace ws(a);
    const bool want_grad = !gradient.empty();
    if (want_grad) std::fill(gradient.begin(), gradient.end(), 0.0);
    const double n = static_cast<double>(batch.size());
    double loss = 0.0;
    for (std::size_t s = 0; s < batch.size(); ++s) {
        const int label = batch.labels[s];
        if (label < 0 || label >= a.classes()) throw Error("label out of range for model head");
        forward_sample(net, batch, s, ws);
        loss += sample_loss(ws, label);
        if (pattern) append_pattern(ws, a.coordinate_branch(), *pattern);
        if (want_grad) backward_sample(net, batch, s, label, 1.0 / n, ws, gradient.data());
    }
    loss /= n;
    double sq = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        sq += params[i] * params[i];
        if (want_grad) gradient[i] += weight_decay * params[i];
    }
    return loss + 0.5 * weight_decay * sq;
}

}  // namespace

double objective(const CnnModel& model, std::span<const double> params, const PixelBatch& batch,
                 double weight_decay, std::span<double> gradient) {
    check_batch(model, batch);
    if (batch.size() == 0) throw Error("empty batch");
    if (params.size() != model.parameter_count()) throw Error("parameter vector size mismatch");
    if (!gradient.empty() && gradient.size() != params.size()) throw Error("gradient vector size mismatch");
    return objective_impl(model, params, batch, weight_decay, gradient, nullptr);
}

struct PixelPredictor::State {
    const CnnModel* model;
    std::vector<double> params;
    Workspace ws;
};

PixelPredictor::PixelPredictor(const CnnModel& model)
    : state_(std::make_shared<State>(State{&model, to_double(model.parameters()), Workspace(model.architecture())})) {}

int PixelPredictor::predict(std::span<const float> crop, float cx, float cy, std::span<double> probabilities) {
    const CnnModel& m = *state_->model;
    const auto& a = m.architecture();
    if (crop.size() != static_cast<std::size_t>(a.crop_values())) throw Error("shape mismatch: crop size");
    const Net net{a, m.layers(), state_->params, m.input_mean(), m.input_scale()};
    const double xy[2] = {cx, cy};
    forward_crop(net, crop, xy, state_->ws);
    const auto& probs = state_->ws.probs;
    if (!probabilities.empty()) std::copy(probs.begin(), probs.end(), probabilities.begin());
    int best = 0;
    for (std::size_t k = 1; k < probs.size(); ++k)
        if (probs[k] > probs[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
    return best;
}

std::vector<double> forward(const CnnModel& model, const PixelBatch& batch) {
    check_batch(model, batch);
    const auto params = to_double(model.parameters());
    const auto& a = model.architecture();
    const Net net{a, model.layers(), params, model.input_mean(), model.input_scale()};
    Workspace ws(a);
    std::vector<double> out;
    out.reserve(batch.size() * static_cast<std::size_t>(a.classes()));
    for (std::size_t s = 0; s < batch.size(); ++s) {
        forward_sample(net, batch, s, ws);
        out.insert(out.end(), ws.probs.begin(), ws.probs.end());
    }
    return out;
}

namespace {
int argmax_low_tie(std::span<const double> probs) {
    int best = 0;
    for (std::size_t k = 1; k < probs.size(); ++k)
        if (probs[k] > probs[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
    return best;
}
}  // namespace

Prediction predict_pixel(const CnnModel& model, std::span<const float> crop, std::span<const float> coords) {
    const auto& a = model.architecture();
    if (crop.size() != static_cast<std::size_t>(a.crop_values())) throw Error("shape mismatch: crop size");
    if (a.coordinate_branch() != (coords.size() == 2))
        throw Error("shape mismatch: coordinates required iff the model has a coordinate branch");
    PixelBatch batch;
    batch.channels = a.input_channels;
    batch.has_coords = a.coordinate_branch();
    batch.append(crop, coords.empty() ? 0.0f : coords[0], coords.empty() ? 0.0f : coords[1], 0);
    auto probs = forward(model, batch);
    Prediction p;
    p.label = argmax_low_tie(probs);
    p.probabilities = std::move(probs);
    return p;
}

std::vector<int> predict_labels(const CnnModel& model, const PixelBatch& batch) {
    const auto probs = forward(model, batch);
    const auto k = static_cast<std::size_t>(model.classes());
    std::vector<int> out(batch.size());
    for (std::size_t s = 0; s < batch.size(); ++s)
        out[s] = argmax_low_tie(std::span<const double>(probs).subspan(s * k, k));
    return out;
}

double accuracy(const CnnModel& model, const PixelBatch& batch) {
    if (batch.size() == 0) throw Error("empty batch");
    const auto pred = predict_labels(model, batch);
    std::size_t correct = 0;
    for (std::size_t s = 0; s < batch.size(); ++s) correct += pred[s] == batch.labels[s];
    return static_cast<double>(correct) / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

double TrainConfig::learning_rate(long iteration) const {
    double lr = base_lr;
    for (long step : steps)
        if (iteration >= std::lround(static_cast<double>(step) * schedule_scale)) lr *= gamma;
    return lr;
}

void TrainConfig::validate() const {
    if (!(base_lr > 0.0)) throw Error("learning rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw Error("momentum must lie in [0,1)");
    if (weight_decay < 0.0) throw Error("weight decay must be non-negative");
    if (batch_size < 1) throw Error("batch size must be >= 1");
    if (iterations < 0) throw Error("iterations must be non-negative");
    if (!(schedule_scale > 0.0)) throw Error("schedule scale must be positive");
}

StepResult train_step(CnnModel& model, const PixelBatch& batch, const TrainConfig& config, OptimizerState& state) {
    check_batch(model, batch);
    if (batch.size() == 0) throw Error("empty batch");
    auto params = model.parameters();
    if (state.velocity.empty()) state.velocity.assign(params.size(), 0.0);
    if (state.velocity.size() != params.size()) throw Error("optimizer state does not match the model");

    const auto p = to_double(params);
    std::vector<double> grad(p.size());
    const double loss = objective_impl(model, p, batch, config.weight_decay, grad, nullptr);
    double sq = 0.0;
    for (double v : p) sq += v * v;
    if (!std::isfinite(loss))
        throw TrainingDiverged("non-finite loss at iteration " + std::to_string(state.iteration) +
                               " (learning rate " + std::to_string(config.learning_rate(state.iteration)) + ")");

    const double lr = config.learning_rate(state.iteration);
    for (std::size_t i = 0; i < p.size(); ++i) {
        state.velocity[i] = config.momentum * state.velocity[i] - lr * grad[i];
        params[i] = static_cast<float>(p[i] + state.velocity[i]);
    }
    ++state.iteration;
    return {loss, loss - 0.5 * config.weight_decay * sq, lr};
}

namespace {

// Deterministic mini-batch index stream; with balancing, slots cycle through
// the classes present so every batch is (near) class-balanced.
class BatchSampler {
public:
    BatchSampler(const std::vector<int>& labels, int classes, bool balance, std::uint64_t seed)
        : rng_(seed), balance_(balance) {
        if (balance) {
            pools_.resize(static_cast<std::size_t>(classes));
            for (std::size_t i = 0; i < labels.size(); ++i) pools_[static_cast<std::size_t>(labels[i])].push_back(i);
            for (std::size_t c = 0; c < pools_.size(); ++c)
                if (!pools_[c].empty()) present_.push_back(c);
        } else {
            pools_.resize(1);
            pools_[0].resize(labels.size());
            std::iota(pools_[0].begin(), pools_[0].end(), std::size_t{0});
            present_.push_back(0);
        }
        cursor_.assign(pools_.size(), 0);
        for (auto c : present_) std::shuffle(pools_[c].begin(), pools_[c].end(), rng_);
    }

    std::vector<std::size_t> next(int batch_size) {
        std::vector<std::size_t> out(static_cast<std::size_t>(batch_size));
        for (std::size_t j = 0; j < out.size(); ++j) {
            const std::size_t c = present_[(rotation_ + j) % present_.size()];
            if (cursor_[c] == pools_[c].size()) {
                std::shuffle(pools_[c].begin(), pools_[c].end(), rng_);
                cursor_[c] = 0;
            }
            out[j] = pools_[c][cursor_[c]++];
        }
        rotation_ = (rotation_ + out.size()) % present_.size();
        return out;
    }

private:
    std::mt19937_64 rng_;
    bool balance_;
    std::vector<std::vector<std::size_t>> pools_;
    std::vector<std::size_t> present_;
    std::vector<std::size_t> cursor_;
    std::size_t rotation_ = 0;
};

}  // namespace

TrainResult train(CnnModel& model, const PixelBatch& data, const TrainConfig& config) {
    config.validate();
    check_batch(model, data);
    if (data.size() == 0) throw Error("empty dataset");
    for (int label : data.labels)
        if (label < 0 || label >= model.classes()) throw Error("label out of range for model head");

    model.fit_input_normalization(data);
    BatchSampler sampler(data.labels, model.classes(), config.balance_classes, config.seed);
    OptimizerState state;
    TrainResult result;
    result.loss_history.reserve(static_cast<std::size_t>(config.iterations));
    result.data_loss_history.reserve(static_cast<std::size_t>(config.iterations));
    for (long it = 0; it < config.iterations; ++it) {
        const auto idx = sampler.next(config.batch_size);
        const PixelBatch batch = data.select(idx);
        const auto step = train_step(model, batch, config, state);
        result.loss_history.push_back(step.loss);
        result.data_loss_history.push_back(step.data_loss);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

GradientCheckResult gradient_check(const CnnModel& model, const PixelBatch& batch, double weight_decay, double h) {
    check_batch(model, batch);
    if (batch.size() == 0 || batch.size() > 8) throw Error("gradient check expects a batch of 1..8 samples");
    std::vector<double> p = to_double(model.parameters());
    std::vector<double> analytic(p.size());
    std::vector<std::uint8_t> base_pattern;
    objective_impl(model, p, batch, weight_decay, analytic, &base_pattern);

    GradientCheckResult result;
    std::vector<std::uint8_t> pattern_plus, pattern_minus;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double original = p[i];
        double step = h;
        double numeric = 0.0;
        for (;;) {
            bool stable = true;
            auto central = [&](double d) {
                pattern_plus.clear();
                pattern_minus.clear();
                p[i] = original + d;
                const double f_plus = objective_impl(model, p, batch, weight_decay, {}, &pattern_plus);
                p[i] = original - d;
                const double f_minus = objective_impl(model, p, batch, weight_decay, {}, &pattern_minus);
                p[i] = original;
                stable = stable && pattern_plus == base_pattern && pattern_minus == base_pattern;
                return (f_plus - f_minus) / (2.0 * d);
            };
            const double coarse = central(step);
            const double fine = central(step / 2.0);
            numeric = (4.0 * fine - coarse) / 3.0;
            if (stable || step < 1e-8) break;
            step /= 10.0;
            ++result.kink_retries;
        }
        const double abs_err = std::abs(analytic[i] - numeric);
        const double rel = abs_err / std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
        if (rel > result.max_relative_error) {
            result.max_relative_error = rel;
            result.worst_parameter = i;
        }
        result.max_absolute_error = std::max(result.max_absolute_error, abs_err);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void save_model(const CnnModel& model, const std::filesystem::path& path) {
    const auto& a = model.architecture();
    json doc;
    doc["format"] = "waxsep-cnn";
    doc["version"] = 1;
    doc["kind"] = std::string(to_string(a.kind));
    doc["input_channels"] = a.input_channels;
    doc["conv_filters"] = a.conv_filters;
    doc["hidden"] = a.hidden;
    doc["merge"] = a.merge;
    doc["coord_hidden"] = a.coord_hidden;
    doc["layers"] = json::array();
    for (const auto& l : model.layers())
        doc["layers"].push_back({{"name", l.name}, {"offset", l.offset}, {"outputs", l.outputs}, {"inputs", l.inputs}});
    doc["input_mean"] = std::vector<double>(model.input_mean().begin(), model.input_mean().end());
    doc["input_scale"] = std::vector<double>(model.input_scale().begin(), model.input_scale().end());
    doc["parameters"] = std::vector<float>(model.parameters().begin(), model.parameters().end());
    std::ofstream out(path);
    if (!out) throw Error("unwritable path: " + path.string());
    out << doc.dump() << '\n';
}

CnnModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("missing file: " + path.string());
    try {
        const json doc = json::parse(in);
        if (doc.at("format") != "waxsep-cnn" || doc.at("version") != 1)
            throw Error("unsupported model checkpoint " + path.string());
        Architecture a;
        a.kind = parse_model_kind(doc.at("kind").get<std::string>());
        a.input_channels = doc.at("input_channels").get<int>();
        a.conv_filters = doc.at("conv_filters").get<int>();
        a.hidden = doc.at("hidden").get<int>();
        a.merge = doc.at("merge").get<int>();
        a.coord_hidden = doc.at("coord_hidden").get<int>();
        CnnModel model(a, doc.at("parameters").get<std::vector<float>>());
        const auto& layers = doc.at("layers");
        if (layers.size() != model.layers().size()) throw Error("checkpoint layer table mismatch: " + path.string());
        for (std::size_t i = 0; i < layers.size(); ++i)
            if (layers[i].at("offset").get<std::size_t>() != model.layers()[i].offset ||
                layers[i].at("outputs").get<int>() != model.layers()[i].outputs ||
                layers[i].at("inputs").get<int>() != model.layers()[i].inputs)
                throw Error("checkpoint layer table mismatch: " + path.string());
        model.set_input_normalization(doc.at("input_mean").get<std::vector<double>>(),
                                      doc.at("input_scale").get<std::vector<double>>());
        return model;
    } catch (const json::exception& e) {
        throw Error("malformed model checkpoint " + path.string() + ": " + e.what());
    }
}

}  // namespace waxsep
