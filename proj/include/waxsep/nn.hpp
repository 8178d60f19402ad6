#pragma once

#include "waxsep/image.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace waxsep {

/// Raised when training produces a non-finite loss.
class TrainingDiverged : public Error {
public:
    using Error::Error;
};

enum class ModelKind { berry, wax };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

/// Layer widths of the two 3x3-crop pixel classifiers.
///
/// berry: conv3x3(valid) -> ReLU -> FC hidden -> ReLU ──┐
///        coords -> FC coord_hidden -> ReLU ───────────┴ concat -> FC merge -> ReLU -> FC 2
/// wax:   conv3x3(valid) -> ReLU -> FC hidden -> ReLU -> FC merge -> ReLU -> FC 3
struct Architecture {
    ModelKind kind = ModelKind::berry;
    int input_channels = 3;
    int conv_filters = 32;
    int hidden = 64;
    int merge = 32;
    int coord_hidden = 16;

    int classes() const noexcept { return kind == ModelKind::berry ? 2 : 3; }
    bool coordinate_branch() const noexcept { return kind == ModelKind::berry; }
    int crop_values() const noexcept { return 9 * input_channels; }
};

/// Dense layer (weights row-major [out][in], then bias) inside the flat
/// parameter vector.
struct LayerView {
    std::string name;
    std::size_t offset = 0;
    int outputs = 0;
    int inputs = 0;

    std::size_t weight_count() const noexcept { return static_cast<std::size_t>(outputs) * inputs; }
    std::size_t bias_offset() const noexcept { return offset + weight_count(); }
    std::size_t size() const noexcept { return weight_count() + static_cast<std::size_t>(outputs); }
};

std::vector<LayerView> layer_table(const Architecture& arch);

/// Samples for a whole batch, stored flat: crops are [n][dy][dx][channel],
/// coordinates [n][2] as (x/width, y/height).
struct PixelBatch {
    int channels = 0;
    bool has_coords = false;
    std::vector<float> crops;
    std::vector<float> coords;
    std::vector<int> labels;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t crop_values() const noexcept { return 9 * static_cast<std::size_t>(channels); }
    std::span<const float> crop(std::size_t i) const {
        return std::span<const float>(crops).subspan(i * crop_values(), crop_values());
    }
    void append(std::span<const float> crop, float cx, float cy, int label);
    /// New batch with the given sample indices.
    PixelBatch select(std::span<const std::size_t> indices) const;
    /// New batch keeping only the listed channels of every crop.
    PixelBatch select_channels(std::span<const int> channel_indices) const;
    void validate() const;
};

class CnnModel {
public:
    CnnModel() = default;
    CnnModel(Architecture arch, std::vector<float> parameters);

    const Architecture& architecture() const noexcept { return arch_; }
    const std::vector<LayerView>& layers() const noexcept { return layers_; }
    std::span<const float> parameters() const noexcept { return params_; }
    std::span<float> parameters() noexcept { return params_; }
    std::size_t parameter_count() const noexcept { return params_.size(); }
    int classes() const noexcept { return arch_.classes(); }

    /// Per-channel affine input normalization applied before the conv layer;
    /// identity until set.
    std::span<const double> input_mean() const noexcept { return mean_; }
    std::span<const double> input_scale() const noexcept { return scale_; }
    void set_input_normalization(std::vector<double> mean, std::vector<double> inv_std);
    void fit_input_normalization(const PixelBatch& data);

private:
    Architecture arch_;
    std::vector<LayerView> layers_;
    std::vector<float> params_;
    std::vector<double> mean_;
    std::vector<double> scale_;
};

/// He-scaled normal weights, zero biases; deterministic per seed.
CnnModel init_model(ModelKind kind, int input_channels, std::uint64_t seed, Architecture widths = {});

/// Softmax probabilities, row-major [n][classes].
std::vector<double> forward(const CnnModel& model, const PixelBatch& batch);

struct Prediction {
    int label = 0;
    std::vector<double> probabilities;
};

/// Argmax of the softmax; ties go to the lower class id.
Prediction predict_pixel(const CnnModel& model, std::span<const float> crop, std::span<const float> coords = {});
/// Reusable single-sample evaluator: parameters are converted to float64
/// once. Not thread-safe; use one instance per thread. The model must outlive it.
class PixelPredictor {
public:
    explicit PixelPredictor(const CnnModel& model);
    /// Returns the argmax class; fills `probabilities` when non-empty.
    int predict(std::span<const float> crop, float cx = 0.0f, float cy = 0.0f,
                std::span<double> probabilities = {});

private:
    struct State;
    std::shared_ptr<State> state_;
};

std::vector<int> predict_labels(const CnnModel& model, const PixelBatch& batch);
double accuracy(const CnnModel& model, const PixelBatch& batch);

struct TrainConfig {
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double base_lr = 1e-4;
    double gamma = 0.1;
    std::vector<long> steps{50'000, 100'000};
    double schedule_scale = 0.1;  // desk-scale: thresholds 5k / 10k
    int batch_size = 256;
    long iterations = 15'000;
    std::uint64_t seed = 1;
    bool balance_classes = true;

    /// base_lr * gamma^(number of scaled thresholds <= iteration).
    double learning_rate(long iteration) const;
    void validate() const;
};

struct OptimizerState {
    std::vector<double> velocity;
    long iteration = 0;
};

struct StepResult {
    double loss = 0.0;       // data loss + weight decay term
    double data_loss = 0.0;  // mean softmax cross-entropy
    double learning_rate = 0.0;
};

/// One SGD-with-momentum step: v <- m v - lr grad; p <- p + v.
StepResult train_step(CnnModel& model, const PixelBatch& batch, const TrainConfig& config, OptimizerState& state);

struct TrainResult {
    std::vector<double> loss_history;
    std::vector<double> data_loss_history;
};

/// Fits the input normalization on `data`, then runs config.iterations
/// steps over (optionally class-balanced) shuffled mini-batches.
TrainResult train(CnnModel& model, const PixelBatch& data, const TrainConfig& config);

/// Full objective (mean cross-entropy + weight_decay/2 |p|^2) and its
/// gradient on a double-precision copy of the parameters.
double objective(const CnnModel& model, std::span<const double> params, const PixelBatch& batch,
                 double weight_decay, std::span<double> gradient = {});

struct GradientCheckResult {
    double max_relative_error = 0.0;
    double max_absolute_error = 0.0;
    std::size_t worst_parameter = 0;
    std::size_t kink_retries = 0;  // parameters re-probed with a smaller step
};

/// Central differences (h = 1e-3, float64) against the analytic gradient for
/// every parameter, with one Richardson step from h and h/2. A probe that
/// flips any ReLU on/off state is re-run with h/10 until the activation
/// pattern is stable on [p-h, p+h].
GradientCheckResult gradient_check(const CnnModel& model, const PixelBatch& batch, double weight_decay = 5e-4,
                                   double h = 1e-3);

void save_model(const CnnModel& model, const std::filesystem::path& path);
CnnModel load_model(const std::filesystem::path& path);

}  // namespace waxsep
