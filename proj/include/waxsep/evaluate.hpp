#pragma once

#include "waxsep/capture.hpp"
#include "waxsep/dataset.hpp"
#include "waxsep/nn.hpp"
#include "waxsep/segment.hpp"
#include "waxsep/stats.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace waxsep {

struct FoldPlan {
    int k = 3;
    std::uint64_t seed = 0;
    std::map<std::string, int> assignment;  // capture id -> fold

    std::vector<std::string> test_ids(int fold) const;
    std::vector<std::string> train_ids(int fold) const;
    std::vector<std::size_t> fold_sizes() const;
};

/// Shuffles each cultivar's entries with `seed` (cultivars in name order),
/// then deals them round-robin with one counter running across cultivars.
FoldPlan plan_folds(const DatasetManifest& manifest, int k, std::uint64_t seed);

/// correct / total over pixels where neither map is outside the AoI.
double pixel_accuracy(const LabelMap& predicted, const LabelMap& truth);
/// correct / total over equally sized label vectors.
double pixel_accuracy(std::span<const int> predicted, std::span<const int> truth);

struct CrossValidationConfig {
    int k = 3;
    std::uint64_t seed = 1;
    TrainConfig train{};
    std::size_t berry_train_cap = 4000;  // per class
    std::size_t wax_train_cap = 4000;
    std::size_t eval_cap = 2000;         // per class, test fold
    bool estimate_proportions = true;    // run detection + segmentation on test captures
};

struct FoldResult {
    int fold = 0;
    double berry_accuracy = 0.0;
    double wax_accuracy = 0.0;
    std::size_t berry_train_pixels = 0;
    std::size_t wax_train_pixels = 0;
    std::size_t berry_test_pixels = 0;
    std::size_t wax_test_pixels = 0;
};

struct ModeResult {
    InputMode mode = InputMode::I;
    std::vector<FoldResult> folds;
    double mean_berry_accuracy = 0.0;
    double mean_wax_accuracy = 0.0;
};

struct BerryEstimate {
    std::string id;
    std::string cultivar;
    InputMode mode = InputMode::I;
    int fold = 0;
    std::optional<double> wax_proportion;
    std::optional<double> impedance;
    std::string error;
};

struct CultivarSummary {
    std::string cultivar;
    std::optional<Quartiles> proportion;
    std::optional<Quartiles> impedance;
};

struct CorrelationSummary {
    InputMode mode = InputMode::I;
    std::optional<PearsonResult> result;
    std::string error;
};

struct EvaluationReport {
    int k = 3;
    std::uint64_t seed = 0;
    std::map<std::string, int> folds;
    std::vector<ModeResult> modes;  // canonical mode order
    std::vector<BerryEstimate> estimates;
    InputMode correlation_mode = InputMode::IV;
    std::vector<CultivarSummary> cultivars;
    CorrelationSummary correlation;
    std::map<std::string, double> timings_seconds;  // compute timings, emitted separately

    const ModeResult* find(InputMode mode) const;
};

/// For each mode and fold: trains both CNNs on the training folds' labeled
/// pixels, scores them on the test fold's labeled pixels and, optionally,
/// runs detection + segmentation on every test capture. Stacks come from
/// `stacks` (mode IV is requested; lower modes are sliced from it).
EvaluationReport cross_validate(const DatasetManifest& manifest, const std::vector<LabelSidecar>& sidecars,
                                std::vector<InputMode> modes, const CrossValidationConfig& config,
                                const StackProvider& stacks);

EvaluationReport cross_validate(const DatasetManifest& manifest, std::vector<InputMode> modes,
                                const CrossValidationConfig& config);

/// Fills `cultivars` and `correlation` from the estimates of `mode`.
void summarize_estimates(EvaluationReport& report, InputMode mode);

/// report.json, table1.csv, boxplot_data.csv, correlation.csv (deterministic)
/// plus timings.json.
void emit_report(const EvaluationReport& report, const std::filesystem::path& out_dir);

/// Lower-mode stack built from the planes of a mode IV stack.
ChannelStack slice_stack(const ChannelStack& full, InputMode mode);

}  // namespace waxsep
