#pragma once

#include "waxsep/capture.hpp"
#include "waxsep/evaluate.hpp"
#include "waxsep/nn.hpp"
#include "waxsep/segment.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace waxsep {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int usage = 2;
inline constexpr int failure = 3;
}  // namespace exit_code

struct PipelineOptions {
    InputMode mode = InputMode::IV;
    SeparationResult::Formulation formulation = SeparationResult::Formulation::reference;
    std::vector<int> scales = kDefaultScales;
    unsigned threads = 0;  // 0: WAXSEP_THREADS, else hardware concurrency
    bool write_images = true;
};

struct CaptureOutcome {
    std::string id;
    std::string cultivar;
    std::optional<double> impedance;
    std::optional<AoI> aoi;
    int scale = 0;
    std::size_t evaluations = 0;
    std::optional<WaxReport> report;
    std::string error;

    bool ok() const noexcept { return report.has_value(); }
};

/// Separation -> stack -> detection -> AoI -> segmentation -> report for one
/// capture. Stage failures are returned in `error`, never thrown. When
/// `out_dir` is given, aoi.json, wax_report.json and (optionally)
/// labelmap.png / overlay.png are written there.
CaptureOutcome process_capture(const CaptureSet& capture, const CnnModel& berry_model, const CnnModel& wax_model,
                               const PipelineOptions& options, const std::filesystem::path* out_dir = nullptr);

struct PipelineReport {
    InputMode mode = InputMode::IV;
    std::vector<CaptureOutcome> captures;  // ordered by capture id
    std::vector<CultivarSummary> cultivars;
    std::optional<PearsonResult> correlation;
    std::string correlation_error;
    int exit_status = exit_code::ok;

    std::size_t succeeded() const;
};

/// Correlation and per-cultivar quartiles over successful outcomes.
void summarize_outcomes(PipelineReport& report);

/// Runs every manifest capture through process_capture on a worker pool and
/// writes captures/<id>/..., report.json, correlation.csv and
/// boxplot_data.csv. exit_status is failure iff no capture succeeded
/// (including the empty manifest).
PipelineReport run_pipeline(const DatasetManifest& manifest, const CnnModel& berry_model, const CnnModel& wax_model,
                            const PipelineOptions& options, const std::filesystem::path& out_dir);

void write_pipeline_report(const PipelineReport& report, const std::filesystem::path& out_dir);

std::string aoi_json(const CaptureOutcome& outcome);

/// `requested` if non-zero, else WAXSEP_THREADS if set, else hardware
/// concurrency; at least 1.
unsigned worker_count(unsigned requested = 0);

}  // namespace waxsep
