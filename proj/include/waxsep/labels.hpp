#pragma once

#include "waxsep/capture.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace waxsep {

enum class LabelTask { detection, segmentation };

std::string_view to_string(LabelTask task);
LabelTask parse_label_task(std::string_view text);

/// Class ids as used by the classifiers.
namespace detection_class {
inline constexpr int background = 0;
inline constexpr int berry = 1;
inline constexpr int count = 2;
}  // namespace detection_class

namespace segmentation_class {
inline constexpr int wax = 0;
inline constexpr int nowax = 1;
inline constexpr int other = 2;
inline constexpr int count = 3;
}  // namespace segmentation_class

/// Maps a class name ("berry", "background" / "wax", "nowax", "other") to its
/// id for the task; nullopt when the name does not belong to the task.
std::optional<int> class_id(LabelTask task, std::string_view name);
std::string_view class_name(LabelTask task, int id);

struct RectangleLabel {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;
    std::string cls;
    LabelTask task = LabelTask::detection;

    friend bool operator==(const RectangleLabel&, const RectangleLabel&) = default;
};

struct LabelSidecar {
    std::string capture_id;
    std::vector<RectangleLabel> rectangles;
    std::string annotator;
    std::string timestamp;
    std::int64_t version = 0;

    friend bool operator==(const LabelSidecar&, const LabelSidecar&) = default;
};

struct FieldError {
    std::string field;  // e.g. "rectangles[3].width"
    std::string message;
};

/// Validates against image bounds. Empty result means valid.
std::vector<FieldError> validate_sidecar(const LabelSidecar& sidecar, int image_width, int image_height);

std::string sidecar_to_json(const LabelSidecar& sidecar);
/// Throws waxsep::Error on malformed JSON or missing fields.
LabelSidecar sidecar_from_json(std::string_view text);

LabelSidecar load_sidecar(const std::filesystem::path& path);
/// Write-then-rename so a crash never leaves a truncated sidecar behind.
void save_sidecar_atomic(const LabelSidecar& sidecar, const std::filesystem::path& path);

/// Covers every pixel of `region` whose `classes` value is not `skip` with
/// rectangles: horizontal runs of equal class, merged downward while the run
/// below has identical span and class. `classes` is row-major width x height.
struct Region {
    int x = 0, y = 0, width = 0, height = 0;
};
std::vector<RectangleLabel> rectangles_from_class_grid(std::span<const int> classes, int width, int height,
                                                       Region region, LabelTask task, int skip = -1);

}  // namespace waxsep
