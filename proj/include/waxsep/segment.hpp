#pragma once

#include "waxsep/capture.hpp"
#include "waxsep/detect.hpp"
#include "waxsep/labels.hpp"
#include "waxsep/nn.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace waxsep {

/// Per-pixel segmentation classes; codes 0..2 match segmentation_class.
namespace label_code {
inline constexpr std::uint8_t wax = 0;
inline constexpr std::uint8_t nowax = 1;
inline constexpr std::uint8_t other = 2;
inline constexpr std::uint8_t outside = 3;
}  // namespace label_code

struct LabelMap {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> labels;  // row-major label_code values

    LabelMap() = default;
    LabelMap(int w, int h, std::uint8_t fill = label_code::outside);

    std::uint8_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t& at(int x, int y) { return labels[static_cast<std::size_t>(y) * width + x]; }
    friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

/// Runs the 3-class wax model over every pixel inside the AoI circle.
LabelMap classify_aoi(const CnnModel& model, const ChannelStack& stack, const AoI& aoi);

struct BoundingBox {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;
    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct WaxRegion {
    std::uint8_t cls = label_code::wax;
    std::size_t size = 0;
    double centroid_x = 0.0;
    double centroid_y = 0.0;
    BoundingBox bbox;
    std::size_t first_pixel = 0;  // scanline index of the first pixel (tie-break key)
    friend bool operator==(const WaxRegion&, const WaxRegion&) = default;
};

/// 4-connected components of the wax and nowax classes, largest first;
/// equal sizes ordered by the scanline position of their first pixel.
std::vector<WaxRegion> extract_regions(const LabelMap& map);

struct WaxReport {
    std::string berry_id;
    std::size_t wax_pixels = 0;
    std::size_t nowax_pixels = 0;
    std::size_t other_pixels = 0;
    double wax_proportion = 0.0;  // wax / (wax + nowax)
    std::vector<WaxRegion> regions;
};

/// Throws when the map holds no wax or nowax pixel.
WaxReport quantify_wax(const LabelMap& map, std::string berry_id = {});

std::string wax_report_json(const WaxReport& report);

/// wax green, nowax red, other blue; outside pixels keep the source image
/// (the standard plane when the stack has one, else the first plane).
RasterImage render_overlay(const ChannelStack& stack, const LabelMap& map);

/// Detection, AoI estimation, segmentation and quantification of one stack.
struct StackAnalysis {
    DetectionResult detection;
    LabelMap labels;
    WaxReport report;
};

/// Throws when no berry is found or the AoI holds no berry-surface pixel.
StackAnalysis analyze_stack(const CnnModel& berry_model, const CnnModel& wax_model, const ChannelStack& stack,
                            std::string berry_id = {}, const std::vector<int>& scales = kDefaultScales);

void write_label_map(const LabelMap& map, const std::filesystem::path& path);
LabelMap read_label_map(const std::filesystem::path& path);

}  // namespace waxsep
