#pragma once

#include "waxsep/capture.hpp"
#include "waxsep/image.hpp"

#include <array>
#include <span>
#include <utility>

namespace waxsep {

struct PixelShift {
    int dx = 0;
    int dy = 0;
};

/// 25 shifted binary checkerboards.
///
/// Mask k uses shift offsets()[k]; shifts are row-major over (dy, dx) with
/// stride ceil(cell/4), i.e. {0,2,4,6,8}^2 for 8-pixel cells. Pixel (x, y) is
/// lit in mask k iff floor((x-dx)/cell) + floor((y-dy)/cell) is even, so the
/// top-left cell of the unshifted pattern is transparent.
class PatternSet {
public:
    PatternSet(int width, int height, int cell_size);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int cell_size() const noexcept { return cell_; }
    int shift_stride() const noexcept { return stride_; }
    const std::array<PixelShift, kPatternCount>& offsets() const noexcept { return offsets_; }

    bool lit(int mask, int x, int y) const noexcept;
    /// Materializes mask k as a 1-channel 0/1 image.
    RasterImage mask(int k) const;

private:
    int width_;
    int height_;
    int cell_;
    int stride_;
    std::array<PixelShift, kPatternCount> offsets_{};
};

PatternSet generate_patterns(int width, int height, int cell_size = 8);

struct BlackLevel {
    double b_value = 0.0;
    RasterImage source;  // per-pixel black capture, kept for diagnostics
};

/// Mean over all pixels and channels of the black-frame capture.
BlackLevel estimate_black_value(const RasterImage& black_capture);

struct PatternComponents {
    RasterImage direct;
    RasterImage global;
    double negative_fraction = 0.0;  // share of direct/global samples below zero
};

/// Direct/global exactly as the printed formulas, no clamping:
///   direct = min - max / (b - 1)
///   global = 2 max - direct / (b + 1)
PatternComponents separate_pattern_as_written(std::span<const RasterImage> stack, const BlackLevel& black);

/// Max/min separation for a projector whose dark cells leak fraction b:
///   direct = (max - min) / (1 - b)
///   global = 2 (min - b max) / (1 - b^2)
/// Returned unclamped; negative_fraction reports how much clamp_nonnegative
/// would touch.
PatternComponents separate_pattern_reference(std::span<const RasterImage> stack, const BlackLevel& black);

struct PolarizationComponents {
    RasterImage diffuse;
    RasterImage specular;
};

/// diffuse = 2 perpendicular; specular = parallel - diffuse / 2.
PolarizationComponents separate_polarization(const RasterImage& parallel, const RasterImage& perpendicular);

enum class SeparationMode { pattern, polarization, both };
SeparationMode parse_separation_mode(std::string_view text);

SeparationResult separate_capture(const CaptureSet& capture, SeparationMode mode,
                                  SeparationResult::Formulation formulation);

/// Clamps every separated channel at zero in place.
void clamp_nonnegative(SeparationResult& result);

}  // namespace waxsep
