#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace waxsep {

/// Base class for every error raised by the library. Callers that only care
/// about "something in the data is wrong" catch this.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Row-major floating point image with 1 or 3 interleaved channels.
///
/// Intensities are nominally in [0,1] but are never clamped here; separation
/// formulas may legitimately push values outside that range. Clamping happens
/// only when an image is exported.
class RasterImage {
public:
    RasterImage() = default;
    RasterImage(int width, int height, int channels, double fill = 0.0);
    RasterImage(int width, int height, int channels, std::vector<double> data);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return channels_; }
    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
    }
    bool empty() const noexcept { return data_.empty(); }

    double& at(int x, int y, int c) noexcept { return data_[index(x, y, c)]; }
    double at(int x, int y, int c) const noexcept { return data_[index(x, y, c)]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    bool same_shape(const RasterImage& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
    }

    /// Throws if any sample is NaN or infinite.
    void check_finite() const;

private:
    std::size_t index(int x, int y, int c) const noexcept {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                static_cast<std::size_t>(x)) * static_cast<std::size_t>(channels_) +
               static_cast<std::size_t>(c);
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

/// Throws waxsep::Error naming `what` when the two images differ in shape.
void require_same_shape(const RasterImage& a, const RasterImage& b, const std::string& what);

/// Reads PNG (8/16-bit gray, gray+alpha, RGB, RGBA, palette) or binary PNM
/// (P5/P6). Intensities are normalized by the bit depth; alpha is dropped.
RasterImage read_image(const std::filesystem::path& path);

/// Writes PNG or PNM depending on the extension (.png, .ppm, .pgm, .pnm).
/// Values are clamped to [0,1] and quantized to `bit_depth` (8 or 16).
void write_image(const RasterImage& image, const std::filesystem::path& path, int bit_depth = 16);

/// Encodes to an in-memory PNG byte string (used by the annotation service).
std::string encode_png(const RasterImage& image, int bit_depth = 8);

/// Single-channel 8-bit palette image for label maps.
struct IndexedImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> indices;
};

struct PaletteColor {
    std::uint8_t r, g, b;
};

void write_indexed_png(const IndexedImage& image, std::span<const PaletteColor> palette,
                       const std::filesystem::path& path);

/// Reads the raw palette indices (or gray values of an 8-bit gray PNG).
IndexedImage read_indexed_png(const std::filesystem::path& path);

}  // namespace waxsep
