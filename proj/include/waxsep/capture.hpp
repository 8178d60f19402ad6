#pragma once

#include "waxsep/image.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace waxsep {

inline constexpr int kPatternCount = 25;

/// Channel combinations fed to the classifiers.
enum class InputMode { I, II, III, IV };

inline constexpr std::array<InputMode, 4> kAllModes{InputMode::I, InputMode::II, InputMode::III,
                                                    InputMode::IV};

std::string_view to_string(InputMode mode);
InputMode parse_input_mode(std::string_view text);
/// 3, 6, 6 or 15.
int channel_count(InputMode mode);

struct ImpedanceRecord {
    std::string berry_id;
    double z_rel_cw = 0.0;
};

/// One berry's acquisition before any separation.
struct CaptureSet {
    std::string id;
    RasterImage standard;
    std::vector<RasterImage> pattern_stack;  // 25 images, row-major over (dy, dx) shifts
    RasterImage black_capture;
    RasterImage parallel;
    RasterImage perpendicular;
    std::string cultivar;
    std::optional<ImpedanceRecord> impedance;

    /// Shape and count checks; throws waxsep::Error.
    void validate() const;
};

/// Separated reflection channels. Pattern and polarization halves are
/// independent; either may be absent.
struct SeparationResult {
    enum class Formulation { as_written, reference };

    std::optional<RasterImage> direct;
    std::optional<RasterImage> global;
    std::optional<RasterImage> diffuse;
    std::optional<RasterImage> specular;
    Formulation formulation = Formulation::reference;
    double b_value = 0.0;
    double clamp_fraction = 0.0;  // fraction of direct/global samples below zero
};

std::string_view to_string(SeparationResult::Formulation f);
SeparationResult::Formulation parse_formulation(std::string_view text);

/// Per-pixel multi-channel tensor for one input mode.
///
/// Plane order is fixed per mode:
///   I   = [standard]
///   II  = [diffuse, specular]
///   III = [direct, global]
///   IV  = [standard, specular, diffuse, direct, global]
class ChannelStack {
public:
    struct Plane {
        std::string name;
        RasterImage image;
    };

    ChannelStack(InputMode mode, std::vector<Plane> planes);

    InputMode mode() const noexcept { return mode_; }
    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channel_count() const noexcept { return channel_count_; }
    const std::vector<Plane>& planes() const noexcept { return planes_; }
    const RasterImage& plane(std::string_view name) const;

    /// Writes the 3x3 neighbourhood of (x, y) as [dy][dx][channel] with edge
    /// replication at the image border. `out.size()` must be 9 * channel_count().
    void crop3x3(int x, int y, std::span<float> out) const;

    /// Interleaved value of channel `c` (across all planes) at (x, y).
    float value(int x, int y, int c) const noexcept {
        return packed_[(static_cast<std::size_t>(y) * width_ + x) * channel_count_ + c];
    }

private:
    InputMode mode_;
    int width_ = 0;
    int height_ = 0;
    int channel_count_ = 0;
    std::vector<Plane> planes_;
    std::vector<float> packed_;
};

ChannelStack assemble_channel_stack(const CaptureSet& capture, const SeparationResult& separated,
                                    InputMode mode);

/// Plane names used by a mode, in stack order.
std::vector<std::string> plane_names(InputMode mode);

/// Channel indices of `mode` within the mode IV layout (used to derive a
/// lower mode's crops from mode IV crops without re-separating).
std::vector<int> channels_within_mode_iv(InputMode mode);

// ---------------------------------------------------------------------------
// Dataset manifest
// ---------------------------------------------------------------------------

struct ManifestEntry {
    std::string id;
    std::filesystem::path directory;            // capture directory, relative to the manifest
    std::string cultivar;
    std::optional<double> impedance;            // Z_rel CW
    std::optional<std::filesystem::path> labels;  // label sidecar, relative to the manifest
    std::optional<std::filesystem::path> truth;   // per-pixel ground truth (synthetic data)
};

struct DatasetManifest {
    static constexpr int kVersion = 1;

    std::vector<ManifestEntry> entries;
    std::uint64_t seed = 0;
    std::filesystem::path root;  // directory relative paths resolve against

    std::filesystem::path resolve(const std::filesystem::path& p) const {
        return p.is_absolute() ? p : root / p;
    }
    const ManifestEntry* find(std::string_view id) const;
};

/// Parses and validates: rejects duplicate ids and dangling paths.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Standard file names inside a capture directory.
namespace capture_files {
inline constexpr const char* kStandard = "standard.png";
inline constexpr const char* kBlack = "black.png";
inline constexpr const char* kParallel = "parallel.png";
inline constexpr const char* kPerpendicular = "perpendicular.png";
std::string pattern(int index);  // pattern_00.png ... pattern_24.png
}  // namespace capture_files

CaptureSet load_capture(const DatasetManifest& manifest, const ManifestEntry& entry);
void save_capture(const CaptureSet& capture, const std::filesystem::path& directory, int bit_depth = 8);

}  // namespace waxsep
