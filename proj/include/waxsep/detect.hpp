#pragma once

#include "waxsep/capture.hpp"
#include "waxsep/nn.hpp"

#include <array>
#include <functional>
#include <optional>
#include <vector>

namespace waxsep {

struct Offset {
    int dx = 0;
    int dy = 0;
    friend bool operator==(const Offset&, const Offset&) = default;
};

/// 17 sensor pixels: [0] center, [1..8] inner ring, [9..16] boundary ring,
/// rings sampled every 45 degrees starting at +x.
struct PatternTemplate {
    static constexpr int kSensors = 17;
    static constexpr int kInterior = 9;

    int patch_size = 0;
    int inner_radius = 0;
    int boundary_radius = 0;
    std::array<Offset, kSensors> offsets{};

    /// Largest |dx| or |dy| over all sensors.
    int reach() const noexcept;
};

/// Throws for patch_size < 4.
PatternTemplate build_template(int patch_size);

/// Berry/background decision for single pixels, memoized per pixel.
/// `evaluations()` counts distinct pixels actually classified.
class SensorClassifier {
public:
    SensorClassifier(int width, int height);
    virtual ~SensorClassifier() = default;

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    bool is_berry(int x, int y);
    std::size_t evaluations() const noexcept { return evaluations_; }
    std::size_t queries() const noexcept { return queries_; }

protected:
    virtual bool classify(int x, int y) = 0;

private:
    int width_;
    int height_;
    std::vector<std::int8_t> cache_;
    std::size_t evaluations_ = 0;
    std::size_t queries_ = 0;
};

/// Berry CNN on the 3x3 crop plus normalized (x/W, y/H) coordinates.
class CnnSensorClassifier final : public SensorClassifier {
public:
    CnnSensorClassifier(const CnnModel& model, const ChannelStack& stack);

protected:
    bool classify(int x, int y) override;

private:
    const ChannelStack& stack_;
    PixelPredictor predictor_;
    std::vector<float> crop_;
};

/// Ground-truth stand-in for the CNN.
class OracleSensorClassifier final : public SensorClassifier {
public:
    OracleSensorClassifier(int width, int height, std::function<bool(int, int)> truth);

protected:
    bool classify(int x, int y) override { return truth_(x, y); }

private:
    std::function<bool(int, int)> truth_;
};

struct TemplateHit {
    int x = 0;
    int y = 0;
    int scale = 0;
    std::array<bool, PatternTemplate::kSensors> votes{};

    /// Center and all inner-ring sensors voted berry.
    bool hit() const noexcept;
};

/// True when every sensor of `tmpl` placed at (x, y) lies inside the image.
bool placement_valid(const PatternTemplate& tmpl, int width, int height, int x, int y) noexcept;

/// Classifies all 17 sensors. Throws when the placement is out of bounds.
TemplateHit template_vote(SensorClassifier& classifier, const PatternTemplate& tmpl, int x, int y);

inline const std::vector<int> kDefaultScales{128, 64, 32, 16, 8, 4};

struct SearchStats {
    std::size_t placements = 0;
    std::size_t placement_bound = 0;  // sum over scales of (W/stride) * (H/stride)
};

/// Raster scan per scale (stride patch/4, top-left first); returns the first
/// hit of the first scale that has one.
std::optional<TemplateHit> multiscale_search(SensorClassifier& classifier,
                                             const std::vector<int>& scales = kDefaultScales,
                                             SearchStats* stats = nullptr);

struct AoI {
    double center_x = 0.0;
    double center_y = 0.0;
    double radius = 0.0;

    bool contains(int x, int y) const noexcept {
        const double dx = x - center_x, dy = y - center_y;
        return dx * dx + dy * dy <= radius * radius;
    }
    /// Pixels of the circle clipped to a width x height frame.
    std::size_t pixel_count(int width, int height) const noexcept;
};

/// Four directional interior-vote scans from the hit (stride patch/8, refined
/// to single pixels); only the 9 interior sensors must stay in the frame.
/// Falls back to AoI(hit, inner ring + 1) when no scan advances.
AoI estimate_aoi(SensorClassifier& classifier, const TemplateHit& hit);

struct DetectionResult {
    std::optional<TemplateHit> hit;
    std::optional<AoI> aoi;
    std::size_t evaluations = 0;
    SearchStats stats;
};

DetectionResult detect_berry(SensorClassifier& classifier, const std::vector<int>& scales = kDefaultScales);

}  // namespace waxsep
