#include "waxsep/detect.hpp"

#include "waxsep/labels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace waxsep {

int PatternTemplate::reach() const noexcept {
    int r = 0;
    for (const auto& o : offsets) r = std::max({r, std::abs(o.dx), std::abs(o.dy)});
    return r;
}

PatternTemplate build_template(int patch_size) {
    if (patch_size < 4) throw Error("patch size must be >= 4, got " + std::to_string(patch_size));
    PatternTemplate t;
    t.patch_size = patch_size;
    t.inner_radius = std::max(patch_size / 4, 1);
    t.boundary_radius = std::max(patch_size / 2 - 1, t.inner_radius);
    t.offsets[0] = {0, 0};
    for (int k = 0; k < 8; ++k) {
        const double angle = k * std::numbers::pi / 4.0;
        const double c = std::cos(angle), s = std::sin(angle);
        t.offsets[1 + k] = {static_cast<int>(std::lround(t.inner_radius * c)),
                            static_cast<int>(std::lround(t.inner_radius * s))};
        t.offsets[9 + k] = {static_cast<int>(std::lround(t.boundary_radius * c)),
                            static_cast<int>(std::lround(t.boundary_radius * s))};
    }
    return t;
}

// ---------------------------------------------------------------------------

SensorClassifier::SensorClassifier(int width, int height)
    : width_(width), height_(height), cache_(static_cast<std::size_t>(width) * height, -1) {
    if (width <= 0 || height <= 0) throw Error("zero-dimension image");
}

bool SensorClassifier::is_berry(int x, int y) {
    ++queries_;
    auto& slot = cache_[static_cast<std::size_t>(y) * width_ + x];
    if (slot < 0) {
        slot = classify(x, y) ? 1 : 0;
        ++evaluations_;
    }
    return slot == 1;
}

CnnSensorClassifier::CnnSensorClassifier(const CnnModel& model, const ChannelStack& stack)
    : SensorClassifier(stack.width(), stack.height()),
      stack_(stack),
      predictor_(model),
      crop_(static_cast<std::size_t>(9 * stack.channel_count())) {
    const auto& a = model.architecture();
    if (a.kind != ModelKind::berry) throw Error("detection needs a berry model");
    if (a.input_channels != stack.channel_count())
        throw Error("shape mismatch: model expects " + std::to_string(a.input_channels) + " channels, stack has " +
                    std::to_string(stack.channel_count()));
}

bool CnnSensorClassifier::classify(int x, int y) {
    stack_.crop3x3(x, y, crop_);
    const float cx = static_cast<float>(x) / static_cast<float>(width());
    const float cy = static_cast<float>(y) / static_cast<float>(height());
    return predictor_.predict(crop_, cx, cy) == detection_class::berry;
}

OracleSensorClassifier::OracleSensorClassifier(int width, int height, std::function<bool(int, int)> truth)
    : SensorClassifier(width, height), truth_(std::move(truth)) {}

// ---------------------------------------------------------------------------

bool TemplateHit::hit() const noexcept {
    for (int i = 0; i < PatternTemplate::kInterior; ++i)
        if (!votes[static_cast<std::size_t>(i)]) return false;
    return true;
}

bool placement_valid(const PatternTemplate& tmpl, int width, int height, int x, int y) noexcept {
    const int r = tmpl.reach();
    return x - r >= 0 && y - r >= 0 && x + r < width && y + r < height;
}

TemplateHit template_vote(SensorClassifier& classifier, const PatternTemplate& tmpl, int x, int y) {
    if (!placement_valid(tmpl, classifier.width(), classifier.height(), x, y))
        throw Error("template placement (" + std::to_string(x) + ", " + std::to_string(y) + ") at scale " +
                    std::to_string(tmpl.patch_size) + " is out of bounds");
    TemplateHit hit;
    hit.x = x;
    hit.y = y;
    hit.scale = tmpl.patch_size;
    for (int i = 0; i < PatternTemplate::kSensors; ++i) {
        const auto& o = tmpl.offsets[static_cast<std::size_t>(i)];
        hit.votes[static_cast<std::size_t>(i)] = classifier.is_berry(x + o.dx, y + o.dy);
    }
    return hit;
}

namespace {

// Interior-only vote with early exit; used by the extent scans. Only the
// interior sensors need to be inside the frame.
bool interior_vote(SensorClassifier& classifier, const PatternTemplate& tmpl, int x, int y) {
    for (int i = 0; i < PatternTemplate::kInterior; ++i) {
        const auto& o = tmpl.offsets[static_cast<std::size_t>(i)];
        const int sx = x + o.dx, sy = y + o.dy;
        if (sx < 0 || sy < 0 || sx >= classifier.width() || sy >= classifier.height()) return false;
        if (!classifier.is_berry(sx, sy)) return false;
    }
    return true;
}

// Distance travelled from (x, y) along (dx, dy) while the interior vote holds.
int scan_extent(SensorClassifier& classifier, const PatternTemplate& tmpl, int x, int y, int dx, int dy) {
    const int step = std::max(1, tmpl.patch_size / 8);
    int pass = 0;
    while (interior_vote(classifier, tmpl, x + dx * (pass + step), y + dy * (pass + step))) pass += step;
    int fail = pass + step;
    while (fail - pass > 1) {
        const int mid = pass + (fail - pass) / 2;
        if (interior_vote(classifier, tmpl, x + dx * mid, y + dy * mid))
            pass = mid;
        else
            fail = mid;
    }
    return pass;
}

}  // namespace

std::optional<TemplateHit> multiscale_search(SensorClassifier& classifier, const std::vector<int>& scales,
                                             SearchStats* stats) {
    const int w = classifier.width(), h = classifier.height();
    for (int scale : scales) {
        const auto tmpl = build_template(scale);
        const int stride = std::max(1, scale / 4);
        if (stats) stats->placement_bound += static_cast<std::size_t>(w / stride) * static_cast<std::size_t>(h / stride);
        const int r = tmpl.reach();
        for (int y = r; y + r < h; y += stride)
            for (int x = r; x + r < w; x += stride) {
                if (stats) ++stats->placements;
                auto vote = template_vote(classifier, tmpl, x, y);
                if (vote.hit()) return vote;
            }
    }
    return std::nullopt;
}

std::size_t AoI::pixel_count(int width, int height) const noexcept {
    std::size_t n = 0;
    const int y0 = std::max(0, static_cast<int>(std::floor(center_y - radius)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(center_y + radius)));
    const int x0 = std::max(0, static_cast<int>(std::floor(center_x - radius)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(center_x + radius)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) n += contains(x, y);
    return n;
}

AoI estimate_aoi(SensorClassifier& classifier, const TemplateHit& hit) {
    const auto tmpl = build_template(hit.scale);
    const int right = scan_extent(classifier, tmpl, hit.x, hit.y, 1, 0);
    const int left = scan_extent(classifier, tmpl, hit.x, hit.y, -1, 0);
    const int down = scan_extent(classifier, tmpl, hit.x, hit.y, 0, 1);
    const int up = scan_extent(classifier, tmpl, hit.x, hit.y, 0, -1);
    if (right == 0 && left == 0 && down == 0 && up == 0)
        return {static_cast<double>(hit.x), static_cast<double>(hit.y), tmpl.inner_radius + 1.0};

    AoI aoi;
    aoi.center_x = hit.x + (right - left) / 2.0;
    aoi.center_y = hit.y + (down - up) / 2.0;
    // Passing placements along the hit row/column are chords of the disk
    // shrunk by the inner ring; lift each to that disk's radius, then add the ring back.
    const double half_x = (right + left) / 2.0;
    const double half_y = (down + up) / 2.0;
    const double off_y = hit.y - aoi.center_y;
    const double off_x = hit.x - aoi.center_x;
    aoi.radius = 0.5 * (std::hypot(half_x, off_y) + std::hypot(half_y, off_x)) + tmpl.inner_radius + 1.0;
    return aoi;
}

DetectionResult detect_berry(SensorClassifier& classifier, const std::vector<int>& scales) {
    DetectionResult result;
    result.hit = multiscale_search(classifier, scales, &result.stats);
    if (result.hit) result.aoi = estimate_aoi(classifier, *result.hit);
    result.evaluations = classifier.evaluations();
    return result;
}

}  // namespace waxsep
