#include "waxsep/segment.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace waxsep {

LabelMap::LabelMap(int w, int h, std::uint8_t fill)
    : width(w), height(h), labels(static_cast<std::size_t>(w) * h, fill) {
    if (w <= 0 || h <= 0) throw Error("zero-dimension label map");
}

LabelMap classify_aoi(const CnnModel& model, const ChannelStack& stack, const AoI& aoi) {
    const auto& a = model.architecture();
    if (a.classes() != 3 || a.kind != ModelKind::wax)
        throw Error("segmentation needs a 3-class wax model, got " + std::to_string(a.classes()) + " classes");
    if (a.input_channels != stack.channel_count())
        throw Error("shape mismatch: model expects " + std::to_string(a.input_channels) + " channels, stack has " +
                    std::to_string(stack.channel_count()));
    if (!(aoi.radius > 0.0)) throw Error("AoI radius must be positive");

    LabelMap map(stack.width(), stack.height());
    PixelPredictor predictor(model);
    std::vector<float> crop(static_cast<std::size_t>(a.crop_values()));
    for (int y = 0; y < map.height; ++y)
        for (int x = 0; x < map.width; ++x) {
            if (!aoi.contains(x, y)) continue;
            stack.crop3x3(x, y, crop);
            map.at(x, y) = static_cast<std::uint8_t>(predictor.predict(crop));
        }
    return map;
}

namespace {

struct DisjointSet {
    std::vector<std::size_t> parent;
    explicit DisjointSet(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
    std::size_t find(std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    }
    // Keeps the smaller index as root so roots are first pixels in scanline order.
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (b < a) std::swap(a, b);
        parent[b] = a;
    }
};

bool is_region_class(std::uint8_t c) { return c == label_code::wax || c == label_code::nowax; }

}  // namespace

std::vector<WaxRegion> extract_regions(const LabelMap& map) {
    const int w = map.width, h = map.height;
    const std::size_t n = map.labels.size();
    DisjointSet sets(n);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const auto c = map.labels[i];
            if (!is_region_class(c)) continue;
            if (x > 0 && map.labels[i - 1] == c) sets.unite(i, i - 1);
            if (y > 0 && map.labels[i - static_cast<std::size_t>(w)] == c) sets.unite(i, i - w);
        }

    struct Acc {
        std::size_t size = 0;
        double sx = 0.0, sy = 0.0;
        int x0, y0, x1, y1;
    };
    std::vector<std::size_t> slot(n, SIZE_MAX);
    std::vector<WaxRegion> regions;
    std::vector<Acc> acc;
    for (std::size_t i = 0; i < n; ++i) {
        if (!is_region_class(map.labels[i])) continue;
        const std::size_t root = sets.find(i);
        const int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
        if (slot[root] == SIZE_MAX) {
            slot[root] = regions.size();
            WaxRegion r;
            r.cls = map.labels[i];
            r.first_pixel = root;
            regions.push_back(r);
            acc.push_back({0, 0.0, 0.0, x, y, x, y});
        }
        auto& a = acc[slot[root]];
        ++a.size;
        a.sx += x;
        a.sy += y;
        a.x0 = std::min(a.x0, x);
        a.x1 = std::max(a.x1, x);
        a.y0 = std::min(a.y0, y);
        a.y1 = std::max(a.y1, y);
    }
    for (std::size_t k = 0; k < regions.size(); ++k) {
        const auto& a = acc[k];
        auto& r = regions[k];
        r.size = a.size;
        r.centroid_x = a.sx / static_cast<double>(a.size);
        r.centroid_y = a.sy / static_cast<double>(a.size);
        r.bbox = {a.x0, a.y0, a.x1 - a.x0 + 1, a.y1 - a.y0 + 1};
    }
    std::stable_sort(regions.begin(), regions.end(), [](const WaxRegion& a, const WaxRegion& b) {
        if (a.size != b.size) return a.size > b.size;
        return a.first_pixel < b.first_pixel;
    });
    return regions;
}

WaxReport quantify_wax(const LabelMap& map, std::string berry_id) {
    WaxReport report;
    report.berry_id = std::move(berry_id);
    for (auto c : map.labels) {
        if (c == label_code::wax)
            ++report.wax_pixels;
        else if (c == label_code::nowax)
            ++report.nowax_pixels;
        else if (c == label_code::other)
            ++report.other_pixels;
    }
    const std::size_t surface = report.wax_pixels + report.nowax_pixels;
    if (surface == 0)
        throw Error("no berry-surface pixels in label map" +
                    (report.berry_id.empty() ? std::string{} : " for " + report.berry_id) + " (detection failure?)");
    report.wax_proportion = static_cast<double>(report.wax_pixels) / static_cast<double>(surface);
    report.regions = extract_regions(map);
    return report;
}

std::string wax_report_json(const WaxReport& report) {
    nlohmann::ordered_json doc;
    doc["berry_id"] = report.berry_id;
    doc["wax_pixels"] = report.wax_pixels;
    doc["nowax_pixels"] = report.nowax_pixels;
    doc["other_pixels"] = report.other_pixels;
    doc["wax_proportion"] = report.wax_proportion;
    doc["regions"] = nlohmann::ordered_json::array();
    for (const auto& r : report.regions)
        doc["regions"].push_back({{"class", r.cls == label_code::wax ? "wax" : "nowax"},
                                  {"size", r.size},
                                  {"centroid", {r.centroid_x, r.centroid_y}},
                                  {"bbox", {r.bbox.x, r.bbox.y, r.bbox.width, r.bbox.height}}});
    return doc.dump(2);
}

namespace {
constexpr std::array<std::array<double, 3>, 3> kOverlayColors{{{0.0, 1.0, 0.0}, {1.0, 0.0, 0.0}, {0.0, 0.0, 1.0}}};
constexpr std::array<PaletteColor, 4> kLabelPalette{{{0, 255, 0}, {255, 0, 0}, {0, 0, 255}, {0, 0, 0}}};
}  // namespace

RasterImage render_overlay(const ChannelStack& stack, const LabelMap& map) {
    if (map.width != stack.width() || map.height != stack.height())
        throw Error("shape mismatch: label map " + std::to_string(map.width) + "x" + std::to_string(map.height) +
                    " vs stack " + std::to_string(stack.width()) + "x" + std::to_string(stack.height()));
    const RasterImage* source = &stack.planes().front().image;
    for (const auto& p : stack.planes())
        if (p.name == "standard") source = &p.image;

    RasterImage out(map.width, map.height, 3);
    for (int y = 0; y < map.height; ++y)
        for (int x = 0; x < map.width; ++x) {
            const auto c = map.at(x, y);
            for (int k = 0; k < 3; ++k) {
                if (c == label_code::outside)
                    out.at(x, y, k) = source->at(x, y, source->channels() == 3 ? k : 0);
                else
                    out.at(x, y, k) = kOverlayColors[c][static_cast<std::size_t>(k)];
            }
        }
    return out;
}

StackAnalysis analyze_stack(const CnnModel& berry_model, const CnnModel& wax_model, const ChannelStack& stack,
                            std::string berry_id, const std::vector<int>& scales) {
    StackAnalysis out;
    CnnSensorClassifier sensors(berry_model, stack);
    out.detection = detect_berry(sensors, scales);
    if (!out.detection.aoi) throw Error("no berry detected" + (berry_id.empty() ? std::string{} : " in " + berry_id));
    out.labels = classify_aoi(wax_model, stack, *out.detection.aoi);
    out.report = quantify_wax(out.labels, std::move(berry_id));
    return out;
}

void write_label_map(const LabelMap& map, const std::filesystem::path& path) {
    write_indexed_png({map.width, map.height, map.labels}, kLabelPalette, path);
}

LabelMap read_label_map(const std::filesystem::path& path) {
    auto img = read_indexed_png(path);
    LabelMap map(img.width, img.height);
    for (auto v : img.indices)
        if (v > label_code::outside) throw Error("label map " + path.string() + " has code " + std::to_string(v));
    map.labels = std::move(img.indices);
    return map;
}

}  // namespace waxsep
