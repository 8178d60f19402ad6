#include "waxsep/capture.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

namespace waxsep {

using json = nlohmann::json;

std::string_view to_string(InputMode mode) {
    switch (mode) {
        case InputMode::I: return "I";
        case InputMode::II: return "II";
        case InputMode::III: return "III";
        case InputMode::IV: return "IV";
    }
    return "?";
}

InputMode parse_input_mode(std::string_view text) {
    if (text == "I" || text == "1") return InputMode::I;
    if (text == "II" || text == "2") return InputMode::II;
    if (text == "III" || text == "3") return InputMode::III;
    if (text == "IV" || text == "4") return InputMode::IV;
    throw Error("unknown input mode '" + std::string(text) + "' (expected I, II, III or IV)");
}

int channel_count(InputMode mode) {
    switch (mode) {
        case InputMode::I: return 3;
        case InputMode::II: return 6;
        case InputMode::III: return 6;
        case InputMode::IV: return 15;
    }
    return 0;
}

std::string_view to_string(SeparationResult::Formulation f) {
    return f == SeparationResult::Formulation::as_written ? "as-written" : "reference";
}

SeparationResult::Formulation parse_formulation(std::string_view text) {
    if (text == "as-written" || text == "as_written") return SeparationResult::Formulation::as_written;
    if (text == "reference") return SeparationResult::Formulation::reference;
    throw Error("unknown formulation '" + std::string(text) + "'");
}

void CaptureSet::validate() const {
    if (standard.empty()) throw Error("capture " + id + ": missing standard image");
    if (pattern_stack.size() != kPatternCount)
        throw Error("capture " + id + ": pattern stack must hold 25 images, got " +
                    std::to_string(pattern_stack.size()));
    for (const auto& img : pattern_stack) require_same_shape(standard, img, "capture " + id + " pattern image");
    require_same_shape(standard, black_capture, "capture " + id + " black capture");
    require_same_shape(standard, parallel, "capture " + id + " parallel image");
    require_same_shape(standard, perpendicular, "capture " + id + " perpendicular image");
}

std::vector<std::string> plane_names(InputMode mode) {
    switch (mode) {
        case InputMode::I: return {"standard"};
        case InputMode::II: return {"diffuse", "specular"};
        case InputMode::III: return {"direct", "global"};
        case InputMode::IV: return {"standard", "specular", "diffuse", "direct", "global"};
    }
    return {};
}

std::vector<int> channels_within_mode_iv(InputMode mode) {
    const auto all = plane_names(InputMode::IV);
    std::vector<int> out;
    for (const auto& name : plane_names(mode)) {
        const auto it = std::find(all.begin(), all.end(), name);
        const int base = static_cast<int>(it - all.begin()) * 3;
        for (int c = 0; c < 3; ++c) out.push_back(base + c);
    }
    return out;
}

ChannelStack::ChannelStack(InputMode mode, std::vector<Plane> planes) : mode_(mode), planes_(std::move(planes)) {
    if (planes_.empty()) throw Error("channel stack needs at least one plane");
    std::set<std::string> names;
    width_ = planes_.front().image.width();
    height_ = planes_.front().image.height();
    for (const auto& p : planes_) {
        if (!names.insert(p.name).second) throw Error("duplicate plane name '" + p.name + "'");
        if (p.image.width() != width_ || p.image.height() != height_)
            throw Error("dimension mismatch in channel stack plane '" + p.name + "'");
        channel_count_ += p.image.channels();
    }
    if (channel_count_ != waxsep::channel_count(mode))
        throw Error("mode " + std::string(to_string(mode)) + " expects " +
                    std::to_string(waxsep::channel_count(mode)) + " channels, got " +
                    std::to_string(channel_count_));

    packed_.resize(static_cast<std::size_t>(width_) * height_ * channel_count_);
    int base = 0;
    for (const auto& p : planes_) {
        const int pc = p.image.channels();
        auto src = p.image.data();
        for (std::size_t i = 0; i < p.image.pixel_count(); ++i)
            for (int c = 0; c < pc; ++c)
                packed_[i * channel_count_ + base + c] = static_cast<float>(src[i * pc + c]);
        base += pc;
    }
}

const RasterImage& ChannelStack::plane(std::string_view name) const {
    for (const auto& p : planes_)
        if (p.name == name) return p.image;
    throw Error("channel stack has no plane '" + std::string(name) + "'");
}

void ChannelStack::crop3x3(int x, int y, std::span<float> out) const {
    const int cc = channel_count_;
    std::size_t k = 0;
    for (int dy = -1; dy <= 1; ++dy) {
        const int yy = std::clamp(y + dy, 0, height_ - 1);
        for (int dx = -1; dx <= 1; ++dx) {
            const int xx = std::clamp(x + dx, 0, width_ - 1);
            const float* px = &packed_[(static_cast<std::size_t>(yy) * width_ + xx) * cc];
            for (int c = 0; c < cc; ++c) out[k++] = px[c];
        }
    }
}

ChannelStack assemble_channel_stack(const CaptureSet& capture, const SeparationResult& separated,
                                    InputMode mode) {
    std::vector<ChannelStack::Plane> planes;
    for (const auto& name : plane_names(mode)) {
        const std::optional<RasterImage>* source = nullptr;
        if (name == "standard") {
            planes.push_back({name, capture.standard});
            continue;
        }
        if (name == "direct") source = &separated.direct;
        if (name == "global") source = &separated.global;
        if (name == "diffuse") source = &separated.diffuse;
        if (name == "specular") source = &separated.specular;
        if (!source || !source->has_value())
            throw Error("mode " + std::string(to_string(mode)) + " requires the '" + name +
                        "' channel, which was not separated");
        require_same_shape(capture.standard, **source, "separated channel '" + name + "'");
        planes.push_back({name, **source});
    }
    return ChannelStack(mode, std::move(planes));
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

namespace capture_files {
std::string pattern(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "pattern_%02d.png", index);
    return buf;
}
}  // namespace capture_files

const ManifestEntry* DatasetManifest::find(std::string_view id) const {
    for (const auto& e : entries)
        if (e.id == id) return &e;
    return nullptr;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("missing file: " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw Error("malformed manifest " + path.string() + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("version") || !doc.contains("entries"))
        throw Error("manifest " + path.string() + " lacks version/entries");
    if (doc["version"].get<int>() != DatasetManifest::kVersion)
        throw Error("unsupported manifest version in " + path.string());

    DatasetManifest m;
    m.root = path.parent_path();
    m.seed = doc.value("seed", std::uint64_t{0});
    std::set<std::string> ids;
    for (const auto& e : doc["entries"]) {
        ManifestEntry entry;
        entry.id = e.at("id").get<std::string>();
        entry.directory = e.at("dir").get<std::string>();
        entry.cultivar = e.value("cultivar", std::string{});
        if (e.contains("impedance") && !e["impedance"].is_null()) entry.impedance = e["impedance"].get<double>();
        if (e.contains("labels") && !e["labels"].is_null()) entry.labels = e["labels"].get<std::string>();
        if (e.contains("truth") && !e["truth"].is_null()) entry.truth = e["truth"].get<std::string>();

        if (!ids.insert(entry.id).second) throw Error("duplicate capture id '" + entry.id + "' in manifest");
        if (!std::filesystem::is_directory(m.resolve(entry.directory)))
            throw Error("dangling path in manifest: capture directory " + m.resolve(entry.directory).string());
        if (entry.labels && !std::filesystem::exists(m.resolve(*entry.labels)))
            throw Error("dangling path in manifest: labels " + m.resolve(*entry.labels).string());
        if (entry.truth && !std::filesystem::exists(m.resolve(*entry.truth)))
            throw Error("dangling path in manifest: truth " + m.resolve(*entry.truth).string());
        m.entries.push_back(std::move(entry));
    }
    return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    json doc;
    doc["version"] = DatasetManifest::kVersion;
    doc["seed"] = manifest.seed;
    doc["entries"] = json::array();
    for (const auto& e : manifest.entries) {
        json j;
        j["id"] = e.id;
        j["dir"] = e.directory.generic_string();
        j["cultivar"] = e.cultivar;
        j["impedance"] = e.impedance ? json(*e.impedance) : json(nullptr);
        j["labels"] = e.labels ? json(e.labels->generic_string()) : json(nullptr);
        j["truth"] = e.truth ? json(e.truth->generic_string()) : json(nullptr);
        doc["entries"].push_back(std::move(j));
    }
    std::ofstream out(path);
    if (!out) throw Error("unwritable path: " + path.string());
    out << doc.dump(2) << '\n';
}

CaptureSet load_capture(const DatasetManifest& manifest, const ManifestEntry& entry) {
    const auto dir = manifest.resolve(entry.directory);
    CaptureSet cap;
    cap.id = entry.id;
    cap.cultivar = entry.cultivar;
    cap.standard = read_image(dir / capture_files::kStandard);
    cap.black_capture = read_image(dir / capture_files::kBlack);
    cap.parallel = read_image(dir / capture_files::kParallel);
    cap.perpendicular = read_image(dir / capture_files::kPerpendicular);
    cap.pattern_stack.reserve(kPatternCount);
    for (int i = 0; i < kPatternCount; ++i) cap.pattern_stack.push_back(read_image(dir / capture_files::pattern(i)));
    if (entry.impedance) cap.impedance = ImpedanceRecord{entry.id, *entry.impedance};
    cap.validate();
    return cap;
}

void save_capture(const CaptureSet& capture, const std::filesystem::path& directory, int bit_depth) {
    capture.validate();
    std::filesystem::create_directories(directory);
    write_image(capture.standard, directory / capture_files::kStandard, bit_depth);
    write_image(capture.black_capture, directory / capture_files::kBlack, bit_depth);
    write_image(capture.parallel, directory / capture_files::kParallel, bit_depth);
    write_image(capture.perpendicular, directory / capture_files::kPerpendicular, bit_depth);
    for (int i = 0; i < kPatternCount; ++i)
        write_image(capture.pattern_stack[static_cast<std::size_t>(i)], directory / capture_files::pattern(i),
                    bit_depth);
}

}  // namespace waxsep
