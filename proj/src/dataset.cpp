#include "waxsep/dataset.hpp"

#include "waxsep/lightsep.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>

namespace waxsep {

void PixelDataset::recount() {
    const int classes = task == LabelTask::detection ? detection_class::count : segmentation_class::count;
    class_counts.assign(static_cast<std::size_t>(classes), 0);
    for (int label : samples.labels) {
        if (label < 0 || label >= classes) throw Error("sample label out of range");
        ++class_counts[static_cast<std::size_t>(label)];
    }
}

StackProvider disk_stack_provider(const DatasetManifest& manifest) {
    return [&manifest](const ManifestEntry& entry, InputMode mode) {
        const auto capture = load_capture(manifest, entry);
        const auto separated = separate_capture(capture, SeparationMode::both, SeparationResult::Formulation::reference);
        return assemble_channel_stack(capture, separated, mode);
    };
}

namespace {

struct Candidate {
    std::uint32_t sidecar;
    std::uint16_t x, y;
    std::int8_t label;
};

}  // namespace

PixelDataset extract_training_pixels(const DatasetManifest& manifest, const std::vector<LabelSidecar>& sidecars,
                                     InputMode mode, LabelTask task, std::size_t cap, std::uint64_t seed,
                                     const StackProvider& stacks) {
    const int classes = task == LabelTask::detection ? detection_class::count : segmentation_class::count;

    // Phase 1: enumerate labeled pixels from the rectangles alone.
    std::vector<std::vector<Candidate>> per_class(static_cast<std::size_t>(classes));
    for (std::size_t s = 0; s < sidecars.size(); ++s) {
        const auto& sc = sidecars[s];
        if (!manifest.find(sc.capture_id)) throw Error("labels reference unknown capture '" + sc.capture_id + "'");
        for (const auto& r : sc.rectangles) {
            if (r.task != task) continue;
            const auto id = class_id(task, r.cls);
            if (!id)
                throw Error("class '" + r.cls + "' does not belong to task " + std::string(to_string(task)) + " in " +
                            sc.capture_id);
            if (r.width < 1 || r.height < 1 || r.x < 0 || r.y < 0 || r.x + r.width > 65535 || r.y + r.height > 65535)
                throw Error("invalid rectangle in labels of " + sc.capture_id);
            for (int y = r.y; y < r.y + r.height; ++y)
                for (int x = r.x; x < r.x + r.width; ++x)
                    per_class[static_cast<std::size_t>(*id)].push_back(
                        {static_cast<std::uint32_t>(s), static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y),
                         static_cast<std::int8_t>(*id)});
        }
    }
    std::size_t total = 0;
    for (const auto& c : per_class) total += c.size();
    if (total == 0) throw Error("no " + std::string(to_string(task)) + " labels to extract");

    std::mt19937_64 rng(seed);
    std::vector<Candidate> chosen;
    for (auto& pool : per_class) {
        if (cap > 0 && pool.size() > cap) {
            std::vector<Candidate> kept;
            kept.reserve(cap);
            std::sample(pool.begin(), pool.end(), std::back_inserter(kept), cap, rng);
            pool = std::move(kept);
        }
        chosen.insert(chosen.end(), pool.begin(), pool.end());
    }
    std::stable_sort(chosen.begin(), chosen.end(),
                     [](const Candidate& a, const Candidate& b) { return a.sidecar < b.sidecar; });

    // Phase 2: materialize crops one capture at a time.
    PixelDataset out;
    out.mode = mode;
    out.task = task;
    out.samples.channels = channel_count(mode);
    out.samples.has_coords = task == LabelTask::detection;
    out.samples.crops.reserve(chosen.size() * out.samples.crop_values());
    std::vector<float> crop(out.samples.crop_values());
    std::size_t i = 0;
    while (i < chosen.size()) {
        const auto& sc = sidecars[chosen[i].sidecar];
        const auto stack = stacks(*manifest.find(sc.capture_id), mode);
        const float w = static_cast<float>(stack.width()), h = static_cast<float>(stack.height());
        for (; i < chosen.size() && &sidecars[chosen[i].sidecar] == &sc; ++i) {
            const auto& c = chosen[i];
            if (c.x >= stack.width() || c.y >= stack.height())
                throw Error("rectangle extends past image bounds in labels of " + sc.capture_id);
            stack.crop3x3(c.x, c.y, crop);
            out.samples.append(crop, c.x / w, c.y / h, c.label);
            out.capture_ids.push_back(sc.capture_id);
        }
    }
    out.recount();
    return out;
}

PixelDataset extract_training_pixels(const DatasetManifest& manifest, const std::vector<LabelSidecar>& sidecars,
                                     InputMode mode, LabelTask task, std::size_t cap, std::uint64_t seed) {
    return extract_training_pixels(manifest, sidecars, mode, task, cap, seed, disk_stack_provider(manifest));
}

std::vector<LabelSidecar> load_manifest_sidecars(const DatasetManifest& manifest) {
    std::vector<LabelSidecar> out;
    for (const auto& e : manifest.entries) {
        if (!e.labels) continue;
        auto sc = load_sidecar(manifest.resolve(*e.labels));
        if (sc.capture_id != e.id)
            throw Error("label sidecar of '" + e.id + "' names capture '" + sc.capture_id + "'");
        out.push_back(std::move(sc));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Binary container: magic, header, crops, coords, labels, capture ids.
// ---------------------------------------------------------------------------

namespace {
constexpr char kMagic[8] = {'W', 'X', 'P', 'I', 'X', 'E', 'L', '1'};

template <typename T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw Error("truncated pixel dataset");
    return v;
}
}  // namespace

void save_pixel_dataset(const PixelDataset& data, const std::filesystem::path& path) {
    data.samples.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("unwritable path: " + path.string());
    out.write(kMagic, sizeof kMagic);
    put<std::int32_t>(out, static_cast<std::int32_t>(data.mode));
    put<std::int32_t>(out, static_cast<std::int32_t>(data.task));
    put<std::int32_t>(out, data.samples.channels);
    put<std::int32_t>(out, data.samples.has_coords ? 1 : 0);
    put<std::uint64_t>(out, data.samples.size());
    out.write(reinterpret_cast<const char*>(data.samples.crops.data()),
              static_cast<std::streamsize>(data.samples.crops.size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(data.samples.coords.data()),
              static_cast<std::streamsize>(data.samples.coords.size() * sizeof(float)));
    for (int label : data.samples.labels) put<std::int32_t>(out, label);
    for (const auto& id : data.capture_ids) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
        out.write(id.data(), static_cast<std::streamsize>(id.size()));
    }
    if (!out) throw Error("failed writing " + path.string());
}

PixelDataset load_pixel_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("missing file: " + path.string());
    char magic[sizeof kMagic];
    in.read(magic, sizeof magic);
    if (!in || !std::equal(magic, magic + sizeof magic, kMagic)) throw Error("not a pixel dataset: " + path.string());
    PixelDataset d;
    const auto mode = get<std::int32_t>(in);
    const auto task = get<std::int32_t>(in);
    if (mode < 0 || mode > 3 || task < 0 || task > 1) throw Error("corrupt pixel dataset header: " + path.string());
    d.mode = static_cast<InputMode>(mode);
    d.task = static_cast<LabelTask>(task);
    d.samples.channels = get<std::int32_t>(in);
    d.samples.has_coords = get<std::int32_t>(in) != 0;
    const auto n = get<std::uint64_t>(in);
    if (d.samples.channels != channel_count(d.mode)) throw Error("corrupt pixel dataset header: " + path.string());
    d.samples.crops.resize(n * d.samples.crop_values());
    in.read(reinterpret_cast<char*>(d.samples.crops.data()),
            static_cast<std::streamsize>(d.samples.crops.size() * sizeof(float)));
    if (d.samples.has_coords) {
        d.samples.coords.resize(2 * n);
        in.read(reinterpret_cast<char*>(d.samples.coords.data()),
                static_cast<std::streamsize>(d.samples.coords.size() * sizeof(float)));
    }
    if (!in) throw Error("truncated pixel dataset: " + path.string());
    d.samples.labels.resize(n);
    for (auto& l : d.samples.labels) l = get<std::int32_t>(in);
    d.capture_ids.resize(n);
    for (auto& id : d.capture_ids) {
        id.resize(get<std::uint32_t>(in));
        in.read(id.data(), static_cast<std::streamsize>(id.size()));
    }
    if (!in) throw Error("truncated pixel dataset: " + path.string());
    d.recount();
    return d;
}

}  // namespace waxsep
