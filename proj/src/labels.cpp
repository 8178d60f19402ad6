#include "waxsep/labels.hpp"

#include <json.hpp>

#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

namespace waxsep {

using json = nlohmann::json;

std::string_view to_string(LabelTask task) {
    return task == LabelTask::detection ? "detection" : "segmentation";
}

LabelTask parse_label_task(std::string_view text) {
    if (text == "detection") return LabelTask::detection;
    if (text == "segmentation") return LabelTask::segmentation;
    throw Error("unknown task '" + std::string(text) + "' (expected detection or segmentation)");
}

std::optional<int> class_id(LabelTask task, std::string_view name) {
    if (task == LabelTask::detection) {
        if (name == "background") return detection_class::background;
        if (name == "berry") return detection_class::berry;
    } else {
        if (name == "wax") return segmentation_class::wax;
        if (name == "nowax") return segmentation_class::nowax;
        if (name == "other") return segmentation_class::other;
    }
    return std::nullopt;
}

std::string_view class_name(LabelTask task, int id) {
    if (task == LabelTask::detection) {
        switch (id) {
            case detection_class::background: return "background";
            case detection_class::berry: return "berry";
        }
    } else {
        switch (id) {
            case segmentation_class::wax: return "wax";
            case segmentation_class::nowax: return "nowax";
            case segmentation_class::other: return "other";
        }
    }
    throw Error("class id " + std::to_string(id) + " out of range for task " + std::string(to_string(task)));
}

std::vector<FieldError> validate_sidecar(const LabelSidecar& sidecar, int image_width, int image_height) {
    std::vector<FieldError> errors;
    if (sidecar.capture_id.empty()) errors.push_back({"capture_id", "must not be empty"});
    if (sidecar.rectangles.empty()) errors.push_back({"rectangles", "must contain at least one rectangle"});
    for (std::size_t i = 0; i < sidecar.rectangles.size(); ++i) {
        const auto& r = sidecar.rectangles[i];
        const std::string prefix = "rectangles[" + std::to_string(i) + "].";
        if (r.width < 1) errors.push_back({prefix + "width", "must be >= 1"});
        if (r.height < 1) errors.push_back({prefix + "height", "must be >= 1"});
        if (r.x < 0) errors.push_back({prefix + "x", "must be >= 0"});
        if (r.y < 0) errors.push_back({prefix + "y", "must be >= 0"});
        if (r.x >= 0 && r.width >= 1 && r.x + r.width > image_width)
            errors.push_back({prefix + "width", "rectangle extends past image width " + std::to_string(image_width)});
        if (r.y >= 0 && r.height >= 1 && r.y + r.height > image_height)
            errors.push_back(
                {prefix + "height", "rectangle extends past image height " + std::to_string(image_height)});
        if (!class_id(r.task, r.cls))
            errors.push_back({prefix + "class", "'" + r.cls + "' is not a " + std::string(to_string(r.task)) +
                                                    " class"});
    }
    return errors;
}

namespace {

json to_json(const LabelSidecar& s) {
    json doc;
    doc["capture_id"] = s.capture_id;
    doc["annotator"] = s.annotator;
    doc["timestamp"] = s.timestamp;
    doc["version"] = s.version;
    doc["rectangles"] = json::array();
    for (const auto& r : s.rectangles)
        doc["rectangles"].push_back({{"x", r.x},
                                     {"y", r.y},
                                     {"width", r.width},
                                     {"height", r.height},
                                     {"class", r.cls},
                                     {"task", std::string(to_string(r.task))}});
    return doc;
}

}  // namespace

std::string sidecar_to_json(const LabelSidecar& sidecar) { return to_json(sidecar).dump(2); }

LabelSidecar sidecar_from_json(std::string_view text) {
    try {
        const json doc = json::parse(text);
        LabelSidecar s;
        s.capture_id = doc.at("capture_id").get<std::string>();
        s.annotator = doc.value("annotator", std::string{});
        s.timestamp = doc.value("timestamp", std::string{});
        s.version = doc.value("version", std::int64_t{0});
        for (const auto& r : doc.at("rectangles")) {
            RectangleLabel rect;
            rect.x = r.at("x").get<int>();
            rect.y = r.at("y").get<int>();
            rect.width = r.at("width").get<int>();
            rect.height = r.at("height").get<int>();
            rect.cls = r.at("class").get<std::string>();
            rect.task = parse_label_task(r.at("task").get<std::string>());
            s.rectangles.push_back(std::move(rect));
        }
        return s;
    } catch (const json::exception& e) {
        throw Error(std::string("malformed label sidecar: ") + e.what());
    }
}

LabelSidecar load_sidecar(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("missing file: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return sidecar_from_json(buf.str());
}

void save_sidecar_atomic(const LabelSidecar& sidecar, const std::filesystem::path& path) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw Error("unwritable path: " + tmp.string());
        out << sidecar_to_json(sidecar) << '\n';
        out.flush();
        if (!out) throw Error("failed writing " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error("failed to replace " + path.string() + ": " + ec.message());
}

std::vector<RectangleLabel> rectangles_from_class_grid(std::span<const int> classes, int width, int height,
                                                       Region region, LabelTask task, int skip) {
    if (classes.size() != static_cast<std::size_t>(width) * height) throw Error("class grid size mismatch");
    const int x0 = std::max(region.x, 0);
    const int y0 = std::max(region.y, 0);
    const int x1 = std::min(region.x + region.width, width);
    const int y1 = std::min(region.y + region.height, height);

    std::vector<RectangleLabel> out;
    // (start, end, class) of a run in the previous row -> index into out
    std::map<std::tuple<int, int, int>, std::size_t> open;
    for (int y = y0; y < y1; ++y) {
        std::map<std::tuple<int, int, int>, std::size_t> next;
        int x = x0;
        while (x < x1) {
            const int cls = classes[static_cast<std::size_t>(y) * width + x];
            int end = x + 1;
            while (end < x1 && classes[static_cast<std::size_t>(y) * width + end] == cls) ++end;
            if (cls != skip) {
                const auto key = std::make_tuple(x, end, cls);
                if (auto it = open.find(key); it != open.end()) {
                    out[it->second].height += 1;
                    next.emplace(key, it->second);
                } else {
                    out.push_back({x, y, end - x, 1, std::string(class_name(task, cls)), task});
                    next.emplace(key, out.size() - 1);
                }
            }
            x = end;
        }
        open = std::move(next);
    }
    return out;
}

}  // namespace waxsep
